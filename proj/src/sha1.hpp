#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace cspike {

// Incremental SHA-1, used for the dataset content hash in run manifests.
class Sha1 {
 public:
  Sha1();
  void update(const void* data, std::size_t len);
  void update(const std::string& s) { update(s.data(), s.size()); }
  // Finalizes and returns the 40-char lowercase hex digest.
  std::string hex_digest();

  static std::string of(const void* data, std::size_t len) {
    Sha1 h;
    h.update(data, len);
    return h.hex_digest();
  }

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t h_[5];
  std::uint8_t buffer_[64];
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

}  // namespace cspike
