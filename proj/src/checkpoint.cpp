#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cspike {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail("checkpoint: truncated file");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) fail("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<ParamT<float>>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("checkpoint: cannot open " + path + " for writing");
  os.write("CSPK", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape) put_u64(os, static_cast<std::uint64_t>(d));
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(p.value.data().data()),
             static_cast<std::streamsize>(p.value.data().size() * 4));
  }
  if (!os) fail("checkpoint: write to " + path + " failed");
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CSPK", 4) != 0)
    fail("checkpoint: " + path + " does not start with CSPK magic");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    fail("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(is);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(is);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<std::int64_t>(get_u64(is)));
    Tensor t = Tensor::zeros(shape);
    is.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.data().size() * 4));
    if (!is) fail("checkpoint: truncated tensor data in " + path);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void apply_checkpoint(Network& net, const std::string& path) {
  auto tensors = load_checkpoint(path);
  if (tensors.size() != net.params.size())
    fail("checkpoint: " + path + " holds " + std::to_string(tensors.size()) +
         " tensors but the network has " + std::to_string(net.params.size()) +
         " parameters");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = net.params[i];
    if (tensors[i].first != p.name)
      fail("checkpoint: tensor '" + tensors[i].first +
           "' does not match parameter '" + p.name + "'");
    if (tensors[i].second.shape != p.value.shape)
      fail("checkpoint: shape mismatch for " + p.name + ": " +
           shape_str(tensors[i].second.shape) + " vs " +
           shape_str(p.value.shape));
    p.value = std::move(tensors[i].second);
  }
}

}  // namespace cspike
