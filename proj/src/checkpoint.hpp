#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cspike/network.hpp"
#include "cspike/tensor.hpp"

namespace cspike {

// "CSPK" checkpoint format, little-endian throughout:
//   magic "CSPK" | version u32 | tensor count u32 |
//   per tensor: name length u32, UTF-8 name, rank u32, dims u64 each,
//               raw float32 data.
// Round trips are bit-exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path,
                     const std::vector<ParamT<float>>& params);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::string& path);

// Installs checkpoint tensors into the network; names and shapes must match
// the network's parameter registry exactly.
void apply_checkpoint(Network& net, const std::string& path);

}  // namespace cspike
