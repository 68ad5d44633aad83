#pragma once

#include <string>
#include <vector>

namespace cspike {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0;
  std::string worst;
};

// Runs central finite-difference checks (64-bit mode, step 1e-3) for the
// named target, or for everything with "all". Valid targets: elementwise,
// linear, conv2d, conv3d, reduce_mean, transpose, concat, pool, losses,
// neuron, network.
std::vector<GradCheckCase> run_gradcheck_suite(const std::string& target);

}  // namespace cspike
