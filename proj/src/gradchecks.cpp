#include "gradchecks.hpp"

#include "cspike/conv.hpp"
#include "cspike/encoding.hpp"
#include "cspike/network.hpp"
#include "cspike/neuron.hpp"
#include "cspike/random.hpp"
#include "cspike/tensor.hpp"
#include "cspike/training.hpp"

namespace cspike {

namespace {

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

DTensor random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  DTensor t = DTensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Scalarizes an arbitrary output with fixed pseudo-random weights so the
// reduction itself adds no curvature.
DTensor pin_loss(DTape& tp, const DTensor& out, std::uint64_t salt) {
  DTensor w = DTensor::zeros(out.shape);
  Rng rng(salt, 0x10553);
  for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return reduce_sum_all(tp, mul(tp, out, w));
}

GradCheckCase fold_case(const std::string& name,
                        const std::vector<GradCheckReport>& reports) {
  GradCheckCase c;
  c.name = name;
  for (const auto& r : reports)
    if (r.max_rel_err >= c.max_rel_err) {
      c.max_rel_err = r.max_rel_err;
      c.worst = r.worst;
    }
  return c;
}

GradCheckCase check_elementwise() {
  std::vector<GradCheckReport> reports;
  Rng rng(21, 1);
  for (int rep = 0; rep < 3; ++rep) {
    Shape sh{2 + rep, 3};
    for (EwKind kind : {EwKind::Add, EwKind::Sub, EwKind::Mul}) {
      auto fn = [kind, rep](DTape& tp, std::vector<DTensor>& leaves) {
        return pin_loss(tp, elementwise(tp, leaves[0], leaves[1], kind),
                        static_cast<std::uint64_t>(rep));
      };
      reports.push_back(gradcheck_fn(
          fn, {random_tensor(sh, rng), random_tensor(sh, rng)}, {"a", "b"}));
    }
  }
  return fold_case("elementwise", reports);
}

GradCheckCase check_linear() {
  std::vector<GradCheckReport> reports;
  Rng rng(22, 1);
  for (int rep = 0; rep < 3; ++rep) {
    const std::int64_t n = 2 + rep, f = 3 + rep, g = 2;
    auto fn = [rep](DTape& tp, std::vector<DTensor>& leaves) {
      return pin_loss(tp, linear(tp, leaves[0], leaves[1], leaves[2]),
                      static_cast<std::uint64_t>(rep));
    };
    reports.push_back(gradcheck_fn(fn,
                                   {random_tensor({n, f}, rng),
                                    random_tensor({g, f}, rng),
                                    random_tensor({g}, rng)},
                                   {"x", "w", "b"}));
  }
  return fold_case("linear", reports);
}

GradCheckCase check_conv2d() {
  std::vector<GradCheckReport> reports;
  Rng rng(23, 1);
  const struct {
    std::int64_t n, c, h, w, co, k, stride, pad;
  } cases[] = {{2, 2, 5, 5, 3, 3, 1, 1}, {1, 3, 6, 6, 2, 2, 2, 0},
               {2, 1, 4, 4, 2, 3, 1, 0}};
  for (int rep = 0; rep < 3; ++rep) {
    const auto& cs = cases[rep];
    auto fn = [cs, rep](DTape& tp, std::vector<DTensor>& leaves) {
      return pin_loss(tp,
                      conv2d(tp, leaves[0], leaves[1], leaves[2], cs.stride,
                             cs.pad),
                      static_cast<std::uint64_t>(rep));
    };
    reports.push_back(
        gradcheck_fn(fn,
                     {random_tensor({cs.n, cs.c, cs.h, cs.w}, rng),
                      random_tensor({cs.co, cs.c, cs.k, cs.k}, rng),
                      random_tensor({cs.co}, rng)},
                     {"x", "k", "b"}));
  }
  return fold_case("conv2d", reports);
}

GradCheckCase check_conv3d() {
  std::vector<GradCheckReport> reports;
  Rng rng(24, 1);
  const struct {
    std::int64_t n, c, t, h, w, co, kt, k, stride, pt;
  } cases[] = {{1, 2, 4, 4, 4, 2, 3, 3, 1, 1},
               {2, 1, 3, 5, 5, 2, 1, 3, 1, 0},
               {1, 2, 5, 4, 4, 1, 3, 2, 2, 1}};
  for (int rep = 0; rep < 3; ++rep) {
    const auto& cs = cases[rep];
    auto fn = [cs, rep](DTape& tp, std::vector<DTensor>& leaves) {
      return pin_loss(tp,
                      conv3d(tp, leaves[0], leaves[1], leaves[2], 1,
                             cs.stride, cs.stride, cs.pt, 1, 1),
                      static_cast<std::uint64_t>(rep));
    };
    reports.push_back(
        gradcheck_fn(fn,
                     {random_tensor({cs.n, cs.c, cs.t, cs.h, cs.w}, rng),
                      random_tensor({cs.co, cs.c, cs.kt, cs.k, cs.k}, rng),
                      random_tensor({cs.co}, rng)},
                     {"x", "k", "b"}));
  }
  return fold_case("conv3d", reports);
}

GradCheckCase check_reduce_mean() {
  std::vector<GradCheckReport> reports;
  Rng rng(25, 1);
  for (int axis = 0; axis < 3; ++axis) {
    auto fn = [axis](DTape& tp, std::vector<DTensor>& leaves) {
      return pin_loss(tp, reduce_mean(tp, leaves[0], axis),
                      static_cast<std::uint64_t>(axis));
    };
    reports.push_back(
        gradcheck_fn(fn, {random_tensor({3, 4, 2}, rng)}, {"x"}));
  }
  return fold_case("reduce_mean", reports);
}

GradCheckCase check_transpose() {
  std::vector<GradCheckReport> reports;
  Rng rng(26, 1);
  for (int rep = 0; rep < 3; ++rep) {
    auto fn = [rep](DTape& tp, std::vector<DTensor>& leaves) {
      return pin_loss(tp, transpose_time_channel(tp, leaves[0]),
                      static_cast<std::uint64_t>(rep));
    };
    reports.push_back(gradcheck_fn(
        fn, {random_tensor({2, 2 + rep, 3, 2, 2}, rng)}, {"x"}));
  }
  return fold_case("transpose", reports);
}

GradCheckCase check_concat() {
  std::vector<GradCheckReport> reports;
  Rng rng(27, 1);
  for (int rep = 0; rep < 3; ++rep) {
    auto fn = [rep](DTape& tp, std::vector<DTensor>& leaves) {
      DTensor cat = concat_time(tp, leaves[0], leaves[1]);
      DTensor sl = slice_time(tp, cat, rep);
      return pin_loss(tp, concat_time(tp, cat, repeat_time(tp, sl, 2)),
                      static_cast<std::uint64_t>(rep));
    };
    reports.push_back(gradcheck_fn(fn,
                                   {random_tensor({2, 2, 3}, rng),
                                    random_tensor({2, 1 + rep, 3}, rng)},
                                   {"a", "b"}));
  }
  return fold_case("concat", reports);
}

GradCheckCase check_pool() {
  std::vector<GradCheckReport> reports;
  Rng rng(28, 1);
  for (int rep = 0; rep < 3; ++rep) {
    const std::int64_t grid = 2 + rep % 2;
    auto fn = [grid, rep](DTape& tp, std::vector<DTensor>& leaves) {
      return pin_loss(tp, adaptive_avg_pool_hw(tp, leaves[0], grid),
                      static_cast<std::uint64_t>(rep));
    };
    reports.push_back(gradcheck_fn(
        fn, {random_tensor({1, 2, 2, 5 + rep, 6}, rng)}, {"x"}));
  }
  return fold_case("pool", reports);
}

GradCheckCase check_losses() {
  std::vector<GradCheckReport> reports;
  Rng rng(29, 1);
  for (int rep = 0; rep < 3; ++rep) {
    auto fn = [](DTape& tp, std::vector<DTensor>& leaves) {
      return loss_classification(tp, leaves[0], {0, 2, 1});
    };
    reports.push_back(
        gradcheck_fn(fn, {random_tensor({3, 3}, rng)}, {"logits"}));
  }
  DetectionTargets targets;
  targets.grid = 2;
  targets.num_classes = 2;
  targets.per_image.resize(2);
  targets.per_image[0].push_back({0, 1, 0.8, 0.3, 0.3, 0.4, 1});
  targets.per_image[1].push_back({1, 0, 0.2, 0.6, 0.2, 0.2, 0});
  auto fn = [&targets](DTape& tp, std::vector<DTensor>& leaves) {
    return loss_detection(tp, leaves[0], targets);
  };
  reports.push_back(
      gradcheck_fn(fn, {random_tensor({2, 7, 2, 2}, rng)}, {"head"}));
  return fold_case("losses", reports);
}

// Surrogate-smoothed parametric neuron over T = 4 including the recurrence
// edge; checks l, i, V_re and the input sequence.
GradCheckCase check_neuron() {
  std::vector<GradCheckReport> reports;
  Rng rng(30, 1);
  for (int rep = 0; rep < 3; ++rep) {
    const std::int64_t t_len = 4;
    auto fn = [t_len, rep](DTape& tp, std::vector<DTensor>& leaves) {
      NeuronParamsT<double> p = NeuronParamsT<double>::parametric(t_len);
      p.l = leaves[1];
      p.i = leaves[2];
      p.v_re = leaves[3];
      SurrogateConfigT<double> sg;
      sg.kind = SurrogateKind::Arctan;
      sg.alpha = 2.0;
      sg.smooth_forward = true;
      DTensor s = neuron_forward(tp, leaves[0], p,
                                 rep == 0 ? InitMode::Zero
                                          : InitMode::Recurrence,
                                 sg);
      return pin_loss(tp, s, static_cast<std::uint64_t>(rep));
    };
    DTensor x = random_tensor({2, t_len, 3}, rng, 0.0, 1.4);
    DTensor l = random_tensor({t_len}, rng, 0.3, 0.9);
    DTensor i = random_tensor({t_len}, rng, 0.3, 0.9);
    DTensor vre = DTensor::from({1}, {0.9 + 0.1 * rep});
    reports.push_back(
        gradcheck_fn(fn, {x, l, i, vre}, {"x", "l", "i", "v_re"}));
  }
  return fold_case("neuron", reports);
}

// Full two-block network in 64-bit mode with the smooth spike forward,
// recurrence enabled, classification loss.
GradCheckCase check_network() {
  NetworkSpec spec;
  spec.t_len = 4;
  spec.in_channels = 1;
  spec.in_h = 8;
  spec.in_w = 8;
  spec.conv_mode = ConvMode::Conv3D;
  spec.recurrence = true;
  spec.neuron.kind = NeuronKind::Parametric;
  spec.neuron.surrogate = SurrogateKind::Arctan;
  spec.neuron.alpha = 2.0;
  spec.stem = {4, 3, 1};
  spec.blocks = {{4, 3, 4, 4, 2, false}, {4, 3, 3, 3, 1, true}};
  spec.head = {HeadKind::Classification, 2, 0};
  NetworkT<double> net = Network::build(spec, 5).cast<double>();

  Rng rng(31, 1);
  DTensor batch = DTensor::zeros({2, 4, 1, 8, 8});
  for (auto& v : batch.data()) v = rng.uniform(0.0, 1.0);
  GradCheckReport r = gradcheck_network(net, batch, {0, 1});
  GradCheckCase c;
  c.name = "network";
  c.max_rel_err = r.max_rel_err;
  c.worst = r.worst;
  return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(const std::string& target) {
  std::vector<GradCheckCase> out;
  auto want = [&](const char* name) {
    return target == "all" || target == name;
  };
  if (want("elementwise")) out.push_back(check_elementwise());
  if (want("linear")) out.push_back(check_linear());
  if (want("conv2d")) out.push_back(check_conv2d());
  if (want("conv3d")) out.push_back(check_conv3d());
  if (want("reduce_mean")) out.push_back(check_reduce_mean());
  if (want("transpose")) out.push_back(check_transpose());
  if (want("concat")) out.push_back(check_concat());
  if (want("pool")) out.push_back(check_pool());
  if (want("losses")) out.push_back(check_losses());
  if (want("neuron")) out.push_back(check_neuron());
  if (want("network")) out.push_back(check_network());
  if (out.empty())
    fail("gradcheck: unknown target '" + target +
         "' (try all, elementwise, linear, conv2d, conv3d, reduce_mean, "
         "transpose, concat, pool, losses, neuron, network)");
  return out;
}

}  // namespace cspike
