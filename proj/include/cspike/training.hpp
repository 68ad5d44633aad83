#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cspike/network.hpp"
#include "cspike/tensor.hpp"

namespace cspike {

template <class S>
S stable_sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

// log(1 + exp(x)) without overflow.
template <class S>
S softplus(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay.
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;  // applied only to params flagged `decay`
};

template <class S>
struct AdamWStateT {
  AdamWConfig cfg;
  std::vector<std::vector<S>> m, v;
  std::int64_t step = 0;

  void init(const std::vector<ParamT<S>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.value.data().size(), S(0));
      v.emplace_back(p.value.data().size(), S(0));
    }
    step = 0;
  }
};

using AdamWState = AdamWStateT<float>;

// One optimizer step. Decay multiplies the parameter by (1 - lr*lambda)
// before the adaptive update; V_re-style params are clamped to the floor
// afterwards. Missing gradients count as zero; NaN gradients abort.
template <class S>
void adamw_step(std::vector<ParamT<S>>& params, const TapeT<S>& tape,
                AdamWStateT<S>& st) {
  if (st.m.size() != params.size())
    fail("adamw_step: state not initialised for this parameter set");
  st.step += 1;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    auto& val = p.value.data();
    const auto* g = tape.grad_by_node(p.node);
    auto& m = st.m[pi];
    auto& v = st.v[pi];
    if (p.decay && st.cfg.weight_decay != 0.0) {
      const S keep = static_cast<S>(1.0 - st.cfg.lr * st.cfg.weight_decay);
      for (auto& x : val) x *= keep;
    }
    for (std::size_t k = 0; k < val.size(); ++k) {
      const double gk = g ? static_cast<double>((*g)[k]) : 0.0;
      if (std::isnan(gk))
        throw std::runtime_error("adamw_step: NaN gradient in parameter " +
                                 p.name);
      const double mk = b1 * m[k] + (1.0 - b1) * gk;
      const double vk = b2 * v[k] + (1.0 - b2) * gk * gk;
      m[k] = static_cast<S>(mk);
      v[k] = static_cast<S>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      val[k] = static_cast<S>(val[k] -
                              st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps));
    }
    if (p.clamp_floor)
      for (auto& x : val)
        if (x < v_re_floor<S>()) x = v_re_floor<S>();
  }
}

// ---------------------------------------------------------------------------
// Losses (fused forward/backward nodes).
// ---------------------------------------------------------------------------

// Mean softmax cross-entropy over the batch.
template <class S>
TensorT<S> loss_classification(TapeT<S>& tp, const TensorT<S>& logits,
                               const std::vector<int>& labels) {
  if (logits.rank() != 2)
    fail("loss_classification: expected N x K logits, got " +
         shape_str(logits.shape));
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n)
    fail("loss_classification: " + std::to_string(labels.size()) +
         " labels for " + std::to_string(n) + " rows");
  for (int lb : labels)
    if (lb < 0 || lb >= k)
      fail("loss_classification: label " + std::to_string(lb) +
           " out of range [0, " + std::to_string(k) + ")");
  // Softmax probabilities are shared by forward and backward.
  auto probs = std::make_shared<std::vector<S>>(logits.data());
  S total = S(0);
  for (std::int64_t i = 0; i < n; ++i) {
    S* row = probs->data() + i * k;
    S mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S z = S(0);
    for (std::int64_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::int64_t j = 0; j < k; ++j) row[j] /= z;
    total -= std::log(std::max(row[labels[static_cast<std::size_t>(i)]],
                               std::numeric_limits<S>::min()));
  }
  TensorT<S> out = TensorT<S>::from({1}, {total / static_cast<S>(n)});
  tp.record(out, {logits.node},
            [logits, probs, labels, n, k](const auto& g, TapeT<S>& t) {
              if (logits.node < 0) return;
              auto& gx = t.grad_acc(logits.node, logits.numel());
              const S scale = g[0] / static_cast<S>(n);
              for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < k; ++j) {
                  S d = (*probs)[static_cast<std::size_t>(i * k + j)];
                  if (j == labels[static_cast<std::size_t>(i)]) d -= S(1);
                  gx[static_cast<std::size_t>(i * k + j)] += scale * d;
                }
            });
  return out;
}

// One assigned ground-truth box per grid cell (the cell containing the box
// center); built by build_detection_targets.
struct CellTarget {
  std::int64_t cy = 0, cx = 0;  // grid cell
  double gx = 0, gy = 0;        // box center, normalized
  double gw = 0, gh = 0;        // box size, normalized
  int cls = 0;
};

struct DetectionTargets {
  std::int64_t grid = 0;
  int num_classes = 0;
  std::vector<std::vector<CellTarget>> per_image;
};

// Composite detection loss on raw head maps N x (5+K) x S x S with channel
// order (tx, ty, tw, th, obj, class...). Objectness BCE is averaged over all
// cells; the decoded-box squared error and the class cross-entropy are
// averaged over positive cells and weighted 5.0 / 1.0.
template <class S>
TensorT<S> loss_detection(TapeT<S>& tp, const TensorT<S>& head,
                          const DetectionTargets& targets) {
  if (head.rank() != 4)
    fail("loss_detection: expected N x (5+K) x S x S, got " +
         shape_str(head.shape));
  const std::int64_t n = head.dim(0), ch = head.dim(1), s = head.dim(2);
  if (head.dim(3) != s) fail("loss_detection: non-square grid");
  if (ch != 5 + targets.num_classes || s != targets.grid)
    fail("loss_detection: head shape " + shape_str(head.shape) +
         " does not match targets (grid " + std::to_string(targets.grid) +
         ", classes " + std::to_string(targets.num_classes) + ")");
  if (static_cast<std::int64_t>(targets.per_image.size()) != n)
    fail("loss_detection: target batch size mismatch");
  const int k = targets.num_classes;
  const double w_obj = 1.0, w_box = 5.0, w_cls = 1.0;

  const auto& hv = head.data();
  auto at = [&](std::int64_t in, std::int64_t c, std::int64_t y,
                std::int64_t x) -> S {
    return hv[static_cast<std::size_t>(((in * ch + c) * s + y) * s + x)];
  };

  std::int64_t positives = 0;
  for (const auto& img : targets.per_image)
    positives += static_cast<std::int64_t>(img.size());

  double l_obj = 0, l_box = 0, l_cls = 0;
  std::vector<char> is_pos(static_cast<std::size_t>(n * s * s), 0);
  for (std::int64_t in = 0; in < n; ++in)
    for (const auto& tgt : targets.per_image[static_cast<std::size_t>(in)])
      is_pos[static_cast<std::size_t>((in * s + tgt.cy) * s + tgt.cx)] = 1;

  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t y = 0; y < s; ++y)
      for (std::int64_t x = 0; x < s; ++x) {
        const double o = at(in, 4, y, x);
        const bool pos = is_pos[static_cast<std::size_t>((in * s + y) * s + x)];
        // BCE(o, y) = softplus(o) - y*o.
        l_obj += softplus(o) - (pos ? o : 0.0);
      }
  l_obj /= static_cast<double>(n * s * s);

  for (std::int64_t in = 0; in < n; ++in)
    for (const auto& tgt : targets.per_image[static_cast<std::size_t>(in)]) {
      const double px = (static_cast<double>(tgt.cx) +
                         stable_sigmoid(double(at(in, 0, tgt.cy, tgt.cx)))) /
                        double(s);
      const double py = (static_cast<double>(tgt.cy) +
                         stable_sigmoid(double(at(in, 1, tgt.cy, tgt.cx)))) /
                        double(s);
      const double pw = stable_sigmoid(double(at(in, 2, tgt.cy, tgt.cx)));
      const double ph = stable_sigmoid(double(at(in, 3, tgt.cy, tgt.cx)));
      l_box += (px - tgt.gx) * (px - tgt.gx) + (py - tgt.gy) * (py - tgt.gy) +
               (pw - tgt.gw) * (pw - tgt.gw) + (ph - tgt.gh) * (ph - tgt.gh);
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j)
        mx = std::max(mx, double(at(in, 5 + j, tgt.cy, tgt.cx)));
      double z = 0;
      for (int j = 0; j < k; ++j)
        z += std::exp(double(at(in, 5 + j, tgt.cy, tgt.cx)) - mx);
      l_cls += std::log(z) -
               (double(at(in, 5 + tgt.cls, tgt.cy, tgt.cx)) - mx);
    }
  if (positives > 0) {
    l_box /= static_cast<double>(positives);
    l_cls /= static_cast<double>(positives);
  }

  const double total = w_obj * l_obj + w_box * l_box + w_cls * l_cls;
  TensorT<S> out = TensorT<S>::from({1}, {static_cast<S>(total)});
  tp.record(out, {head.node}, [head, targets, is_pos, n, ch, s, k, positives,
                               w_obj, w_box, w_cls](const auto& g,
                                                    TapeT<S>& t) {
    if (head.node < 0) return;
    auto& gx = t.grad_acc(head.node, head.numel());
    const auto& hv = head.data();
    auto at = [&](std::int64_t in, std::int64_t c, std::int64_t y,
                  std::int64_t x) -> double {
      return double(
          hv[static_cast<std::size_t>(((in * ch + c) * s + y) * s + x)]);
    };
    auto acc = [&](std::int64_t in, std::int64_t c, std::int64_t y,
                   std::int64_t x, double d) {
      gx[static_cast<std::size_t>(((in * ch + c) * s + y) * s + x)] +=
          static_cast<S>(d * double(g[0]));
    };
    const double obj_scale = w_obj / static_cast<double>(n * s * s);
    for (std::int64_t in = 0; in < n; ++in)
      for (std::int64_t y = 0; y < s; ++y)
        for (std::int64_t x = 0; x < s; ++x) {
          const bool pos =
              is_pos[static_cast<std::size_t>((in * s + y) * s + x)];
          const double p = stable_sigmoid(at(in, 4, y, x));
          acc(in, 4, y, x, obj_scale * (p - (pos ? 1.0 : 0.0)));
        }
    if (positives == 0) return;
    const double inv_p = 1.0 / static_cast<double>(positives);
    for (std::int64_t in = 0; in < n; ++in)
      for (const auto& tgt :
           targets.per_image[static_cast<std::size_t>(in)]) {
        const double stx = stable_sigmoid(at(in, 0, tgt.cy, tgt.cx));
        const double sty = stable_sigmoid(at(in, 1, tgt.cy, tgt.cx));
        const double stw = stable_sigmoid(at(in, 2, tgt.cy, tgt.cx));
        const double sth = stable_sigmoid(at(in, 3, tgt.cy, tgt.cx));
        const double px = (double(tgt.cx) + stx) / double(s);
        const double py = (double(tgt.cy) + sty) / double(s);
        acc(in, 0, tgt.cy, tgt.cx,
            w_box * inv_p * 2.0 * (px - tgt.gx) * stx * (1.0 - stx) /
                double(s));
        acc(in, 1, tgt.cy, tgt.cx,
            w_box * inv_p * 2.0 * (py - tgt.gy) * sty * (1.0 - sty) /
                double(s));
        acc(in, 2, tgt.cy, tgt.cx,
            w_box * inv_p * 2.0 * (stw - tgt.gw) * stw * (1.0 - stw));
        acc(in, 3, tgt.cy, tgt.cx,
            w_box * inv_p * 2.0 * (sth - tgt.gh) * sth * (1.0 - sth));
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j)
          mx = std::max(mx, at(in, 5 + j, tgt.cy, tgt.cx));
        double z = 0;
        for (int j = 0; j < k; ++j)
          z += std::exp(at(in, 5 + j, tgt.cy, tgt.cx) - mx);
        for (int j = 0; j < k; ++j) {
          const double soft = std::exp(at(in, 5 + j, tgt.cy, tgt.cx) - mx) / z;
          acc(in, 5 + j, tgt.cy, tgt.cx,
              w_cls * inv_p * (soft - (j == tgt.cls ? 1.0 : 0.0)));
        }
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (64-bit mode).
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;
  double analytic = 0.0;
  double numeric = 0.0;

  void fold(double a, double fd, const std::string& where) {
    const double rel =
        std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
    if (rel >= max_rel_err) {
      max_rel_err = rel;
      worst = where;
      analytic = a;
      numeric = fd;
    }
  }
};

// Checks tape gradients of an arbitrary double-precision computation against
// central finite differences. `fn` receives the tape plus the leaves (already
// registered when recording) and must return a scalar loss.
inline GradCheckReport gradcheck_fn(
    const std::function<TensorT<double>(TapeT<double>&,
                                        std::vector<TensorT<double>>&)>& fn,
    std::vector<TensorT<double>> leaves, std::vector<std::string> names,
    double step = 1e-3) {
  TapeT<double> tape;
  std::vector<TensorT<double>> bound;
  bound.reserve(leaves.size());
  for (auto& l : leaves) bound.push_back(tape.leaf(l));
  TensorT<double> loss = fn(tape, bound);
  if (loss.numel() != 1) fail("gradcheck_fn: loss must be scalar");
  tape.backward(loss);

  auto eval = [&]() {
    TapeT<double> t;
    t.set_recording(false);
    std::vector<TensorT<double>> b = leaves;
    return fn(t, b).data()[0];
  };

  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const auto* g = tape.grad(bound[li]);
    auto& vals = leaves[li].data();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double saved = vals[k];
      vals[k] = saved + step;
      const double up = eval();
      vals[k] = saved - step;
      const double dn = eval();
      vals[k] = saved;
      const double fd = (up - dn) / (2.0 * step);
      const double analytic = g ? (*g)[k] : 0.0;
      report.fold(analytic, fd,
                  (li < names.size() ? names[li] : "leaf" + std::to_string(li)) +
                      "[" + std::to_string(k) + "]");
    }
  }
  return report;
}

// Network-level gradient check: perturbs every parameter (and optionally the
// input batch) of a double-precision copy of the network, with the spike
// forward replaced by the smooth surrogate.
inline GradCheckReport gradcheck_network(NetworkT<double>& net,
                                         TensorT<double> batch,
                                         const std::vector<int>& labels,
                                         bool include_input = true,
                                         double step = 1e-3) {
  ForwardOptionsT<double> opt;
  opt.smooth_spike = true;

  auto run = [&](TapeT<double>& tape, TensorT<double>& input) {
    TensorT<double> logits = net.forward(tape, input, opt);
    return loss_classification(tape, logits, labels);
  };

  TapeT<double> tape;
  TensorT<double> input = tape.leaf(batch);
  TensorT<double> loss = run(tape, input);
  tape.backward(loss);

  // Snapshot analytic gradients now: every later forward rebinds the
  // parameters to a throwaway tape, invalidating their node handles.
  std::vector<std::vector<double>> analytic;
  for (auto& p : net.params) {
    const auto* g = tape.grad_by_node(p.node);
    analytic.push_back(g ? *g : std::vector<double>(p.value.data().size(), 0.0));
  }
  std::vector<double> analytic_input;
  if (include_input) {
    const auto* g = tape.grad(input);
    analytic_input = g ? *g : std::vector<double>(batch.data().size(), 0.0);
  }

  auto eval = [&]() {
    TapeT<double> t;
    t.set_recording(false);
    TensorT<double> in = batch;
    return run(t, in).data()[0];
  };

  GradCheckReport report;
  auto probe = [&](std::vector<double>& vals, const std::vector<double>& a,
                   const std::string& name) {
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double saved = vals[k];
      vals[k] = saved + step;
      const double up = eval();
      vals[k] = saved - step;
      const double dn = eval();
      vals[k] = saved;
      report.fold(a[k], (up - dn) / (2.0 * step),
                  name + "[" + std::to_string(k) + "]");
    }
  };
  for (std::size_t pi = 0; pi < net.params.size(); ++pi)
    probe(net.params[pi].value.data(), analytic[pi], net.params[pi].name);
  if (include_input) probe(batch.data(), analytic_input, "input");
  return report;
}

}  // namespace cspike
