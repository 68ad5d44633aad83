#pragma once

#include <cmath>

#include "cspike/random.hpp"
#include "cspike/tensor.hpp"

namespace cspike {

enum class NeuronKind { IF, LIF, Parametric };
enum class ThresholdRule { Plain, Scaled };
enum class ResetRule { Hard, Soft };
enum class InitMode { Zero, Recurrence };

enum class SurrogateKind { Rectangular, Arctan };

// Backward stand-in for the Heaviside spike derivative. When smooth_forward
// is set the spike op also replaces its forward with the surrogate's
// antiderivative, which is what finite-difference gradient checks run
// against (central differences of the exact 0/1 forward are meaningless).
template <class S>
struct SurrogateConfigT {
  SurrogateKind kind = SurrogateKind::Rectangular;
  S alpha = S(1);
  bool smooth_forward = false;
};

using SurrogateConfig = SurrogateConfigT<float>;

namespace detail {

template <class S>
S surrogate_deriv(S x, const SurrogateConfigT<S>& cfg) {
  if (cfg.kind == SurrogateKind::Rectangular)
    return std::abs(x) <= cfg.alpha / S(2) ? S(1) / cfg.alpha : S(0);
  const S pax = S(M_PI) * cfg.alpha * x;
  return (S(1) / S(M_PI)) * cfg.alpha / (S(1) + pax * pax);
}

// Antiderivative of surrogate_deriv, shifted so that x = 0 maps to 1/2.
template <class S>
S surrogate_smooth(S x, const SurrogateConfigT<S>& cfg) {
  if (cfg.kind == SurrogateKind::Rectangular) {
    if (x < -cfg.alpha / S(2)) return S(0);
    if (x > cfg.alpha / S(2)) return S(1);
    return x / cfg.alpha + S(1) / S(2);
  }
  return std::atan(S(M_PI) * cfg.alpha * x) / (S(M_PI) * S(M_PI)) +
         S(1) / S(2);
}

}  // namespace detail

// Elementwise surrogate derivative; pure function, never recorded.
template <class S>
TensorT<S> surrogate_derivative(const TensorT<S>& x,
                                const SurrogateConfigT<S>& cfg) {
  if (cfg.alpha <= S(0)) fail("surrogate_derivative: alpha must be > 0");
  TensorT<S> out = TensorT<S>::zeros(x.shape);
  for (std::size_t k = 0; k < out.data().size(); ++k)
    out.data()[k] = detail::surrogate_deriv(x.data()[k], cfg);
  return out;
}

// Neuron configuration. V_th is fixed (default 1); the Parametric model adds
// learnable per-timestep decay l[t] and input gain i[t] plus the firing
// magnitude V_re of S = theta(H/V_re - V_th), V = H - V_re*S.
template <class S>
struct NeuronParamsT {
  NeuronKind kind = NeuronKind::LIF;
  S v_th = S(1);
  S v_reset = S(0);
  S tau = S(2);
  ThresholdRule threshold_rule = ThresholdRule::Plain;
  ResetRule reset_rule = ResetRule::Hard;
  TensorT<S> l;     // length T (Parametric)
  TensorT<S> i;     // length T (Parametric)
  TensorT<S> v_re;  // shape {1} (Parametric)

  static NeuronParamsT if_neuron(S v_th = S(1), S v_reset = S(0)) {
    NeuronParamsT p;
    p.kind = NeuronKind::IF;
    p.v_th = v_th;
    p.v_reset = v_reset;
    return p;
  }

  static NeuronParamsT lif(S tau = S(2), S v_th = S(1), S v_reset = S(0)) {
    if (tau <= S(1)) fail("lif: tau must be > 1");
    NeuronParamsT p;
    p.kind = NeuronKind::LIF;
    p.tau = tau;
    p.v_th = v_th;
    p.v_reset = v_reset;
    return p;
  }

  // Starts at the LIF-equivalent point l = i = 1/2 with V_re = 1.
  static NeuronParamsT parametric(std::int64_t t_len, S v_th = S(1)) {
    if (t_len < 1) fail("parametric: T must be >= 1");
    NeuronParamsT p;
    p.kind = NeuronKind::Parametric;
    p.v_th = v_th;
    p.threshold_rule = ThresholdRule::Scaled;
    p.reset_rule = ResetRule::Soft;
    p.l = TensorT<S>::full({t_len}, S(0.5));
    p.i = TensorT<S>::full({t_len}, S(0.5));
    p.v_re = TensorT<S>::full({1}, S(1));
    return p;
  }
};

using NeuronParams = NeuronParamsT<float>;

// Minimum magnitude the learnable V_re is clamped to after every optimizer
// step; the spike rule divides by it.
template <class S>
constexpr S v_re_floor() {
  return S(0.05);
}

// H[t] = l[t]*V[t-1] + i[t]*X[t] with learnable per-timestep scalars.
template <class S>
TensorT<S> parametric_membrane(TapeT<S>& tp, const TensorT<S>& v_prev,
                               const TensorT<S>& x_t, const TensorT<S>& l,
                               const TensorT<S>& i, std::int64_t t) {
  if (v_prev.shape != x_t.shape)
    fail("parametric_membrane: shape mismatch " + shape_str(v_prev.shape) +
         " vs " + shape_str(x_t.shape));
  if (l.rank() != 1 || i.rank() != 1 || l.dim(0) != i.dim(0))
    fail("parametric_membrane: l and i must be vectors of equal length");
  if (t < 0 || t >= l.dim(0))
    fail("parametric_membrane: time index " + std::to_string(t) +
         " out of range for T=" + std::to_string(l.dim(0)));
  const S lv = l.data()[static_cast<std::size_t>(t)];
  const S iv = i.data()[static_cast<std::size_t>(t)];
  TensorT<S> out = TensorT<S>::zeros(v_prev.shape);
  const auto& vv = v_prev.data();
  const auto& xv = x_t.data();
  auto& ov = out.data();
  for (std::size_t k = 0; k < ov.size(); ++k) ov[k] = lv * vv[k] + iv * xv[k];
  tp.record(out, {v_prev.node, x_t.node, l.node, i.node},
            [v_prev, x_t, l, i, t, lv, iv](const auto& g, TapeT<S>& tape) {
              const auto& vv = v_prev.data();
              const auto& xv = x_t.data();
              if (v_prev.node >= 0) {
                auto& gv = tape.grad_acc(v_prev.node, v_prev.numel());
                for (std::size_t k = 0; k < g.size(); ++k) gv[k] += lv * g[k];
              }
              if (x_t.node >= 0) {
                auto& gx = tape.grad_acc(x_t.node, x_t.numel());
                for (std::size_t k = 0; k < g.size(); ++k) gx[k] += iv * g[k];
              }
              if (l.node >= 0) {
                auto& gl = tape.grad_acc(l.node, l.numel());
                S acc = S(0);
                for (std::size_t k = 0; k < g.size(); ++k) acc += vv[k] * g[k];
                gl[static_cast<std::size_t>(t)] += acc;
              }
              if (i.node >= 0) {
                auto& gi = tape.grad_acc(i.node, i.numel());
                S acc = S(0);
                for (std::size_t k = 0; k < g.size(); ++k) acc += xv[k] * g[k];
                gi[static_cast<std::size_t>(t)] += acc;
              }
            });
  return out;
}

// One membrane integration step (pre-spike potential H[t]).
template <class S>
TensorT<S> membrane_update(TapeT<S>& tp, const TensorT<S>& v_prev,
                           const TensorT<S>& x_t,
                           const NeuronParamsT<S>& p, std::int64_t t) {
  switch (p.kind) {
    case NeuronKind::IF:
      return scale_add(tp, v_prev, S(1), x_t, S(1));
    case NeuronKind::LIF:
      return scale_add(tp, v_prev, S(1) - S(1) / p.tau, x_t, S(1) / p.tau,
                       p.v_reset / p.tau);
    case NeuronKind::Parametric:
      return parametric_membrane(tp, v_prev, x_t, p.l, p.i, t);
  }
  fail("membrane_update: unknown neuron kind");
}

// Spike generation. Forward is the exact Heaviside step (theta(0) = 1);
// backward applies the surrogate derivative at the same argument. Under the
// scaled rule the argument is H/V_re - V_th with learnable V_re.
template <class S>
TensorT<S> spike_threshold(TapeT<S>& tp, const TensorT<S>& h,
                           const NeuronParamsT<S>& p, ThresholdRule rule,
                           const SurrogateConfigT<S>& sg) {
  if (sg.alpha <= S(0)) fail("spike_threshold: surrogate alpha must be > 0");
  const bool scaled = rule == ThresholdRule::Scaled;
  S vre = S(1);
  if (scaled) {
    if (!p.v_re.store || p.v_re.numel() != 1)
      fail("spike_threshold: scaled rule requires a scalar V_re");
    vre = p.v_re.data()[0];
    if (std::abs(vre) < v_re_floor<S>())
      fail("spike_threshold: |V_re| below clamp floor");
  }
  const S v_th = p.v_th;
  TensorT<S> out = TensorT<S>::zeros(h.shape);
  const auto& hv = h.data();
  auto& ov = out.data();
  for (std::size_t k = 0; k < ov.size(); ++k) {
    const S u = (scaled ? hv[k] / vre : hv[k]) - v_th;
    ov[k] = sg.smooth_forward ? detail::surrogate_smooth(u, sg)
                              : (u >= S(0) ? S(1) : S(0));
  }
  const TensorT<S> v_re_t = p.v_re;
  tp.record(out, {h.node, scaled ? v_re_t.node : -1},
            [h, v_re_t, scaled, vre, v_th, sg](const auto& g, TapeT<S>& tape) {
              const auto& hv = h.data();
              auto* gh = h.node >= 0 ? &tape.grad_acc(h.node, h.numel())
                                     : nullptr;
              auto* gr = (scaled && v_re_t.node >= 0)
                             ? &tape.grad_acc(v_re_t.node, 1)
                             : nullptr;
              S racc = S(0);
              for (std::size_t k = 0; k < g.size(); ++k) {
                const S u = (scaled ? hv[k] / vre : hv[k]) - v_th;
                const S d = detail::surrogate_deriv(u, sg);
                if (gh) (*gh)[k] += g[k] * d * (scaled ? S(1) / vre : S(1));
                if (gr) racc += g[k] * d * (-hv[k] / (vre * vre));
              }
              if (gr) (*gr)[0] += racc;
            });
  return out;
}

// Post-spike membrane potential. Hard: V = H(1-S) + V_reset*S.
// Soft: V = H - V_re*S.
template <class S>
TensorT<S> reset(TapeT<S>& tp, const TensorT<S>& h, const TensorT<S>& s,
                 const NeuronParamsT<S>& p, ResetRule rule) {
  if (h.shape != s.shape)
    fail("reset: shape mismatch " + shape_str(h.shape) + " vs " +
         shape_str(s.shape));
  const bool soft = rule == ResetRule::Soft;
  S vre = S(0);
  if (soft) {
    if (!p.v_re.store || p.v_re.numel() != 1)
      fail("reset: soft rule requires a scalar V_re");
    vre = p.v_re.data()[0];
  }
  const S v_reset = p.v_reset;
  TensorT<S> out = TensorT<S>::zeros(h.shape);
  const auto& hv = h.data();
  const auto& sv = s.data();
  auto& ov = out.data();
  if (soft)
    for (std::size_t k = 0; k < ov.size(); ++k) ov[k] = hv[k] - vre * sv[k];
  else
    for (std::size_t k = 0; k < ov.size(); ++k)
      ov[k] = hv[k] * (S(1) - sv[k]) + v_reset * sv[k];
  const TensorT<S> v_re_t = p.v_re;
  tp.record(out, {h.node, s.node, soft ? v_re_t.node : -1},
            [h, s, v_re_t, soft, vre, v_reset](const auto& g, TapeT<S>& tape) {
              const auto& hv = h.data();
              const auto& sv = s.data();
              if (h.node >= 0) {
                auto& gh = tape.grad_acc(h.node, h.numel());
                if (soft)
                  for (std::size_t k = 0; k < g.size(); ++k) gh[k] += g[k];
                else
                  for (std::size_t k = 0; k < g.size(); ++k)
                    gh[k] += g[k] * (S(1) - sv[k]);
              }
              if (s.node >= 0) {
                auto& gs = tape.grad_acc(s.node, s.numel());
                if (soft)
                  for (std::size_t k = 0; k < g.size(); ++k)
                    gs[k] += g[k] * (-vre);
                else
                  for (std::size_t k = 0; k < g.size(); ++k)
                    gs[k] += g[k] * (v_reset - hv[k]);
              }
              if (soft && v_re_t.node >= 0) {
                auto& gr = tape.grad_acc(v_re_t.node, 1);
                S acc = S(0);
                for (std::size_t k = 0; k < g.size(); ++k)
                  acc += g[k] * (-sv[k]);
                gr[0] += acc;
              }
            });
  return out;
}

// Unrolls the full spike dynamics over t = 1..T. Requires the whole input
// sequence up front: the Recurrence init seeds V[0] with the raw input
// current of the last time step, X[T], before time runs forward.
// h_trace / v_trace, when given, receive the pre-spike potential H[t] and
// the post-reset potential V[t] of every step.
template <class S>
TensorT<S> neuron_forward(TapeT<S>& tp, const TensorT<S>& x,
                          const NeuronParamsT<S>& p, InitMode init,
                          const SurrogateConfigT<S>& sg,
                          std::vector<TensorT<S>>* h_trace = nullptr,
                          std::vector<TensorT<S>>* v_trace = nullptr) {
  if (x.rank() < 2)
    fail("neuron_forward: expected N x T x ..., got " + shape_str(x.shape));
  const std::int64_t t_len = x.dim(1);
  if (t_len < 1) fail("neuron_forward: T must be >= 1");
  if (p.kind == NeuronKind::Parametric && p.l.numel() < t_len)
    fail("neuron_forward: parametric l/i shorter than T");
  TensorT<S> v = init == InitMode::Recurrence
                     ? slice_time(tp, x, t_len - 1)
                     : TensorT<S>::zeros([&] {
                         Shape sh{x.dim(0)};
                         for (int d = 2; d < x.rank(); ++d)
                           sh.push_back(x.dim(d));
                         return sh;
                       }());
  std::vector<TensorT<S>> spikes;
  spikes.reserve(static_cast<std::size_t>(t_len));
  for (std::int64_t t = 0; t < t_len; ++t) {
    TensorT<S> x_t = slice_time(tp, x, t);
    TensorT<S> h = membrane_update(tp, v, x_t, p, t);
    TensorT<S> s_t = spike_threshold(tp, h, p, p.threshold_rule, sg);
    v = reset(tp, h, s_t, p, p.reset_rule);
    if (h_trace) h_trace->push_back(h);
    if (v_trace) v_trace->push_back(v);
    spikes.push_back(std::move(s_t));
  }
  return stack_time(tp, spikes);
}

// Applies one seeded random permutation of the T slices of each sample.
// The permutation for sample n depends only on (seed, n); gradients are
// routed back through the inverse permutation.
template <class S>
TensorT<S> shuffle_time(TapeT<S>& tp, const TensorT<S>& x,
                        std::uint64_t seed) {
  detail::check_time_rank(x, "shuffle_time");
  const std::int64_t n = x.dim(0), t_len = x.dim(1);
  if (t_len < 1) fail("shuffle_time: T must be >= 1");
  std::int64_t inner = 1;
  for (int d = 2; d < x.rank(); ++d) inner *= x.dim(d);
  std::vector<std::int64_t> perms(static_cast<std::size_t>(n * t_len));
  for (std::int64_t s = 0; s < n; ++s) {
    std::vector<std::int64_t> p(static_cast<std::size_t>(t_len));
    for (std::int64_t t = 0; t < t_len; ++t)
      p[static_cast<std::size_t>(t)] = t;
    Rng rng(seed, static_cast<std::uint64_t>(s));
    rng.shuffle(p);
    for (std::int64_t t = 0; t < t_len; ++t)
      perms[static_cast<std::size_t>(s * t_len + t)] =
          p[static_cast<std::size_t>(t)];
  }
  TensorT<S> out = TensorT<S>::zeros(x.shape);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t t = 0; t < t_len; ++t) {
      const std::int64_t src_t = perms[static_cast<std::size_t>(s * t_len + t)];
      const S* src = xv.data() + (s * t_len + src_t) * inner;
      S* dst = ov.data() + (s * t_len + t) * inner;
      for (std::int64_t k = 0; k < inner; ++k) dst[k] = src[k];
    }
  tp.record(out, {x.node},
            [x, perms, n, t_len, inner](const auto& g, TapeT<S>& tape) {
              if (x.node < 0) return;
              auto& gx = tape.grad_acc(x.node, x.numel());
              for (std::int64_t s = 0; s < n; ++s)
                for (std::int64_t t = 0; t < t_len; ++t) {
                  const std::int64_t src_t =
                      perms[static_cast<std::size_t>(s * t_len + t)];
                  S* dst = gx.data() + (s * t_len + src_t) * inner;
                  const S* src = g.data() + (s * t_len + t) * inner;
                  for (std::int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                }
            });
  return out;
}

// The permutation shuffle_time would apply to sample n; exposed for tests
// and the diagnostic report.
inline std::vector<std::int64_t> shuffle_time_permutation(std::uint64_t seed,
                                                          std::int64_t sample,
                                                          std::int64_t t_len) {
  std::vector<std::int64_t> p(static_cast<std::size_t>(t_len));
  for (std::int64_t t = 0; t < t_len; ++t) p[static_cast<std::size_t>(t)] = t;
  Rng rng(seed, static_cast<std::uint64_t>(sample));
  rng.shuffle(p);
  return p;
}

}  // namespace cspike
