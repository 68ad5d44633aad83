#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cspike {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ")";
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

// Dense row-major tensor. The element buffer is shared and treated as
// immutable once the tensor participates in a recorded computation; parameter
// updates mutate leaves between tapes. `node` is the handle into the tape that
// recorded this tensor (-1 for constants and tensors outside any tape).
template <class S>
struct TensorT {
  Shape shape;
  std::shared_ptr<std::vector<S>> store;
  int node = -1;

  TensorT() = default;

  static TensorT zeros(Shape sh) {
    TensorT t;
    validate_shape(sh);
    t.shape = std::move(sh);
    t.store = std::make_shared<std::vector<S>>(
        static_cast<std::size_t>(shape_numel(t.shape)), S(0));
    return t;
  }

  static TensorT full(Shape sh, S value) {
    TensorT t = zeros(std::move(sh));
    for (auto& v : *t.store) v = value;
    return t;
  }

  static TensorT from(Shape sh, std::vector<S> values) {
    validate_shape(sh);
    if (shape_numel(sh) != static_cast<std::int64_t>(values.size()))
      fail("tensor data length " + std::to_string(values.size()) +
           " does not match shape " + shape_str(sh));
    TensorT t;
    t.shape = std::move(sh);
    t.store = std::make_shared<std::vector<S>>(std::move(values));
    return t;
  }

  std::int64_t numel() const { return shape_numel(shape); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  std::vector<S>& data() { return *store; }
  const std::vector<S>& data() const { return *store; }

  S at(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) fail("index rank mismatch");
    std::int64_t flat = 0;
    int k = 0;
    for (auto i : idx) {
      flat = flat * shape[static_cast<std::size_t>(k)] + i;
      ++k;
    }
    return (*store)[static_cast<std::size_t>(flat)];
  }

  // Same data reinterpreted under a new shape; shares the buffer but carries
  // no tape handle (use reshape() for the differentiable version).
  TensorT viewed(Shape sh) const {
    if (shape_numel(sh) != numel())
      fail("view shape " + shape_str(sh) + " does not match numel of " +
           shape_str(shape));
    TensorT t;
    t.shape = std::move(sh);
    t.store = store;
    return t;
  }

  template <class S2>
  TensorT<S2> cast() const {
    TensorT<S2> t;
    t.shape = shape;
    t.store = std::make_shared<std::vector<S2>>(store->size());
    for (std::size_t i = 0; i < store->size(); ++i)
      (*t.store)[i] = static_cast<S2>((*store)[i]);
    return t;
  }

 private:
  static void validate_shape(const Shape& sh) {
    for (auto d : sh)
      if (d < 0) fail("negative dimension in shape " + shape_str(sh));
  }
};

// Reverse-mode recording tape. Operations append nodes in topological order
// (inputs are always recorded before their outputs); backward() walks the
// nodes once, in reverse, accumulating gradients.
//
// A tape is confined to a single thread and discarded after backward.
template <class S>
class TapeT {
 public:
  using Grad = std::vector<S>;
  using Rule = std::function<void(const Grad& gout, TapeT& tape)>;

  // When recording is off, ops still compute values but record nothing;
  // used for inference passes and finite-difference probes.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  // Registers a differentiable leaf (parameter or input); returns the same
  // tensor with its node handle set.
  TensorT<S> leaf(TensorT<S> t) {
    if (!recording_) {
      t.node = -1;
      return t;
    }
    t.node = add_node(t.numel(), {});
    return t;
  }

  // Gives `out` a fresh node whose backward rule is `rule`.
  void record(TensorT<S>& out, std::vector<int> inputs, Rule rule) {
    if (!recording_) {
      out.node = -1;
      return;
    }
    inputs.erase(std::remove_if(inputs.begin(), inputs.end(),
                                [](int i) { return i < 0; }),
                 inputs.end());
    out.node = add_node(out.numel(), std::move(inputs));
    nodes_.back().rule = std::move(rule);
  }

  // Seeds d(loss)/d(loss) = 1 and propagates through every recorded rule in
  // reverse order. `loss` must be a scalar recorded on this tape.
  void backward(const TensorT<S>& loss) {
    if (loss.numel() != 1) fail("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape));
    if (loss.node < 0) fail("backward: loss is not recorded on this tape");
    grads_.assign(nodes_.size(), Grad{});
    touched_.assign(nodes_.size(), false);
    grads_[static_cast<std::size_t>(loss.node)] = Grad{S(1)};
    touched_[static_cast<std::size_t>(loss.node)] = true;
    for (int id = loss.node; id >= 0; --id) {
      auto uid = static_cast<std::size_t>(id);
      if (!touched_[uid] || !nodes_[uid].rule) continue;
      nodes_[uid].rule(grads_[uid], *this);
    }
    ran_backward_ = true;
  }

  // Gradient buffer for a node, allocated (zeroed) on first touch. Backward
  // rules accumulate into these.
  Grad& grad_acc(int node, std::int64_t numel) {
    auto uid = static_cast<std::size_t>(node);
    if (grads_[uid].empty()) {
      grads_[uid].assign(static_cast<std::size_t>(numel), S(0));
      touched_[uid] = true;
    }
    return grads_[uid];
  }

  // Gradient of a tensor after backward(); null when the loss does not
  // depend on it (its gradient is identically zero).
  const Grad* grad(const TensorT<S>& t) const { return grad_by_node(t.node); }

  const Grad* grad_by_node(int node) const {
    if (!ran_backward_ || node < 0 ||
        node >= static_cast<int>(nodes_.size()))
      return nullptr;
    auto uid = static_cast<std::size_t>(node);
    if (!touched_[uid]) return nullptr;
    return &grads_[uid];
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::int64_t numel;
    std::vector<int> inputs;
    Rule rule;
  };

  int add_node(std::int64_t numel, std::vector<int> inputs) {
    for (int in : inputs)
      if (in >= static_cast<int>(nodes_.size()))
        fail("tape: input node recorded after its consumer");
    nodes_.push_back(Node{numel, std::move(inputs), nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<Grad> grads_;
  std::vector<bool> touched_;
  bool recording_ = true;
  bool ran_backward_ = false;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

// ---------------------------------------------------------------------------
// Elementwise and structural operations.
// ---------------------------------------------------------------------------

enum class EwKind { Add, Sub, Mul };

template <class S>
TensorT<S> elementwise(TapeT<S>& tp, const TensorT<S>& a, const TensorT<S>& b,
                       EwKind kind) {
  if (a.shape != b.shape)
    fail("elementwise: shape mismatch " + shape_str(a.shape) + " vs " +
         shape_str(b.shape));
  TensorT<S> out = TensorT<S>::zeros(a.shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  const std::size_t n = ov.size();
  switch (kind) {
    case EwKind::Add:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
      break;
    case EwKind::Sub:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i];
      break;
    case EwKind::Mul:
      for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
      break;
  }
  tp.record(out, {a.node, b.node}, [a, b, kind](const auto& g, TapeT<S>& t) {
    const std::size_t n = g.size();
    if (a.node >= 0) {
      auto& ga = t.grad_acc(a.node, a.numel());
      if (kind == EwKind::Mul) {
        const auto& bv = b.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (b.node >= 0) {
      auto& gb = t.grad_acc(b.node, b.numel());
      if (kind == EwKind::Mul) {
        const auto& av = a.data();
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
      } else if (kind == EwKind::Sub) {
        for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    }
  });
  return out;
}

template <class S>
TensorT<S> add(TapeT<S>& tp, const TensorT<S>& a, const TensorT<S>& b) {
  return elementwise(tp, a, b, EwKind::Add);
}
template <class S>
TensorT<S> sub(TapeT<S>& tp, const TensorT<S>& a, const TensorT<S>& b) {
  return elementwise(tp, a, b, EwKind::Sub);
}
template <class S>
TensorT<S> mul(TapeT<S>& tp, const TensorT<S>& a, const TensorT<S>& b) {
  return elementwise(tp, a, b, EwKind::Mul);
}

// out = ca*x + cb*y + cc, with compile-time-known scalar coefficients.
// Covers the IF and LIF membrane updates in one node.
template <class S>
TensorT<S> scale_add(TapeT<S>& tp, const TensorT<S>& x, S ca,
                     const TensorT<S>& y, S cb, S cc = S(0)) {
  if (x.shape != y.shape)
    fail("scale_add: shape mismatch " + shape_str(x.shape) + " vs " +
         shape_str(y.shape));
  TensorT<S> out = TensorT<S>::zeros(x.shape);
  const auto& xv = x.data();
  const auto& yv = y.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] = ca * xv[i] + cb * yv[i] + cc;
  tp.record(out, {x.node, y.node}, [x, y, ca, cb](const auto& g, TapeT<S>& t) {
    if (x.node >= 0) {
      auto& gx = t.grad_acc(x.node, x.numel());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += ca * g[i];
    }
    if (y.node >= 0) {
      auto& gy = t.grad_acc(y.node, y.numel());
      for (std::size_t i = 0; i < g.size(); ++i) gy[i] += cb * g[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> reshape(TapeT<S>& tp, const TensorT<S>& x, Shape sh) {
  TensorT<S> out = x.viewed(std::move(sh));
  // Fresh node; the value buffer is shared but gradients are per-node, so the
  // reshaped tensor shares no mutable state with the original's gradient.
  tp.record(out, {x.node}, [x](const auto& g, TapeT<S>& t) {
    if (x.node < 0) return;
    auto& gx = t.grad_acc(x.node, x.numel());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

// Arithmetic mean along one axis (axis removed from the shape).
template <class S>
TensorT<S> reduce_mean(TapeT<S>& tp, const TensorT<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    fail("reduce_mean: axis " + std::to_string(axis) +
         " out of range for shape " + shape_str(x.shape));
  const std::int64_t len = x.dim(axis);
  if (len == 0) fail("reduce_mean: empty axis");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Shape osh;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) osh.push_back(x.dim(i));
  TensorT<S> out = TensorT<S>::zeros(osh);
  const auto& xv = x.data();
  auto& ov = out.data();
  const S inv = S(1) / static_cast<S>(len);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t k = 0; k < len; ++k) {
      const S* src = xv.data() + (o * len + k) * inner;
      S* dst = ov.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
    }
  tp.record(out, {x.node},
            [x, outer, len, inner, inv](const auto& g, TapeT<S>& t) {
              if (x.node < 0) return;
              auto& gx = t.grad_acc(x.node, x.numel());
              for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t k = 0; k < len; ++k) {
                  S* dst = gx.data() + (o * len + k) * inner;
                  const S* src = g.data() + o * inner;
                  for (std::int64_t i = 0; i < inner; ++i)
                    dst[i] += src[i] * inv;
                }
            });
  return out;
}

// Scalar sum of all elements.
template <class S>
TensorT<S> reduce_sum_all(TapeT<S>& tp, const TensorT<S>& x) {
  TensorT<S> out = TensorT<S>::zeros({1});
  S acc = S(0);
  for (S v : x.data()) acc += v;
  out.data()[0] = acc;
  tp.record(out, {x.node}, [x](const auto& g, TapeT<S>& t) {
    if (x.node < 0) return;
    auto& gx = t.grad_acc(x.node, x.numel());
    for (auto& v : gx) v += g[0];
  });
  return out;
}

// y = x . W^T + b  for x: N x F, W: G x F, b: G.
template <class S>
TensorT<S> linear(TapeT<S>& tp, const TensorT<S>& x, const TensorT<S>& w,
                  const TensorT<S>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    fail("linear: expected ranks 2/2/1, got " + shape_str(x.shape) + ", " +
         shape_str(w.shape) + ", " + shape_str(b.shape));
  const std::int64_t n = x.dim(0), f = x.dim(1), g_out = w.dim(0);
  if (w.dim(1) != f || b.dim(0) != g_out)
    fail("linear: feature extents disagree: x " + shape_str(x.shape) + ", w " +
         shape_str(w.shape) + ", b " + shape_str(b.shape));
  TensorT<S> out = TensorT<S>::zeros({n, g_out});
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < g_out; ++j) {
      S acc = bv[static_cast<std::size_t>(j)];
      const S* xr = xv.data() + i * f;
      const S* wr = wv.data() + j * f;
      for (std::int64_t k = 0; k < f; ++k) acc += xr[k] * wr[k];
      ov[static_cast<std::size_t>(i * g_out + j)] = acc;
    }
  tp.record(out, {x.node, w.node, b.node},
            [x, w, b, n, f, g_out](const auto& g, TapeT<S>& t) {
              const auto& xv = x.data();
              const auto& wv = w.data();
              if (x.node >= 0) {
                auto& gx = t.grad_acc(x.node, x.numel());
                for (std::int64_t i = 0; i < n; ++i)
                  for (std::int64_t j = 0; j < g_out; ++j) {
                    const S go = g[static_cast<std::size_t>(i * g_out + j)];
                    const S* wr = wv.data() + j * f;
                    S* gr = gx.data() + i * f;
                    for (std::int64_t k = 0; k < f; ++k) gr[k] += go * wr[k];
                  }
              }
              if (w.node >= 0) {
                auto& gw = t.grad_acc(w.node, w.numel());
                for (std::int64_t i = 0; i < n; ++i)
                  for (std::int64_t j = 0; j < g_out; ++j) {
                    const S go = g[static_cast<std::size_t>(i * g_out + j)];
                    const S* xr = xv.data() + i * f;
                    S* gr = gw.data() + j * f;
                    for (std::int64_t k = 0; k < f; ++k) gr[k] += go * xr[k];
                  }
              }
              if (b.node >= 0) {
                auto& gb = t.grad_acc(b.node, b.numel());
                for (std::int64_t i = 0; i < n; ++i)
                  for (std::int64_t j = 0; j < g_out; ++j)
                    gb[static_cast<std::size_t>(j)] +=
                        g[static_cast<std::size_t>(i * g_out + j)];
              }
            });
  return out;
}

// ---------------------------------------------------------------------------
// Time-axis operations on N x T x ... tensors.
// ---------------------------------------------------------------------------

namespace detail {
template <class S>
void check_time_rank(const TensorT<S>& x, const char* op) {
  if (x.rank() < 2) fail(std::string(op) + ": expected rank >= 2, got " +
                         shape_str(x.shape));
}
}  // namespace detail

// y[n, c, t, h, w] = x[n, t, c, h, w]; also the inverse mapping, since the
// permutation swaps only axes 1 and 2.
template <class S>
TensorT<S> transpose_time_channel(TapeT<S>& tp, const TensorT<S>& x) {
  if (x.rank() != 5)
    fail("transpose_time_channel: expected rank 5, got " +
         shape_str(x.shape));
  const std::int64_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  const std::int64_t inner = x.dim(3) * x.dim(4);
  TensorT<S> out =
      TensorT<S>::zeros({n, c, t, x.dim(3), x.dim(4)});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t a = 0; a < t; ++a)
      for (std::int64_t b = 0; b < c; ++b) {
        const S* src = xv.data() + ((i * t + a) * c + b) * inner;
        S* dst = ov.data() + ((i * c + b) * t + a) * inner;
        for (std::int64_t k = 0; k < inner; ++k) dst[k] = src[k];
      }
  tp.record(out, {x.node}, [x, n, t, c, inner](const auto& g, TapeT<S>& tpp) {
    if (x.node < 0) return;
    auto& gx = tpp.grad_acc(x.node, x.numel());
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t a = 0; a < t; ++a)
        for (std::int64_t b = 0; b < c; ++b) {
          S* dst = gx.data() + ((i * t + a) * c + b) * inner;
          const S* src = g.data() + ((i * c + b) * t + a) * inner;
          for (std::int64_t k = 0; k < inner; ++k) dst[k] += src[k];
        }
  });
  return out;
}

// Concatenation along axis 1 (the time axis); all other axes must agree.
template <class S>
TensorT<S> concat_time(TapeT<S>& tp, const TensorT<S>& a, const TensorT<S>& b) {
  detail::check_time_rank(a, "concat_time");
  if (a.rank() != b.rank())
    fail("concat_time: rank mismatch " + shape_str(a.shape) + " vs " +
         shape_str(b.shape));
  for (int i = 0; i < a.rank(); ++i)
    if (i != 1 && a.dim(i) != b.dim(i))
      fail("concat_time: non-time axis mismatch " + shape_str(a.shape) +
           " vs " + shape_str(b.shape));
  const std::int64_t n = a.dim(0), ta = a.dim(1), tb = b.dim(1);
  std::int64_t inner = 1;
  for (int i = 2; i < a.rank(); ++i) inner *= a.dim(i);
  Shape osh = a.shape;
  osh[1] = ta + tb;
  TensorT<S> out = TensorT<S>::zeros(osh);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    S* dst = ov.data() + i * (ta + tb) * inner;
    const S* sa = av.data() + i * ta * inner;
    const S* sb = bv.data() + i * tb * inner;
    for (std::int64_t k = 0; k < ta * inner; ++k) dst[k] = sa[k];
    for (std::int64_t k = 0; k < tb * inner; ++k) dst[ta * inner + k] = sb[k];
  }
  tp.record(out, {a.node, b.node},
            [a, b, n, ta, tb, inner](const auto& g, TapeT<S>& t) {
              if (a.node >= 0) {
                auto& ga = t.grad_acc(a.node, a.numel());
                for (std::int64_t i = 0; i < n; ++i) {
                  const S* src = g.data() + i * (ta + tb) * inner;
                  S* dst = ga.data() + i * ta * inner;
                  for (std::int64_t k = 0; k < ta * inner; ++k)
                    dst[k] += src[k];
                }
              }
              if (b.node >= 0) {
                auto& gb = t.grad_acc(b.node, b.numel());
                for (std::int64_t i = 0; i < n; ++i) {
                  const S* src = g.data() + i * (ta + tb) * inner + ta * inner;
                  S* dst = gb.data() + i * tb * inner;
                  for (std::int64_t k = 0; k < tb * inner; ++k)
                    dst[k] += src[k];
                }
              }
            });
  return out;
}

// x: N x T x rest  ->  N x rest (time slice t).
template <class S>
TensorT<S> slice_time(TapeT<S>& tp, const TensorT<S>& x, std::int64_t t) {
  detail::check_time_rank(x, "slice_time");
  const std::int64_t n = x.dim(0), tt = x.dim(1);
  if (t < 0 || t >= tt)
    fail("slice_time: index " + std::to_string(t) + " out of range for " +
         shape_str(x.shape));
  std::int64_t inner = 1;
  Shape osh{n};
  for (int i = 2; i < x.rank(); ++i) {
    inner *= x.dim(i);
    osh.push_back(x.dim(i));
  }
  TensorT<S> out = TensorT<S>::zeros(osh);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const S* src = xv.data() + (i * tt + t) * inner;
    S* dst = ov.data() + i * inner;
    for (std::int64_t k = 0; k < inner; ++k) dst[k] = src[k];
  }
  tp.record(out, {x.node}, [x, n, tt, t, inner](const auto& g, TapeT<S>& tpp) {
    if (x.node < 0) return;
    auto& gx = tpp.grad_acc(x.node, x.numel());
    for (std::int64_t i = 0; i < n; ++i) {
      S* dst = gx.data() + (i * tt + t) * inner;
      const S* src = g.data() + i * inner;
      for (std::int64_t k = 0; k < inner; ++k) dst[k] += src[k];
    }
  });
  return out;
}

// Stacks T tensors of shape N x rest into N x T x rest.
template <class S>
TensorT<S> stack_time(TapeT<S>& tp, const std::vector<TensorT<S>>& slices) {
  if (slices.empty()) fail("stack_time: no slices");
  const Shape& ssh = slices[0].shape;
  for (const auto& s : slices)
    if (s.shape != ssh)
      fail("stack_time: slice shape mismatch " + shape_str(s.shape) + " vs " +
           shape_str(ssh));
  const std::int64_t n = ssh[0];
  const std::int64_t tt = static_cast<std::int64_t>(slices.size());
  std::int64_t inner = 1;
  Shape osh{n, tt};
  for (std::size_t i = 1; i < ssh.size(); ++i) {
    inner *= ssh[i];
    osh.push_back(ssh[i]);
  }
  TensorT<S> out = TensorT<S>::zeros(osh);
  auto& ov = out.data();
  std::vector<int> in_nodes;
  for (std::int64_t t = 0; t < tt; ++t) {
    const auto& sv = slices[static_cast<std::size_t>(t)].data();
    in_nodes.push_back(slices[static_cast<std::size_t>(t)].node);
    for (std::int64_t i = 0; i < n; ++i) {
      S* dst = ov.data() + (i * tt + t) * inner;
      const S* src = sv.data() + i * inner;
      for (std::int64_t k = 0; k < inner; ++k) dst[k] = src[k];
    }
  }
  tp.record(out, in_nodes,
            [slices, n, tt, inner](const auto& g, TapeT<S>& t) {
              for (std::int64_t ts = 0; ts < tt; ++ts) {
                const auto& s = slices[static_cast<std::size_t>(ts)];
                if (s.node < 0) continue;
                auto& gs = t.grad_acc(s.node, s.numel());
                for (std::int64_t i = 0; i < n; ++i) {
                  S* dst = gs.data() + i * inner;
                  const S* src = g.data() + (i * tt + ts) * inner;
                  for (std::int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                }
              }
            });
  return out;
}

// x: N x rest -> N x T x rest with every time slice equal to x.
template <class S>
TensorT<S> repeat_time(TapeT<S>& tp, const TensorT<S>& x, std::int64_t t_len) {
  if (t_len < 1) fail("repeat_time: T must be >= 1, got " +
                      std::to_string(t_len));
  if (x.rank() < 1) fail("repeat_time: scalar input");
  const std::int64_t n = x.dim(0);
  std::int64_t inner = 1;
  Shape osh{n, t_len};
  for (int i = 1; i < x.rank(); ++i) {
    inner *= x.dim(i);
    osh.push_back(x.dim(i));
  }
  TensorT<S> out = TensorT<S>::zeros(osh);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t t = 0; t < t_len; ++t) {
      S* dst = ov.data() + (i * t_len + t) * inner;
      const S* src = xv.data() + i * inner;
      for (std::int64_t k = 0; k < inner; ++k) dst[k] = src[k];
    }
  tp.record(out, {x.node}, [x, n, t_len, inner](const auto& g, TapeT<S>& t) {
    if (x.node < 0) return;
    auto& gx = t.grad_acc(x.node, x.numel());
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t ts = 0; ts < t_len; ++ts) {
        S* dst = gx.data() + i * inner;
        const S* src = g.data() + (i * t_len + ts) * inner;
        for (std::int64_t k = 0; k < inner; ++k) dst[k] += src[k];
      }
  });
  return out;
}

}  // namespace cspike
