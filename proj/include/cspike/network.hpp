#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cspike/conv.hpp"
#include "cspike/encoding.hpp"
#include "cspike/neuron.hpp"
#include "cspike/random.hpp"
#include "cspike/tensor.hpp"

namespace cspike {

enum class ConvMode { Shared2D, Conv3D };
enum class HeadKind { Classification, Detection };

struct BlockSpec {
  std::int64_t out_channels = 8;
  std::int64_t kt = 3;  // ignored under Shared2D
  std::int64_t kh = 3;
  std::int64_t kw = 3;
  std::int64_t stride = 1;  // spatial only; time stride is fixed at 1
  bool residual = false;
};

struct StemSpec {
  std::int64_t out_channels = 8;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
};

struct HeadSpec {
  HeadKind kind = HeadKind::Classification;
  std::int64_t num_classes = 2;
  std::int64_t grid = 4;  // Detection only
};

struct NeuronSpec {
  NeuronKind kind = NeuronKind::Parametric;
  double v_th = 1.0;
  double v_reset = 0.0;
  double tau = 2.0;
  SurrogateKind surrogate = SurrogateKind::Rectangular;
  double alpha = 1.0;
};

struct NetworkSpec {
  EncoderConfig encoder;
  StemSpec stem;
  std::vector<BlockSpec> blocks;
  ConvMode conv_mode = ConvMode::Conv3D;
  NeuronSpec neuron;
  bool recurrence = false;
  HeadSpec head;
  std::int64_t t_len = 4;
  std::int64_t in_channels = 1;
  std::int64_t in_h = 16;
  std::int64_t in_w = 16;
  // Initial value of the backbone convolution biases. Setting this just
  // below V_th makes neurons fire on input events from step one, which
  // breaks the all-silent saddle on sparse inputs. Head biases stay 0.
  double bias_init = 0.0;
};

// Spatial padding so that common kernel/stride pairs tile exactly: (k=3,s=1)
// keeps the extent, (k=4,s=2) and (k=2,s=2) halve it. Output extents that do
// not divide exactly are rejected by the convolution itself.
inline std::int64_t derive_pad(std::int64_t k, std::int64_t s) {
  if (k >= s && (k - s) % 2 == 0) return (k - s) / 2;
  return (k - 1) / 2;
}

template <class S>
struct ParamT {
  std::string name;
  TensorT<S> value;
  bool decay = false;        // participates in weight decay
  bool clamp_floor = false;  // V_re: clamped to >= 0.05 after each step
  int node = -1;             // node handle on the most recent tape
};

// Spike-element-wise residual: elementwise sum of two spike trains; values
// may exceed 1. Both sides must be non-negative integer valued (checked
// unless the forward runs in smooth gradcheck mode).
template <class S>
TensorT<S> sew_add(TapeT<S>& tp, const TensorT<S>& a, const TensorT<S>& b,
                   bool check_integer = true) {
  if (a.shape != b.shape)
    fail("sew_add: shape mismatch " + shape_str(a.shape) + " vs " +
         shape_str(b.shape));
  if (check_integer) {
    for (const auto* t : {&a, &b})
      for (S v : t->data())
        if (v < S(0) || v != std::nearbyint(v))
          fail("sew_add: operand is not a non-negative integer spike train");
  }
  return add(tp, a, b);
}

// Mean over the time axis of the head's real-valued outputs.
template <class S>
TensorT<S> rate_decode(TapeT<S>& tp, const TensorT<S>& x) {
  detail::check_time_rank(x, "rate_decode");
  return reduce_mean(tp, x, 1);
}

// Applies one shared 2D convolution to every time slice of N x T x C x H x W.
template <class S>
TensorT<S> block_forward_shared2d(TapeT<S>& tp, const TensorT<S>& x,
                                  const TensorT<S>& w, const TensorT<S>& b,
                                  std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 5)
    fail("block_forward_shared2d: expected rank 5, got " +
         shape_str(x.shape));
  const std::int64_t n = x.dim(0), t = x.dim(1);
  TensorT<S> flat = reshape(tp, x, {n * t, x.dim(2), x.dim(3), x.dim(4)});
  TensorT<S> y = conv2d(tp, flat, w, b, stride, pad);
  return reshape(tp, y, {n, t, y.dim(1), y.dim(2), y.dim(3)});
}

// Single 3D convolution over (T, H, W): transpose to channel-first CTHW,
// convolve with temporal "same" padding (odd kT only), transpose back.
template <class S>
TensorT<S> block_forward_3d(TapeT<S>& tp, const TensorT<S>& x,
                            const TensorT<S>& w, const TensorT<S>& b,
                            std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 5)
    fail("block_forward_3d: expected rank 5, got " + shape_str(x.shape));
  const std::int64_t kt = w.dim(2);
  if (kt % 2 == 0)
    fail("block_forward_3d: temporal kernel width must be odd, got " +
         std::to_string(kt));
  TensorT<S> cthw = transpose_time_channel(tp, x);
  TensorT<S> y = conv3d(tp, cthw, w, b, /*st=*/1, stride, stride,
                        /*pt=*/(kt - 1) / 2, pad, pad);
  return transpose_time_channel(tp, y);
}

template <class S>
struct ForwardOptionsT {
  bool shuffle = false;            // shuffle every neuron layer's input
  std::uint64_t shuffle_seed = 0;  // base seed for the permutations
  std::uint64_t shuffle_salt = 0;  // per-batch counter
  bool smooth_spike = false;       // replace Heaviside by the smooth surrogate
  // Optional probes for tests: pre-neuron currents and post-neuron spikes of
  // every neuron layer, in order.
  std::vector<TensorT<S>>* capture_currents = nullptr;
  std::vector<TensorT<S>>* capture_spikes = nullptr;
};

using ForwardOptions = ForwardOptionsT<float>;

template <class S>
class NetworkT {
 public:
  NetworkSpec spec;
  std::vector<ParamT<S>> params;

  // Deterministic build: same (spec, seed) gives bit-identical parameters.
  static NetworkT build(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkT net;
    net.spec = spec;
    net.validate_and_plan();
    net.init_params(seed);
    return net;
  }

  ParamT<S>& param(const std::string& name) {
    for (auto& p : params)
      if (p.name == name) return p;
    fail("network: no parameter named " + name);
  }

  std::int64_t final_channels() const { return final_channels_; }
  std::int64_t final_h() const { return final_h_; }
  std::int64_t final_w() const { return final_w_; }

  template <class S2>
  NetworkT<S2> cast() const {
    NetworkT<S2> net;
    net.spec = spec;
    net.validate_and_plan();
    net.conv_w_ = conv_w_;
    net.neuron_p_ = neuron_p_;
    net.ttfs_w_ = ttfs_w_;
    net.head_w_ = head_w_;
    net.params.clear();
    for (const auto& p : params)
      net.params.push_back({p.name, p.value.template cast<S2>(), p.decay,
                            p.clamp_floor, -1});
    return net;
  }

  // Runs the network on a batch: either static images N x C x H x W (the
  // encoder lifts them onto the time axis) or frame sequences
  // N x T x C x H x W (the stem convolution is applied per frame).
  // Returns head outputs: N x K logits, or N x (5+K) x S x S detection maps.
  TensorT<S> forward(TapeT<S>& tp, const TensorT<S>& batch,
                     const ForwardOptionsT<S>& opt = {}) {
    bind(tp);
    int neuron_layer = 0;
    TensorT<S> currents = encode(tp, batch);
    TensorT<S> spikes = spiking_layer(tp, currents, neuron_layer++, opt);
    for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi) {
      const BlockSpec& blk = spec.blocks[bi];
      const TensorT<S>& w = bound_[conv_w_[bi + 1]];
      const TensorT<S>& b = bound_[conv_w_[bi + 1] + 1];
      const std::int64_t pad = derive_pad(blk.kh, blk.stride);
      TensorT<S> cur =
          spec.conv_mode == ConvMode::Shared2D
              ? block_forward_shared2d(tp, spikes, w, b, blk.stride, pad)
              : block_forward_3d(tp, spikes, w, b, blk.stride, pad);
      TensorT<S> out = spiking_layer(tp, cur, neuron_layer++, opt);
      if (blk.residual)
        out = sew_add(tp, out, spikes, /*check_integer=*/!opt.smooth_spike);
      spikes = std::move(out);
    }
    return head_forward(tp, spikes, opt);
  }

  // Head on a spike train; exposed for tests.
  TensorT<S> head_forward(TapeT<S>& tp, const TensorT<S>& spikes,
                          const ForwardOptionsT<S>& opt = {}) {
    (void)opt;
    const TensorT<S>& w = bound_[head_w_];
    const TensorT<S>& b = bound_[head_w_ + 1];
    if (spec.head.kind == HeadKind::Classification) {
      TensorT<S> pooled = reduce_mean(tp, reduce_mean(tp, spikes, 4), 3);
      const std::int64_t n = pooled.dim(0), t = pooled.dim(1),
                         c = pooled.dim(2);
      TensorT<S> flat = reshape(tp, pooled, {n * t, c});
      TensorT<S> logits = linear(tp, flat, w, b);
      return rate_decode(tp, reshape(tp, logits, {n, t, logits.dim(1)}));
    }
    const std::int64_t n = spikes.dim(0), t = spikes.dim(1);
    TensorT<S> flat =
        reshape(tp, spikes, {n * t, spikes.dim(2), spikes.dim(3),
                             spikes.dim(4)});
    TensorT<S> maps = conv2d(tp, flat, w, b, /*stride=*/1, /*pad=*/0);
    TensorT<S> grid5 = reshape(
        tp, maps, {n, t, maps.dim(1), maps.dim(2), maps.dim(3)});
    if (spec.head.grid > maps.dim(2) || spec.head.grid > maps.dim(3))
      fail("head_forward: grid " + std::to_string(spec.head.grid) +
           " larger than feature map " + shape_str(maps.shape));
    TensorT<S> pooled = adaptive_avg_pool_hw(tp, grid5, spec.head.grid);
    return rate_decode(tp, pooled);
  }

  // Pre-neuron encoder output; exposed for tests.
  TensorT<S> encode(TapeT<S>& tp, const TensorT<S>& batch) {
    const TensorT<S>& w = bound_[conv_w_[0]];
    const TensorT<S>& b = bound_[conv_w_[0] + 1];
    const std::int64_t pad = derive_pad(spec.stem.kernel, spec.stem.stride);
    if (batch.rank() == 5) {
      // Frame sequences carry their own time axis; the stem runs per frame.
      if (spec.encoder.kind != EncoderKind::Direct)
        fail("encode: sequence input supports direct coding only");
      if (batch.dim(1) != spec.t_len)
        fail("encode: sequence has T=" + std::to_string(batch.dim(1)) +
             " but the network was built for T=" + std::to_string(spec.t_len));
      return block_forward_shared2d(tp, batch, w, b, spec.stem.stride, pad);
    }
    if (batch.rank() != 4)
      fail("encode: expected rank 4 or 5 input, got " +
           shape_str(batch.shape));
    switch (spec.encoder.kind) {
      case EncoderKind::Direct: {
        TensorT<S> features = conv2d(tp, batch, w, b, spec.stem.stride, pad);
        return direct_encode(tp, features, spec.t_len);
      }
      case EncoderKind::TTFS: {
        TensorT<S> train = ttfs_encode(batch, spec.t_len);
        return block_forward_shared2d(tp, train, w, b, spec.stem.stride, pad);
      }
      case EncoderKind::Hybrid: {
        TensorT<S> features = conv2d(tp, batch, w, b, spec.stem.stride, pad);
        const TensorT<S>& tw = bound_[ttfs_w_];
        const TensorT<S>& tb = bound_[ttfs_w_ + 1];
        TensorT<S> train = ttfs_encode(batch, spec.encoder.t_ttfs);
        TensorT<S> branch = block_forward_shared2d(tp, train, tw, tb,
                                                   spec.stem.stride, pad);
        TensorT<S> dir = direct_encode(tp, features, spec.encoder.t_direct);
        return concat_time(tp, dir, branch);
      }
    }
    fail("encode: unknown encoder kind");
  }

  // Registers every parameter as a leaf on the tape. Called by forward();
  // only needed directly when driving layers by hand.
  void bind(TapeT<S>& tp) {
    bound_.clear();
    bound_.reserve(params.size());
    for (auto& p : params) {
      TensorT<S> t = tp.leaf(p.value);
      p.node = t.node;
      bound_.push_back(std::move(t));
    }
  }

  // NeuronParams for layer `idx` wired to the tape-bound tensors.
  NeuronParamsT<S> layer_neuron(int idx) const {
    NeuronParamsT<S> p;
    p.v_th = static_cast<S>(spec.neuron.v_th);
    p.v_reset = static_cast<S>(spec.neuron.v_reset);
    switch (spec.neuron.kind) {
      case NeuronKind::IF:
        p.kind = NeuronKind::IF;
        break;
      case NeuronKind::LIF:
        p.kind = NeuronKind::LIF;
        p.tau = static_cast<S>(spec.neuron.tau);
        break;
      case NeuronKind::Parametric: {
        p.kind = NeuronKind::Parametric;
        p.threshold_rule = ThresholdRule::Scaled;
        p.reset_rule = ResetRule::Soft;
        const int base = neuron_p_[static_cast<std::size_t>(idx)];
        p.l = bound_[static_cast<std::size_t>(base)];
        p.i = bound_[static_cast<std::size_t>(base) + 1];
        p.v_re = bound_[static_cast<std::size_t>(base) + 2];
        break;
      }
    }
    return p;
  }

  SurrogateConfigT<S> surrogate(bool smooth) const {
    SurrogateConfigT<S> sg;
    sg.kind = spec.neuron.surrogate;
    sg.alpha = static_cast<S>(spec.neuron.alpha);
    sg.smooth_forward = smooth;
    return sg;
  }

  int neuron_layer_count() const { return static_cast<int>(neuron_p_.size()); }

  void validate_and_plan() {
    spec.encoder.t_total = spec.t_len;
    if (spec.encoder.kind == EncoderKind::Hybrid) spec.encoder.validate();
    if (spec.t_len < 1) fail("network: T must be >= 1");
    std::int64_t h = out_extent(spec.in_h, spec.stem.kernel, spec.stem.stride);
    std::int64_t w = out_extent(spec.in_w, spec.stem.kernel, spec.stem.stride);
    std::int64_t c = spec.stem.out_channels;
    for (const auto& blk : spec.blocks) {
      if (blk.out_channels < 1) fail("network: block out_channels must be >= 1");
      if (spec.conv_mode == ConvMode::Conv3D && blk.kt % 2 == 0)
        fail("network: temporal kernel width must be odd under Conv3D");
      const std::int64_t nh = out_extent(h, blk.kh, blk.stride);
      const std::int64_t nw = out_extent(w, blk.kw, blk.stride);
      if (blk.residual && (blk.out_channels != c || blk.stride != 1))
        fail("network: residual block must preserve shape (channels " +
             std::to_string(c) + "->" + std::to_string(blk.out_channels) +
             ", stride " + std::to_string(blk.stride) + ")");
      h = nh;
      w = nw;
      c = blk.out_channels;
    }
    if (spec.head.kind == HeadKind::Detection) {
      if (spec.head.grid > h || spec.head.grid > w)
        fail("network: detection grid " + std::to_string(spec.head.grid) +
             " larger than final feature map " + std::to_string(h) + "x" +
             std::to_string(w));
      if (spec.head.num_classes < 1) fail("network: need >= 1 class");
    }
    final_channels_ = c;
    final_h_ = h;
    final_w_ = w;
  }

 private:
  template <class>
  friend class NetworkT;

  std::vector<int> conv_w_;    // params index of each conv weight (bias at +1)
  std::vector<int> neuron_p_;  // params index of each layer's l (i, v_re follow)
  int ttfs_w_ = -1;
  int head_w_ = -1;
  std::int64_t final_channels_ = 0, final_h_ = 0, final_w_ = 0;
  std::vector<TensorT<S>> bound_;

  static std::int64_t out_extent(std::int64_t in, std::int64_t k,
                                 std::int64_t s) {
    const std::int64_t pad = derive_pad(k, s);
    const std::int64_t span = in + 2 * pad - k;
    if (span < 0 || span % s != 0)
      fail("network: extent " + std::to_string(in) + " with kernel " +
           std::to_string(k) + ", stride " + std::to_string(s) +
           ", pad " + std::to_string(pad) + " has no integral output size");
    return span / s + 1;
  }

  TensorT<S> spiking_layer(TapeT<S>& tp, const TensorT<S>& currents, int idx,
                           const ForwardOptionsT<S>& opt) {
    TensorT<S> x = currents;
    if (opt.shuffle)
      x = shuffle_time(tp, x,
                       Rng::mix(opt.shuffle_seed ^
                                Rng::mix(static_cast<std::uint64_t>(idx) ^
                                         Rng::mix(opt.shuffle_salt + 1))));
    if (opt.capture_currents) opt.capture_currents->push_back(x);
    NeuronParamsT<S> p = layer_neuron(idx);
    TensorT<S> s = neuron_forward(
        tp, x, p, spec.recurrence ? InitMode::Recurrence : InitMode::Zero,
        surrogate(opt.smooth_spike));
    if (opt.capture_spikes) opt.capture_spikes->push_back(s);
    return s;
  }

  void add_conv_param(const std::string& name, Shape kshape,
                      std::int64_t fan_in, Rng& rng, double bias_value = 0.0) {
    TensorT<S> w = TensorT<S>::zeros(kshape);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.data())
      v = static_cast<S>(rng.uniform(-bound, bound));
    params.push_back({name + ".weight", std::move(w), true, false, -1});
    params.push_back({name + ".bias",
                      TensorT<S>::full({kshape[0]},
                                       static_cast<S>(bias_value)),
                      false, false, -1});
  }

  // One entry per neuron layer: the params index of l (i and v_re follow),
  // or -1 when the neuron kind carries no learnables.
  void add_neuron_params(const std::string& prefix) {
    if (spec.neuron.kind != NeuronKind::Parametric) {
      neuron_p_.push_back(-1);
      return;
    }
    neuron_p_.push_back(static_cast<int>(params.size()));
    params.push_back({prefix + ".l", TensorT<S>::full({spec.t_len}, S(0.5)),
                      false, false, -1});
    params.push_back({prefix + ".i", TensorT<S>::full({spec.t_len}, S(0.5)),
                      false, false, -1});
    params.push_back(
        {prefix + ".v_re", TensorT<S>::full({1}, S(1)), false, true, -1});
  }

  void init_params(std::uint64_t seed) {
    Rng rng(seed, 0xc5931cULL);
    params.clear();
    conv_w_.clear();
    neuron_p_.clear();
    const std::int64_t ks = spec.stem.kernel;
    conv_w_.push_back(static_cast<int>(params.size()));
    add_conv_param("stem.conv",
                   {spec.stem.out_channels, spec.in_channels, ks, ks},
                   spec.in_channels * ks * ks, rng, spec.bias_init);
    if (spec.encoder.kind == EncoderKind::Hybrid) {
      ttfs_w_ = static_cast<int>(params.size());
      add_conv_param("stem.ttfs",
                     {spec.stem.out_channels, spec.in_channels, ks, ks},
                     spec.in_channels * ks * ks, rng, spec.bias_init);
    }
    add_neuron_params("stem.neuron");

    std::int64_t c = spec.stem.out_channels;
    for (std::size_t bi = 0; bi < spec.blocks.size(); ++bi) {
      const BlockSpec& blk = spec.blocks[bi];
      const std::string name = "block" + std::to_string(bi) + ".conv";
      conv_w_.push_back(static_cast<int>(params.size()));
      if (spec.conv_mode == ConvMode::Shared2D)
        add_conv_param(name, {blk.out_channels, c, blk.kh, blk.kw},
                       c * blk.kh * blk.kw, rng, spec.bias_init);
      else
        add_conv_param(name, {blk.out_channels, c, blk.kt, blk.kh, blk.kw},
                       c * blk.kt * blk.kh * blk.kw, rng, spec.bias_init);
      add_neuron_params("block" + std::to_string(bi) + ".neuron");
      c = blk.out_channels;
    }

    head_w_ = static_cast<int>(params.size());
    if (spec.head.kind == HeadKind::Classification) {
      TensorT<S> w = TensorT<S>::zeros({spec.head.num_classes, c});
      const double bound = std::sqrt(6.0 / static_cast<double>(c));
      for (auto& v : w.data())
        v = static_cast<S>(rng.uniform(-bound, bound));
      params.push_back({"head.fc.weight", std::move(w), true, false, -1});
      params.push_back({"head.fc.bias",
                        TensorT<S>::zeros({spec.head.num_classes}), false,
                        false, -1});
    } else {
      const std::int64_t out = 5 + spec.head.num_classes;
      add_conv_param("head.conv", {out, c, 1, 1}, c, rng);
    }
  }
};

using Network = NetworkT<float>;

}  // namespace cspike
