#pragma once

#include <cmath>

#include "cspike/tensor.hpp"

namespace cspike {

enum class EncoderKind { Direct, TTFS, Hybrid };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::Direct;
  std::int64_t t_total = 1;
  std::int64_t t_direct = 0;  // Hybrid only
  std::int64_t t_ttfs = 0;    // Hybrid only

  void validate() const {
    if (t_total < 1) fail("encoder: T must be >= 1");
    if (kind == EncoderKind::Hybrid) {
      if (t_direct < 1 || t_ttfs < 1)
        fail("encoder: hybrid requires T_direct >= 1 and T_ttfs >= 1");
      if (t_direct + t_ttfs != t_total)
        fail("encoder: hybrid split " + std::to_string(t_direct) + "+" +
             std::to_string(t_ttfs) + " does not sum to T=" +
             std::to_string(t_total));
    }
  }

  // Default hybrid split when only T is given.
  static EncoderConfig hybrid(std::int64_t t_total) {
    EncoderConfig c;
    c.kind = EncoderKind::Hybrid;
    c.t_total = t_total;
    c.t_direct = (t_total + 1) / 2;
    c.t_ttfs = t_total / 2;
    c.validate();
    return c;
  }
};

// Direct coding: the (already convolved) feature map is repeated across all
// T time steps. Carries no temporal information by itself; the first neuron
// layer downstream turns it into spikes.
template <class S>
TensorT<S> direct_encode(TapeT<S>& tp, const TensorT<S>& features,
                         std::int64_t t_len) {
  if (features.rank() != 4)
    fail("direct_encode: expected N x C x H x W, got " +
         shape_str(features.shape));
  return repeat_time(tp, features, t_len);
}

// Time-to-first-spike coding: pixel intensity p in (0, 1] emits exactly one
// spike at step 1 + floor((1-p)*(T-1)) (1-based); p = 0 stays silent.
// Brighter pixels fire earlier. The result is a constant spike train, not a
// recorded op: gradients enter through the downstream branch convolution.
template <class S>
TensorT<S> ttfs_encode(const TensorT<S>& image, std::int64_t t_len) {
  if (image.rank() != 4)
    fail("ttfs_encode: expected N x C x H x W, got " +
         shape_str(image.shape));
  if (t_len < 1) fail("ttfs_encode: T must be >= 1");
  const std::int64_t n = image.dim(0);
  const std::int64_t inner = image.numel() / n;
  TensorT<S> out = TensorT<S>::zeros(
      {n, t_len, image.dim(1), image.dim(2), image.dim(3)});
  const auto& iv = image.data();
  auto& ov = out.data();
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t k = 0; k < inner; ++k) {
      S p = iv[static_cast<std::size_t>(s * inner + k)];
      if (p < S(0)) p = S(0);
      if (p > S(1)) p = S(1);
      if (p <= S(0)) continue;
      std::int64_t t = static_cast<std::int64_t>(
          std::floor((S(1) - p) * static_cast<S>(t_len - 1)));
      if (t < 0) t = 0;
      if (t > t_len - 1) t = t_len - 1;
      ov[static_cast<std::size_t>((s * t_len + t) * inner + k)] = S(1);
    }
  return out;
}

// 0-based spike step for one intensity, or -1 for silence. Mirror of
// ttfs_encode used by tests and the python bindings.
inline std::int64_t ttfs_spike_step(double p, std::int64_t t_len) {
  if (p > 1.0) p = 1.0;
  if (p <= 0.0) return -1;
  std::int64_t t =
      static_cast<std::int64_t>(std::floor((1.0 - p) * double(t_len - 1)));
  if (t < 0) t = 0;
  if (t > t_len - 1) t = t_len - 1;
  return t;
}

// Hybrid coding: direct-coded currents for the first T_direct steps,
// followed by the TTFS branch (already passed through its own channel-parity
// convolution) for the remaining T_ttfs steps.
template <class S>
TensorT<S> hybrid_encode(TapeT<S>& tp, const TensorT<S>& direct_features,
                         const TensorT<S>& ttfs_branch,
                         const EncoderConfig& cfg) {
  if (cfg.kind != EncoderKind::Hybrid)
    fail("hybrid_encode: config kind is not Hybrid");
  cfg.validate();
  if (ttfs_branch.rank() != 5 || ttfs_branch.dim(1) != cfg.t_ttfs)
    fail("hybrid_encode: ttfs branch shape " + shape_str(ttfs_branch.shape) +
         " does not provide T_ttfs=" + std::to_string(cfg.t_ttfs));
  TensorT<S> direct = direct_encode(tp, direct_features, cfg.t_direct);
  if (direct.dim(2) != ttfs_branch.dim(2) ||
      direct.dim(3) != ttfs_branch.dim(3) ||
      direct.dim(4) != ttfs_branch.dim(4))
    fail("hybrid_encode: branch extents disagree: " +
         shape_str(direct.shape) + " vs " + shape_str(ttfs_branch.shape));
  return concat_time(tp, direct, ttfs_branch);
}

}  // namespace cspike
