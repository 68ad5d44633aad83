#pragma once

#include <cstdlib>
#include <thread>

#include "cspike/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cspike {

// Worker count for the batch-parallel convolution loops. Overridable through
// CSPIKE_THREADS; all other code paths are single-threaded.
inline int thread_count() {
  static const int n = [] {
    if (const char* env = std::getenv("CSPIKE_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return n;
}

namespace detail {

inline std::int64_t conv_extent(std::int64_t in, std::int64_t k,
                                std::int64_t stride, std::int64_t pad,
                                const char* op, const char* axis) {
  if (stride < 1) fail(std::string(op) + ": stride must be >= 1");
  if (pad < 0) fail(std::string(op) + ": negative padding");
  const std::int64_t span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0)
    fail(std::string(op) + ": non-integral output extent along " + axis +
         " (in=" + std::to_string(in) + ", k=" + std::to_string(k) +
         ", stride=" + std::to_string(stride) +
         ", pad=" + std::to_string(pad) + ")");
  return span / stride + 1;
}

}  // namespace detail

// 2D cross-correlation with zero padding.
//   x: N x C x H x W,  k: Co x Ci x kH x kW,  b: Co  ->  N x Co x H' x W'
// The inner accumulation order (ci, kh, kw) is fixed so results are
// bit-reproducible; parallelism is over the batch axis only.
template <class S>
TensorT<S> conv2d(TapeT<S>& tp, const TensorT<S>& x, const TensorT<S>& k,
                  const TensorT<S>& b, std::int64_t stride, std::int64_t pad) {
  if (x.rank() != 4 || k.rank() != 4 || b.rank() != 1)
    fail("conv2d: expected ranks 4/4/1, got " + shape_str(x.shape) + ", " +
         shape_str(k.shape) + ", " + shape_str(b.shape));
  const std::int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != ci)
    fail("conv2d: input channels " + std::to_string(ci) +
         " do not match kernel " + shape_str(k.shape));
  if (b.dim(0) != co)
    fail("conv2d: bias length " + std::to_string(b.dim(0)) +
         " does not match output channels " + std::to_string(co));
  const std::int64_t ho = detail::conv_extent(h, kh, stride, pad, "conv2d", "H");
  const std::int64_t wo = detail::conv_extent(w, kw, stride, pad, "conv2d", "W");

  TensorT<S> out = TensorT<S>::zeros({n, co, ho, wo});
  const S* xv = x.data().data();
  const S* kv = k.data().data();
  const S* bv = b.data().data();
  S* ov = out.data().data();

  const std::int64_t work = n * co * ho * wo * ci * kh * kw;
#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_count()) schedule(static) \
    if (work > 16384 && thread_count() > 1)
#endif
  for (std::int64_t in = 0; in < n; ++in) {
    for (std::int64_t oc = 0; oc < co; ++oc)
      for (std::int64_t oh = 0; oh < ho; ++oh) {
        const std::int64_t h0 = oh * stride - pad;
        const std::int64_t kh_lo = h0 < 0 ? -h0 : 0;
        const std::int64_t kh_hi = h0 + kh > h ? h - h0 : kh;
        for (std::int64_t ow = 0; ow < wo; ++ow) {
          const std::int64_t w0 = ow * stride - pad;
          const std::int64_t kw_lo = w0 < 0 ? -w0 : 0;
          const std::int64_t kw_hi = w0 + kw > w ? w - w0 : kw;
          S acc = bv[oc];
          for (std::int64_t c = 0; c < ci; ++c) {
            const S* xc = xv + (in * ci + c) * h * w;
            const S* kc = kv + (oc * ci + c) * kh * kw;
            for (std::int64_t r = kh_lo; r < kh_hi; ++r) {
              const S* xr = xc + (h0 + r) * w + w0;
              const S* kr = kc + r * kw;
              for (std::int64_t q = kw_lo; q < kw_hi; ++q)
                acc += xr[q] * kr[q];
            }
          }
          ov[((in * co + oc) * ho + oh) * wo + ow] = acc;
        }
      }
  }
  (void)work;

  tp.record(out, {x.node, k.node, b.node},
            [x, k, b, n, ci, h, w, co, kh, kw, ho, wo, stride,
             pad](const auto& g, TapeT<S>& t) {
    const S* xv = x.data().data();
    const S* kv = k.data().data();
    const S* gv = g.data();
    typename TapeT<S>::Grad* gxp =
        x.node >= 0 ? &t.grad_acc(x.node, x.numel()) : nullptr;
    typename TapeT<S>::Grad* gkp =
        k.node >= 0 ? &t.grad_acc(k.node, k.numel()) : nullptr;
    typename TapeT<S>::Grad* gbp =
        b.node >= 0 ? &t.grad_acc(b.node, b.numel()) : nullptr;
    // Kernel/bias gradients accumulate into per-sample buffers, reduced in
    // ascending sample order afterwards, so the result does not depend on
    // the thread count.
    std::vector<S> gk_local, gb_local;
    if (gkp) gk_local.assign(static_cast<std::size_t>(n * co * ci * kh * kw), S(0));
    if (gbp) gb_local.assign(static_cast<std::size_t>(n * co), S(0));
#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_count()) schedule(static) \
    if (n > 1 && thread_count() > 1)
#endif
    for (std::int64_t in = 0; in < n; ++in) {
      S* gkn = gkp ? gk_local.data() + in * co * ci * kh * kw : nullptr;
      S* gbn = gbp ? gb_local.data() + in * co : nullptr;
      for (std::int64_t oc = 0; oc < co; ++oc)
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t h0 = oh * stride - pad;
          const std::int64_t kh_lo = h0 < 0 ? -h0 : 0;
          const std::int64_t kh_hi = h0 + kh > h ? h - h0 : kh;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t w0 = ow * stride - pad;
            const std::int64_t kw_lo = w0 < 0 ? -w0 : 0;
            const std::int64_t kw_hi = w0 + kw > w ? w - w0 : kw;
            const S go = gv[((in * co + oc) * ho + oh) * wo + ow];
            if (gbn) gbn[oc] += go;
            for (std::int64_t c = 0; c < ci; ++c) {
              const S* xc = xv + (in * ci + c) * h * w;
              const S* kc = kv + (oc * ci + c) * kh * kw;
              S* gxc = gxp ? gxp->data() + (in * ci + c) * h * w : nullptr;
              S* gkc = gkn ? gkn + (oc * ci + c) * kh * kw : nullptr;
              for (std::int64_t r = kh_lo; r < kh_hi; ++r)
                for (std::int64_t q = kw_lo; q < kw_hi; ++q) {
                  const std::int64_t xi = (h0 + r) * w + (w0 + q);
                  if (gxc) gxc[xi] += go * kc[r * kw + q];
                  if (gkc) gkc[r * kw + q] += go * xc[xi];
                }
            }
          }
        }
    }
    if (gkp)
      for (std::int64_t in = 0; in < n; ++in) {
        const S* src = gk_local.data() + in * co * ci * kh * kw;
        for (std::int64_t i = 0; i < co * ci * kh * kw; ++i)
          (*gkp)[static_cast<std::size_t>(i)] += src[i];
      }
    if (gbp)
      for (std::int64_t in = 0; in < n; ++in)
        for (std::int64_t oc = 0; oc < co; ++oc)
          (*gbp)[static_cast<std::size_t>(oc)] += gb_local[in * co + oc];
  });
  return out;
}

// 3D cross-correlation over (T, H, W) jointly, zero padding on all three.
//   x: N x C x T x H x W,  k: Co x Ci x kT x kH x kW,  b: Co.
template <class S>
TensorT<S> conv3d(TapeT<S>& tp, const TensorT<S>& x, const TensorT<S>& k,
                  const TensorT<S>& b, std::int64_t st, std::int64_t sh,
                  std::int64_t sw, std::int64_t pt, std::int64_t ph,
                  std::int64_t pw) {
  if (x.rank() != 5 || k.rank() != 5 || b.rank() != 1)
    fail("conv3d: expected ranks 5/5/1, got " + shape_str(x.shape) + ", " +
         shape_str(k.shape) + ", " + shape_str(b.shape));
  const std::int64_t n = x.dim(0), ci = x.dim(1), td = x.dim(2), h = x.dim(3),
                     w = x.dim(4);
  const std::int64_t co = k.dim(0), kt = k.dim(2), kh = k.dim(3),
                     kw = k.dim(4);
  if (k.dim(1) != ci)
    fail("conv3d: input channels " + std::to_string(ci) +
         " do not match kernel " + shape_str(k.shape));
  if (b.dim(0) != co)
    fail("conv3d: bias length " + std::to_string(b.dim(0)) +
         " does not match output channels " + std::to_string(co));
  const std::int64_t to = detail::conv_extent(td, kt, st, pt, "conv3d", "T");
  const std::int64_t ho = detail::conv_extent(h, kh, sh, ph, "conv3d", "H");
  const std::int64_t wo = detail::conv_extent(w, kw, sw, pw, "conv3d", "W");

  TensorT<S> out = TensorT<S>::zeros({n, co, to, ho, wo});
  const S* xv = x.data().data();
  const S* kv = k.data().data();
  const S* bv = b.data().data();
  S* ov = out.data().data();

#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_count()) schedule(static) \
    if (n > 1 && thread_count() > 1)
#endif
  for (std::int64_t in = 0; in < n; ++in) {
    for (std::int64_t oc = 0; oc < co; ++oc)
      for (std::int64_t ot = 0; ot < to; ++ot) {
        const std::int64_t t0 = ot * st - pt;
        const std::int64_t kt_lo = t0 < 0 ? -t0 : 0;
        const std::int64_t kt_hi = t0 + kt > td ? td - t0 : kt;
        for (std::int64_t oh = 0; oh < ho; ++oh) {
          const std::int64_t h0 = oh * sh - ph;
          const std::int64_t kh_lo = h0 < 0 ? -h0 : 0;
          const std::int64_t kh_hi = h0 + kh > h ? h - h0 : kh;
          for (std::int64_t ow = 0; ow < wo; ++ow) {
            const std::int64_t w0 = ow * sw - pw;
            const std::int64_t kw_lo = w0 < 0 ? -w0 : 0;
            const std::int64_t kw_hi = w0 + kw > w ? w - w0 : kw;
            S acc = bv[oc];
            for (std::int64_t c = 0; c < ci; ++c)
              for (std::int64_t u = kt_lo; u < kt_hi; ++u) {
                const S* xc = xv + (((in * ci + c) * td + t0 + u) * h) * w;
                const S* kc = kv + (((oc * ci + c) * kt + u) * kh) * kw;
                for (std::int64_t r = kh_lo; r < kh_hi; ++r) {
                  const S* xr = xc + (h0 + r) * w + w0;
                  const S* kr = kc + r * kw;
                  for (std::int64_t q = kw_lo; q < kw_hi; ++q)
                    acc += xr[q] * kr[q];
                }
              }
            ov[(((in * co + oc) * to + ot) * ho + oh) * wo + ow] = acc;
          }
        }
      }
  }

  tp.record(out, {x.node, k.node, b.node},
            [x, k, b, n, ci, td, h, w, co, kt, kh, kw, to, ho, wo, st, sh, sw,
             pt, ph, pw](const auto& g, TapeT<S>& t) {
    const S* xv = x.data().data();
    const S* kv = k.data().data();
    const S* gv = g.data();
    typename TapeT<S>::Grad* gxp =
        x.node >= 0 ? &t.grad_acc(x.node, x.numel()) : nullptr;
    typename TapeT<S>::Grad* gkp =
        k.node >= 0 ? &t.grad_acc(k.node, k.numel()) : nullptr;
    typename TapeT<S>::Grad* gbp =
        b.node >= 0 ? &t.grad_acc(b.node, b.numel()) : nullptr;
    const std::int64_t ksz = co * ci * kt * kh * kw;
    std::vector<S> gk_local, gb_local;
    if (gkp) gk_local.assign(static_cast<std::size_t>(n * ksz), S(0));
    if (gbp) gb_local.assign(static_cast<std::size_t>(n * co), S(0));
#ifdef _OPENMP
#pragma omp parallel for num_threads(thread_count()) schedule(static) \
    if (n > 1 && thread_count() > 1)
#endif
    for (std::int64_t in = 0; in < n; ++in) {
      S* gkn = gkp ? gk_local.data() + in * ksz : nullptr;
      S* gbn = gbp ? gb_local.data() + in * co : nullptr;
      for (std::int64_t oc = 0; oc < co; ++oc)
        for (std::int64_t ot = 0; ot < to; ++ot) {
          const std::int64_t t0 = ot * st - pt;
          const std::int64_t kt_lo = t0 < 0 ? -t0 : 0;
          const std::int64_t kt_hi = t0 + kt > td ? td - t0 : kt;
          for (std::int64_t oh = 0; oh < ho; ++oh) {
            const std::int64_t h0 = oh * sh - ph;
            const std::int64_t kh_lo = h0 < 0 ? -h0 : 0;
            const std::int64_t kh_hi = h0 + kh > h ? h - h0 : kh;
            for (std::int64_t ow = 0; ow < wo; ++ow) {
              const std::int64_t w0 = ow * sw - pw;
              const std::int64_t kw_lo = w0 < 0 ? -w0 : 0;
              const std::int64_t kw_hi = w0 + kw > w ? w - w0 : kw;
              const S go = gv[(((in * co + oc) * to + ot) * ho + oh) * wo + ow];
              if (gbn) gbn[oc] += go;
              for (std::int64_t c = 0; c < ci; ++c)
                for (std::int64_t u = kt_lo; u < kt_hi; ++u) {
                  const S* xc = xv + ((in * ci + c) * td + t0 + u) * h * w;
                  const S* kc = kv + ((oc * ci + c) * kt + u) * kh * kw;
                  S* gxc = gxp ? gxp->data() + ((in * ci + c) * td + t0 + u) * h * w
                               : nullptr;
                  S* gkc = gkn ? gkn + ((oc * ci + c) * kt + u) * kh * kw
                               : nullptr;
                  for (std::int64_t r = kh_lo; r < kh_hi; ++r)
                    for (std::int64_t q = kw_lo; q < kw_hi; ++q) {
                      const std::int64_t xi = (h0 + r) * w + (w0 + q);
                      const std::int64_t ki = r * kw + q;
                      if (gxc) gxc[xi] += go * kc[ki];
                      if (gkc) gkc[ki] += go * xc[xi];
                    }
                }
            }
          }
        }
    }
    if (gkp)
      for (std::int64_t in = 0; in < n; ++in) {
        const S* src = gk_local.data() + in * ksz;
        for (std::int64_t i = 0; i < ksz; ++i)
          (*gkp)[static_cast<std::size_t>(i)] += src[i];
      }
    if (gbp)
      for (std::int64_t in = 0; in < n; ++in)
        for (std::int64_t oc = 0; oc < co; ++oc)
          (*gbp)[static_cast<std::size_t>(oc)] += gb_local[in * co + oc];
  });
  return out;
}

// Adaptive average pooling of the two trailing spatial axes of a rank-5
// tensor down to grid x grid, with PyTorch-style floor/ceil bin edges.
template <class S>
TensorT<S> adaptive_avg_pool_hw(TapeT<S>& tp, const TensorT<S>& x,
                                std::int64_t grid) {
  if (x.rank() != 5)
    fail("adaptive_avg_pool_hw: expected rank 5, got " + shape_str(x.shape));
  const std::int64_t h = x.dim(3), w = x.dim(4);
  if (grid < 1 || grid > h || grid > w)
    fail("adaptive_avg_pool_hw: grid " + std::to_string(grid) +
         " larger than feature map " + shape_str(x.shape));
  const std::int64_t outer = x.dim(0) * x.dim(1) * x.dim(2);
  TensorT<S> out = TensorT<S>::zeros({x.dim(0), x.dim(1), x.dim(2), grid, grid});
  auto lo = [](std::int64_t i, std::int64_t in, std::int64_t g) {
    return (i * in) / g;
  };
  auto hi = [](std::int64_t i, std::int64_t in, std::int64_t g) {
    return ((i + 1) * in + g - 1) / g;
  };
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t gh = 0; gh < grid; ++gh)
      for (std::int64_t gw = 0; gw < grid; ++gw) {
        const std::int64_t h0 = lo(gh, h, grid), h1 = hi(gh, h, grid);
        const std::int64_t w0 = lo(gw, w, grid), w1 = hi(gw, w, grid);
        S acc = S(0);
        for (std::int64_t r = h0; r < h1; ++r)
          for (std::int64_t q = w0; q < w1; ++q)
            acc += xv[static_cast<std::size_t>((o * h + r) * w + q)];
        ov[static_cast<std::size_t>((o * grid + gh) * grid + gw)] =
            acc / static_cast<S>((h1 - h0) * (w1 - w0));
      }
  tp.record(out, {x.node},
            [x, outer, h, w, grid, lo, hi](const auto& g, TapeT<S>& t) {
              if (x.node < 0) return;
              auto& gx = t.grad_acc(x.node, x.numel());
              for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t gh = 0; gh < grid; ++gh)
                  for (std::int64_t gw = 0; gw < grid; ++gw) {
                    const std::int64_t h0 = lo(gh, h, grid),
                                       h1 = hi(gh, h, grid);
                    const std::int64_t w0 = lo(gw, w, grid),
                                       w1 = hi(gw, w, grid);
                    const S share =
                        g[static_cast<std::size_t>((o * grid + gh) * grid +
                                                   gw)] /
                        static_cast<S>((h1 - h0) * (w1 - w0));
                    for (std::int64_t r = h0; r < h1; ++r)
                      for (std::int64_t q = w0; q < w1; ++q)
                        gx[static_cast<std::size_t>((o * h + r) * w + q)] +=
                            share;
                  }
            });
  return out;
}

}  // namespace cspike
