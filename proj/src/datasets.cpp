#include "datasets.hpp"

#include <algorithm>
#include <cmath>

#include "cspike/random.hpp"
#include "sha1.hpp"

namespace cspike {

namespace {

template <class T>
void hash_pod_vector(Sha1& h, const std::vector<T>& v) {
  h.update(v.data(), v.size() * sizeof(T));
}

struct Placed {
  std::int64_t x0, y0, x1, y1;  // pixel units, half-open
};

// 1px separation gap between objects.
bool overlaps(const std::vector<Placed>& placed, std::int64_t x0,
              std::int64_t y0, std::int64_t x1, std::int64_t y1) {
  for (const auto& p : placed)
    if (!(x1 + 1 <= p.x0 || p.x1 + 1 <= x0 || y1 + 1 <= p.y0 ||
          p.y1 + 1 <= y0))
      return true;
  return false;
}

}  // namespace

Tensor TemporalOrderDataset::batch(const std::vector<std::int64_t>& idx) const {
  const std::int64_t per = t_len * size * size;
  Tensor out = Tensor::zeros(
      {static_cast<std::int64_t>(idx.size()), t_len, 1, size, size});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(frames.data() + idx[i] * per, per,
                out.data().data() + static_cast<std::int64_t>(i) * per);
  return out;
}

std::string TemporalOrderDataset::content_hash() const {
  Sha1 h;
  h.update("temporal_order");
  std::int64_t meta[3] = {n, t_len, size};
  h.update(meta, sizeof(meta));
  hash_pod_vector(h, frames);
  hash_pod_vector(h, labels);
  return h.hex_digest();
}

TemporalOrderDataset gen_temporal_order_dataset(std::int64_t n,
                                                std::int64_t t_len,
                                                std::int64_t size,
                                                std::uint64_t seed) {
  if (t_len < 4)
    fail("gen_temporal_order_dataset: T must be >= 4 so flash times can be "
         "scheduled");
  if (size < 8) fail("gen_temporal_order_dataset: size must be >= 8");
  TemporalOrderDataset ds;
  ds.n = n;
  ds.t_len = t_len;
  ds.size = size;
  ds.frames.assign(static_cast<std::size_t>(n * t_len * size * size), 0.0f);
  ds.labels.assign(static_cast<std::size_t>(n), 0);
  const std::int64_t ay = size / 4, ax = size / 4;
  const std::int64_t by = (3 * size) / 4, bx = (3 * size) / 4;
  for (std::int64_t i = 0; i < n; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    // Flashes land close together (gap 1 or 2) at a random base time, so the
    // class is carried by the local event order rather than by the absolute
    // position of either flash.
    const std::int64_t gap = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t lo =
        static_cast<std::int64_t>(rng.below(uint64_t(t_len - gap)));
    const std::int64_t hi = lo + gap;
    const int label = static_cast<int>(i % 2);  // exact 50/50 balance
    const std::int64_t ta = label == 0 ? lo : hi;  // label 0: A first
    const std::int64_t tb = label == 0 ? hi : lo;
    float* base = ds.frames.data() + i * t_len * size * size;
    base[(ta * size + ay) * size + ax] = 1.0f;
    base[(tb * size + by) * size + bx] = 1.0f;
    ds.labels[static_cast<std::size_t>(i)] = label;
  }
  return ds;
}

Tensor ShapesDataset::batch(const std::vector<std::int64_t>& idx) const {
  const std::int64_t per = size * size;
  Tensor out =
      Tensor::zeros({static_cast<std::int64_t>(idx.size()), 1, size, size});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(pixels.data() + idx[i] * per, per,
                out.data().data() + static_cast<std::int64_t>(i) * per);
  return out;
}

std::string ShapesDataset::content_hash() const {
  Sha1 h;
  h.update("shapes");
  std::int64_t meta[2] = {n, size};
  h.update(meta, sizeof(meta));
  hash_pod_vector(h, pixels);
  for (const auto& img : boxes)
    for (const auto& b : img) {
      double vals[4] = {b.x_min, b.y_min, b.x_max, b.y_max};
      h.update(vals, sizeof(vals));
      h.update(&b.class_id, sizeof(b.class_id));
    }
  return h.hex_digest();
}

ShapesDataset gen_shapes_dataset(std::int64_t n, std::int64_t size,
                                 std::uint64_t seed) {
  if (size < 32) fail("gen_shapes_dataset: size must be >= 32");
  ShapesDataset ds;
  ds.n = n;
  ds.size = size;
  ds.pixels.assign(static_cast<std::size_t>(n * size * size), 0.0f);
  ds.boxes.resize(static_cast<std::size_t>(n));

  for (std::int64_t i = 0; i < n; ++i) {
    float* img = ds.pixels.data() + i * size * size;
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(seed, static_cast<std::uint64_t>(i) * 1315423911ULL + attempt);
      // Noise background.
      for (std::int64_t k = 0; k < size * size; ++k)
        img[k] = static_cast<float>(rng.uniform(0.0, 0.25));
      const std::int64_t count = rng.uniform_int(1, 3);
      std::vector<Placed> placed;
      std::vector<DetectionBox> gts;
      bool ok = true;
      for (std::int64_t obj = 0; obj < count && ok; ++obj) {
        bool put = false;
        for (int retry = 0; retry < 20 && !put; ++retry) {
          const bool disk = rng.coin();
          const double intensity = rng.uniform(0.75, 1.0);
          std::int64_t x0, y0, x1, y1;
          if (disk) {
            const std::int64_t rad = rng.uniform_int(3, size / 5);
            const std::int64_t cx = rng.uniform_int(rad + 1, size - rad - 2);
            const std::int64_t cy = rng.uniform_int(rad + 1, size - rad - 2);
            x0 = cx - rad;
            y0 = cy - rad;
            x1 = cx + rad + 1;
            y1 = cy + rad + 1;
            if (!overlaps(placed, x0, y0, x1, y1)) {
              for (std::int64_t r = y0; r < y1; ++r)
                for (std::int64_t c = x0; c < x1; ++c)
                  if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= rad * rad)
                    img[r * size + c] = static_cast<float>(intensity);
              put = true;
            }
          } else {
            const std::int64_t w = rng.uniform_int(6, 2 * (size / 5));
            const std::int64_t h = rng.uniform_int(6, 2 * (size / 5));
            x0 = rng.uniform_int(1, size - w - 1);
            y0 = rng.uniform_int(1, size - h - 1);
            x1 = x0 + w;
            y1 = y0 + h;
            if (!overlaps(placed, x0, y0, x1, y1)) {
              for (std::int64_t r = y0; r < y1; ++r)
                for (std::int64_t c = x0; c < x1; ++c)
                  img[r * size + c] = static_cast<float>(intensity);
              put = true;
            }
          }
          if (put) {
            placed.push_back({x0, y0, x1, y1});
            DetectionBox b;
            b.x_min = double(x0) / double(size);
            b.y_min = double(y0) / double(size);
            b.x_max = double(x1) / double(size);
            b.y_max = double(y1) / double(size);
            b.confidence = 1.0;
            b.class_id = disk ? 1 : 0;
            validate_box(b);
            gts.push_back(b);
          }
        }
        if (!put) ok = false;  // bounded retries exhausted
      }
      if (ok) {
        ds.boxes[static_cast<std::size_t>(i)] = std::move(gts);
        break;  // sample accepted; otherwise regenerate with fresh randomness
      }
    }
  }
  return ds;
}

}  // namespace cspike
