#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cspike/tensor.hpp"
#include "detection.hpp"

namespace cspike {

// Two-flash temporal-order task. Every sample is a T-frame size x size
// sequence: pixel A lights up for one frame, pixel B for another, at distinct
// times. Label 0 iff A flashes before B. Both classes have identical
// per-pixel time-sums, so any rate-only classifier is at chance.
struct TemporalOrderDataset {
  std::int64_t n = 0, t_len = 0, size = 0;
  std::vector<float> frames;  // n * T * size * size, C = 1
  std::vector<int> labels;

  // Batch tensor N x T x 1 x size x size for the given sample indices.
  Tensor batch(const std::vector<std::int64_t>& idx) const;
  std::string content_hash() const;
};

TemporalOrderDataset gen_temporal_order_dataset(std::int64_t n,
                                                std::int64_t t_len,
                                                std::int64_t size,
                                                std::uint64_t seed);

// Grayscale images with 1-3 non-overlapping bright rectangles or disks on a
// dim noise background; classes {rectangle = 0, disk = 1}; boxes normalized.
struct ShapesDataset {
  std::int64_t n = 0, size = 0;
  std::vector<float> pixels;  // n * size * size, C = 1
  std::vector<std::vector<DetectionBox>> boxes;  // confidence unused (1.0)

  Tensor batch(const std::vector<std::int64_t>& idx) const;  // N x 1 x s x s
  std::string content_hash() const;
};

ShapesDataset gen_shapes_dataset(std::int64_t n, std::int64_t size,
                                 std::uint64_t seed);

// Minimum contrast between object pixels and the background the generator
// guarantees (object intensities start at 0.75, background tops out at 0.25).
inline double shapes_contrast_margin() { return 0.3; }

}  // namespace cspike
