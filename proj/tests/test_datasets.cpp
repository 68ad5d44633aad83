#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "datasets.hpp"

using namespace cspike;

TEST_CASE("temporal-order dataset: construction invariants") {
  auto ds = gen_temporal_order_dataset(200, 8, 16, 3);
  CHECK(ds.frames.size() == 200u * 8 * 16 * 16);

  const std::int64_t ay = 4, ax = 4, by = 12, bx = 12;
  std::int64_t zeros_count = 0, ones_count = 0;
  for (std::int64_t i = 0; i < ds.n; ++i) {
    const float* sample = ds.frames.data() + i * 8 * 16 * 16;
    std::int64_t ta = -1, tb = -1;
    double total = 0;
    for (std::int64_t t = 0; t < 8; ++t) {
      const float* frame = sample + t * 16 * 16;
      if (frame[ay * 16 + ax] == 1.0f) ta = t;
      if (frame[by * 16 + bx] == 1.0f) tb = t;
      for (std::int64_t k = 0; k < 16 * 16; ++k) total += frame[k];
    }
    REQUIRE(ta >= 0);
    REQUIRE(tb >= 0);
    CHECK(ta != tb);                       // non-overlapping flash times
    CHECK(total == 2.0);                   // exactly two lit pixels
    const int label = ds.labels[std::size_t(i)];
    CHECK(label == (ta < tb ? 0 : 1));     // label 0 iff A flashes first
    (label == 0 ? zeros_count : ones_count) += 1;

    // Per-pixel time-sum is class-independent: 1 at A, 1 at B, 0 elsewhere.
    for (std::int64_t k = 0; k < 16 * 16; ++k) {
      double ts = 0;
      for (std::int64_t t = 0; t < 8; ++t) ts += sample[t * 16 * 16 + k];
      if (k == ay * 16 + ax || k == by * 16 + bx)
        CHECK(ts == 1.0);
      else
        CHECK(ts == 0.0);
    }
  }
  CHECK(zeros_count == ones_count);  // exact 50/50 balance

  CHECK_THROWS_AS(gen_temporal_order_dataset(10, 3, 16, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(gen_temporal_order_dataset(10, 8, 4, 1),
                  std::invalid_argument);
}

TEST_CASE("temporal-order dataset: regeneration is byte-identical") {
  auto a = gen_temporal_order_dataset(1000, 8, 16, 42);
  auto b = gen_temporal_order_dataset(1000, 8, 16, 42);
  CHECK(a.frames == b.frames);
  CHECK(a.labels == b.labels);
  CHECK(a.content_hash() == b.content_hash());
  auto c = gen_temporal_order_dataset(1000, 8, 16, 43);
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("temporal-order batch assembly") {
  auto ds = gen_temporal_order_dataset(10, 8, 16, 5);
  Tensor b = ds.batch({3, 7});
  CHECK(b.shape == Shape{2, 8, 1, 16, 16});
  for (std::int64_t t = 0; t < 8; ++t)
    for (std::int64_t k = 0; k < 256; ++k)
      CHECK(b.data()[std::size_t(t * 256 + k)] ==
            ds.frames[std::size_t((3 * 8 + t) * 256 + k)]);
}

TEST_CASE("shapes dataset: box and contrast contracts") {
  auto ds = gen_shapes_dataset(100, 32, 9);
  for (std::int64_t i = 0; i < ds.n; ++i) {
    const auto& boxes = ds.boxes[std::size_t(i)];
    REQUIRE(boxes.size() >= 1);
    REQUIRE(boxes.size() <= 3);
    const float* img = ds.pixels.data() + i * 32 * 32;
    double obj_sum = 0, bg_sum = 0;
    std::int64_t obj_n = 0, bg_n = 0;
    std::vector<char> inside(32 * 32, 0);
    for (const auto& b : boxes) {
      validate_box(b);
      CHECK(b.class_id >= 0);
      CHECK(b.class_id <= 1);
      for (std::int64_t y = std::int64_t(b.y_min * 32);
           y < std::int64_t(b.y_max * 32); ++y)
        for (std::int64_t x = std::int64_t(b.x_min * 32);
             x < std::int64_t(b.x_max * 32); ++x)
          inside[std::size_t(y * 32 + x)] = 1;
    }
    for (std::int64_t k = 0; k < 32 * 32; ++k) {
      if (inside[std::size_t(k)]) {
        // Disk corners stay background; count only bright pixels as object.
        if (img[k] >= 0.75f) {
          obj_sum += img[k];
          ++obj_n;
        }
      } else {
        bg_sum += img[k];
        ++bg_n;
      }
    }
    REQUIRE(obj_n > 0);
    REQUIRE(bg_n > 0);
    CHECK(obj_sum / obj_n >
          bg_sum / bg_n + shapes_contrast_margin());
  }
}

TEST_CASE("shapes dataset: objects do not overlap") {
  auto ds = gen_shapes_dataset(200, 32, 17);
  for (const auto& boxes : ds.boxes)
    for (std::size_t i = 0; i < boxes.size(); ++i)
      for (std::size_t j = i + 1; j < boxes.size(); ++j)
        CHECK(iou(boxes[i], boxes[j]) == 0.0);
}

TEST_CASE("shapes dataset: regeneration is byte-identical") {
  auto a = gen_shapes_dataset(500, 32, 11);
  auto b = gen_shapes_dataset(500, 32, 11);
  CHECK(a.pixels == b.pixels);
  CHECK(a.content_hash() == b.content_hash());
  CHECK_THROWS_AS(gen_shapes_dataset(10, 16, 1), std::invalid_argument);
}
