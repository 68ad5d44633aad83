#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cspike/encoding.hpp"
#include "cspike/neuron.hpp"
#include "cspike/random.hpp"

using namespace cspike;

TEST_CASE("direct_encode repeats the feature map") {
  Tape tp;
  Rng rng(31, 0);
  Tensor f = Tensor::zeros({2, 8, 4, 4});
  for (auto& v : f.data()) v = float(rng.uniform(-1, 1));

  Tensor e = direct_encode(tp, f, 5);
  CHECK(e.shape == Shape{2, 5, 8, 4, 4});
  for (std::int64_t t = 0; t < 5; ++t)
    CHECK(slice_time(tp, e, t).data() == f.data());

  Tensor single = direct_encode(tp, f, 1);
  CHECK(single.shape == Shape{2, 1, 8, 4, 4});
  CHECK_THROWS_AS(direct_encode(tp, f, 0), std::invalid_argument);
}

TEST_CASE("direct coding alone carries no temporal information") {
  // All slices are equal, so any time permutation is a no-op.
  Tape tp;
  Rng rng(32, 0);
  Tensor f = Tensor::zeros({3, 2, 3, 3});
  for (auto& v : f.data()) v = float(rng.uniform(-1, 1));
  Tensor e = direct_encode(tp, f, 6);
  Tensor shuffled = shuffle_time(tp, e, 9001);
  CHECK(shuffled.data() == e.data());
}

TEST_CASE("ttfs_encode timing formula") {
  CHECK(ttfs_spike_step(1.0, 4) == 0);   // earliest slot
  CHECK(ttfs_spike_step(0.5, 4) == 1);   // 1 + floor(1.5) in 1-based steps
  CHECK(ttfs_spike_step(0.0, 4) == -1);  // silence encodes zero
  CHECK(ttfs_spike_step(1e-6, 4) == 2);  // 1 + floor((1-p)*3) = 3, 1-based
  CHECK(ttfs_spike_step(2.0, 4) == 0);   // clamped to [0, 1]

  Tensor img = Tensor::from({1, 1, 1, 3}, {1.0f, 0.5f, 0.0f});
  Tensor train = ttfs_encode(img, 4);
  CHECK(train.shape == Shape{1, 4, 1, 1, 3});
  CHECK(train.at({0, 0, 0, 0, 0}) == 1);
  CHECK(train.at({0, 1, 0, 0, 1}) == 1);
  double total = 0;
  for (float v : train.data()) total += v;
  CHECK(total == 2);  // the zero pixel stays silent
}

TEST_CASE("ttfs_encode emits at most one spike per element") {
  Rng rng(33, 0);
  Tensor img = Tensor::zeros({2, 2, 5, 5});
  for (auto& v : img.data()) v = float(rng.uniform(-0.2, 1.2));
  const std::int64_t t_len = 6;
  Tensor train = ttfs_encode(img, t_len);
  const std::int64_t inner = img.numel() / img.dim(0);
  for (std::int64_t n = 0; n < img.dim(0); ++n)
    for (std::int64_t k = 0; k < inner; ++k) {
      double count = 0;
      for (std::int64_t t = 0; t < t_len; ++t)
        count += train.data()[static_cast<std::size_t>(
            (n * t_len + t) * inner + k)];
      CHECK(count <= 1);
      const float p = img.data()[static_cast<std::size_t>(n * inner + k)];
      if (p > 0) CHECK(count == 1);
    }
}

TEST_CASE("ttfs_encode is monotone: brighter pixels never fire later") {
  Rng rng(34, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const double p1 = rng.uniform(1e-3, 1.0);
    const double p2 = rng.uniform(1e-3, 1.0);
    const std::int64_t t_len = 2 + std::int64_t(rng.below(14));
    const auto s1 = ttfs_spike_step(p1, t_len);
    const auto s2 = ttfs_spike_step(p2, t_len);
    if (p1 > p2) CHECK(s1 <= s2);
  }
}

TEST_CASE("hybrid_encode concatenates direct and TTFS segments") {
  Tape tp;
  Rng rng(35, 0);
  EncoderConfig cfg;
  cfg.kind = EncoderKind::Hybrid;
  cfg.t_total = 4;
  cfg.t_direct = 2;
  cfg.t_ttfs = 2;
  cfg.validate();

  Tensor features = Tensor::zeros({1, 3, 2, 2});
  for (auto& v : features.data()) v = float(rng.uniform(-1, 1));
  Tensor branch = Tensor::zeros({1, 2, 3, 2, 2});
  for (auto& v : branch.data()) v = float(rng.uniform(-1, 1));

  Tensor out = hybrid_encode(tp, features, branch, cfg);
  CHECK(out.shape == Shape{1, 4, 3, 2, 2});
  CHECK(slice_time(tp, out, 0).data() == slice_time(tp, out, 1).data());
  CHECK(slice_time(tp, out, 2).data() == slice_time(tp, branch, 0).data());

  // Mismatched extents are rejected.
  Tensor bad = Tensor::zeros({1, 2, 4, 2, 2});
  CHECK_THROWS_AS(hybrid_encode(tp, features, bad, cfg),
                  std::invalid_argument);
}

TEST_CASE("hybrid split invariants") {
  EncoderConfig cfg;
  cfg.kind = EncoderKind::Hybrid;
  cfg.t_total = 4;
  cfg.t_direct = 4;
  cfg.t_ttfs = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  EncoderConfig def = EncoderConfig::hybrid(7);
  CHECK(def.t_direct == 4);
  CHECK(def.t_ttfs == 3);
}

TEST_CASE("all-black image: TTFS slices are all-zero") {
  Tensor img = Tensor::zeros({2, 1, 4, 4});
  Tensor train = ttfs_encode(img, 5);
  for (float v : train.data()) CHECK(v == 0);
}
