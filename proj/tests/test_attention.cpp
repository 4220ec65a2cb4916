#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vdtlab/attention.hpp>
#include <vdtlab/rng.hpp>

#include "helpers.hpp"

using namespace vdtlab;
using testing::random_mat;

namespace {

// Independent oracle: same math in extended precision, no shared code with
// attend(). Mirrors the f32 map quantization and the f64 product accumulation
// so agreement bounds are tight.
MatD naive_attend(const MatD& q, const MatD& k, const MatD& v, double temperature,
                  MatD* map_out = nullptr) {
  const int n = q.rows();
  const int dk = q.cols();
  const int dv = v.cols();
  const long double scale = 1.0L / (std::sqrt(static_cast<long double>(dk)) *
                                    static_cast<long double>(temperature));
  std::vector<std::vector<long double>> logits(n, std::vector<long double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (int c = 0; c < dk; ++c)
        acc += static_cast<long double>(q(i, c)) * static_cast<long double>(k(j, c));
      logits[i][j] = acc * scale;
    }
  std::vector<std::vector<long double>> p(n, std::vector<long double>(n));
  for (int i = 0; i < n; ++i) {
    long double mx = logits[i][0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits[i][j]);
    long double sum = 0.0L;
    for (int j = 0; j < n; ++j) {
      p[i][j] = std::exp(logits[i][j] - mx);
      sum += p[i][j];
    }
    for (int j = 0; j < n; ++j) p[i][j] /= sum;
  }
  if (map_out) {
    *map_out = MatD(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) (*map_out)(i, j) = static_cast<double>(p[i][j]);
  }
  MatD out(n, dv);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dv; ++c) {
      long double acc = 0.0L;
      for (int j = 0; j < n; ++j) {
        const float w = static_cast<float>(static_cast<double>(p[i][j]));
        acc += static_cast<long double>(w) * static_cast<long double>(v(j, c));
      }
      out(i, c) = static_cast<double>(acc);
    }
  return out;
}

AttentionConfig cfg_for(int dk) {
  AttentionConfig cfg;
  cfg.num_heads = 1;
  cfg.head_dim = dk;
  return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("attention");

TEST_CASE("matches extended precision oracle over random cases") {
  Rng rng(101);
  for (int t = 0; t < 1000; ++t) {
    const int n = rng.uniform_int(1, 8);
    const int dk = rng.uniform_int(1, 8);
    const int dv = rng.uniform_int(1, 8);
    const MatD q = random_mat(rng, n, dk);
    const MatD k = random_mat(rng, n, dk);
    const MatD v = random_mat(rng, n, dv);
    const Attended got = attend(q, k, v, cfg_for(dk));
    const MatD want = naive_attend(q, k, v, 1.0);
    REQUIRE(got.output.rows() == n);
    REQUIRE(got.output.cols() == dv);
    REQUIRE(max_abs_diff(got.output, want) < 1e-5);
  }
}

TEST_CASE("rows are stochastic under every intervention mix") {
  Rng rng(202);
  for (int t = 0; t < 300; ++t) {
    const int n = rng.uniform_int(2, 7);
    const int dk = rng.uniform_int(1, 6);
    const MatD q = random_mat(rng, n, dk);
    const MatD k = random_mat(rng, n, dk);
    const MatD v = random_mat(rng, n, dk);
    AttentionIntervention iv;
    if (t % 2) iv.temperature = 0.2 + rng.uniform() * 1.4;
    if (t % 3) iv.mask_threshold = rng.uniform() * 0.4;
    const Attended got = attend(q, k, v, cfg_for(dk), iv);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        REQUIRE(got.record.map(i, j) >= 0.0f);
        REQUIRE(got.record.map(i, j) <= 1.0f);
        sum += got.record.map(i, j);
      }
      REQUIRE(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("temperature one is bitwise identical to no intervention") {
  Rng rng(303);
  const MatD q = random_mat(rng, 5, 4);
  const MatD k = random_mat(rng, 5, 4);
  const MatD v = random_mat(rng, 5, 4);
  const Attended plain = attend(q, k, v, cfg_for(4));
  AttentionIntervention iv;
  iv.temperature = 1.0;
  const Attended tempd = attend(q, k, v, cfg_for(4), iv);
  CHECK(bits_equal(plain.output, tempd.output));
  CHECK(bits_equal(plain.record.map, tempd.record.map));
}

TEST_CASE("low temperature sharpens and high temperature flattens") {
  Rng rng(404);
  const MatD q = random_mat(rng, 6, 4);
  const MatD k = random_mat(rng, 6, 4);
  const MatD v = random_mat(rng, 6, 4);
  auto mean_entropy = [&](double temp) {
    AttentionIntervention iv;
    iv.temperature = temp;
    const Attended a = attend(q, k, v, cfg_for(4), iv);
    const auto h = row_entropy(a.record.map);
    double acc = 0.0;
    for (double x : h) acc += x;
    return acc / static_cast<double>(h.size());
  };
  const double h_low = mean_entropy(0.2);
  const double h_mid = mean_entropy(1.0);
  const double h_high = mean_entropy(1.2);
  CHECK(h_low < h_mid);
  CHECK(h_mid < h_high);
}

TEST_CASE("near zero temperature approaches one hot") {
  Rng rng(505);
  const MatD q = random_mat(rng, 4, 3);
  const MatD k = random_mat(rng, 4, 3);
  const MatD v = random_mat(rng, 4, 3);
  AttentionIntervention iv;
  iv.temperature = 1e-3;
  const Attended a = attend(q, k, v, cfg_for(3), iv);
  for (int i = 0; i < 4; ++i) {
    float mx = 0.0f;
    for (int j = 0; j < 4; ++j) mx = std::max(mx, a.record.map(i, j));
    CHECK(std::abs(mx - 1.0f) < 1e-6);
  }
}

TEST_CASE("temperature must be positive and finite") {
  Rng rng(606);
  const MatD q = random_mat(rng, 3, 2);
  const MatD k = random_mat(rng, 3, 2);
  const MatD v = random_mat(rng, 3, 2);
  AttentionIntervention iv;
  iv.temperature = 0.0;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ConfigError);
  iv.temperature = -1.0;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ConfigError);
}

TEST_CASE("mask zeroes entries strictly below the threshold") {
  // Hand-built map through a one-hot V so weights are read off the output.
  MatD q(2, 1), k(2, 1), v(2, 2);
  q(0, 0) = 0.0;
  q(1, 0) = 0.0;
  k(0, 0) = 0.0;
  k(1, 0) = 0.0;
  v(0, 0) = 1.0;
  v(1, 1) = 1.0;
  // Uniform map: every entry exactly 0.5.
  AttentionIntervention iv;
  iv.mask_threshold = 0.5;
  const Attended a = attend(q, k, v, cfg_for(1), iv);
  // 0.5 is not strictly below 0.5: nothing is masked.
  CHECK(a.stats.masked_entries == 0);
  CHECK(a.record.map(0, 0) == 0.5f);

  AttentionIntervention above;
  above.mask_threshold = 0.500001;
  // Every entry falls: each row keeps its argmax (ties -> lowest index) at 1.
  // The restored entry is not counted as masked.
  const Attended b = attend(q, k, v, cfg_for(1), above);
  CHECK(b.stats.masked_entries == 2);
  CHECK(b.stats.degenerate_rows == 2);
  CHECK(b.record.map(0, 0) == 1.0f);
  CHECK(b.record.map(0, 1) == 0.0f);
  CHECK(b.record.map(1, 0) == 1.0f);
  CHECK(b.record.map(1, 1) == 0.0f);
}

TEST_CASE("mask renormalizes only rows that lost entries") {
  // Row 0 has a small entry to lose; row 1 is uniform and loses nothing.
  MatD q(2, 1), k(2, 1), v(2, 1);
  q(0, 0) = 3.0;
  q(1, 0) = 0.0;
  k(0, 0) = 1.0;
  k(1, 0) = -1.0;
  v(0, 0) = 1.0;
  v(1, 0) = -1.0;
  const Attended plain = attend(q, k, v, cfg_for(1));
  REQUIRE(plain.record.map(0, 1) < 0.1f);
  AttentionIntervention iv;
  iv.mask_threshold = 0.1;
  const Attended masked = attend(q, k, v, cfg_for(1), iv);
  CHECK(masked.record.map(0, 0) == 1.0f);
  CHECK(masked.record.map(0, 1) == 0.0f);
  // Untouched row is carried over bit for bit.
  CHECK(masked.record.map(1, 0) == plain.record.map(1, 0));
  CHECK(masked.record.map(1, 1) == plain.record.map(1, 1));
  CHECK(masked.stats.masked_entries == 1);
  CHECK(masked.stats.removed_mass == doctest::Approx(to_f64(plain.record.map)(0, 1)).epsilon(1e-6));
}

TEST_CASE("mask threshold zero is a bitwise no-op") {
  Rng rng(707);
  for (int t = 0; t < 50; ++t) {
    const int n = rng.uniform_int(1, 6);
    const MatD q = random_mat(rng, n, 3);
    const MatD k = random_mat(rng, n, 3);
    const MatD v = random_mat(rng, n, 3);
    const Attended plain = attend(q, k, v, cfg_for(3));
    AttentionIntervention iv;
    iv.mask_threshold = 0.0;
    const Attended masked = attend(q, k, v, cfg_for(3), iv);
    REQUIRE(bits_equal(plain.output, masked.output));
    REQUIRE(bits_equal(plain.record.map, masked.record.map));
    REQUIRE(masked.stats.masked_entries == 0);
  }
}

TEST_CASE("mask threshold outside the unit interval is rejected") {
  Rng rng(808);
  const MatD q = random_mat(rng, 3, 2);
  const MatD k = random_mat(rng, 3, 2);
  const MatD v = random_mat(rng, 3, 2);
  AttentionIntervention iv;
  iv.mask_threshold = -0.1;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ConfigError);
  iv.mask_threshold = 1.5;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ConfigError);
}

TEST_CASE("strict policy throws on a fully masked row") {
  MatD q(2, 1), k(2, 1), v(2, 1);
  v(0, 0) = 1.0;
  v(1, 0) = 2.0;
  AttentionIntervention iv;
  iv.mask_threshold = 0.9;
  iv.strict_degenerate_rows = true;
  try {
    attend(q, k, v, cfg_for(1), iv, {.layer = 0, .head = 3, .step = 0});
    FAIL("expected DegenerateRowError");
  } catch (const DegenerateRowError& e) {
    CHECK(e.row() == 0);
    CHECK(e.head() == 3);
  }
}

TEST_CASE("degenerate row argmax tie breaks to the lowest index") {
  // Symmetric logits: row weights tie exactly at 1/3 < threshold.
  MatD q(3, 1), k(3, 1), v(3, 1);
  v(0, 0) = 5.0;
  AttentionIntervention iv;
  iv.mask_threshold = 0.5;
  const Attended a = attend(q, k, v, cfg_for(1), iv);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.record.map(i, 0) == 1.0f);
    CHECK(a.record.map(i, 1) == 0.0f);
    CHECK(a.record.map(i, 2) == 0.0f);
  }
  CHECK(a.stats.degenerate_rows == 3);
}

TEST_CASE("skip produces zero output and an empty map") {
  Rng rng(909);
  const MatD q = random_mat(rng, 4, 2);
  const MatD k = random_mat(rng, 4, 2);
  const MatD v = random_mat(rng, 4, 2);
  AttentionIntervention iv;
  iv.skip_heads = {1};
  const Attended a = attend(q, k, v, cfg_for(2), iv, {.layer = 0, .head = 1, .step = 0});
  CHECK(a.record.skipped);
  CHECK(a.record.map.empty());
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 2; ++c) REQUIRE(a.output(i, c) == 0.0);
  // A head not named in skip_heads is untouched.
  const Attended b = attend(q, k, v, cfg_for(2), iv, {.layer = 0, .head = 0, .step = 0});
  CHECK_FALSE(b.record.skipped);
}

TEST_CASE("skip wins over every other intervention") {
  Rng rng(1010);
  const MatD q = random_mat(rng, 3, 2);
  const MatD k = random_mat(rng, 3, 2);
  const MatD v = random_mat(rng, 3, 2);
  auto ov = std::make_shared<MatF>(testing::random_stochastic(rng, 3));
  AttentionIntervention iv;
  iv.skip_heads = {0};
  iv.temperature = 0.5;
  iv.mask_threshold = 0.3;
  iv.map_override = ov;
  const Attended a = attend(q, k, v, cfg_for(2), iv, {.layer = 0, .head = 0, .step = 0});
  CHECK(a.record.skipped);
  CHECK(a.record.map.empty());
}

TEST_CASE("map override replaces the computed map exactly") {
  Rng rng(1111);
  const MatD q = random_mat(rng, 4, 3);
  const MatD k = random_mat(rng, 4, 3);
  const MatD v = random_mat(rng, 4, 3);
  auto ov = std::make_shared<MatF>(testing::random_stochastic(rng, 4));
  AttentionIntervention iv;
  iv.map_override = ov;
  iv.temperature = 0.1;   // ignored under an override
  iv.mask_threshold = 0.9;
  const Attended a = attend(q, k, v, cfg_for(3), iv);
  CHECK(bits_equal(a.record.map, *ov));
  CHECK(a.stats.masked_entries == 0);
  // f64-accumulated product with the f32 override map.
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int j = 0; j < 4; ++j) acc += static_cast<double>((*ov)(i, j)) * v(j, c);
      REQUIRE(a.output(i, c) == acc);
    }
}

TEST_CASE("overriding with the head's own map reproduces the output bitwise") {
  Rng rng(1212);
  const MatD q = random_mat(rng, 5, 4);
  const MatD k = random_mat(rng, 5, 4);
  const MatD v = random_mat(rng, 5, 4);
  const Attended plain = attend(q, k, v, cfg_for(4));
  auto ov = std::make_shared<MatF>(plain.record.map);
  AttentionIntervention iv;
  iv.map_override = ov;
  const Attended redo = attend(q, k, v, cfg_for(4), iv);
  CHECK(bits_equal(plain.output, redo.output));
  CHECK(bits_equal(plain.record.map, redo.record.map));
}

TEST_CASE("map override is validated") {
  Rng rng(1313);
  const MatD q = random_mat(rng, 3, 2);
  const MatD k = random_mat(rng, 3, 2);
  const MatD v = random_mat(rng, 3, 2);
  AttentionIntervention iv;

  auto wrong_shape = std::make_shared<MatF>(2, 2);
  iv.map_override = wrong_shape;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ShapeError);

  auto not_stochastic = std::make_shared<MatF>(3, 3);
  (*not_stochastic)(0, 0) = 0.5f;
  (*not_stochastic)(1, 1) = 1.0f;
  (*not_stochastic)(2, 2) = 1.0f;
  iv.map_override = not_stochastic;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ContractError);

  auto negative = std::make_shared<MatF>(3, 3);
  for (int i = 0; i < 3; ++i) {
    (*negative)(i, 0) = 1.2f;
    (*negative)(i, 1) = -0.2f;
  }
  iv.map_override = negative;
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2), iv), ContractError);
}

TEST_CASE("shape and value errors") {
  MatD q(3, 2), k(4, 2), v(3, 2);
  CHECK_THROWS_AS(attend(q, k, v, cfg_for(2)), ShapeError);
  MatD k2(3, 3);
  CHECK_THROWS_AS(attend(q, k2, v, cfg_for(2)), ShapeError);
  MatD k3(3, 2), v2(4, 2);
  CHECK_THROWS_AS(attend(q, k3, v2, cfg_for(2)), ShapeError);
  MatD bad(3, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(attend(bad, k3, v, cfg_for(2)), NumericError);
  CHECK_THROWS_AS(attend(MatD(0, 0), MatD(0, 0), MatD(0, 0), cfg_for(1)), ShapeError);
}

TEST_CASE("probe sees the full precision pre-mask map") {
  Rng rng(1414);
  const MatD q = random_mat(rng, 4, 3);
  const MatD k = random_mat(rng, 4, 3);
  const MatD v = random_mat(rng, 4, 3);
  MatD naive_map;
  naive_attend(q, k, v, 1.0, &naive_map);

  MatD seen;
  AttendTags seen_tags;
  AttentionIntervention iv;
  iv.mask_threshold = 0.4;
  attend(q, k, v, cfg_for(3), iv, {.layer = 2, .head = 1, .step = 5},
         [&](const AttendTags& tags, const MatD& m) {
           seen = m;
           seen_tags = tags;
         });
  REQUIRE(seen.rows() == 4);
  CHECK(seen_tags.layer == 2);
  CHECK(seen_tags.head == 1);
  CHECK(seen_tags.step == 5);
  // Pre-mask: the probe map is the plain softmax, not the masked one.
  CHECK(max_abs_diff(seen, naive_map) < 1e-12);
  // Quantizing the probe map reproduces the unmasked record bitwise.
  const Attended plain = attend(q, k, v, cfg_for(3));
  CHECK(bits_equal(to_f32(seen), plain.record.map));
}

TEST_CASE("probe is not invoked for skips or overrides") {
  Rng rng(1515);
  const MatD q = random_mat(rng, 3, 2);
  const MatD k = random_mat(rng, 3, 2);
  const MatD v = random_mat(rng, 3, 2);
  int calls = 0;
  const MapProbe probe = [&](const AttendTags&, const MatD&) { ++calls; };

  AttentionIntervention skip;
  skip.skip_heads = {0};
  attend(q, k, v, cfg_for(2), skip, {}, probe);
  CHECK(calls == 0);

  AttentionIntervention ov;
  ov.map_override = std::make_shared<MatF>(testing::random_stochastic(rng, 3));
  attend(q, k, v, cfg_for(2), ov, {}, probe);
  CHECK(calls == 0);

  attend(q, k, v, cfg_for(2), {}, {}, probe);
  CHECK(calls == 1);
}

TEST_CASE("row entropy closed forms") {
  MatF one_hot(2, 2);
  one_hot(0, 0) = 1.0f;
  one_hot(1, 1) = 1.0f;
  const auto h0 = row_entropy(one_hot);
  CHECK(h0[0] == 0.0);
  CHECK(h0[1] == 0.0);

  const int n = 5;
  MatF uniform(n, n, 1.0f / n);
  const auto hu = row_entropy(uniform);
  for (double h : hu) CHECK(h == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-6));

  MatF bad(1, 2);
  bad(0, 0) = 0.7f;
  bad(0, 1) = 0.7f;
  CHECK_THROWS_AS(row_entropy(bad), ContractError);
}

TEST_SUITE_END();
