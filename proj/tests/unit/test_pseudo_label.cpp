#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "albalance/metrics.hpp"
#include "albalance/pseudo_label.hpp"
#include "../support/oracles.hpp"

using namespace albalance;

TEST_CASE("ratio_thresholds") {
  const PseudoConfig cfg;
  for (double k : ratio_thresholds({0.3, 0.3, 0.3}, cfg)) CHECK(k == doctest::Approx(0.5));
  const auto k = ratio_thresholds({0.8, 0.4}, cfg);
  CHECK(k[0] == doctest::Approx(0.40937).epsilon(1e-5));
  CHECK(k[1] == doctest::Approx(0.61070).epsilon(1e-5));
  // Exponent 0.8 overshoots 1 and clamps.
  CHECK(ratio_thresholds({0.0, 1.0, 1.0, 1.0, 1.0, 0.8}, cfg)[0] == 1.0);
  CHECK_THROWS_AS(ratio_thresholds({0.5}, PseudoConfig{0.0}), Error);
  CHECK_THROWS_AS(ratio_thresholds({0.5}, PseudoConfig{1.5}), Error);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> raw(2 + t % 5);
    for (auto& v : raw) v = u(rng);
    const auto got = ratio_thresholds(raw, cfg);
    const auto want = oracle::ratio_thresholds(raw, 0.5);
    for (std::size_t c = 0; c < raw.size(); ++c) {
      CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
      for (std::size_t d = 0; d < raw.size(); ++d) {
        if (raw[c] < raw[d] && got[c] < 1.0) CHECK(got[c] > got[d]);
      }
    }
  }
}

TEST_CASE("generate_pseudo extremes") {
  std::mt19937_64 rng(2);
  const auto pm = oracle::random_prob_map(rng, 4, 4, 3);
  LabelMask labeled(4, 4);
  labeled.set(5, 2, Provenance::Human);
  const auto all = generate_pseudo(pm, labeled, {1, 1, 1});
  for (PixelIndex p = 0; p < 16; ++p) {
    if (p == 5) {
      CHECK(all.provenance(p) == Provenance::Human);
    } else {
      CHECK(all.provenance(p) == Provenance::Pseudo);
      CHECK(all.label(p) == argmax(pm.pixel(p)));
    }
  }
  const auto none = generate_pseudo(pm, labeled, {0, 0, 0});
  CHECK(none == labeled);
  CHECK_THROWS_AS(generate_pseudo(pm, labeled, {0.5, 0.5}), Error);
  CHECK_THROWS_AS(generate_pseudo(pm, LabelMask(3, 4), {0.5, 0.5, 0.5}), Error);
  // Earlier pseudo labels are dropped, not carried over.
  CHECK(generate_pseudo(pm, all, {0, 0, 0}) == labeled);
}

TEST_CASE("generate_pseudo takes the most confident half") {
  std::vector<double> data;
  for (int i = 0; i < 10; ++i) {
    const double top = 0.5 + 0.04 * i;
    data.push_back(top);
    data.push_back(1.0 - top);
  }
  const ProbabilityMap pm(1, 10, 2, data);
  const auto out = generate_pseudo(pm, LabelMask(1, 10), {0.5, 0.5});
  for (PixelIndex p = 0; p < 10; ++p) CHECK(out.decided(p) == (p >= 5));
  // Ties fall to row-major order.
  const auto flat = generate_pseudo(ProbabilityMap::uniform(1, 4, 2), LabelMask(1, 4), {0.5, 0.5});
  CHECK(flat.decided(0));
  CHECK(flat.decided(1));
  CHECK_FALSE(flat.decided(2));
}

TEST_CASE("generate_pseudo properties") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 40; ++t) {
    const int c = 2 + t % 4;
    const auto pm = oracle::random_prob_map(rng, 6, 7, c, 0.0);
    LabelMask labeled(6, 7);
    for (PixelIndex p = 0; p < 42; ++p) {
      const double r = u(rng);
      if (r < 0.2) labeled.set(p, static_cast<std::uint8_t>(rng() % c), Provenance::Human);
      else if (r < 0.3) labeled.set(p, static_cast<std::uint8_t>(rng() % c), Provenance::Pseudo);
    }
    std::vector<double> ratios(c);
    for (auto& k : ratios) k = u(rng);
    const auto out = generate_pseudo(pm, labeled, ratios);

    std::vector<std::size_t> candidates(c, 0);
    for (PixelIndex p = 0; p < 42; ++p) {
      if (labeled.provenance(p) == Provenance::Human) {
        CHECK(out.provenance(p) == Provenance::Human);
        CHECK(out.label(p) == labeled.label(p));
      } else {
        ++candidates[argmax(pm.pixel(p))];
      }
    }
    const auto counts = pseudo_counts(out, c);
    for (int k = 0; k < c; ++k) {
      CHECK(counts[k] == static_cast<std::size_t>(std::floor(ratios[k] * static_cast<double>(candidates[k]))));
    }
    for (PixelIndex p = 0; p < 42; ++p) {
      if (out.provenance(p) != Provenance::Pseudo) continue;
      const int k = out.label(p);
      CHECK(k == argmax(pm.pixel(p)));
      for (PixelIndex q = 0; q < 42; ++q) {
        if (labeled.provenance(q) != Provenance::Human && !out.decided(q) && argmax(pm.pixel(q)) == k) {
          CHECK(pm.pixel(p)[k] >= pm.pixel(q)[k]);
        }
      }
    }
  }
}

TEST_CASE("generate_pseudo_global") {
  std::mt19937_64 rng(4);
  const auto pm = oracle::random_prob_map(rng, 5, 5, 3, 0.0);
  LabelMask labeled(5, 5);
  labeled.set(0, 1, Provenance::Human);
  const auto out = generate_pseudo_global(pm, labeled, 7);
  const auto counts = pseudo_counts(out, 3);
  CHECK(counts[0] + counts[1] + counts[2] == 7);
  CHECK(out.provenance(0) == Provenance::Human);
  double min_taken = 1.0, max_left = 0.0;
  for (PixelIndex p = 1; p < 25; ++p) {
    const double conf = pm.pixel(p)[argmax(pm.pixel(p))];
    if (out.decided(p)) min_taken = std::min(min_taken, conf);
    else max_left = std::max(max_left, conf);
  }
  CHECK(min_taken >= max_left);
  const auto capped = pseudo_counts(generate_pseudo_global(pm, labeled, 1000), 3);
  CHECK(capped[0] + capped[1] + capped[2] == 24);
}
