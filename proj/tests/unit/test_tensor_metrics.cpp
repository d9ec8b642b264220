#include <doctest.h>

#include <cmath>
#include <random>

#include "albalance/metrics.hpp"
#include "albalance/tensor.hpp"
#include "../support/oracles.hpp"

using namespace albalance;

namespace {

LabelMask mask_of(int h, int w, std::vector<std::uint8_t> labels) {
  return LabelMask::from_labels(h, w, std::move(labels));
}

}  // namespace

TEST_CASE("probability map validation") {
  CHECK_NOTHROW(ProbabilityMap::uniform(2, 3, 4).validate());
  CHECK_THROWS_AS(ProbabilityMap(1, 1, 2, {0.6, 0.6}).validate(), Error);
  CHECK_THROWS_AS(ProbabilityMap(1, 1, 2, {1.2, -0.2}).validate(), Error);
  CHECK_THROWS_AS(ProbabilityMap(1, 1, 2, {1.0}), Error);
  CHECK_THROWS_AS(ProbabilityMap(0, 1, 2), Error);
}

TEST_CASE("label mask invariants") {
  LabelMask lm(2, 2);
  CHECK_FALSE(lm.decided(0));
  CHECK(lm.provenance(0) == Provenance::None);
  lm.set(1, 2, Provenance::Pseudo);
  CHECK(lm.label(1) == 2);
  CHECK_NOTHROW(lm.validate(3));
  CHECK_THROWS_AS(lm.validate(2), Error);
  CHECK_THROWS_AS(lm.set(3, 0, Provenance::None), Error);
  CHECK_THROWS_AS(LabelMask(1, 1, {0}, {Provenance::None}).validate(1), Error);
  lm.clear(1);
  CHECK(lm == LabelMask(2, 2));
}

TEST_CASE("entropy_sum examples") {
  const auto uniform = ProbabilityMap::uniform(2, 2, 2);
  CHECK(entropy_sum(uniform, full_mask(2, 2)) == doctest::Approx(4 * std::log(2.0)).epsilon(1e-12));
  CHECK(entropy_sum(uniform, full_mask(2, 2)) == doctest::Approx(2.772589).epsilon(1e-6));

  ProbabilityMap onehot(2, 2, 3);
  for (PixelIndex p = 0; p < 4; ++p) onehot.pixel(p)[p % 3] = 1.0;
  CHECK(entropy_sum(onehot, full_mask(2, 2)) == 0.0);

  ProbabilityMap one(1, 1, 2, {0.7, 0.3});
  CHECK(entropy_sum(one, {0}) == doctest::Approx(0.610864).epsilon(1e-6));
  CHECK(entropy_sum(one, {}) == 0.0);
  CHECK_THROWS_AS(entropy_sum(one, {1}), Error);
}

TEST_CASE("entropy_sum properties") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pm = oracle::random_prob_map(rng, 5, 6, 4);
    const auto a = oracle::random_mask(rng, 30);
    PixelSet b;
    for (PixelIndex p = 0; p < 30; ++p) {
      if (!std::binary_search(a.begin(), a.end(), p)) b.push_back(p);
    }
    const double ea = entropy_sum(pm, a);
    const double eb = entropy_sum(pm, b);
    CHECK(ea >= 0.0);
    CHECK(ea + eb == doctest::Approx(entropy_sum(pm, full_mask(5, 6))).epsilon(1e-12));
    CHECK(ea <= a.size() * std::log(4.0) + 1e-12);
  }
  const auto u = ProbabilityMap::uniform(3, 3, 5);
  CHECK(entropy_sum(u, full_mask(3, 3)) == doctest::Approx(9 * std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("argmax_map ties and oracle") {
  ProbabilityMap tie(1, 1, 2, {0.5, 0.5});
  CHECK(argmax_map(tie).label(0) == 0);
  CHECK(argmax_map(tie).provenance(0) == Provenance::None);

  std::mt19937_64 rng(3);
  const auto pm = oracle::random_prob_map(rng, 3, 3, 4, 0.3);
  const auto am = argmax_map(pm);
  for (PixelIndex p = 0; p < 9; ++p) CHECK(am.label(p) == oracle::argmax(pm, p));

  // Rescaling a row keeps its argmax.
  auto scaled = pm.data();
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 0.5;
  for (PixelIndex p = 0; p < 9; ++p) {
    std::vector<double> row(scaled.begin() + p * 4, scaled.begin() + p * 4 + 4);
    CHECK(argmax(row) == am.label(p));
  }
}

TEST_CASE("class_proportions") {
  const auto lm = mask_of(2, 2, {0, 0, 1, 2});
  const auto v = class_proportions(lm, full_mask(2, 2), 3);
  CHECK(v == std::vector<double>{0.5, 0.25, 0.25});
  CHECK(class_proportions(mask_of(2, 2, {1, 1, 1, 1}), full_mask(2, 2), 3) == std::vector<double>{0, 1, 0});

  LabelMask partial(2, 2);
  partial.set(0, 1, Provenance::Human);
  CHECK(class_proportions(partial, full_mask(2, 2), 2) == std::vector<double>{0, 1});
  CHECK_THROWS_WITH_AS(class_proportions(LabelMask(2, 2), full_mask(2, 2), 2), "no decided pixels", Error);

  std::mt19937_64 rng(5);
  const auto r = oracle::random_labels(rng, 4, 4, 3, 0.2);
  const auto m = oracle::random_mask(rng, 16, 0.8);
  bool any = false;
  for (auto p : m) any |= r.decided(p);
  if (any) {
    const auto got = class_proportions(r, m, 3);
    const auto want = oracle::proportions(r, m, 3);
    for (int c = 0; c < 3; ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-15));
  }
}

TEST_CASE("evaluate examples") {
  const auto truth = mask_of(2, 2, {0, 1, 0, 1});
  const auto same = evaluate(truth, truth, 2);
  CHECK(same.miou == 1.0);
  CHECK(same.per_class_iou == std::vector<double>{1.0, 1.0});
  CHECK(same.mean_f1 == 1.0);

  const auto pred = mask_of(2, 2, {0, 0, 1, 1});
  const auto r = evaluate(pred, truth, 2);
  CHECK(r.per_class_iou[0] == doctest::Approx(1.0 / 3));
  CHECK(r.per_class_iou[1] == doctest::Approx(1.0 / 3));
  CHECK(r.miou == doctest::Approx(1.0 / 3));
  CHECK(r.per_class_f1[0] == doctest::Approx(0.5));

  const auto disjoint = evaluate(mask_of(1, 2, {1, 1}), mask_of(1, 2, {0, 0}), 2);
  CHECK(disjoint.miou == 0.0);
  CHECK(disjoint.present == std::vector<bool>{true, false});

  CHECK_THROWS_AS(evaluate(mask_of(1, 2, {0, 0}), mask_of(2, 1, {0, 0}), 2), Error);
  CHECK_THROWS_AS(evaluate(LabelMask(1, 2), mask_of(1, 2, {0, 0}), 2), Error);
}

TEST_CASE("evaluate excludes unlabeled truth and is relabel-equivariant") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto truth = oracle::random_labels(rng, 6, 5, 4, 0.2);
    const auto pred = oracle::random_labels(rng, 6, 5, 4, 0.0);
    const auto r = evaluate(pred, truth, 4);
    std::uint64_t decided = 0;
    for (auto v : truth.labels()) decided += v != kUnlabeled;
    std::uint64_t rows = 0;
    for (const auto& row : r.confusion) {
      for (auto n : row) rows += n;
    }
    CHECK(rows == decided);

    const std::vector<std::uint8_t> perm = {2, 0, 3, 1};
    auto relabel = [&](const LabelMask& lm) {
      LabelMask out(lm.height(), lm.width());
      for (PixelIndex p = 0; p < lm.num_pixels(); ++p) {
        if (lm.decided(p)) out.set(p, perm[lm.label(p)], lm.provenance(p));
      }
      return out;
    };
    const auto rp = evaluate(relabel(pred), relabel(truth), 4);
    CHECK(rp.miou == doctest::Approx(r.miou).epsilon(1e-15));
    for (int c = 0; c < 4; ++c) CHECK(rp.per_class_iou[perm[c]] == doctest::Approx(r.per_class_iou[c]));
  }
}

TEST_CASE("raster image basics") {
  RasterImage img(2, 3, 3);
  img(1, 2, 0) = 255;
  img(1, 2, 1) = 255;
  img(1, 2, 2) = 255;
  CHECK(img.luma()[5] == doctest::Approx(255.0));
  CHECK(img.luma()[0] == 0.0);
  const auto c = img.crop(1, 1, 1, 2);
  CHECK(c.height() == 1);
  CHECK(c(0, 1, 2) == 255);
  CHECK_THROWS_AS(img.crop(1, 2, 2, 2), Error);
  CHECK_THROWS_AS(RasterImage(2, 2, 2), Error);
  CHECK_THROWS_AS(RasterImage(2, 2, 1, std::vector<std::uint8_t>(3)), Error);
}
