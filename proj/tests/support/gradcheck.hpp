#pragma once

// Central finite-difference check of loss_and_grad on small random instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "albalance/segmenter.hpp"

namespace oracle {

struct GradInstance {
  albalance::ModelParams params;
  albalance::TrainingBatch batch;
  std::vector<double> raw_iou;
  albalance::TrainConfig cfg;
  std::uint64_t sample_seed = 0;
};

inline GradInstance grad_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d_feat(3, 12), d_emb(2, 8), classes(2, 4), pixels(16, 64);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GradInstance g;
  const int df = d_feat(rng), de = d_emb(rng), c = classes(rng), n = pixels(rng);
  g.params = albalance::ModelParams::random(df, de, c, seed + 1);
  for (int k = 0; k < de; ++k) g.params.b_embed(k) = u(rng) * 0.2 - 0.1;
  for (int k = 0; k < c; ++k) g.params.b_cls(k) = u(rng) * 0.2 - 0.1;
  g.batch.features = albalance::RowMatrix(n, df);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < df; ++j) g.batch.features(i, j) = u(rng) * 2.0 - 1.0;
    g.batch.labels.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(c)));
    g.batch.human.push_back(u(rng) < 0.75);
  }
  for (int k = 0; k < c; ++k) g.raw_iou.push_back(u(rng));
  g.cfg.contrastive_weight = 0.5;
  g.cfg.anchors = 8;
  g.cfg.max_positives = 12;
  g.cfg.max_negatives = 20;
  g.cfg.tau = 0.5;
  g.sample_seed = seed * 31 + 7;
  return g;
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over all parameters.
inline double max_relative_grad_error(const GradInstance& g, double h = 1e-5) {
  const auto analytic = albalance::loss_and_grad(g.params, g.batch, g.raw_iou, g.cfg, g.sample_seed).grad.flatten();
  Eigen::VectorXd theta = g.params.flatten();
  auto p = g.params;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double keep = theta(i);
    theta(i) = keep + h;
    p.assign(theta);
    const double up = albalance::loss_and_grad(p, g.batch, g.raw_iou, g.cfg, g.sample_seed).total;
    theta(i) = keep - h;
    p.assign(theta);
    const double down = albalance::loss_and_grad(p, g.batch, g.raw_iou, g.cfg, g.sample_seed).total;
    theta(i) = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
  }
  return worst;
}

}  // namespace oracle
