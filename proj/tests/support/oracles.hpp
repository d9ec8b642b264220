#pragma once

// Brute-force reference computations used by the unit and acceptance tests.
// Deliberately naive: nested loops over plain arrays, no library helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "albalance/tensor.hpp"

namespace oracle {

using albalance::LabelMask;
using albalance::PixelIndex;
using albalance::PixelSet;
using albalance::ProbabilityMap;

inline ProbabilityMap random_prob_map(std::mt19937_64& rng, int h, int w, int c, double zero_rate = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data(static_cast<std::size_t>(h) * w * c);
  for (int p = 0; p < h * w; ++p) {
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      double v = u(rng) < zero_rate ? 0.0 : u(rng);
      data[static_cast<std::size_t>(p) * c + k] = v;
      sum += v;
    }
    if (sum == 0.0) {
      data[static_cast<std::size_t>(p) * c] = 1.0;
      sum = 1.0;
    }
    for (int k = 0; k < c; ++k) data[static_cast<std::size_t>(p) * c + k] /= sum;
  }
  return ProbabilityMap(h, w, c, std::move(data));
}

inline PixelSet random_mask(std::mt19937_64& rng, int n, double keep = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PixelSet out;
  for (int i = 0; i < n; ++i) {
    if (u(rng) < keep) out.push_back(static_cast<PixelIndex>(i));
  }
  if (out.empty()) out.push_back(static_cast<PixelIndex>(std::uniform_int_distribution<int>(0, n - 1)(rng)));
  return out;
}

inline LabelMask random_labels(std::mt19937_64& rng, int h, int w, int c, double unlabeled_rate = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, c - 1);
  LabelMask lm(h, w);
  for (int p = 0; p < h * w; ++p) {
    if (u(rng) >= unlabeled_rate) lm.set(static_cast<PixelIndex>(p), static_cast<std::uint8_t>(cls(rng)), albalance::Provenance::Human);
  }
  return lm;
}

inline double entropy(const ProbabilityMap& pm, const PixelSet& mask) {
  double total = 0.0;
  for (PixelIndex idx : mask) {
    const int r = static_cast<int>(idx) / pm.width();
    const int col = static_cast<int>(idx) % pm.width();
    for (int k = 0; k < pm.num_classes(); ++k) {
      const double y = pm(r, col, k);
      if (y > 0.0) total -= y * std::log(y);
    }
  }
  return total;
}

inline int argmax(const ProbabilityMap& pm, PixelIndex idx) {
  const int r = static_cast<int>(idx) / pm.width();
  const int col = static_cast<int>(idx) % pm.width();
  int best = 0;
  for (int k = 1; k < pm.num_classes(); ++k) {
    if (pm(r, col, k) > pm(r, col, best)) best = k;
  }
  return best;
}

inline std::vector<double> proportions(const LabelMask& lm, const PixelSet& mask, int c) {
  std::vector<double> counts(c, 0.0);
  double n = 0.0;
  for (PixelIndex idx : mask) {
    const int v = lm.label(idx);
    if (v == albalance::kUnlabeled) continue;
    counts[v] += 1.0;
    n += 1.0;
  }
  for (auto& x : counts) x /= n;
  return counts;
}

struct Scores {
  double info, balance, score, mean_entropy;
};

// Information, balance and combined score with region-area scaling.
inline Scores balanced_score(const ProbabilityMap& pm, const PixelSet& mask, const std::vector<double>& raw_iou,
                             int region_size, double eps = 1e-3) {
  const int c = pm.num_classes();
  std::vector<double> p(c);
  double psum = 0.0;
  for (int k = 0; k < c; ++k) {
    p[k] = raw_iou[k] < eps ? eps : raw_iou[k];
    psum += p[k];
  }
  for (auto& x : p) x /= psum;
  const double mean_h = entropy(pm, mask) / static_cast<double>(mask.size());
  std::vector<double> count(c, 0.0);
  for (PixelIndex idx : mask) count[argmax(pm, idx)] += 1.0;
  double balance = 0.0;
  for (int k = 0; k < c; ++k) balance += (count[k] / static_cast<double>(mask.size())) / p[k];
  const double info = mean_h * region_size * region_size;
  return {info, balance, info / (1.0 + std::exp(-balance)), mean_h};
}

inline std::vector<double> ratio_thresholds(const std::vector<double>& raw, double base) {
  double mean = 0.0;
  for (double v : raw) mean += v;
  mean /= static_cast<double>(raw.size());
  std::vector<double> k;
  for (double v : raw) k.push_back(std::min(1.0, base * std::exp(mean - v)));
  return k;
}

// Direct evaluation of the per-anchor contrastive loss, without shifting.
inline double contrastive(const std::vector<std::vector<double>>& anchors,
                          const std::vector<std::vector<std::vector<double>>>& pos,
                          const std::vector<std::vector<std::vector<double>>>& neg, double tau) {
  auto unit = [](std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  double total = 0.0;
  int used = 0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (pos[a].empty() || neg[a].empty()) continue;
    const auto anc = unit(anchors[a]);
    double neg_sum = 0.0;
    for (const auto& n : neg[a]) neg_sum += std::exp(dot(anc, unit(n)) / tau);
    double l = 0.0;
    for (const auto& p : pos[a]) {
      const double e = std::exp(dot(anc, unit(p)) / tau);
      l += -std::log(e / (e + neg_sum));
    }
    total += l / static_cast<double>(pos[a].size());
    ++used;
  }
  return used == 0 ? 0.0 : total / used;
}

struct ConfusionOracle {
  std::vector<std::vector<std::uint64_t>> counts;
  std::vector<double> iou, f1;
  double miou = 0.0, mean_f1 = 0.0;
};

inline ConfusionOracle confusion(const LabelMask& pred, const LabelMask& truth, int c) {
  ConfusionOracle o;
  o.counts.assign(c, std::vector<std::uint64_t>(c, 0));
  for (std::size_t p = 0; p < truth.num_pixels(); ++p) {
    const int t = truth.label(static_cast<PixelIndex>(p));
    const int q = pred.label(static_cast<PixelIndex>(p));
    if (t == albalance::kUnlabeled || q == albalance::kUnlabeled) continue;
    o.counts[t][q] += 1;
  }
  int present = 0;
  for (int k = 0; k < c; ++k) {
    double tp = static_cast<double>(o.counts[k][k]), fp = 0.0, fn = 0.0, row = 0.0;
    for (int j = 0; j < c; ++j) {
      row += static_cast<double>(o.counts[k][j]);
      if (j != k) {
        fn += static_cast<double>(o.counts[k][j]);
        fp += static_cast<double>(o.counts[j][k]);
      }
    }
    const double iou = tp + fp + fn > 0 ? tp / (tp + fp + fn) : 0.0;
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    o.iou.push_back(iou);
    o.f1.push_back(f1);
    if (row > 0) {
      o.miou += iou;
      o.mean_f1 += f1;
      ++present;
    }
  }
  if (present > 0) {
    o.miou /= present;
    o.mean_f1 /= present;
  }
  return o;
}

}  // namespace oracle
