#include "albalance/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "albalance/metrics.hpp"

namespace albalance {

ClassStats normalize_perf(const std::vector<double>& raw_iou, double eps) {
  ClassStats s;
  s.raw_iou = raw_iou;
  if (raw_iou.empty()) return s;
  double total = 0.0;
  s.normalized_perf.resize(raw_iou.size());
  for (std::size_t c = 0; c < raw_iou.size(); ++c) {
    if (raw_iou[c] < 0.0 || raw_iou[c] > 1.0) throw Error("IoU values must lie in [0, 1]");
    s.normalized_perf[c] = std::max(raw_iou[c], eps);
    total += s.normalized_perf[c];
  }
  for (double& v : s.normalized_perf) v /= total;
  s.mean_perf = std::accumulate(raw_iou.begin(), raw_iou.end(), 0.0) /
                static_cast<double>(raw_iou.size());
  return s;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

UnitScore balanced_score(const ProbabilityMap& pm, const LabelingUnit& unit,
                         const ClassStats& stats, int region_size, double balance_center) {
  if (unit.mask.empty()) throw Error("cannot score a unit with an empty mask");
  const int num_classes = pm.num_classes();
  if (static_cast<int>(stats.normalized_perf.size()) != num_classes) {
    throw Error("class stats do not match the probability map's class count");
  }
  std::vector<double> counts(num_classes, 0.0);
  double entropy = 0.0;
  for (PixelIndex idx : unit.mask) {
    if (idx >= pm.num_pixels()) throw Error("unit mask outside the probability map");
    const auto probs = pm.pixel(idx);
    entropy += pixel_entropy(probs);
    counts[argmax(probs)] += 1.0;
  }
  const double n = static_cast<double>(unit.mask.size());
  UnitScore out;
  out.unit_id = unit.id;
  out.mean_entropy = entropy / n;
  out.info = out.mean_entropy * static_cast<double>(region_size) * region_size;
  for (int c = 0; c < num_classes; ++c) {
    out.balance += (counts[c] / n) / stats.normalized_perf[c];
  }
  out.score = out.info * sigmoid(out.balance - balance_center);
  return out;
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Balanced: return "balanced";
    case Strategy::Entropy: return "entropy";
    case Strategy::Random: return "random";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "balanced") return Strategy::Balanced;
  if (s == "entropy") return Strategy::Entropy;
  if (s == "random") return Strategy::Random;
  throw Error("unknown strategy '" + s + "'");
}

std::vector<std::size_t> rank_candidates(const std::vector<UnitScore>& scores, Strategy strategy,
                                         std::uint64_t seed) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (strategy) {
    case Strategy::Balanced:
      std::stable_sort(order.begin(), order.end(),
                       [&](auto a, auto b) { return scores[a].score > scores[b].score; });
      break;
    case Strategy::Entropy:
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return scores[a].mean_entropy > scores[b].mean_entropy;
      });
      break;
    case Strategy::Random: {
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
      break;
    }
  }
  return order;
}

std::vector<LabelingUnit> select_batch(const std::vector<LabelingUnit>& candidates,
                                       const std::vector<UnitScore>& scores,
                                       std::uint64_t budget_pixels, Strategy strategy,
                                       std::uint64_t seed) {
  if (budget_pixels == 0) throw Error("selection budget must be positive");
  if (scores.size() != candidates.size()) throw Error("one score per candidate is required");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].unit_id != candidates[i].id) throw Error("scores are not aligned with candidates");
  }
  std::vector<LabelingUnit> out;
  std::uint64_t spent = 0;
  for (auto idx : rank_candidates(scores, strategy, seed)) {
    if (spent + candidates[idx].cost > budget_pixels) break;
    spent += candidates[idx].cost;
    out.push_back(candidates[idx]);
  }
  return out;
}

std::vector<LabelingUnit> sample_candidate_pool(const std::vector<LabelingUnit>& unlabeled,
                                                std::size_t images_per_round, std::uint64_t seed) {
  if (unlabeled.empty()) throw Error("candidate pool is empty");
  std::vector<std::string> images;
  {
    std::set<std::string> seen;
    for (const auto& u : unlabeled) {
      if (seen.insert(u.image_id).second) images.push_back(u.image_id);
    }
  }
  std::sort(images.begin(), images.end());
  std::mt19937_64 rng(seed);
  std::shuffle(images.begin(), images.end(), rng);
  images.resize(std::min(images.size(), images_per_round));
  const std::set<std::string> chosen(images.begin(), images.end());
  std::vector<LabelingUnit> out;
  for (const auto& u : unlabeled) {
    if (chosen.contains(u.image_id)) out.push_back(u);
  }
  return out;
}

namespace {

constexpr int kOrientationBins = 8;

std::vector<double> feature_from_pixels(const RasterImage& img, const PixelSet& mask) {
  const int ch = img.channels();
  const int width = img.width();
  const int height = img.height();
  std::vector<double> mean(ch, 0.0);
  std::vector<double> sq(ch, 0.0);
  std::vector<double> hist(kOrientationBins, 0.0);
  const auto luma = img.luma();
  const auto at = [&](int r, int c) {
    r = std::clamp(r, 0, height - 1);
    c = std::clamp(c, 0, width - 1);
    return luma[static_cast<std::size_t>(r) * width + c];
  };
  for (PixelIndex idx : mask) {
    if (idx >= img.num_pixels()) throw Error("region mask outside image");
    const int r = static_cast<int>(idx) / width;
    const int c = static_cast<int>(idx) % width;
    for (int k = 0; k < ch; ++k) {
      const double v = img(r, c, k) / 255.0;
      mean[k] += v;
      sq[k] += v * v;
    }
    const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                      (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
    const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                      (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
    const double mag = std::hypot(gx, gy);
    if (mag > 0.0) {
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += M_PI;
      const int bin = std::min(kOrientationBins - 1, static_cast<int>(angle / M_PI * kOrientationBins));
      hist[bin] += mag;
    }
  }
  const double n = static_cast<double>(mask.size());
  std::vector<double> f;
  for (int k = 0; k < ch; ++k) f.push_back(mean[k] / n);
  for (int k = 0; k < ch; ++k) {
    const double m = mean[k] / n;
    f.push_back(std::sqrt(std::max(0.0, sq[k] / n - m * m)));
  }
  const double hsum = std::accumulate(hist.begin(), hist.end(), 0.0);
  for (double h : hist) f.push_back(hsum > 0 ? h / hsum : 0.0);
  double norm = 0.0;
  for (double v : f) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (double& v : f) v /= norm;
  }
  return f;
}

}  // namespace

std::vector<double> region_feature(const RasterImage& img, const PixelSet& mask) {
  if (mask.empty()) throw Error("region mask is empty");
  return feature_from_pixels(img, mask);
}

std::vector<double> region_feature(const RasterImage& region) {
  return feature_from_pixels(region, full_mask(region.height(), region.width()));
}

ClassPrediction prototype_classify(const std::vector<double>& feature,
                                   const std::vector<std::vector<double>>& prototypes,
                                   double temperature) {
  if (prototypes.empty()) throw Error("no class prototypes");
  const auto num_classes = prototypes.size();
  double fnorm = 0.0;
  for (double v : feature) fnorm += v * v;
  fnorm = std::sqrt(fnorm);
  if (fnorm == 0.0) return {0, 1.0 / static_cast<double>(num_classes)};

  std::vector<double> sims(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& p = prototypes[c];
    if (p.size() != feature.size()) throw Error("prototype dimension does not match feature");
    double dot = 0.0;
    double pnorm = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      dot += p[k] * feature[k];
      pnorm += p[k] * p[k];
    }
    pnorm = std::sqrt(pnorm);
    sims[c] = pnorm > 0 ? dot / (pnorm * fnorm) : 0.0;
  }
  const int best = argmax(sims);
  double z = 0.0;
  for (double s : sims) z += std::exp((s - sims[best]) / temperature);
  return {best, 1.0 / z};
}

PrototypeProvider::PrototypeProvider(ImageLookup images, std::vector<std::vector<double>> prototypes,
                                     double temperature)
    : images_(std::move(images)), prototypes_(std::move(prototypes)), temperature_(temperature) {
  if (prototypes_.empty()) throw Error("no class prototypes");
}

ClassPrediction PrototypeProvider::classify(const LabelingUnit& unit) const {
  return prototype_classify(region_feature(images_(unit.image_id), unit.mask), prototypes_,
                            temperature_);
}

ScoreFileProvider::ScoreFileProvider(const nlohmann::json& records, int num_classes)
    : num_classes_(num_classes) {
  for (const auto& r : records) {
    ClassPrediction p{r.at("class").get<int>(), r.at("confidence").get<double>()};
    if (p.class_id < 0 || p.class_id >= num_classes) throw Error("score file class out of range");
    if (p.confidence < 0.0 || p.confidence > 1.0) throw Error("score file confidence outside [0, 1]");
    predictions_[r.at("unit_id").get<std::uint64_t>()] = p;
  }
}

ClassPrediction ScoreFileProvider::classify(const LabelingUnit& unit) const {
  auto it = predictions_.find(unit.id.value);
  if (it == predictions_.end()) {
    throw Error("score file has no prediction for unit " + std::to_string(unit.id.value));
  }
  return it->second;
}

std::vector<std::size_t> initial_order(const std::vector<ClassPrediction>& predictions,
                                       int num_classes, std::size_t n_select, std::uint64_t seed) {
  if (predictions.empty()) throw Error("initial selection pool is empty");
  if (num_classes <= 0) throw Error("class count must be positive");
  const auto n = predictions.size();
  // Seeded tiebreak among equal confidences.
  std::vector<std::size_t> tiebreak(n);
  std::iota(tiebreak.begin(), tiebreak.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(tiebreak.begin(), tiebreak.end(), rng);
  const auto by_confidence = [&](std::size_t a, std::size_t b) {
    if (predictions[a].confidence != predictions[b].confidence) {
      return predictions[a].confidence > predictions[b].confidence;
    }
    return tiebreak[a] < tiebreak[b];
  };

  std::vector<std::vector<std::size_t>> per_class(num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = predictions[i].class_id;
    if (c < 0 || c >= num_classes) throw Error("provider returned an out-of-range class");
    per_class[c].push_back(i);
  }
  for (auto& members : per_class) std::sort(members.begin(), members.end(), by_confidence);

  const std::size_t target = std::min(n_select, n);
  const std::size_t quota = (target + num_classes - 1) / static_cast<std::size_t>(num_classes);
  std::vector<std::size_t> order;
  std::vector<bool> taken(n, false);
  for (std::size_t rank = 0; rank < quota && order.size() < target; ++rank) {
    std::vector<std::size_t> level;
    for (const auto& members : per_class) {
      if (rank < members.size()) level.push_back(members[rank]);
    }
    std::sort(level.begin(), level.end(), by_confidence);
    for (auto idx : level) {
      if (order.size() == target) break;
      order.push_back(idx);
      taken[idx] = true;
    }
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::sort(rest.begin(), rest.end(), by_confidence);
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

std::vector<LabelingUnit> initial_select(const std::vector<LabelingUnit>& units,
                                         const EmbeddingProvider& provider, std::size_t n_select,
                                         std::uint64_t seed) {
  if (units.empty()) throw Error("initial selection pool is empty");
  std::vector<ClassPrediction> preds;
  preds.reserve(units.size());
  for (const auto& u : units) preds.push_back(provider.classify(u));
  const auto order = initial_order(preds, provider.num_classes(), n_select, seed);
  std::vector<LabelingUnit> out;
  for (std::size_t k = 0; k < std::min(n_select, units.size()); ++k) out.push_back(units[order[k]]);
  return out;
}

}  // namespace albalance
