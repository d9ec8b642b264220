#pragma once

// Choosing which labeling units to annotate next.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "albalance/tensor.hpp"
#include "albalance/units.hpp"

namespace albalance {

/// Per-class performance on the labeled pixels.
struct ClassStats {
  /// Measured IoU per class, in [0, 1].
  std::vector<double> raw_iou;
  /// raw_iou floored at eps and rescaled to sum to 1.
  std::vector<double> normalized_perf;
  /// Mean of raw_iou.
  double mean_perf = 0.0;
};

ClassStats normalize_perf(const std::vector<double>& raw_iou, double eps = 1e-3);

struct UnitScore {
  UnitId unit_id;
  /// Uncertainty of the unit, scaled to a nominal region area.
  double info = 0.0;
  /// Performance-weighted class mix of the unit's predicted pixels.
  double balance = 0.0;
  double score = 0.0;
  double mean_entropy = 0.0;
};

double sigmoid(double x);

/// Scores one unit: info = mean pixel entropy * region_size^2,
/// balance = sum_c N_c / p_c over the unit's argmax proportions,
/// score = info * sigmoid(balance - balance_center).
UnitScore balanced_score(const ProbabilityMap& pm, const LabelingUnit& unit,
                         const ClassStats& stats, int region_size, double balance_center = 0.0);

enum class Strategy { Balanced, Entropy, Random };

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

/// Ranks candidates by the strategy and takes the longest ranked prefix
/// whose total cost fits the budget. `scores[i]` must describe `candidates[i]`.
std::vector<LabelingUnit> select_batch(const std::vector<LabelingUnit>& candidates,
                                       const std::vector<UnitScore>& scores,
                                       std::uint64_t budget_pixels, Strategy strategy,
                                       std::uint64_t seed);

/// Ranking used by select_batch, as indices into the candidates.
std::vector<std::size_t> rank_candidates(const std::vector<UnitScore>& scores, Strategy strategy,
                                         std::uint64_t seed);

/// Every unit of up to `images_per_round` randomly chosen images.
std::vector<LabelingUnit> sample_candidate_pool(const std::vector<LabelingUnit>& unlabeled,
                                                std::size_t images_per_round, std::uint64_t seed);

struct ClassPrediction {
  int class_id = 0;
  double confidence = 0.0;
};

/// Zero-shot region classifier used to balance the initial labeled set.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual ClassPrediction classify(const LabelingUnit& unit) const = 0;
  virtual int num_classes() const = 0;
};

/// Feature of a region: per-channel mean and std (scaled to [0,1]) and an
/// 8-bin magnitude-weighted gradient orientation histogram, L2-normalized.
std::vector<double> region_feature(const RasterImage& img, const PixelSet& mask);
std::vector<double> region_feature(const RasterImage& region);

/// Nearest prototype by cosine similarity; confidence is the softmax of the
/// similarities at `temperature`. A zero feature yields class 0 at 1/C.
ClassPrediction prototype_classify(const std::vector<double>& feature,
                                   const std::vector<std::vector<double>>& prototypes,
                                   double temperature = 0.1);

/// Classifies units by matching region features against class prototypes.
class PrototypeProvider final : public EmbeddingProvider {
 public:
  using ImageLookup = std::function<const RasterImage&(const std::string&)>;

  PrototypeProvider(ImageLookup images, std::vector<std::vector<double>> prototypes,
                    double temperature = 0.1);

  ClassPrediction classify(const LabelingUnit& unit) const override;
  int num_classes() const override { return static_cast<int>(prototypes_.size()); }

 private:
  ImageLookup images_;
  std::vector<std::vector<double>> prototypes_;
  double temperature_;
};

/// Predictions imported from a JSON array of {unit_id, class, confidence},
/// e.g. produced by an external vision-language model.
class ScoreFileProvider final : public EmbeddingProvider {
 public:
  ScoreFileProvider(const nlohmann::json& records, int num_classes);

  ClassPrediction classify(const LabelingUnit& unit) const override;
  int num_classes() const override { return num_classes_; }

 private:
  std::map<std::uint64_t, ClassPrediction> predictions_;
  int num_classes_;
};

/// Class-balanced ordering of all units: round-robin over predicted classes
/// by confidence rank, at most ceil(n_select / C) per class, then the
/// remaining units by confidence. The first n_select entries are the
/// balanced selection.
std::vector<std::size_t> initial_order(const std::vector<ClassPrediction>& predictions,
                                       int num_classes, std::size_t n_select, std::uint64_t seed);

/// Balanced initial selection of `n_select` units.
std::vector<LabelingUnit> initial_select(const std::vector<LabelingUnit>& units,
                                         const EmbeddingProvider& provider, std::size_t n_select,
                                         std::uint64_t seed);

}  // namespace albalance
