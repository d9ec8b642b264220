#pragma once

// The active-learning loop: partition, initial selection, training,
// scoring, labeling, pseudo-labeling and retraining until the labeling
// budget is spent.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "albalance/acquisition.hpp"
#include "albalance/dataset.hpp"
#include "albalance/edges.hpp"
#include "albalance/metrics.hpp"
#include "albalance/pseudo_label.hpp"
#include "albalance/segmenter.hpp"
#include "albalance/units.hpp"

namespace albalance {

/// Switches for each balancing component. Turning one off falls back to:
/// edge_units -> grid cells only; clip_init -> random initial units;
/// perf_balance -> score = info; pseudo -> no pseudo-labels;
/// pseudo_balance -> one class-agnostic ranking selecting the same count;
/// contrastive -> cross-entropy only; contrastive_balance -> anchors from all classes.
struct Ablation {
  bool edge_units = true;
  bool clip_init = true;
  bool perf_balance = true;
  bool pseudo = true;
  bool pseudo_balance = true;
  bool contrastive = true;
  bool contrastive_balance = true;

  static Ablation all_off();
  nlohmann::json to_json() const;
};

struct RunConfig {
  Strategy strategy = Strategy::Balanced;
  int region_size = 80;
  double initial_fraction = 0.05;
  std::uint64_t round_budget_pixels = 500ULL * 80 * 80;
  double total_budget_fraction = 0.20;
  std::size_t images_per_round = 100;
  std::uint64_t seed = 0;
  Ablation ablation;
  EdgeConfig edge;
  PseudoConfig pseudo;
  TrainConfig train;
  int embedding_dim = 16;
  double perf_eps = 1e-3;
  /// Subtract the candidate-pool mean of the balance term before the sigmoid.
  bool balance_center_pool_mean = false;
  /// Wall-clock seconds in the log; off gives byte-reproducible logs.
  bool record_wall_time = true;
  /// Stop after this many logged iterations (0 = run to budget).
  int max_iterations = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Preset matching the full balanced method (all components on).
RunConfig balanced_preset();
/// Baseline presets: plain grid cells, random initial units, no pseudo-labels
/// and no contrastive term, ranked by `strategy`.
RunConfig baseline_preset(Strategy strategy);

struct RunRecord {
  int iteration = 0;
  double budget_fraction = 0.0;
  std::uint64_t labeled_pixels = 0;
  std::vector<double> per_class_iou;
  double miou = 0.0;
  double mean_f1 = 0.0;
  double min_iou = 0.0;
  std::vector<std::size_t> pseudo_pixel_counts;
  double wall_time = 0.0;

  nlohmann::json to_json() const;
};

struct RunLog {
  std::vector<RunRecord> records;
  /// One JSON object per line.
  std::string to_jsonl() const;
};

/// Labels delivered for one unit, in the unit's mask order. `skipped`
/// units are left unlabeled.
struct LabelResult {
  UnitId unit_id;
  bool skipped = false;
  std::vector<std::uint8_t> labels;
};

/// Source of annotations for each acquisition round. Implementations call
/// `deliver` once per unit (in any order) before returning.
class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual void label_round(const std::vector<LabelingUnit>& units,
                           const std::function<void(const LabelResult&)>& deliver) = 0;
};

/// Ground-truth classes for exactly the unit's mask.
std::vector<std::uint8_t> oracle_label(const LabelingUnit& unit, const LabelMask& truth);

/// Simulated annotator revealing ground truth.
class OracleLabeler final : public Labeler {
 public:
  explicit OracleLabeler(const Dataset& ds);
  void label_round(const std::vector<LabelingUnit>& units,
                   const std::function<void(const LabelResult&)>& deliver) override;

 private:
  const Dataset& ds_;
};

/// Writes `labels` (in mask order) as HUMAN labels; returns how many
/// pixels were not HUMAN-labeled before.
std::uint64_t apply_labels(LabelMask& labeled, const LabelingUnit& unit,
                           const std::vector<std::uint8_t>& labels);

/// Run-length labels over a unit's mask: flat [class, count, class, count, ...].
std::vector<std::uint32_t> rle_encode_labels(const std::vector<std::uint8_t>& labels);
std::vector<std::uint8_t> rle_decode_labels(const std::vector<std::uint32_t>& runs);

struct RunState {
  std::vector<LabelMask> human;     // per training image
  std::vector<LabelMask> training;  // human + pseudo, what the model sees
  std::vector<LabelingUnit> labeled_units;
  std::set<std::uint64_t> labeled_ids;
  std::uint64_t labeled_pixels = 0;
  std::uint64_t total_pixels = 0;
  ModelParams params;
  ClassStats stats;
  int iteration = 0;
  std::vector<MetricReport> history;
  std::vector<ProbabilityMap> train_probs;
};

/// Progress hooks for observers such as the annotation server.
struct RunHooks {
  std::function<void(const nlohmann::json& status)> on_status;
  std::function<void(const RunRecord& record)> on_record;
};

struct JournalOptions {
  std::filesystem::path path;
  /// Replay an existing journal before continuing.
  bool resume = false;
};

/// Runs the loop to budget. With a journal, every label and iteration is
/// recorded; resuming replays recorded labels and verifies recorded
/// iterations, then continues live.
RunLog run_loop(const RunConfig& cfg, const Dataset& ds, Labeler& labeler,
                const std::optional<JournalOptions>& journal = std::nullopt,
                const RunHooks& hooks = {}, RunState* final_state = nullptr);

/// Full-image inference on every scene, pooled into one report.
MetricReport eval_checkpoint(const ModelParams& params, const std::vector<SynthScene>& scenes,
                             int num_classes);

/// IoU per class of the model's argmax on HUMAN pixels only.
std::vector<double> labeled_iou(const std::vector<ProbabilityMap>& probs,
                                const std::vector<LabelMask>& human, int num_classes);

}  // namespace albalance
