#pragma once

// Desk-scale segmentation model: handcrafted per-pixel features, a tanh
// embedding layer and a softmax classifier, trained with cross-entropy plus
// a supervised contrastive term anchored on poorly performing classes.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "albalance/tensor.hpp"

namespace albalance {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-pixel features of one image, one row per pixel.
struct FeatureMap {
  int height = 0;
  int width = 0;
  RowMatrix data;
  int dim() const { return static_cast<int>(data.cols()); }
};

/// Raw channels, 5x5 window mean and std per channel (all scaled to [0,1])
/// and Sobel magnitude of luma; borders replicate. 3*channels + 1 columns.
FeatureMap extract_features(const RasterImage& img);

int feature_dim(int channels);

struct ModelParams {
  Eigen::MatrixXd w_embed;  // d_feat x d_emb
  Eigen::VectorXd b_embed;  // d_emb
  Eigen::MatrixXd w_cls;    // d_emb x C
  Eigen::VectorXd b_cls;    // C
  /// Fixed input standardization (x - shift) * scale; empty means identity.
  /// Not trained and not part of flatten().
  Eigen::RowVectorXd input_shift;
  Eigen::RowVectorXd input_scale;

  int d_feat() const { return static_cast<int>(w_embed.rows()); }
  int d_emb() const { return static_cast<int>(w_embed.cols()); }
  int num_classes() const { return static_cast<int>(w_cls.cols()); }

  static ModelParams zeros(int d_feat, int d_emb, int num_classes);
  /// Gaussian weights with std 1/sqrt(fan_in), zero biases.
  static ModelParams random(int d_feat, int d_emb, int num_classes, std::uint64_t seed);

  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  bool all_finite() const;
};

struct ForwardResult {
  RowMatrix embeddings;     // tanh outputs, N x d_emb
  RowMatrix probabilities;  // N x C
};

/// Sets the input standardization to the per-column mean and 1/std of all
/// pixels in `features` (columns with zero spread keep scale 1).
void fit_standardization(ModelParams& params, const std::vector<FeatureMap>& features);

/// Features after the model's input standardization.
RowMatrix model_inputs(const ModelParams& params, const RowMatrix& features);

ForwardResult forward(const ModelParams& params, const RowMatrix& features);
ProbabilityMap predict(const ModelParams& params, const FeatureMap& features);

/// Classes whose IoU is below the mean; if none, the lowest-index minimum.
std::vector<int> poor_classes(const std::vector<double>& raw_iou);

/// One anchor with the rows of its positives and negatives.
struct AnchorSet {
  int anchor = 0;
  std::vector<int> positives;
  std::vector<int> negatives;
};

/// Unit-norm vectors (rows) plus anchor/positive/negative index sets.
struct ContrastiveBatch {
  RowMatrix vectors;
  std::vector<AnchorSet> anchors;
  double tau = 0.1;

  /// Packs explicit anchor, positive and negative vectors. Vectors are
  /// L2-normalized on the way in.
  static ContrastiveBatch from_vectors(
      const std::vector<std::vector<double>>& anchors,
      const std::vector<std::vector<std::vector<double>>>& positives,
      const std::vector<std::vector<std::vector<double>>>& negatives, double tau = 0.1);
};

struct ContrastiveResult {
  double loss = 0.0;
  int anchors_used = 0;
  /// Set when every anchor lacked positives or negatives; loss is 0 then.
  bool all_skipped = false;
  /// dLoss/dvectors, same shape as ContrastiveBatch::vectors.
  RowMatrix grad;
};

/// Mean over anchors of the supervised contrastive loss
///   (1/|P|) sum_{p in P} -log(exp(a.p/tau) / (exp(a.p/tau) + sum_{n in N} exp(a.n/tau)))
/// evaluated with log-sum-exp shifting. Anchors with no positives or no
/// negatives are skipped.
ContrastiveResult contrastive_loss(const ContrastiveBatch& batch, bool with_grad = false);

struct TrainConfig {
  double contrastive_weight = 0.1;
  bool contrastive = true;
  /// Anchors from below-mean classes only; otherwise from every class.
  bool contrastive_balance = true;
  double tau = 0.1;
  int anchors = 50;
  int max_positives = 512;
  int max_negatives = 1024;

  double lr = 1e-2;
  double gamma = 0.998;
  double momentum = 0.95;
  double weight_decay = 1e-4;
  int epochs = 50;
  int batch_size = 256;
  /// Pixels drawn per epoch; 0 uses every decided pixel.
  std::size_t pixels_per_epoch = 0;
  std::uint64_t seed = 0;
};

/// Labeled pixels for one loss evaluation.
struct TrainingBatch {
  RowMatrix features;
  std::vector<int> labels;
  std::vector<bool> human;
};

/// All decided pixels of one labeled image.
TrainingBatch make_batch(const FeatureMap& features, const LabelMask& labels);

struct LossResult {
  double total = 0.0;
  double cross_entropy = 0.0;
  double contrastive = 0.0;
  bool contrastive_skipped = true;
  ModelParams grad;
};

/// Mean cross-entropy over the batch plus weight * contrastive loss on the
/// normalized embeddings. Anchors, positives and negatives are drawn from
/// HUMAN pixels, deterministically from `sample_seed`.
LossResult loss_and_grad(const ModelParams& params, const TrainingBatch& batch,
                         const std::vector<double>& raw_iou, const TrainConfig& cfg,
                         std::uint64_t sample_seed);

/// The anchor sets loss_and_grad draws for a batch.
std::vector<AnchorSet> sample_anchor_sets(const TrainingBatch& batch,
                                          const std::vector<double>& raw_iou,
                                          const TrainConfig& cfg, std::uint64_t sample_seed);

struct LabeledImage {
  const FeatureMap* features = nullptr;
  const LabelMask* labels = nullptr;
};

struct FitReport {
  std::vector<double> epoch_loss;
};

/// SGD with momentum and weight decay, lr = lr0 * gamma^epoch. Throws if the
/// loss becomes non-finite, naming the epoch.
ModelParams fit(const ModelParams& init, const std::vector<LabeledImage>& data,
                const std::vector<double>& raw_iou, const TrainConfig& cfg,
                FitReport* report = nullptr);

/// Parameters as a 1 x n f64 ALRT tensor plus `<path>.json` sidecar
/// {d_feat, d_emb, C, seed, epoch, input_shift, input_scale}.
void save_params(const std::filesystem::path& path, const ModelParams& params, std::uint64_t seed,
                 int epoch);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace albalance
