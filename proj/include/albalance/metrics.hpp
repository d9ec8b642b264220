#pragma once

#include <cstdint>
#include <vector>

#include "albalance/tensor.hpp"

namespace albalance {

/// Segmentation quality against ground truth. Means run over classes that
/// occur in the truth only.
struct MetricReport {
  std::vector<double> per_class_iou;
  double miou = 0.0;
  std::vector<double> per_class_f1;
  double mean_f1 = 0.0;
  /// confusion[truth][pred] pixel counts.
  std::vector<std::vector<std::uint64_t>> confusion;
  /// Which classes have at least one truth pixel.
  std::vector<bool> present;
  double beta = 1.0;

  /// Smallest IoU among present classes.
  double min_iou() const;
};

/// Shannon entropy (natural log) summed over the masked pixels; 0 ln 0 = 0.
double entropy_sum(const ProbabilityMap& pm, const PixelSet& mask);

/// Entropy of one pixel distribution.
double pixel_entropy(std::span<const double> probs);

/// Hard labels, smallest index on ties. Provenance stays None, so the
/// result is not a valid LabelMask for training until provenance is set.
LabelMask argmax_map(const ProbabilityMap& pm);

/// Index of the largest entry, smallest index on ties.
int argmax(std::span<const double> probs);

/// Fraction of decided masked pixels per class. Throws if every masked
/// pixel is unlabeled.
std::vector<double> class_proportions(const LabelMask& lm, const PixelSet& mask,
                                      int num_classes);

/// Confusion, IoU and F1 of `pred` against `truth`. Unlabeled truth pixels
/// are ignored. Throws on a dimension mismatch or an undecided prediction
/// at a decided truth pixel.
MetricReport evaluate(const LabelMask& pred, const LabelMask& truth, int num_classes);

/// confusion[truth][pred], grown to C x C on first use.
using Confusion = std::vector<std::vector<std::uint64_t>>;

/// Adds one pred/truth pair into a running confusion matrix.
void accumulate_confusion(const LabelMask& pred, const LabelMask& truth, int num_classes,
                          Confusion& confusion);

/// IoU, F1 and their means from a confusion matrix.
MetricReport metrics_from_confusion(Confusion confusion);

}  // namespace albalance
