#pragma once

// Class-balanced pseudo-labels for self-training.

#include <cstdint>
#include <vector>

#include "albalance/tensor.hpp"

namespace albalance {

struct PseudoConfig {
  /// Selection ratio for a class performing exactly at the mean.
  double base = 0.5;
  void validate() const;
};

/// K_c = min(1, base * exp(mean(iou) - iou_c)), on raw (unnormalized) IoU.
std::vector<double> ratio_thresholds(const std::vector<double>& raw_iou, const PseudoConfig& cfg);

/// For each class c, the top floor(K_c * n_c) unlabeled pixels predicted as
/// c (ranked by max probability, ties in row-major order) become PSEUDO
/// labels. HUMAN labels are kept; any earlier PSEUDO labels are dropped.
LabelMask generate_pseudo(const ProbabilityMap& pm, const LabelMask& labeled,
                          const std::vector<double>& ratios);

/// Class-agnostic baseline: the `total` most confident unlabeled pixels,
/// whatever their predicted class, become PSEUDO labels.
LabelMask generate_pseudo_global(const ProbabilityMap& pm, const LabelMask& labeled,
                                 std::size_t total);

/// Number of PSEUDO pixels per class.
std::vector<std::size_t> pseudo_counts(const LabelMask& lm, int num_classes);

}  // namespace albalance
