#include "albalance/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace albalance {

double MetricReport::min_iou() const {
  double best = 1.0;
  bool any = false;
  for (std::size_t c = 0; c < per_class_iou.size(); ++c) {
    if (!present[c]) continue;
    best = any ? std::min(best, per_class_iou[c]) : per_class_iou[c];
    any = true;
  }
  return any ? best : 0.0;
}

double pixel_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double entropy_sum(const ProbabilityMap& pm, const PixelSet& mask) {
  const auto n = pm.num_pixels();
  double total = 0.0;
  for (PixelIndex idx : mask) {
    if (idx >= n) throw Error("mask index " + std::to_string(idx) + " out of bounds");
    total += pixel_entropy(pm.pixel(idx));
  }
  return total;
}

int argmax(std::span<const double> probs) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(probs.size()); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

LabelMask argmax_map(const ProbabilityMap& pm) {
  std::vector<std::uint8_t> labels(pm.num_pixels());
  for (std::size_t p = 0; p < labels.size(); ++p) {
    labels[p] = static_cast<std::uint8_t>(argmax(pm.pixel(static_cast<PixelIndex>(p))));
  }
  return LabelMask(pm.height(), pm.width(), std::move(labels),
                   std::vector<Provenance>(pm.num_pixels(), Provenance::None));
}

std::vector<double> class_proportions(const LabelMask& lm, const PixelSet& mask,
                                      int num_classes) {
  if (mask.empty()) throw Error("class_proportions: empty mask");
  std::vector<double> counts(num_classes, 0.0);
  std::size_t decided = 0;
  for (PixelIndex idx : mask) {
    if (idx >= lm.num_pixels()) throw Error("mask index " + std::to_string(idx) + " out of bounds");
    const auto code = lm.label(idx);
    if (code == kUnlabeled) continue;
    if (code >= num_classes) throw Error("label code exceeds class count");
    counts[code] += 1.0;
    ++decided;
  }
  if (decided == 0) throw Error("no decided pixels");
  for (double& v : counts) v /= static_cast<double>(decided);
  return counts;
}

void accumulate_confusion(const LabelMask& pred, const LabelMask& truth, int num_classes,
                          Confusion& confusion) {
  if (pred.height() != truth.height() || pred.width() != truth.width()) {
    throw Error("evaluate: dimension mismatch");
  }
  if (confusion.size() != static_cast<std::size_t>(num_classes)) {
    confusion.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  }
  for (std::size_t p = 0; p < truth.num_pixels(); ++p) {
    const auto t = truth.label(static_cast<PixelIndex>(p));
    if (t == kUnlabeled) continue;
    const auto q = pred.label(static_cast<PixelIndex>(p));
    if (q == kUnlabeled) throw Error("evaluate: undecided prediction on a labeled pixel");
    if (t >= num_classes || q >= num_classes) throw Error("evaluate: label code exceeds class count");
    ++confusion[t][q];
  }
}

MetricReport metrics_from_confusion(Confusion confusion) {
  const int num_classes = static_cast<int>(confusion.size());
  MetricReport report;
  report.confusion = std::move(confusion);
  report.per_class_iou.assign(num_classes, 0.0);
  report.per_class_f1.assign(num_classes, 0.0);
  report.present.assign(num_classes, false);
  const double b2 = report.beta * report.beta;
  double iou_sum = 0.0;
  double f1_sum = 0.0;
  int n_present = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::uint64_t tp = report.confusion[c][c];
    std::uint64_t fn = 0;
    std::uint64_t fp = 0;
    for (int k = 0; k < num_classes; ++k) {
      if (k == c) continue;
      fn += report.confusion[c][k];
      fp += report.confusion[k][c];
    }
    const double denom = static_cast<double>(tp + fp + fn);
    report.per_class_iou[c] = denom > 0 ? static_cast<double>(tp) / denom : 0.0;
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f_denom = b2 * precision + recall;
    report.per_class_f1[c] = f_denom > 0 ? (1.0 + b2) * precision * recall / f_denom : 0.0;
    report.present[c] = tp + fn > 0;
    if (report.present[c]) {
      iou_sum += report.per_class_iou[c];
      f1_sum += report.per_class_f1[c];
      ++n_present;
    }
  }
  if (n_present > 0) {
    report.miou = iou_sum / n_present;
    report.mean_f1 = f1_sum / n_present;
  }
  return report;
}

MetricReport evaluate(const LabelMask& pred, const LabelMask& truth, int num_classes) {
  Confusion confusion(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  accumulate_confusion(pred, truth, num_classes, confusion);
  return metrics_from_confusion(std::move(confusion));
}

}  // namespace albalance
