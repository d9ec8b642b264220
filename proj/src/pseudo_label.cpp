#include "albalance/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "albalance/metrics.hpp"

namespace albalance {

namespace {

struct Candidate {
  double score;
  PixelIndex idx;
};

bool by_score(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.idx < b.idx;
}

LabelMask human_only(const LabelMask& labeled) {
  LabelMask out = labeled;
  for (std::size_t p = 0; p < out.num_pixels(); ++p) {
    if (out.provenance(static_cast<PixelIndex>(p)) == Provenance::Pseudo) out.clear(static_cast<PixelIndex>(p));
  }
  return out;
}

void check_dims(const ProbabilityMap& pm, const LabelMask& labeled) {
  if (pm.height() != labeled.height() || pm.width() != labeled.width()) {
    throw Error("probability map and label mask dimensions differ");
  }
}

}  // namespace

void PseudoConfig::validate() const {
  if (!(base > 0.0 && base <= 1.0)) throw Error("pseudo-label base must lie in (0, 1]");
}

std::vector<double> ratio_thresholds(const std::vector<double>& raw_iou, const PseudoConfig& cfg) {
  cfg.validate();
  if (raw_iou.empty()) return {};
  const double mean = std::accumulate(raw_iou.begin(), raw_iou.end(), 0.0) /
                      static_cast<double>(raw_iou.size());
  std::vector<double> k(raw_iou.size());
  for (std::size_t c = 0; c < raw_iou.size(); ++c) {
    k[c] = std::min(1.0, cfg.base * std::exp(mean - raw_iou[c]));
  }
  return k;
}

LabelMask generate_pseudo(const ProbabilityMap& pm, const LabelMask& labeled,
                          const std::vector<double>& ratios) {
  check_dims(pm, labeled);
  const int num_classes = pm.num_classes();
  if (static_cast<int>(ratios.size()) != num_classes) throw Error("one ratio per class is required");
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error("pseudo-label ratios must lie in [0, 1]");
  }
  LabelMask out = human_only(labeled);
  std::vector<std::vector<Candidate>> per_class(num_classes);
  for (std::size_t p = 0; p < out.num_pixels(); ++p) {
    const auto idx = static_cast<PixelIndex>(p);
    if (out.decided(idx)) continue;
    const auto probs = pm.pixel(idx);
    const int c = argmax(probs);
    per_class[c].push_back({probs[c], idx});
  }
  for (int c = 0; c < num_classes; ++c) {
    auto& cands = per_class[c];
    const auto take = static_cast<std::size_t>(
        std::floor(ratios[c] * static_cast<double>(cands.size())));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                      by_score);
    for (std::size_t k = 0; k < take; ++k) {
      out.set(cands[k].idx, static_cast<std::uint8_t>(c), Provenance::Pseudo);
    }
  }
  return out;
}

LabelMask generate_pseudo_global(const ProbabilityMap& pm, const LabelMask& labeled,
                                 std::size_t total) {
  check_dims(pm, labeled);
  LabelMask out = human_only(labeled);
  std::vector<Candidate> cands;
  for (std::size_t p = 0; p < out.num_pixels(); ++p) {
    const auto idx = static_cast<PixelIndex>(p);
    if (out.decided(idx)) continue;
    const auto probs = pm.pixel(idx);
    cands.push_back({probs[argmax(probs)], idx});
  }
  const auto take = std::min(total, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(),
                    by_score);
  for (std::size_t k = 0; k < take; ++k) {
    const auto idx = cands[k].idx;
    out.set(idx, static_cast<std::uint8_t>(argmax(pm.pixel(idx))), Provenance::Pseudo);
  }
  return out;
}

std::vector<std::size_t> pseudo_counts(const LabelMask& lm, int num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t p = 0; p < lm.num_pixels(); ++p) {
    const auto idx = static_cast<PixelIndex>(p);
    if (lm.provenance(idx) == Provenance::Pseudo) ++counts[lm.label(idx)];
  }
  return counts;
}

}  // namespace albalance
