// Acceptance gate: one PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "albalance/acquisition.hpp"
#include "albalance/harness.hpp"
#include "albalance/metrics.hpp"
#include "albalance/pseudo_label.hpp"
#include "albalance/segmenter.hpp"
#include "albalance/synth.hpp"
#include "albalance/units.hpp"
#include "../support/e2e.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"

using namespace albalance;

namespace {

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s %-22s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void formula_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240501);
  std::uniform_int_distribution<int> side(1, 8), classes(2, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double e_entropy = 0, e_prop = 0, e_score = 0, e_ratio = 0, e_nce = 0;
  const int instances = 200;
  for (int t = 0; t < instances; ++t) {
    const int h = side(rng), w = side(rng), c = classes(rng);
    const auto pm = oracle::random_prob_map(rng, h, w, c);
    const auto mask = oracle::random_mask(rng, h * w);
    e_entropy = std::max(e_entropy, rel_err(entropy_sum(pm, mask), oracle::entropy(pm, mask)));

    auto labels = oracle::random_labels(rng, h, w, c, 0.3);
    labels.set(mask.front(), 0, Provenance::Human);
    const auto got_p = class_proportions(labels, mask, c);
    const auto want_p = oracle::proportions(labels, mask, c);
    for (int k = 0; k < c; ++k) e_prop = std::max(e_prop, std::abs(got_p[k] - want_p[k]));

    std::vector<double> raw(c);
    for (auto& v : raw) v = u(rng) < 0.15 ? 0.0 : u(rng);
    LabelingUnit unit;
    unit.mask = mask;
    unit.cost = mask.size();
    const int region = 1 + static_cast<int>(rng() % 8);
    const auto got_s = balanced_score(pm, unit, normalize_perf(raw), region);
    const auto want_s = oracle::balanced_score(pm, mask, raw, region);
    e_score = std::max({e_score, rel_err(got_s.info, want_s.info), rel_err(got_s.balance, want_s.balance),
                        rel_err(got_s.score, want_s.score)});

    const double base = 0.1 + 0.9 * u(rng);
    const auto got_k = ratio_thresholds(raw, PseudoConfig{base});
    const auto want_k = oracle::ratio_thresholds(raw, base);
    for (int k = 0; k < c; ++k) e_ratio = std::max(e_ratio, std::abs(got_k[k] - want_k[k]));

    const int dim = 2 + static_cast<int>(rng() % 6);
    std::normal_distribution<double> g(0, 1);
    auto vec = [&] {
      std::vector<double> v(dim);
      for (auto& x : v) x = g(rng);
      return v;
    };
    std::vector<std::vector<double>> anchors;
    std::vector<std::vector<std::vector<double>>> pos, neg;
    for (int a = 0; a < 1 + static_cast<int>(rng() % 4); ++a) {
      anchors.push_back(vec());
      pos.emplace_back();
      neg.emplace_back();
      for (int i = 0; i < 1 + static_cast<int>(rng() % 6); ++i) pos.back().push_back(vec());
      for (int i = 0; i < 1 + static_cast<int>(rng() % 8); ++i) neg.back().push_back(vec());
    }
    const double tau = 0.1 + 0.4 * u(rng);
    const double got_l = contrastive_loss(ContrastiveBatch::from_vectors(anchors, pos, neg, tau)).loss;
    e_nce = std::max(e_nce, rel_err(got_l, oracle::contrastive(anchors, pos, neg, tau)));
  }
  const double secs = seconds_since(t0);
  const bool pass = e_entropy <= 1e-9 && e_prop <= 1e-9 && e_score <= 1e-9 && e_ratio <= 1e-9 && e_nce <= 1e-6 && secs < 10.0;
  report("formula_oracles", pass,
         fmt("n=200 max_err entropy=%.1e prop=%.1e score=%.1e ratio=%.1e", e_entropy, e_prop, e_score, e_ratio) +
             fmt(" nce=%.1e (tol 1e-9, nce 1e-6) %.2fs<10s", e_nce, secs));
}

void gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 100; seed < 110; ++seed) worst = std::max(worst, oracle::max_relative_grad_error(oracle::grad_instance(seed)));
  const double secs = seconds_since(t0);
  report("gradient_check", worst <= 1e-4 && secs < 30.0,
         fmt("10 instances h=1e-5 max_rel_err=%.2e (tol 1e-4) %.2fs<30s", worst, secs));
}

void evaluate_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> side(1, 12), classes(2, 7);
  bool counts_exact = true;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int h = side(rng), w = side(rng), c = classes(rng);
    const auto truth = oracle::random_labels(rng, h, w, c, 0.2);
    const auto pred = oracle::random_labels(rng, h, w, c, 0.0);
    const auto got = evaluate(pred, truth, c);
    const auto want = oracle::confusion(pred, truth, c);
    counts_exact &= got.confusion == want.counts;
    for (int k = 0; k < c; ++k) {
      worst = std::max({worst, std::abs(got.per_class_iou[k] - want.iou[k]), std::abs(got.per_class_f1[k] - want.f1[k])});
    }
    worst = std::max({worst, std::abs(got.miou - want.miou), std::abs(got.mean_f1 - want.mean_f1)});
  }
  report("evaluate_oracle", counts_exact && worst <= 1e-12,
         fmt("100 pairs counts_exact=%.0f max_err=%.1e (tol 1e-12)", counts_exact ? 1.0 : 0.0, worst));
}

void pseudo_balance() {
  // Class 3 is the weak class: lower IoU and less confident predictions.
  const int h = 64, w = 64, c = 4, weak = 3;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data;
  for (int p = 0; p < h * w; ++p) {
    const int k = static_cast<int>(rng() % c);
    const double top = k == weak ? 0.40 + 0.3 * u(rng) : 0.60 + 0.39 * u(rng);
    for (int j = 0; j < c; ++j) data.push_back(j == k ? top : (1.0 - top) / (c - 1));
  }
  const ProbabilityMap pm(h, w, c, data);
  LabelMask labeled(h, w);
  const std::vector<double> raw_iou = {0.9, 0.85, 0.8, 0.3};
  const auto specific = generate_pseudo(pm, labeled, ratio_thresholds(raw_iou, PseudoConfig{}));
  const auto sc = pseudo_counts(specific, c);
  std::size_t total = 0;
  for (auto n : sc) total += n;
  const auto global = pseudo_counts(generate_pseudo_global(pm, labeled, total), c);
  std::size_t candidates = 0;
  for (int p = 0; p < h * w; ++p) candidates += argmax(pm.pixel(static_cast<PixelIndex>(p))) == weak;
  const double f_specific = static_cast<double>(sc[weak]) / static_cast<double>(candidates);
  const double f_global = static_cast<double>(global[weak]) / static_cast<double>(candidates);
  std::size_t global_total = 0;
  for (auto n : global) global_total += n;
  report("pseudo_balance", f_specific > f_global && global_total == total,
         fmt("weak-class pseudo fraction class-specific=%.3f > global=%.3f (same total %.0f)", f_specific, f_global,
             static_cast<double>(total)));
}

void edge_coverage() {
  const EdgeConfig cfg;
  double worst_cover = 1.0, worst_share = 0.0;
  bool cost_ok = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = synth_polygon_scene(seed, 128);
    const auto units = partition_units(scene.image, cfg, 16, 0.0, scene.id);
    const auto boundary = boundary_pixels(scene.truth);
    std::vector<std::uint8_t> in_edge(scene.truth.num_pixels(), 0);
    std::uint64_t cost = 0, edge_px = 0;
    for (const auto& u : units) {
      cost += u.cost;
      if (u.kind != UnitKind::Edge) continue;
      edge_px += u.cost;
      for (auto p : u.mask) in_edge[p] = 1;
    }
    std::size_t b = 0, covered = 0;
    for (std::size_t p = 0; p < boundary.size(); ++p) {
      if (!boundary[p]) continue;
      ++b;
      covered += in_edge[p];
    }
    cost_ok &= cost == scene.truth.num_pixels();
    if (b > 0) worst_cover = std::min(worst_cover, static_cast<double>(covered) / static_cast<double>(b));
    worst_share = std::max(worst_share, static_cast<double>(edge_px) / static_cast<double>(scene.truth.num_pixels()));
  }
  report("edge_coverage", worst_cover >= 0.95 && worst_share <= 0.40 && cost_ok,
         fmt("20 scenes min_boundary_cover=%.3f (>=0.95) max_edge_share=%.3f (<=0.40) cost_sum_ok=%.0f", worst_cover,
             worst_share, cost_ok ? 1.0 : 0.0));
}

struct Summary {
  double miou = 0.0;
  double min_iou = 0.0;
};

Summary final_of(const RunLog& log) { return {log.records.back().miou, log.records.back().min_iou}; }

void end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  Summary bal, ent, rnd, abl;
  const int seeds = 5;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto ds = e2e::dataset(seed);
    OracleLabeler labeler(ds);
    auto add = [](Summary& s, const Summary& r) {
      s.miou += r.miou / seeds;
      s.min_iou += r.min_iou / seeds;
    };
    add(bal, final_of(run_loop(e2e::config(Strategy::Balanced, seed), ds, labeler)));
    add(ent, final_of(run_loop(e2e::config(Strategy::Entropy, seed), ds, labeler)));
    add(rnd, final_of(run_loop(e2e::config(Strategy::Random, seed), ds, labeler)));
    auto ablated = e2e::config(Strategy::Balanced, seed);
    ablated.ablation.pseudo_balance = false;
    add(abl, final_of(run_loop(ablated, ds, labeler)));
  }
  const double secs = seconds_since(t0);
  const bool order = bal.miou > ent.miou && ent.miou > rnd.miou;
  const bool min_class = bal.min_iou > ent.min_iou;
  report("e2e_strategy_order", order && min_class && secs < 300.0,
         fmt("5 seeds @20%% mIoU balanced=%.4f entropy=%.4f random=%.4f", bal.miou, ent.miou, rnd.miou) +
             fmt(" min-class balanced=%.4f entropy=%.4f %.0fs<300s", bal.min_iou, ent.min_iou, secs));
  report("ablation_pseudo_balance", abl.miou <= bal.miou,
         fmt("5 seeds mIoU without pseudo_balance=%.4f <= full=%.4f", abl.miou, bal.miou));
}

/// Oracle labeler that throws partway through a round.
class CrashingLabeler final : public Labeler {
 public:
  CrashingLabeler(const Dataset& ds, int rounds) : inner_(ds), rounds_(rounds) {}
  void label_round(const std::vector<LabelingUnit>& units,
                   const std::function<void(const LabelResult&)>& deliver) override {
    if (rounds_-- == 0) {
      inner_.label_round({units.begin(), units.begin() + static_cast<std::ptrdiff_t>(units.size() / 2)}, deliver);
      throw std::runtime_error("simulated crash");
    }
    inner_.label_round(units, deliver);
  }

 private:
  OracleLabeler inner_;
  int rounds_;
};

void determinism() {
  const std::uint64_t seed = 3;
  const auto ds = e2e::dataset(seed);
  const auto cfg = e2e::config(Strategy::Balanced, seed);
  OracleLabeler labeler(ds);
  const auto a = run_loop(cfg, ds, labeler).to_jsonl();
  const auto b = run_loop(cfg, ds, labeler).to_jsonl();

  const auto path = std::filesystem::temp_directory_path() / "albalance_acceptance.journal";
  std::filesystem::remove(path);
  CrashingLabeler crashing(ds, 3);
  bool crashed = false;
  try {
    run_loop(cfg, ds, crashing, JournalOptions{path, false});
  } catch (const std::runtime_error&) {
    crashed = true;
  }
  const auto resumed = run_loop(cfg, ds, labeler, JournalOptions{path, true}).to_jsonl();
  std::filesystem::remove(path);
  report("determinism_resume", a == b && crashed && resumed == a,
         fmt("identical_runs=%.0f crash_injected=%.0f resumed_identical=%.0f bytes=%.0f", a == b, crashed, resumed == a,
             static_cast<double>(a.size())));
}

}  // namespace

int main() {
  formula_oracles();
  gradient_check();
  evaluate_oracle();
  pseudo_balance();
  edge_coverage();
  end_to_end();
  determinism();
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
