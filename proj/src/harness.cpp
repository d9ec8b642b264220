#include "albalance/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "albalance/journal.hpp"

namespace albalance {

namespace {

// splitmix64 finalizer; derives independent sub-seeds from the run seed.
std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

nlohmann::json record_without_time(const nlohmann::json& j) {
  auto out = j;
  out.erase("wall_time");
  return out;
}

}  // namespace

Ablation Ablation::all_off() {
  return Ablation{false, false, false, false, false, false, false};
}

nlohmann::json Ablation::to_json() const {
  return {{"edge_units", edge_units},       {"clip_init", clip_init},
          {"perf_balance", perf_balance},   {"pseudo", pseudo},
          {"pseudo_balance", pseudo_balance}, {"contrastive", contrastive},
          {"contrastive_balance", contrastive_balance}};
}

void RunConfig::validate() const {
  if (!(initial_fraction > 0.0 && initial_fraction <= total_budget_fraction &&
        total_budget_fraction <= 1.0)) {
    throw Error("budget fractions must satisfy 0 < initial <= total <= 1");
  }
  if (region_size < 8) throw Error("region size must be at least 8");
  if (round_budget_pixels == 0) throw Error("round budget must be positive");
  if (images_per_round == 0) throw Error("images per round must be positive");
  if (embedding_dim <= 0) throw Error("embedding dimension must be positive");
  edge.validate();
  pseudo.validate();
}

nlohmann::json RunConfig::to_json() const {
  return {{"strategy", to_string(strategy)},
          {"region_size", region_size},
          {"initial_fraction", initial_fraction},
          {"round_budget_pixels", round_budget_pixels},
          {"total_budget_fraction", total_budget_fraction},
          {"images_per_round", images_per_round},
          {"seed", seed},
          {"ablation", ablation.to_json()},
          {"edge",
           {{"gaussian_kernel", edge.gaussian_kernel},
            {"canny_low", edge.canny_low},
            {"canny_high", edge.canny_high},
            {"dilation_kernel", edge.dilation_kernel},
            {"high_decrement", edge.high_decrement},
            {"max_unit_pixels", edge.max_unit_pixels}}},
          {"pseudo_base", pseudo.base},
          {"train",
           {{"contrastive_weight", train.contrastive_weight},
            {"tau", train.tau},
            {"anchors", train.anchors},
            {"max_positives", train.max_positives},
            {"max_negatives", train.max_negatives},
            {"lr", train.lr},
            {"gamma", train.gamma},
            {"momentum", train.momentum},
            {"weight_decay", train.weight_decay},
            {"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"pixels_per_epoch", train.pixels_per_epoch}}},
          {"embedding_dim", embedding_dim},
          {"perf_eps", perf_eps},
          {"balance_center_pool_mean", balance_center_pool_mean}};
}

RunConfig balanced_preset() { return RunConfig{}; }

RunConfig baseline_preset(Strategy strategy) {
  RunConfig cfg;
  cfg.strategy = strategy;
  cfg.ablation = Ablation::all_off();
  return cfg;
}

nlohmann::json RunRecord::to_json() const {
  return {{"iteration", iteration},
          {"budget_fraction", budget_fraction},
          {"labeled_pixels", labeled_pixels},
          {"per_class_iou", per_class_iou},
          {"miou", miou},
          {"mean_f1", mean_f1},
          {"min_iou", min_iou},
          {"pseudo_pixel_counts", pseudo_pixel_counts},
          {"wall_time", wall_time}};
}

std::string RunLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

std::vector<std::uint8_t> oracle_label(const LabelingUnit& unit, const LabelMask& truth) {
  if (unit.image_height != truth.height() || unit.image_width != truth.width()) {
    throw Error("unit " + std::to_string(unit.id.value) + " does not belong to this truth mask");
  }
  std::vector<std::uint8_t> labels;
  labels.reserve(unit.mask.size());
  for (PixelIndex idx : unit.mask) {
    if (idx >= truth.num_pixels()) throw Error("unit mask outside truth mask");
    labels.push_back(truth.label(idx));
  }
  return labels;
}

OracleLabeler::OracleLabeler(const Dataset& ds) : ds_(ds) {}

void OracleLabeler::label_round(const std::vector<LabelingUnit>& units,
                                const std::function<void(const LabelResult&)>& deliver) {
  std::unordered_map<std::string, const LabelMask*> truth;
  for (const auto& s : ds_.train) truth[s.id] = &s.truth;
  for (const auto& u : units) {
    auto it = truth.find(u.image_id);
    if (it == truth.end()) throw Error("no ground truth for image " + u.image_id);
    deliver({u.id, false, oracle_label(u, *it->second)});
  }
}

std::uint64_t apply_labels(LabelMask& labeled, const LabelingUnit& unit,
                           const std::vector<std::uint8_t>& labels) {
  if (labels.size() != unit.mask.size()) throw Error("label count does not match unit mask");
  std::uint64_t added = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto idx = unit.mask[k];
    if (idx >= labeled.num_pixels()) throw Error("unit mask outside label mask");
    if (labeled.provenance(idx) != Provenance::Human) ++added;
    labeled.set(idx, labels[k], Provenance::Human);
  }
  return added;
}

std::vector<std::uint32_t> rle_encode_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint32_t> runs;
  for (std::size_t i = 0; i < labels.size();) {
    std::size_t j = i;
    while (j < labels.size() && labels[j] == labels[i]) ++j;
    runs.push_back(labels[i]);
    runs.push_back(static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return runs;
}

std::vector<std::uint8_t> rle_decode_labels(const std::vector<std::uint32_t>& runs) {
  if (runs.size() % 2 != 0) throw Error("label runs must come in (class, count) pairs");
  std::vector<std::uint8_t> out;
  for (std::size_t k = 0; k < runs.size(); k += 2) {
    if (runs[k] >= kUnlabeled) throw Error("label run class out of range");
    if (runs[k + 1] == 0) throw Error("label run of length zero");
    out.insert(out.end(), runs[k + 1], static_cast<std::uint8_t>(runs[k]));
  }
  return out;
}

std::vector<double> labeled_iou(const std::vector<ProbabilityMap>& probs,
                                const std::vector<LabelMask>& human, int num_classes) {
  Confusion confusion(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    accumulate_confusion(argmax_map(probs[i]), human[i], num_classes, confusion);
  }
  return metrics_from_confusion(std::move(confusion)).per_class_iou;
}

MetricReport eval_checkpoint(const ModelParams& params, const std::vector<SynthScene>& scenes,
                             int num_classes) {
  Confusion confusion(num_classes, std::vector<std::uint64_t>(num_classes, 0));
  for (const auto& s : scenes) {
    const auto pm = predict(params, extract_features(s.image));
    accumulate_confusion(argmax_map(pm), s.truth, num_classes, confusion);
  }
  return metrics_from_confusion(std::move(confusion));
}

namespace {

/// Mutable context of one run_loop call.
class Loop {
 public:
  Loop(const RunConfig& cfg, const Dataset& ds, Labeler& labeler,
       const std::optional<JournalOptions>& journal, const RunHooks& hooks)
      : cfg_(cfg), ds_(ds), labeler_(labeler), hooks_(hooks),
        start_(std::chrono::steady_clock::now()) {
    cfg_.validate();
    if (ds_.train.empty()) throw Error("dataset has no training images");
    if (ds_.test.empty()) throw Error("dataset has no test images");
    num_classes_ = ds_.num_classes;
    if (journal) open_journal(*journal);

    for (std::size_t i = 0; i < ds_.train.size(); ++i) {
      const auto& s = ds_.train[i];
      image_index_[s.id] = i;
      train_features_.push_back(extract_features(s.image));
      state_.human.emplace_back(s.image.height(), s.image.width());
      state_.total_pixels += s.image.num_pixels();
    }
    state_.training = state_.human;
    const int d_feat = train_features_.front().dim();
    for (const auto& f : train_features_) {
      if (f.dim() != d_feat) throw Error("training images mix gray and RGB");
    }
    state_.params = ModelParams::random(d_feat, cfg_.embedding_dim, num_classes_, mix(cfg_.seed, 7));
    fit_standardization(state_.params, train_features_);
    state_.stats = normalize_perf(std::vector<double>(num_classes_, 0.0), cfg_.perf_eps);
    initial_budget_ = static_cast<std::uint64_t>(std::floor(cfg_.initial_fraction * state_.total_pixels));
    total_budget_ = static_cast<std::uint64_t>(std::floor(cfg_.total_budget_fraction * state_.total_pixels));
  }

  RunLog run() {
    auto units = unlabeled_units(0.0);
    const auto min_cost = std::min_element(units.begin(), units.end(), [](const auto& a, const auto& b) {
                            return a.cost < b.cost;
                          })->cost;
    if (initial_budget_ < min_cost) throw Error("budget below one unit's cost");

    label_units(initial_selection(units));
    train(true);
    log_iteration();

    int round = 0;
    while (state_.labeled_pixels < total_budget_) {
      if (cfg_.max_iterations > 0 && state_.iteration >= cfg_.max_iterations) break;
      ++round;
      const double fraction = budget_fraction();
      units = unlabeled_units(fraction);
      if (units.empty()) break;
      auto pool = sample_candidate_pool(units, cfg_.images_per_round, mix(cfg_.seed, 1000 + round));
      const auto scores = score(pool);
      const auto budget = std::min(cfg_.round_budget_pixels, total_budget_ - state_.labeled_pixels);
      auto chosen = select_batch(pool, scores, budget, cfg_.strategy, mix(cfg_.seed, 2000 + round));
      if (chosen.empty()) break;
      const auto before = state_.labeled_pixels;
      label_units(chosen);
      if (state_.labeled_pixels == before) break;
      refresh_pseudo_labels();
      train(false);
      log_iteration();
    }
    status("done");
    return log_;
  }

  RunState take_state() { return std::move(state_); }

 private:
  double budget_fraction() const {
    return static_cast<double>(state_.labeled_pixels) / static_cast<double>(state_.total_pixels);
  }

  void open_journal(const JournalOptions& opts) {
    if (opts.resume) {
      for (auto& rec : Journal::read_all(opts.path)) {
        const auto type = rec.value("type", "");
        if (type == "start") {
          if (rec.at("config") != cfg_.to_json()) {
            throw Error("journal was written by a different configuration");
          }
          saw_start_ = true;
        } else if (type == "label" || type == "skip") {
          const auto id = rec.at("unit_id").get<std::uint64_t>();
          replay_labels_[id] = std::move(rec);
        } else if (type == "iteration") {
          replay_iterations_[rec.at("record").at("iteration").get<int>()] = rec.at("record");
        }
      }
    }
    journal_ = std::make_unique<Journal>(opts.path, !opts.resume);
    if (!saw_start_) {
      journal_->append({{"type", "start"}, {"config", cfg_.to_json()}});
      saw_start_ = true;
    }
  }

  void status(const char* phase, std::size_t queued = 0) {
    if (!hooks_.on_status) return;
    hooks_.on_status({{"phase", phase},
                      {"iteration", state_.iteration},
                      {"labeled_pixels", state_.labeled_pixels},
                      {"total_pixels", state_.total_pixels},
                      {"budget_fraction", budget_fraction()},
                      {"total_budget_pixels", total_budget_},
                      {"queued", queued}});
  }

  const BinaryMask& edges_for(std::size_t image, double fraction) {
    const double high = schedule_high_threshold(cfg_.edge, fraction);
    auto key = std::make_pair(image, high);
    auto it = edge_cache_.find(key);
    if (it == edge_cache_.end()) {
      it = edge_cache_.emplace(key, edge_mask(ds_.train[image].image, cfg_.edge, fraction)).first;
    }
    return it->second;
  }

  // Current partition of every training image, restricted to pixels not yet
  // HUMAN-labeled. Ids are fresh on every call.
  std::vector<LabelingUnit> unlabeled_units(double fraction) {
    std::vector<LabelingUnit> out;
    for (std::size_t i = 0; i < ds_.train.size(); ++i) {
      const auto& s = ds_.train[i];
      const int h = s.image.height();
      const int w = s.image.width();
      auto base = cfg_.ablation.edge_units
                      ? partition_from_edges(edges_for(i, fraction), h, w, cfg_.region_size,
                                             cfg_.edge.max_unit_pixels, s.id)
                      : grid_units(h, w, cfg_.region_size, s.id);
      const auto& human = state_.human[i];
      for (auto& u : base) {
        PixelSet rest;
        for (PixelIndex idx : u.mask) {
          if (human.provenance(idx) != Provenance::Human) rest.push_back(idx);
        }
        if (rest.empty()) continue;
        u.mask = std::move(rest);
        u.cost = u.mask.size();
        u.id = UnitId{next_id_++};
        out.push_back(std::move(u));
      }
    }
    return out;
  }

  std::vector<LabelingUnit> initial_selection(const std::vector<LabelingUnit>& units) {
    std::vector<std::size_t> order;
    if (cfg_.ablation.clip_init && !ds_.prototypes.empty()) {
      PrototypeProvider provider(
          [this](const std::string& id) -> const RasterImage& { return ds_.train[image_index_.at(id)].image; },
          ds_.prototypes);
      std::vector<ClassPrediction> preds;
      std::uint64_t cost_sum = 0;
      for (const auto& u : units) {
        preds.push_back(provider.classify(u));
        cost_sum += u.cost;
      }
      const double mean_cost = static_cast<double>(cost_sum) / static_cast<double>(units.size());
      const auto n_select = static_cast<std::size_t>(std::ceil(static_cast<double>(initial_budget_) / mean_cost));
      order = initial_order(preds, num_classes_, n_select, mix(cfg_.seed, 1));
    } else {
      order.resize(units.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(mix(cfg_.seed, 1));
      std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<LabelingUnit> chosen;
    std::uint64_t spent = 0;
    for (auto idx : order) {
      if (spent + units[idx].cost > initial_budget_) break;
      spent += units[idx].cost;
      chosen.push_back(units[idx]);
    }
    return chosen;
  }

  std::vector<UnitScore> score(const std::vector<LabelingUnit>& pool) const {
    std::vector<UnitScore> scores;
    scores.reserve(pool.size());
    for (const auto& u : pool) {
      const auto& pm = state_.train_probs[image_index_.at(u.image_id)];
      auto s = balanced_score(pm, u, state_.stats, cfg_.region_size);
      if (!cfg_.ablation.perf_balance) s.score = s.info;
      scores.push_back(s);
    }
    if (cfg_.ablation.perf_balance && cfg_.balance_center_pool_mean && !scores.empty()) {
      double mean = 0.0;
      for (const auto& s : scores) mean += s.balance;
      mean /= static_cast<double>(scores.size());
      for (auto& s : scores) s.score = s.info * sigmoid(s.balance - mean);
    }
    return scores;
  }

  void label_units(const std::vector<LabelingUnit>& units) {
    std::map<std::uint64_t, const LabelingUnit*> pending;
    for (const auto& u : units) pending[u.id.value] = &u;

    auto deliver = [&](const LabelResult& r, bool from_journal) {
      auto it = pending.find(r.unit_id.value);
      if (it == pending.end()) throw Error("label delivered for a unit that is not queued");
      const auto& unit = *it->second;
      if (!r.skipped) {
        if (r.labels.size() != unit.mask.size()) throw Error("label count does not match unit mask");
        for (auto v : r.labels) {
          if (v >= num_classes_) throw Error("label class out of range");
        }
        auto& human = state_.human[image_index_.at(unit.image_id)];
        state_.labeled_pixels += apply_labels(human, unit, r.labels);
        state_.labeled_units.push_back(unit);
        state_.labeled_ids.insert(unit.id.value);
      }
      if (journal_ && !from_journal) {
        nlohmann::json rec = {{"type", r.skipped ? "skip" : "label"},
                              {"iteration", state_.iteration},
                              {"unit_id", unit.id.value},
                              {"image_id", unit.image_id},
                              {"rle_mask", rle_encode(unit.mask)}};
        if (!r.skipped) rec["rle_labels"] = rle_encode_labels(r.labels);
        journal_->append(rec);
      }
      pending.erase(it);
      status("labeling", pending.size());
    };

    std::vector<LabelingUnit> live;
    for (const auto& u : units) {
      auto it = replay_labels_.find(u.id.value);
      if (it == replay_labels_.end()) {
        live.push_back(u);
        continue;
      }
      const auto& rec = it->second;
      if (rec.at("rle_mask").get<std::vector<std::uint32_t>>() != rle_encode(u.mask)) {
        throw Error("journal diverges from the run at unit " + std::to_string(u.id.value));
      }
      LabelResult r{u.id, rec.at("type") == "skip", {}};
      if (!r.skipped) r.labels = rle_decode_labels(rec.at("rle_labels").get<std::vector<std::uint32_t>>());
      deliver(r, true);
      replay_labels_.erase(it);
    }
    if (!live.empty()) {
      status("labeling", live.size());
      labeler_.label_round(live, [&](const LabelResult& r) { deliver(r, false); });
    }
    if (!pending.empty()) throw Error("labeler returned before every queued unit was labeled or skipped");
  }

  void refresh_pseudo_labels() {
    const std::size_t n = ds_.train.size();
    if (!cfg_.ablation.pseudo) {
      state_.training = state_.human;
      return;
    }
    const auto ratios = ratio_thresholds(state_.stats.raw_iou, cfg_.pseudo);
    for (std::size_t i = 0; i < n; ++i) {
      auto balanced = generate_pseudo(state_.train_probs[i], state_.human[i], ratios);
      if (cfg_.ablation.pseudo_balance) {
        state_.training[i] = std::move(balanced);
      } else {
        std::size_t total = 0;
        for (auto c : pseudo_counts(balanced, num_classes_)) total += c;
        state_.training[i] = generate_pseudo_global(state_.train_probs[i], state_.human[i], total);
      }
    }
  }

  void train(bool initial) {
    status("training");
    // Pixels labeled this round must reach the training masks even when
    // pseudo-labels were not regenerated.
    for (std::size_t i = 0; i < ds_.train.size(); ++i) {
      for (std::size_t p = 0; p < state_.human[i].num_pixels(); ++p) {
        const auto idx = static_cast<PixelIndex>(p);
        if (state_.human[i].provenance(idx) == Provenance::Human) {
          state_.training[i].set(idx, state_.human[i].label(idx), Provenance::Human);
        }
      }
    }
    TrainConfig tc = cfg_.train;
    tc.contrastive = cfg_.ablation.contrastive;
    // No measured class performance before the first model exists.
    tc.contrastive_balance = cfg_.ablation.contrastive_balance && !initial;
    tc.seed = mix(cfg_.seed, 100 + static_cast<std::uint64_t>(state_.iteration));
    std::vector<LabeledImage> data;
    for (std::size_t i = 0; i < ds_.train.size(); ++i) {
      const auto& labels = state_.training[i];
      if (std::any_of(labels.labels().begin(), labels.labels().end(),
                      [](std::uint8_t v) { return v != kUnlabeled; })) {
        data.push_back({&train_features_[i], &labels});
      }
    }
    state_.params = fit(state_.params, data, state_.stats.raw_iou, tc);
    state_.train_probs.clear();
    for (const auto& f : train_features_) state_.train_probs.push_back(predict(state_.params, f));
    state_.stats = normalize_perf(labeled_iou(state_.train_probs, state_.human, num_classes_), cfg_.perf_eps);
  }

  void log_iteration() {
    const auto report = eval_checkpoint(state_.params, ds_.test, num_classes_);
    RunRecord rec;
    rec.iteration = state_.iteration;
    rec.budget_fraction = budget_fraction();
    rec.labeled_pixels = state_.labeled_pixels;
    rec.per_class_iou = report.per_class_iou;
    rec.miou = report.miou;
    rec.mean_f1 = report.mean_f1;
    rec.min_iou = report.min_iou();
    rec.pseudo_pixel_counts.assign(num_classes_, 0);
    for (const auto& lm : state_.training) {
      const auto counts = pseudo_counts(lm, num_classes_);
      for (int c = 0; c < num_classes_; ++c) rec.pseudo_pixel_counts[c] += counts[c];
    }
    if (cfg_.record_wall_time) {
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    const auto j = rec.to_json();
    if (auto it = replay_iterations_.find(rec.iteration); it != replay_iterations_.end()) {
      if (record_without_time(it->second) != record_without_time(j)) {
        throw Error("journal replay diverged at iteration " + std::to_string(rec.iteration));
      }
      replay_iterations_.erase(it);
    } else if (journal_) {
      journal_->append({{"type", "iteration"}, {"record", j}});
    }
    state_.history.push_back(report);
    log_.records.push_back(rec);
    ++state_.iteration;
    if (hooks_.on_record) hooks_.on_record(rec);
  }

  RunConfig cfg_;
  const Dataset& ds_;
  Labeler& labeler_;
  RunHooks hooks_;
  std::chrono::steady_clock::time_point start_;
  int num_classes_ = 0;
  std::unordered_map<std::string, std::size_t> image_index_;
  std::vector<FeatureMap> train_features_;
  RunState state_;
  RunLog log_;
  std::uint64_t initial_budget_ = 0;
  std::uint64_t total_budget_ = 0;
  std::uint64_t next_id_ = 0;
  std::map<std::pair<std::size_t, double>, BinaryMask> edge_cache_;
  std::unique_ptr<Journal> journal_;
  bool saw_start_ = false;
  std::map<std::uint64_t, nlohmann::json> replay_labels_;
  std::map<int, nlohmann::json> replay_iterations_;
};

}  // namespace

RunLog run_loop(const RunConfig& cfg, const Dataset& ds, Labeler& labeler,
                const std::optional<JournalOptions>& journal, const RunHooks& hooks,
                RunState* final_state) {
  Loop loop(cfg, ds, labeler, journal, hooks);
  auto log = loop.run();
  if (final_state) *final_state = loop.take_state();
  return log;
}

}  // namespace albalance
