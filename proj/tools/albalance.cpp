// albalance command line: synth | partition | select | pseudo | train | loop | eval | serve

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "albalance/acquisition.hpp"
#include "albalance/dataset.hpp"
#include "albalance/harness.hpp"
#include "albalance/metrics.hpp"
#include "albalance/pseudo_label.hpp"
#include "albalance/raster_io.hpp"
#include "albalance/segmenter.hpp"
#include "albalance/serve.hpp"
#include "albalance/units.hpp"

namespace fs = std::filesystem;
using namespace albalance;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  return json::parse(in);
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void emit(const std::string& out, const json& j) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text(out, j.dump(2) + "\n");
  }
}

struct SynthOpts {
  std::string out;
  std::string spec = "default";
  std::uint64_t seed = 0;
  int images = 0;
  int size = 0;
  int test_images = 8;
};

SynthSpec spec_from(const SynthOpts& o) {
  SynthSpec spec;
  if (o.spec == "default") {
    spec = default_spec();
  } else if (o.spec == "blob") {
    spec = blob_spec();
  } else {
    throw Error("unknown synth spec '" + o.spec + "' (default|blob)");
  }
  if (o.images > 0) spec.num_images = o.images;
  if (o.size > 0) spec.height = spec.width = o.size;
  return spec;
}

struct LoopOpts {
  RunConfig cfg;
  std::string strategy = "balanced";
  std::string dataset;
  SynthOpts synth;
  std::string log;
  std::string journal;
  bool resume = false;
  bool no_wall_time = false;
  std::vector<std::string> disable;
  std::string params_out;
};

void add_loop_options(CLI::App* sub, LoopOpts& o) {
  auto& c = o.cfg;
  sub->add_option("--dataset", o.dataset, "Dataset directory (omit to generate a synthetic one)");
  sub->add_option("--synth-spec", o.synth.spec, "Synthetic spec when no dataset is given (default|blob)");
  sub->add_option("--synth-images", o.synth.images, "Synthetic image count");
  sub->add_option("--synth-size", o.synth.size, "Synthetic image side");
  sub->add_option("--test-images", o.synth.test_images, "Synthetic test split size");
  sub->add_option("--strategy", o.strategy, "balanced|entropy|random")->capture_default_str();
  sub->add_option("--seed", c.seed, "Run seed")->envname("ALBALANCE_SEED")->capture_default_str();
  sub->add_option("--region-size", c.region_size)->capture_default_str();
  sub->add_option("--initial-fraction", c.initial_fraction)->capture_default_str();
  sub->add_option("--round-budget", c.round_budget_pixels, "Pixels labeled per round")->capture_default_str();
  sub->add_option("--total-fraction", c.total_budget_fraction)->capture_default_str();
  sub->add_option("--images-per-round", c.images_per_round)->capture_default_str();
  sub->add_option("--epochs", c.train.epochs)->capture_default_str();
  sub->add_option("--pixels-per-epoch", c.train.pixels_per_epoch, "0 = every labeled pixel")->capture_default_str();
  sub->add_option("--lr", c.train.lr)->capture_default_str();
  sub->add_option("--contrastive-weight", c.train.contrastive_weight)->capture_default_str();
  sub->add_option("--embedding-dim", c.embedding_dim)->capture_default_str();
  sub->add_option("--pseudo-base", c.pseudo.base)->capture_default_str();
  sub->add_option("--max-iterations", c.max_iterations, "Stop after this many logged iterations")->capture_default_str();
  sub->add_option("--disable", o.disable,
                  "Ablation components to turn off: edge_units clip_init perf_balance pseudo "
                  "pseudo_balance contrastive contrastive_balance, or 'all'");
  sub->add_flag("--pool-mean-center", c.balance_center_pool_mean, "Center the balance term on the pool mean");
  sub->add_flag("--no-wall-time", o.no_wall_time, "Omit wall-clock times from the log");
  sub->add_option("--log", o.log, "RunLog output (JSON lines); stdout if omitted");
  sub->add_option("--journal", o.journal, "Write-ahead journal path");
  sub->add_flag("--resume", o.resume, "Replay the journal before continuing");
  sub->add_option("--params-out", o.params_out, "Save final model parameters");
}

RunConfig finish_config(LoopOpts& o) {
  auto c = o.cfg;
  c.strategy = strategy_from_string(o.strategy);
  c.record_wall_time = !o.no_wall_time;
  std::map<std::string, bool*> toggles = {
      {"edge_units", &c.ablation.edge_units},   {"clip_init", &c.ablation.clip_init},
      {"perf_balance", &c.ablation.perf_balance}, {"pseudo", &c.ablation.pseudo},
      {"pseudo_balance", &c.ablation.pseudo_balance}, {"contrastive", &c.ablation.contrastive},
      {"contrastive_balance", &c.ablation.contrastive_balance}};
  for (const auto& name : o.disable) {
    if (name == "all") {
      c.ablation = Ablation::all_off();
      continue;
    }
    auto it = toggles.find(name);
    if (it == toggles.end()) throw Error("unknown ablation component '" + name + "'");
    *it->second = false;
  }
  c.validate();
  return c;
}

Dataset dataset_for(const LoopOpts& o) {
  if (!o.dataset.empty()) return load_dataset(o.dataset);
  return make_synthetic_dataset(o.synth.seed ? o.synth.seed : o.cfg.seed, spec_from(o.synth),
                                o.synth.test_images);
}

void write_log(const std::string& path, const RunLog& log) {
  if (path.empty() || path == "-") {
    std::cout << log.to_jsonl();
  } else {
    write_text(path, log.to_jsonl());
  }
}

std::optional<JournalOptions> journal_for(const LoopOpts& o) {
  if (o.journal.empty()) {
    if (o.resume) throw Error("--resume needs --journal");
    return std::nullopt;
  }
  return JournalOptions{o.journal, o.resume};
}

std::map<std::string, ProbabilityMap> read_prob_dir(const fs::path& dir) {
  std::map<std::string, ProbabilityMap> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".alrt") out.emplace(e.path().stem().string(), read_probability_map(e.path()));
  }
  if (out.empty()) throw Error("no .alrt probability maps in " + dir.string());
  return out;
}

std::vector<double> read_iou(const std::string& arg) {
  if (fs::exists(arg)) {
    auto j = read_json(arg);
    return (j.is_object() ? j.at("iou") : j).get<std::vector<double>>();
  }
  return json::parse(arg).get<std::vector<double>>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-balanced active learning for semantic segmentation"};
  app.set_config("--config", "", "TOML file supplying option values; command-line flags take precedence");
  app.require_subcommand(1);

  // synth
  SynthOpts synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--spec", synth.spec, "default|blob")->capture_default_str();
  s_synth->add_option("--seed", synth.seed)->envname("ALBALANCE_SEED")->capture_default_str();
  s_synth->add_option("--images", synth.images, "Total images (train + test)");
  s_synth->add_option("--size", synth.size, "Image side in pixels");
  s_synth->add_option("--test-images", synth.test_images)->capture_default_str();

  // partition
  std::string p_image, p_out, p_id;
  int p_region = 80;
  double p_budget = 0.0;
  bool p_grid = false;
  EdgeConfig p_edge;
  auto* s_part = app.add_subcommand("partition", "Split an image into labeling units");
  s_part->add_option("--image", p_image, "PNG image")->required();
  s_part->add_option("--image-id", p_id, "Image id recorded on each unit");
  s_part->add_option("--region-size", p_region)->capture_default_str();
  s_part->add_option("--budget-fraction", p_budget, "Labeled fraction driving the edge threshold")->capture_default_str();
  s_part->add_option("--canny-low", p_edge.canny_low)->capture_default_str();
  s_part->add_option("--canny-high", p_edge.canny_high)->capture_default_str();
  s_part->add_option("--gaussian-kernel", p_edge.gaussian_kernel)->capture_default_str();
  s_part->add_option("--dilation-kernel", p_edge.dilation_kernel)->capture_default_str();
  s_part->add_option("--max-unit-pixels", p_edge.max_unit_pixels)->capture_default_str();
  s_part->add_flag("--grid", p_grid, "Rectangular cells only");
  s_part->add_option("--out", p_out, "units JSON; stdout if omitted");

  // select
  std::string sel_probs, sel_units, sel_stats, sel_strategy = "balanced", sel_out;
  std::uint64_t sel_budget = 0, sel_seed = 0;
  int sel_region = 80;
  double sel_eps = 1e-3;
  auto* s_sel = app.add_subcommand("select", "Score units and select a batch");
  s_sel->add_option("--prob-maps", sel_probs, "Directory of <image_id>.alrt probability maps")->required();
  s_sel->add_option("--units", sel_units, "units JSON")->required();
  s_sel->add_option("--stats", sel_stats, "JSON {\"iou\": [...]} or a JSON array of per-class IoU")->required();
  s_sel->add_option("--strategy", sel_strategy)->capture_default_str();
  s_sel->add_option("--budget-px", sel_budget)->required();
  s_sel->add_option("--region-size", sel_region)->capture_default_str();
  s_sel->add_option("--perf-eps", sel_eps)->capture_default_str();
  s_sel->add_option("--seed", sel_seed)->envname("ALBALANCE_SEED")->capture_default_str();
  s_sel->add_option("--out", sel_out, "Selection JSON; stdout if omitted");

  // pseudo
  std::string ps_probs, ps_labels, ps_iou, ps_out;
  PseudoConfig ps_cfg;
  bool ps_global = false;
  auto* s_ps = app.add_subcommand("pseudo", "Generate class-balanced pseudo-labels");
  s_ps->add_option("--prob-maps", ps_probs, "Directory of <image_id>.alrt probability maps")->required();
  s_ps->add_option("--labels", ps_labels, "Directory of <image_id>.alrt label masks (missing = none labeled)");
  s_ps->add_option("--iou", ps_iou, "Per-class IoU as a JSON array or a file")->required();
  s_ps->add_option("--base", ps_cfg.base)->capture_default_str();
  s_ps->add_flag("--global", ps_global, "One class-agnostic threshold with the same total count");
  s_ps->add_option("--out", ps_out, "Output directory for label masks")->required();

  // train
  std::string tr_dataset, tr_labels, tr_params, tr_probs;
  TrainConfig tr_cfg;
  int tr_emb = 16;
  auto* s_train = app.add_subcommand("train", "Train the segmenter on labeled pixels");
  s_train->add_option("--dataset", tr_dataset)->required();
  s_train->add_option("--labels", tr_labels, "Directory of label masks; full truth if omitted");
  s_train->add_option("--epochs", tr_cfg.epochs)->capture_default_str();
  s_train->add_option("--pixels-per-epoch", tr_cfg.pixels_per_epoch)->capture_default_str();
  s_train->add_option("--lr", tr_cfg.lr)->capture_default_str();
  s_train->add_option("--embedding-dim", tr_emb)->capture_default_str();
  s_train->add_option("--seed", tr_cfg.seed)->envname("ALBALANCE_SEED")->capture_default_str();
  s_train->add_flag("!--no-contrastive", tr_cfg.contrastive, "Cross-entropy only");
  s_train->add_option("--params", tr_params, "Output parameter file")->required();
  s_train->add_option("--prob-out", tr_probs, "Write training-image probability maps here");

  // loop
  LoopOpts loop;
  auto* s_loop = app.add_subcommand("loop", "Run the active-learning loop with the ground-truth oracle");
  add_loop_options(s_loop, loop);

  // eval
  std::string ev_dataset, ev_params, ev_out;
  auto* s_eval = app.add_subcommand("eval", "Evaluate parameters on the test split");
  s_eval->add_option("--dataset", ev_dataset)->required();
  s_eval->add_option("--params", ev_params)->required();
  s_eval->add_option("--out", ev_out, "Report JSON; stdout if omitted");

  // serve
  LoopOpts serve;
  std::string sv_host = "127.0.0.1", sv_static;
  int sv_port = 8080;
  auto* s_serve = app.add_subcommand("serve", "Run the loop with labels from the HTTP annotation API");
  add_loop_options(s_serve, serve);
  s_serve->add_option("--host", sv_host)->capture_default_str();
  s_serve->add_option("--port", sv_port)->capture_default_str();
  s_serve->add_option("--static", sv_static, "Directory of UI assets mounted at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s_synth) {
      const auto ds = make_synthetic_dataset(synth.seed, spec_from(synth), synth.test_images);
      save_dataset(synth.out, ds);
      std::cerr << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test images to "
                << synth.out << "\n";
    } else if (*s_part) {
      const auto img = read_png(p_image);
      const auto id = p_id.empty() ? fs::path(p_image).stem().string() : p_id;
      const auto units = p_grid ? grid_units(img.height(), img.width(), p_region, id)
                                : partition_units(img, p_edge, p_region, p_budget, id);
      emit(p_out, units_to_json(units));
    } else if (*s_sel) {
      const auto probs = read_prob_dir(sel_probs);
      const auto units = units_from_json(read_json(sel_units));
      const auto stats = normalize_perf(read_iou(sel_stats), sel_eps);
      std::vector<UnitScore> scores;
      for (const auto& u : units) {
        auto it = probs.find(u.image_id);
        if (it == probs.end()) throw Error("no probability map for image " + u.image_id);
        scores.push_back(balanced_score(it->second, u, stats, sel_region));
      }
      const auto strategy = strategy_from_string(sel_strategy);
      const auto chosen = select_batch(units, scores, sel_budget, strategy, sel_seed);
      json score_json = json::array();
      for (const auto& s : scores) {
        score_json.push_back({{"unit_id", s.unit_id.value}, {"info", s.info}, {"balance", s.balance},
                              {"score", s.score}, {"mean_entropy", s.mean_entropy}});
      }
      std::uint64_t spent = 0;
      for (const auto& u : chosen) spent += u.cost;
      emit(sel_out, {{"strategy", to_string(strategy)},
                     {"budget_px", sel_budget},
                     {"spent_px", spent},
                     {"selected", units_to_json(chosen)},
                     {"scores", score_json}});
    } else if (*s_ps) {
      const auto probs = read_prob_dir(ps_probs);
      const auto ratios = ratio_thresholds(read_iou(ps_iou), ps_cfg);
      fs::create_directories(ps_out);
      json counts = json::object();
      for (const auto& [id, pm] : probs) {
        LabelMask labeled(pm.height(), pm.width());
        const auto lp = fs::path(ps_labels) / (id + ".alrt");
        if (!ps_labels.empty() && fs::exists(lp)) labeled = read_label_mask(lp);
        auto out = generate_pseudo(pm, labeled, ratios);
        if (ps_global) {
          std::size_t total = 0;
          for (auto n : pseudo_counts(out, pm.num_classes())) total += n;
          out = generate_pseudo_global(pm, labeled, total);
        }
        write_label_mask(fs::path(ps_out) / (id + ".alrt"), out);
        counts[id] = pseudo_counts(out, pm.num_classes());
      }
      std::cout << json{{"ratios", ratios}, {"pseudo_counts", counts}}.dump(2) << "\n";
    } else if (*s_train) {
      const auto ds = load_dataset(tr_dataset);
      std::vector<FeatureMap> feats;
      std::vector<LabelMask> labels;
      for (const auto& s : ds.train) {
        feats.push_back(extract_features(s.image));
        if (tr_labels.empty()) {
          labels.push_back(s.truth);
        } else {
          const auto lp = fs::path(tr_labels) / (s.id + ".alrt");
          labels.push_back(fs::exists(lp) ? read_label_mask(lp) : LabelMask(s.image.height(), s.image.width()));
        }
      }
      std::vector<LabeledImage> data;
      for (std::size_t i = 0; i < feats.size(); ++i) data.push_back({&feats[i], &labels[i]});
      tr_cfg.contrastive_balance = false;
      FitReport report;
      auto init = ModelParams::random(feats.front().dim(), tr_emb, ds.num_classes, tr_cfg.seed);
      fit_standardization(init, feats);
      const auto params = fit(init, data, std::vector<double>(ds.num_classes, 0.0), tr_cfg, &report);
      save_params(tr_params, params, tr_cfg.seed, tr_cfg.epochs);
      if (!tr_probs.empty()) {
        fs::create_directories(tr_probs);
        for (std::size_t i = 0; i < feats.size(); ++i) {
          write_probability_map(fs::path(tr_probs) / (ds.train[i].id + ".alrt"), predict(params, feats[i]));
        }
      }
      std::cout << json{{"epoch_loss", report.epoch_loss}}.dump() << "\n";
    } else if (*s_loop) {
      const auto cfg = finish_config(loop);
      const auto ds = dataset_for(loop);
      OracleLabeler oracle(ds);
      RunHooks hooks;
      hooks.on_record = [](const RunRecord& r) {
        std::cerr << "iteration " << r.iteration << " budget " << r.budget_fraction << " mIoU " << r.miou
                  << " min IoU " << r.min_iou << "\n";
      };
      RunState state;
      const auto log = run_loop(cfg, ds, oracle, journal_for(loop), hooks, &state);
      write_log(loop.log, log);
      if (!loop.params_out.empty()) save_params(loop.params_out, state.params, cfg.seed, state.iteration);
    } else if (*s_eval) {
      const auto ds = load_dataset(ev_dataset);
      const auto report = eval_checkpoint(load_params(ev_params), ds.test, ds.num_classes);
      emit(ev_out, {{"per_class_iou", report.per_class_iou},
                    {"miou", report.miou},
                    {"per_class_f1", report.per_class_f1},
                    {"mean_f1", report.mean_f1},
                    {"min_iou", report.min_iou()},
                    {"present", report.present},
                    {"confusion", report.confusion}});
    } else if (*s_serve) {
      const auto cfg = finish_config(serve);
      const auto ds = dataset_for(serve);
      LabelSession session(ds, ds.class_names);
      std::optional<fs::path> static_dir;
      if (!sv_static.empty()) static_dir = sv_static;
      ApiServer server(session, static_dir);
      const int port = server.start(sv_host, sv_port);
      std::cerr << "serving on http://" << sv_host << ":" << port << "\n";
      HumanLabeler labeler(session);
      RunHooks hooks;
      hooks.on_status = [&session](const json& s) { session.set_status(s); };
      hooks.on_record = [&session](const RunRecord& r) { session.add_record(r); };
      RunState state;
      const auto log = run_loop(cfg, ds, labeler, journal_for(serve), hooks, &state);
      write_log(serve.log, log);
      if (!serve.params_out.empty()) save_params(serve.params_out, state.params, cfg.seed, state.iteration);
      session.close();
      server.stop();
    }
  } catch (const std::exception& e) {
    std::cerr << "albalance: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
