#include <doctest.h>

#include <chrono>
#include <thread>

#include "albalance/raster_io.hpp"
#include "albalance/serve.hpp"

// After Eigen: resolv.h defines a _res macro that clashes with Eigen parameter names.
#include <httplib.h>

using namespace albalance;
using nlohmann::json;

namespace {

Dataset serve_dataset() {
  auto spec = blob_spec();
  spec.num_images = 4;
  spec.height = spec.width = 64;
  return make_synthetic_dataset(21, spec, 1);
}

RunConfig serve_config() {
  RunConfig cfg;
  cfg.seed = 21;
  cfg.region_size = 16;
  cfg.round_budget_pixels = 1024;
  cfg.train.epochs = 2;
  cfg.train.pixels_per_epoch = 512;
  cfg.embedding_dim = 4;
  cfg.record_wall_time = false;
  cfg.max_iterations = 2;
  return cfg;
}

std::vector<std::uint8_t> truth_labels(const Dataset& ds, const json& unit) {
  const SynthScene* scene = nullptr;
  for (const auto& s : ds.train) {
    if (s.id == unit["image_id"]) scene = &s;
  }
  REQUIRE(scene != nullptr);
  const auto mask = rle_decode(unit["rle_mask"].get<std::vector<std::uint32_t>>(), scene->truth.num_pixels());
  std::vector<std::uint8_t> out;
  for (auto p : mask) out.push_back(scene->truth.label(p));
  return out;
}

json get_json(httplib::Client& cli, const std::string& path) {
  auto res = cli.Get(path);
  REQUIRE(res);
  REQUIRE(res->status == 200);
  return json::parse(res->body);
}

}  // namespace

TEST_CASE("labeling API drives the loop") {
  const auto ds = serve_dataset();
  LabelSession session(ds, ds.class_names);
  ApiServer server(session);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);

  HumanLabeler labeler(session);
  RunHooks hooks;
  hooks.on_status = [&](const json& s) { session.set_status(s); };
  hooks.on_record = [&](const RunRecord& r) { session.add_record(r); };
  RunLog served;
  std::string loop_error;
  std::thread loop([&] {
    try {
      served = run_loop(serve_config(), ds, labeler, std::nullopt, hooks);
    } catch (const std::exception& e) {
      loop_error = e.what();
    }
    session.close();
  });

  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);
  bool checked_errors = false;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  while (std::chrono::steady_clock::now() < deadline) {
    const auto status = get_json(cli, "/api/status");
    CHECK(status["classes"].size() == 3);
    if (status["closed"].get<bool>()) break;
    const auto queue = get_json(cli, "/api/queue");
    if (queue.empty()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      continue;
    }
    if (!checked_errors) {
      checked_errors = true;
      const auto& u = queue[0];
      const auto id = u["unit_id"].get<std::uint64_t>();
      CHECK(u["cost"].get<std::uint64_t>() > 0);
      CHECK_FALSE(u["crop_png"].get<std::string>().empty());

      auto img = cli.Get("/api/unit/" + std::to_string(id) + "/image");
      REQUIRE(img);
      CHECK(img->status == 200);
      const std::vector<std::uint8_t> png(img->body.begin(), img->body.end());
      const auto crop = decode_png(png);
      CHECK(crop.height() == u["bbox"]["height"].get<int>());
      CHECK(get_json(cli, "/api/unit/" + std::to_string(id) + "/mask")["unit_id"] == id);
      CHECK(cli.Get("/api/unit/999999/mask")->status == 404);

      const auto before = get_json(cli, "/api/status")["labeled_pixels"];
      CHECK(cli.Post("/api/labels", "{not json", "application/json")->status == 400);
      CHECK(cli.Post("/api/labels", json{{"unit_id", id}, {"rle_labels", {0, 1}}}.dump(), "application/json")->status == 400);
      CHECK(cli.Post("/api/labels", json{{"unit_id", id}, {"rle_labels", {7, u["cost"]}}}.dump(), "application/json")->status == 400);
      CHECK(cli.Post("/api/labels", json{{"unit_id", 999999}, {"rle_labels", {0, 1}}}.dump(), "application/json")->status == 404);
      CHECK(get_json(cli, "/api/status")["labeled_pixels"] == before);

      const auto body = json{{"unit_id", id}, {"rle_labels", rle_encode_labels(truth_labels(ds, u))}}.dump();
      auto ok = cli.Post("/api/labels", body, "application/json");
      REQUIRE(ok);
      CHECK(ok->status == 200);
      CHECK(json::parse(ok->body)["unit_id"] == id);
      CHECK(cli.Post("/api/labels", body, "application/json")->status == 409);
      continue;
    }
    for (const auto& u : queue) {
      if (u["submitted"].get<bool>()) continue;
      const auto body = json{{"unit_id", u["unit_id"]}, {"rle_labels", rle_encode_labels(truth_labels(ds, u))}}.dump();
      auto res = cli.Post("/api/labels", body, "application/json");
      REQUIRE(res);
      CHECK((res->status == 200 || res->status == 409 || res->status == 404));
    }
  }
  loop.join();
  CHECK(loop_error.empty());
  CHECK(checked_errors);
  const auto metrics = get_json(cli, "/api/metrics");
  CHECK(metrics.size() == served.records.size());
  server.stop();

  // Human answers from the truth reproduce the oracle run exactly.
  OracleLabeler oracle(ds);
  CHECK(run_loop(serve_config(), ds, oracle).to_jsonl() == served.to_jsonl());
}

TEST_CASE("skipping a unit leaves it unlabeled") {
  const auto ds = serve_dataset();
  LabelSession session(ds, ds.class_names);
  const auto units = grid_units(64, 64, 32, ds.train[0].id);
  session.begin_round({units[0], units[1]});
  std::vector<LabelResult> delivered;
  std::thread loop([&] {
    while (session.process_next([&](const LabelResult& r) { delivered.push_back(r); })) {
    }
  });
  CHECK(session.submit(json{{"unit_id", units[0].id.value}, {"skip", true}}.dump()).status == 200);
  CHECK(session.submit(json{{"unit_id", units[1].id.value}, {"rle_labels", {1, units[1].cost}}}.dump()).status == 200);
  loop.join();
  REQUIRE(delivered.size() == 2);
  CHECK(delivered[0].skipped);
  CHECK(delivered[1].labels.size() == units[1].cost);
  CHECK(session.submit(json{{"unit_id", units[0].id.value}, {"skip", true}}.dump()).status == 409);
  session.close();
  CHECK(session.submit(json{{"unit_id", 5}, {"skip", true}}.dump()).status == 503);
}
