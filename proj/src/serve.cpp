#include "albalance/serve.hpp"

#include <algorithm>
#include <limits>

#include <httplib.h>

#include "albalance/raster_io.hpp"

namespace albalance {

namespace {

struct Bbox {
  int row = 0, col = 0, height = 0, width = 0;
};

Bbox bounding_box(const LabelingUnit& u) {
  int r0 = std::numeric_limits<int>::max(), c0 = r0, r1 = -1, c1 = -1;
  for (PixelIndex idx : u.mask) {
    const int r = static_cast<int>(idx) / u.image_width;
    const int c = static_cast<int>(idx) % u.image_width;
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
  }
  return {r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

ApiResponse error(int status, const std::string& reason) { return {status, {{"error", reason}}}; }

}  // namespace

LabelSession::LabelSession(const Dataset& ds, std::vector<std::string> class_names)
    : ds_(ds), class_names_(std::move(class_names)) {}

void LabelSession::begin_round(const std::vector<LabelingUnit>& units) {
  std::lock_guard lock(mu_);
  pending_.clear();
  claimed_.clear();
  for (const auto& u : units) pending_.emplace(u.id.value, u);
  cv_.notify_all();
}

bool LabelSession::process_next(const std::function<void(const LabelResult&)>& deliver) {
  std::unique_ptr<Submission> sub;
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !inbox_.empty() || pending_.empty() || closed_; });
    if (inbox_.empty()) {
      if (pending_.empty()) return false;
      throw Error("labeling session closed with units still queued");
    }
    sub = std::move(inbox_.front());
    inbox_.pop_front();
  }
  const auto id = sub->result.unit_id.value;
  try {
    deliver(sub->result);
  } catch (const std::exception& e) {
    std::lock_guard lock(mu_);
    claimed_.erase(id);
    sub->done.set_value(error(400, e.what()));
    return true;
  }
  std::lock_guard lock(mu_);
  std::uint64_t cost = 0;
  if (auto it = pending_.find(id); it != pending_.end()) {
    cost = it->second.cost;
    pending_.erase(it);
  }
  claimed_.erase(id);
  done_.insert(id);
  sub->done.set_value({200,
                       {{"unit_id", id},
                        {"skipped", sub->result.skipped},
                        {"cost", sub->result.skipped ? 0 : cost},
                        {"remaining", pending_.size()}}});
  return true;
}

void LabelSession::set_status(const nlohmann::json& status) {
  std::lock_guard lock(mu_);
  status_ = status;
}

void LabelSession::add_record(const RunRecord& record) {
  std::lock_guard lock(mu_);
  history_.push_back(record.to_json());
}

void LabelSession::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  for (auto& sub : inbox_) sub->done.set_value(error(503, "session closed"));
  inbox_.clear();
  cv_.notify_all();
}

const LabelingUnit* LabelSession::find_locked(std::uint64_t id) const {
  auto it = pending_.find(id);
  return it == pending_.end() ? nullptr : &it->second;
}

std::string LabelSession::crop_png(const LabelingUnit& unit) const {
  const RasterImage* image = nullptr;
  for (const auto& s : ds_.train) {
    if (s.id == unit.image_id) image = &s.image;
  }
  if (!image) throw Error("unknown image " + unit.image_id);
  const auto box = bounding_box(unit);
  const auto bytes = encode_png(image->crop(box.row, box.col, box.height, box.width));
  return {bytes.begin(), bytes.end()};
}

ApiResponse LabelSession::queue() const {
  std::lock_guard lock(mu_);
  auto items = nlohmann::json::array();
  for (const auto& [id, u] : pending_) {
    const auto box = bounding_box(u);
    items.push_back({{"unit_id", id},
                     {"image_id", u.image_id},
                     {"kind", to_string(u.kind)},
                     {"cost", u.cost},
                     {"height", u.image_height},
                     {"width", u.image_width},
                     {"bbox", {{"row", box.row}, {"col", box.col}, {"height", box.height}, {"width", box.width}}},
                     {"rle_mask", rle_encode(u.mask)},
                     {"submitted", claimed_.contains(id)},
                     {"crop_png", httplib::detail::base64_encode(crop_png(u))}});
  }
  return {200, items};
}

ApiResponse LabelSession::unit_image(std::uint64_t id, std::string& png) const {
  std::lock_guard lock(mu_);
  const auto* u = find_locked(id);
  if (!u) return error(404, "unknown unit " + std::to_string(id));
  png = crop_png(*u);
  return {200, nullptr};
}

ApiResponse LabelSession::unit_mask(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  const auto* u = find_locked(id);
  if (!u) return error(404, "unknown unit " + std::to_string(id));
  auto j = to_json(*u);
  j["unit_id"] = id;
  const auto box = bounding_box(*u);
  j["bbox"] = {{"row", box.row}, {"col", box.col}, {"height", box.height}, {"width", box.width}};
  return {200, j};
}

ApiResponse LabelSession::submit(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error(400, "body is not valid JSON");
  }
  if (!j.is_object() || !j.contains("unit_id") || !j["unit_id"].is_number_unsigned()) {
    return error(400, "unit_id must be a non-negative integer");
  }
  const auto id = j["unit_id"].get<std::uint64_t>();
  const bool skip = j.value("skip", false);
  std::vector<std::uint32_t> runs;
  if (!skip) {
    if (!j.contains("rle_labels") || !j["rle_labels"].is_array()) {
      return error(400, "rle_labels must be an array");
    }
    for (const auto& v : j["rle_labels"]) {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
        return error(400, "rle_labels entries must be non-negative integers");
      }
      runs.push_back(v.get<std::uint32_t>());
    }
  }

  std::future<ApiResponse> answer;
  {
    std::lock_guard lock(mu_);
    if (closed_) return error(503, "session closed");
    const auto* u = find_locked(id);
    if (!u) {
      if (done_.contains(id)) return error(409, "unit " + std::to_string(id) + " is already labeled");
      return error(404, "unknown unit " + std::to_string(id));
    }
    if (claimed_.contains(id)) return error(409, "unit " + std::to_string(id) + " is already submitted");
    LabelResult result{UnitId{id}, skip, {}};
    if (!skip) {
      try {
        result.labels = rle_decode_labels(runs);
      } catch (const Error& e) {
        return error(400, e.what());
      }
      if (result.labels.size() != u->mask.size()) {
        return error(400, "labels cover " + std::to_string(result.labels.size()) + " pixels, unit has " +
                              std::to_string(u->mask.size()));
      }
      for (auto v : result.labels) {
        if (v >= class_names_.size()) return error(400, "class code " + std::to_string(v) + " out of range");
      }
    }
    auto sub = std::make_unique<Submission>();
    sub->result = std::move(result);
    answer = sub->done.get_future();
    claimed_[id] = true;
    inbox_.push_back(std::move(sub));
    cv_.notify_all();
  }
  return answer.get();
}

ApiResponse LabelSession::metrics() const {
  std::lock_guard lock(mu_);
  return {200, history_};
}

ApiResponse LabelSession::status() const {
  std::lock_guard lock(mu_);
  auto j = status_;
  j["queued"] = pending_.size();
  j["classes"] = class_names_;
  j["closed"] = closed_;
  return {200, j};
}

void HumanLabeler::label_round(const std::vector<LabelingUnit>& units,
                               const std::function<void(const LabelResult&)>& deliver) {
  session_.begin_round(units);
  while (session_.process_next(deliver)) {
  }
}

struct ApiServer::Impl {
  httplib::Server server;
  std::thread thread;
};

namespace {

void reply(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

ApiServer::ApiServer(LabelSession& session, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  s.Get("/api/queue", [&session](const httplib::Request&, httplib::Response& res) { reply(res, session.queue()); });
  s.Get(R"(/api/unit/(\d+)/image)", [&session](const httplib::Request& req, httplib::Response& res) {
    std::string png;
    const auto r = session.unit_image(std::stoull(req.matches[1]), png);
    if (r.status != 200) return reply(res, r);
    res.set_content(png, "image/png");
  });
  s.Get(R"(/api/unit/(\d+)/mask)", [&session](const httplib::Request& req, httplib::Response& res) {
    reply(res, session.unit_mask(std::stoull(req.matches[1])));
  });
  s.Post("/api/labels", [&session](const httplib::Request& req, httplib::Response& res) {
    reply(res, session.submit(req.body));
  });
  s.Get("/api/metrics", [&session](const httplib::Request&, httplib::Response& res) { reply(res, session.metrics()); });
  s.Get("/api/status", [&session](const httplib::Request&, httplib::Response& res) { reply(res, session.status()); });
  if (static_dir && !s.set_mount_point("/", static_dir->string())) {
    throw Error("static directory not found: " + static_dir->string());
  }
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
  auto& s = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = s.bind_to_any_port(host);
  } else if (!s.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([&s] { s.listen_after_bind(); });
  return bound;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace albalance
