#pragma once

// Human-in-the-loop labeling over HTTP. The loop thread blocks inside
// HumanLabeler::label_round while HTTP handlers queue submissions; every
// state mutation happens on the loop thread.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "albalance/harness.hpp"

namespace albalance {

/// HTTP-style outcome of an API call.
struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Shared state between the loop thread and HTTP handlers.
class LabelSession {
 public:
  LabelSession(const Dataset& ds, std::vector<std::string> class_names);

  // Loop side.
  void begin_round(const std::vector<LabelingUnit>& units);
  /// Blocks until a submission is queued or the session is closed; applies it
  /// through `deliver`. Returns false once the round is complete.
  bool process_next(const std::function<void(const LabelResult&)>& deliver);
  void set_status(const nlohmann::json& status);
  void add_record(const RunRecord& record);
  void close();

  // Handler side; safe to call from any thread.
  ApiResponse queue() const;
  ApiResponse unit_image(std::uint64_t id, std::string& png) const;
  ApiResponse unit_mask(std::uint64_t id) const;
  /// Parses and validates a submission, then waits for the loop thread to
  /// apply it.
  ApiResponse submit(const std::string& body);
  ApiResponse metrics() const;
  ApiResponse status() const;

 private:
  struct Submission {
    LabelResult result;
    std::promise<ApiResponse> done;
  };

  const LabelingUnit* find_locked(std::uint64_t id) const;
  std::string crop_png(const LabelingUnit& unit) const;

  const Dataset& ds_;
  std::vector<std::string> class_names_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, LabelingUnit> pending_;
  std::map<std::uint64_t, bool> claimed_;  // submitted, not yet applied
  std::set<std::uint64_t> done_;
  std::deque<std::unique_ptr<Submission>> inbox_;
  nlohmann::json status_ = nlohmann::json::object();
  nlohmann::json history_ = nlohmann::json::array();
  bool closed_ = false;
};

/// Labeler answering from a LabelSession.
class HumanLabeler final : public Labeler {
 public:
  explicit HumanLabeler(LabelSession& session) : session_(session) {}
  void label_round(const std::vector<LabelingUnit>& units,
                   const std::function<void(const LabelResult&)>& deliver) override;

 private:
  LabelSession& session_;
};

/// Background HTTP server bound to a LabelSession.
class ApiServer {
 public:
  /// `static_dir`, if set, is mounted at `/`.
  ApiServer(LabelSession& session, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and starts serving in a background thread; port 0 picks a free
  /// port. Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace albalance
