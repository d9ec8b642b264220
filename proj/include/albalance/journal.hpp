#pragma once

// Append-only write-ahead journal of length-prefixed JSON records
// (u32 little-endian byte length, then UTF-8 JSON).

#include <cstdio>
#include <filesystem>
#include <vector>

#include <json.hpp>

namespace albalance {

class Journal {
 public:
  /// Opens for appending. Any partial record at the tail (a crash
  /// mid-write) is cut off first.
  explicit Journal(std::filesystem::path path, bool truncate = false);
  ~Journal();
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  void append(const nlohmann::json& record);
  const std::filesystem::path& path() const { return path_; }

  /// Complete records in file order; a torn tail record is ignored.
  static std::vector<nlohmann::json> read_all(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

}  // namespace albalance
