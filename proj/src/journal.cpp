#include "albalance/journal.hpp"

#include <cstdint>
#include <fstream>

#include "albalance/raster_io.hpp"

namespace albalance {

namespace {

// Byte length of the well-formed prefix, plus its records.
std::size_t scan(const std::vector<std::uint8_t>& bytes, std::vector<nlohmann::json>* records) {
  std::size_t pos = 0;
  while (bytes.size() - pos >= 4) {
    const std::uint32_t len = static_cast<std::uint32_t>(bytes[pos]) |
                              (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    if (bytes.size() - pos - 4 < len) break;
    auto record = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                                        bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4 + len),
                                        nullptr, false);
    if (record.is_discarded()) break;
    if (records) records->push_back(std::move(record));
    pos += 4 + len;
  }
  return pos;
}

}  // namespace

Journal::Journal(std::filesystem::path path, bool truncate) : path_(std::move(path)) {
  if (!truncate && std::filesystem::exists(path_)) {
    const auto bytes = read_file_bytes(path_);
    const auto good = scan(bytes, nullptr);
    if (good != bytes.size()) std::filesystem::resize_file(path_, good);
  }
  file_ = std::fopen(path_.c_str(), truncate ? "wb" : "ab");
  if (!file_) throw IoError(IoErrorKind::Open, path_.string());
}

Journal::~Journal() {
  if (file_) std::fclose(file_);
}

void Journal::append(const nlohmann::json& record) {
  const auto text = record.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  const unsigned char header[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                                   static_cast<unsigned char>(len >> 16),
                                   static_cast<unsigned char>(len >> 24)};
  if (std::fwrite(header, 1, 4, file_) != 4 || std::fwrite(text.data(), 1, text.size(), file_) != text.size() ||
      std::fflush(file_) != 0) {
    throw IoError(IoErrorKind::Open, "journal write failed: " + path_.string());
  }
}

std::vector<nlohmann::json> Journal::read_all(const std::filesystem::path& path) {
  std::vector<nlohmann::json> records;
  if (!std::filesystem::exists(path)) return records;
  scan(read_file_bytes(path), &records);
  return records;
}

}  // namespace albalance
