#pragma once

// ALRT tensor files and 8-bit PNG ingestion.
//
// ALRT layout (little-endian):
//   "ALRT" | version u8 (=1) | dtype u8 (0=u8, 1=f64) | ndim u8 (2|3) | dims u32 x ndim | payload
// Payload is row-major. A LabelMask is a u8 (H, W) tensor whose payload is
// followed by a second H*W provenance plane.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "albalance/tensor.hpp"

namespace albalance {

enum class IoErrorKind {
  Open,
  Truncated,
  BadMagic,
  BadVersion,
  UnknownDtype,
  BadDims,
  DimOverflow,
  WrongType,
  TrailingBytes,
  Png,
};

const char* to_string(IoErrorKind kind);

class IoError : public Error {
 public:
  IoError(IoErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  IoErrorKind kind() const { return kind_; }

 private:
  IoErrorKind kind_;
};

enum class Dtype : std::uint8_t { U8 = 0, F64 = 1 };

/// A decoded ALRT tensor. Exactly one of `u8` / `f64` holds the payload;
/// `extra_planes` counts additional u8 planes of size dims[0]*dims[1]
/// appended after the main payload (1 for label masks).
struct AlrtTensor {
  Dtype dtype = Dtype::U8;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> u8;
  std::vector<double> f64;
};

std::vector<std::uint8_t> encode_alrt(const AlrtTensor& t);
/// `extra_planes` is the number of trailing H*W u8 planes expected.
AlrtTensor decode_alrt(std::span<const std::uint8_t> bytes, int extra_planes = 0);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

void write_probability_map(const std::filesystem::path& path, const ProbabilityMap& pm);
ProbabilityMap read_probability_map(const std::filesystem::path& path);

void write_label_mask(const std::filesystem::path& path, const LabelMask& lm);
LabelMask read_label_mask(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_label_mask(const LabelMask& lm);
LabelMask decode_label_mask(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_probability_map(const ProbabilityMap& pm);
ProbabilityMap decode_probability_map(std::span<const std::uint8_t> bytes);

/// 8-bit grayscale or RGB PNG. Palette and 16-bit inputs are converted;
/// alpha is dropped.
RasterImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& img);
std::vector<std::uint8_t> encode_png(const RasterImage& img);
RasterImage decode_png(std::span<const std::uint8_t> bytes);

}  // namespace albalance
