#pragma once

// Core raster types: class-probability maps, label masks with provenance,
// and 8-bit images. All are plain values; every operation on them is pure.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace albalance {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear row-major pixel index (row * width + col).
using PixelIndex = std::uint32_t;
/// Sorted, duplicate-free set of pixel indices.
using PixelSet = std::vector<PixelIndex>;

inline constexpr std::uint8_t kUnlabeled = 255;
inline constexpr int kMaxClasses = 254;

enum class Provenance : std::uint8_t { None = 0, Human = 1, Pseudo = 2 };

/// Per-pixel class distribution (H x W x C), row-major with class fastest.
class ProbabilityMap {
 public:
  ProbabilityMap() = default;
  /// Zero-filled map; call `validate()` once filled.
  ProbabilityMap(int height, int width, int num_classes);
  ProbabilityMap(int height, int width, int num_classes, std::vector<double> data);

  /// Every pixel gets probability 1/C for every class.
  static ProbabilityMap uniform(int height, int width, int num_classes);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return num_classes_; }
  std::size_t num_pixels() const { return static_cast<std::size_t>(height_) * width_; }

  double operator()(int row, int col, int c) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * num_classes_ + c];
  }
  double& operator()(int row, int col, int c) {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * num_classes_ + c];
  }
  std::span<const double> pixel(PixelIndex idx) const {
    return {data_.data() + static_cast<std::size_t>(idx) * num_classes_,
            static_cast<std::size_t>(num_classes_)};
  }
  std::span<double> pixel(PixelIndex idx) {
    return {data_.data() + static_cast<std::size_t>(idx) * num_classes_,
            static_cast<std::size_t>(num_classes_)};
  }
  const std::vector<double>& data() const { return data_; }

  /// Throws if an entry is outside [0,1] or a row does not sum to 1 within `tol`.
  void validate(double tol = 1e-9) const;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 0;
  std::vector<double> data_;
};

/// Per-pixel class codes with a provenance plane. Undecided pixels carry
/// `kUnlabeled` and `Provenance::None`.
class LabelMask {
 public:
  LabelMask() = default;
  /// All pixels unlabeled.
  LabelMask(int height, int width);
  LabelMask(int height, int width, std::vector<std::uint8_t> labels,
            std::vector<Provenance> provenance);

  /// Fully decided mask from class codes, every pixel tagged `prov`.
  static LabelMask from_labels(int height, int width, std::vector<std::uint8_t> labels,
                               Provenance prov = Provenance::Human);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t num_pixels() const { return labels_.size(); }

  std::uint8_t label(PixelIndex idx) const { return labels_[idx]; }
  Provenance provenance(PixelIndex idx) const { return provenance_[idx]; }
  bool decided(PixelIndex idx) const { return labels_[idx] != kUnlabeled; }

  void set(PixelIndex idx, std::uint8_t label, Provenance prov);
  void clear(PixelIndex idx);

  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }

  /// Throws unless codes are < C or the sentinel and provenance agrees with codes.
  void validate(int num_classes) const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> labels_;
  std::vector<Provenance> provenance_;
};

/// 8-bit image, 1 (gray) or 3 (RGB) interleaved channels.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int height, int width, int channels);
  RasterImage(int height, int width, int channels, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t num_pixels() const { return static_cast<std::size_t>(height_) * width_; }

  std::uint8_t operator()(int row, int col, int ch) const {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  std::uint8_t& operator()(int row, int col, int ch) {
    return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
  }
  const std::vector<std::uint8_t>& data() const { return data_; }

  /// Luma plane (0.299R + 0.587G + 0.114B), or the single channel for gray.
  std::vector<double> luma() const;
  /// Copy of the rectangle [row0, row0+h) x [col0, col0+w).
  RasterImage crop(int row0, int col0, int h, int w) const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Every pixel index of an H x W raster.
PixelSet full_mask(int height, int width);

}  // namespace albalance
