#include "albalance/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace albalance {

namespace {

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw Error("raster dimensions must be positive, got " + std::to_string(height) + "x" +
                std::to_string(width));
  }
}

}  // namespace

ProbabilityMap::ProbabilityMap(int height, int width, int num_classes)
    : ProbabilityMap(height, width, num_classes,
                     std::vector<double>(static_cast<std::size_t>(height > 0 ? height : 0) *
                                         (width > 0 ? width : 0) *
                                         (num_classes > 0 ? num_classes : 0))) {}

ProbabilityMap::ProbabilityMap(int height, int width, int num_classes, std::vector<double> data)
    : height_(height), width_(width), num_classes_(num_classes), data_(std::move(data)) {
  check_dims(height, width);
  if (num_classes <= 0 || num_classes > kMaxClasses) {
    throw Error("class count must be in [1, 254], got " + std::to_string(num_classes));
  }
  if (data_.size() != num_pixels() * num_classes_) {
    throw Error("probability map data length does not match dimensions");
  }
}

ProbabilityMap ProbabilityMap::uniform(int height, int width, int num_classes) {
  ProbabilityMap pm(height, width, num_classes);
  std::fill(pm.data_.begin(), pm.data_.end(), 1.0 / num_classes);
  return pm;
}

void ProbabilityMap::validate(double tol) const {
  for (std::size_t p = 0; p < num_pixels(); ++p) {
    double sum = 0.0;
    for (int c = 0; c < num_classes_; ++c) {
      const double v = data_[p * num_classes_ + c];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error("probability outside [0,1] at pixel " + std::to_string(p));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw Error("probabilities at pixel " + std::to_string(p) + " sum to " +
                  std::to_string(sum));
    }
  }
}

LabelMask::LabelMask(int height, int width)
    : height_(height), width_(width) {
  check_dims(height, width);
  labels_.assign(static_cast<std::size_t>(height) * width, kUnlabeled);
  provenance_.assign(labels_.size(), Provenance::None);
}

LabelMask::LabelMask(int height, int width, std::vector<std::uint8_t> labels,
                     std::vector<Provenance> provenance)
    : height_(height), width_(width), labels_(std::move(labels)),
      provenance_(std::move(provenance)) {
  check_dims(height, width);
  const auto n = static_cast<std::size_t>(height) * width;
  if (labels_.size() != n || provenance_.size() != n) {
    throw Error("label mask planes do not match dimensions");
  }
}

LabelMask LabelMask::from_labels(int height, int width, std::vector<std::uint8_t> labels,
                                 Provenance prov) {
  std::vector<Provenance> provenance(labels.size(), prov);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kUnlabeled) provenance[i] = Provenance::None;
  }
  return LabelMask(height, width, std::move(labels), std::move(provenance));
}

void LabelMask::set(PixelIndex idx, std::uint8_t label, Provenance prov) {
  if (label == kUnlabeled || prov == Provenance::None) {
    throw Error("set() requires a decided label and provenance; use clear()");
  }
  labels_[idx] = label;
  provenance_[idx] = prov;
}

void LabelMask::clear(PixelIndex idx) {
  labels_[idx] = kUnlabeled;
  provenance_[idx] = Provenance::None;
}

void LabelMask::validate(int num_classes) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto code = labels_[i];
    if (code != kUnlabeled && code >= num_classes) {
      throw Error("label code " + std::to_string(code) + " out of range at pixel " +
                  std::to_string(i));
    }
    if ((code == kUnlabeled) != (provenance_[i] == Provenance::None)) {
      throw Error("label/provenance disagreement at pixel " + std::to_string(i));
    }
  }
}

RasterImage::RasterImage(int height, int width, int channels)
    : RasterImage(height, width, channels,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(height > 0 ? height : 0) *
                                            (width > 0 ? width : 0) *
                                            (channels > 0 ? channels : 0))) {}

RasterImage::RasterImage(int height, int width, int channels, std::vector<std::uint8_t> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) {
    throw Error("image must have 1 or 3 channels, got " + std::to_string(channels));
  }
  if (data_.size() != num_pixels() * channels_) {
    throw Error("image data length does not match dimensions");
  }
}

std::vector<double> RasterImage::luma() const {
  std::vector<double> out(num_pixels());
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (channels_ == 1) {
      out[p] = data_[p];
    } else {
      const auto* px = &data_[p * 3];
      out[p] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
  }
  return out;
}

RasterImage RasterImage::crop(int row0, int col0, int h, int w) const {
  if (row0 < 0 || col0 < 0 || h <= 0 || w <= 0 || row0 + h > height_ || col0 + w > width_) {
    throw Error("crop rectangle outside image");
  }
  RasterImage out(h, w, channels_);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < channels_; ++ch) out(r, c, ch) = (*this)(row0 + r, col0 + c, ch);
    }
  }
  return out;
}

PixelSet full_mask(int height, int width) {
  PixelSet out(static_cast<std::size_t>(height) * width);
  std::iota(out.begin(), out.end(), PixelIndex{0});
  return out;
}

}  // namespace albalance
