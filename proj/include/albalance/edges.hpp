#pragma once

#include <cstdint>
#include <vector>

#include "albalance/tensor.hpp"

namespace albalance {

/// Smoothing, Canny and dilation settings for edge-guided labeling units.
struct EdgeConfig {
  int gaussian_kernel = 17;
  double canny_low = 10.0;
  double canny_high = 80.0;
  int dilation_kernel = 9;
  /// Amount the high threshold drops per schedule step.
  double high_decrement = 5.0;
  /// Labeled-budget fraction at which the schedule starts counting steps.
  double schedule_start = 0.05;
  double schedule_step = 0.05;
  std::uint64_t max_unit_pixels = 6400;

  /// Throws unless kernels are odd and >= 3 and low < high.
  void validate() const;
};

/// Binary raster, row-major, 0/1 per pixel.
using BinaryMask = std::vector<std::uint8_t>;

/// Canny high threshold after `budget_fraction` of the data is labeled:
/// one decrement per full step beyond `schedule_start`, floored at low + 1.
double schedule_high_threshold(const EdgeConfig& cfg, double budget_fraction);

/// Sigma used for a Gaussian kernel of size k: 0.3 * ((k - 1) / 2 - 1) + 0.8.
double gaussian_sigma(int ksize);

/// Separable Gaussian blur with reflect-101 borders.
std::vector<double> gaussian_blur(const std::vector<double>& plane, int height, int width,
                                  int ksize);

/// Canny on an intensity plane: 3x3 Sobel, L2 magnitude, 4-sector
/// non-maximum suppression, 8-connected hysteresis. Pixels strictly above
/// `high` seed edges; pixels strictly above `low` extend them.
BinaryMask canny(const std::vector<double>& plane, int height, int width, double low,
                 double high);

/// Binary dilation by a ksize x ksize square.
BinaryMask dilate(const BinaryMask& mask, int height, int width, int ksize);

/// Smoothed, scheduled-threshold Canny edges dilated into edge regions.
/// RGB images are reduced to luma first.
BinaryMask edge_mask(const RasterImage& img, const EdgeConfig& cfg, double budget_fraction);

}  // namespace albalance
