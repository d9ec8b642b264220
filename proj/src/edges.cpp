#include "albalance/edges.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace albalance {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

void EdgeConfig::validate() const {
  auto odd = [](int k) { return k >= 3 && k % 2 == 1; };
  if (!odd(gaussian_kernel)) throw Error("gaussian kernel must be odd and >= 3");
  if (!odd(dilation_kernel)) throw Error("dilation kernel must be odd and >= 3");
  if (!(canny_low < canny_high)) throw Error("canny_low must be below canny_high");
  if (schedule_step <= 0.0) throw Error("schedule step must be positive");
  if (max_unit_pixels == 0) throw Error("max_unit_pixels must be positive");
}

double schedule_high_threshold(const EdgeConfig& cfg, double budget_fraction) {
  const double beyond = std::max(0.0, budget_fraction - cfg.schedule_start);
  // 1e-9 absorbs representation error, e.g. 0.15 / 0.05 = 2.9999999999999996.
  const double steps = std::floor(beyond / cfg.schedule_step + 1e-9);
  return std::max(cfg.canny_low + 1.0, cfg.canny_high - cfg.high_decrement * steps);
}

double gaussian_sigma(int ksize) { return 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8; }

std::vector<double> gaussian_blur(const std::vector<double>& plane, int height, int width,
                                  int ksize) {
  const int half = ksize / 2;
  const double sigma = gaussian_sigma(ksize);
  std::vector<double> kernel(ksize);
  double sum = 0.0;
  for (int i = 0; i < ksize; ++i) {
    const double x = i - half;
    kernel[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += kernel[i];
  }
  for (double& k : kernel) k /= sum;

  std::vector<double> tmp(plane.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = 0; i < ksize; ++i) {
        acc += kernel[i] * plane[static_cast<std::size_t>(r) * width + reflect101(c + i - half, width)];
      }
      tmp[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  std::vector<double> out(plane.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = 0; i < ksize; ++i) {
        acc += kernel[i] * tmp[static_cast<std::size_t>(reflect101(r + i - half, height)) * width + c];
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  return out;
}

BinaryMask canny(const std::vector<double>& plane, int height, int width, double low,
                 double high) {
  const auto at = [&](int r, int c) {
    r = std::clamp(r, 0, height - 1);
    c = std::clamp(c, 0, width - 1);
    return plane[static_cast<std::size_t>(r) * width + c];
  };
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> mag(n);
  std::vector<std::uint8_t> sector(n);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      const auto idx = static_cast<std::size_t>(r) * width + c;
      mag[idx] = std::sqrt(gx * gx + gy * gy);
      double deg = std::atan2(gy, gx) * 180.0 / M_PI;
      if (deg < 0) deg += 180.0;
      // 0: horizontal gradient, 1: 45 deg, 2: vertical, 3: 135 deg (rows grow downward).
      if (deg < 22.5 || deg >= 157.5) sector[idx] = 0;
      else if (deg < 67.5) sector[idx] = 1;
      else if (deg < 112.5) sector[idx] = 2;
      else sector[idx] = 3;
    }
  }

  const auto mag_at = [&](int r, int c) {
    if (r < 0 || c < 0 || r >= height || c >= width) return 0.0;
    return mag[static_cast<std::size_t>(r) * width + c];
  };
  // 0 = suppressed, 1 = weak, 2 = strong.
  std::vector<std::uint8_t> state(n, 0);
  std::vector<std::size_t> stack;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const auto idx = static_cast<std::size_t>(r) * width + c;
      const double m = mag[idx];
      if (m <= low) continue;
      double before = 0.0;
      double after = 0.0;
      switch (sector[idx]) {
        case 0: before = mag_at(r, c - 1); after = mag_at(r, c + 1); break;
        case 1: before = mag_at(r - 1, c - 1); after = mag_at(r + 1, c + 1); break;
        case 2: before = mag_at(r - 1, c); after = mag_at(r + 1, c); break;
        default: before = mag_at(r - 1, c + 1); after = mag_at(r + 1, c - 1); break;
      }
      // Strict on one side so a plateau of two equal maxima keeps one pixel.
      if (!(m > before && m >= after)) continue;
      if (m > high) {
        state[idx] = 2;
        stack.push_back(idx);
      } else {
        state[idx] = 1;
      }
    }
  }

  BinaryMask edges(n, 0);
  while (!stack.empty()) {
    const auto idx = stack.back();
    stack.pop_back();
    if (edges[idx]) continue;
    edges[idx] = 1;
    const int r = static_cast<int>(idx / width);
    const int c = static_cast<int>(idx % width);
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr;
        const int cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= height || cc >= width) continue;
        const auto nidx = static_cast<std::size_t>(rr) * width + cc;
        if (state[nidx] != 0 && !edges[nidx]) stack.push_back(nidx);
      }
    }
  }
  return edges;
}

BinaryMask dilate(const BinaryMask& mask, int height, int width, int ksize) {
  const int half = ksize / 2;
  BinaryMask rows(mask.size(), 0);
  for (int r = 0; r < height; ++r) {
    const auto base = static_cast<std::size_t>(r) * width;
    for (int c = 0; c < width; ++c) {
      if (!mask[base + c]) continue;
      const int lo = std::max(0, c - half);
      const int hi = std::min(width - 1, c + half);
      for (int k = lo; k <= hi; ++k) rows[base + k] = 1;
    }
  }
  BinaryMask out(mask.size(), 0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (!rows[static_cast<std::size_t>(r) * width + c]) continue;
      const int lo = std::max(0, r - half);
      const int hi = std::min(height - 1, r + half);
      for (int k = lo; k <= hi; ++k) out[static_cast<std::size_t>(k) * width + c] = 1;
    }
  }
  return out;
}

BinaryMask edge_mask(const RasterImage& img, const EdgeConfig& cfg, double budget_fraction) {
  cfg.validate();
  if (budget_fraction < 0.0 || budget_fraction > 1.0) {
    throw Error("budget fraction must lie in [0, 1]");
  }
  if (std::min(img.height(), img.width()) < cfg.gaussian_kernel) {
    throw Error("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                " is smaller than the gaussian kernel");
  }
  const auto smooth = gaussian_blur(img.luma(), img.height(), img.width(), cfg.gaussian_kernel);
  const auto edges = canny(smooth, img.height(), img.width(), cfg.canny_low,
                           schedule_high_threshold(cfg, budget_fraction));
  return dilate(edges, img.height(), img.width(), cfg.dilation_kernel);
}

}  // namespace albalance
