#include "albalance/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace albalance {

namespace {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Renders one pixel of a class style. `theta` orients stripes per image.
double style_value(const ClassStyle& s, int ch, int r, int c, double theta, double speckle,
                   double noise) {
  double v = s.color[ch] + noise;
  switch (s.texture) {
    case Texture::Flat: break;
    case Texture::Stripes:
      v += s.texture_amplitude *
           std::sin(2.0 * M_PI * (r * std::cos(theta) + c * std::sin(theta)) / s.stripe_period);
      break;
    case Texture::Speckle: v += speckle * s.texture_amplitude; break;
  }
  return v;
}

}  // namespace

void SynthSpec::validate() const {
  if (classes.empty() || classes.size() > static_cast<std::size_t>(kMaxClasses)) {
    throw Error("synth spec needs between 1 and 254 classes");
  }
  if (proportions.size() != classes.size()) throw Error("one target proportion per class is required");
  double sum = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw Error("target proportions must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error("target proportions must sum to 1");
  if (num_images <= 0 || height <= 0 || width <= 0 || cells_per_image <= 0) {
    throw Error("synth spec sizes must be positive");
  }
}

SynthSpec default_spec() {
  SynthSpec spec;
  spec.classes = {
      {"urban", {150, 140, 140}, 42.0, Texture::Speckle, 40.0, 6.0},
      {"agriculture", {125, 150, 80}, 42.0, Texture::Stripes, 12.0, 7.0},
      {"rangeland", {135, 150, 90}, 48.0, Texture::Flat, 0.0, 6.0},
      {"forest", {60, 95, 55}, 42.0, Texture::Flat, 0.0, 6.0},
      {"water", {62, 92, 68}, 36.0, Texture::Flat, 0.0, 6.0},
      {"barren", {145, 150, 100}, 48.0, Texture::Flat, 0.0, 6.0},
  };
  // The published shares sum to 1.008; rescale to a distribution.
  spec.proportions = {0.093, 0.577, 0.102, 0.138, 0.037, 0.061};
  const double total = std::accumulate(spec.proportions.begin(), spec.proportions.end(), 0.0);
  for (auto& p : spec.proportions) p /= total;
  return spec;
}

SynthSpec blob_spec() {
  SynthSpec spec;
  spec.classes = {
      {"red", {200, 50, 50}, 8.0, Texture::Flat, 0.0, 6.0},
      {"green", {50, 190, 60}, 8.0, Texture::Flat, 0.0, 6.0},
      {"blue", {50, 60, 200}, 8.0, Texture::Flat, 0.0, 6.0},
  };
  spec.proportions = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  spec.num_images = 8;
  spec.height = 64;
  spec.width = 64;
  spec.cells_per_image = 6;
  return spec;
}

std::vector<SynthScene> synth_dataset(std::uint64_t seed, const SynthSpec& spec) {
  spec.validate();
  const int num_classes = spec.num_classes();
  const int h = spec.height;
  const int w = spec.width;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> assigned(num_classes, 0.0);
  double assigned_total = 0.0;
  std::vector<SynthScene> out;
  for (int img = 0; img < spec.num_images; ++img) {
    const int k = spec.cells_per_image;
    std::vector<std::pair<double, double>> seeds(k);
    for (auto& s : seeds) s = {unit(rng) * h, unit(rng) * w};
    std::vector<int> cell(static_cast<std::size_t>(h) * w);
    std::vector<double> area(k, 0.0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int s = 0; s < k; ++s) {
          const double dr = r + 0.5 - seeds[s].first;
          const double dc = c + 0.5 - seeds[s].second;
          const double d = dr * dr + dc * dc;
          if (d < best_d) {
            best_d = d;
            best = s;
          }
        }
        cell[static_cast<std::size_t>(r) * w + c] = best;
        area[best] += 1.0;
      }
    }

    // Each cell draws its class in proportion to how far that class lags
    // its target share of everything assigned so far.
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> cell_class(k, 0);
    for (int s : order) {
      if (area[s] == 0.0) continue;
      std::vector<double> weight(num_classes);
      double wsum = 0.0;
      for (int c = 0; c < num_classes; ++c) {
        weight[c] = std::max(0.0, spec.proportions[c] * (assigned_total + area[s]) - assigned[c]);
        wsum += weight[c];
      }
      if (wsum == 0.0) {
        weight = spec.proportions;
        wsum = 1.0;
      }
      double u = unit(rng) * wsum;
      int chosen = num_classes - 1;
      for (int c = 0; c < num_classes; ++c) {
        if (weight[c] <= 0.0) continue;
        if (u < weight[c]) {
          chosen = c;
          break;
        }
        u -= weight[c];
      }
      while (weight[chosen] <= 0.0 && chosen > 0) --chosen;
      cell_class[s] = chosen;
      assigned[chosen] += area[s];
      assigned_total += area[s];
    }

    std::vector<double> theta(num_classes);
    for (auto& t : theta) t = unit(rng) * M_PI;
    RasterImage image(h, w, 3);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const auto p = static_cast<std::size_t>(r) * w + c;
        const int cls = cell_class[cell[p]];
        labels[p] = static_cast<std::uint8_t>(cls);
        const auto& style = spec.classes[cls];
        const double speckle = unit(rng) < 0.15 ? 1.0 : 0.0;
        const double noise = gauss(rng) * style.noise;
        for (int ch = 0; ch < 3; ++ch) {
          image(r, c, ch) = to_u8(style_value(style, ch, r, c, theta[cls], speckle, noise));
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "img_%04d", img);
    out.push_back({id, std::move(image), LabelMask::from_labels(h, w, std::move(labels))});
  }
  return out;
}

RasterImage class_swatch(const ClassStyle& style, int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double theta = unit(rng) * M_PI;
  RasterImage img(height, width, 3);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double speckle = unit(rng) < 0.15 ? 1.0 : 0.0;
      const double noise = gauss(rng) * style.noise;
      for (int ch = 0; ch < 3; ++ch) img(r, c, ch) = to_u8(style_value(style, ch, r, c, theta, speckle, noise));
    }
  }
  return img;
}

SynthScene synth_polygon_scene(std::uint64_t seed, int size) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double levels[3] = {20.0 + 20.0 * unit(rng), 120.0 + 20.0 * unit(rng), 220.0 + 20.0 * unit(rng)};

  std::vector<std::uint8_t> labels(static_cast<std::size_t>(size) * size, 0);
  for (int poly = 1; poly <= 2; ++poly) {
    const double cr = size * (0.25 + 0.5 * unit(rng));
    const double cc = size * (0.25 + 0.5 * unit(rng));
    const double radius = size * (0.15 + 0.12 * unit(rng));
    const int n = 5 + static_cast<int>(unit(rng) * 4);
    std::vector<double> angles(n);
    for (auto& a : angles) a = unit(rng) * 2.0 * M_PI;
    std::sort(angles.begin(), angles.end());
    std::vector<std::pair<double, double>> verts;
    for (double a : angles) {
      const double rad = radius * (0.75 + 0.25 * unit(rng));
      verts.emplace_back(cr + rad * std::sin(a), cc + rad * std::cos(a));
    }
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        // Even-odd rule on the pixel center.
        const double y = r + 0.5;
        const double x = c + 0.5;
        bool inside = false;
        for (int i = 0, j = n - 1; i < n; j = i++) {
          const auto [yi, xi] = verts[i];
          const auto [yj, xj] = verts[j];
          if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
        }
        if (inside) labels[static_cast<std::size_t>(r) * size + c] = static_cast<std::uint8_t>(poly);
      }
    }
  }
  RasterImage image(size, size, 1);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const auto p = static_cast<std::size_t>(r) * size + c;
      image(r, c, 0) = to_u8(levels[labels[p]] + 4.0 * gauss(rng));
    }
  }
  return {"poly_" + std::to_string(seed), std::move(image),
          LabelMask::from_labels(size, size, std::move(labels))};
}

std::vector<std::uint8_t> boundary_pixels(const LabelMask& truth) {
  const int h = truth.height();
  const int w = truth.width();
  std::vector<std::uint8_t> out(truth.num_pixels(), 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto p = static_cast<PixelIndex>(r * w + c);
      const auto v = truth.label(p);
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int k = 0; k < 4; ++k) {
        if (nr[k] < 0 || nc[k] < 0 || nr[k] >= h || nc[k] >= w) continue;
        if (truth.label(static_cast<PixelIndex>(nr[k] * w + nc[k])) != v) {
          out[p] = 1;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<double> aggregate_proportions(const std::vector<SynthScene>& scenes, int num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  double total = 0.0;
  for (const auto& s : scenes) {
    for (auto v : s.truth.labels()) {
      if (v == kUnlabeled) continue;
      counts[v] += 1.0;
      total += 1.0;
    }
  }
  for (auto& v : counts) v /= total;
  return counts;
}

}  // namespace albalance
