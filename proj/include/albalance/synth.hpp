#pragma once

// Synthetic aerial-style scenes with exact ground truth.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "albalance/tensor.hpp"

namespace albalance {

enum class Texture { Flat, Stripes, Speckle };

struct ClassStyle {
  std::string name;
  std::array<double, 3> color{128, 128, 128};
  /// Per-pixel Gaussian noise std, in 8-bit units.
  double noise = 8.0;
  Texture texture = Texture::Flat;
  double texture_amplitude = 0.0;
  double stripe_period = 6.0;
};

struct SynthSpec {
  std::vector<ClassStyle> classes;
  /// Target share of all pixels per class; must sum to 1.
  std::vector<double> proportions;
  int num_images = 40;
  int height = 96;
  int width = 96;
  /// Voronoi seeds per image.
  int cells_per_image = 12;

  void validate() const;
  int num_classes() const { return static_cast<int>(classes.size()); }
};

/// Six land-cover classes with the imbalance of the Deepglobe training set
/// (urban, agriculture, rangeland, forest, water, barren).
SynthSpec default_spec();

/// Three well separated color classes in equal shares.
SynthSpec blob_spec();

struct SynthScene {
  std::string id;
  RasterImage image;
  LabelMask truth;
};

/// Voronoi mosaics whose class assignment tracks the target proportions
/// across the whole set. Deterministic per seed.
std::vector<SynthScene> synth_dataset(std::uint64_t seed, const SynthSpec& spec);

/// A patch rendered entirely in one class style.
RasterImage class_swatch(const ClassStyle& style, int height, int width, std::uint64_t seed);

/// Background plus two random convex polygons at well separated gray
/// levels; truth classes 0 (background), 1, 2.
SynthScene synth_polygon_scene(std::uint64_t seed, int size = 128);

/// Pixels with a 4-neighbor of a different truth class.
std::vector<std::uint8_t> boundary_pixels(const LabelMask& truth);

/// Share of truth pixels per class over a set of scenes.
std::vector<double> aggregate_proportions(const std::vector<SynthScene>& scenes, int num_classes);

}  // namespace albalance
