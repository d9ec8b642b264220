#pragma once

// On-disk dataset layout:
//   <root>/dataset.json          {"num_classes", "class_names", "train": [ids], "test": [ids]}
//   <root>/images/<id>.png       8-bit gray or RGB
//   <root>/truth/<id>.alrt       LabelMask

#include <filesystem>
#include <string>
#include <vector>

#include "albalance/synth.hpp"
#include "albalance/tensor.hpp"

namespace albalance {

struct Dataset {
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<SynthScene> train;
  std::vector<SynthScene> test;
  /// Optional per-class region features for zero-shot initial selection.
  std::vector<std::vector<double>> prototypes;
};

void save_dataset(const std::filesystem::path& root, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& root);

/// Synthetic dataset from `spec`; the last `test_images` scenes form the test split.
Dataset make_synthetic_dataset(std::uint64_t seed, const SynthSpec& spec, int test_images);

}  // namespace albalance
