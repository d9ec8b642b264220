#include "albalance/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "albalance/acquisition.hpp"
#include "albalance/raster_io.hpp"

namespace albalance {

namespace fs = std::filesystem;

void save_dataset(const fs::path& root, const Dataset& ds) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "truth");
  nlohmann::json manifest = {{"num_classes", ds.num_classes},
                             {"class_names", ds.class_names},
                             {"train", nlohmann::json::array()},
                             {"test", nlohmann::json::array()}};
  if (!ds.prototypes.empty()) manifest["prototypes"] = ds.prototypes;
  auto write_split = [&](const std::vector<SynthScene>& split, const char* name) {
    for (const auto& s : split) {
      write_png(root / "images" / (s.id + ".png"), s.image);
      write_label_mask(root / "truth" / (s.id + ".alrt"), s.truth);
      manifest[name].push_back(s.id);
    }
  };
  write_split(ds.train, "train");
  write_split(ds.test, "test");
  std::ofstream(root / "dataset.json") << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "dataset.json");
  if (!in) throw IoError(IoErrorKind::Open, (root / "dataset.json").string());
  const auto manifest = nlohmann::json::parse(in);
  Dataset ds;
  ds.num_classes = manifest.at("num_classes").get<int>();
  if (ds.num_classes <= 0 || ds.num_classes > kMaxClasses) throw Error("dataset class count out of range");
  ds.class_names = manifest.value("class_names", std::vector<std::string>{});
  ds.prototypes = manifest.value("prototypes", std::vector<std::vector<double>>{});
  if (!ds.prototypes.empty() && static_cast<int>(ds.prototypes.size()) != ds.num_classes) {
    throw Error("dataset prototypes must have one entry per class");
  }
  auto read_split = [&](const char* name, std::vector<SynthScene>& split) {
    for (const auto& id_json : manifest.at(name)) {
      const auto id = id_json.get<std::string>();
      SynthScene s{id, read_png(root / "images" / (id + ".png")),
                   read_label_mask(root / "truth" / (id + ".alrt"))};
      if (s.image.height() != s.truth.height() || s.image.width() != s.truth.width()) {
        throw Error("image and truth sizes differ for " + id);
      }
      s.truth.validate(ds.num_classes);
      split.push_back(std::move(s));
    }
  };
  read_split("train", ds.train);
  read_split("test", ds.test);
  return ds;
}

Dataset make_synthetic_dataset(std::uint64_t seed, const SynthSpec& spec, int test_images) {
  if (test_images < 0 || test_images >= spec.num_images) {
    throw Error("test split must leave at least one training image");
  }
  auto scenes = synth_dataset(seed, spec);
  Dataset ds;
  ds.num_classes = spec.num_classes();
  for (int c = 0; c < spec.num_classes(); ++c) {
    ds.class_names.push_back(spec.classes[c].name);
    ds.prototypes.push_back(
        region_feature(class_swatch(spec.classes[c], 32, 32, seed ^ (0xA5A5ULL + static_cast<std::uint64_t>(c)))));
  }
  const auto n_train = scenes.size() - static_cast<std::size_t>(test_images);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    (i < n_train ? ds.train : ds.test).push_back(std::move(scenes[i]));
  }
  return ds;
}

}  // namespace albalance
