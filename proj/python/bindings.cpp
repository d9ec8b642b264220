#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "albalance/acquisition.hpp"
#include "albalance/dataset.hpp"
#include "albalance/edges.hpp"
#include "albalance/harness.hpp"
#include "albalance/metrics.hpp"
#include "albalance/pseudo_label.hpp"
#include "albalance/raster_io.hpp"
#include "albalance/segmenter.hpp"
#include "albalance/synth.hpp"
#include "albalance/units.hpp"

namespace py = pybind11;
using namespace albalance;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ProbabilityMap to_prob_map(const F64Array& a) {
  if (a.ndim() != 3) throw Error("probability map must be H x W x C");
  std::vector<double> data(a.data(), a.data() + a.size());
  ProbabilityMap pm(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                    static_cast<int>(a.shape(2)), std::move(data));
  pm.validate(1e-6);
  return pm;
}

py::array_t<double> from_prob_map(const ProbabilityMap& pm) {
  py::array_t<double> out({pm.height(), pm.width(), pm.num_classes()});
  std::copy(pm.data().begin(), pm.data().end(), out.mutable_data());
  return out;
}

// Labels as H x W uint8 with 255 for unlabeled; every decided pixel is HUMAN
// unless a provenance array is supplied.
LabelMask to_label_mask(const U8Array& labels, std::optional<U8Array> prov) {
  if (labels.ndim() != 2) throw Error("label mask must be H x W");
  const int h = static_cast<int>(labels.shape(0));
  const int w = static_cast<int>(labels.shape(1));
  std::vector<std::uint8_t> l(labels.data(), labels.data() + labels.size());
  std::vector<Provenance> p(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (prov) {
      p[i] = static_cast<Provenance>(prov->data()[i]);
    } else {
      p[i] = l[i] == kUnlabeled ? Provenance::None : Provenance::Human;
    }
  }
  return LabelMask(h, w, std::move(l), std::move(p));
}

py::tuple from_label_mask(const LabelMask& lm) {
  py::array_t<std::uint8_t> labels({lm.height(), lm.width()});
  py::array_t<std::uint8_t> prov({lm.height(), lm.width()});
  std::copy(lm.labels().begin(), lm.labels().end(), labels.mutable_data());
  for (std::size_t i = 0; i < lm.num_pixels(); ++i) prov.mutable_data()[i] = static_cast<std::uint8_t>(lm.provenance()[i]);
  return py::make_tuple(labels, prov);
}

RasterImage to_image(const U8Array& a) {
  if (a.ndim() == 2) {
    return RasterImage(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 1,
                       std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() == 3 && (a.shape(2) == 3 || a.shape(2) == 1)) {
    return RasterImage(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                       std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
  }
  throw Error("image must be H x W or H x W x 3 uint8");
}

py::array_t<std::uint8_t> from_image(const RasterImage& img) {
  std::vector<py::ssize_t> shape = {img.height(), img.width()};
  if (img.channels() == 3) shape.push_back(3);
  py::array_t<std::uint8_t> out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

PixelSet to_pixel_set(std::vector<PixelIndex> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["per_class_iou"] = r.per_class_iou;
  d["miou"] = r.miou;
  d["per_class_f1"] = r.per_class_f1;
  d["mean_f1"] = r.mean_f1;
  d["min_iou"] = r.min_iou();
  d["confusion"] = r.confusion;
  return d;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Class-balanced active learning for semantic segmentation";
  py::register_exception<Error>(m, "AlbalanceError", PyExc_ValueError);

  py::class_<LabelingUnit>(m, "LabelingUnit")
      .def_property_readonly("id", [](const LabelingUnit& u) { return u.id.value; })
      .def_readonly("image_id", &LabelingUnit::image_id)
      .def_property_readonly("kind", [](const LabelingUnit& u) { return std::string(to_string(u.kind)); })
      .def_readonly("cost", &LabelingUnit::cost)
      .def_readonly("mask", &LabelingUnit::mask)
      .def("to_json", [](const LabelingUnit& u) { return json_to_py(to_json(u)); })
      .def("__repr__", [](const LabelingUnit& u) {
        return "<LabelingUnit " + std::to_string(u.id.value) + " " + to_string(u.kind) + " cost=" +
               std::to_string(u.cost) + ">";
      });

  m.def("pixel_entropy", [](std::vector<double> p) { return pixel_entropy(p); });
  m.def("entropy_sum", [](const F64Array& pm, std::vector<PixelIndex> mask) {
    return entropy_sum(to_prob_map(pm), to_pixel_set(std::move(mask)));
  });
  m.def(
      "class_proportions",
      [](const U8Array& labels, std::vector<PixelIndex> mask, int num_classes) {
        return class_proportions(to_label_mask(labels, std::nullopt), to_pixel_set(std::move(mask)), num_classes);
      },
      py::arg("labels"), py::arg("mask"), py::arg("num_classes"));
  m.def("argmax_map", [](const F64Array& pm) { return py::object(from_label_mask(argmax_map(to_prob_map(pm)))[0]); });
  m.def("evaluate", [](const U8Array& pred, const U8Array& truth, int num_classes) {
    return report_dict(evaluate(to_label_mask(pred, std::nullopt), to_label_mask(truth, std::nullopt), num_classes));
  });

  m.def("normalize_perf", [](std::vector<double> iou, double eps) { return normalize_perf(iou, eps).normalized_perf; },
        py::arg("raw_iou"), py::arg("eps") = 1e-3);
  m.def(
      "balanced_score",
      [](const F64Array& pm, std::vector<PixelIndex> mask, std::vector<double> raw_iou, int region_size,
         double eps) {
        const auto map = to_prob_map(pm);
        LabelingUnit u;
        u.image_height = map.height();
        u.image_width = map.width();
        u.mask = to_pixel_set(std::move(mask));
        u.cost = u.mask.size();
        const auto s = balanced_score(map, u, normalize_perf(raw_iou, eps), region_size);
        py::dict d;
        d["info"] = s.info;
        d["balance"] = s.balance;
        d["score"] = s.score;
        d["mean_entropy"] = s.mean_entropy;
        return d;
      },
      py::arg("prob_map"), py::arg("mask"), py::arg("raw_iou"), py::arg("region_size") = 80,
      py::arg("eps") = 1e-3);

  m.def("ratio_thresholds", [](std::vector<double> raw_iou, double base) {
    return ratio_thresholds(raw_iou, PseudoConfig{base});
  }, py::arg("raw_iou"), py::arg("base") = 0.5);
  m.def(
      "generate_pseudo",
      [](const F64Array& pm, const U8Array& labels, std::vector<double> ratios) {
        return from_label_mask(generate_pseudo(to_prob_map(pm), to_label_mask(labels, std::nullopt), ratios));
      },
      "Returns (labels, provenance) arrays; provenance 1 = human, 2 = pseudo.");

  m.def(
      "contrastive_loss",
      [](std::vector<std::vector<double>> anchors, std::vector<std::vector<std::vector<double>>> positives,
         std::vector<std::vector<std::vector<double>>> negatives, double tau) {
        return contrastive_loss(ContrastiveBatch::from_vectors(anchors, positives, negatives, tau)).loss;
      },
      py::arg("anchors"), py::arg("positives"), py::arg("negatives"), py::arg("tau") = 0.1);

  m.def(
      "edge_mask",
      [](const U8Array& img, double budget_fraction) {
        const auto image = to_image(img);
        const auto mask = edge_mask(image, EdgeConfig{}, budget_fraction);
        py::array_t<std::uint8_t> out({image.height(), image.width()});
        std::copy(mask.begin(), mask.end(), out.mutable_data());
        return out;
      },
      py::arg("image"), py::arg("budget_fraction") = 0.0);
  m.def(
      "partition",
      [](const U8Array& img, int region_size, double budget_fraction, bool edges) {
        const auto image = to_image(img);
        return edges ? partition_units(image, EdgeConfig{}, region_size, budget_fraction)
                     : grid_units(image.height(), image.width(), region_size);
      },
      py::arg("image"), py::arg("region_size") = 80, py::arg("budget_fraction") = 0.0, py::arg("edges") = true);

  m.def(
      "synth_dataset",
      [](std::uint64_t seed, std::string spec, int num_images, int size) {
        auto s = spec == "blob" ? blob_spec() : default_spec();
        if (spec != "blob" && spec != "default") throw Error("unknown spec " + spec);
        if (num_images > 0) s.num_images = num_images;
        if (size > 0) s.height = s.width = size;
        py::list out;
        for (const auto& scene : synth_dataset(seed, s)) {
          out.append(py::make_tuple(scene.id, from_image(scene.image), from_label_mask(scene.truth)[0]));
        }
        return out;
      },
      py::arg("seed"), py::arg("spec") = "default", py::arg("num_images") = 0, py::arg("size") = 0);

  m.def("encode_png", [](const U8Array& img) {
    const auto bytes = encode_png(to_image(img));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("decode_png", [](py::bytes b) {
    const std::string s = b;
    return from_image(decode_png(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
  });
  m.def("read_probability_map", [](const std::string& path) { return from_prob_map(read_probability_map(path)); });
  m.def("write_probability_map",
        [](const std::string& path, const F64Array& pm) { write_probability_map(path, to_prob_map(pm)); });

  m.def(
      "run_loop",
      [](std::string strategy, std::uint64_t seed, int num_images, int size, int test_images, int region_size,
         int epochs, std::size_t pixels_per_epoch, std::uint64_t round_budget, double total_fraction,
         std::vector<std::string> disable) {
        auto cfg = balanced_preset();
        cfg.strategy = strategy_from_string(strategy);
        cfg.seed = seed;
        cfg.region_size = region_size;
        cfg.train.epochs = epochs;
        cfg.train.pixels_per_epoch = pixels_per_epoch;
        cfg.round_budget_pixels = round_budget;
        cfg.total_budget_fraction = total_fraction;
        cfg.record_wall_time = false;
        for (const auto& d : disable) {
          auto& a = cfg.ablation;
          if (d == "all") a = Ablation::all_off();
          else if (d == "edge_units") a.edge_units = false;
          else if (d == "clip_init") a.clip_init = false;
          else if (d == "perf_balance") a.perf_balance = false;
          else if (d == "pseudo") a.pseudo = false;
          else if (d == "pseudo_balance") a.pseudo_balance = false;
          else if (d == "contrastive") a.contrastive = false;
          else if (d == "contrastive_balance") a.contrastive_balance = false;
          else throw Error("unknown ablation component " + d);
        }
        auto spec = default_spec();
        spec.num_images = num_images;
        spec.height = spec.width = size;
        const auto ds = make_synthetic_dataset(seed, spec, test_images);
        OracleLabeler oracle(ds);
        RunLog log;
        {
          py::gil_scoped_release release;
          log = run_loop(cfg, ds, oracle);
        }
        py::list out;
        for (const auto& r : log.records) out.append(json_to_py(r.to_json()));
        return out;
      },
      py::arg("strategy") = "balanced", py::arg("seed") = 0, py::arg("num_images") = 12, py::arg("size") = 64,
      py::arg("test_images") = 4, py::arg("region_size") = 16, py::arg("epochs") = 5,
      py::arg("pixels_per_epoch") = 2048, py::arg("round_budget") = 2048, py::arg("total_fraction") = 0.2,
      py::arg("disable") = std::vector<std::string>{},
      "Runs the oracle loop on a synthetic dataset; returns one dict per iteration.");
}
