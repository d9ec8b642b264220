#include "albalance/units.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace albalance {

const char* to_string(UnitKind kind) { return kind == UnitKind::Edge ? "EDGE" : "RECT"; }

UnitKind unit_kind_from_string(const std::string& s) {
  if (s == "EDGE") return UnitKind::Edge;
  if (s == "RECT") return UnitKind::Rect;
  throw Error("unknown unit kind '" + s + "'");
}

std::vector<LabelingUnit> grid_units(int height, int width, int region_size,
                                     const std::string& image_id, std::uint64_t first_id) {
  if (region_size < 8) throw Error("region size must be at least 8");
  if (height <= 0 || width <= 0) throw Error("grid_units: dimensions must be positive");
  std::vector<LabelingUnit> units;
  for (int r0 = 0; r0 < height; r0 += region_size) {
    for (int c0 = 0; c0 < width; c0 += region_size) {
      LabelingUnit u;
      u.id = UnitId{first_id + units.size()};
      u.image_id = image_id;
      u.kind = UnitKind::Rect;
      u.image_height = height;
      u.image_width = width;
      const int r1 = std::min(height, r0 + region_size);
      const int c1 = std::min(width, c0 + region_size);
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) u.mask.push_back(static_cast<PixelIndex>(r * width + c));
      }
      u.cost = u.mask.size();
      units.push_back(std::move(u));
    }
  }
  return units;
}

std::vector<PixelSet> connected_components(const BinaryMask& mask, int height, int width) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<PixelSet> out;
  std::vector<PixelIndex> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || seen[start]) continue;
    PixelSet comp;
    stack.push_back(static_cast<PixelIndex>(start));
    seen[start] = 1;
    while (!stack.empty()) {
      const auto idx = stack.back();
      stack.pop_back();
      comp.push_back(idx);
      const int r = static_cast<int>(idx) / width;
      const int c = static_cast<int>(idx) % width;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= height || cc >= width) continue;
          const auto n = static_cast<std::size_t>(rr) * width + cc;
          if (mask[n] && !seen[n]) {
            seen[n] = 1;
            stack.push_back(static_cast<PixelIndex>(n));
          }
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

std::vector<LabelingUnit> partition_from_edges(const BinaryMask& edges, int height, int width,
                                               int region_size, std::uint64_t max_unit_pixels,
                                               const std::string& image_id,
                                               std::uint64_t first_id) {
  if (edges.size() != static_cast<std::size_t>(height) * width) {
    throw Error("edge mask does not match image dimensions");
  }
  auto grid = grid_units(height, width, region_size, image_id, 0);
  std::vector<LabelingUnit> units;
  auto push = [&](UnitKind kind, PixelSet mask) {
    LabelingUnit u;
    u.id = UnitId{first_id + units.size()};
    u.image_id = image_id;
    u.kind = kind;
    u.image_height = height;
    u.image_width = width;
    u.cost = mask.size();
    u.mask = std::move(mask);
    units.push_back(std::move(u));
  };

  // Cell side for cutting oversized components; never larger than a region
  // and never larger than the unit cap allows.
  const int cut = std::max(1, std::min(region_size, static_cast<int>(std::floor(
                                                        std::sqrt(static_cast<double>(max_unit_pixels))))));
  for (auto& comp : connected_components(edges, height, width)) {
    if (comp.size() <= max_unit_pixels) {
      push(UnitKind::Edge, std::move(comp));
      continue;
    }
    std::map<std::pair<int, int>, PixelSet> pieces;
    for (PixelIndex idx : comp) {
      const int r = static_cast<int>(idx) / width;
      const int c = static_cast<int>(idx) % width;
      pieces[{r / cut, c / cut}].push_back(idx);
    }
    for (auto& [cell, piece] : pieces) push(UnitKind::Edge, std::move(piece));
  }
  for (auto& cell : grid) {
    PixelSet rest;
    for (PixelIndex idx : cell.mask) {
      if (!edges[idx]) rest.push_back(idx);
    }
    if (!rest.empty()) push(UnitKind::Rect, std::move(rest));
  }
  return units;
}

std::vector<LabelingUnit> partition_units(const RasterImage& img, const EdgeConfig& cfg,
                                          int region_size, double budget_fraction,
                                          const std::string& image_id, std::uint64_t first_id) {
  const auto edges = edge_mask(img, cfg, budget_fraction);
  return partition_from_edges(edges, img.height(), img.width(), region_size, cfg.max_unit_pixels,
                              image_id, first_id);
}

std::vector<std::uint32_t> rle_encode(const PixelSet& mask) {
  std::vector<std::uint32_t> runs;
  std::uint32_t cursor = 0;
  std::size_t i = 0;
  while (i < mask.size()) {
    const auto start = mask[i];
    std::size_t j = i + 1;
    while (j < mask.size() && mask[j] == mask[j - 1] + 1) ++j;
    runs.push_back(start - cursor);
    runs.push_back(static_cast<std::uint32_t>(j - i));
    cursor = start + static_cast<std::uint32_t>(j - i);
    i = j;
  }
  return runs;
}

PixelSet rle_decode(const std::vector<std::uint32_t>& runs, std::size_t num_pixels) {
  if (runs.size() % 2 != 0) throw Error("rle: odd number of run lengths");
  PixelSet out;
  std::uint64_t cursor = 0;
  for (std::size_t k = 0; k < runs.size(); k += 2) {
    cursor += runs[k];
    if (cursor + runs[k + 1] > num_pixels) throw Error("rle: runs exceed image size");
    for (std::uint32_t t = 0; t < runs[k + 1]; ++t) out.push_back(static_cast<PixelIndex>(cursor + t));
    cursor += runs[k + 1];
  }
  return out;
}

nlohmann::json to_json(const LabelingUnit& unit) {
  return {{"id", unit.id.value},
          {"image_id", unit.image_id},
          {"kind", to_string(unit.kind)},
          {"height", unit.image_height},
          {"width", unit.image_width},
          {"rle_mask", rle_encode(unit.mask)},
          {"cost", unit.cost}};
}

LabelingUnit unit_from_json(const nlohmann::json& j) {
  LabelingUnit u;
  u.id = UnitId{j.at("id").get<std::uint64_t>()};
  u.image_id = j.at("image_id").get<std::string>();
  u.kind = unit_kind_from_string(j.at("kind").get<std::string>());
  u.image_height = j.at("height").get<int>();
  u.image_width = j.at("width").get<int>();
  u.mask = rle_decode(j.at("rle_mask").get<std::vector<std::uint32_t>>(),
                      static_cast<std::size_t>(u.image_height) * u.image_width);
  u.cost = j.at("cost").get<std::uint64_t>();
  if (u.mask.empty()) throw Error("unit " + std::to_string(u.id.value) + " has an empty mask");
  if (u.cost != u.mask.size()) {
    throw Error("unit " + std::to_string(u.id.value) + " cost does not match its mask");
  }
  return u;
}

nlohmann::json units_to_json(const std::vector<LabelingUnit>& units) {
  auto arr = nlohmann::json::array();
  for (const auto& u : units) arr.push_back(to_json(u));
  return arr;
}

std::vector<LabelingUnit> units_from_json(const nlohmann::json& j) {
  std::vector<LabelingUnit> out;
  for (const auto& item : j) out.push_back(unit_from_json(item));
  return out;
}

}  // namespace albalance
