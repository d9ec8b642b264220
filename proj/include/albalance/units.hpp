#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "albalance/edges.hpp"
#include "albalance/tensor.hpp"

namespace albalance {

struct UnitId {
  std::uint64_t value = 0;
  auto operator<=>(const UnitId&) const = default;
};

enum class UnitKind { Rect, Edge };

const char* to_string(UnitKind kind);
UnitKind unit_kind_from_string(const std::string& s);

/// Smallest region an annotator labels: all of it or none of it.
struct LabelingUnit {
  UnitId id;
  std::string image_id;
  UnitKind kind = UnitKind::Rect;
  int image_height = 0;
  int image_width = 0;
  /// Sorted pixel indices into the image.
  PixelSet mask;
  std::uint64_t cost = 0;
};

/// Tiles an image with region_size squares; right and bottom remainders
/// become smaller cells. Ids count up from `first_id`.
std::vector<LabelingUnit> grid_units(int height, int width, int region_size,
                                     const std::string& image_id = "", std::uint64_t first_id = 0);

/// 8-connected components of a binary mask, each as a sorted pixel set,
/// ordered by their first pixel.
std::vector<PixelSet> connected_components(const BinaryMask& mask, int height, int width);

/// Builds a disjoint cover of the image from an edge-region mask: edge
/// components become EDGE units (oversized ones cut along a grid), and the
/// remaining pixels of each grid cell become a RECT unit.
std::vector<LabelingUnit> partition_from_edges(const BinaryMask& edges, int height, int width,
                                               int region_size, std::uint64_t max_unit_pixels,
                                               const std::string& image_id = "",
                                               std::uint64_t first_id = 0);

/// `edge_mask` followed by `partition_from_edges`.
std::vector<LabelingUnit> partition_units(const RasterImage& img, const EdgeConfig& cfg,
                                          int region_size, double budget_fraction,
                                          const std::string& image_id = "",
                                          std::uint64_t first_id = 0);

/// Row-major run lengths alternating skip/take, starting with a skip.
std::vector<std::uint32_t> rle_encode(const PixelSet& mask);
/// Inverse of rle_encode; throws if runs exceed `num_pixels`.
PixelSet rle_decode(const std::vector<std::uint32_t>& runs, std::size_t num_pixels);

nlohmann::json to_json(const LabelingUnit& unit);
LabelingUnit unit_from_json(const nlohmann::json& j);
nlohmann::json units_to_json(const std::vector<LabelingUnit>& units);
std::vector<LabelingUnit> units_from_json(const nlohmann::json& j);

}  // namespace albalance
