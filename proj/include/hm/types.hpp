#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace hm {

enum class CellClass : std::uint8_t {
  Granulocyte = 0,
  Lymphocyte,
  Plasma,
  Stromal,
  Tumor,
  Epithelial,
};

inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::array<CellClass, kNumClasses> kAllClasses = {
    CellClass::Granulocyte, CellClass::Lymphocyte, CellClass::Plasma,
    CellClass::Stromal,     CellClass::Tumor,      CellClass::Epithelial};

std::string_view class_name(CellClass c);
std::optional<CellClass> class_from_name(std::string_view name);
// Ingestion codes 1..5; Epithelial has no ingestion code.
std::optional<CellClass> class_from_code(int code);
int class_code(CellClass c);  // 1..6
inline std::size_t index_of(CellClass c) { return static_cast<std::size_t>(c); }

enum class RegionTag : std::uint8_t { Tumor = 0, Vicinity, Outside };
std::string_view region_name(RegionTag r);

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

using Polygon = std::vector<Point>;

struct CellRecord {
  std::int64_t id = 0;
  Point centroid;
  CellClass cls = CellClass::Granulocyte;
  std::optional<Polygon> contour;
  std::optional<double> class_confidence;
  friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

struct SlideMeta {
  std::int64_t width_px = 0;
  std::int64_t height_px = 0;
  double microns_per_pixel = 0.0;
  std::int64_t mask_downsample = 1;

  std::int64_t mask_width() const { return (width_px + mask_downsample - 1) / mask_downsample; }
  std::int64_t mask_height() const { return (height_px + mask_downsample - 1) / mask_downsample; }
  // Throws ParameterError on non-positive dimensions or resolution.
  void validate() const;
};

// Dense row-major binary raster at mask (downsampled) resolution.
struct BinaryMask {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(std::int64_t w, std::int64_t h) : width(w), height(h), bits(static_cast<std::size_t>(w * h), 0) {}

  bool at(std::int64_t x, std::int64_t y) const { return bits[static_cast<std::size_t>(y * width + x)] != 0; }
  void set(std::int64_t x, std::int64_t y, bool v) { bits[static_cast<std::size_t>(y * width + x)] = v ? 1 : 0; }
  std::int64_t count() const;
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

using TumorMask = BinaryMask;
using VicinityMask = BinaryMask;

struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double length() const { return x_max - x_min; }  // l_t
  double width() const { return y_max - y_min; }   // w_t
};

struct TumorInstance {
  std::int32_t label = 0;
  BBox bbox;  // full-resolution pixels, half-open pixel cover
  std::int64_t pixel_count = 0;
};

struct AlignedSlide {
  SlideMeta meta;
  std::vector<CellRecord> cells;
  TumorMask tumor_mask;
  VicinityMask vicinity_mask;
  std::vector<std::int32_t> label_raster;  // 0 = background, else instance label
  std::vector<TumorInstance> tumor_instances;
  std::vector<RegionTag> cell_region_tags;
  std::vector<std::optional<std::int32_t>> cell_tumor_ids;
};

}  // namespace hm
