#include "hm/types.hpp"

#include <algorithm>

#include "hm/errors.hpp"

namespace hm {

namespace {
constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "granulocyte", "lymphocyte", "plasma", "stromal", "tumor", "epithelial"};
}

std::string_view class_name(CellClass c) { return kClassNames[index_of(c)]; }

std::optional<CellClass> class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return kAllClasses[i];
  return std::nullopt;
}

std::optional<CellClass> class_from_code(int code) {
  if (code < 1 || code > 5) return std::nullopt;
  return kAllClasses[static_cast<std::size_t>(code - 1)];
}

int class_code(CellClass c) { return static_cast<int>(index_of(c)) + 1; }

std::string_view region_name(RegionTag r) {
  switch (r) {
    case RegionTag::Tumor: return "tumor";
    case RegionTag::Vicinity: return "vicinity";
    case RegionTag::Outside: return "outside";
  }
  return "?";
}

void SlideMeta::validate() const {
  if (width_px <= 0 || height_px <= 0) throw ParameterError("slide dimensions must be positive");
  if (!(microns_per_pixel > 0.0)) throw ParameterError("microns_per_pixel must be > 0");
  if (mask_downsample < 1) throw ParameterError("mask_downsample must be >= 1");
}

std::int64_t BinaryMask::count() const {
  return static_cast<std::int64_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

}  // namespace hm
