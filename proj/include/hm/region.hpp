#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "hm/types.hpp"

namespace hm {

struct Labeling {
  std::vector<std::int32_t> labels;  // row-major, 0 = background
  std::vector<TumorInstance> instances;
};

// 8-connected components. Labels are dense 1..K, assigned in raster order of
// each component's first pixel. Bounding boxes are scaled to full resolution.
Labeling label_tumor_instances(const TumorMask& mask, const SlideMeta& meta);

inline constexpr std::int64_t kNoFeature = std::numeric_limits<std::int64_t>::max();

// Exact squared Euclidean distance (in mask pixels) from every pixel to the
// nearest set pixel; kNoFeature when the mask is empty.
std::vector<std::int64_t> squared_distance_transform(const BinaryMask& mask, int workers = 0);

// Band of non-tumor pixels within width_um of the tumor, measured on the mask grid.
VicinityMask vicinity(const TumorMask& mask, const SlideMeta& meta, double width_um = 1000.0, int workers = 0);

struct Tagging {
  std::vector<RegionTag> tags;
  std::vector<std::optional<std::int32_t>> tumor_ids;
};

// Throws TaggingError when a centroid falls outside the slide.
Tagging tag_cells(const std::vector<CellRecord>& cells, const SlideMeta& meta, const Labeling& labeling,
                  const VicinityMask& vicinity, int workers = 0);

// Tumor-class cells outside tumor regions become Epithelial.
std::vector<CellRecord> refine_classes(std::vector<CellRecord> cells, const std::vector<RegionTag>& tags);

// Runs labeling, vicinity, tagging and refinement. Throws ParameterError when
// the mask grid does not match the metadata.
AlignedSlide align_slide(const SlideMeta& meta, std::vector<CellRecord> cells, TumorMask mask,
                         double vicinity_um = 1000.0, int workers = 0);

}  // namespace hm
