#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hm/features.hpp"
#include "hm/types.hpp"

namespace hm {

struct BlobSpec {
  double cx = 0, cy = 0, rx = 0, ry = 0;  // full-resolution pixels
};

// Source cells placed in one blob, each with a single target at a fixed
// offset, so the mean closest distance is known in closed form.
struct FixtureSpec {
  std::size_t blob = 0;
  CellClass source = CellClass::Lymphocyte;
  CellClass target = CellClass::Plasma;
  std::vector<Point> offsets;
};

enum class ContourTemplate { None, Circle, Square };

struct SynthConfig {
  SlideMeta meta{3200, 3200, 1.0, 32};
  double vicinity_um = 1000.0;
  std::uint64_t seed = 0;
  std::vector<BlobSpec> blobs;
  // Planted cell counts indexed by [RegionTag][CellClass]. Epithelial must be 0.
  std::array<std::array<std::int64_t, kNumClasses>, 3> counts{};
  ContourTemplate contour = ContourTemplate::None;
  double contour_radius = 4.0;
  std::vector<FixtureSpec> fixtures;
};

struct GroundTruth {
  // Post-refinement counts per [RegionTag][CellClass].
  std::array<ClassCounts, 3> counts{};
  std::int64_t tumor_pixels = 0;
  std::int64_t vicinity_pixels = 0;
  std::int64_t total_pixels = 0;
  std::int64_t n_tumor_instances = 0;
  // Expected values of the count-derived features (percentages, shares,
  // densities, ratios) of the default registry.
  FeatureVector features;
  std::map<std::pair<CellClass, CellClass>, double> fixture_distances;
};

struct SynthSlide {
  SlideMeta meta;
  std::vector<CellRecord> cells;
  TumorMask mask;
  GroundTruth truth;
};

// Deterministic in (config, seed). Throws GenerationError when a blob leaves
// the slide or a region cannot host its planted cells.
SynthSlide generate(const SynthConfig& config);

SynthConfig parse_synth_config(std::string_view bytes);
std::string write_synth_config(const SynthConfig& config);
std::string write_truth(const GroundTruth& truth);

}  // namespace hm
