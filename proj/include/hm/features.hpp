#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hm/distance.hpp"
#include "hm/feature_vector.hpp"
#include "hm/types.hpp"

namespace hm {

enum class Family { Percentage, Density, Ratio, Distance, Morphology };
enum class FeatureRegion { Tumor, Vicinity, Outside, WholeSlide };
enum class MorphStat { AreaMean, AreaStd, CircularityMean, CircularityStd };

std::string_view family_name(Family f);
std::string_view feature_region_name(FeatureRegion r);
std::string_view morph_stat_name(MorphStat s);

struct FeatureDef {
  std::string name;
  Family family = Family::Percentage;
  FeatureRegion region = FeatureRegion::WholeSlide;
  CellClass cls = CellClass::Granulocyte;    // percentage, density, morphology; ratio numerator; distance source
  CellClass cls_b = CellClass::Granulocyte;  // ratio denominator; distance target
  // Percentage only: false = share of the region's cells, true = share of the
  // class's own population found in the region.
  bool of_class = false;
  MorphStat stat = MorphStat::AreaMean;
  bool microns = false;  // distance only
  bool analysis = true;  // part of the selection set (everything but morphology)
};

struct FeatureRegistry {
  std::string schema = kSchemaVersion;
  std::vector<FeatureDef> defs;

  std::vector<std::string> names() const;
  std::vector<std::string> analysis_names() const;
  // Throws AssemblyError on duplicate names.
  void validate() const;
};

struct RegistryOptions {
  bool both_directions = false;  // emit source->target and target->source distances
  bool distance_microns = false;  // add micron-scaled copies of the distance features
};

// Versioned default registry "hm-fv-1".
FeatureRegistry default_registry(const RegistryOptions& opts = {});
FeatureRegistry parse_registry(std::string_view bytes);
std::string write_registry(const FeatureRegistry& reg);

// Classes whose pairwise distances are computed, in canonical order.
inline constexpr std::array<CellClass, 4> kDistanceClasses = {CellClass::Granulocyte, CellClass::Lymphocyte,
                                                              CellClass::Plasma, CellClass::Tumor};

using ClassCounts = std::array<std::int64_t, kNumClasses>;
using ClassValues = std::array<std::optional<double>, kNumClasses>;

ClassCounts count_cells(const AlignedSlide& slide, FeatureRegion region);
std::int64_t region_pixel_count(const AlignedSlide& slide, FeatureRegion region);

ClassValues class_percentages(const AlignedSlide& slide, FeatureRegion region);
ClassValues class_shares(const AlignedSlide& slide, FeatureRegion region);
// Cells per mm^2 of region area.
ClassValues class_densities(const AlignedSlide& slide, FeatureRegion region);

inline constexpr double kRatioEpsilon = 1e-3;
// (log10(n_a) + eps) / (log10(n_b) + eps); nullopt when either count is zero.
std::optional<double> class_ratio(std::int64_t n_a, std::int64_t n_b);

struct MorphStats {
  std::optional<double> area_mean, area_std, circularity_mean, circularity_std;
};
std::array<MorphStats, kNumClasses> morphology_stats(const AlignedSlide& slide, FeatureRegion region);

using DistanceKey = std::pair<CellClass, CellClass>;
using DistanceTable = std::map<DistanceKey, std::optional<DistanceResult>>;

// Distances for every distance feature in the registry; undefined pairs map to nullopt.
DistanceTable compute_distances(const AlignedSlide& slide, const FeatureRegistry& reg, double f = kDefaultGrowth,
                                int workers = 0);

// Places every registry feature in order. Throws AssemblyError when a
// distance feature has no entry in `distances` or a region's percentages do
// not sum to one.
FeatureVector assemble(const AlignedSlide& slide, const FeatureRegistry& reg, const DistanceTable& distances);

FeatureVector extract_features(const AlignedSlide& slide, const FeatureRegistry& reg, int workers = 0);

}  // namespace hm
