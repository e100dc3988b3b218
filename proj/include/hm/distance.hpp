#pragma once

#include <cstdint>
#include <map>
#include <span>

#include "hm/types.hpp"

namespace hm {

inline constexpr double kDefaultGrowth = 0.05;

struct DistanceSpec {
  CellClass source = CellClass::Lymphocyte;
  CellClass target = CellClass::Tumor;
  double f = kDefaultGrowth;  // search rectangle growth per step, as a fraction of the tumor bbox
};

struct DistanceResult {
  double mean_distance = 0.0;  // full-resolution pixels
  std::map<std::int32_t, double> per_tumor_means;
  std::int64_t n_source_used = 0;
  std::int64_t n_source_skipped = 0;
  friend bool operator==(const DistanceResult&, const DistanceResult&) = default;
};

// Closest-target search with an expanding rectangle: at step k = 1, 2, ... the
// rectangle centred on `source` spans f*k*l_t by f*k*w_t (total side lengths,
// boundary inclusive). Returns the minimum Euclidean distance over the targets
// inside the first non-empty rectangle. Throws NoTargetError on empty input.
double nearest_in_rectangle(Point source, std::span<const Point> targets, double l_t, double w_t, double f);

// Mean over source-class cells inside tumor regions of the rectangle-search
// distance to target-class cells of the same tumor instance. Sources in
// tumors without targets are skipped. Summation runs in ascending cell id, so
// the result does not depend on `workers`. Throws DistanceUndefined when no
// source cell is usable.
DistanceResult mean_closest_distance(const AlignedSlide& slide, const DistanceSpec& spec, int workers = 0);

// Serial reference: same contract, exhaustive step-by-step search, no index.
DistanceResult brute_force_mean_closest_distance(const AlignedSlide& slide, const DistanceSpec& spec);

// Same eligibility, exact nearest neighbour instead of the rectangle search.
DistanceResult true_nn_mean_distance(const AlignedSlide& slide, const DistanceSpec& spec, int workers = 0);

// Monte Carlo estimate of how often the first square search window misses the
// true nearest point. Points are uniform in the disk circumscribing the square.
double estimate_overestimation_probability(int n_cells, std::int64_t trials, std::uint64_t seed, int workers = 0);

}  // namespace hm
