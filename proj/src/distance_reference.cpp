// Serial reference for the closest-distance feature. Kept deliberately naive:
// every step rescans every target of the tumor. Tests and the benchmark hold
// the parallel kernel to bit-identical output against this.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "hm/distance.hpp"
#include "hm/errors.hpp"

namespace hm {

DistanceResult brute_force_mean_closest_distance(const AlignedSlide& slide, const DistanceSpec& spec) {
  if (spec.source == spec.target) throw ParameterError("distance source and target classes must differ");
  if (!(spec.f > 0.0)) throw ParameterError("growth parameter f must be > 0");

  std::vector<const CellRecord*> by_id;
  std::vector<std::int32_t> tumor_of;
  for (std::size_t i = 0; i < slide.cells.size(); ++i) by_id.push_back(&slide.cells[i]);
  std::sort(by_id.begin(), by_id.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::map<std::int64_t, std::int32_t> tumor_by_id;
  for (std::size_t i = 0; i < slide.cells.size(); ++i)
    if (slide.cell_tumor_ids[i]) tumor_by_id[slide.cells[i].id] = *slide.cell_tumor_ids[i];

  std::vector<double> dists;
  std::vector<std::int32_t> tumors;
  std::int64_t skipped = 0;
  for (const CellRecord* src : by_id) {
    if (src->cls != spec.source) continue;
    auto it = tumor_by_id.find(src->id);
    if (it == tumor_by_id.end()) continue;
    const std::int32_t tumor = it->second;

    std::vector<Point> targets;
    for (const CellRecord* t : by_id) {
      auto jt = tumor_by_id.find(t->id);
      if (t->cls == spec.target && jt != tumor_by_id.end() && jt->second == tumor) targets.push_back(t->centroid);
    }
    if (targets.empty()) {
      ++skipped;
      continue;
    }

    const BBox& box = slide.tumor_instances[static_cast<std::size_t>(tumor - 1)].bbox;
    const double l_t = box.length(), w_t = box.width();
    double found = -1.0;
    for (std::int64_t step = 1; found < 0.0; ++step) {
      const double hx = 0.5 * (spec.f * static_cast<double>(step) * l_t);
      const double hy = 0.5 * (spec.f * static_cast<double>(step) * w_t);
      std::vector<double> kept;
      for (const Point& t : targets) {
        if (std::abs(t.x - src->centroid.x) <= hx && std::abs(t.y - src->centroid.y) <= hy) {
          const double dx = src->centroid.x - t.x, dy = src->centroid.y - t.y;
          kept.push_back(std::sqrt(dx * dx + dy * dy));
        }
      }
      if (!kept.empty()) found = *std::min_element(kept.begin(), kept.end());
    }
    dists.push_back(found);
    tumors.push_back(tumor);
  }

  if (dists.empty()) throw DistanceUndefined("no source cell with a target in its tumor");
  DistanceResult r;
  r.n_source_used = static_cast<std::int64_t>(dists.size());
  r.n_source_skipped = skipped;
  double total = 0.0;
  for (double d : dists) total += d;
  r.mean_distance = total / static_cast<double>(dists.size());
  std::map<std::int32_t, std::pair<double, std::int64_t>> per;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    per[tumors[i]].first += dists[i];
    ++per[tumors[i]].second;
  }
  for (const auto& [label, acc] : per) r.per_tumor_means[label] = acc.first / static_cast<double>(acc.second);
  return r;
}

}  // namespace hm
