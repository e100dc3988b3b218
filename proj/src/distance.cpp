#include "hm/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "hm/errors.hpp"
#include "hm/parallel.hpp"
#include "hm/rng.hpp"

namespace hm {

namespace {

inline double half_extent(double f, std::int64_t step, double side) {
  return 0.5 * (f * static_cast<double>(step) * side);
}

inline bool in_rectangle(const Point& s, const Point& t, double hx, double hy) {
  return std::abs(t.x - s.x) <= hx && std::abs(t.y - s.y) <= hy;
}

inline double euclid(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

void check_spec(const DistanceSpec& spec) {
  if (spec.source == spec.target) throw ParameterError("distance source and target classes must differ");
  if (!(spec.f > 0.0) || !std::isfinite(spec.f)) throw ParameterError("growth parameter f must be > 0");
}

// Target centroids of one tumor bucketed on a uniform grid. Buckets are at
// least as large as the step-1 half extent, capped at 256 per axis.
struct TargetGrid {
  double l_t = 0, w_t = 0;
  double x0 = 0, y0 = 0;
  double bw = 1, bh = 1;
  std::int64_t gx = 1, gy = 1;
  std::vector<std::uint32_t> start;  // CSR offsets, size gx*gy + 1
  std::vector<Point> pts;

  std::int64_t bucket_x(double x) const {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x - x0) / bw)), 0, gx - 1);
  }
  std::int64_t bucket_y(double y) const {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((y - y0) / bh)), 0, gy - 1);
  }
};

TargetGrid build_grid(const std::vector<Point>& targets, const BBox& bbox, double f) {
  constexpr std::int64_t kMaxBuckets = 256;
  TargetGrid g;
  g.l_t = bbox.length();
  g.w_t = bbox.width();
  double x1 = targets.front().x, y1 = targets.front().y;
  g.x0 = x1;
  g.y0 = y1;
  for (const Point& p : targets) {
    g.x0 = std::min(g.x0, p.x);
    g.y0 = std::min(g.y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  g.bw = std::max(half_extent(f, 1, g.l_t), (x1 - g.x0) / static_cast<double>(kMaxBuckets));
  g.bh = std::max(half_extent(f, 1, g.w_t), (y1 - g.y0) / static_cast<double>(kMaxBuckets));
  g.gx = std::min(kMaxBuckets, static_cast<std::int64_t>(std::floor((x1 - g.x0) / g.bw)) + 1);
  g.gy = std::min(kMaxBuckets, static_cast<std::int64_t>(std::floor((y1 - g.y0) / g.bh)) + 1);

  std::vector<std::uint32_t> bucket(targets.size());
  g.start.assign(static_cast<std::size_t>(g.gx * g.gy) + 1, 0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    bucket[i] = static_cast<std::uint32_t>(g.bucket_y(targets[i].y) * g.gx + g.bucket_x(targets[i].x));
    ++g.start[bucket[i] + 1];
  }
  std::partial_sum(g.start.begin(), g.start.end(), g.start.begin());
  g.pts.resize(targets.size());
  std::vector<std::uint32_t> fill(g.start.begin(), g.start.end() - 1);
  for (std::size_t i = 0; i < targets.size(); ++i) g.pts[fill[bucket[i]]++] = targets[i];
  return g;
}

// Expanding-rectangle search over the grid. Equivalent to the naive loop:
// a target inside the step-k rectangle lies within floor(hx/bw) + 1 buckets of
// the source bucket, so scanning one extra ring per axis never misses it.
double grid_search(const TargetGrid& g, const Point& s, double f, std::vector<Point>& pending) {
  pending.clear();
  const std::int64_t sx = g.bucket_x(s.x);
  const std::int64_t sy = g.bucket_y(s.y);
  // Scanned box, inclusive; empty initially.
  std::int64_t ax0 = sx + 1, ax1 = sx, ay0 = sy + 1, ay1 = sy;
  bool covered = false;

  for (std::int64_t step = 1;; ++step) {
    const double hx = half_extent(f, step, g.l_t);
    const double hy = half_extent(f, step, g.w_t);

    if (!covered) {
      const auto rx = static_cast<std::int64_t>(std::min(std::floor(hx / g.bw) + 2.0, static_cast<double>(g.gx)));
      const auto ry = static_cast<std::int64_t>(std::min(std::floor(hy / g.bh) + 2.0, static_cast<double>(g.gy)));
      const std::int64_t nx0 = std::max<std::int64_t>(0, sx - rx), nx1 = std::min(g.gx - 1, sx + rx);
      const std::int64_t ny0 = std::max<std::int64_t>(0, sy - ry), ny1 = std::min(g.gy - 1, sy + ry);
      for (std::int64_t by = ny0; by <= ny1; ++by) {
        const bool row_seen = by >= ay0 && by <= ay1;
        for (std::int64_t bx = nx0; bx <= nx1; ++bx) {
          if (row_seen && bx >= ax0 && bx <= ax1) {
            bx = ax1;  // skip the already scanned span
            continue;
          }
          const std::size_t b = static_cast<std::size_t>(by * g.gx + bx);
          pending.insert(pending.end(), g.pts.begin() + g.start[b], g.pts.begin() + g.start[b + 1]);
        }
      }
      ax0 = nx0;
      ax1 = nx1;
      ay0 = ny0;
      ay1 = ny1;
      covered = nx0 == 0 && ny0 == 0 && nx1 == g.gx - 1 && ny1 == g.gy - 1;
    }

    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const Point& t : pending) {
      if (in_rectangle(s, t, hx, hy)) {
        found = true;
        best = std::min(best, euclid(s, t));
      }
    }
    if (found) return best;

    if (covered) {
      // Every target is pending; jump to the first step admitting any of them.
      std::int64_t next = std::numeric_limits<std::int64_t>::max();
      const double h1x = half_extent(f, 1, g.l_t), h1y = half_extent(f, 1, g.w_t);
      for (const Point& t : pending) {
        const double need = std::max(std::abs(t.x - s.x) / h1x, std::abs(t.y - s.y) / h1y);
        auto k = std::max<std::int64_t>(step + 1, static_cast<std::int64_t>(std::ceil(need)) - 1);
        while (k > step + 1 && in_rectangle(s, t, half_extent(f, k - 1, g.l_t), half_extent(f, k - 1, g.w_t))) --k;
        while (!in_rectangle(s, t, half_extent(f, k, g.l_t), half_extent(f, k, g.w_t))) ++k;
        next = std::min(next, k);
      }
      step = next - 1;
    }
  }
}

struct Eligible {
  // Source cell indices in ascending id order.
  std::vector<std::size_t> sources;
  std::vector<std::int32_t> source_tumor;
  // Per tumor label (index label - 1) target centroids.
  std::vector<std::vector<Point>> targets;
  std::int64_t skipped = 0;
};

Eligible collect(const AlignedSlide& slide, const DistanceSpec& spec) {
  Eligible e;
  e.targets.resize(slide.tumor_instances.size());
  std::vector<std::size_t> order(slide.cells.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return slide.cells[a].id < slide.cells[b].id; });

  std::vector<std::pair<std::size_t, std::int32_t>> raw_sources;
  for (std::size_t i : order) {
    const auto& tumor = slide.cell_tumor_ids[i];
    if (!tumor) continue;
    const CellClass c = slide.cells[i].cls;
    if (c == spec.target) e.targets[static_cast<std::size_t>(*tumor - 1)].push_back(slide.cells[i].centroid);
    if (c == spec.source) raw_sources.emplace_back(i, *tumor);
  }
  for (const auto& [i, tumor] : raw_sources) {
    if (e.targets[static_cast<std::size_t>(tumor - 1)].empty()) {
      ++e.skipped;
    } else {
      e.sources.push_back(i);
      e.source_tumor.push_back(tumor);
    }
  }
  return e;
}

DistanceResult reduce(const std::vector<double>& dists, const std::vector<std::int32_t>& tumors, std::int64_t skipped) {
  if (dists.empty()) throw DistanceUndefined("no source cell with a target in its tumor");
  DistanceResult r;
  r.n_source_used = static_cast<std::int64_t>(dists.size());
  r.n_source_skipped = skipped;
  double total = 0.0;
  std::map<std::int32_t, std::pair<double, std::int64_t>> per;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    total += dists[i];
    auto& acc = per[tumors[i]];
    acc.first += dists[i];
    ++acc.second;
  }
  r.mean_distance = total / static_cast<double>(dists.size());
  for (const auto& [label, acc] : per) r.per_tumor_means[label] = acc.first / static_cast<double>(acc.second);
  return r;
}

}  // namespace

double nearest_in_rectangle(Point source, std::span<const Point> targets, double l_t, double w_t, double f) {
  if (targets.empty()) throw NoTargetError("no target cells to search");
  if (!(l_t > 0.0) || !(w_t > 0.0) || !(f > 0.0)) throw ParameterError("l_t, w_t and f must be > 0");
  for (std::int64_t step = 1;; ++step) {
    const double hx = half_extent(f, step, l_t);
    const double hy = half_extent(f, step, w_t);
    double best = std::numeric_limits<double>::infinity();
    for (const Point& t : targets)
      if (in_rectangle(source, t, hx, hy)) best = std::min(best, euclid(source, t));
    if (best != std::numeric_limits<double>::infinity()) return best;
  }
}

DistanceResult mean_closest_distance(const AlignedSlide& slide, const DistanceSpec& spec, int workers) {
  check_spec(spec);
  const Eligible e = collect(slide, spec);

  std::vector<TargetGrid> grids(e.targets.size());
  for (std::size_t t = 0; t < e.targets.size(); ++t)
    if (!e.targets[t].empty()) grids[t] = build_grid(e.targets[t], slide.tumor_instances[t].bbox, spec.f);

  std::vector<double> dists(e.sources.size());
  const auto n = static_cast<std::int64_t>(e.sources.size());
#pragma omp parallel num_threads(resolve_workers(workers))
  {
    std::vector<Point> pending;
#pragma omp for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const TargetGrid& g = grids[static_cast<std::size_t>(e.source_tumor[k] - 1)];
      dists[k] = grid_search(g, slide.cells[e.sources[k]].centroid, spec.f, pending);
    }
  }
  return reduce(dists, e.source_tumor, e.skipped);
}

DistanceResult true_nn_mean_distance(const AlignedSlide& slide, const DistanceSpec& spec, int workers) {
  check_spec(spec);
  const Eligible e = collect(slide, spec);
  std::vector<double> dists(e.sources.size());
  const auto n = static_cast<std::int64_t>(e.sources.size());
#pragma omp parallel for num_threads(resolve_workers(workers)) schedule(dynamic, 64)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Point& s = slide.cells[e.sources[k]].centroid;
    double best = std::numeric_limits<double>::infinity();
    for (const Point& t : e.targets[static_cast<std::size_t>(e.source_tumor[k] - 1)]) best = std::min(best, euclid(s, t));
    dists[k] = best;
  }
  return reduce(dists, e.source_tumor, e.skipped);
}

double estimate_overestimation_probability(int n_cells, std::int64_t trials, std::uint64_t seed, int workers) {
  if (trials < 100000) throw ParameterError("overestimation estimate needs at least 1e5 trials");
  if (n_cells < 1) throw ParameterError("n_cells must be >= 1");
  constexpr std::int64_t kChunk = 1 << 16;
  const std::int64_t chunks = (trials + kChunk - 1) / kChunk;
  const double radius = std::sqrt(2.0);  // square half side r1 = 1
  std::int64_t conditioned = 0, errors = 0;

#pragma omp parallel for num_threads(resolve_workers(workers)) schedule(static) reduction(+ : conditioned, errors)
  for (std::int64_t c = 0; c < chunks; ++c) {
    Engine eng = make_engine(seed, static_cast<std::uint64_t>(c));
    const std::int64_t end = std::min(trials, (c + 1) * kChunk);
    for (std::int64_t t = c * kChunk; t < end; ++t) {
      double nearest_in = std::numeric_limits<double>::infinity();
      double nearest_out = std::numeric_limits<double>::infinity();
      for (int p = 0; p < n_cells; ++p) {
        const double r = radius * std::sqrt(uniform01(eng));
        const double theta = 2.0 * M_PI * uniform01(eng);
        const double x = r * std::cos(theta), y = r * std::sin(theta);
        if (std::abs(x) <= 1.0 && std::abs(y) <= 1.0)
          nearest_in = std::min(nearest_in, r);
        else
          nearest_out = std::min(nearest_out, r);
      }
      if (nearest_in == std::numeric_limits<double>::infinity()) continue;
      ++conditioned;
      if (nearest_out < nearest_in) ++errors;
    }
  }
  if (conditioned == 0) throw ParameterError("no trial placed a point inside the search square");
  return static_cast<double>(errors) / static_cast<double>(conditioned);
}

}  // namespace hm
