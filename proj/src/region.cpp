#include "hm/region.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hm/errors.hpp"
#include "hm/parallel.hpp"

namespace hm {

namespace {

struct DisjointSet {
  std::vector<std::int32_t> parent;

  std::int32_t make() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
  }
};

}  // namespace

Labeling label_tumor_instances(const TumorMask& mask, const SlideMeta& meta) {
  const std::int64_t w = mask.width, h = mask.height;
  std::vector<std::int32_t> provisional(static_cast<std::size_t>(w * h), -1);
  DisjointSet sets;

  // First pass: provisional labels from the already-visited 8-neighbourhood.
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      std::int32_t label = -1;
      const std::int64_t nbrs[4][2] = {{x - 1, y}, {x - 1, y - 1}, {x, y - 1}, {x + 1, y - 1}};
      for (const auto& n : nbrs) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= w) continue;
        const std::int32_t l = provisional[static_cast<std::size_t>(n[1] * w + n[0])];
        if (l < 0) continue;
        if (label < 0)
          label = l;
        else
          sets.unite(label, l);
      }
      provisional[static_cast<std::size_t>(y * w + x)] = label < 0 ? sets.make() : label;
    }
  }

  // Second pass: dense labels in raster order of first appearance.
  Labeling out;
  out.labels.assign(provisional.size(), 0);
  std::vector<std::int32_t> dense(sets.parent.size(), 0);
  const double ds = static_cast<double>(meta.mask_downsample);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y * w + x);
      if (provisional[i] < 0) continue;
      const std::int32_t root = sets.find(provisional[i]);
      if (dense[root] == 0) {
        dense[root] = static_cast<std::int32_t>(out.instances.size()) + 1;
        TumorInstance inst;
        inst.label = dense[root];
        inst.bbox = {static_cast<double>(x), static_cast<double>(y), static_cast<double>(x), static_cast<double>(y)};
        out.instances.push_back(inst);
      }
      const std::int32_t label = dense[root];
      out.labels[i] = label;
      TumorInstance& inst = out.instances[static_cast<std::size_t>(label - 1)];
      inst.bbox.x_min = std::min(inst.bbox.x_min, static_cast<double>(x));
      inst.bbox.x_max = std::max(inst.bbox.x_max, static_cast<double>(x));
      inst.bbox.y_max = std::max(inst.bbox.y_max, static_cast<double>(y));
      ++inst.pixel_count;
    }
  }
  // Pixel cover [min, max + 1) in mask units, scaled to full resolution.
  for (TumorInstance& inst : out.instances) {
    inst.bbox.x_min *= ds;
    inst.bbox.y_min *= ds;
    inst.bbox.x_max = (inst.bbox.x_max + 1.0) * ds;
    inst.bbox.y_max = (inst.bbox.y_max + 1.0) * ds;
  }
  return out;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line.
// `f` holds squared column distances or kNoFeature; result is written to `d`.
void envelope_1d(const std::int64_t* f, std::int64_t n, std::int64_t* d, std::vector<std::int64_t>& v,
                 std::vector<double>& z) {
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == kNoFeature) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -INFINITY;
      z[1] = INFINITY;
      continue;
    }
    auto intersect = [&](std::int64_t p) {
      return (static_cast<double>(f[q] + q * q) - static_cast<double>(f[p] + p * p)) / (2.0 * static_cast<double>(q - p));
    };
    double s = intersect(v[static_cast<std::size_t>(k)]);
    // z[0] is -inf, so this stops at k == 0.
    while (s <= z[static_cast<std::size_t>(k)]) {
      --k;
      s = intersect(v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = INFINITY;
  }
  if (k < 0) {
    std::fill_n(d, n, kNoFeature);
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < static_cast<double>(q)) ++j;
    const std::int64_t p = v[static_cast<std::size_t>(j)];
    d[q] = (q - p) * (q - p) + f[p];
  }
}

}  // namespace

std::vector<std::int64_t> squared_distance_transform(const BinaryMask& mask, int workers) {
  const std::int64_t w = mask.width, h = mask.height;
  std::vector<std::int64_t> col(static_cast<std::size_t>(w * h), kNoFeature);
  const int nthreads = resolve_workers(workers);

  // Columns: exact 1-D distance by two sweeps.
#pragma omp parallel for num_threads(nthreads) schedule(static)
  for (std::int64_t x = 0; x < w; ++x) {
    std::int64_t last = -1;
    for (std::int64_t y = 0; y < h; ++y) {
      if (mask.at(x, y)) last = y;
      if (last >= 0) col[static_cast<std::size_t>(y * w + x)] = (y - last) * (y - last);
    }
    last = -1;
    for (std::int64_t y = h - 1; y >= 0; --y) {
      if (mask.at(x, y)) last = y;
      if (last >= 0) {
        auto& c = col[static_cast<std::size_t>(y * w + x)];
        c = std::min(c, (last - y) * (last - y));
      }
    }
  }

  std::vector<std::int64_t> out(col.size(), kNoFeature);
#pragma omp parallel num_threads(nthreads)
  {
    std::vector<std::int64_t> v(static_cast<std::size_t>(w));
    std::vector<double> z(static_cast<std::size_t>(w) + 1);
#pragma omp for schedule(static)
    for (std::int64_t y = 0; y < h; ++y)
      envelope_1d(col.data() + y * w, w, out.data() + y * w, v, z);
  }
  return out;
}

VicinityMask vicinity(const TumorMask& mask, const SlideMeta& meta, double width_um, int workers) {
  if (!(width_um > 0.0)) throw ParameterError("vicinity width must be > 0");
  const double radius = width_um / (meta.microns_per_pixel * static_cast<double>(meta.mask_downsample));
  const double radius_sq = radius * radius;
  const auto d2 = squared_distance_transform(mask, workers);
  VicinityMask out(mask.width, mask.height);
  for (std::size_t i = 0; i < d2.size(); ++i)
    out.bits[i] = d2[i] != kNoFeature && d2[i] > 0 && static_cast<double>(d2[i]) <= radius_sq ? 1 : 0;
  return out;
}

Tagging tag_cells(const std::vector<CellRecord>& cells, const SlideMeta& meta, const Labeling& labeling,
                  const VicinityMask& vic, int workers) {
  Tagging t;
  t.tags.assign(cells.size(), RegionTag::Outside);
  t.tumor_ids.assign(cells.size(), std::nullopt);
  const double ds = static_cast<double>(meta.mask_downsample);
  const std::int64_t n = static_cast<std::int64_t>(cells.size());
  std::int64_t bad = n;  // lowest index of an out-of-bounds cell

#pragma omp parallel for num_threads(resolve_workers(workers)) schedule(static) reduction(min : bad)
  for (std::int64_t i = 0; i < n; ++i) {
    const Point& c = cells[static_cast<std::size_t>(i)].centroid;
    if (!(c.x >= 0.0 && c.y >= 0.0 && c.x < static_cast<double>(meta.width_px) &&
          c.y < static_cast<double>(meta.height_px))) {
      bad = std::min(bad, i);
      continue;
    }
    const auto mx = static_cast<std::int64_t>(std::floor(c.x / ds));
    const auto my = static_cast<std::int64_t>(std::floor(c.y / ds));
    if (mx >= vic.width || my >= vic.height) {
      bad = std::min(bad, i);
      continue;
    }
    const std::size_t px = static_cast<std::size_t>(my * vic.width + mx);
    if (const std::int32_t label = labeling.labels[px]; label > 0) {
      t.tags[static_cast<std::size_t>(i)] = RegionTag::Tumor;
      t.tumor_ids[static_cast<std::size_t>(i)] = label;
    } else if (vic.bits[px]) {
      t.tags[static_cast<std::size_t>(i)] = RegionTag::Vicinity;
    }
  }
  if (bad < n)
    throw TaggingError("cell centroid outside slide bounds (id=" + std::to_string(cells[static_cast<std::size_t>(bad)].id) + ")");
  return t;
}

std::vector<CellRecord> refine_classes(std::vector<CellRecord> cells, const std::vector<RegionTag>& tags) {
  if (tags.size() != cells.size()) throw ParameterError("tag count does not match cell count");
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].cls == CellClass::Tumor && tags[i] != RegionTag::Tumor) cells[i].cls = CellClass::Epithelial;
  return cells;
}

AlignedSlide align_slide(const SlideMeta& meta, std::vector<CellRecord> cells, TumorMask mask, double vicinity_um,
                         int workers) {
  meta.validate();
  if (mask.width != meta.mask_width() || mask.height != meta.mask_height())
    throw ParameterError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                         " but metadata implies " + std::to_string(meta.mask_width()) + "x" +
                         std::to_string(meta.mask_height()));
  AlignedSlide s;
  s.meta = meta;
  Labeling lab = label_tumor_instances(mask, meta);
  s.vicinity_mask = vicinity(mask, meta, vicinity_um, workers);
  Tagging t = tag_cells(cells, meta, lab, s.vicinity_mask, workers);
  s.cells = refine_classes(std::move(cells), t.tags);
  s.tumor_mask = std::move(mask);
  s.label_raster = std::move(lab.labels);
  s.tumor_instances = std::move(lab.instances);
  s.cell_region_tags = std::move(t.tags);
  s.cell_tumor_ids = std::move(t.tumor_ids);
  return s;
}

}  // namespace hm
