#pragma once

// Reference implementations for the segmentation metrics, written from the
// definitions with no shared code paths: pixel-count IoU, exhaustive
// assignment, and random instance maps built from painted rectangles.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "hm/rng.hpp"
#include "hm/seg_metrics.hpp"

namespace hm::test {

struct Rect {
  std::int64_t x0, y0, x1, y1;  // half-open
  CellClass cls;
};

// Later rectangles overwrite earlier ones; surviving ids are renumbered 1..K.
inline InstanceLabelMap paint(std::int64_t w, std::int64_t h, const std::vector<Rect>& rects) {
  InstanceLabelMap m;
  m.width = w;
  m.height = h;
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(w * h), 0);
  for (std::size_t k = 0; k < rects.size(); ++k)
    for (std::int64_t y = std::max<std::int64_t>(rects[k].y0, 0); y < std::min(rects[k].y1, h); ++y)
      for (std::int64_t x = std::max<std::int64_t>(rects[k].x0, 0); x < std::min(rects[k].x1, w); ++x)
        raw[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint32_t>(k + 1);
  std::set<std::uint32_t> alive(raw.begin(), raw.end());
  alive.erase(0);
  std::map<std::uint32_t, std::uint32_t> dense;
  for (std::uint32_t r : alive) {
    const auto id = static_cast<std::uint32_t>(dense.size() + 1);
    dense[r] = id;
    m.classes[id] = rects[r - 1].cls;
  }
  m.ids.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) m.ids[i] = raw[i] ? dense[raw[i]] : 0;
  return m;
}

// Ground truth of up to `max_inst` rectangles and a prediction that jitters,
// drops, relabels and adds instances.
inline std::pair<InstanceLabelMap, InstanceLabelMap> random_instance_pair(Engine& e, std::size_t max_inst = 10) {
  const auto w = 12 + static_cast<std::int64_t>(uniform_index(e, 30));
  const auto h = 12 + static_cast<std::int64_t>(uniform_index(e, 30));
  auto cls = [&] { return kAllClasses[uniform_index(e, 3)]; };  // few classes so they collide
  std::vector<Rect> g, p;
  const auto n = 1 + uniform_index(e, max_inst);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x0 = static_cast<std::int64_t>(uniform_index(e, static_cast<std::uint64_t>(w)));
    const auto y0 = static_cast<std::int64_t>(uniform_index(e, static_cast<std::uint64_t>(h)));
    g.push_back({x0, y0, x0 + 2 + static_cast<std::int64_t>(uniform_index(e, 8)),
                 y0 + 2 + static_cast<std::int64_t>(uniform_index(e, 8)), cls()});
  }
  auto jitter = [&] { return static_cast<std::int64_t>(uniform_index(e, 5)) - 2; };
  for (const Rect& r : g) {
    if (uniform01(e) < 0.2 || p.size() >= max_inst) continue;
    Rect q{r.x0 + jitter(), r.y0 + jitter(), r.x1 + jitter(), r.y1 + jitter(), uniform01(e) < 0.7 ? r.cls : cls()};
    if (q.x1 <= q.x0) q.x1 = q.x0 + 1;
    if (q.y1 <= q.y0) q.y1 = q.y0 + 1;
    p.push_back(q);
  }
  while (p.size() < max_inst && uniform01(e) < 0.4) {
    const auto x0 = static_cast<std::int64_t>(uniform_index(e, static_cast<std::uint64_t>(w)));
    const auto y0 = static_cast<std::int64_t>(uniform_index(e, static_cast<std::uint64_t>(h)));
    p.push_back({x0, y0, x0 + 3, y0 + 3, cls()});
  }
  return {paint(w, h, p), paint(w, h, g)};
}

// IoU of every overlapping (pred id, gt id) pair by direct pixel counting.
inline std::map<std::pair<std::uint32_t, std::uint32_t>, double> pairwise_iou(const InstanceLabelMap& pred,
                                                                              const InstanceLabelMap& gt) {
  std::map<std::uint32_t, std::int64_t> area_p, area_g;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> inter;
  for (std::size_t i = 0; i < pred.ids.size(); ++i) {
    if (pred.ids[i]) ++area_p[pred.ids[i]];
    if (gt.ids[i]) ++area_g[gt.ids[i]];
    if (pred.ids[i] && gt.ids[i]) ++inter[{pred.ids[i], gt.ids[i]}];
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> out;
  for (const auto& [k, n] : inter)
    out[k] = static_cast<double>(n) / static_cast<double>(area_p[k.first] + area_g[k.second] - n);
  return out;
}

// Exhaustive maximum assignment: most pairs above the threshold, then the
// largest IoU sum. Returns (pred id, gt id) pairs.
inline std::set<std::pair<std::uint32_t, std::uint32_t>> optimal_matching(const InstanceLabelMap& pred,
                                                                         const InstanceLabelMap& gt, double thr) {
  const auto iou = pairwise_iou(pred, gt);
  std::vector<std::uint32_t> gts, preds;
  for (const auto& [id, c] : gt.classes) gts.push_back(id);
  for (const auto& [id, c] : pred.classes) preds.push_back(id);
  struct Best {
    int count = -1;
    double sum = 0;
    std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
  } best;
  std::vector<bool> used(preds.size(), false);
  std::set<std::pair<std::uint32_t, std::uint32_t>> cur;
  auto rec = [&](auto&& self, std::size_t gi, int count, double sum) -> void {
    if (gi == gts.size()) {
      if (count > best.count || (count == best.count && sum > best.sum)) best = {count, sum, cur};
      return;
    }
    self(self, gi + 1, count, sum);
    for (std::size_t pi = 0; pi < preds.size(); ++pi) {
      if (used[pi]) continue;
      const auto it = iou.find({preds[pi], gts[gi]});
      if (it == iou.end() || !(it->second > thr)) continue;
      used[pi] = true;
      cur.insert({preds[pi], gts[gi]});
      self(self, gi + 1, count + 1, sum + it->second);
      cur.erase({preds[pi], gts[gi]});
      used[pi] = false;
    }
  };
  rec(rec, 0, 0, 0.0);
  return best.pairs;
}

struct SemanticOracle {
  double iou_fg, iou_bg, acc_fg, acc_bg;
};

inline SemanticOracle semantic_oracle(const BinaryMask& pred, const BinaryMask& gt) {
  double both = 0, neither = 0, pred_fg = 0, gt_fg = 0, total = 0;
  for (std::int64_t y = 0; y < gt.height; ++y)
    for (std::int64_t x = 0; x < gt.width; ++x) {
      const bool p = pred.at(x, y), g = gt.at(x, y);
      total += 1;
      pred_fg += p;
      gt_fg += g;
      both += p && g;
      neither += !p && !g;
    }
  auto ratio = [](double a, double b) { return b == 0 ? 1.0 : a / b; };
  const double pred_bg = total - pred_fg, gt_bg = total - gt_fg;
  return {ratio(both, pred_fg + gt_fg - both), ratio(neither, pred_bg + gt_bg - neither), ratio(both, gt_fg),
          ratio(neither, gt_bg)};
}

}  // namespace hm::test
