#include "hm/seg_metrics.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

#include "hm/errors.hpp"
#include "hm/io.hpp"
#include "hm/parallel.hpp"
#include "json.hpp"

namespace hm {

void InstanceLabelMap::validate(bool require_dense) const {
  if (width < 0 || height < 0 || ids.size() != static_cast<std::size_t>(width * height))
    throw MetricError("instance map raster size does not match its dimensions");
  std::uint32_t max_id = 0;
  std::vector<bool> seen;
  for (std::uint32_t id : ids) {
    if (id == 0) continue;
    if (!classes.contains(id)) throw MetricError("instance " + std::to_string(id) + " has no class");
    max_id = std::max(max_id, id);
    if (require_dense) {
      if (seen.size() <= id) seen.resize(static_cast<std::size_t>(id) + 1, false);
      seen[id] = true;
    }
  }
  if (require_dense)
    for (std::uint32_t id = 1; id <= max_id; ++id)
      if (!seen[id]) throw MetricError("instance ids are not dense: " + std::to_string(id) + " is missing");
}

InstanceLabelMap InstanceLabelMap::restricted_to(CellClass c) const {
  InstanceLabelMap out;
  out.width = width;
  out.height = height;
  out.ids.resize(ids.size());
  for (const auto& [id, cls] : classes)
    if (cls == c) out.classes.emplace(id, cls);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = classes.find(ids[i]);
    out.ids[i] = (ids[i] != 0 && it != classes.end() && it->second == c) ? ids[i] : 0;
  }
  return out;
}

InstanceLabelMap parse_instance_map(std::string_view pgm, std::string_view class_json) {
  const GrayImage img = parse_pgm(pgm);
  InstanceLabelMap m;
  m.width = img.width;
  m.height = img.height;
  m.ids = img.pixels;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(class_json);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("instance class map: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("instance class map must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    std::uint32_t id = 0;
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(key, &used);
      if (used != key.size() || v == 0 || v > 0xffffffffUL) throw std::out_of_range(key);
      id = static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
      throw ParseError("instance class map key '" + key + "' is not a positive id");
    }
    std::optional<CellClass> cls;
    if (value.is_string()) {
      cls = class_from_name(value.get<std::string>());
    } else if (value.is_number_integer()) {
      const auto code = value.get<std::int64_t>();
      for (CellClass c : kAllClasses)
        if (class_code(c) == code) cls = c;
    }
    if (!cls) throw ParseError("instance " + key + " has an unknown class");
    m.classes.emplace(id, *cls);
  }
  m.validate(true);
  return m;
}

std::string write_instance_classes(const InstanceLabelMap& map) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [id, cls] : map.classes) doc[std::to_string(id)] = std::string(class_name(cls));
  return doc.dump() + "\n";
}

InstanceMatch match_instances(const InstanceLabelMap& pred, const InstanceLabelMap& gt, double iou_threshold) {
  if (pred.width != gt.width || pred.height != gt.height || pred.ids.size() != gt.ids.size())
    throw MetricError("prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                      " but ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
  std::map<std::uint32_t, std::int64_t> pred_area, gt_area;
  std::unordered_map<std::uint64_t, std::int64_t> inter;
  for (std::size_t i = 0; i < pred.ids.size(); ++i) {
    const std::uint32_t p = pred.ids[i], g = gt.ids[i];
    if (p) ++pred_area[p];
    if (g) ++gt_area[g];
    if (p && g) ++inter[(static_cast<std::uint64_t>(g) << 32) | p];
  }

  struct Candidate {
    std::uint32_t g, p;
    double iou;
  };
  std::vector<Candidate> cand;
  for (const auto& [key, n] : inter) {
    const auto g = static_cast<std::uint32_t>(key >> 32), p = static_cast<std::uint32_t>(key & 0xffffffffu);
    const double iou = static_cast<double>(n) / static_cast<double>(pred_area[p] + gt_area[g] - n);
    if (iou > iou_threshold) cand.push_back({g, p, iou});
  }
  std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.g != b.g) return a.g < b.g;
    return a.p < b.p;
  });

  auto class_of = [](const InstanceLabelMap& m, std::uint32_t id) {
    const auto it = m.classes.find(id);
    if (it == m.classes.end()) throw MetricError("instance " + std::to_string(id) + " has no class");
    return it->second;
  };

  InstanceMatch out;
  std::map<std::uint32_t, bool> used_p, used_g;
  for (const Candidate& c : cand) {
    if (used_g[c.g] || used_p[c.p]) continue;
    used_g[c.g] = used_p[c.p] = true;
    out.tp.push_back({c.p, c.g, c.iou, class_of(pred, c.p), class_of(gt, c.g)});
  }
  std::sort(out.tp.begin(), out.tp.end(), [](const MatchedPair& a, const MatchedPair& b) { return a.gt_id < b.gt_id; });
  for (const auto& [p, area] : pred_area)
    if (!used_p[p]) out.fp.push_back(p);
  for (const auto& [g, area] : gt_area)
    if (!used_g[g]) out.fn.push_back(g);
  return out;
}

PqCounts& PqCounts::operator+=(const PqCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  iou_sum += o.iou_sum;
  return *this;
}

PqCounts pq_counts(const InstanceMatch& m) {
  PqCounts c;
  c.tp = static_cast<std::int64_t>(m.tp.size());
  c.fp = static_cast<std::int64_t>(m.fp.size());
  c.fn = static_cast<std::int64_t>(m.fn.size());
  for (const auto& p : m.tp) c.iou_sum += p.iou;
  return c;
}

std::optional<PqScore> pq_score(const PqCounts& c) {
  if (c.tp + c.fp + c.fn == 0) return std::nullopt;
  const double tp = static_cast<double>(c.tp);
  const double denom = tp + 0.5 * static_cast<double>(c.fp) + 0.5 * static_cast<double>(c.fn);
  PqScore s;
  s.pq = c.iou_sum / denom;
  s.sq = c.tp > 0 ? c.iou_sum / tp : 0.0;
  s.rq = tp / denom;
  return s;
}

std::optional<double> mean_pq(const std::array<std::optional<PqScore>, kNumClasses>& per_class) {
  double sum = 0;
  int n = 0;
  for (const auto& s : per_class)
    if (s) {
      sum += s->pq;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

PanopticResult panoptic_quality(const InstanceLabelMap& pred, const InstanceLabelMap& gt, double iou_threshold) {
  PanopticResult r;
  for (CellClass c : kAllClasses) {
    const std::size_t k = index_of(c);
    r.counts[k] = pq_counts(match_instances(pred.restricted_to(c), gt.restricted_to(c), iou_threshold));
    r.per_class[k] = pq_score(r.counts[k]);
  }
  r.mpq = mean_pq(r.per_class);
  return r;
}

F1Result classification_f1(const ConfusionMatrix& confusion) {
  F1Result r;
  r.confusion = confusion;
  double sum = 0;
  int n = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::int64_t tp = confusion[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fn += confusion[c][o];
      fp += confusion[o][c];
    }
    if (tp + fp + fn == 0) continue;
    r.per_class[c] = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    sum += *r.per_class[c];
    ++n;
  }
  if (n > 0) r.macro_f1 = sum / n;
  return r;
}

F1Result classification_f1(const std::vector<MatchedPair>& pairs) {
  ConfusionMatrix m{};
  for (const auto& p : pairs) ++m[index_of(p.gt_cls)][index_of(p.pred_cls)];
  return classification_f1(m);
}

PixelCounts& PixelCounts::operator+=(const PixelCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

PixelCounts pixel_counts(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw MetricError("semantic masks differ in size: " + std::to_string(pred.width) + "x" +
                      std::to_string(pred.height) + " vs " + std::to_string(gt.width) + "x" +
                      std::to_string(gt.height));
  PixelCounts c;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    if (p && g)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

SemanticScores semantic_scores(const PixelCounts& c) {
  auto ratio = [](std::int64_t num, std::int64_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  SemanticScores s;
  s.iou_tissue = ratio(c.tp, c.tp + c.fp + c.fn);
  const double iou_bg = ratio(c.tn, c.tn + c.fp + c.fn);
  s.miou = 0.5 * (s.iou_tissue + iou_bg);
  s.acc_tissue = ratio(c.tp, c.tp + c.fn);
  const double acc_bg = ratio(c.tn, c.tn + c.fp);
  s.macc = 0.5 * (s.acc_tissue + acc_bg);
  return s;
}

SemanticScores semantic_iou(const BinaryMask& pred, const BinaryMask& gt) {
  return semantic_scores(pixel_counts(pred, gt));
}

namespace {

struct ImageResult {
  PanopticResult pq;
  InstanceMatch all;
};

template <typename F>
void for_each_parallel(std::size_t n, int workers, F&& body) {
  std::string failure;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for num_threads(resolve_workers(workers)) schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw MetricError(failure);
}

}  // namespace

InstanceReport evaluate_instances(const std::vector<InstancePair>& pairs, Aggregation aggregation, int workers) {
  std::vector<ImageResult> res(pairs.size());
  for_each_parallel(pairs.size(), workers, [&](std::size_t i) {
    try {
      res[i].pq = panoptic_quality(pairs[i].pred, pairs[i].gt);
      res[i].all = match_instances(pairs[i].pred, pairs[i].gt);
    } catch (const Error& e) {
      throw MetricError(pairs[i].name + ": " + e.what());
    }
  });

  InstanceReport r;
  r.images = pairs.size();
  r.aggregation = aggregation;
  std::vector<MatchedPair> matched;
  for (const auto& img : res) {
    matched.insert(matched.end(), img.all.tp.begin(), img.all.tp.end());
    r.tp += static_cast<std::int64_t>(img.all.tp.size());
    r.fp += static_cast<std::int64_t>(img.all.fp.size());
    r.fn += static_cast<std::int64_t>(img.all.fn.size());
  }
  r.f1 = classification_f1(matched);

  if (aggregation == Aggregation::Pooled) {
    std::array<PqCounts, kNumClasses> total{};
    for (const auto& img : res)
      for (std::size_t k = 0; k < kNumClasses; ++k) total[k] += img.pq.counts[k];
    for (std::size_t k = 0; k < kNumClasses; ++k) r.per_class[k] = pq_score(total[k]);
    r.mpq = mean_pq(r.per_class);
    return r;
  }

  for (std::size_t k = 0; k < kNumClasses; ++k) {
    PqScore sum;
    int n = 0;
    for (const auto& img : res)
      if (const auto& s = img.pq.per_class[k]) {
        sum.pq += s->pq;
        sum.sq += s->sq;
        sum.rq += s->rq;
        ++n;
      }
    if (n > 0) r.per_class[k] = PqScore{sum.pq / n, sum.sq / n, sum.rq / n};
  }
  double sum = 0;
  int n = 0;
  for (const auto& img : res)
    if (img.pq.mpq) {
      sum += *img.pq.mpq;
      ++n;
    }
  if (n > 0) r.mpq = sum / n;
  return r;
}

SemanticReport evaluate_semantic(const std::vector<MaskPair>& pairs, Aggregation aggregation, int workers) {
  std::vector<PixelCounts> counts(pairs.size());
  for_each_parallel(pairs.size(), workers, [&](std::size_t i) {
    try {
      counts[i] = pixel_counts(pairs[i].pred, pairs[i].gt);
    } catch (const Error& e) {
      throw MetricError(pairs[i].name + ": " + e.what());
    }
  });
  SemanticReport r;
  r.images = pairs.size();
  r.aggregation = aggregation;
  if (aggregation == Aggregation::Pooled) {
    PixelCounts total;
    for (const auto& c : counts) total += c;
    r.scores = semantic_scores(total);
    return r;
  }
  if (pairs.empty()) return r;
  for (const auto& c : counts) {
    const SemanticScores s = semantic_scores(c);
    r.scores.iou_tissue += s.iou_tissue;
    r.scores.miou += s.miou;
    r.scores.acc_tissue += s.acc_tissue;
    r.scores.macc += s.macc;
  }
  const double n = static_cast<double>(pairs.size());
  r.scores.iou_tissue /= n;
  r.scores.miou /= n;
  r.scores.acc_tissue /= n;
  r.scores.macc /= n;
  return r;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

const char* aggregation_name(Aggregation a) { return a == Aggregation::Image ? "image" : "pooled"; }

}  // namespace

std::string write_report(const InstanceReport& r) {
  ojson doc;
  doc["mode"] = "instances";
  doc["aggregation"] = aggregation_name(r.aggregation);
  doc["images"] = r.images;
  doc["mpq"] = opt(r.mpq);
  ojson pq = ojson::object();
  for (CellClass c : kAllClasses) {
    const auto& s = r.per_class[index_of(c)];
    ojson e;
    e["pq"] = s ? ojson(s->pq) : ojson(nullptr);
    e["sq"] = s ? ojson(s->sq) : ojson(nullptr);
    e["rq"] = s ? ojson(s->rq) : ojson(nullptr);
    pq[std::string(class_name(c))] = std::move(e);
  }
  doc["per_class"] = std::move(pq);
  doc["detection"] = {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}};
  doc["macro_f1"] = opt(r.f1.macro_f1);
  ojson f1 = ojson::object();
  for (CellClass c : kAllClasses) f1[std::string(class_name(c))] = opt(r.f1.per_class[index_of(c)]);
  doc["f1"] = std::move(f1);
  std::vector<std::string> labels;
  for (CellClass c : kAllClasses) labels.emplace_back(class_name(c));
  doc["confusion_labels"] = labels;
  ojson rows = ojson::array();
  for (const auto& row : r.f1.confusion) rows.push_back(ojson(std::vector<std::int64_t>(row.begin(), row.end())));
  doc["confusion"] = std::move(rows);
  return doc.dump(1) + "\n";
}

std::string write_report(const SemanticReport& r) {
  ojson doc;
  doc["mode"] = "semantic";
  doc["aggregation"] = aggregation_name(r.aggregation);
  doc["images"] = r.images;
  doc["iou_tissue"] = r.scores.iou_tissue;
  doc["miou"] = r.scores.miou;
  doc["acc_tissue"] = r.scores.acc_tissue;
  doc["macc"] = r.scores.macc;
  return doc.dump(1) + "\n";
}

}  // namespace hm
