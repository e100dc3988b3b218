#pragma once

// Segmentation evaluation: panoptic quality over nucleus instance maps,
// classification F1 on matched nuclei, and binary semantic IoU/accuracy.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hm/types.hpp"

namespace hm {

// Raster of instance ids (0 = background) plus the class of every id.
struct InstanceLabelMap {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint32_t> ids;
  std::map<std::uint32_t, CellClass> classes;

  // Throws MetricError when a raster id has no class. With `require_dense`,
  // the raster ids must also be exactly 1..K.
  void validate(bool require_dense = false) const;
  // Same raster with every instance of another class cleared to background.
  InstanceLabelMap restricted_to(CellClass c) const;
};

// Raster from a 16-bit (or 8-bit) PGM, classes from JSON {"id": class}
// where class is a lowercase name or a code 1..6.
InstanceLabelMap parse_instance_map(std::string_view pgm, std::string_view class_json);
std::string write_instance_classes(const InstanceLabelMap& map);

struct MatchedPair {
  std::uint32_t pred_id = 0;
  std::uint32_t gt_id = 0;
  double iou = 0.0;
  CellClass pred_cls = CellClass::Granulocyte;
  CellClass gt_cls = CellClass::Granulocyte;
};

struct InstanceMatch {
  std::vector<MatchedPair> tp;  // ascending gt id
  std::vector<std::uint32_t> fp;  // unmatched pred ids, ascending
  std::vector<std::uint32_t> fn;  // unmatched gt ids, ascending
};

// Pairs with IoU strictly above the threshold, accepted greedily by IoU
// (ties: lower gt id, then lower pred id). Throws MetricError on size mismatch.
InstanceMatch match_instances(const InstanceLabelMap& pred, const InstanceLabelMap& gt, double iou_threshold = 0.5);

struct PqCounts {
  std::int64_t tp = 0, fp = 0, fn = 0;
  double iou_sum = 0.0;
  PqCounts& operator+=(const PqCounts& o);
};
PqCounts pq_counts(const InstanceMatch& m);

struct PqScore {
  double pq = 0.0, sq = 0.0, rq = 0.0;
};
// Null when the class occurs in neither map (tp + fp + fn == 0).
std::optional<PqScore> pq_score(const PqCounts& c);

struct PanopticResult {
  std::array<PqCounts, kNumClasses> counts{};
  std::array<std::optional<PqScore>, kNumClasses> per_class{};
  std::optional<double> mpq;  // mean over classes that occur
};
// Matches each class separately after restricting both maps to it.
PanopticResult panoptic_quality(const InstanceLabelMap& pred, const InstanceLabelMap& gt, double iou_threshold = 0.5);
std::optional<double> mean_pq(const std::array<std::optional<PqScore>, kNumClasses>& per_class);

using ConfusionMatrix = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;  // [gt][pred]

struct F1Result {
  ConfusionMatrix confusion{};
  std::array<std::optional<double>, kNumClasses> per_class{};
  std::optional<double> macro_f1;
};
// One-vs-rest F1 over matched pairs; a class with no paired cell in either
// role has null F1 and is left out of the macro average.
F1Result classification_f1(const std::vector<MatchedPair>& pairs);
F1Result classification_f1(const ConfusionMatrix& confusion);

struct PixelCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  PixelCounts& operator+=(const PixelCounts& o);
};
PixelCounts pixel_counts(const BinaryMask& pred, const BinaryMask& gt);

struct SemanticScores {
  double iou_tissue = 0.0, miou = 0.0, acc_tissue = 0.0, macc = 0.0;
};
// Empty unions and empty supports score 1.0.
SemanticScores semantic_scores(const PixelCounts& c);
SemanticScores semantic_iou(const BinaryMask& pred, const BinaryMask& gt);

enum class Aggregation { Image, Pooled };

struct InstanceReport {
  std::size_t images = 0;
  Aggregation aggregation = Aggregation::Image;
  std::array<std::optional<PqScore>, kNumClasses> per_class{};
  std::optional<double> mpq;
  F1Result f1;
  std::int64_t tp = 0, fp = 0, fn = 0;  // class-agnostic detection counts
};

struct InstancePair {
  std::string name;
  InstanceLabelMap pred, gt;
};

// Image mode: class scores averaged over images where the class occurs, mPQ
// the mean of per-image mPQ. Pooled mode: counts summed before scoring.
// F1 always pools matched pairs. Images are scored in parallel and folded in
// input order.
InstanceReport evaluate_instances(const std::vector<InstancePair>& pairs, Aggregation aggregation, int workers = 0);

struct SemanticReport {
  std::size_t images = 0;
  Aggregation aggregation = Aggregation::Image;
  SemanticScores scores;
};

struct MaskPair {
  std::string name;
  BinaryMask pred, gt;
};
SemanticReport evaluate_semantic(const std::vector<MaskPair>& pairs, Aggregation aggregation, int workers = 0);

std::string write_report(const InstanceReport& r);
std::string write_report(const SemanticReport& r);

}  // namespace hm
