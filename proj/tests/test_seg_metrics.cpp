#include <cmath>
#include <set>

#include "doctest.h"
#include "hm/errors.hpp"
#include "hm/io.hpp"
#include "hm/seg_metrics.hpp"
#include "metric_oracles.hpp"

using namespace hm;
using test::paint;
using test::Rect;

namespace {

constexpr CellClass A = CellClass::Lymphocyte;
constexpr CellClass B = CellClass::Tumor;

BinaryMask random_mask(Engine& e, std::int64_t w, std::int64_t h, double fill) {
  BinaryMask m(w, h);
  for (auto& b : m.bits) b = uniform01(e) < fill ? 1 : 0;
  return m;
}

}  // namespace

TEST_SUITE("seg-metrics") {
  TEST_CASE("identical maps: every instance a perfect match") {
    const auto m = paint(20, 20, {{0, 0, 5, 5, A}, {10, 10, 15, 18, B}, {6, 0, 9, 4, A}});
    const InstanceMatch r = match_instances(m, m);
    CHECK(r.tp.size() == 3);
    CHECK(r.fp.empty());
    CHECK(r.fn.empty());
    for (const auto& t : r.tp) CHECK(t.iou == 1.0);
    const PanopticResult pq = panoptic_quality(m, m);
    CHECK(pq.mpq == 1.0);
    CHECK(pq.per_class[index_of(A)]->pq == 1.0);
    CHECK_FALSE(pq.per_class[index_of(CellClass::Plasma)]);
    CHECK(classification_f1(r.tp).macro_f1 == 1.0);
  }

  TEST_CASE("IoU of exactly one half is not a match") {
    const auto gt = paint(20, 20, {{0, 0, 10, 10, A}});
    const auto pred = paint(20, 20, {{0, 0, 5, 10, A}});
    const InstanceMatch r = match_instances(pred, gt);
    CHECK(r.tp.empty());
    CHECK(r.fp == std::vector<std::uint32_t>{1});
    CHECK(r.fn == std::vector<std::uint32_t>{1});
    const auto above = paint(20, 20, {{0, 0, 6, 10, A}});
    CHECK(match_instances(above, gt).tp.size() == 1);
  }

  TEST_CASE("matching agrees with exhaustive assignment") {
    Engine e = make_engine(61);
    for (int t = 0; t < 300; ++t) {
      const auto [pred, gt] = test::random_instance_pair(e);
      const InstanceMatch r = match_instances(pred, gt);
      std::set<std::pair<std::uint32_t, std::uint32_t>> got;
      std::set<std::uint32_t> gt_seen, pred_seen;
      const auto iou = test::pairwise_iou(pred, gt);
      for (const auto& p : r.tp) {
        got.insert({p.pred_id, p.gt_id});
        CHECK(gt_seen.insert(p.gt_id).second);
        CHECK(pred_seen.insert(p.pred_id).second);
        CHECK(p.iou == doctest::Approx(iou.at({p.pred_id, p.gt_id})).epsilon(1e-15));
        CHECK(p.gt_cls == gt.classes.at(p.gt_id));
      }
      CHECK(got == test::optimal_matching(pred, gt, 0.5));
      CHECK(r.tp.size() + r.fn.size() == gt.classes.size());
      CHECK(r.tp.size() + r.fp.size() == pred.classes.size());
    }
  }

  TEST_CASE("PQ fixtures") {
    // 100-pixel gt, 60-pixel prediction inside it.
    const auto gt = paint(30, 30, {{0, 0, 10, 10, A}});
    const auto pred = paint(30, 30, {{0, 0, 6, 10, A}});
    CHECK(panoptic_quality(pred, gt).per_class[index_of(A)]->pq == 0.6);

    const auto gt2 = paint(30, 30, {{0, 0, 10, 10, A}, {20, 20, 25, 25, A}});
    const auto pred2 = paint(30, 30, {{0, 0, 8, 10, A}, {12, 0, 16, 4, A}});
    const PanopticResult r = panoptic_quality(pred2, gt2);
    const PqScore s = *r.per_class[index_of(A)];
    CHECK(s.pq == 0.4);
    CHECK(s.sq == 0.8);
    CHECK(s.rq == 0.5);
    CHECK(r.mpq == 0.4);
  }

  TEST_CASE("PQ equals SQ times RQ") {
    Engine e = make_engine(62);
    for (int t = 0; t < 200; ++t) {
      const auto [pred, gt] = test::random_instance_pair(e);
      const PanopticResult r = panoptic_quality(pred, gt);
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const PqCounts& n = r.counts[c];
        if (n.tp + n.fp + n.fn == 0) {
          CHECK_FALSE(r.per_class[c]);
          continue;
        }
        REQUIRE(r.per_class[c]);
        const PqScore& s = *r.per_class[c];
        CHECK(s.pq == doctest::Approx(s.sq * s.rq).epsilon(1e-12));
        const double denom = static_cast<double>(n.tp) + 0.5 * static_cast<double>(n.fp + n.fn);
        CHECK(s.pq == doctest::Approx(n.iou_sum / denom).epsilon(1e-12));
        CHECK((s.pq >= 0.0 && s.pq <= 1.0));
      }
    }
  }

  TEST_CASE("classification F1 and confusion matrix") {
    std::vector<MatchedPair> pairs{{1, 1, 0.9, A, A}, {2, 2, 0.9, A, B}};
    const F1Result f = classification_f1(pairs);
    CHECK(f.per_class[index_of(A)] == 2.0 / 3.0);
    CHECK(f.per_class[index_of(B)] == 0.0);
    CHECK_FALSE(f.per_class[index_of(CellClass::Plasma)]);
    CHECK(f.macro_f1 == doctest::Approx(1.0 / 3.0));
    CHECK(f.confusion[index_of(B)][index_of(A)] == 1);

    Engine e = make_engine(63);
    std::vector<MatchedPair> many;
    std::int64_t correct = 0;
    for (int i = 0; i < 500; ++i) {
      const CellClass g = kAllClasses[uniform_index(e, kNumClasses)];
      const CellClass p = uniform01(e) < 0.6 ? g : kAllClasses[uniform_index(e, kNumClasses)];
      correct += g == p;
      many.push_back({static_cast<std::uint32_t>(i + 1), static_cast<std::uint32_t>(i + 1), 0.7, p, g});
    }
    const F1Result r = classification_f1(many);
    std::int64_t trace = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) trace += r.confusion[c][c];
    CHECK(trace == correct);
    CHECK(classification_f1(r.confusion).macro_f1 == r.macro_f1);
  }

  TEST_CASE("semantic scores against pixel counting") {
    Engine e = make_engine(64);
    for (int t = 0; t < 100; ++t) {
      const auto w = 1 + static_cast<std::int64_t>(uniform_index(e, 60));
      const auto h = 1 + static_cast<std::int64_t>(uniform_index(e, 60));
      const BinaryMask p = random_mask(e, w, h, uniform01(e)), g = random_mask(e, w, h, uniform01(e));
      const SemanticScores s = semantic_iou(p, g);
      const auto o = test::semantic_oracle(p, g);
      CHECK(s.iou_tissue == doctest::Approx(o.iou_fg).epsilon(1e-15));
      CHECK(s.miou == doctest::Approx((o.iou_fg + o.iou_bg) / 2).epsilon(1e-15));
      CHECK(s.acc_tissue == doctest::Approx(o.acc_fg).epsilon(1e-15));
      CHECK(s.macc == doctest::Approx((o.acc_fg + o.acc_bg) / 2).epsilon(1e-15));
      CHECK(semantic_iou(g, p).miou == s.miou);
    }
  }

  TEST_CASE("semantic edge cases") {
    BinaryMask left(10, 4), right(10, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 10; ++x) (x < 5 ? left : right).set(x, y, true);
    const SemanticScores d = semantic_iou(left, right);
    CHECK(d.iou_tissue == 0.0);
    CHECK(d.miou == 0.0);
    const SemanticScores same = semantic_iou(left, left);
    CHECK(same.miou == 1.0);
    CHECK(same.macc == 1.0);
    CHECK(semantic_iou(BinaryMask(3, 3), BinaryMask(3, 3)).iou_tissue == 1.0);
    CHECK_THROWS_AS(semantic_iou(BinaryMask(3, 3), BinaryMask(3, 4)), MetricError);
    CHECK_THROWS_AS(match_instances(paint(3, 3, {}), paint(4, 3, {})), MetricError);
  }

  TEST_CASE("image and pooled aggregation") {
    const auto perfect = paint(30, 30, {{0, 0, 10, 10, A}});
    const auto gt2 = paint(30, 30, {{0, 0, 10, 10, A}, {20, 20, 25, 25, A}});
    const auto pred2 = paint(30, 30, {{0, 0, 8, 10, A}, {12, 0, 16, 4, A}});
    const std::vector<InstancePair> pairs{{"a", perfect, perfect}, {"b", pred2, gt2}};
    const InstanceReport img = evaluate_instances(pairs, Aggregation::Image, 2);
    CHECK(img.per_class[index_of(A)]->pq == doctest::Approx(0.7));
    CHECK(img.mpq == doctest::Approx(0.7));
    const InstanceReport pooled = evaluate_instances(pairs, Aggregation::Pooled, 2);
    CHECK(pooled.per_class[index_of(A)]->pq == doctest::Approx(1.8 / 3.0));
    CHECK(pooled.tp == 2);
    CHECK(pooled.fp == 1);
    CHECK(pooled.fn == 1);
    CHECK(write_report(img) == write_report(evaluate_instances(pairs, Aggregation::Image, 1)));
  }

  TEST_CASE("instance map parsing") {
    GrayImage img{3, 2, {0, 1, 1, 2, 2, 0}};
    const std::string pgm = write_pgm16(img);
    const InstanceLabelMap m = parse_instance_map(pgm, R"({"1":"tumor","2":2})");
    CHECK(m.classes.at(1) == CellClass::Tumor);
    CHECK(m.classes.at(2) == CellClass::Lymphocyte);
    CHECK(parse_instance_map(pgm, write_instance_classes(m)).classes == m.classes);
    CHECK_THROWS_AS(parse_instance_map(pgm, R"({"1":"tumor"})"), MetricError);
    CHECK_THROWS_AS(parse_instance_map(pgm, R"({"1":"tumor","2":"cat"})"), ParseError);
    CHECK_THROWS_AS(parse_instance_map(pgm, R"({"0":"tumor"})"), ParseError);
    GrayImage sparse{2, 1, {1, 3}};
    CHECK_THROWS_AS(parse_instance_map(write_pgm16(sparse), R"({"1":1,"3":1})"), MetricError);
  }
}
