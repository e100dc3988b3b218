#include <cmath>
#include <set>

#include "doctest.h"
#include "hm/errors.hpp"
#include "hm/features.hpp"
#include "hm/io.hpp"
#include "hm/region.hpp"
#include "support.hpp"

using namespace hm;

namespace {

CellRecord cell(std::int64_t id, double x, double y, CellClass c) { return {id, {x, y}, c, {}, {}}; }

// 40 x 40 mask at downsample 10 (400 x 400 px), tumor block in the middle.
AlignedSlide small_slide(std::vector<CellRecord> cells, double mpp = 1.0, bool with_tumor = true) {
  BinaryMask m(40, 40);
  if (with_tumor)
    for (int y = 15; y < 25; ++y)
      for (int x = 15; x < 25; ++x) m.set(x, y, true);
  return align_slide(SlideMeta{400, 400, mpp, 10}, std::move(cells), std::move(m), 30.0 * mpp, 1);
}

Polygon square(double cx, double cy, double half) {
  return {{cx - half, cy - half}, {cx + half, cy - half}, {cx + half, cy + half}, {cx - half, cy + half}};
}

}  // namespace

TEST_SUITE("feature-extractor") {
  TEST_CASE("percentages in a region") {
    const AlignedSlide s = small_slide({cell(1, 200, 200, CellClass::Lymphocyte), cell(2, 201, 200, CellClass::Lymphocyte),
                                        cell(3, 202, 200, CellClass::Lymphocyte), cell(4, 203, 200, CellClass::Tumor),
                                        cell(5, 10, 10, CellClass::Stromal)});
    const auto p = class_percentages(s, FeatureRegion::Tumor);
    CHECK(p[index_of(CellClass::Lymphocyte)] == 0.75);
    CHECK(p[index_of(CellClass::Tumor)] == 0.25);
    CHECK(p[index_of(CellClass::Plasma)] == 0.0);
    for (const auto& v : class_percentages(s, FeatureRegion::Vicinity)) CHECK_FALSE(v);
    const auto sh = class_shares(s, FeatureRegion::Tumor);
    CHECK(sh[index_of(CellClass::Lymphocyte)] == 1.0);
    CHECK(sh[index_of(CellClass::Stromal)] == 0.0);
    CHECK_FALSE(sh[index_of(CellClass::Granulocyte)]);
  }

  TEST_CASE("density unit and scaling law") {
    // Tumor block: 100 mask pixels of 10 um pitch = 0.01 mm^2; one cell -> 100 per mm^2.
    const std::vector<CellRecord> cells{cell(1, 200, 200, CellClass::Plasma)};
    const auto d1 = class_densities(small_slide(cells, 1.0), FeatureRegion::Tumor);
    CHECK(d1[index_of(CellClass::Plasma)] == doctest::Approx(100.0).epsilon(1e-12));
    const auto d2 = class_densities(small_slide(cells, 2.0), FeatureRegion::Tumor);
    CHECK(*d2[index_of(CellClass::Plasma)] * 4.0 == doctest::Approx(*d1[index_of(CellClass::Plasma)]).epsilon(1e-12));
    for (const auto& v : class_densities(small_slide(cells, 1.0, false), FeatureRegion::Tumor)) CHECK_FALSE(v);
  }

  TEST_CASE("ratio formula") {
    CHECK(*class_ratio(50, 50) == 1.0);
    CHECK(*class_ratio(100, 10) == doctest::Approx(2.001 / 1.001).epsilon(1e-14));
    const double big = *class_ratio(1000000, 1);
    CHECK(std::isfinite(big));
    CHECK(big == doctest::Approx((6 + 1e-3) / 1e-3));
    CHECK_FALSE(class_ratio(0, 5));
    CHECK_FALSE(class_ratio(5, 0));
  }

  TEST_CASE("morphology statistics against hand values") {
    std::vector<CellRecord> cells;
    for (int i = 0; i < 2; ++i) {
      CellRecord c = cell(i + 1, 200 + i, 200, CellClass::Tumor);
      c.contour = square(200 + i, 200, 0.5);
      cells.push_back(c);
    }
    CellRecord big = cell(3, 205, 205, CellClass::Lymphocyte);
    big.contour = square(205, 205, 1.0);
    cells.push_back(big);
    CellRecord small = cell(4, 206, 206, CellClass::Lymphocyte);
    small.contour = square(206, 206, 0.5);
    cells.push_back(small);
    CellRecord lone = cell(5, 207, 207, CellClass::Plasma);
    lone.contour = square(207, 207, 2.0);
    cells.push_back(lone);
    const auto m = morphology_stats(small_slide(cells), FeatureRegion::Tumor);
    const auto& t = m[index_of(CellClass::Tumor)];
    CHECK(t.area_mean == 1.0);
    CHECK(t.area_std == 0.0);
    const auto& l = m[index_of(CellClass::Lymphocyte)];
    CHECK(*l.area_mean == doctest::Approx(2.5));
    CHECK(*l.area_std == doctest::Approx(1.5));
    CHECK(*l.circularity_mean == doctest::Approx(std::acos(-1.0) / 4));
    CHECK(m[index_of(CellClass::Plasma)].area_std == 0.0);
    CHECK_FALSE(m[index_of(CellClass::Stromal)].area_mean);
  }

  TEST_CASE("default registry layout") {
    const FeatureRegistry r = default_registry();
    CHECK(r.schema == "hm-fv-1");
    CHECK(r.defs.size() == 177);
    CHECK(r.analysis_names().size() == 105);
    const auto names = r.names();
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    CHECK(names.front() == "pct.tumor.granulocyte");
    int dist = 0;
    for (const auto& d : r.defs)
      if (d.family == Family::Distance) {
        ++dist;
        CHECK(index_of(d.cls) < index_of(d.cls_b));
      }
    CHECK(dist == 6);
    RegistryOptions both;
    both.both_directions = true;
    both.distance_microns = true;
    CHECK(default_registry(both).defs.size() == 177 + 18);
  }

  TEST_CASE("registry JSON round-trips") {
    RegistryOptions o;
    o.both_directions = true;
    const FeatureRegistry r = default_registry(o);
    const std::string text = write_registry(r);
    const FeatureRegistry back = parse_registry(text);
    CHECK(back.names() == r.names());
    CHECK(write_registry(back) == text);
    CHECK_THROWS(parse_registry(R"([{"name":"x","family":"bogus"}])"));
  }

  TEST_CASE("assemble keeps registry order and flags missing distances") {
    const AlignedSlide s = small_slide({cell(1, 200, 200, CellClass::Lymphocyte), cell(2, 210, 200, CellClass::Tumor)});
    FeatureRegistry r;
    const FeatureRegistry full = default_registry();
    for (const auto& name : {"ratio.tumor.lymphocyte_tumor", "pct.whole_slide.tumor", "dist.tumor.lymphocyte_to_tumor"})
      for (const auto& d : full.defs)
        if (d.name == name) r.defs.push_back(d);
    REQUIRE(r.defs.size() == 3);
    const FeatureVector fv = extract_features(s, r, 2);
    REQUIRE(fv.values.size() == 3);
    CHECK(fv.values[0].first == "ratio.tumor.lymphocyte_tumor");
    CHECK(fv.values[0].second == doctest::Approx(1.0));
    CHECK(fv.values[1].second == 0.5);
    CHECK(fv.values[2].second == 10.0);
    CHECK_THROWS_AS(assemble(s, r, DistanceTable{}), AssemblyError);
  }

  TEST_CASE("slide without tumor: tumor and distance features null, whole slide populated") {
    const AlignedSlide s = small_slide({cell(1, 20, 20, CellClass::Lymphocyte), cell(2, 30, 30, CellClass::Tumor)}, 1.0, false);
    const FeatureVector fv = extract_features(s, default_registry());
    for (const auto& [name, v] : fv.values) {
      if (name.starts_with("pct.tumor.") || name.starts_with("dist.") || name.starts_with("density.tumor."))
        CHECK_MESSAGE(!v, name);
      if (name.starts_with("pct.whole_slide.")) CHECK_MESSAGE(v, name);
    }
    CHECK(*fv.find("pct.whole_slide.epithelial") == 0.5);
  }

  TEST_CASE("planted counts are recovered exactly") {
    for (std::uint64_t seed = 200; seed < 210; ++seed) {
      const SynthConfig cfg = test::random_config(seed, 800, seed % 2 == 0);
      const SynthSlide synth = generate(cfg);
      const AlignedSlide s = test::align(synth, cfg.vicinity_um, 2);
      const FeatureVector fv = extract_features(s, default_registry(), 2);
      for (const auto& [name, want] : synth.truth.features.values) {
        const auto* got = fv.find(name);
        REQUIRE_MESSAGE(got, name);
        CHECK_MESSAGE(want.has_value() == got->has_value(), name);
        if (want && *got) CHECK_MESSAGE(**got == doctest::Approx(*want).epsilon(1e-9), name);
      }
      for (const auto& [pair, d] : synth.truth.fixture_distances) {
        const auto* got = fv.find("dist.tumor." + std::string(class_name(pair.first)) + "_to_" +
                                  std::string(class_name(pair.second)));
        REQUIRE(got);
        CHECK(**got == d);
      }
    }
  }

  TEST_CASE("golden feature vector") {
    const std::string dir = HM_TEST_DATA_DIR;
    const SynthConfig cfg = parse_synth_config(read_file(dir + "/golden_config.json"));
    const SynthSlide synth = generate(cfg);
    const AlignedSlide s = test::align(synth, cfg.vicinity_um, 3);
    CHECK(write_feature_vector(extract_features(s, default_registry(), 3)) + "\n" ==
          read_file(dir + "/golden_features.json"));
  }
}
