#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hm/region.hpp"
#include "hm/rng.hpp"
#include "hm/selection.hpp"
#include "hm/synth.hpp"

namespace hm::test {

// Up to three separated elliptical tumors on a 3200 x 3200 slide, random
// planted counts for every ingestible class and region.
inline SynthConfig random_config(std::uint64_t seed, std::int64_t max_cells = 2000, bool with_fixture = false) {
  Engine e = make_engine(seed, 0x7e57);
  SynthConfig c;
  c.seed = seed;
  c.meta = SlideMeta{3200, 3200, 1.0 + static_cast<double>(uniform_index(e, 2)), 32};
  c.vicinity_um = uniform(e, 120.0, 400.0);
  const BlobSpec slots[3] = {{800, 800, 0, 0}, {2400, 800, 0, 0}, {1600, 2400, 0, 0}};
  const auto n_blobs = 1 + uniform_index(e, 3);
  for (std::size_t b = 0; b < n_blobs; ++b) {
    BlobSpec s = slots[b];
    s.rx = uniform(e, 200.0, 420.0);
    s.ry = uniform(e, 200.0, 420.0);
    c.blobs.push_back(s);
  }
  const std::int64_t per_slot = max_cells / 15;
  for (auto& region : c.counts)
    for (std::size_t k = 0; k + 1 < kNumClasses; ++k)
      region[k] = static_cast<std::int64_t>(uniform_index(e, static_cast<std::uint64_t>(per_slot) + 1));
  c.contour = static_cast<ContourTemplate>(uniform_index(e, 3));
  if (with_fixture) {
    FixtureSpec fx;
    fx.blob = uniform_index(e, n_blobs);
    fx.source = CellClass::Granulocyte;
    fx.target = CellClass::Plasma;
    const auto n = 1 + uniform_index(e, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<double>(1 + uniform_index(e, 4));
      fx.offsets.push_back({3.0 * k, 4.0 * k});  // 3-4-5 triangles: exact distances
    }
    c.fixtures.push_back(fx);
    c.counts[0][index_of(CellClass::Granulocyte)] = 0;
    c.counts[0][index_of(CellClass::Plasma)] = 0;
  }
  return c;
}

inline AlignedSlide align(const SynthSlide& s, double vicinity_um, int workers = 1) {
  return align_slide(s.meta, s.cells, s.mask, vicinity_um, workers);
}

// Fresh per-test scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Two binary features whose AND is the label, plus uniform noise columns
// placed before them.
inline Cohort planted_cohort(std::uint64_t seed, std::size_t n, std::size_t noise) {
  Engine e = make_engine(seed, 99);
  Cohort c;
  c.x = Matrix(n, noise + 2);
  for (std::size_t f = 0; f < noise; ++f) c.feature_names.push_back("noise" + std::to_string(f));
  c.feature_names.push_back("signal_a");
  c.feature_names.push_back("signal_b");
  for (std::size_t i = 0; i < n; ++i) {
    const int a = static_cast<int>(uniform_index(e, 2)), b = static_cast<int>(uniform_index(e, 2));
    c.y.push_back(a & b);
    c.sample_ids.push_back("s" + std::to_string(1000 + i));
    for (std::size_t f = 0; f < noise; ++f) c.x.at(i, f) = uniform01(e);
    c.x.at(i, noise) = a;
    c.x.at(i, noise + 1) = b;
  }
  return c;
}

// Planted AND cohort laid out so that signal_a and signal_b are exactly
// uncorrelated inside every training split of `cv_sweep(.., folds, .., fold_seed)`.
// Each fold holds 4k positives (1,1) and negatives split 9k (0,0), 6k (0,1),
// 6k (1,0), which satisfies P(a,b) = P(a) P(b) fold by fold.
inline Cohort orthogonal_planted_cohort(std::uint64_t seed, std::size_t k, std::size_t noise, std::size_t folds,
                                        std::uint64_t fold_seed) {
  Engine e = make_engine(seed, 0x0f7);
  const std::size_t pos = 4 * k * folds, neg = 21 * k * folds, n = pos + neg;
  Cohort c;
  c.x = Matrix(n, noise + 2);
  for (std::size_t f = 0; f < noise; ++f) c.feature_names.push_back("noise" + std::to_string(f));
  c.feature_names.push_back("signal_a");
  c.feature_names.push_back("signal_b");
  for (std::size_t i = 0; i < n; ++i) {
    c.sample_ids.push_back("s" + std::to_string(10000 + i));
    c.y.push_back(i < pos ? 1 : 0);
  }
  const auto fold_of = stratified_folds(c.sample_ids, c.y, folds, fold_seed);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::pair<int, int>> types(9 * k, {0, 0});
    types.insert(types.end(), 6 * k, {0, 1});
    types.insert(types.end(), 6 * k, {1, 0});
    for (std::size_t i = types.size(); i > 1; --i) std::swap(types[i - 1], types[uniform_index(e, i)]);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] != f) continue;
      const auto [a, b] = c.y[i] ? std::pair{1, 1} : types.at(next++);
      c.x.at(i, noise) = a;
      c.x.at(i, noise + 1) = b;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < noise; ++f) c.x.at(i, f) = uniform01(e);
  return c;
}

}  // namespace hm::test
