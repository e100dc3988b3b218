// Parallel kernels against their serial references.
//   build/bench/hm_bench --benchmark_filter=Distance

#include <benchmark/benchmark.h>

#include "hm/distance.hpp"
#include "hm/features.hpp"
#include "hm/region.hpp"
#include "hm/synth.hpp"

namespace {

const hm::SynthSlide& slide() {
  static const hm::SynthSlide s = [] {
    hm::SynthConfig c;
    c.meta = hm::SlideMeta{8192, 8192, 0.5, 16};
    c.vicinity_um = 400;
    c.seed = 11;
    c.blobs = {{2000, 2000, 1400, 1100}, {6000, 2200, 1200, 1500}, {4000, 6200, 1800, 1300}};
    for (auto& region : c.counts) {
      region[hm::index_of(hm::CellClass::Lymphocyte)] = 6000;
      region[hm::index_of(hm::CellClass::Plasma)] = 1500;
      region[hm::index_of(hm::CellClass::Stromal)] = 3000;
    }
    c.counts[0][hm::index_of(hm::CellClass::Tumor)] = 12000;
    return hm::generate(c);
  }();
  return s;
}

const hm::AlignedSlide& aligned() {
  static const hm::AlignedSlide a = hm::align_slide(slide().meta, slide().cells, slide().mask, 400, 0);
  return a;
}

const hm::DistanceSpec kSpec{hm::CellClass::Lymphocyte, hm::CellClass::Tumor};

void BM_DistanceGrid(benchmark::State& state) {
  const auto& a = aligned();
  for (auto _ : state) benchmark::DoNotOptimize(hm::mean_closest_distance(a, kSpec, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_DistanceGrid)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_DistanceReference(benchmark::State& state) {
  const auto& a = aligned();
  for (auto _ : state) benchmark::DoNotOptimize(hm::brute_force_mean_closest_distance(a, kSpec));
}
BENCHMARK(BM_DistanceReference)->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& state) {
  const auto& m = slide().mask;
  for (auto _ : state) benchmark::DoNotOptimize(hm::squared_distance_transform(m, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_DistanceTransform)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_ExtractFeatures(benchmark::State& state) {
  const auto& a = aligned();
  const auto reg = hm::default_registry();
  for (auto _ : state) benchmark::DoNotOptimize(hm::extract_features(a, reg, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_ExtractFeatures)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_Overestimate(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(hm::estimate_overestimation_probability(10, 1000000, 1, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Overestimate)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
