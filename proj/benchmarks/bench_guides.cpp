#include <benchmark/benchmark.h>

#include "objspace/guide_word.hpp"
#include "objspace/scope.hpp"

namespace {

using namespace objspace;

void BM_DereferenceFastPath(benchmark::State& state) {
  GuideCell cell{pack({.locator = 0x1000, .heap = HeapId::kHot, .accessed = true})};
  for (auto _ : state) benchmark::DoNotOptimize(cell.dereference());
}
BENCHMARK(BM_DereferenceFastPath);

void BM_DereferenceSetsAccessed(benchmark::State& state) {
  const std::uint64_t idle = pack({.locator = 0x1000, .heap = HeapId::kHot});
  GuideCell cell{idle};
  for (auto _ : state) {
    cell.store(idle);
    benchmark::DoNotOptimize(cell.dereference());
  }
}
BENCHMARK(BM_DereferenceSetsAccessed);

void BM_PlainLoad(benchmark::State& state) {
  GuideCell cell{pack({.locator = 0x1000, .accessed = true})};
  for (auto _ : state) benchmark::DoNotOptimize(locator_of(cell.load()));
}
BENCHMARK(BM_PlainLoad);

void BM_BaseDeltaSetInsert(benchmark::State& state) {
  const auto n = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) {
    BaseDeltaSet s;
    for (std::uint64_t i = 0; i < n; ++i) s.insert((i * 0x9e3779b97f4a7c15ULL) >> 20);
    benchmark::DoNotOptimize(s.size());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_BaseDeltaSetInsert)->Arg(8)->Arg(64);

}  // namespace
