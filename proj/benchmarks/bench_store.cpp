#include <benchmark/benchmark.h>

#include <memory>

#include "objspace/store.hpp"
#include "objspace/workload.hpp"

namespace {

using namespace objspace;

constexpr std::uint64_t kKeys = 100000;

struct Fixture {
  Runtime rt;
  std::unique_ptr<KvStore> store;
  std::vector<std::uint64_t> perm = key_permutation(kKeys, 1);

  Fixture(StoreKind kind, bool guides)
      : rt{RuntimeConfig{.guides_enabled = guides}}, store{make_store(kind, rt, kKeys)} {
    for (std::uint64_t k = 0; k < kKeys; ++k) store->set(make_key(k, 30), make_value(k, 0, 256));
  }
};

// Args: structure (0 hashmap, 1 skiplist), guides (0 baseline, 1 guided).
void BM_StoreGetZipf(benchmark::State& state) {
  static std::unique_ptr<Fixture> fx;
  if (state.thread_index() == 0) {
    fx = std::make_unique<Fixture>(state.range(0) == 0 ? StoreKind::kHashMap : StoreKind::kSkipList,
                                   state.range(1) != 0);
  }
  ZipfGenerator zipf{kKeys, 0.99, 7 + static_cast<std::uint64_t>(state.thread_index())};
  std::vector<std::string> keys;
  keys.reserve(4096);
  for (int i = 0; i < 4096; ++i) keys.push_back(make_key(fx->perm[zipf.next()], 30));
  std::string out;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fx->store->get(keys[i++ & 4095], out));
  }
  state.SetItemsProcessed(state.iterations());
  if (state.thread_index() == 0) fx.reset();
}
BENCHMARK(BM_StoreGetZipf)
    ->ArgsProduct({{0, 1}, {0, 1}})
    ->ArgNames({"skiplist", "guided"})
    ->Threads(1)
    ->Threads(8)
    ->UseRealTime();

}  // namespace
