#include <gtest/gtest.h>

#include <set>
#include <thread>
#include <vector>

#include "objspace/guide_arena.hpp"

using namespace objspace;

TEST(GuideArena, AcquireInitializesWord) {
  GuideArena arena;
  const CellIndex a = arena.acquire(0x1234);
  EXPECT_EQ(arena.cell(a).load(), 0x1234U);
  EXPECT_EQ(arena.live_cells(), 1U);
}

TEST(GuideArena, ReleasedCellsAreReused) {
  GuideArena arena;
  const CellIndex a = arena.acquire(1);
  const CellIndex b = arena.acquire(2);
  EXPECT_NE(a, b);
  arena.release(a);
  EXPECT_EQ(arena.live_cells(), 1U);
  const CellIndex c = arena.acquire(3);
  EXPECT_EQ(c, a);
  EXPECT_EQ(arena.cell(c).load(), 3U);
  EXPECT_EQ(arena.high_water(), 2U);
}

TEST(GuideArena, CellsCrossChunkBoundaries) {
  GuideArena arena;
  std::vector<CellIndex> cells;
  for (std::size_t i = 0; i < GuideArena::kChunkCells + 10; ++i) cells.push_back(arena.acquire(i));
  for (std::size_t i = 0; i < cells.size(); ++i) ASSERT_EQ(arena.cell(cells[i]).load(), i);
}

TEST(GuideArena, ConcurrentAcquireYieldsDistinctCells) {
  GuideArena arena;
  constexpr int kThreads = 8;
  constexpr int kPer = 20000;
  std::vector<std::vector<CellIndex>> got(kThreads);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < kThreads; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < kPer; ++i) got[t].push_back(arena.acquire(t));
      });
    }
  }
  std::set<CellIndex> all;
  for (const auto& v : got) all.insert(v.begin(), v.end());
  EXPECT_EQ(all.size(), std::size_t{kThreads} * kPer);
  EXPECT_EQ(arena.live_cells(), std::size_t{kThreads} * kPer);
}
