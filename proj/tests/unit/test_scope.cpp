#include <gtest/gtest.h>

#include <barrier>
#include <random>
#include <set>
#include <thread>

#include "objspace/scope.hpp"

using namespace objspace;

TEST(BaseDeltaSet, GroupsNearbyValues) {
  BaseDeltaSet s;
  EXPECT_TRUE(s.insert(0x1000));
  EXPECT_TRUE(s.insert(0x1040));
  ASSERT_EQ(s.groups().size(), 1U);
  EXPECT_EQ(s.groups()[0].base, 0x1000U);
  EXPECT_EQ(s.groups()[0].count, 2U);
  EXPECT_EQ(s.groups()[0].deltas[0], 0U);
  EXPECT_EQ(s.groups()[0].deltas[1], 0x40U);
}

TEST(BaseDeltaSet, DuplicateInsertIsNotNew) {
  BaseDeltaSet s;
  EXPECT_TRUE(s.insert(0x1000));
  EXPECT_FALSE(s.insert(0x1000));
  EXPECT_EQ(s.size(), 1U);
}

TEST(BaseDeltaSet, FarValueOpensSecondGroup) {
  BaseDeltaSet s;
  EXPECT_TRUE(s.insert(0x1000));
  EXPECT_TRUE(s.insert(0x1000 + (std::uint64_t{1} << 33)));
  EXPECT_EQ(s.groups().size(), 2U);
  EXPECT_THROW(s.insert(std::uint64_t{1} << 48), std::invalid_argument);
}

TEST(BaseDeltaSet, FullGroupSpillsToNewGroup) {
  BaseDeltaSet s;
  for (std::uint64_t i = 0; i < 17; ++i) EXPECT_TRUE(s.insert(i));
  EXPECT_EQ(s.groups().size(), 2U);
  for (const auto& g : s.groups()) EXPECT_LE(g.count, BaseDeltaSet::kGroupCapacity);
  EXPECT_LE(sizeof(BaseDeltaSet::Group), 128U);
}

TEST(BaseDeltaSet, EquivalentToReferenceSetUnderFuzz) {
  std::mt19937_64 rng{17};
  for (int round = 0; round < 4; ++round) {
    BaseDeltaSet s;
    std::set<std::uint64_t> ref;
    const std::uint64_t spread = round == 0 ? 64 : round == 1 ? 100000 : round == 2 ? (1ULL << 36) : (1ULL << 48);
    for (int i = 0; i < 100000; ++i) {
      const std::uint64_t v = rng() % spread;
      ASSERT_EQ(s.insert(v), ref.insert(v).second);
      const std::uint64_t probe = rng() % spread;
      ASSERT_EQ(s.contains(probe), ref.count(probe) != 0);
    }
    ASSERT_EQ(s.size(), ref.size());
    std::set<std::uint64_t> members;
    s.for_each([&](std::uint64_t v) { members.insert(v); });
    ASSERT_EQ(members, ref);
    for (std::size_t g = 1; g < s.groups().size(); ++g) {
      ASSERT_LE(s.groups()[g - 1].base, s.groups()[g].base);
    }
  }
}

TEST(ThreadActivityIndex, EnterExitAndCollisions) {
  ThreadActivityIndex tai;
  tai.enter(3, 7);
  EXPECT_EQ(tai.read(3).active_count, 1U);
  EXPECT_EQ(tai.read(3).epoch, 7U);
  tai.enter(3, 9);  // colliding thread: slot keeps the oldest epoch
  EXPECT_EQ(tai.read(3).active_count, 2U);
  EXPECT_EQ(tai.read(3).epoch, 7U);
  EXPECT_FALSE(tai.converged(9));
  tai.exit(3);
  tai.exit(3);
  EXPECT_EQ(tai.read(3).active_count, 0U);
  EXPECT_EQ(tai.read(3).epoch, 7U);  // epoch untouched on exit
  EXPECT_TRUE(tai.converged(9));
  EXPECT_THROW(tai.exit(3), ProtocolViolation);
  tai.enter(3, 9);
  EXPECT_EQ(tai.read(3).epoch, 9U);
}

class ScopeTest : public ::testing::Test {
 protected:
  GuideArena arena;
  ScopeDomain domain{arena};
  ThreadContext& ctx = domain.local();

  void set_phase(EpochPhase p) {
    const auto s = domain.epoch_state().load();
    domain.epoch_state().store({s.epoch + (p == EpochPhase::kPrepare ? 1 : 0), p});
  }
};

TEST_F(ScopeTest, OutermostEntryRegistersInTai) {
  ctx.enter_scope();
  EXPECT_EQ(domain.tai().read(ctx.tai_slot()).active_count, 1U);
  ctx.enter_scope();
  EXPECT_EQ(domain.tai().read(ctx.tai_slot()).active_count, 1U);
  EXPECT_EQ(ctx.depth(), 2U);
  ctx.exit_scope();
  EXPECT_EQ(domain.tai().read(ctx.tai_slot()).active_count, 1U);
  ctx.exit_scope();
  EXPECT_EQ(domain.tai().read(ctx.tai_slot()).active_count, 0U);
  EXPECT_THROW(ctx.exit_scope(), ProtocolViolation);
}

TEST_F(ScopeTest, NoAtcChangeWhileInactive) {
  const CellIndex c = arena.acquire(pack({.locator = 64}));
  ctx.enter_scope();
  ctx.record_guide_use(c);
  EXPECT_EQ(atc_of(arena.cell(c).load()), 0U);
  EXPECT_TRUE(ctx.used_guides().contains(c));
  ctx.exit_scope();
  EXPECT_EQ(atc_of(arena.cell(c).load()), 0U);
}

TEST_F(ScopeTest, TrackedUseIncrementsOnceAndOutermostExitDecrements) {
  const CellIndex a = arena.acquire(pack({.locator = 64}));
  const CellIndex b = arena.acquire(pack({.locator = 128}));
  set_phase(EpochPhase::kPrepare);
  ctx.enter_scope();
  EXPECT_TRUE(ctx.tracking());
  ctx.record_guide_use(a);
  ctx.record_guide_use(a);
  ctx.record_guide_use(b);
  EXPECT_EQ(atc_of(arena.cell(a).load()), 1U);
  EXPECT_EQ(atc_of(arena.cell(b).load()), 1U);
  ctx.enter_scope();
  ctx.record_guide_use(a);
  ctx.exit_scope();
  EXPECT_EQ(atc_of(arena.cell(a).load()), 1U);
  ctx.exit_scope();
  EXPECT_EQ(atc_of(arena.cell(a).load()), 0U);
  EXPECT_EQ(atc_of(arena.cell(b).load()), 0U);
}

TEST_F(ScopeTest, UseOutsideScopeFaults) {
  const CellIndex a = arena.acquire(0);
  EXPECT_THROW(ctx.record_guide_use(a), ProtocolViolation);
}

TEST_F(ScopeTest, EntryPhaseIsKeptForWholeScope) {
  const CellIndex a = arena.acquire(pack({.locator = 64}));
  ctx.enter_scope();
  set_phase(EpochPhase::kPrepare);
  ctx.record_guide_use(a);
  EXPECT_FALSE(ctx.tracking());
  EXPECT_EQ(atc_of(arena.cell(a).load()), 0U);
  ctx.exit_scope();
}

TEST_F(ScopeTest, SaturatedIncrementIsNotRecorded) {
  const CellIndex a = arena.acquire(pack({.locator = 64, .atc = 127}));
  set_phase(EpochPhase::kPrepare);
  ctx.enter_scope();
  ctx.record_guide_use(a);
  EXPECT_TRUE(ctx.atc_recorded().empty());
  EXPECT_EQ(ctx.saturated_increments(), 1U);
  ctx.exit_scope();
  EXPECT_EQ(atc_of(arena.cell(a).load()), 127U);
}

TEST_F(ScopeTest, DeferredReleaseHappensAfterDecrements) {
  const CellIndex a = arena.acquire(pack({.locator = 64}));
  set_phase(EpochPhase::kPrepare);
  ctx.enter_scope();
  ctx.record_guide_use(a);
  ctx.defer_cell_release(a);
  EXPECT_EQ(arena.live_cells(), 1U);
  ctx.exit_scope();
  EXPECT_EQ(arena.live_cells(), 0U);
}

TEST_F(ScopeTest, DecrementExactlyOnceUnderConcurrency) {
  constexpr int kCells = 64;
  std::vector<CellIndex> cells;
  for (int i = 0; i < kCells; ++i) cells.push_back(arena.acquire(pack({.locator = 64u * i})));
  set_phase(EpochPhase::kPrepare);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        ThreadContext& mine = domain.local();
        std::mt19937 rng(t);
        for (int op = 0; op < 20000; ++op) {
          mine.enter_scope();
          const int uses = 1 + rng() % 6;
          for (int u = 0; u < uses; ++u) mine.record_guide_use(cells[rng() % kCells]);
          if (rng() % 4 == 0) {
            mine.enter_scope();
            mine.record_guide_use(cells[rng() % kCells]);
            mine.exit_scope();
          }
          mine.exit_scope();
        }
      });
    }
  }
  for (const CellIndex c : cells) ASSERT_EQ(atc_of(arena.cell(c).load()), 0U);
  EXPECT_EQ(domain.tai().total_active(), 0U);
  EXPECT_EQ(domain.total_outermost_scopes(), 8U * 20000U);
}

TEST_F(ScopeTest, MedianGuidesPerScope) {
  std::vector<CellIndex> cells;
  for (int i = 0; i < 5; ++i) cells.push_back(arena.acquire(0));
  for (int uses : {1, 3, 5}) {
    ctx.enter_scope();
    for (int u = 0; u < uses; ++u) ctx.record_guide_use(cells[u]);
    ctx.exit_scope();
  }
  EXPECT_DOUBLE_EQ(domain.median_guides_per_scope(), 3.0);
  ctx.enter_scope();
  for (int u = 0; u < 5; ++u) ctx.record_guide_use(cells[u]);
  ctx.exit_scope();
  EXPECT_DOUBLE_EQ(domain.median_guides_per_scope(), 4.0);
}

TEST(ScopeDomain, DistinctThreadsGetDistinctSlots) {
  GuideArena arena;
  ScopeDomain domain{arena};
  std::size_t a = 0;
  std::size_t b = 0;
  std::barrier both{2};
  {
    std::jthread t1{[&] {
      a = domain.local().tai_slot();
      both.arrive_and_wait();
    }};
    std::jthread t2{[&] {
      b = domain.local().tai_slot();
      both.arrive_and_wait();
    }};
  }
  EXPECT_NE(a, b);
}
