#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "objspace/regions.hpp"

using namespace objspace;

namespace {

RegionConfig small_config() { return RegionConfig::uniform(std::uint64_t{64} << 20); }

}  // namespace

TEST(Regions, LayoutIsNewHotColdBackToBack) {
  RegionSet r{small_config()};
  const std::uint64_t len = std::uint64_t{64} << 20;
  EXPECT_EQ(r.base(HeapId::kNew), 0U);
  EXPECT_EQ(r.base(HeapId::kHot), len);
  EXPECT_EQ(r.base(HeapId::kCold), 2 * len);
  EXPECT_EQ(r.heap_of(len + 5), HeapId::kHot);
  EXPECT_THROW((void)r.heap_of(3 * len), std::out_of_range);
  EXPECT_FALSE(r.find_heap(3 * len).has_value());
}

TEST(Regions, RejectsInvalidConfigs) {
  RegionConfig c = small_config();
  c.page_size = 3000;
  EXPECT_THROW(RegionSet{c}, std::invalid_argument);
  RegionConfig d = small_config();
  d.size_classes = {48};
  EXPECT_THROW(RegionSet{d}, std::invalid_argument);
  RegionConfig e = RegionConfig::uniform(std::uint64_t{1} << 47);
  EXPECT_THROW(RegionSet{e}, std::invalid_argument);
}

TEST(Regions, SmallestFittingSizeClass) {
  RegionSet r{small_config()};
  EXPECT_EQ(r.slot_size(r.allocate(HeapId::kNew, 1)), 16U);
  EXPECT_EQ(r.slot_size(r.allocate(HeapId::kNew, 16)), 16U);
  EXPECT_EQ(r.slot_size(r.allocate(HeapId::kNew, 17)), 32U);
  EXPECT_EQ(r.slot_size(r.allocate(HeapId::kNew, 1024)), 1024U);
  EXPECT_EQ(r.slot_size(r.allocate(HeapId::kNew, 65536)), 65536U);
  EXPECT_THROW((void)r.allocate(HeapId::kNew, 65537), std::invalid_argument);
}

TEST(Regions, LowestAddressFirstReuse) {
  RegionSet r{small_config()};
  std::vector<Locator> locs;
  for (int i = 0; i < 8; ++i) locs.push_back(r.allocate(HeapId::kHot, 100));
  EXPECT_TRUE(std::is_sorted(locs.begin(), locs.end()));
  r.free(locs[5]);
  r.free(locs[2]);
  EXPECT_EQ(r.allocate(HeapId::kHot, 100), locs[2]);
  EXPECT_EQ(r.allocate(HeapId::kHot, 100), locs[5]);
}

TEST(Regions, DoubleFreeAndBadLocatorFault) {
  RegionSet r{small_config()};
  const Locator a = r.allocate(HeapId::kCold, 64);
  r.free(a);
  EXPECT_THROW(r.free(a), SlotFault);
  EXPECT_THROW(r.free(a + 1), SlotFault);
  EXPECT_THROW(r.free(r.base(HeapId::kCold) + (std::uint64_t{32} << 20)), SlotFault);
}

TEST(Regions, BytesRoundTripAndLiveness) {
  RegionSet r{small_config()};
  const Locator a = r.allocate(HeapId::kNew, 5);
  auto span = r.bytes(a);
  ASSERT_EQ(span.size(), 5U);
  std::fill(span.begin(), span.end(), std::byte{0x7f});
  EXPECT_EQ(std::as_const(r).bytes(a)[4], std::byte{0x7f});
  EXPECT_TRUE(r.is_live(a));
  r.free(a);
  EXPECT_FALSE(r.is_live(a));
}

TEST(Regions, ExhaustionIsReported) {
  RegionConfig c = RegionConfig::uniform(std::uint64_t{64} << 10);  // one extent per heap
  RegionSet r{c};
  const Locator first = r.allocate(HeapId::kNew, 65536);
  EXPECT_FALSE(r.try_allocate(HeapId::kNew, 65536).has_value());
  EXPECT_THROW((void)r.allocate(HeapId::kNew, 16), RegionExhausted);
  r.free(first);
  // Extents keep their size class, so only the same class can reuse the space.
  EXPECT_FALSE(r.try_allocate(HeapId::kNew, 16).has_value());
  EXPECT_EQ(r.allocate(HeapId::kNew, 40000), first);
}

TEST(Regions, PageStatsMatchOracle) {
  RegionSet r{small_config()};
  std::mt19937_64 rng{5};
  std::map<Locator, std::uint32_t> live;
  for (int i = 0; i < 3000; ++i) {
    if (!live.empty() && rng() % 3 == 0) {
      auto it = live.begin();
      std::advance(it, static_cast<long>(rng() % live.size()));
      r.free(it->first);
      live.erase(it);
    } else {
      const auto len = static_cast<std::uint32_t>(rng() % 5000);
      live.emplace(r.allocate(HeapId::kHot, len), len);
    }
  }
  // Oracle: distribute each payload's bytes over the pages it overlaps.
  std::map<std::uint64_t, std::uint64_t> bytes_per_page;
  for (const auto& [loc, len] : live) {
    for (std::uint64_t b = loc; b < loc + len; ++b) ++bytes_per_page[b / 4096];
  }
  std::uint64_t total = 0;
  for (const auto& [p, n] : bytes_per_page) total += n;
  const PageStats s = r.page_stats(HeapId::kHot);
  EXPECT_EQ(s.live_bytes, total);

  std::array<std::uint64_t, 11> hist{};
  for (const PageInfo& info : r.pages(HeapId::kHot)) {
    const auto it = bytes_per_page.find(info.page);
    const std::uint64_t expect = it == bytes_per_page.end() ? 0 : it->second;
    ASSERT_EQ(info.live_bytes, expect) << "page " << info.page;
    std::size_t bucket = 0;
    while (bucket < 10 && expect * 10 > bucket * std::uint64_t{4096}) ++bucket;
    ++hist[bucket];
  }
  EXPECT_EQ(s.occupancy_histogram, hist);
  const RegionAudit audit = r.audit();
  EXPECT_TRUE(audit.ok) << audit.problem;
  EXPECT_EQ(audit.live_slots, live.size());
}

TEST(Regions, PageSpan) {
  RegionSet r{small_config()};
  EXPECT_EQ(r.page_span(0, 0), (std::pair<std::uint64_t, std::uint64_t>{0, 1}));
  EXPECT_EQ(r.page_span(4000, 96), (std::pair<std::uint64_t, std::uint64_t>{0, 1}));
  EXPECT_EQ(r.page_span(4000, 97), (std::pair<std::uint64_t, std::uint64_t>{0, 2}));
  EXPECT_EQ(r.page_span(8192, 8192), (std::pair<std::uint64_t, std::uint64_t>{2, 4}));
}

TEST(Regions, CoalescePages) {
  const std::vector<std::uint64_t> pages{1, 2, 3, 7, 9, 10};
  const auto runs = coalesce_pages(pages);
  const std::vector<std::pair<std::uint64_t, std::uint64_t>> expect{{1, 4}, {7, 8}, {9, 11}};
  EXPECT_EQ(runs, expect);
  EXPECT_TRUE(coalesce_pages({}).empty());
}

TEST(Regions, PageoutHintsDropResidencyOfCoveredPages) {
  RegionSet r{small_config()};
  std::vector<Locator> locs;
  for (int i = 0; i < 12; ++i) locs.push_back(r.allocate(HeapId::kCold, 4096));
  const PageStats before = r.page_stats(HeapId::kCold);
  EXPECT_EQ(before.resident_pages, 12U);
  const auto events = r.emit_hints(
      HeapId::kCold, HintKind::kPageoutAdvice, [](const PageInfo& p) { return p.live_slots > 0; },
      3);
  ASSERT_EQ(events.size(), 1U);
  EXPECT_EQ(events[0].start_page, r.base(HeapId::kCold) / 4096);
  EXPECT_EQ(events[0].end_page, r.base(HeapId::kCold) / 4096 + 12);
  EXPECT_EQ(events[0].issued_at_window, 3U);
  EXPECT_EQ(r.page_stats(HeapId::kCold).resident_pages, 0U);
  EXPECT_EQ(format_hint(events[0]), "3,COLD,PAGEOUT_ADVICE," +
                                        std::to_string(events[0].start_page) + "," +
                                        std::to_string(events[0].end_page));
}

TEST(Regions, ColdAdviceKeepsResidency) {
  RegionSet r{small_config()};
  (void)r.allocate(HeapId::kCold, 4096);
  const auto events = r.emit_hints(
      HeapId::kCold, HintKind::kColdAdvice, [](const PageInfo& p) { return p.live_slots > 0; }, 0);
  EXPECT_EQ(events.size(), 1U);
  EXPECT_EQ(r.page_stats(HeapId::kCold).resident_pages, 1U);
}

TEST(Regions, ReclaimEmptyPages) {
  RegionSet r{small_config()};
  const Locator a = r.allocate(HeapId::kNew, 4096);
  const Locator b = r.allocate(HeapId::kNew, 4096);
  r.free(a);
  EXPECT_EQ(r.reclaim_empty_pages(), 1U);
  EXPECT_EQ(r.reclaim_empty_pages(), 0U);
  EXPECT_EQ(r.page_stats(HeapId::kNew).resident_pages, 1U);
  EXPECT_TRUE(r.is_live(b));
  // Reallocation makes the page resident again.
  EXPECT_EQ(r.allocate(HeapId::kNew, 4096), a);
  EXPECT_EQ(r.page_stats(HeapId::kNew).resident_pages, 2U);
}

TEST(Regions, HintKindNames) {
  EXPECT_EQ(hint_kind_name(HintKind::kColdAdvice), "COLD_ADVICE");
  EXPECT_EQ(hint_kind_name(HintKind::kPageoutAdvice), "PAGEOUT_ADVICE");
  EXPECT_EQ(hint_kind_name(HintKind::kHugepageAdvice), "HUGEPAGE_ADVICE");
}
