#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

#include "objspace/metrics.hpp"

using namespace objspace;

namespace {

struct Touch {
  Locator loc;
  std::uint32_t len;
};

// Brute force: enumerate every touched byte, map it to its line and page.
std::map<std::uint64_t, double> oracle_per_page(const std::vector<Touch>& touches,
                                                std::uint32_t page_size) {
  std::map<std::uint64_t, std::set<std::uint64_t>> lines;
  for (const Touch& t : touches) {
    const std::uint32_t len = t.len == 0 ? 1 : t.len;
    for (std::uint64_t b = t.loc; b < t.loc + len; ++b) lines[b / page_size].insert(b / 64);
  }
  std::map<std::uint64_t, double> out;
  for (const auto& [page, set] : lines) {
    out[page] = static_cast<double>(set.size() * 64) / page_size;
  }
  return out;
}

std::vector<AccessLogEntry> log_of(const std::vector<Touch>& touches, std::uint32_t page_size) {
  std::vector<AccessLogEntry> log;
  for (const Touch& t : touches) append_touch(log, 0, t.loc, t.len, page_size);
  return log;
}

}  // namespace

TEST(Utilization, SingleLineOfOnePage) {
  const std::vector<AccessLogEntry> log{{0, 5, 0, 1}};
  const UtilizationReport r = page_utilization(log, 4096);
  EXPECT_DOUBLE_EQ(r.per_page.at(5), 64.0 / 4096.0);
  EXPECT_DOUBLE_EQ(r.aggregate, 1.0 / 64.0);
}

TEST(Utilization, FullPageAndUntouchedPagesExcluded) {
  const std::vector<AccessLogEntry> log{{0, 1, 0, 64}, {0, 2, 3, 1}};
  const UtilizationReport r = page_utilization(log, 4096);
  EXPECT_EQ(r.per_page.size(), 2U);
  EXPECT_DOUBLE_EQ(r.per_page.at(1), 1.0);
  EXPECT_DOUBLE_EQ(r.aggregate, 65.0 / 128.0);
  EXPECT_EQ(r.per_page.count(0), 0U);
}

TEST(Utilization, EmptyLogIsZero) {
  const UtilizationReport r = page_utilization({}, 4096);
  EXPECT_EQ(r.aggregate, 0.0);
  EXPECT_TRUE(r.cdf.empty());
}

TEST(Utilization, RejectsBadInput) {
  EXPECT_THROW((void)page_utilization({}, 100), std::invalid_argument);
  const std::vector<AccessLogEntry> bad{{0, 0, 60, 8}};
  EXPECT_THROW((void)page_utilization(bad, 4096), std::out_of_range);
}

TEST(Utilization, AppendTouchSplitsAcrossPages) {
  std::vector<AccessLogEntry> log;
  append_touch(log, 3, 4090, 10, 4096);
  ASSERT_EQ(log.size(), 2U);
  EXPECT_EQ(log[0], (AccessLogEntry{3, 0, 63, 1}));
  EXPECT_EQ(log[1], (AccessLogEntry{3, 1, 0, 1}));
}

TEST(Utilization, OneLinePerPageIsOneSixtyFourth) {
  std::vector<Touch> touches;
  for (std::uint64_t p = 0; p < 1000; ++p) touches.push_back({p * 4096 + (p % 64) * 64, 8});
  EXPECT_DOUBLE_EQ(page_utilization(log_of(touches, 4096), 4096).aggregate, 1.0 / 64.0);
}

TEST(Utilization, RandomLogsMatchByteOracle) {
  std::mt19937_64 rng{99};
  for (int trial = 0; trial < 10000; ++trial) {
    const std::uint32_t page_size = trial % 2 == 0 ? 4096 : 8192;
    std::vector<Touch> touches(1 + rng() % 8);
    for (Touch& t : touches) t = {rng() % (6 * page_size), static_cast<std::uint32_t>(rng() % 9000)};
    const auto expect = oracle_per_page(touches, page_size);
    const UtilizationReport r = page_utilization(log_of(touches, page_size), page_size);
    ASSERT_EQ(r.per_page.size(), expect.size());
    double sum = 0;
    for (const auto& [page, u] : expect) {
      ASSERT_NEAR(r.per_page.at(page), u, 1e-12) << "trial " << trial;
      sum += u;
    }
    ASSERT_NEAR(r.aggregate, sum / static_cast<double>(expect.size()), 1e-12);
  }
}

TEST(Utilization, CdfIsMonotoneAndEndsAtOne) {
  std::mt19937_64 rng{8};
  std::vector<Touch> touches;
  for (int i = 0; i < 500; ++i) touches.push_back({rng() % (1 << 22), static_cast<std::uint32_t>(rng() % 300)});
  const UtilizationReport r = page_utilization(log_of(touches, 4096), 4096);
  ASSERT_FALSE(r.cdf.empty());
  for (std::size_t i = 1; i < r.cdf.size(); ++i) {
    EXPECT_LT(r.cdf[i - 1].first, r.cdf[i].first);
    EXPECT_LT(r.cdf[i - 1].second, r.cdf[i].second);
  }
  EXPECT_DOUBLE_EQ(r.cdf.back().second, 1.0);
  EXPECT_GT(r.cdf.front().first, 0.0);

  std::ostringstream csv;
  write_cdf_csv(csv, r);
  EXPECT_EQ(csv.str().rfind("utilization,cum_fraction\n", 0), 0U);
}

TEST(Utilization, TouchesToLogMatchesAppend) {
  const std::vector<TouchRecord> touches{{100, 50}, {8190, 4}};
  const auto log = touches_to_log(touches, 7, 4096);
  std::vector<AccessLogEntry> expect;
  append_touch(expect, 7, 100, 50, 4096);
  append_touch(expect, 7, 8190, 4, 4096);
  EXPECT_EQ(log, expect);
}

TEST(Reclaim, CountsFirstRefaultPerPage) {
  const std::vector<std::uint64_t> pages{1, 2, 3, 4};
  const std::vector<AccessLogEntry> later{{5, 2, 0, 1}, {5, 2, 1, 1}, {6, 4, 0, 1}, {6, 9, 0, 1}};
  const ReclaimOutcome o = simulate_reclaim(pages, later, 480);
  EXPECT_EQ(o.reclaimed_pages, 4U);
  EXPECT_EQ(o.refaults, 2U);
  EXPECT_DOUBLE_EQ(o.refault_rate_per_minute, 0.5 / 8.0);
}

TEST(Reclaim, NoPagesOrNoTimeGivesZeroRate) {
  EXPECT_EQ(simulate_reclaim({}, {}, 60).refault_rate_per_minute, 0.0);
  const std::vector<std::uint64_t> pages{1};
  const std::vector<AccessLogEntry> later{{0, 1, 0, 1}};
  EXPECT_EQ(simulate_reclaim(pages, later, 0).refault_rate_per_minute, 0.0);
}

TEST(Reclaim, HintedPagesAreUniqueAndSorted) {
  const std::vector<HintEvent> hints{{HintKind::kPageoutAdvice, HeapId::kCold, 10, 13, 0},
                                     {HintKind::kPageoutAdvice, HeapId::kCold, 12, 15, 1}};
  EXPECT_EQ(hinted_pages(hints), (std::vector<std::uint64_t>{10, 11, 12, 13, 14}));
}

TEST(HeapDistribution, MatchesRegionStats) {
  RegionSet r{RegionConfig::uniform(std::uint64_t{64} << 20)};
  (void)r.allocate(HeapId::kNew, 1000);
  (void)r.allocate(HeapId::kCold, 3000);
  (void)r.allocate(HeapId::kCold, 4000);
  const HeapByteDistribution d = heap_byte_distribution(r);
  EXPECT_EQ(d.live_bytes[0], 1000U);
  EXPECT_EQ(d.live_bytes[1], 0U);
  EXPECT_EQ(d.live_bytes[2], 7000U);
  EXPECT_DOUBLE_EQ(d.fraction_live(HeapId::kCold), 0.875);
  EXPECT_EQ(d.total_resident() % 4096, 0U);
  EXPECT_GE(d.total_resident(), d.total_live());
}
