#include "objspace/metrics.hpp"

#include <algorithm>
#include <bit>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace objspace {

void append_touch(std::vector<AccessLogEntry>& log, std::uint64_t window, Locator locator,
                  std::uint32_t length, std::uint32_t page_size) {
  // A zero-length payload still touches the line holding its slot.
  const std::uint64_t end = locator + std::max<std::uint32_t>(length, 1);
  std::uint64_t cur = locator;
  while (cur < end) {
    const std::uint64_t page = cur / page_size;
    const std::uint64_t page_end = std::min(end, (page + 1) * page_size);
    const auto first = static_cast<std::uint32_t>((cur % page_size) / kCacheLineSize);
    const auto last = static_cast<std::uint32_t>(((page_end - 1) % page_size) / kCacheLineSize);
    log.push_back({window, page, first, last - first + 1});
    cur = page_end;
  }
}

std::vector<AccessLogEntry> touches_to_log(std::span<const TouchRecord> touches,
                                           std::uint64_t window, std::uint32_t page_size) {
  std::vector<AccessLogEntry> log;
  log.reserve(touches.size());
  for (const TouchRecord& t : touches) append_touch(log, window, t.locator, t.length, page_size);
  return log;
}

UtilizationReport page_utilization(std::span<const AccessLogEntry> log, std::uint32_t page_size) {
  if (page_size == 0 || page_size % kCacheLineSize != 0) {
    throw std::invalid_argument("page size must be a positive multiple of 64");
  }
  const std::uint32_t lines = page_size / kCacheLineSize;
  const std::size_t words = (lines + 63) / 64;
  std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> masks;
  for (const AccessLogEntry& e : log) {
    if (e.line_count == 0) continue;
    if (std::uint64_t{e.first_line} + e.line_count > lines) {
      throw std::out_of_range("access log entry exceeds its page");
    }
    auto& mask = masks.try_emplace(e.page, words, 0).first->second;
    for (std::uint32_t l = e.first_line; l < e.first_line + e.line_count; ++l) {
      mask[l / 64] |= std::uint64_t{1} << (l % 64);
    }
  }

  UtilizationReport report;
  std::uint64_t touched_lines = 0;
  for (const auto& [page, mask] : masks) {
    std::uint64_t n = 0;
    for (const std::uint64_t w : mask) n += static_cast<std::uint64_t>(std::popcount(w));
    touched_lines += n;
    report.per_page.emplace(page, static_cast<double>(n) / lines);
  }
  if (masks.empty()) return report;
  report.aggregate = static_cast<double>(touched_lines) /
                     (static_cast<double>(masks.size()) * static_cast<double>(lines));

  std::vector<double> values;
  values.reserve(report.per_page.size());
  for (const auto& [page, u] : report.per_page) values.push_back(u);
  std::sort(values.begin(), values.end());
  const auto total = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    report.cdf.emplace_back(values[i], static_cast<double>(i + 1) / total);
  }
  return report;
}

void write_cdf_csv(std::ostream& out, const UtilizationReport& report) {
  out << "utilization,cum_fraction\n";
  for (const auto& [u, f] : report.cdf) out << u << ',' << f << '\n';
}

double HeapByteDistribution::fraction_live(HeapId heap) const noexcept {
  const std::uint64_t total = total_live();
  if (total == 0) return 0.0;
  return static_cast<double>(live_bytes[static_cast<int>(heap)]) / static_cast<double>(total);
}

HeapByteDistribution heap_byte_distribution(const RegionSet& regions) {
  HeapByteDistribution d;
  for (int h = 0; h < kManagedHeapCount; ++h) {
    const PageStats s = regions.page_stats(static_cast<HeapId>(h));
    d.live_bytes[h] = s.live_bytes;
    d.resident_bytes[h] = s.resident_pages * regions.page_size();
  }
  return d;
}

ReclaimOutcome simulate_reclaim(std::span<const std::uint64_t> reclaimed_pages,
                                std::span<const AccessLogEntry> subsequent_log,
                                double elapsed_seconds) {
  ReclaimOutcome out;
  std::unordered_set<std::uint64_t> reclaimed(reclaimed_pages.begin(), reclaimed_pages.end());
  out.reclaimed_pages = reclaimed.size();
  for (const AccessLogEntry& e : subsequent_log) {
    if (reclaimed.erase(e.page) != 0) ++out.refaults;
  }
  if (out.reclaimed_pages > 0 && elapsed_seconds > 0) {
    out.refault_rate_per_minute = static_cast<double>(out.refaults) /
                                  static_cast<double>(out.reclaimed_pages) *
                                  (60.0 / elapsed_seconds);
  }
  return out;
}

std::vector<std::uint64_t> hinted_pages(std::span<const HintEvent> hints) {
  std::set<std::uint64_t> pages;
  for (const HintEvent& h : hints) {
    for (std::uint64_t p = h.start_page; p < h.end_page; ++p) pages.insert(p);
  }
  return {pages.begin(), pages.end()};
}

}  // namespace objspace
