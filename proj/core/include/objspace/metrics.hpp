#pragma once

/// \file
/// Layout-quality metrics: per-window page utilization at 64-byte line
/// granularity, per-heap byte distribution and simulated reclaim/refault
/// analysis.

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "objspace/regions.hpp"
#include "objspace/scope.hpp"

namespace objspace {

inline constexpr std::uint32_t kCacheLineSize = 64;

/// Touched lines [first_line, first_line + line_count) of one page.
struct AccessLogEntry {
  std::uint64_t window;
  std::uint64_t page;
  std::uint32_t first_line;
  std::uint32_t line_count;

  friend bool operator==(const AccessLogEntry&, const AccessLogEntry&) = default;
};

struct UtilizationReport {
  std::map<std::uint64_t, double> per_page;
  double aggregate{0};
  /// (utilization, cumulative fraction of touched pages), ascending.
  std::vector<std::pair<double, double>> cdf;
};

/// Splits one object touch into per-page line ranges.
void append_touch(std::vector<AccessLogEntry>& log, std::uint64_t window, Locator locator,
                  std::uint32_t length, std::uint32_t page_size);

[[nodiscard]] std::vector<AccessLogEntry> touches_to_log(std::span<const TouchRecord> touches,
                                                         std::uint64_t window,
                                                         std::uint32_t page_size);

/// Aggregate = sum of touched bytes (unique lines x 64) over touched pages
/// divided by their total capacity. Untouched pages are excluded.
[[nodiscard]] UtilizationReport page_utilization(std::span<const AccessLogEntry> log,
                                                 std::uint32_t page_size);

/// `utilization,cum_fraction` with a header line.
void write_cdf_csv(std::ostream& out, const UtilizationReport& report);

struct HeapByteDistribution {
  std::array<std::uint64_t, kManagedHeapCount> live_bytes{};
  std::array<std::uint64_t, kManagedHeapCount> resident_bytes{};
  [[nodiscard]] std::uint64_t total_live() const noexcept {
    return live_bytes[0] + live_bytes[1] + live_bytes[2];
  }
  [[nodiscard]] std::uint64_t total_resident() const noexcept {
    return resident_bytes[0] + resident_bytes[1] + resident_bytes[2];
  }
  [[nodiscard]] double fraction_live(HeapId heap) const noexcept;
};

[[nodiscard]] HeapByteDistribution heap_byte_distribution(const RegionSet& regions);

struct ReclaimOutcome {
  std::uint64_t reclaimed_pages{0};
  std::uint64_t refaults{0};
  double refault_rate_per_minute{0};
};

/// A refault is the first later access to a reclaimed page. The rate is
/// refaults per reclaimed page per minute of logical time.
[[nodiscard]] ReclaimOutcome simulate_reclaim(std::span<const std::uint64_t> reclaimed_pages,
                                              std::span<const AccessLogEntry> subsequent_log,
                                              double elapsed_seconds);

/// Pages covered by a set of hint events, ascending and unique.
[[nodiscard]] std::vector<std::uint64_t> hinted_pages(std::span<const HintEvent> hints);

}  // namespace objspace
