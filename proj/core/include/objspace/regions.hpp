#pragma once

/// \file
/// Spatially-aware arena allocator: one contiguous reserved range per heap
/// temperature, size-class sub-allocation inside each range, and per-page
/// occupancy and residency accounting.
///
/// Ranges are reserved in a managed offset space, not in the process address
/// space. Backing storage is materialized one extent at a time when a size
/// class first needs it. Residency is simulated: a page becomes resident when
/// an allocation first places payload bytes on it and stops being resident
/// when a PAGEOUT hint (or the empty-page sweep) covers it.

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "objspace/guide_word.hpp"

namespace objspace {

inline constexpr std::uint32_t kDefaultPageSize = 4096;
inline constexpr std::uint64_t kDefaultRegionLength = std::uint64_t{4} << 30;

/// Powers of two from 16 B to 64 KiB.
[[nodiscard]] std::vector<std::uint32_t> default_size_classes();

struct RegionConfig {
  std::array<std::uint64_t, kManagedHeapCount> region_length{
      kDefaultRegionLength, kDefaultRegionLength, kDefaultRegionLength};
  std::vector<std::uint32_t> size_classes = default_size_classes();
  std::uint32_t page_size = kDefaultPageSize;
  /// Also issue real madvise() calls for hints where the OS supports them.
  bool platform_advice = false;

  [[nodiscard]] static RegionConfig uniform(std::uint64_t length_per_heap) {
    RegionConfig config;
    config.region_length.fill(length_per_heap);
    return config;
  }
};

enum class HintKind : std::uint8_t { kColdAdvice, kPageoutAdvice, kHugepageAdvice };

[[nodiscard]] std::string_view hint_kind_name(HintKind kind) noexcept;

/// Page numbers are global (locator / page size), half-open [start, end).
struct HintEvent {
  HintKind kind;
  HeapId heap;
  std::uint64_t start_page;
  std::uint64_t end_page;
  std::uint64_t issued_at_window;

  friend bool operator==(const HintEvent&, const HintEvent&) = default;
};

/// One hint-log record: `window,heap,kind,start_page,end_page`.
[[nodiscard]] std::string format_hint(const HintEvent& event);

/// Coalesces strictly increasing page numbers into maximal half-open runs.
[[nodiscard]] std::vector<std::pair<std::uint64_t, std::uint64_t>> coalesce_pages(
    std::span<const std::uint64_t> sorted_pages);

struct PageInfo {
  std::uint64_t page;  // global page number
  std::uint64_t live_bytes;
  std::uint32_t live_slots;
  bool resident;
};

struct PageStats {
  std::uint64_t total_pages{0};
  std::uint64_t resident_pages{0};
  std::uint64_t live_bytes{0};
  /// Bucket 0 holds empty pages; bucket k holds occupancy in ((k-1)/10, k/10].
  std::array<std::uint64_t, 11> occupancy_histogram{};
};

struct RegionAudit {
  bool ok{true};
  std::string problem;
  std::uint64_t live_slots{0};
  std::uint64_t live_bytes{0};
};

class RegionExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad locator or double free.
class SlotFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class HeapRegion;

/// The three heap regions, laid out back to back from offset 0 in the order
/// NEW, HOT, COLD.
class RegionSet {
 public:
  explicit RegionSet(RegionConfig config);
  ~RegionSet();
  RegionSet(const RegionSet&) = delete;
  RegionSet& operator=(const RegionSet&) = delete;

  [[nodiscard]] const RegionConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::uint32_t page_size() const noexcept { return config_.page_size; }
  [[nodiscard]] std::uint32_t max_size_class() const noexcept {
    return config_.size_classes.back();
  }
  [[nodiscard]] Locator base(HeapId heap) const;
  [[nodiscard]] std::uint64_t length(HeapId heap) const;

  /// Range lookup; throws std::out_of_range outside every region.
  [[nodiscard]] HeapId heap_of(Locator locator) const;
  [[nodiscard]] std::optional<HeapId> find_heap(Locator locator) const noexcept;

  /// Lowest-addressed free slot of the smallest size class that fits.
  [[nodiscard]] std::optional<Locator> try_allocate(HeapId heap, std::uint32_t payload_length);
  /// As try_allocate(), throwing RegionExhausted when the region is full.
  [[nodiscard]] Locator allocate(HeapId heap, std::uint32_t payload_length);
  void free(Locator locator);

  /// Payload bytes of a live slot.
  [[nodiscard]] std::span<std::byte> bytes(Locator locator);
  [[nodiscard]] std::span<const std::byte> bytes(Locator locator) const;
  [[nodiscard]] std::uint32_t payload_length(Locator locator) const;
  [[nodiscard]] std::uint32_t slot_size(Locator locator) const;
  [[nodiscard]] bool is_live(Locator locator) const;

  [[nodiscard]] PageStats page_stats(HeapId heap) const;
  /// Every page of every materialized extent, ascending.
  [[nodiscard]] std::vector<PageInfo> pages(HeapId heap) const;

  /// Coalesces eligible pages into maximal ranges. PAGEOUT additionally drops
  /// residency of the covered pages.
  std::vector<HintEvent> emit_hints(HeapId heap, HintKind kind,
                                    const std::function<bool(const PageInfo&)>& eligible,
                                    std::uint64_t window);

  /// Drops residency of resident pages that hold no live slot. Returns the
  /// number of pages released.
  std::uint64_t reclaim_empty_pages();

  /// Full walk recomputing per-page accounting from the slot tables.
  [[nodiscard]] RegionAudit audit() const;

  /// Global pages spanned by the payload at \p locator (at least one).
  [[nodiscard]] std::pair<std::uint64_t, std::uint64_t> page_span(Locator locator,
                                                                  std::uint32_t length) const;

 private:
  HeapRegion& region(HeapId heap);
  const HeapRegion& region(HeapId heap) const;
  HeapRegion& region_for(Locator locator);
  const HeapRegion& region_for(Locator locator) const;

  RegionConfig config_;
  std::array<std::unique_ptr<HeapRegion>, kManagedHeapCount> regions_;
};

}  // namespace objspace
