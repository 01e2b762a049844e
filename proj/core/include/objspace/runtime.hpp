#pragma once

/// \file
/// The managed-object runtime: heap regions, guide arena, SODA bitmap and
/// scope domain wired together, plus the object lifecycle operations the
/// stores use (create, access, replace, destroy).

#include <atomic>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "objspace/guide_arena.hpp"
#include "objspace/guide_word.hpp"
#include "objspace/regions.hpp"
#include "objspace/scope.hpp"
#include "objspace/soda.hpp"

namespace objspace {

struct RuntimeConfig {
  RegionConfig regions{};
  std::size_t soda_block_cells = SodaBitmap::kDefaultBlockCells;
  /// Off = baseline mode: no scopes, no ATC, no accessed-bit updates.
  bool guides_enabled = true;
  /// Record every object touch for page-utilization analysis.
  bool trace_accesses = false;
};

/// Word stored in a destroyed guide. Keeps the ATC bits so that open scopes
/// can still balance their decrements.
[[nodiscard]] constexpr std::uint64_t tombstone_of(std::uint64_t word) noexcept {
  return (word & guide_layout::kAtcMask) |
         (std::uint64_t{static_cast<std::uint8_t>(HeapId::kReserved)} << guide_layout::kHeapShift);
}
[[nodiscard]] constexpr bool is_tombstone(std::uint64_t word) noexcept {
  return heap_of(word) == HeapId::kReserved;
}

struct ObjectRecord {
  CellIndex cell;
  HeapId heap;
  Locator locator;
  std::uint32_t length;
  std::uint64_t checksum;
};

struct RuntimeAudit {
  bool ok{true};
  std::string problem;
  std::array<std::uint64_t, kManagedHeapCount> objects_per_heap{};
  std::array<std::uint64_t, kManagedHeapCount> bytes_per_heap{};
  [[nodiscard]] std::uint64_t objects() const noexcept {
    return objects_per_heap[0] + objects_per_heap[1] + objects_per_heap[2];
  }
};

/// FNV-1a over a payload; used for conservation audits and self-checking values.
[[nodiscard]] std::uint64_t payload_checksum(std::span<const std::byte> bytes) noexcept;

class Runtime {
 public:
  explicit Runtime(RuntimeConfig config = {});
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  [[nodiscard]] const RuntimeConfig& config() const noexcept { return config_; }
  [[nodiscard]] bool guides_enabled() const noexcept { return config_.guides_enabled; }
  [[nodiscard]] RegionSet& regions() noexcept { return regions_; }
  [[nodiscard]] const RegionSet& regions() const noexcept { return regions_; }
  [[nodiscard]] GuideArena& arena() noexcept { return arena_; }
  [[nodiscard]] SodaBitmap& soda() noexcept { return soda_; }
  [[nodiscard]] const SodaBitmap& soda() const noexcept { return soda_; }
  [[nodiscard]] ScopeDomain& scopes() noexcept { return scopes_; }
  [[nodiscard]] ThreadContext& local() { return scopes_.local(); }

  /// Copies \p bytes into a fresh slot of \p heap and returns a new guide
  /// (accessed = 0) whose SODA bit is set.
  [[nodiscard]] CellIndex create_object(HeapId heap, std::span<const std::byte> bytes);

  /// Resolves a guide inside an open scope: registers the use, sets the
  /// accessed flag and returns the payload. The view is valid until the
  /// outermost scope exits.
  [[nodiscard]] std::span<const std::byte> access(ThreadContext& ctx, CellIndex cell);

  /// Publishes a new NEW-heap copy holding \p bytes and retires the old slot.
  void replace_object(ThreadContext& ctx, CellIndex cell, std::span<const std::byte> bytes);

  /// Tombstones the guide and retires its slot. Returns false if it was
  /// already destroyed. The cell returns to the arena when the scope closes.
  bool destroy_object(ThreadContext& ctx, CellIndex cell);

  /// Frees \p locator, or defers it if the collector is copying from it.
  void retire_slot(Locator locator);

  // Collector side of the copy hazard.
  void publish_copy_hazard(Locator locator) noexcept {
    copy_hazard_.store(locator, std::memory_order_seq_cst);
  }
  void clear_copy_hazard() noexcept { copy_hazard_.store(kNoHazard, std::memory_order_seq_cst); }
  std::size_t drain_deferred_frees();

  /// Every live object reachable through SODA. Requires quiescence.
  [[nodiscard]] std::vector<ObjectRecord> snapshot_objects();

  /// Cross-checks SODA, guide words, region ranges and slot liveness.
  /// Requires quiescence (no open scopes, collector idle).
  [[nodiscard]] RuntimeAudit audit();

 private:
  static constexpr Locator kNoHazard = ~Locator{0};

  RuntimeConfig config_;
  RegionSet regions_;
  GuideArena arena_;
  SodaBitmap soda_;
  ScopeDomain scopes_;
  std::atomic<Locator> copy_hazard_{kNoHazard};
  std::mutex deferred_mutex_;
  std::vector<Locator> deferred_frees_;
};

}  // namespace objspace
