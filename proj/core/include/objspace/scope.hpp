#pragma once

/// \file
/// Thread-local active scope guards and the structures behind them.
///
/// A thread opens a scope when it enters a public data-structure operation
/// and closes it when the outermost such operation returns. While tracking is
/// enabled (epoch phase PREPARE or ACTIVE) the first use of each guide inside
/// the scope increments that guide's ATC, and the outermost exit decrements
/// each of those counts exactly once. Entry and exit also maintain the
/// Thread Activity Index (TAI) the collector polls to detect epoch
/// convergence.

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "objspace/guide_arena.hpp"
#include "objspace/guide_word.hpp"

namespace objspace {

/// Compact set of 48-bit values stored as groups of up to 16 32-bit deltas
/// from a shared base. Groups are kept sorted by base.
class BaseDeltaSet {
 public:
  static constexpr std::size_t kGroupCapacity = 16;
  static constexpr std::uint64_t kDeltaSpan = std::uint64_t{1} << 32;

  struct alignas(64) Group {
    std::uint64_t base{0};
    std::uint32_t count{0};
    std::array<std::uint32_t, kGroupCapacity> deltas{};
  };
  static_assert(sizeof(Group) <= 128, "a group must fit two cache lines");

  /// Returns true if \p value was not already present. Requires value < 2^48.
  bool insert(std::uint64_t value);
  [[nodiscard]] bool contains(std::uint64_t value) const noexcept;
  void clear() noexcept {
    groups_.clear();
    size_ = 0;
  }
  [[nodiscard]] std::size_t size() const noexcept { return size_; }
  [[nodiscard]] bool empty() const noexcept { return size_ == 0; }
  [[nodiscard]] const std::vector<Group>& groups() const noexcept { return groups_; }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const Group& g : groups_) {
      for (std::uint32_t i = 0; i < g.count; ++i) fn(g.base + g.deltas[i]);
    }
  }

 private:
  std::vector<Group> groups_;
  std::size_t size_{0};
};

enum class EpochPhase : std::uint8_t { kInactive = 0, kPrepare = 1, kActive = 2 };

[[nodiscard]] std::string_view phase_name(EpochPhase phase) noexcept;

struct EpochSnapshot {
  std::uint64_t epoch;
  EpochPhase phase;
  [[nodiscard]] bool tracking() const noexcept { return phase != EpochPhase::kInactive; }
};

/// Global epoch counter and phase, published together in one word.
class EpochState {
 public:
  [[nodiscard]] EpochSnapshot load() const noexcept {
    const std::uint64_t w = word_.load(std::memory_order_seq_cst);
    return {w >> 2, static_cast<EpochPhase>(w & 3)};
  }
  void store(EpochSnapshot s) noexcept {
    word_.store((s.epoch << 2) | static_cast<std::uint64_t>(s.phase), std::memory_order_seq_cst);
  }

 private:
  std::atomic<std::uint64_t> word_{0};
};

/// Fixed array of {epoch, activeCount} slots indexed by a hash of the thread
/// identity. Threads that collide share a slot; the slot then reports the
/// oldest epoch among its active threads until it drains.
class ThreadActivityIndex {
 public:
  static constexpr std::size_t kSlots = 256;
  static constexpr unsigned kCountBits = 24;

  struct Slot {
    std::uint64_t epoch;
    std::uint32_t active_count;
  };

  /// Registers one more active scope in \p slot, observed at \p epoch.
  void enter(std::size_t slot, std::uint64_t epoch) noexcept;
  /// Unregisters one active scope; the slot epoch is left untouched.
  void exit(std::size_t slot);
  [[nodiscard]] Slot read(std::size_t slot) const noexcept {
    return unpack(slots_[slot].word.load(std::memory_order_seq_cst));
  }
  /// True when every slot with active threads reports \p epoch.
  [[nodiscard]] bool converged(std::uint64_t epoch) const noexcept;
  [[nodiscard]] std::uint64_t total_active() const noexcept;

 private:
  static constexpr std::uint64_t kCountMask = (std::uint64_t{1} << kCountBits) - 1;
  static Slot unpack(std::uint64_t w) noexcept {
    return {w >> kCountBits, static_cast<std::uint32_t>(w & kCountMask)};
  }

  struct alignas(64) PaddedSlot {
    std::atomic<std::uint64_t> word{0};
  };
  std::array<PaddedSlot, kSlots> slots_{};
};

struct TouchRecord {
  Locator locator;
  std::uint32_t length;
};

class ScopeDomain;

/// Per-thread scope state. Strictly thread-confined apart from the touch
/// buffer, which the driver drains between windows.
class ThreadContext {
 public:
  static constexpr std::size_t kGuideHistogramBuckets = 65;

  ThreadContext(ScopeDomain& domain, std::uint32_t ordinal);
  ThreadContext(const ThreadContext&) = delete;
  ThreadContext& operator=(const ThreadContext&) = delete;

  void enter_scope();
  void record_guide_use(CellIndex cell);
  void exit_scope();

  /// Queues \p cell for release to the arena once the outermost scope exits
  /// and all of its ATC decrements have been applied.
  void defer_cell_release(CellIndex cell);

  /// Appends to the touch buffer when access tracing is on.
  void note_touch(Locator locator, std::uint32_t length);
  std::vector<TouchRecord> drain_touches();

  [[nodiscard]] std::uint32_t depth() const noexcept { return depth_; }
  [[nodiscard]] bool tracking() const noexcept { return tracking_; }
  [[nodiscard]] std::uint64_t epoch_at_entry() const noexcept { return epoch_at_entry_; }
  [[nodiscard]] std::size_t tai_slot() const noexcept { return tai_slot_; }
  [[nodiscard]] const BaseDeltaSet& used_guides() const noexcept { return used_; }
  [[nodiscard]] const std::vector<CellIndex>& atc_recorded() const noexcept {
    return atc_recorded_;
  }

  [[nodiscard]] std::uint64_t outermost_scopes() const noexcept {
    return outermost_scopes_.load(std::memory_order_relaxed);
  }
  [[nodiscard]] std::array<std::uint64_t, kGuideHistogramBuckets> guide_histogram() const;
  [[nodiscard]] std::uint64_t saturated_increments() const noexcept {
    return saturated_.load(std::memory_order_relaxed);
  }

 private:
  ScopeDomain& domain_;
  std::uint32_t ordinal_;
  std::size_t tai_slot_;
  std::uint32_t depth_{0};
  std::uint64_t epoch_at_entry_{0};
  bool tracking_{false};
  BaseDeltaSet used_;
  std::vector<CellIndex> atc_recorded_;
  std::vector<CellIndex> pending_release_;
  std::chrono::steady_clock::time_point entered_at_{};

  std::atomic<std::uint64_t> outermost_scopes_{0};
  std::atomic<std::uint64_t> saturated_{0};
  std::array<std::atomic<std::uint64_t>, kGuideHistogramBuckets> guide_hist_{};

  std::mutex touch_mutex_;
  std::vector<TouchRecord> touches_;
};

/// Shared scope infrastructure for one runtime: epoch state, TAI, and the
/// registry of per-thread contexts.
class ScopeDomain {
 public:
  explicit ScopeDomain(GuideArena& arena);
  ScopeDomain(const ScopeDomain&) = delete;
  ScopeDomain& operator=(const ScopeDomain&) = delete;

  /// Context of the calling thread, created on first use.
  ThreadContext& local();

  [[nodiscard]] EpochState& epoch_state() noexcept { return epoch_; }
  [[nodiscard]] const EpochState& epoch_state() const noexcept { return epoch_; }
  [[nodiscard]] ThreadActivityIndex& tai() noexcept { return tai_; }
  [[nodiscard]] const ThreadActivityIndex& tai() const noexcept { return tai_; }
  [[nodiscard]] GuideArena& arena() noexcept { return arena_; }

  void set_tracing(bool on) noexcept { tracing_.store(on, std::memory_order_relaxed); }
  [[nodiscard]] bool tracing() const noexcept { return tracing_.load(std::memory_order_relaxed); }

  /// Longest outermost scope observed while ATC tracking was on.
  [[nodiscard]] std::chrono::nanoseconds longest_tracked_scope() const noexcept {
    return std::chrono::nanoseconds{longest_scope_ns_.load(std::memory_order_relaxed)};
  }
  void note_scope_duration(std::chrono::nanoseconds d) noexcept;

  /// Runs \p fn on every registered context.
  template <typename Fn>
  void for_each_context(Fn&& fn) {
    std::lock_guard lock{registry_mutex_};
    for (auto& ctx : contexts_) fn(*ctx);
  }

  [[nodiscard]] std::uint64_t total_outermost_scopes();
  /// Median of unique guides used per outermost scope, over all threads.
  [[nodiscard]] double median_guides_per_scope();

 private:
  GuideArena& arena_;
  EpochState epoch_;
  ThreadActivityIndex tai_;
  std::atomic<bool> tracing_{false};
  std::atomic<std::int64_t> longest_scope_ns_{0};
  const std::uint64_t id_;

  std::mutex registry_mutex_;
  std::unordered_map<std::thread::id, ThreadContext*> by_thread_;
  std::vector<std::unique_ptr<ThreadContext>> contexts_;
};

/// RAII outermost-or-nested scope.
class ActiveScope {
 public:
  explicit ActiveScope(ThreadContext& ctx) : ctx_{ctx} { ctx_.enter_scope(); }
  ~ActiveScope() { ctx_.exit_scope(); }
  ActiveScope(const ActiveScope&) = delete;
  ActiveScope& operator=(const ActiveScope&) = delete;

 private:
  ThreadContext& ctx_;
};

}  // namespace objspace
