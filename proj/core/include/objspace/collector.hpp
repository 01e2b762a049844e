#pragma once

/// \file
/// The object collector: periodic SODA scans that classify guides by their
/// accessed bit and CIW, the AIAD cold-threshold controller, the epoch state
/// machine, and optimistic two-CAS migration between heaps.

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "objspace/regions.hpp"
#include "objspace/runtime.hpp"

namespace objspace {

inline constexpr unsigned kMinColdThreshold = 1;
inline constexpr unsigned kMaxColdThreshold = 32;

struct ControllerConfig {
  double pr_target = 0.01;             // fraction of working-set pages per minute
  double scan_interval_seconds = 120;
  unsigned ct_init = 3;
  bool hinted = false;
  bool hugepage_hints = false;
  unsigned stability_windows = 2;
  std::chrono::nanoseconds convergence_floor = std::chrono::milliseconds{100};
  /// Fixed convergence timeout; when unset, 10x the longest tracked scope.
  std::optional<std::chrono::nanoseconds> convergence_timeout;
};

/// PR = (cold / working_set) * (60 / interval); 0 when working_set is 0.
[[nodiscard]] double compute_promotion_rate(std::uint64_t unique_cold_pages_accessed,
                                            std::uint64_t working_set_pages,
                                            double scan_interval_seconds) noexcept;

/// One AIAD step, clamped to [1, 32]. A tie leaves the threshold unchanged.
[[nodiscard]] unsigned adjust_cold_threshold(unsigned cold_threshold, double pr_actual,
                                             double pr_target) noexcept;

/// True when the last \p windows PR values are all strictly below target.
[[nodiscard]] bool stable_below_target(std::span<const double> pr_history, double pr_target,
                                       unsigned windows) noexcept;

struct ControllerState {
  std::uint64_t window{0};
  unsigned cold_threshold{3};
  double pr_target{0.01};
  double scan_interval_seconds{120};
  std::vector<double> pr_history;
  unsigned stable_windows{0};
};

struct MigrationCounts {
  std::uint64_t promoted_to_hot{0};  // COLD -> HOT
  std::uint64_t new_to_hot{0};       // NEW -> HOT
  std::uint64_t demoted_to_cold{0};  // NEW/HOT -> COLD
  std::uint64_t aborted{0};
  std::uint64_t skipped{0};

  MigrationCounts& operator+=(const MigrationCounts& o) noexcept {
    promoted_to_hot += o.promoted_to_hot;
    new_to_hot += o.new_to_hot;
    demoted_to_cold += o.demoted_to_cold;
    aborted += o.aborted;
    skipped += o.skipped;
    return *this;
  }
  [[nodiscard]] std::uint64_t moved() const noexcept {
    return promoted_to_hot + new_to_hot + demoted_to_cold;
  }
};

struct WindowReport {
  std::uint64_t window_index{0};
  std::uint64_t epoch{0};
  double pr_actual{0};
  unsigned cold_threshold_before{0};
  unsigned cold_threshold_after{0};
  std::uint64_t scanned_guides{0};
  std::uint64_t accessed_guides{0};
  std::uint64_t promotion_candidates{0};
  std::uint64_t demotion_candidates{0};
  MigrationCounts counts;
  bool converged{false};
  std::uint64_t unique_cold_pages_accessed{0};
  std::uint64_t working_set_pages{0};
  std::array<std::uint64_t, kManagedHeapCount> heap_bytes{};
  std::array<std::uint64_t, kManagedHeapCount> heap_resident_pages{};
  std::uint64_t reclaimed_empty_pages{0};
  std::uint64_t deferred_frees{0};
  std::uint64_t hints_emitted{0};
};

enum class ConvergenceResult : std::uint8_t { kConverged, kTimedOut };
enum class MigrationResult : std::uint8_t { kMoved, kSkipped, kAborted };

struct MigrationCandidate {
  CellIndex cell;
  HeapId target;
  Locator scanned_locator;
};

/// Points inside migrate() where a test hook may interleave mutator steps.
enum class MigrationStage : std::uint8_t { kLocked, kCopied };

struct ScanResult {
  std::vector<MigrationCandidate> candidates;
  std::uint64_t scanned{0};
  std::uint64_t accessed{0};
  std::uint64_t promotions{0};
  std::uint64_t demotions{0};
  std::uint64_t unique_cold_pages{0};
  std::uint64_t working_set_pages{0};
};

class ObjectCollector {
 public:
  using MigrationHook = std::function<void(const MigrationCandidate&, MigrationStage)>;

  ObjectCollector(Runtime& runtime, ControllerConfig config);

  /// Full window: scan, controller step, one epoch cycle of migrations,
  /// deferred-free drain, empty-page sweep and (hinted mode) hints.
  WindowReport run_scan_window();

  /// Classification pass alone: clears accessed bits, updates CIW, returns
  /// the migration queue and PR inputs. Requires phase INACTIVE.
  ScanResult scan();

  void begin_epoch();
  ConvergenceResult await_convergence();
  ConvergenceResult await_convergence(std::chrono::nanoseconds timeout);
  MigrationResult migrate(const MigrationCandidate& candidate);
  void end_epoch();

  /// Hints for the current window if hinted mode is on and PR has stayed
  /// below target for the configured number of windows.
  std::vector<HintEvent> maybe_emit_hints();

  [[nodiscard]] const ControllerConfig& config() const noexcept { return config_; }
  [[nodiscard]] const ControllerState& state() const noexcept { return state_; }
  [[nodiscard]] const std::vector<HintEvent>& hint_log() const noexcept { return hint_log_; }
  [[nodiscard]] const MigrationCounts& totals() const noexcept { return totals_; }
  [[nodiscard]] std::chrono::nanoseconds convergence_timeout() const noexcept;

  void set_migration_hook(MigrationHook hook) { hook_ = std::move(hook); }

 private:
  Runtime& rt_;
  ControllerConfig config_;
  ControllerState state_;
  MigrationCounts totals_;
  std::vector<HintEvent> hint_log_;
  MigrationHook hook_;
};

}  // namespace objspace
