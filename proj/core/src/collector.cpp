#include "objspace/collector.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace objspace {

double compute_promotion_rate(std::uint64_t unique_cold_pages_accessed,
                              std::uint64_t working_set_pages,
                              double scan_interval_seconds) noexcept {
  if (working_set_pages == 0 || scan_interval_seconds <= 0) return 0.0;
  return (static_cast<double>(unique_cold_pages_accessed) /
          static_cast<double>(working_set_pages)) *
         (60.0 / scan_interval_seconds);
}

unsigned adjust_cold_threshold(unsigned cold_threshold, double pr_actual,
                               double pr_target) noexcept {
  unsigned ct = std::clamp(cold_threshold, kMinColdThreshold, kMaxColdThreshold);
  if (pr_actual > pr_target) {
    ct = std::min(ct + 1, kMaxColdThreshold);
  } else if (pr_actual < pr_target) {
    ct = std::max(ct - 1, kMinColdThreshold);
  }
  return ct;
}

bool stable_below_target(std::span<const double> pr_history, double pr_target,
                         unsigned windows) noexcept {
  if (windows == 0 || pr_history.size() < windows) return false;
  return std::all_of(pr_history.end() - windows, pr_history.end(),
                     [&](double pr) { return pr < pr_target; });
}

ObjectCollector::ObjectCollector(Runtime& runtime, ControllerConfig config)
    : rt_{runtime}, config_{config} {
  if (config_.ct_init < kMinColdThreshold || config_.ct_init > kMaxColdThreshold) {
    throw std::invalid_argument("initial cold threshold must lie in [1, 32]");
  }
  if (config_.scan_interval_seconds <= 0) {
    throw std::invalid_argument("scan interval must be positive");
  }
  if (config_.stability_windows == 0) {
    throw std::invalid_argument("stability window must be at least 1");
  }
  state_.cold_threshold = config_.ct_init;
  state_.pr_target = config_.pr_target;
  state_.scan_interval_seconds = config_.scan_interval_seconds;
}

std::chrono::nanoseconds ObjectCollector::convergence_timeout() const noexcept {
  if (config_.convergence_timeout) return *config_.convergence_timeout;
  return std::max(config_.convergence_floor, 10 * rt_.scopes().longest_tracked_scope());
}

ScanResult ObjectCollector::scan() {
  if (rt_.scopes().epoch_state().load().phase != EpochPhase::kInactive) {
    throw ProtocolViolation("scan requires phase INACTIVE");
  }
  ScanResult out;
  const unsigned ct = state_.cold_threshold;
  std::unordered_set<std::uint64_t> cold_pages;
  std::unordered_set<std::uint64_t> ws_pages;
  GuideArena& arena = rt_.arena();
  const RegionSet& regions = rt_.regions();

  rt_.soda().iterate_live([&](CellIndex cell) {
    GuideCell& guide = arena.cell(cell);
    std::uint64_t w = guide.load();
    std::uint64_t next;
    bool accessed;
    unsigned ciw;
    do {
      if (is_tombstone(w)) return;
      accessed = is_accessed(w);
      ciw = accessed ? 0 : std::min(ciw_of(w) + 1, guide_layout::kMaxCiw);
      next = with_ciw(w & ~guide_layout::kAccessedBit, ciw);
    } while (!guide.compare_exchange(w, next));

    ++out.scanned;
    const HeapId heap = heap_of(w);
    const Locator loc = locator_of(w);
    if (accessed) {
      ++out.accessed;
      const auto [first, last] = regions.page_span(loc, regions.payload_length(loc));
      for (std::uint64_t p = first; p < last; ++p) {
        ws_pages.insert(p);
        if (heap == HeapId::kCold) cold_pages.insert(p);
      }
      if (heap == HeapId::kNew || heap == HeapId::kCold) {
        out.candidates.push_back({cell, HeapId::kHot, loc});
        ++out.promotions;
      }
    } else if (ciw >= ct && heap != HeapId::kCold) {
      out.candidates.push_back({cell, HeapId::kCold, loc});
      ++out.demotions;
    }
  });
  out.unique_cold_pages = cold_pages.size();
  out.working_set_pages = ws_pages.size();
  return out;
}

void ObjectCollector::begin_epoch() {
  EpochState& es = rt_.scopes().epoch_state();
  const EpochSnapshot s = es.load();
  if (s.phase != EpochPhase::kInactive) throw ProtocolViolation("beginEpoch outside INACTIVE");
  es.store({s.epoch + 1, EpochPhase::kPrepare});
}

ConvergenceResult ObjectCollector::await_convergence() {
  return await_convergence(convergence_timeout());
}

ConvergenceResult ObjectCollector::await_convergence(std::chrono::nanoseconds timeout) {
  EpochState& es = rt_.scopes().epoch_state();
  const EpochSnapshot s = es.load();
  if (s.phase != EpochPhase::kPrepare) throw ProtocolViolation("awaitConvergence outside PREPARE");
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  const ThreadActivityIndex& tai = rt_.scopes().tai();
  for (;;) {
    if (tai.converged(s.epoch)) {
      es.store({s.epoch, EpochPhase::kActive});
      return ConvergenceResult::kConverged;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      es.store({s.epoch, EpochPhase::kInactive});
      return ConvergenceResult::kTimedOut;
    }
    std::this_thread::yield();
  }
}

MigrationResult ObjectCollector::migrate(const MigrationCandidate& c) {
  if (rt_.scopes().epoch_state().load().phase != EpochPhase::kActive) {
    throw ProtocolViolation("migrate outside ACTIVE");
  }
  GuideCell& guide = rt_.arena().cell(c.cell);
  const std::uint64_t w = guide.load();
  if (is_tombstone(w) || atc_of(w) != 0 || is_locked(w) || locator_of(w) != c.scanned_locator ||
      heap_of(w) == c.target) {
    return MigrationResult::kSkipped;
  }
  RegionSet& regions = rt_.regions();
  const Locator old_loc = locator_of(w);
  const std::uint32_t length = regions.payload_length(old_loc);
  const auto fresh = regions.try_allocate(c.target, length);
  if (!fresh) return MigrationResult::kSkipped;

  const GuideCas lock = guide.try_lock_for_migration(w);
  if (!lock.ok) {
    regions.free(*fresh);
    return MigrationResult::kSkipped;
  }
  const std::uint64_t locked = w | guide_layout::kLockBit;
  if (hook_) hook_(c, MigrationStage::kLocked);

  // Publish the hazard, then confirm the word is still ours: a mutator that
  // swings the guide after this point defers its free until the drain.
  rt_.publish_copy_hazard(old_loc);
  if (guide.load(std::memory_order_seq_cst) != locked) {
    rt_.clear_copy_hazard();
    regions.free(*fresh);
    return MigrationResult::kAborted;
  }
  if (length != 0) std::memcpy(regions.bytes(*fresh).data(), regions.bytes(old_loc).data(), length);
  if (hook_) hook_(c, MigrationStage::kCopied);

  const std::uint64_t replacement = pack(GuideFields{.locator = *fresh, .heap = c.target});
  const GuideCas commit = guide.commit_migration(locked, replacement);
  rt_.clear_copy_hazard();
  if (!commit.ok) {
    regions.free(*fresh);
    return MigrationResult::kAborted;
  }
  regions.free(old_loc);
  return MigrationResult::kMoved;
}

void ObjectCollector::end_epoch() {
  EpochState& es = rt_.scopes().epoch_state();
  const EpochSnapshot s = es.load();
  if (s.phase != EpochPhase::kActive) throw ProtocolViolation("endEpoch outside ACTIVE");
  es.store({s.epoch, EpochPhase::kInactive});
}

std::vector<HintEvent> ObjectCollector::maybe_emit_hints() {
  if (!config_.hinted || state_.stable_windows < config_.stability_windows) return {};
  RegionSet& regions = rt_.regions();
  const std::uint64_t window = state_.window;
  auto events = regions.emit_hints(
      HeapId::kCold, HintKind::kPageoutAdvice,
      [](const PageInfo& p) { return p.live_slots > 0; }, window);
  if (config_.hugepage_hints) {
    auto huge = regions.emit_hints(
        HeapId::kHot, HintKind::kHugepageAdvice,
        [](const PageInfo& p) { return p.live_slots > 0; }, window);
    events.insert(events.end(), huge.begin(), huge.end());
  }
  hint_log_.insert(hint_log_.end(), events.begin(), events.end());
  return events;
}

WindowReport ObjectCollector::run_scan_window() {
  WindowReport r;
  r.window_index = state_.window;
  r.cold_threshold_before = state_.cold_threshold;

  ScanResult scanned = scan();
  r.scanned_guides = scanned.scanned;
  r.accessed_guides = scanned.accessed;
  r.promotion_candidates = scanned.promotions;
  r.demotion_candidates = scanned.demotions;
  r.unique_cold_pages_accessed = scanned.unique_cold_pages;
  r.working_set_pages = scanned.working_set_pages;
  r.pr_actual = compute_promotion_rate(scanned.unique_cold_pages, scanned.working_set_pages,
                                       config_.scan_interval_seconds);
  state_.pr_history.push_back(r.pr_actual);
  state_.cold_threshold =
      adjust_cold_threshold(state_.cold_threshold, r.pr_actual, config_.pr_target);
  state_.stable_windows = r.pr_actual < config_.pr_target ? state_.stable_windows + 1 : 0;
  r.cold_threshold_after = state_.cold_threshold;

  begin_epoch();
  r.epoch = rt_.scopes().epoch_state().load().epoch;
  r.converged = await_convergence() == ConvergenceResult::kConverged;
  if (r.converged) {
    for (const MigrationCandidate& c : scanned.candidates) {
      const HeapId source = heap_of(rt_.arena().cell(c.cell).load());
      switch (migrate(c)) {
        case MigrationResult::kMoved:
          if (c.target == HeapId::kCold) {
            ++r.counts.demoted_to_cold;
          } else if (source == HeapId::kNew) {
            ++r.counts.new_to_hot;
          } else {
            ++r.counts.promoted_to_hot;
          }
          break;
        case MigrationResult::kSkipped:
          ++r.counts.skipped;
          break;
        case MigrationResult::kAborted:
          ++r.counts.aborted;
          break;
      }
    }
    end_epoch();
  }
  totals_ += r.counts;

  r.deferred_frees = rt_.drain_deferred_frees();
  r.reclaimed_empty_pages = rt_.regions().reclaim_empty_pages();
  r.hints_emitted = maybe_emit_hints().size();
  for (int h = 0; h < kManagedHeapCount; ++h) {
    const PageStats ps = rt_.regions().page_stats(static_cast<HeapId>(h));
    r.heap_bytes[h] = ps.live_bytes;
    r.heap_resident_pages[h] = ps.resident_pages;
  }
  ++state_.window;
  return r;
}

}  // namespace objspace
