#include "objspace/scope.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace objspace {

bool BaseDeltaSet::insert(std::uint64_t value) {
  if (value > guide_layout::kMaxLocator) {
    throw std::invalid_argument("BaseDeltaSet values are limited to 48 bits");
  }
  const auto upper = std::upper_bound(groups_.begin(), groups_.end(), value,
                                      [](std::uint64_t v, const Group& g) { return v < g.base; });
  // Groups that can cover value sit just below upper, nearest first.
  Group* open = nullptr;
  for (auto it = upper; it != groups_.begin();) {
    --it;
    const std::uint64_t delta = value - it->base;
    if (delta >= kDeltaSpan) break;
    const auto d32 = static_cast<std::uint32_t>(delta);
    const auto end = it->deltas.begin() + it->count;
    if (std::find(it->deltas.begin(), end, d32) != end) return false;
    if (open == nullptr && it->count < kGroupCapacity) open = &*it;
  }
  if (open != nullptr) {
    open->deltas[open->count++] = static_cast<std::uint32_t>(value - open->base);
  } else {
    Group group;
    group.base = value;
    group.count = 1;
    groups_.insert(upper, group);
  }
  ++size_;
  return true;
}

bool BaseDeltaSet::contains(std::uint64_t value) const noexcept {
  const auto upper = std::upper_bound(groups_.begin(), groups_.end(), value,
                                      [](std::uint64_t v, const Group& g) { return v < g.base; });
  for (auto it = upper; it != groups_.begin();) {
    --it;
    const std::uint64_t delta = value - it->base;
    if (delta >= kDeltaSpan) break;
    const auto end = it->deltas.begin() + it->count;
    if (std::find(it->deltas.begin(), end, static_cast<std::uint32_t>(delta)) != end) return true;
  }
  return false;
}

std::string_view phase_name(EpochPhase phase) noexcept {
  switch (phase) {
    case EpochPhase::kInactive:
      return "INACTIVE";
    case EpochPhase::kPrepare:
      return "PREPARE";
    case EpochPhase::kActive:
      return "ACTIVE";
  }
  return "UNKNOWN";
}

void ThreadActivityIndex::enter(std::size_t slot, std::uint64_t epoch) noexcept {
  auto& word = slots_[slot].word;
  std::uint64_t w = word.load(std::memory_order_relaxed);
  for (;;) {
    const Slot cur = unpack(w);
    const std::uint64_t e = cur.active_count == 0 ? epoch : std::min(cur.epoch, epoch);
    const std::uint64_t next = (e << kCountBits) | (cur.active_count + 1);
    if (word.compare_exchange_weak(w, next, std::memory_order_seq_cst)) return;
  }
}

void ThreadActivityIndex::exit(std::size_t slot) {
  auto& word = slots_[slot].word;
  std::uint64_t w = word.load(std::memory_order_relaxed);
  for (;;) {
    if ((w & kCountMask) == 0) throw ProtocolViolation("TAI exit with no active scope");
    if (word.compare_exchange_weak(w, w - 1, std::memory_order_seq_cst)) return;
  }
}

bool ThreadActivityIndex::converged(std::uint64_t epoch) const noexcept {
  for (std::size_t i = 0; i < kSlots; ++i) {
    const Slot s = read(i);
    if (s.active_count > 0 && s.epoch != epoch) return false;
  }
  return true;
}

std::uint64_t ThreadActivityIndex::total_active() const noexcept {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < kSlots; ++i) total += read(i).active_count;
  return total;
}

ThreadContext::ThreadContext(ScopeDomain& domain, std::uint32_t ordinal)
    : domain_{domain}, ordinal_{ordinal}, tai_slot_{ordinal % ThreadActivityIndex::kSlots} {}

void ThreadContext::enter_scope() {
  if (depth_++ > 0) return;
  used_.clear();
  atc_recorded_.clear();
  // Publish in the TAI before sampling the phase: either the collector sees
  // this registration, or this thread sees the collector's new epoch.
  domain_.tai().enter(tai_slot_, domain_.epoch_state().load().epoch);
  const EpochSnapshot snap = domain_.epoch_state().load();
  epoch_at_entry_ = snap.epoch;
  tracking_ = snap.tracking();
  if (tracking_) entered_at_ = std::chrono::steady_clock::now();
}

void ThreadContext::record_guide_use(CellIndex cell) {
  if (depth_ == 0) throw ProtocolViolation("guide used outside of a scope");
  if (!used_.insert(cell) || !tracking_) return;
  if (domain_.arena().cell(cell).atc_increment()) {
    atc_recorded_.push_back(cell);
  } else {
    // Saturated: the object stays ineligible for migration this epoch.
    saturated_.fetch_add(1, std::memory_order_relaxed);
  }
}

void ThreadContext::exit_scope() {
  if (depth_ == 0) throw ProtocolViolation("unbalanced scope exit");
  if (--depth_ > 0) return;
  GuideArena& arena = domain_.arena();
  for (const CellIndex cell : atc_recorded_) arena.cell(cell).atc_decrement();
  atc_recorded_.clear();
  domain_.tai().exit(tai_slot_);
  for (const CellIndex cell : pending_release_) arena.release(cell);
  pending_release_.clear();

  outermost_scopes_.fetch_add(1, std::memory_order_relaxed);
  guide_hist_[std::min(used_.size(), kGuideHistogramBuckets - 1)].fetch_add(
      1, std::memory_order_relaxed);
  if (tracking_) {
    domain_.note_scope_duration(std::chrono::steady_clock::now() - entered_at_);
  }
}

void ThreadContext::defer_cell_release(CellIndex cell) {
  if (depth_ == 0) {
    domain_.arena().release(cell);
  } else {
    pending_release_.push_back(cell);
  }
}

void ThreadContext::note_touch(Locator locator, std::uint32_t length) {
  if (!domain_.tracing()) return;
  std::lock_guard lock{touch_mutex_};
  touches_.push_back({locator, length});
}

std::vector<TouchRecord> ThreadContext::drain_touches() {
  std::lock_guard lock{touch_mutex_};
  return std::exchange(touches_, {});
}

std::array<std::uint64_t, ThreadContext::kGuideHistogramBuckets> ThreadContext::guide_histogram()
    const {
  std::array<std::uint64_t, kGuideHistogramBuckets> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = guide_hist_[i].load(std::memory_order_relaxed);
  return out;
}

namespace {
std::atomic<std::uint64_t> next_domain_id{1};
}  // namespace

ScopeDomain::ScopeDomain(GuideArena& arena)
    : arena_{arena}, id_{next_domain_id.fetch_add(1, std::memory_order_relaxed)} {}

ThreadContext& ScopeDomain::local() {
  struct Cache {
    std::uint64_t domain_id{0};
    ThreadContext* ctx{nullptr};
  };
  thread_local Cache cache;
  if (cache.domain_id == id_) return *cache.ctx;

  std::lock_guard lock{registry_mutex_};
  const auto me = std::this_thread::get_id();
  auto it = by_thread_.find(me);
  if (it == by_thread_.end()) {
    contexts_.push_back(
        std::make_unique<ThreadContext>(*this, static_cast<std::uint32_t>(contexts_.size())));
    it = by_thread_.emplace(me, contexts_.back().get()).first;
  }
  cache = {id_, it->second};
  return *it->second;
}

void ScopeDomain::note_scope_duration(std::chrono::nanoseconds d) noexcept {
  const std::int64_t ns = d.count();
  std::int64_t cur = longest_scope_ns_.load(std::memory_order_relaxed);
  while (ns > cur &&
         !longest_scope_ns_.compare_exchange_weak(cur, ns, std::memory_order_relaxed)) {
  }
}

std::uint64_t ScopeDomain::total_outermost_scopes() {
  std::uint64_t total = 0;
  for_each_context([&](ThreadContext& ctx) { total += ctx.outermost_scopes(); });
  return total;
}

double ScopeDomain::median_guides_per_scope() {
  std::array<std::uint64_t, ThreadContext::kGuideHistogramBuckets> hist{};
  for_each_context([&](ThreadContext& ctx) {
    const auto h = ctx.guide_histogram();
    for (std::size_t i = 0; i < h.size(); ++i) hist[i] += h[i];
  });
  std::uint64_t total = 0;
  for (const auto n : hist) total += n;
  if (total == 0) return 0.0;
  // Lower and upper medians, averaged for even totals.
  const std::uint64_t lo_rank = (total - 1) / 2;
  const std::uint64_t hi_rank = total / 2;
  std::uint64_t seen = 0;
  double lo = -1;
  double hi = -1;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    seen += hist[i];
    if (lo < 0 && seen > lo_rank) lo = static_cast<double>(i);
    if (hi < 0 && seen > hi_rank) {
      hi = static_cast<double>(i);
      break;
    }
  }
  return (lo + hi) / 2.0;
}

}  // namespace objspace
