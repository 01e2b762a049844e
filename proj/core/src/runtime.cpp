#include "objspace/runtime.hpp"

#include <cstring>
#include <unordered_set>

namespace objspace {

std::uint64_t payload_checksum(std::span<const std::byte> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::byte b : bytes) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Runtime::Runtime(RuntimeConfig config)
    : config_{std::move(config)},
      regions_{config_.regions},
      soda_{config_.soda_block_cells},
      scopes_{arena_} {
  scopes_.set_tracing(config_.trace_accesses);
}

CellIndex Runtime::create_object(HeapId heap, std::span<const std::byte> bytes) {
  const auto length = static_cast<std::uint32_t>(bytes.size());
  const Locator loc = regions_.allocate(heap, length);
  if (length != 0) std::memcpy(regions_.bytes(loc).data(), bytes.data(), length);
  const CellIndex cell = arena_.acquire(pack(GuideFields{.locator = loc, .heap = heap}));
  soda_.set(cell);
  return cell;
}

std::span<const std::byte> Runtime::access(ThreadContext& ctx, CellIndex cell) {
  GuideCell& guide = arena_.cell(cell);
  Locator loc;
  if (config_.guides_enabled) {
    ctx.record_guide_use(cell);
    loc = guide.dereference().locator;
  } else {
    loc = locator_of(guide.load());
  }
  const std::span<const std::byte> view = std::as_const(regions_).bytes(loc);
  ctx.note_touch(loc, static_cast<std::uint32_t>(view.size()));
  return view;
}

void Runtime::replace_object(ThreadContext& ctx, CellIndex cell, std::span<const std::byte> bytes) {
  if (config_.guides_enabled) ctx.record_guide_use(cell);
  const auto length = static_cast<std::uint32_t>(bytes.size());
  const Locator fresh = regions_.allocate(HeapId::kNew, length);
  if (length != 0) std::memcpy(regions_.bytes(fresh).data(), bytes.data(), length);

  GuideCell& guide = arena_.cell(cell);
  std::uint64_t w = guide.load();
  std::uint64_t desired;
  do {
    if (is_tombstone(w)) throw ProtocolViolation("replace of a destroyed object");
    desired = (w & guide_layout::kAtcMask) | pack(GuideFields{.locator = fresh,
                                                              .heap = HeapId::kNew,
                                                              .accessed = true});
  } while (!guide.compare_exchange(w, desired));
  ctx.note_touch(fresh, length);
  retire_slot(locator_of(w));
}

bool Runtime::destroy_object(ThreadContext& ctx, CellIndex cell) {
  if (config_.guides_enabled) ctx.record_guide_use(cell);
  GuideCell& guide = arena_.cell(cell);
  std::uint64_t w = guide.load();
  do {
    if (is_tombstone(w)) return false;
  } while (!guide.compare_exchange(w, tombstone_of(w)));
  retire_slot(locator_of(w));
  soda_.clear(cell);
  ctx.defer_cell_release(cell);
  return true;
}

void Runtime::retire_slot(Locator locator) {
  // Pairs with the collector's publish_copy_hazard() + guide re-read: at least
  // one side observes the other, so a slot under copy is never freed.
  if (copy_hazard_.load(std::memory_order_seq_cst) == locator) {
    std::lock_guard lock{deferred_mutex_};
    deferred_frees_.push_back(locator);
    return;
  }
  regions_.free(locator);
}

std::size_t Runtime::drain_deferred_frees() {
  std::vector<Locator> pending;
  {
    std::lock_guard lock{deferred_mutex_};
    pending.swap(deferred_frees_);
  }
  for (const Locator loc : pending) regions_.free(loc);
  return pending.size();
}

std::vector<ObjectRecord> Runtime::snapshot_objects() {
  std::vector<ObjectRecord> out;
  soda_.iterate_live([&](CellIndex cell) {
    const std::uint64_t w = arena_.cell(cell).load();
    if (is_tombstone(w)) return;
    const Locator loc = locator_of(w);
    const auto bytes = std::as_const(regions_).bytes(loc);
    out.push_back(ObjectRecord{cell, heap_of(w), loc, static_cast<std::uint32_t>(bytes.size()),
                               payload_checksum(bytes)});
  });
  return out;
}

RuntimeAudit Runtime::audit() {
  RuntimeAudit result;
  auto fail = [&](std::string problem) {
    if (result.ok) {
      result.ok = false;
      result.problem = std::move(problem);
    }
  };
  std::unordered_set<Locator> seen;
  std::uint64_t live = 0;
  soda_.iterate_live([&](CellIndex cell) {
    ++live;
    const std::uint64_t w = arena_.cell(cell).load();
    const std::string where = "cell " + std::to_string(cell);
    if (is_tombstone(w)) return fail(where + ": SODA bit set on a destroyed guide");
    if (atc_of(w) != 0) return fail(where + ": ATC non-zero at quiescence");
    if (is_locked(w)) return fail(where + ": migration lock held at quiescence");
    const Locator loc = locator_of(w);
    const auto range_heap = regions_.find_heap(loc);
    if (!range_heap || *range_heap != heap_of(w)) {
      return fail(where + ": heap bits disagree with the region range of its locator");
    }
    if (!regions_.is_live(loc)) return fail(where + ": guide points at a free slot");
    if (!seen.insert(loc).second) return fail(where + ": two guides share one slot");
    const auto h = static_cast<int>(heap_of(w));
    ++result.objects_per_heap[h];
    result.bytes_per_heap[h] += regions_.payload_length(loc);
  });
  if (live != arena_.live_cells()) {
    fail("SODA holds " + std::to_string(live) + " cells but the arena has " +
         std::to_string(arena_.live_cells()) + " live");
  }
  const RegionAudit regions = regions_.audit();
  if (!regions.ok) fail(regions.problem);
  if (regions.live_slots != seen.size()) {
    fail("regions hold " + std::to_string(regions.live_slots) + " live slots but " +
         std::to_string(seen.size()) + " are reachable from guides");
  }
  return result;
}

}  // namespace objspace
