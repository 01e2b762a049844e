#include "objspace/regions.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <new>
#include <sstream>

#if defined(__linux__)
#include <sys/mman.h>
#endif

namespace objspace {

std::vector<std::uint32_t> default_size_classes() {
  std::vector<std::uint32_t> classes;
  for (std::uint32_t size = 16; size <= 64 * 1024; size *= 2) classes.push_back(size);
  return classes;
}

std::string_view hint_kind_name(HintKind kind) noexcept {
  switch (kind) {
    case HintKind::kColdAdvice:
      return "COLD_ADVICE";
    case HintKind::kPageoutAdvice:
      return "PAGEOUT_ADVICE";
    case HintKind::kHugepageAdvice:
      return "HUGEPAGE_ADVICE";
  }
  return "UNKNOWN";
}

std::string format_hint(const HintEvent& e) {
  std::ostringstream out;
  out << e.issued_at_window << ',' << heap_name(e.heap) << ',' << hint_kind_name(e.kind) << ','
      << e.start_page << ',' << e.end_page;
  return out.str();
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> coalesce_pages(
    std::span<const std::uint64_t> sorted_pages) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const std::uint64_t page : sorted_pages) {
    if (!ranges.empty() && ranges.back().second == page) {
      ++ranges.back().second;
    } else {
      ranges.emplace_back(page, page + 1);
    }
  }
  return ranges;
}

namespace {

struct PageRecord {
  std::atomic<std::uint64_t> live_bytes{0};
  std::atomic<std::uint32_t> live_slots{0};
  std::atomic<bool> resident{false};
};

struct StorageDeleter {
  std::size_t alignment;
  void operator()(std::byte* p) const noexcept {
    ::operator delete[](p, std::align_val_t{alignment});
  }
};

/// A run of same-sized slots. All slot bookkeeping is guarded by the owning
/// size class's mutex; payload lengths and page records are atomics so that
/// lock-free readers (dereference, page stats) see consistent values.
struct Extent {
  std::uint32_t class_index;
  std::uint32_t slot_size;
  std::uint32_t slot_count;
  std::uint32_t free_count;
  std::unique_ptr<std::byte[], StorageDeleter> storage;
  std::vector<std::uint64_t> free_bits;  // 1 = free
  std::unique_ptr<std::atomic<std::uint32_t>[]> payload;
  std::unique_ptr<PageRecord[]> pages;
};

}  // namespace

class HeapRegion {
 public:
  HeapRegion(HeapId id, Locator base, std::uint64_t length, const RegionConfig& config)
      : id_{id},
        base_{base},
        length_{length},
        page_size_{config.page_size},
        extent_size_{std::max<std::uint64_t>(
            {std::uint64_t{64} * 1024, config.page_size, config.size_classes.back()})},
        platform_advice_{config.platform_advice},
        sizes_{config.size_classes},
        extents_(length / extent_size_) {
    classes_.reserve(sizes_.size());
    for (std::size_t i = 0; i < sizes_.size(); ++i) classes_.push_back(std::make_unique<ClassState>());
  }

  [[nodiscard]] HeapId id() const noexcept { return id_; }
  [[nodiscard]] Locator base() const noexcept { return base_; }
  [[nodiscard]] std::uint64_t length() const noexcept { return length_; }
  [[nodiscard]] bool contains(Locator loc) const noexcept {
    return loc >= base_ && loc - base_ < length_;
  }
  [[nodiscard]] std::uint32_t pages_per_extent() const noexcept {
    return static_cast<std::uint32_t>(extent_size_ / page_size_);
  }

  std::optional<Locator> try_allocate(std::uint32_t payload_length) {
    const auto it = std::lower_bound(sizes_.begin(), sizes_.end(), payload_length);
    if (it == sizes_.end()) {
      throw std::invalid_argument("payload of " + std::to_string(payload_length) +
                                  " B exceeds the largest size class");
    }
    const auto class_index = static_cast<std::uint32_t>(it - sizes_.begin());
    ClassState& cls = *classes_[class_index];
    std::lock_guard lock{cls.mutex};
    if (cls.partial.empty()) {
      const auto claimed = claim_extent(class_index);
      if (!claimed) return std::nullopt;
      cls.partial.insert(*claimed);
    }
    const std::uint32_t ext_index = *cls.partial.begin();
    Extent& ext = *extents_[ext_index].load(std::memory_order_relaxed);

    std::uint32_t slot = 0;
    for (std::size_t w = 0; w < ext.free_bits.size(); ++w) {
      if (ext.free_bits[w] != 0) {
        slot = static_cast<std::uint32_t>(w * 64 + std::countr_zero(ext.free_bits[w]));
        ext.free_bits[w] &= ext.free_bits[w] - 1;
        break;
      }
    }
    if (--ext.free_count == 0) cls.partial.erase(cls.partial.begin());

    ext.payload[slot].store(payload_length, std::memory_order_relaxed);
    const std::uint64_t offset = std::uint64_t{slot} * ext.slot_size;
    account(ext, offset, payload_length, +1);
    return base_ + std::uint64_t{ext_index} * extent_size_ + offset;
  }

  void free(Locator loc) {
    const auto [ext_index, slot] = locate(loc);
    Extent& ext = *extents_[ext_index].load(std::memory_order_acquire);
    ClassState& cls = *classes_[ext.class_index];
    std::lock_guard lock{cls.mutex};
    std::uint64_t& bits = ext.free_bits[slot / 64];
    const std::uint64_t mask = std::uint64_t{1} << (slot % 64);
    if ((bits & mask) != 0) throw SlotFault("double free of locator " + std::to_string(loc));
    bits |= mask;
    if (ext.free_count++ == 0) cls.partial.insert(ext_index);
    const std::uint32_t length = ext.payload[slot].load(std::memory_order_relaxed);
    account(ext, std::uint64_t{slot} * ext.slot_size, length, -1);
  }

  [[nodiscard]] std::byte* data(Locator loc) const {
    const auto [ext_index, slot] = locate(loc);
    Extent& ext = *extents_[ext_index].load(std::memory_order_acquire);
    return ext.storage.get() + std::uint64_t{slot} * ext.slot_size;
  }

  [[nodiscard]] std::uint32_t payload_length(Locator loc) const {
    const auto [ext_index, slot] = locate(loc);
    return extents_[ext_index].load(std::memory_order_acquire)->payload[slot].load(
        std::memory_order_relaxed);
  }

  [[nodiscard]] std::uint32_t slot_size(Locator loc) const {
    const auto [ext_index, slot] = locate(loc);
    return extents_[ext_index].load(std::memory_order_acquire)->slot_size;
  }

  [[nodiscard]] bool is_live(Locator loc) const {
    const auto [ext_index, slot] = locate(loc);
    Extent& ext = *extents_[ext_index].load(std::memory_order_acquire);
    std::lock_guard lock{classes_[ext.class_index]->mutex};
    return (ext.free_bits[slot / 64] & (std::uint64_t{1} << (slot % 64))) == 0;
  }

  template <typename Fn>
  void for_each_page(Fn&& fn) const {
    const std::uint64_t claimed = claimed_.load(std::memory_order_acquire);
    const std::uint32_t per_extent = pages_per_extent();
    const std::uint64_t first_page = base_ / page_size_;
    for (std::uint64_t e = 0; e < claimed; ++e) {
      Extent* ext = extents_[e].load(std::memory_order_acquire);
      for (std::uint32_t p = 0; p < per_extent; ++p) {
        fn(first_page + e * per_extent + p, ext->pages[p], *ext);
      }
    }
  }

  [[nodiscard]] std::uint64_t resident_pages() const noexcept {
    return resident_pages_.load(std::memory_order_relaxed);
  }

  /// Returns true if the page was resident. With \p only_if_empty, a page
  /// that gained a slot concurrently keeps its residency.
  bool drop_residency(std::uint64_t global_page, bool only_if_empty = false) {
    const std::uint64_t rel = global_page - base_ / page_size_;
    const std::uint64_t e = rel / pages_per_extent();
    Extent* ext = extents_[e].load(std::memory_order_acquire);
    PageRecord& rec = ext->pages[rel % pages_per_extent()];
    if (!rec.resident.exchange(false, std::memory_order_acq_rel)) return false;
    if (only_if_empty && rec.live_slots.load(std::memory_order_acquire) != 0) {
      rec.resident.store(true, std::memory_order_release);
      return false;
    }
    resident_pages_.fetch_sub(1, std::memory_order_relaxed);
    return true;
  }

  void platform_advise(std::uint64_t start_page, std::uint64_t end_page, HintKind kind) const {
#if defined(__linux__)
    if (!platform_advice_) return;
    int advice = -1;
#if defined(MADV_COLD)
    if (kind == HintKind::kColdAdvice) advice = MADV_COLD;
#endif
#if defined(MADV_PAGEOUT)
    if (kind == HintKind::kPageoutAdvice) advice = MADV_PAGEOUT;
#endif
#if defined(MADV_HUGEPAGE)
    if (kind == HintKind::kHugepageAdvice) advice = MADV_HUGEPAGE;
#endif
    if (advice < 0) return;
    const std::uint64_t first = base_ / page_size_;
    for (std::uint64_t page = start_page; page < end_page; ++page) {
      const std::uint64_t rel = page - first;
      Extent* ext = extents_[rel / pages_per_extent()].load(std::memory_order_acquire);
      void* addr = ext->storage.get() + (rel % pages_per_extent()) * page_size_;
      // Best effort: advice is never required for correctness.
      (void)::madvise(addr, page_size_, advice);
    }
#else
    (void)start_page;
    (void)end_page;
    (void)kind;
#endif
  }

  void audit(RegionAudit& out) const {
    const std::uint64_t claimed = claimed_.load(std::memory_order_acquire);
    for (std::uint64_t e = 0; e < claimed; ++e) {
      Extent& ext = *extents_[e].load(std::memory_order_acquire);
      std::lock_guard lock{classes_[ext.class_index]->mutex};
      const std::uint32_t per_extent = pages_per_extent();
      std::vector<std::uint64_t> bytes(per_extent, 0);
      std::vector<std::uint32_t> slots(per_extent, 0);
      std::uint32_t free_slots = 0;
      for (std::uint32_t s = 0; s < ext.slot_count; ++s) {
        if ((ext.free_bits[s / 64] >> (s % 64)) & 1U) {
          ++free_slots;
          continue;
        }
        const std::uint32_t len = ext.payload[s].load(std::memory_order_relaxed);
        if (len > ext.slot_size) {
          out.ok = false;
          out.problem = "payload longer than its slot";
          return;
        }
        ++out.live_slots;
        out.live_bytes += len;
        for_each_page_of(std::uint64_t{s} * ext.slot_size, len,
                         [&](std::uint32_t page, std::uint64_t overlap) {
                           bytes[page] += overlap;
                           ++slots[page];
                         });
      }
      if (free_slots != ext.free_count) {
        out.ok = false;
        out.problem = "free count disagrees with free bitmap";
        return;
      }
      for (std::uint32_t p = 0; p < per_extent; ++p) {
        if (ext.pages[p].live_bytes.load() != bytes[p] ||
            ext.pages[p].live_slots.load() != slots[p]) {
          std::ostringstream msg;
          msg << heap_name(id_) << " page " << (base_ / page_size_ + e * per_extent + p)
              << " accounting mismatch: recorded " << ext.pages[p].live_bytes.load() << " B / "
              << ext.pages[p].live_slots.load() << " slots, expected " << bytes[p] << " B / "
              << slots[p] << " slots";
          out.ok = false;
          out.problem = msg.str();
          return;
        }
      }
    }
  }

 private:
  struct ClassState {
    std::mutex mutex;
    std::set<std::uint32_t> partial;  // extents with a free slot, by address
  };

  [[nodiscard]] std::pair<std::uint32_t, std::uint32_t> locate(Locator loc) const {
    if (!contains(loc)) throw SlotFault("locator outside region");
    const std::uint64_t rel = loc - base_;
    const auto ext_index = static_cast<std::uint32_t>(rel / extent_size_);
    if (ext_index >= claimed_.load(std::memory_order_acquire)) {
      throw SlotFault("locator in unmaterialized extent");
    }
    const Extent* ext = extents_[ext_index].load(std::memory_order_acquire);
    const std::uint64_t offset = rel % extent_size_;
    if (offset % ext->slot_size != 0) throw SlotFault("locator not at a slot boundary");
    return {ext_index, static_cast<std::uint32_t>(offset / ext->slot_size)};
  }

  std::optional<std::uint32_t> claim_extent(std::uint32_t class_index) {
    std::lock_guard lock{frontier_mutex_};
    const std::uint64_t index = claimed_.load(std::memory_order_relaxed);
    if (index >= extents_.size()) return std::nullopt;
    auto ext = std::make_unique<Extent>();
    ext->class_index = class_index;
    ext->slot_size = sizes_[class_index];
    ext->slot_count = static_cast<std::uint32_t>(extent_size_ / ext->slot_size);
    ext->free_count = ext->slot_count;
    const std::size_t align = std::max<std::size_t>(page_size_, alignof(std::max_align_t));
    ext->storage = std::unique_ptr<std::byte[], StorageDeleter>(
        static_cast<std::byte*>(::operator new[](extent_size_, std::align_val_t{align})),
        StorageDeleter{align});
    ext->free_bits.assign((ext->slot_count + 63) / 64, ~std::uint64_t{0});
    if (const std::uint32_t tail = ext->slot_count % 64; tail != 0) {
      ext->free_bits.back() = (std::uint64_t{1} << tail) - 1;
    }
    ext->payload = std::make_unique<std::atomic<std::uint32_t>[]>(ext->slot_count);
    ext->pages = std::make_unique<PageRecord[]>(pages_per_extent());
    extents_[index].store(ext.release(), std::memory_order_release);
    claimed_.store(index + 1, std::memory_order_release);
    return static_cast<std::uint32_t>(index);
  }

  template <typename Fn>
  void for_each_page_of(std::uint64_t offset, std::uint32_t length, Fn&& fn) const {
    const std::uint64_t first = offset / page_size_;
    if (length == 0) {
      fn(static_cast<std::uint32_t>(first), 0);
      return;
    }
    const std::uint64_t last = (offset + length - 1) / page_size_;
    for (std::uint64_t p = first; p <= last; ++p) {
      const std::uint64_t lo = std::max(offset, p * page_size_);
      const std::uint64_t hi = std::min(offset + length, (p + 1) * page_size_);
      fn(static_cast<std::uint32_t>(p), hi - lo);
    }
  }

  void account(Extent& ext, std::uint64_t offset, std::uint32_t length, int sign) {
    for_each_page_of(offset, length, [&](std::uint32_t page, std::uint64_t overlap) {
      PageRecord& rec = ext.pages[page];
      if (sign > 0) {
        rec.live_bytes.fetch_add(overlap, std::memory_order_relaxed);
        rec.live_slots.fetch_add(1, std::memory_order_relaxed);
        if (!rec.resident.exchange(true, std::memory_order_acq_rel)) {
          resident_pages_.fetch_add(1, std::memory_order_relaxed);
        }
      } else {
        rec.live_bytes.fetch_sub(overlap, std::memory_order_relaxed);
        rec.live_slots.fetch_sub(1, std::memory_order_relaxed);
      }
    });
  }

  friend class RegionSet;

  HeapId id_;
  Locator base_;
  std::uint64_t length_;
  std::uint32_t page_size_;
  std::uint64_t extent_size_;
  bool platform_advice_;
  std::vector<std::uint32_t> sizes_;
  std::vector<std::atomic<Extent*>> extents_;
  std::atomic<std::uint64_t> claimed_{0};
  std::mutex frontier_mutex_;
  std::vector<std::unique_ptr<ClassState>> classes_;
  std::atomic<std::uint64_t> resident_pages_{0};

 public:
  ~HeapRegion() {
    for (auto& e : extents_) delete e.load(std::memory_order_relaxed);
  }
};

RegionSet::RegionSet(RegionConfig config) : config_{std::move(config)} {
  const std::uint32_t page = config_.page_size;
  if (page == 0 || !std::has_single_bit(page)) {
    throw std::invalid_argument("page size must be a power of two");
  }
  if (config_.size_classes.empty() ||
      !std::is_sorted(config_.size_classes.begin(), config_.size_classes.end())) {
    throw std::invalid_argument("size classes must be non-empty and ascending");
  }
  for (const std::uint32_t c : config_.size_classes) {
    if (!std::has_single_bit(c)) throw std::invalid_argument("size classes must be powers of two");
  }
  const std::uint64_t extent = std::max<std::uint64_t>(
      {std::uint64_t{64} * 1024, page, config_.size_classes.back()});
  std::uint64_t total = 0;
  for (const std::uint64_t len : config_.region_length) {
    if (len == 0 || len % page != 0 || len % extent != 0) {
      throw std::invalid_argument("region length must be a non-zero multiple of " +
                                  std::to_string(extent) + " B");
    }
    if (len > guide_layout::kMaxLocator + 1 - total) {
      throw std::invalid_argument("regions overflow the 48-bit managed space");
    }
    total += len;
  }
  Locator next = 0;
  for (int h = 0; h < kManagedHeapCount; ++h) {
    const std::uint64_t len = config_.region_length[h];
    regions_[h] = std::make_unique<HeapRegion>(static_cast<HeapId>(h), next, len, config_);
    next += len;
  }
}

RegionSet::~RegionSet() = default;

HeapRegion& RegionSet::region(HeapId heap) {
  if (heap == HeapId::kReserved) throw std::invalid_argument("RESERVED is not a heap region");
  return *regions_[static_cast<int>(heap)];
}
const HeapRegion& RegionSet::region(HeapId heap) const {
  if (heap == HeapId::kReserved) throw std::invalid_argument("RESERVED is not a heap region");
  return *regions_[static_cast<int>(heap)];
}

HeapRegion& RegionSet::region_for(Locator loc) { return region(heap_of(loc)); }
const HeapRegion& RegionSet::region_for(Locator loc) const { return region(heap_of(loc)); }

Locator RegionSet::base(HeapId heap) const { return region(heap).base(); }
std::uint64_t RegionSet::length(HeapId heap) const { return region(heap).length(); }

std::optional<HeapId> RegionSet::find_heap(Locator loc) const noexcept {
  for (const auto& r : regions_) {
    if (r->contains(loc)) return r->id();
  }
  return std::nullopt;
}

HeapId RegionSet::heap_of(Locator loc) const {
  if (const auto heap = find_heap(loc)) return *heap;
  throw std::out_of_range("locator " + std::to_string(loc) + " lies outside every region");
}

std::optional<Locator> RegionSet::try_allocate(HeapId heap, std::uint32_t payload_length) {
  return region(heap).try_allocate(payload_length);
}

Locator RegionSet::allocate(HeapId heap, std::uint32_t payload_length) {
  if (const auto loc = try_allocate(heap, payload_length)) return *loc;
  throw RegionExhausted(std::string{heap_name(heap)} + " region exhausted");
}

void RegionSet::free(Locator loc) { region_for(loc).free(loc); }

std::span<std::byte> RegionSet::bytes(Locator loc) {
  HeapRegion& r = region_for(loc);
  return {r.data(loc), r.payload_length(loc)};
}

std::span<const std::byte> RegionSet::bytes(Locator loc) const {
  const HeapRegion& r = region_for(loc);
  return {r.data(loc), r.payload_length(loc)};
}

std::uint32_t RegionSet::payload_length(Locator loc) const {
  return region_for(loc).payload_length(loc);
}

std::uint32_t RegionSet::slot_size(Locator loc) const { return region_for(loc).slot_size(loc); }

bool RegionSet::is_live(Locator loc) const { return region_for(loc).is_live(loc); }

std::pair<std::uint64_t, std::uint64_t> RegionSet::page_span(Locator loc,
                                                             std::uint32_t length) const {
  const std::uint64_t first = loc / config_.page_size;
  const std::uint64_t last = length == 0 ? first : (loc + length - 1) / config_.page_size;
  return {first, last + 1};
}

PageStats RegionSet::page_stats(HeapId heap) const {
  const HeapRegion& r = region(heap);
  PageStats stats;
  const std::uint32_t page = config_.page_size;
  r.for_each_page([&](std::uint64_t, const PageRecord& rec, const Extent&) {
    const std::uint64_t live = rec.live_bytes.load(std::memory_order_relaxed);
    ++stats.total_pages;
    stats.live_bytes += live;
    std::size_t bucket = 0;
    if (live > 0) {
      bucket = static_cast<std::size_t>(std::min<std::uint64_t>(10, (live * 10 + page - 1) / page));
    }
    ++stats.occupancy_histogram[bucket];
  });
  stats.resident_pages = r.resident_pages();
  return stats;
}

std::vector<PageInfo> RegionSet::pages(HeapId heap) const {
  std::vector<PageInfo> out;
  region(heap).for_each_page([&](std::uint64_t global, const PageRecord& rec, const Extent&) {
    out.push_back(PageInfo{global, rec.live_bytes.load(std::memory_order_relaxed),
                           rec.live_slots.load(std::memory_order_relaxed),
                           rec.resident.load(std::memory_order_relaxed)});
  });
  return out;
}

std::vector<HintEvent> RegionSet::emit_hints(
    HeapId heap, HintKind kind, const std::function<bool(const PageInfo&)>& eligible,
    std::uint64_t window) {
  HeapRegion& r = region(heap);
  std::vector<std::uint64_t> chosen;
  r.for_each_page([&](std::uint64_t global, const PageRecord& rec, const Extent&) {
    const PageInfo info{global, rec.live_bytes.load(std::memory_order_relaxed),
                        rec.live_slots.load(std::memory_order_relaxed),
                        rec.resident.load(std::memory_order_relaxed)};
    if (eligible(info)) chosen.push_back(global);
  });
  std::vector<HintEvent> events;
  for (const auto& [start, end] : coalesce_pages(chosen)) {
    events.push_back(HintEvent{kind, heap, start, end, window});
    if (kind == HintKind::kPageoutAdvice) {
      for (std::uint64_t p = start; p < end; ++p) r.drop_residency(p);
    }
    r.platform_advise(start, end, kind);
  }
  return events;
}

std::uint64_t RegionSet::reclaim_empty_pages() {
  std::uint64_t released = 0;
  for (auto& r : regions_) {
    std::vector<std::uint64_t> empty;
    r->for_each_page([&](std::uint64_t global, const PageRecord& rec, const Extent&) {
      if (rec.live_slots.load(std::memory_order_relaxed) == 0 &&
          rec.resident.load(std::memory_order_relaxed)) {
        empty.push_back(global);
      }
    });
    for (const std::uint64_t p : empty) {
      if (r->drop_residency(p, /*only_if_empty=*/true)) ++released;
    }
  }
  return released;
}

RegionAudit RegionSet::audit() const {
  RegionAudit out;
  for (const auto& r : regions_) {
    r->audit(out);
    if (!out.ok) break;
  }
  return out;
}

}  // namespace objspace
