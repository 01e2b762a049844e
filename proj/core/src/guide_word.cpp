#include "objspace/guide_word.hpp"

#include <string>

namespace objspace {

namespace gl = guide_layout;

std::string_view heap_name(HeapId heap) noexcept {
  switch (heap) {
    case HeapId::kNew:
      return "NEW";
    case HeapId::kHot:
      return "HOT";
    case HeapId::kCold:
      return "COLD";
    case HeapId::kReserved:
      break;
  }
  return "RESERVED";
}

std::uint64_t pack(const GuideFields& f) {
  if (f.locator > gl::kMaxLocator) {
    throw EncodingError("guide locator exceeds 48 bits: " + std::to_string(f.locator));
  }
  if (f.atc > gl::kMaxAtc) {
    throw EncodingError("guide ATC exceeds 7 bits: " + std::to_string(f.atc));
  }
  if (f.ciw > gl::kMaxCiw) {
    throw EncodingError("guide CIW exceeds 5 bits: " + std::to_string(f.ciw));
  }
  const auto heap = static_cast<std::uint64_t>(f.heap);
  if (heap > 3) throw EncodingError("guide heap id exceeds 2 bits");
  return f.locator | (std::uint64_t{f.atc} << gl::kAtcShift) |
         (std::uint64_t{f.ciw} << gl::kCiwShift) | (heap << gl::kHeapShift) |
         (f.accessed ? gl::kAccessedBit : 0) | (f.migration_lock ? gl::kLockBit : 0);
}

GuideFields unpack(std::uint64_t w) noexcept {
  return GuideFields{.locator = locator_of(w),
                     .atc = static_cast<std::uint8_t>(atc_of(w)),
                     .ciw = static_cast<std::uint8_t>(ciw_of(w)),
                     .heap = heap_of(w),
                     .accessed = is_accessed(w),
                     .migration_lock = is_locked(w)};
}

Dereference GuideCell::dereference() noexcept {
  std::uint64_t w = word_.load(std::memory_order_acquire);
  // Hot path: flag already set and nobody is migrating, so skip the store.
  if (is_accessed(w) && !is_locked(w)) {
    return {locator_of(w), DerefOutcome::kAlreadyAccessed};
  }
  for (int attempt = 0; attempt < kDerefRetryLimit; ++attempt) {
    const std::uint64_t desired = (w | gl::kAccessedBit) & ~gl::kLockBit;
    if (word_.compare_exchange_weak(w, desired, std::memory_order_seq_cst,
                                    std::memory_order_acquire)) {
      return {locator_of(desired), DerefOutcome::kFlagsUpdated};
    }
    if (is_accessed(w) && !is_locked(w)) {
      return {locator_of(w), DerefOutcome::kAlreadyAccessed};
    }
  }
  return {locator_of(word_.load(std::memory_order_acquire)), DerefOutcome::kRetriesExhausted};
}

bool GuideCell::atc_increment() noexcept {
  std::uint64_t w = word_.load(std::memory_order_acquire);
  for (;;) {
    if (atc_of(w) >= gl::kMaxAtc) return false;
    const std::uint64_t desired = (w + gl::kAtcOne) & ~gl::kLockBit;
    if (word_.compare_exchange_weak(w, desired, std::memory_order_seq_cst,
                                    std::memory_order_acquire)) {
      return true;
    }
  }
}

void GuideCell::atc_decrement() {
  std::uint64_t w = word_.load(std::memory_order_acquire);
  for (;;) {
    if (atc_of(w) == 0) throw ProtocolViolation("ATC decrement at zero");
    if (word_.compare_exchange_weak(w, w - gl::kAtcOne, std::memory_order_seq_cst,
                                    std::memory_order_acquire)) {
      return;
    }
  }
}

GuideCas GuideCell::try_lock_for_migration(std::uint64_t expected) noexcept {
  if (atc_of(expected) != 0 || is_locked(expected)) {
    return {false, word_.load(std::memory_order_acquire)};
  }
  std::uint64_t observed = expected;
  const std::uint64_t locked = expected | gl::kLockBit;
  if (word_.compare_exchange_strong(observed, locked, std::memory_order_seq_cst)) {
    return {true, locked};
  }
  return {false, observed};
}

GuideCas GuideCell::commit_migration(std::uint64_t locked, std::uint64_t replacement) noexcept {
  std::uint64_t observed = locked;
  if (word_.compare_exchange_strong(observed, replacement, std::memory_order_seq_cst)) {
    return {true, replacement};
  }
  return {false, observed};
}

}  // namespace objspace
