#pragma once

/// \file
/// Packed guide words and the atomic transitions performed on them.
///
/// A guide is a single 64-bit word that names the current location of a
/// managed object and carries its per-object metadata in the high bits:
///
///   bits  0..47  locator (offset into the managed address space)
///   bits 48..54  ATC, active thread count
///   bits 55..59  CIW, consecutive inactive windows
///   bits 60..61  heap id (NEW, HOT, COLD, RESERVED)
///   bit  62      accessed flag
///   bit  63      migration-lock flag
///
/// Every mutation of a guide is a single-word CAS or RMW, so readers always
/// observe either the pre- or post-migration word and never a mixture.

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace objspace {

using Locator = std::uint64_t;
using CellIndex = std::uint32_t;

enum class HeapId : std::uint8_t { kNew = 0, kHot = 1, kCold = 2, kReserved = 3 };

inline constexpr int kManagedHeapCount = 3;

[[nodiscard]] std::string_view heap_name(HeapId heap) noexcept;

namespace guide_layout {

inline constexpr unsigned kLocatorBits = 48;
inline constexpr unsigned kAtcShift = 48;
inline constexpr unsigned kAtcBits = 7;
inline constexpr unsigned kCiwShift = 55;
inline constexpr unsigned kCiwBits = 5;
inline constexpr unsigned kHeapShift = 60;
inline constexpr unsigned kHeapBits = 2;
inline constexpr unsigned kAccessedShift = 62;
inline constexpr unsigned kLockShift = 63;

inline constexpr std::uint64_t kLocatorMask = (std::uint64_t{1} << kLocatorBits) - 1;
inline constexpr std::uint64_t kAtcMask = ((std::uint64_t{1} << kAtcBits) - 1) << kAtcShift;
inline constexpr std::uint64_t kCiwMask = ((std::uint64_t{1} << kCiwBits) - 1) << kCiwShift;
inline constexpr std::uint64_t kHeapMask = ((std::uint64_t{1} << kHeapBits) - 1) << kHeapShift;
inline constexpr std::uint64_t kAccessedBit = std::uint64_t{1} << kAccessedShift;
inline constexpr std::uint64_t kLockBit = std::uint64_t{1} << kLockShift;
inline constexpr std::uint64_t kAtcOne = std::uint64_t{1} << kAtcShift;

inline constexpr std::uint64_t kMaxLocator = kLocatorMask;
inline constexpr unsigned kMaxAtc = (1U << kAtcBits) - 1;  // 127
inline constexpr unsigned kMaxCiw = (1U << kCiwBits) - 1;  // 31

}  // namespace guide_layout

struct GuideFields {
  Locator locator{0};
  std::uint8_t atc{0};
  std::uint8_t ciw{0};
  HeapId heap{HeapId::kNew};
  bool accessed{false};
  bool migration_lock{false};

  friend bool operator==(const GuideFields&, const GuideFields&) = default;
};

class EncodingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the scope protocol is broken (e.g. an ATC decrement at zero).
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Encodes \p fields; throws EncodingError if a field exceeds its bit width.
[[nodiscard]] std::uint64_t pack(const GuideFields& fields);

/// Total inverse of pack(); a RESERVED heap id is reported as-is.
[[nodiscard]] GuideFields unpack(std::uint64_t word) noexcept;

// Field accessors on raw words.
[[nodiscard]] constexpr Locator locator_of(std::uint64_t w) noexcept {
  return w & guide_layout::kLocatorMask;
}
[[nodiscard]] constexpr unsigned atc_of(std::uint64_t w) noexcept {
  return static_cast<unsigned>((w & guide_layout::kAtcMask) >> guide_layout::kAtcShift);
}
[[nodiscard]] constexpr unsigned ciw_of(std::uint64_t w) noexcept {
  return static_cast<unsigned>((w & guide_layout::kCiwMask) >> guide_layout::kCiwShift);
}
[[nodiscard]] constexpr HeapId heap_of(std::uint64_t w) noexcept {
  return static_cast<HeapId>((w & guide_layout::kHeapMask) >> guide_layout::kHeapShift);
}
[[nodiscard]] constexpr bool is_accessed(std::uint64_t w) noexcept {
  return (w & guide_layout::kAccessedBit) != 0;
}
[[nodiscard]] constexpr bool is_locked(std::uint64_t w) noexcept {
  return (w & guide_layout::kLockBit) != 0;
}
[[nodiscard]] constexpr std::uint64_t with_ciw(std::uint64_t w, unsigned ciw) noexcept {
  return (w & ~guide_layout::kCiwMask) |
         ((static_cast<std::uint64_t>(ciw) << guide_layout::kCiwShift) & guide_layout::kCiwMask);
}

enum class DerefOutcome : std::uint8_t {
  kAlreadyAccessed,  // fast path, no store issued
  kFlagsUpdated,     // accessed set and/or lock cleared by this call
  kRetriesExhausted  // contention; locator read with flags left as-is
};

struct Dereference {
  Locator locator;
  DerefOutcome outcome;
};

/// Outcome of a compare-and-exchange on a guide. \c observed is the word that
/// is stored after the call: the installed word on success, the conflicting
/// word otherwise.
struct GuideCas {
  bool ok;
  std::uint64_t observed;
};

/// One atomically updated guide word. Cells live in a GuideArena and never
/// move; migration only rewrites the word.
class GuideCell {
 public:
  static constexpr int kDerefRetryLimit = 64;

  GuideCell() noexcept = default;
  explicit GuideCell(std::uint64_t word) noexcept : word_{word} {}
  GuideCell(const GuideCell&) = delete;
  GuideCell& operator=(const GuideCell&) = delete;

  [[nodiscard]] std::uint64_t load(
      std::memory_order order = std::memory_order_acquire) const noexcept {
    return word_.load(order);
  }
  void store(std::uint64_t word,
             std::memory_order order = std::memory_order_release) noexcept {
    word_.store(word, order);
  }

  /// Resolves the guide, setting accessed and clearing the migration lock when
  /// either needs it. Never changes the locator bits.
  Dereference dereference() noexcept;

  /// atc += 1 and clears the migration lock. Returns false, leaving the word
  /// untouched, when the count is saturated at 127.
  bool atc_increment() noexcept;

  /// atc -= 1. Throws ProtocolViolation (without modifying the word) at zero.
  void atc_decrement();

  /// First migration CAS: expected -> expected | lock.
  GuideCas try_lock_for_migration(std::uint64_t expected) noexcept;

  /// Second migration CAS: locked -> replacement. Fails if any access touched
  /// the word after the lock was taken.
  GuideCas commit_migration(std::uint64_t locked, std::uint64_t replacement) noexcept;

  /// General single-word CAS used by store-side publication and by the
  /// collector's classification pass. Sequentially consistent: slot retirement
  /// pairs it with the collector's copy hazard.
  bool compare_exchange(std::uint64_t& expected, std::uint64_t desired) noexcept {
    return word_.compare_exchange_strong(expected, desired, std::memory_order_seq_cst);
  }

 private:
  std::atomic<std::uint64_t> word_{0};
};

static_assert(sizeof(GuideCell) == sizeof(std::uint64_t));

}  // namespace objspace
