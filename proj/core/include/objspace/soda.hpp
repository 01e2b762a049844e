#pragma once

/// \file
/// Sparse two-level presence bitmap over the guide-cell arena. One bit per
/// potential cell; blocks of bits are materialized on first set and dropped
/// once their last bit clears.

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <shared_mutex>
#include <stdexcept>
#include <vector>

#include "objspace/guide_word.hpp"

namespace objspace {

class SodaFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class SodaBitmap {
 public:
  static constexpr std::size_t kDefaultBlockCells = std::size_t{1} << 16;

  explicit SodaBitmap(std::size_t block_cells = kDefaultBlockCells);
  ~SodaBitmap();
  SodaBitmap(const SodaBitmap&) = delete;
  SodaBitmap& operator=(const SodaBitmap&) = delete;

  /// Idempotent.
  void set(CellIndex index);
  /// Throws SodaFault if the bit is not set.
  void clear(CellIndex index);
  [[nodiscard]] bool test(CellIndex index) const;

  /// Visits live indices in ascending order. Indices set or cleared during
  /// the walk may or may not be visited. Returns the visit count.
  std::size_t iterate_live(const std::function<void(CellIndex)>& visitor) const;

  [[nodiscard]] std::size_t block_cells() const noexcept { return block_cells_; }
  [[nodiscard]] std::size_t materialized_blocks() const;
  [[nodiscard]] std::size_t count() const;

 private:
  struct Block {
    explicit Block(std::size_t words) : bits(words) {}
    std::vector<std::atomic<std::uint64_t>> bits;
    std::atomic<std::uint32_t> population{0};
  };

  void reclaim_if_empty(std::size_t block_index);

  std::size_t block_cells_;
  std::size_t words_per_block_;
  // Shared for bit flips and scans, exclusive for directory changes.
  mutable std::shared_mutex directory_mutex_;
  std::vector<std::unique_ptr<Block>> directory_;
  std::size_t materialized_{0};
};

}  // namespace objspace
