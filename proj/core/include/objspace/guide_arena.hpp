#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "objspace/guide_word.hpp"

namespace objspace {

/// Stable storage for guide cells. A cell's index never changes while it is
/// live, and the cell itself never moves in memory, so collectors and
/// mutators can hold a CellIndex across migrations.
class GuideArena {
 public:
  static constexpr std::size_t kChunkCells = std::size_t{1} << 16;
  static constexpr std::size_t kMaxChunks = std::size_t{1} << 12;
  static constexpr std::size_t kMaxCells = kChunkCells * kMaxChunks;

  GuideArena();
  ~GuideArena();
  GuideArena(const GuideArena&) = delete;
  GuideArena& operator=(const GuideArena&) = delete;

  /// Returns a cell holding \p initial_word. Reuses released cells first.
  [[nodiscard]] CellIndex acquire(std::uint64_t initial_word);

  /// Returns \p index to the free pool. The caller must ensure no thread still
  /// holds the index inside an open scope.
  void release(CellIndex index);

  [[nodiscard]] GuideCell& cell(CellIndex index) noexcept {
    return chunks_[index / kChunkCells].load(std::memory_order_acquire)->cells[index % kChunkCells];
  }
  [[nodiscard]] const GuideCell& cell(CellIndex index) const noexcept {
    return chunks_[index / kChunkCells].load(std::memory_order_acquire)->cells[index % kChunkCells];
  }

  /// Number of cells currently handed out.
  [[nodiscard]] std::size_t live_cells() const;
  /// One past the highest index ever handed out.
  [[nodiscard]] std::size_t high_water() const noexcept {
    return next_fresh_.load(std::memory_order_acquire);
  }

 private:
  struct Chunk {
    std::array<GuideCell, kChunkCells> cells;
  };

  std::array<std::atomic<Chunk*>, kMaxChunks> chunks_{};
  mutable std::mutex mutex_;
  std::vector<CellIndex> free_;
  std::atomic<std::size_t> next_fresh_{0};
};

}  // namespace objspace
