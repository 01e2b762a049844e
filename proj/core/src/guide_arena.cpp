#include "objspace/guide_arena.hpp"

#include <stdexcept>

namespace objspace {

GuideArena::GuideArena() = default;

GuideArena::~GuideArena() {
  for (auto& chunk : chunks_) delete chunk.load(std::memory_order_relaxed);
}

CellIndex GuideArena::acquire(std::uint64_t initial_word) {
  CellIndex index;
  {
    std::lock_guard lock{mutex_};
    if (!free_.empty()) {
      index = free_.back();
      free_.pop_back();
    } else {
      const std::size_t fresh = next_fresh_.load(std::memory_order_relaxed);
      if (fresh >= kMaxCells) throw std::length_error("guide arena exhausted");
      const std::size_t chunk = fresh / kChunkCells;
      if (chunks_[chunk].load(std::memory_order_relaxed) == nullptr) {
        chunks_[chunk].store(new Chunk{}, std::memory_order_release);
      }
      index = static_cast<CellIndex>(fresh);
      next_fresh_.store(fresh + 1, std::memory_order_release);
    }
  }
  cell(index).store(initial_word, std::memory_order_release);
  return index;
}

void GuideArena::release(CellIndex index) {
  std::lock_guard lock{mutex_};
  free_.push_back(index);
}

std::size_t GuideArena::live_cells() const {
  std::lock_guard lock{mutex_};
  return next_fresh_.load(std::memory_order_relaxed) - free_.size();
}

}  // namespace objspace
