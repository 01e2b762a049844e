#include "objspace/soda.hpp"

#include <bit>
#include <mutex>
#include <string>

namespace objspace {

SodaBitmap::SodaBitmap(std::size_t block_cells)
    : block_cells_{block_cells}, words_per_block_{block_cells / 64} {
  if (block_cells == 0 || block_cells % 64 != 0) {
    throw std::invalid_argument("SODA block size must be a positive multiple of 64");
  }
}

SodaBitmap::~SodaBitmap() = default;

void SodaBitmap::set(CellIndex index) {
  const std::size_t b = index / block_cells_;
  const std::size_t offset = index % block_cells_;
  const std::uint64_t mask = std::uint64_t{1} << (offset % 64);
  {
    std::shared_lock lock{directory_mutex_};
    if (b < directory_.size() && directory_[b]) {
      Block& block = *directory_[b];
      if ((block.bits[offset / 64].fetch_or(mask, std::memory_order_acq_rel) & mask) == 0) {
        block.population.fetch_add(1, std::memory_order_acq_rel);
      }
      return;
    }
  }
  std::unique_lock lock{directory_mutex_};
  if (b >= directory_.size()) directory_.resize(b + 1);
  if (!directory_[b]) {
    directory_[b] = std::make_unique<Block>(words_per_block_);
    ++materialized_;
  }
  Block& block = *directory_[b];
  if ((block.bits[offset / 64].fetch_or(mask, std::memory_order_acq_rel) & mask) == 0) {
    block.population.fetch_add(1, std::memory_order_acq_rel);
  }
}

void SodaBitmap::clear(CellIndex index) {
  const std::size_t b = index / block_cells_;
  const std::size_t offset = index % block_cells_;
  const std::uint64_t mask = std::uint64_t{1} << (offset % 64);
  bool emptied = false;
  {
    std::shared_lock lock{directory_mutex_};
    if (b >= directory_.size() || !directory_[b]) {
      throw SodaFault("clear of unset SODA bit " + std::to_string(index));
    }
    Block& block = *directory_[b];
    if ((block.bits[offset / 64].fetch_and(~mask, std::memory_order_acq_rel) & mask) == 0) {
      throw SodaFault("clear of unset SODA bit " + std::to_string(index));
    }
    emptied = block.population.fetch_sub(1, std::memory_order_acq_rel) == 1;
  }
  if (emptied) reclaim_if_empty(b);
}

void SodaBitmap::reclaim_if_empty(std::size_t b) {
  std::unique_lock lock{directory_mutex_};
  if (b < directory_.size() && directory_[b] &&
      directory_[b]->population.load(std::memory_order_acquire) == 0) {
    directory_[b].reset();
    --materialized_;
  }
}

bool SodaBitmap::test(CellIndex index) const {
  const std::size_t b = index / block_cells_;
  const std::size_t offset = index % block_cells_;
  std::shared_lock lock{directory_mutex_};
  if (b >= directory_.size() || !directory_[b]) return false;
  return (directory_[b]->bits[offset / 64].load(std::memory_order_acquire) >> (offset % 64)) & 1U;
}

std::size_t SodaBitmap::iterate_live(const std::function<void(CellIndex)>& visitor) const {
  std::size_t visits = 0;
  std::size_t b = 0;
  for (;;) {
    // Copy one block's words at a time so mutators and the visitor never
    // contend on the directory lock for longer than a block snapshot.
    std::vector<std::uint64_t> snapshot;
    {
      std::shared_lock lock{directory_mutex_};
      while (b < directory_.size() && !directory_[b]) ++b;
      if (b >= directory_.size()) break;
      const Block& block = *directory_[b];
      snapshot.reserve(words_per_block_);
      for (const auto& word : block.bits) snapshot.push_back(word.load(std::memory_order_acquire));
    }
    for (std::size_t w = 0; w < snapshot.size(); ++w) {
      std::uint64_t bits = snapshot[w];
      if (bits == 0) continue;
      {
        // Drop bits cleared since the snapshot.
        std::shared_lock lock{directory_mutex_};
        bits &= directory_[b] ? directory_[b]->bits[w].load(std::memory_order_acquire) : 0;
      }
      while (bits != 0) {
        const auto bit = static_cast<std::size_t>(std::countr_zero(bits));
        bits &= bits - 1;
        visitor(static_cast<CellIndex>(b * block_cells_ + w * 64 + bit));
        ++visits;
      }
    }
    ++b;
  }
  return visits;
}

std::size_t SodaBitmap::materialized_blocks() const {
  std::shared_lock lock{directory_mutex_};
  return materialized_;
}

std::size_t SodaBitmap::count() const {
  std::shared_lock lock{directory_mutex_};
  std::size_t n = 0;
  for (const auto& block : directory_) {
    if (block) n += block->population.load(std::memory_order_acquire);
  }
  return n;
}

}  // namespace objspace
