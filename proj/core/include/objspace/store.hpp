#pragma once

/// \file
/// Guide-managed key-value stores. Keys and values are deep-copied into
/// runtime objects on insert; every public operation runs inside exactly one
/// outermost scope and reaches key and value bytes only through guides.

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "objspace/runtime.hpp"

namespace objspace {

class KvStore {
 public:
  explicit KvStore(Runtime& runtime) : rt_{runtime} {}
  virtual ~KvStore() = default;
  KvStore(const KvStore&) = delete;
  KvStore& operator=(const KvStore&) = delete;

  /// Inserts or overwrites. An overwrite publishes a fresh NEW-heap copy.
  virtual void set(std::string_view key, std::string_view value) = 0;
  /// Copies the value into \p out. Returns false when the key is absent.
  virtual bool get(std::string_view key, std::string& out) = 0;
  /// Returns true if the key existed.
  virtual bool erase(std::string_view key) = 0;
  [[nodiscard]] virtual std::size_t size() const noexcept = 0;
  [[nodiscard]] virtual std::string_view name() const noexcept = 0;

  [[nodiscard]] Runtime& runtime() noexcept { return rt_; }

 protected:
  Runtime& rt_;
};

/// Hash map with 64 lock stripes, each owning a power-of-two bucket array.
class HashMapStore final : public KvStore {
 public:
  static constexpr std::size_t kStripes = 64;

  explicit HashMapStore(Runtime& runtime, std::size_t expected_keys = 0);

  void set(std::string_view key, std::string_view value) override;
  bool get(std::string_view key, std::string& out) override;
  bool erase(std::string_view key) override;
  [[nodiscard]] std::size_t size() const noexcept override {
    return size_.load(std::memory_order_relaxed);
  }
  [[nodiscard]] std::string_view name() const noexcept override { return "hashmap"; }

 private:
  struct Entry {
    std::uint64_t hash;
    CellIndex key;
    CellIndex value;
  };
  using Bucket = std::vector<Entry>;
  struct alignas(64) Stripe {
    mutable std::shared_mutex mutex;
    std::vector<Bucket> buckets;
    std::size_t entries{0};
  };

  Stripe& stripe_for(std::uint64_t hash) noexcept { return stripes_[hash % kStripes]; }
  static Bucket& bucket_for(Stripe& s, std::uint64_t hash) noexcept {
    return s.buckets[(hash / kStripes) & (s.buckets.size() - 1)];
  }
  Entry* find(ThreadContext& ctx, Bucket& bucket, std::uint64_t hash, std::string_view key);
  static void grow(Stripe& s);

  std::array<Stripe, kStripes> stripes_;
  std::atomic<std::size_t> size_{0};
};

/// Skip list with lock-free CAS insertion per level and no physical removal:
/// a deleted key keeps its node and key guide while its value guide is
/// destroyed. Value access is serialized per node.
class SkipListStore final : public KvStore {
 public:
  static constexpr int kMaxLevel = 20;

  explicit SkipListStore(Runtime& runtime);
  ~SkipListStore() override;

  void set(std::string_view key, std::string_view value) override;
  bool get(std::string_view key, std::string& out) override;
  bool erase(std::string_view key) override;
  [[nodiscard]] std::size_t size() const noexcept override {
    return size_.load(std::memory_order_relaxed);
  }
  [[nodiscard]] std::string_view name() const noexcept override { return "skiplist"; }

  /// Nodes ever linked, including those whose value was deleted.
  [[nodiscard]] std::size_t node_count() const noexcept {
    return nodes_.load(std::memory_order_relaxed);
  }

 private:
  static constexpr CellIndex kNoValue = ~CellIndex{0};

  struct Node {
    CellIndex key;  // kNoValue for the head sentinel
    int height;
    std::shared_mutex value_mutex;
    CellIndex value{kNoValue};
    std::array<std::atomic<Node*>, kMaxLevel> next{};
  };

  int compare(ThreadContext& ctx, const Node* node, std::string_view key);
  /// Fills preds/succs at every level; returns the node holding key, if any.
  Node* find(ThreadContext& ctx, std::string_view key, std::array<Node*, kMaxLevel>& preds,
             std::array<Node*, kMaxLevel>& succs);
  static int random_height() noexcept;

  Node head_;
  std::atomic<std::size_t> size_{0};
  std::atomic<std::size_t> nodes_{0};
};

enum class StoreKind : std::uint8_t { kHashMap, kSkipList };

[[nodiscard]] std::unique_ptr<KvStore> make_store(StoreKind kind, Runtime& runtime,
                                                  std::size_t expected_keys = 0);

}  // namespace objspace
