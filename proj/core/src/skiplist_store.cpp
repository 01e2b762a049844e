#include <algorithm>
#include <bit>
#include <cstring>
#include <mutex>
#include <random>

#include "objspace/store.hpp"
#include "op_scope.hpp"

namespace objspace {

SkipListStore::SkipListStore(Runtime& runtime) : KvStore{runtime} {
  head_.key = kNoValue;
  head_.height = kMaxLevel;
}

SkipListStore::~SkipListStore() {
  Node* cur = head_.next[0].load(std::memory_order_acquire);
  while (cur != nullptr) {
    Node* next = cur->next[0].load(std::memory_order_relaxed);
    delete cur;
    cur = next;
  }
}

int SkipListStore::random_height() noexcept {
  thread_local std::mt19937_64 rng{0x5eed5eedULL};
  const int h = 1 + std::countr_zero(rng() | (std::uint64_t{1} << (kMaxLevel - 1)));
  return std::min(h, kMaxLevel);
}

int SkipListStore::compare(ThreadContext& ctx, const Node* node, std::string_view key) {
  return detail::as_chars(rt_.access(ctx, node->key)).compare(key);
}

SkipListStore::Node* SkipListStore::find(ThreadContext& ctx, std::string_view key,
                                         std::array<Node*, kMaxLevel>& preds,
                                         std::array<Node*, kMaxLevel>& succs) {
  Node* pred = &head_;
  int last_cmp = 1;
  for (int level = kMaxLevel - 1; level >= 0; --level) {
    Node* cur = pred->next[level].load(std::memory_order_acquire);
    last_cmp = 1;
    while (cur != nullptr) {
      last_cmp = compare(ctx, cur, key);
      if (last_cmp >= 0) break;
      pred = cur;
      cur = cur->next[level].load(std::memory_order_acquire);
    }
    preds[level] = pred;
    succs[level] = cur;
  }
  return (succs[0] != nullptr && last_cmp == 0) ? succs[0] : nullptr;
}

void SkipListStore::set(std::string_view key, std::string_view value) {
  detail::OpScope scope{rt_};
  ThreadContext& ctx = scope.ctx();
  std::array<Node*, kMaxLevel> preds{};
  std::array<Node*, kMaxLevel> succs{};
  Node* fresh = nullptr;

  for (;;) {
    if (Node* found = find(ctx, key, preds, succs)) {
      if (fresh != nullptr) {
        rt_.destroy_object(ctx, fresh->key);
        rt_.destroy_object(ctx, fresh->value);
        delete fresh;
      }
      std::unique_lock lock{found->value_mutex};
      if (found->value != kNoValue) {
        rt_.replace_object(ctx, found->value, detail::as_bytes(value));
      } else {
        found->value = rt_.create_object(HeapId::kNew, detail::as_bytes(value));
        size_.fetch_add(1, std::memory_order_relaxed);
      }
      return;
    }
    if (fresh == nullptr) {
      fresh = new Node{};
      fresh->key = rt_.create_object(HeapId::kNew, detail::as_bytes(key));
      fresh->value = rt_.create_object(HeapId::kNew, detail::as_bytes(value));
      fresh->height = random_height();
    }
    for (int l = 0; l < fresh->height; ++l) {
      fresh->next[l].store(succs[l], std::memory_order_relaxed);
    }
    Node* expected = succs[0];
    if (preds[0]->next[0].compare_exchange_strong(expected, fresh, std::memory_order_acq_rel)) {
      break;
    }
  }
  size_.fetch_add(1, std::memory_order_relaxed);
  nodes_.fetch_add(1, std::memory_order_relaxed);

  for (int l = 1; l < fresh->height; ++l) {
    for (;;) {
      Node* expected = succs[l];
      fresh->next[l].store(expected, std::memory_order_release);
      if (preds[l]->next[l].compare_exchange_strong(expected, fresh, std::memory_order_acq_rel)) {
        break;
      }
      find(ctx, key, preds, succs);
    }
  }
}

bool SkipListStore::get(std::string_view key, std::string& out) {
  detail::OpScope scope{rt_};
  std::array<Node*, kMaxLevel> preds{};
  std::array<Node*, kMaxLevel> succs{};
  Node* found = find(scope.ctx(), key, preds, succs);
  if (found == nullptr) return false;
  std::shared_lock lock{found->value_mutex};
  if (found->value == kNoValue) return false;
  out.assign(detail::as_chars(rt_.access(scope.ctx(), found->value)));
  return true;
}

bool SkipListStore::erase(std::string_view key) {
  detail::OpScope scope{rt_};
  std::array<Node*, kMaxLevel> preds{};
  std::array<Node*, kMaxLevel> succs{};
  Node* found = find(scope.ctx(), key, preds, succs);
  if (found == nullptr) return false;
  std::unique_lock lock{found->value_mutex};
  if (found->value == kNoValue) return false;
  rt_.destroy_object(scope.ctx(), found->value);
  found->value = kNoValue;
  size_.fetch_sub(1, std::memory_order_relaxed);
  return true;
}

}  // namespace objspace
