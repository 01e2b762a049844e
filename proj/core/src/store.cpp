#include "objspace/store.hpp"

#include <bit>
#include <mutex>

#include "op_scope.hpp"

namespace objspace {

namespace {

std::uint64_t hash_key(std::string_view key) noexcept {
  std::uint64_t h = payload_checksum(detail::as_bytes(key));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

}  // namespace

HashMapStore::HashMapStore(Runtime& runtime, std::size_t expected_keys) : KvStore{runtime} {
  const std::size_t per_stripe = std::bit_ceil(std::max<std::size_t>(4, expected_keys / kStripes));
  for (Stripe& s : stripes_) s.buckets.resize(per_stripe);
}

HashMapStore::Entry* HashMapStore::find(ThreadContext& ctx, Bucket& bucket, std::uint64_t hash,
                                        std::string_view key) {
  for (Entry& e : bucket) {
    if (e.hash != hash) continue;
    if (detail::as_chars(rt_.access(ctx, e.key)) == key) return &e;
  }
  return nullptr;
}

void HashMapStore::grow(Stripe& s) {
  std::vector<Bucket> next(s.buckets.size() * 2);
  for (Bucket& b : s.buckets) {
    for (const Entry& e : b) next[(e.hash / kStripes) & (next.size() - 1)].push_back(e);
  }
  s.buckets.swap(next);
}

void HashMapStore::set(std::string_view key, std::string_view value) {
  const std::uint64_t hash = hash_key(key);
  Stripe& s = stripe_for(hash);
  std::unique_lock lock{s.mutex};
  detail::OpScope scope{rt_};
  Bucket& bucket = bucket_for(s, hash);
  if (Entry* e = find(scope.ctx(), bucket, hash, key)) {
    rt_.replace_object(scope.ctx(), e->value, detail::as_bytes(value));
    return;
  }
  const CellIndex k = rt_.create_object(HeapId::kNew, detail::as_bytes(key));
  const CellIndex v = rt_.create_object(HeapId::kNew, detail::as_bytes(value));
  bucket.push_back({hash, k, v});
  size_.fetch_add(1, std::memory_order_relaxed);
  if (++s.entries > s.buckets.size()) grow(s);
}

bool HashMapStore::get(std::string_view key, std::string& out) {
  const std::uint64_t hash = hash_key(key);
  Stripe& s = stripe_for(hash);
  std::shared_lock lock{s.mutex};
  detail::OpScope scope{rt_};
  Entry* e = find(scope.ctx(), bucket_for(s, hash), hash, key);
  if (e == nullptr) return false;
  out.assign(detail::as_chars(rt_.access(scope.ctx(), e->value)));
  return true;
}

bool HashMapStore::erase(std::string_view key) {
  const std::uint64_t hash = hash_key(key);
  Stripe& s = stripe_for(hash);
  std::unique_lock lock{s.mutex};
  detail::OpScope scope{rt_};
  Bucket& bucket = bucket_for(s, hash);
  Entry* e = find(scope.ctx(), bucket, hash, key);
  if (e == nullptr) return false;
  rt_.destroy_object(scope.ctx(), e->key);
  rt_.destroy_object(scope.ctx(), e->value);
  *e = bucket.back();
  bucket.pop_back();
  --s.entries;
  size_.fetch_sub(1, std::memory_order_relaxed);
  return true;
}

std::unique_ptr<KvStore> make_store(StoreKind kind, Runtime& runtime, std::size_t expected_keys) {
  switch (kind) {
    case StoreKind::kHashMap:
      return std::make_unique<HashMapStore>(runtime, expected_keys);
    case StoreKind::kSkipList:
      return std::make_unique<SkipListStore>(runtime);
  }
  return nullptr;
}

}  // namespace objspace
