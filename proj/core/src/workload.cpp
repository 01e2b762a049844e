#include "objspace/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

namespace objspace {

std::uint64_t SplitMix64::next_below(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection.
  std::uint64_t x = next();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = -bound % bound;
    while (low < threshold) {
      x = next();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double generalized_harmonic(std::uint64_t n, double alpha) noexcept {
  double sum = 0;
  // Smallest terms first for accuracy.
  for (std::uint64_t k = n; k >= 1; --k) sum += 1.0 / std::pow(static_cast<double>(k), alpha);
  return sum;
}

ZipfGenerator::ZipfGenerator(std::uint64_t key_count, double alpha, std::uint64_t seed)
    : rng_{seed} {
  if (key_count == 0) throw std::invalid_argument("Zipf generator needs at least one key");
  if (!(alpha >= 0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("Zipf alpha must be finite and non-negative");
  }
  cdf_.resize(key_count);
  double acc = 0;
  for (std::uint64_t k = 0; k < key_count; ++k) {
    acc += 1.0 / std::pow(static_cast<double>(k + 1), alpha);
    cdf_[k] = acc;
  }
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::uint64_t ZipfGenerator::next() noexcept {
  const double u = rng_.next_double();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<std::uint64_t>(static_cast<std::uint64_t>(it - cdf_.begin()), cdf_.size() - 1);
}

double ZipfGenerator::probability(std::uint64_t k) const noexcept {
  if (k >= cdf_.size()) return 0.0;
  return k == 0 ? cdf_[0] : cdf_[k] - cdf_[k - 1];
}

void WorkloadSpec::validate() const {
  if (key_count == 0) throw std::invalid_argument("key count must be positive");
  if (key_size == 0) throw std::invalid_argument("key size must be positive");
  if (value_size < kMinValueSize) {
    throw std::invalid_argument("value size must be at least " + std::to_string(kMinValueSize));
  }
  if (!(zipf_alpha >= 0) || !std::isfinite(zipf_alpha)) {
    throw std::invalid_argument("zipf alpha must be finite and non-negative");
  }
  if (read_pct + update_pct + insert_pct + delete_pct != 100) {
    throw std::invalid_argument("operation percentages must sum to 100");
  }
}

std::vector<std::uint64_t> key_permutation(std::uint64_t key_count, std::uint64_t seed) {
  std::vector<std::uint64_t> perm(key_count);
  for (std::uint64_t i = 0; i < key_count; ++i) perm[i] = i;
  SplitMix64 rng{seed ^ 0x7065726d75746521ULL};
  for (std::uint64_t i = key_count; i > 1; --i) std::swap(perm[i - 1], perm[rng.next_below(i)]);
  return perm;
}

namespace {
std::uint64_t worker_seed(std::uint64_t seed, unsigned worker) noexcept {
  SplitMix64 s{seed + 0x632be59bd9b4e019ULL * (worker + 1)};
  return s.next();
}
}  // namespace

OpStream::OpStream(const WorkloadSpec& spec, const std::vector<std::uint64_t>& permutation,
                   unsigned worker, unsigned workers)
    : spec_{spec},
      perm_{permutation},
      zipf_{spec.key_count, spec.zipf_alpha, worker_seed(spec.seed, worker)},
      mix_{worker_seed(spec.seed, worker) ^ 0xa5a5a5a5a5a5a5a5ULL},
      next_insert_{spec.key_count + worker},
      workers_{workers} {}

Operation OpStream::next() noexcept {
  const std::uint64_t roll = mix_.next_below(100);
  OpKind kind;
  if (roll < spec_.read_pct) {
    kind = OpKind::kGet;
  } else if (roll < spec_.read_pct + spec_.update_pct) {
    kind = OpKind::kUpdate;
  } else if (roll < spec_.read_pct + spec_.update_pct + spec_.insert_pct) {
    kind = OpKind::kInsert;
  } else {
    kind = OpKind::kDelete;
  }
  if (kind == OpKind::kInsert) {
    const std::uint64_t key = next_insert_;
    next_insert_ += workers_;
    return {kind, key};
  }
  return {kind, perm_[zipf_.next()]};
}

std::string make_key(std::uint64_t id, std::uint32_t key_size) {
  char digits[24];
  const auto [end, ec] = std::to_chars(digits, digits + sizeof digits, id);
  const auto n = static_cast<std::size_t>(end - digits);
  std::string key(std::max<std::size_t>(key_size, n), '0');
  key[0] = 'k';
  std::memcpy(key.data() + key.size() - n, digits, n);
  return key;
}

std::string make_value(std::uint64_t key, std::uint64_t version, std::uint32_t value_size) {
  if (value_size < kMinValueSize) throw std::invalid_argument("value too small for a checksum");
  std::string v(value_size, '\0');
  SplitMix64 rng{key * 0x9e3779b97f4a7c15ULL ^ version};
  for (std::size_t i = 8; i < v.size(); i += 8) {
    const std::uint64_t r = rng.next();
    std::memcpy(v.data() + i, &r, std::min<std::size_t>(8, v.size() - i));
  }
  const std::uint64_t sum = payload_checksum(
      {reinterpret_cast<const std::byte*>(v.data()) + 8, v.size() - 8});
  std::memcpy(v.data(), &sum, 8);
  return v;
}

bool verify_value(std::string_view value) noexcept {
  if (value.size() < kMinValueSize) return false;
  std::uint64_t stored;
  std::memcpy(&stored, value.data(), 8);
  return stored == payload_checksum(
                       {reinterpret_cast<const std::byte*>(value.data()) + 8, value.size() - 8});
}

std::string_view trace_op_name(TraceOp op) noexcept {
  switch (op) {
    case TraceOp::kGet:
      return "GET";
    case TraceOp::kSet:
      return "SET";
    case TraceOp::kDel:
      return "DEL";
  }
  return "?";
}

TraceParseError::TraceParseError(std::size_t line, const std::string& what)
    : std::runtime_error{"trace line " + std::to_string(line) + ": " + what}, line_{line} {}

namespace {

template <typename T>
T parse_field(std::string_view text, std::size_t line, const char* field) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw TraceParseError(line, std::string{"bad "} + field + " '" + std::string{text} + "'");
  }
  return value;
}

}  // namespace

std::vector<TraceRecord> parse_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line != "ts_ms,op,key,size") throw TraceParseError(n, "expected header ts_ms,op,key,size");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    std::string_view rest{line};
    std::string_view fields[4];
    for (int i = 0; i < 4; ++i) {
      const auto comma = rest.find(',');
      if (i < 3) {
        if (comma == std::string_view::npos) throw TraceParseError(n, "expected 4 fields");
        fields[i] = rest.substr(0, comma);
        rest.remove_prefix(comma + 1);
      } else {
        if (comma != std::string_view::npos) throw TraceParseError(n, "expected 4 fields");
        fields[i] = rest;
      }
    }
    TraceRecord r{};
    r.ts_ms = parse_field<std::uint64_t>(fields[0], n, "ts_ms");
    if (fields[1] == "GET") {
      r.op = TraceOp::kGet;
    } else if (fields[1] == "SET") {
      r.op = TraceOp::kSet;
    } else if (fields[1] == "DEL") {
      r.op = TraceOp::kDel;
    } else {
      throw TraceParseError(n, "unknown op '" + std::string{fields[1]} + "'");
    }
    r.key = parse_field<std::uint64_t>(fields[2], n, "key");
    r.size = parse_field<std::uint32_t>(fields[3], n, "size");
    if (!out.empty() && r.ts_ms < out.back().ts_ms) {
      throw TraceParseError(n, "timestamps must be non-decreasing");
    }
    out.push_back(r);
  }
  if (!header) throw TraceParseError(1, "missing header ts_ms,op,key,size");
  return out;
}

void write_trace(std::ostream& out, std::span<const TraceRecord> records) {
  out << "ts_ms,op,key,size\n";
  for (const TraceRecord& r : records) {
    out << r.ts_ms << ',' << trace_op_name(r.op) << ',' << r.key << ',' << r.size << '\n';
  }
}

ReplayStats replay_trace(std::span<const TraceRecord> records, KvStore& store,
                         std::uint32_t key_size, double scan_interval_seconds,
                         const std::function<void(std::uint64_t)>& on_window_end) {
  if (scan_interval_seconds <= 0) throw std::invalid_argument("scan interval must be positive");
  const double window_ms = scan_interval_seconds * 1000.0;
  ReplayStats stats;
  std::uint64_t open_window = 0;
  std::string value;
  for (const TraceRecord& r : records) {
    const auto w = static_cast<std::uint64_t>(static_cast<double>(r.ts_ms) / window_ms);
    while (open_window < w) {
      if (on_window_end) on_window_end(open_window);
      ++open_window;
      ++stats.windows_closed;
    }
    const std::string key = make_key(r.key, key_size);
    switch (r.op) {
      case TraceOp::kGet:
        ++stats.gets;
        if (store.get(key, value)) {
          ++stats.hits;
          if (!verify_value(value)) ++stats.corrupt_values;
        }
        break;
      case TraceOp::kSet:
        ++stats.sets;
        store.set(key, make_value(r.key, r.ts_ms, std::max(r.size, kMinValueSize)));
        break;
      case TraceOp::kDel:
        ++stats.deletes;
        store.erase(key);
        break;
    }
    ++stats.ops;
  }
  return stats;
}

std::vector<TraceRecord> phase_shift_trace(const PhaseShiftSpec& spec) {
  if (spec.hotset_size == 0 || 2 * spec.hotset_size > spec.key_count) {
    throw std::invalid_argument("phase-shift trace needs two disjoint non-empty hotsets");
  }
  if (spec.shift_window >= spec.windows) {
    throw std::invalid_argument("shift window must precede the last window");
  }
  std::vector<TraceRecord> out;
  out.reserve(spec.key_count + spec.windows * spec.ops_per_window);
  for (std::uint64_t k = 0; k < spec.key_count; ++k) {
    out.push_back({0, TraceOp::kSet, k, spec.value_size});
  }
  const std::vector<std::uint64_t> perm = key_permutation(spec.key_count, spec.seed);
  SplitMix64 rng{spec.seed};
  const auto window_ms = static_cast<std::uint64_t>(spec.scan_interval_seconds * 1000.0);
  for (std::uint64_t w = 0; w < spec.windows; ++w) {
    const std::uint64_t offset = w < spec.shift_window ? 0 : spec.hotset_size;
    for (std::uint64_t i = 0; i < spec.ops_per_window; ++i) {
      const std::uint64_t ts = w * window_ms + (i * window_ms) / spec.ops_per_window;
      const std::uint64_t key = perm[offset + rng.next_below(spec.hotset_size)];
      out.push_back({ts, TraceOp::kGet, key, spec.value_size});
    }
  }
  return out;
}

}  // namespace objspace
