#pragma once

/// \file
/// Zipfian key generation, YCSB-style operation mixes, self-checking values
/// and the `ts_ms,op,key,size` trace format with logical-time replay.

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "objspace/store.hpp"

namespace objspace {

/// splitmix64; the only source of randomness in generated workloads, so op
/// streams are identical across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_{seed} {}
  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [0, 1) with 53 bits of precision.
  double next_double() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform in [0, bound); bound > 0.
  std::uint64_t next_below(std::uint64_t bound) noexcept;

 private:
  std::uint64_t state_;
};

/// P(k) proportional to 1 / (k + 1)^alpha over [0, key_count).
class ZipfGenerator {
 public:
  ZipfGenerator(std::uint64_t key_count, double alpha, std::uint64_t seed);
  std::uint64_t next() noexcept;
  [[nodiscard]] std::uint64_t key_count() const noexcept { return cdf_.size(); }
  [[nodiscard]] double probability(std::uint64_t k) const noexcept;

 private:
  std::vector<double> cdf_;
  SplitMix64 rng_;
};

/// Generalized harmonic number H_{n,alpha}.
[[nodiscard]] double generalized_harmonic(std::uint64_t n, double alpha) noexcept;

enum class ClockMode : std::uint8_t { kLogical, kRealtime };

struct WorkloadSpec {
  std::uint64_t key_count = 100000;
  std::uint32_t key_size = 30;
  std::uint32_t value_size = 1024;
  double zipf_alpha = 0.99;
  unsigned read_pct = 100;
  unsigned update_pct = 0;
  unsigned insert_pct = 0;
  unsigned delete_pct = 0;
  std::uint64_t op_count = 1000000;
  std::uint64_t seed = 42;
  ClockMode clock = ClockMode::kLogical;

  /// Throws std::invalid_argument on an inconsistent spec.
  void validate() const;
};

enum class OpKind : std::uint8_t { kGet, kUpdate, kInsert, kDelete };

struct Operation {
  OpKind kind;
  std::uint64_t key;

  friend bool operator==(const Operation&, const Operation&) = default;
};

/// Seeded rank -> key permutation, so popularity is uncorrelated with
/// insertion order.
[[nodiscard]] std::vector<std::uint64_t> key_permutation(std::uint64_t key_count,
                                                         std::uint64_t seed);

/// Operation stream of one worker. Inserted keys are fresh ids above
/// key_count, interleaved across workers so no two workers insert the same key.
class OpStream {
 public:
  OpStream(const WorkloadSpec& spec, const std::vector<std::uint64_t>& permutation,
           unsigned worker, unsigned workers);
  Operation next() noexcept;

 private:
  const WorkloadSpec& spec_;
  const std::vector<std::uint64_t>& perm_;
  ZipfGenerator zipf_;
  SplitMix64 mix_;
  std::uint64_t next_insert_;
  unsigned workers_;
};

/// Fixed-width key text for an integer id, padded to \p key_size bytes.
[[nodiscard]] std::string make_key(std::uint64_t id, std::uint32_t key_size);

/// Values carry an 8-byte FNV-1a checksum of the remaining bytes.
inline constexpr std::uint32_t kMinValueSize = 16;
[[nodiscard]] std::string make_value(std::uint64_t key, std::uint64_t version,
                                     std::uint32_t value_size);
[[nodiscard]] bool verify_value(std::string_view value) noexcept;

enum class TraceOp : std::uint8_t { kGet, kSet, kDel };

[[nodiscard]] std::string_view trace_op_name(TraceOp op) noexcept;

struct TraceRecord {
  std::uint64_t ts_ms;
  TraceOp op;
  std::uint64_t key;
  std::uint32_t size;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& what);
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Reads a trace with the `ts_ms,op,key,size` header. Line numbers in errors
/// are 1-based and count the header.
[[nodiscard]] std::vector<TraceRecord> parse_trace(std::istream& in);
void write_trace(std::ostream& out, std::span<const TraceRecord> records);

struct ReplayStats {
  std::uint64_t ops{0};
  std::uint64_t gets{0};
  std::uint64_t hits{0};
  std::uint64_t sets{0};
  std::uint64_t deletes{0};
  std::uint64_t windows_closed{0};
  std::uint64_t corrupt_values{0};
};

/// Applies records in order. Before the first record of logical window w
/// (w = ts_ms / interval), on_window_end is called for every earlier window
/// not yet closed; the final window is left open for the caller.
ReplayStats replay_trace(std::span<const TraceRecord> records, KvStore& store,
                         std::uint32_t key_size, double scan_interval_seconds,
                         const std::function<void(std::uint64_t window)>& on_window_end);

struct PhaseShiftSpec {
  std::uint64_t key_count = 4096;
  std::uint64_t hotset_size = 256;
  std::uint64_t windows = 40;
  std::uint64_t shift_window = 10;
  std::uint64_t ops_per_window = 4096;
  double scan_interval_seconds = 120;
  std::uint32_t value_size = 256;
  std::uint64_t seed = 7;
};

/// SETs every key at ts 0, then GETs drawn uniformly from hotset A before
/// shift_window and from a disjoint hotset B from then on.
[[nodiscard]] std::vector<TraceRecord> phase_shift_trace(const PhaseShiftSpec& spec);

}  // namespace objspace
