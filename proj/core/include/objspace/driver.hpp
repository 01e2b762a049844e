#pragma once

/// \file
/// Experiment driver: load phase, windowed run phase (or trace replay),
/// per-window utilization, collector windows and report files.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "objspace/collector.hpp"
#include "objspace/metrics.hpp"
#include "objspace/store.hpp"
#include "objspace/workload.hpp"

namespace objspace {

struct RunConfig {
  WorkloadSpec workload;
  double scan_interval_seconds = 120;
  double pr_target = 0.01;
  unsigned ct_init = 3;
  unsigned threads = 1;
  std::uint64_t windows = 8;
  bool hinted = false;
  bool baseline = false;
  StoreKind structure = StoreKind::kHashMap;
  std::string trace_path;
  /// Record object touches for utilization. Off for pure throughput runs.
  bool trace_accesses = true;
  /// Windows after the first hint event fed to the reclaim simulation.
  std::uint64_t reclaim_lookahead_windows = 4;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct WindowRecord {
  WindowReport collector;  // zeroed in baseline mode
  double utilization{0};
  std::uint64_t touched_pages{0};
  std::uint64_t ops{0};
};

struct ReclaimSimulation {
  std::uint64_t hint_window{0};
  std::uint64_t observed_windows{0};
  ReclaimOutcome outcome;
};

struct RunSummary {
  double aggregate_utilization_before{0};
  double aggregate_utilization_after{0};
  double utilization_improvement{0};
  std::uint64_t after_window{0};
  bool converged{false};
  double cold_bytes_fraction{0};
  std::uint64_t resident_bytes_final{0};
  std::vector<double> pr_series;
  std::vector<unsigned> ct_series;
  MigrationCounts migration_counts;
  double deref_overhead_ns{0};
  double throughput_ops_per_sec{0};
  double median_guides_per_op{0};
  std::uint64_t load_ops{0};
  std::uint64_t run_ops{0};
  double run_seconds{0};
  std::uint64_t checksum_failures{0};
  std::uint64_t outermost_scopes{0};
  HeapByteDistribution heap_bytes;
  std::optional<ReclaimSimulation> reclaim;
  std::optional<ReplayStats> replay;
};

struct RunResult {
  RunSummary summary;
  std::vector<WindowRecord> windows;
  std::vector<HintEvent> hints;
  UtilizationReport before_cdf;
  UtilizationReport after_cdf;
};

/// Median per-call latency of GuideCell::dereference on an accessed word,
/// in nanoseconds, over batches of 1000 calls.
[[nodiscard]] double measure_deref_ns(std::size_t batches = 2000);

[[nodiscard]] RunResult run_benchmark(const RunConfig& config);

[[nodiscard]] std::string window_json_line(const WindowRecord& w);
[[nodiscard]] std::string summary_json(const RunSummary& s, const RunConfig& config);

/// Writes windows.jsonl, summary.json, utilization_cdf.csv and hints.log
/// into \p directory, creating it if needed.
void write_reports(const RunResult& result, const RunConfig& config, const std::string& directory);

}  // namespace objspace
