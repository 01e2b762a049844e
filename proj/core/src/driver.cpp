#include "objspace/driver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace objspace {

using Clock = std::chrono::steady_clock;
using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  workload.validate();
  if (!(scan_interval_seconds > 0)) throw std::invalid_argument("scan interval must be positive");
  if (!(pr_target >= 0)) throw std::invalid_argument("PR target must be non-negative");
  if (ct_init < kMinColdThreshold || ct_init > kMaxColdThreshold) {
    throw std::invalid_argument("initial cold threshold must lie in [1, 32]");
  }
  if (threads == 0) throw std::invalid_argument("thread count must be positive");
  if (threads > 1024) throw std::invalid_argument("thread count is limited to 1024");
  if (windows == 0 && trace_path.empty()) throw std::invalid_argument("window count must be positive");
  if (workload.key_size > 65536 || workload.value_size > 65536) {
    throw std::invalid_argument("keys and values are limited to 64 KiB");
  }
}

double measure_deref_ns(std::size_t batches) {
  constexpr int kBatch = 1000;
  GuideCell cell{pack(GuideFields{.locator = 0x1000, .heap = HeapId::kHot, .accessed = true})};
  std::vector<double> samples;
  samples.reserve(batches);
  std::uint64_t sink = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const auto t0 = Clock::now();
    for (int i = 0; i < kBatch; ++i) {
      sink += cell.dereference().locator;
      std::atomic_signal_fence(std::memory_order_seq_cst);
    }
    const auto t1 = Clock::now();
    samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() / kBatch);
  }
  if (sink == 42) samples.push_back(0);  // keeps the loop observable
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
  return samples[samples.size() / 2];
}

namespace {

struct alignas(64) WorkerTally {
  std::atomic<std::uint64_t> ops{0};
  std::uint64_t checksum_failures{0};
};

void run_ops(KvStore& store, OpStream& stream, std::uint64_t count, const WorkloadSpec& spec,
             std::uint64_t& version, WorkerTally& tally) {
  std::string value;
  for (std::uint64_t i = 0; i < count; ++i) {
    const Operation op = stream.next();
    const std::string key = make_key(op.key, spec.key_size);
    switch (op.kind) {
      case OpKind::kGet:
        if (store.get(key, value) && !verify_value(value)) ++tally.checksum_failures;
        break;
      case OpKind::kUpdate:
      case OpKind::kInsert:
        store.set(key, make_value(op.key, ++version, spec.value_size));
        break;
      case OpKind::kDelete:
        store.erase(key);
        break;
    }
    tally.ops.store(tally.ops.load(std::memory_order_relaxed) + 1, std::memory_order_relaxed);
  }
}

/// Collects everything that happens at a window boundary.
class WindowCloser {
 public:
  WindowCloser(Runtime& rt, ObjectCollector* collector, const RunConfig& config)
      : rt_{rt}, collector_{collector}, config_{config} {}

  void close(std::uint64_t ops) {
    const std::uint64_t w = records_.size();
    std::vector<TouchRecord> touches;
    rt_.scopes().for_each_context([&](ThreadContext& ctx) {
      auto t = ctx.drain_touches();
      touches.insert(touches.end(), t.begin(), t.end());
    });
    const std::vector<AccessLogEntry> log = touches_to_log(touches, w, rt_.regions().page_size());
    UtilizationReport util = page_utilization(log, rt_.regions().page_size());

    if (reclaim_ && reclaim_->observed_windows < config_.reclaim_lookahead_windows) {
      reclaim_log_.insert(reclaim_log_.end(), log.begin(), log.end());
      ++reclaim_->observed_windows;
      reclaim_->outcome = simulate_reclaim(
          reclaimed_, reclaim_log_,
          static_cast<double>(reclaim_->observed_windows) * config_.scan_interval_seconds);
    }

    WindowRecord rec;
    rec.utilization = util.aggregate;
    rec.touched_pages = util.per_page.size();
    rec.ops = ops;
    rec.collector.window_index = w;
    if (collector_ != nullptr) {
      const std::size_t hints_before = collector_->hint_log().size();
      rec.collector = collector_->run_scan_window();
      const auto& log_all = collector_->hint_log();
      if (!reclaim_ && log_all.size() > hints_before) {
        reclaim_.emplace();
        reclaim_->hint_window = w;
        reclaimed_ = hinted_pages(std::span{log_all}.subspan(hints_before));
        reclaim_->outcome.reclaimed_pages = reclaimed_.size();
      }
    }
    cdfs_.push_back(std::move(util.cdf));
    records_.push_back(rec);
  }

  std::vector<WindowRecord>& records() noexcept { return records_; }
  std::vector<std::vector<std::pair<double, double>>>& cdfs() noexcept { return cdfs_; }
  std::optional<ReclaimSimulation>& reclaim() noexcept { return reclaim_; }

 private:
  Runtime& rt_;
  ObjectCollector* collector_;
  const RunConfig& config_;
  std::vector<WindowRecord> records_;
  std::vector<std::vector<std::pair<double, double>>> cdfs_;
  std::optional<ReclaimSimulation> reclaim_;
  std::vector<std::uint64_t> reclaimed_;
  std::vector<AccessLogEntry> reclaim_log_;
};

std::uint64_t share(std::uint64_t total, std::uint64_t parts, std::uint64_t index) {
  return total / parts + (index < total % parts ? 1 : 0);
}

}  // namespace

RunResult run_benchmark(const RunConfig& config) {
  config.validate();
  RuntimeConfig rc;
  rc.guides_enabled = !config.baseline;
  rc.trace_accesses = config.trace_accesses;
  Runtime rt{rc};
  std::unique_ptr<KvStore> store = make_store(config.structure, rt, config.workload.key_count);

  ControllerConfig cc;
  cc.pr_target = config.pr_target;
  cc.scan_interval_seconds = config.scan_interval_seconds;
  cc.ct_init = config.ct_init;
  cc.hinted = config.hinted;
  std::optional<ObjectCollector> collector;
  if (!config.baseline) collector.emplace(rt, cc);
  WindowCloser closer{rt, collector ? &*collector : nullptr, config};

  RunResult result;
  RunSummary& s = result.summary;
  const WorkloadSpec& spec = config.workload;
  double run_seconds = 0;
  std::uint64_t ops_done = 0;

  if (!config.trace_path.empty()) {
    std::ifstream in{config.trace_path};
    if (!in) throw std::runtime_error("cannot open trace " + config.trace_path);
    const std::vector<TraceRecord> records = parse_trace(in);
    std::map<std::uint64_t, std::uint64_t> per_window;
    const double window_ms = config.scan_interval_seconds * 1000.0;
    for (const TraceRecord& r : records) {
      ++per_window[static_cast<std::uint64_t>(static_cast<double>(r.ts_ms) / window_ms)];
    }
    auto ops_in = [&](std::uint64_t w) {
      const auto it = per_window.find(w);
      return it == per_window.end() ? 0 : it->second;
    };
    const auto t0 = Clock::now();
    const ReplayStats stats =
        replay_trace(records, *store, spec.key_size, config.scan_interval_seconds,
                     [&](std::uint64_t w) { closer.close(ops_in(w)); });
    run_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    closer.close(ops_in(closer.records().size()));
    ops_done = stats.ops;
    s.checksum_failures = stats.corrupt_values;
    s.replay = stats;
  } else {
    for (std::uint64_t k = 0; k < spec.key_count; ++k) {
      store->set(make_key(k, spec.key_size), make_value(k, 0, spec.value_size));
    }
    s.load_ops = spec.key_count;
    rt.scopes().for_each_context([](ThreadContext& ctx) { (void)ctx.drain_touches(); });

    const std::vector<std::uint64_t> perm = key_permutation(spec.key_count, spec.seed);
    std::vector<OpStream> streams;
    streams.reserve(config.threads);
    for (unsigned t = 0; t < config.threads; ++t) streams.emplace_back(spec, perm, t, config.threads);
    std::vector<std::uint64_t> versions(config.threads);
    for (unsigned t = 0; t < config.threads; ++t) versions[t] = std::uint64_t{t + 1} << 40;
    std::vector<WorkerTally> tallies(config.threads);
    std::mutex error_mutex;
    std::exception_ptr error;

    auto run_slice = [&](unsigned t, std::uint64_t count) {
      try {
        run_ops(*store, streams[t], count, spec, versions[t], tallies[t]);
      } catch (...) {
        std::lock_guard lock{error_mutex};
        if (!error) error = std::current_exception();
      }
    };
    auto run_parallel = [&](auto&& count_for) {
      if (config.threads == 1) {
        run_slice(0, count_for(0U));
        return;
      }
      std::vector<std::jthread> workers;
      workers.reserve(config.threads);
      for (unsigned t = 0; t < config.threads; ++t) {
        workers.emplace_back([&, t] { run_slice(t, count_for(t)); });
      }
    };

    if (spec.clock == ClockMode::kLogical) {
      for (std::uint64_t w = 0; w < config.windows; ++w) {
        const std::uint64_t window_ops = share(spec.op_count, config.windows, w);
        const auto t0 = Clock::now();
        run_parallel([&](unsigned t) { return share(window_ops, config.threads, t); });
        run_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
        if (error) std::rethrow_exception(error);
        closer.close(window_ops);
      }
    } else {
      std::mutex m;
      std::condition_variable cv;
      bool done = false;
      std::uint64_t reported_ops = 0;
      auto total_ops = [&] {
        std::uint64_t n = 0;
        for (const auto& t : tallies) n += t.ops.load(std::memory_order_relaxed);
        return n;
      };
      std::jthread collector_thread{[&] {
        const auto interval = std::chrono::duration<double>(config.scan_interval_seconds);
        std::unique_lock lock{m};
        while (closer.records().size() < config.windows) {
          if (cv.wait_for(lock, interval, [&] { return done; })) break;
          const std::uint64_t now = total_ops();
          closer.close(now - reported_ops);
          reported_ops = now;
        }
      }};
      const auto t0 = Clock::now();
      run_parallel([&](unsigned t) { return share(spec.op_count, config.threads, t); });
      run_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      {
        std::lock_guard lock{m};
        done = true;
      }
      cv.notify_all();
      collector_thread.join();
      if (error) std::rethrow_exception(error);
      if (closer.records().size() < config.windows) closer.close(total_ops() - reported_ops);
    }
    for (const WorkerTally& t : tallies) {
      ops_done += t.ops.load();
      s.checksum_failures += t.checksum_failures;
    }
  }

  result.windows = std::move(closer.records());
  auto& cdfs = closer.cdfs();
  s.reclaim = closer.reclaim();
  if (collector) result.hints = collector->hint_log();

  // "After" is the first window whose PR is below target while a COLD heap
  // already exists; without one, the last window is reported unconverged.
  const auto& ws = result.windows;
  std::size_t after = ws.empty() ? 0 : ws.size() - 1;
  if (collector) {
    for (std::size_t w = 1; w < ws.size(); ++w) {
      if (ws[w - 1].collector.heap_bytes[static_cast<int>(HeapId::kCold)] > 0 &&
          ws[w].collector.pr_actual < config.pr_target) {
        after = w;
        s.converged = true;
        break;
      }
    }
  }
  if (!ws.empty()) {
    s.aggregate_utilization_before = ws.front().utilization;
    s.aggregate_utilization_after = ws[after].utilization;
    s.after_window = after;
    s.utilization_improvement = s.aggregate_utilization_before > 0
                                    ? s.aggregate_utilization_after / s.aggregate_utilization_before
                                    : 0.0;
    result.before_cdf.cdf = cdfs.front();
    result.before_cdf.aggregate = s.aggregate_utilization_before;
    result.after_cdf.cdf = cdfs[after];
    result.after_cdf.aggregate = s.aggregate_utilization_after;
  }
  for (const WindowRecord& w : ws) {
    s.pr_series.push_back(w.collector.pr_actual);
    s.ct_series.push_back(w.collector.cold_threshold_after);
  }
  if (collector) s.migration_counts = collector->totals();

  s.heap_bytes = heap_byte_distribution(rt.regions());
  s.cold_bytes_fraction = s.heap_bytes.fraction_live(HeapId::kCold);
  s.resident_bytes_final = s.heap_bytes.total_resident();
  s.run_ops = ops_done;
  s.run_seconds = run_seconds;
  s.throughput_ops_per_sec = run_seconds > 0 ? static_cast<double>(ops_done) / run_seconds : 0.0;
  s.median_guides_per_op = rt.scopes().median_guides_per_scope();
  s.outermost_scopes = rt.scopes().total_outermost_scopes();
  s.deref_overhead_ns = measure_deref_ns(200);
  return result;
}

namespace {

json heap_array(const std::array<std::uint64_t, kManagedHeapCount>& a) {
  return json{{"NEW", a[0]}, {"HOT", a[1]}, {"COLD", a[2]}};
}

json counts_json(const MigrationCounts& c) {
  return json{{"promotedToHot", c.promoted_to_hot}, {"newToHot", c.new_to_hot},
              {"demotedToCold", c.demoted_to_cold}, {"abortedMigrations", c.aborted},
              {"skippedMigrations", c.skipped}};
}

}  // namespace

std::string window_json_line(const WindowRecord& w) {
  const WindowReport& r = w.collector;
  json counts = counts_json(r.counts);
  counts["scannedGuides"] = r.scanned_guides;
  json j{{"windowIndex", r.window_index},
         {"epoch", r.epoch},
         {"prActual", r.pr_actual},
         {"coldThresholdBefore", r.cold_threshold_before},
         {"coldThresholdAfter", r.cold_threshold_after},
         {"converged", r.converged},
         {"counts", counts},
         {"accessedGuides", r.accessed_guides},
         {"promotionCandidates", r.promotion_candidates},
         {"demotionCandidates", r.demotion_candidates},
         {"heapBytes", heap_array(r.heap_bytes)},
         {"heapResidentPages", heap_array(r.heap_resident_pages)},
         {"uniqueColdPagesAccessed", r.unique_cold_pages_accessed},
         {"workingSetPages", r.working_set_pages},
         {"reclaimedEmptyPages", r.reclaimed_empty_pages},
         {"deferredFrees", r.deferred_frees},
         {"hintsEmitted", r.hints_emitted},
         {"utilization", w.utilization},
         {"touchedPages", w.touched_pages},
         {"ops", w.ops}};
  return j.dump();
}

std::string summary_json(const RunSummary& s, const RunConfig& config) {
  json j{{"aggregateUtilizationBefore", s.aggregate_utilization_before},
         {"aggregateUtilizationAfter", s.aggregate_utilization_after},
         {"utilizationImprovement", s.utilization_improvement},
         {"coldBytesFraction", s.cold_bytes_fraction},
         {"residentBytesFinal", s.resident_bytes_final},
         {"prSeries", s.pr_series},
         {"ctSeries", s.ct_series},
         {"migrationCounts", counts_json(s.migration_counts)},
         {"derefOverheadNs", s.deref_overhead_ns},
         {"throughputOpsPerSec", s.throughput_ops_per_sec},
         {"converged", s.converged},
         {"afterWindow", s.after_window},
         {"medianGuidesPerOp", s.median_guides_per_op},
         {"loadOps", s.load_ops},
         {"runOps", s.run_ops},
         {"runSeconds", s.run_seconds},
         {"checksumFailures", s.checksum_failures},
         {"outermostScopes", s.outermost_scopes},
         {"liveBytes", heap_array(s.heap_bytes.live_bytes)},
         {"residentBytes", heap_array(s.heap_bytes.resident_bytes)},
         {"mode", config.baseline ? "baseline" : (config.hinted ? "hinted" : "default")},
         {"structure", config.structure == StoreKind::kHashMap ? "hashmap" : "skiplist"}};
  if (s.reclaim) {
    j["reclaimSimulation"] = json{{"hintWindow", s.reclaim->hint_window},
                                  {"observedWindows", s.reclaim->observed_windows},
                                  {"reclaimedPages", s.reclaim->outcome.reclaimed_pages},
                                  {"refaults", s.reclaim->outcome.refaults},
                                  {"refaultRatePerMinute", s.reclaim->outcome.refault_rate_per_minute}};
  } else {
    j["reclaimSimulation"] = nullptr;
  }
  if (s.replay) {
    j["replay"] = json{{"ops", s.replay->ops},       {"gets", s.replay->gets},
                       {"hits", s.replay->hits},     {"sets", s.replay->sets},
                       {"deletes", s.replay->deletes}, {"windowsClosed", s.replay->windows_closed}};
  } else {
    j["replay"] = nullptr;
  }
  return j.dump(2);
}

void write_reports(const RunResult& result, const RunConfig& config, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const fs::path dir{directory};
  auto open = [&](const char* name) {
    std::ofstream out{dir / name};
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("windows.jsonl");
    for (const WindowRecord& w : result.windows) out << window_json_line(w) << '\n';
  }
  {
    auto out = open("summary.json");
    out << summary_json(result.summary, config) << '\n';
  }
  {
    auto out = open("utilization_cdf.csv");
    write_cdf_csv(out, result.after_cdf);
  }
  {
    auto out = open("utilization_cdf_before.csv");
    write_cdf_csv(out, result.before_cdf);
  }
  {
    auto out = open("hints.log");
    for (const HintEvent& h : result.hints) out << format_hint(h) << '\n';
  }
}

}  // namespace objspace
