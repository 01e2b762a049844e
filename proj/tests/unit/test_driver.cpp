#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sys/wait.h>

#include "json.hpp"
#include "objspace/driver.hpp"

using namespace objspace;
namespace fs = std::filesystem;

namespace {

RunConfig small_run() {
  RunConfig c;
  c.workload.key_count = 3000;
  c.workload.value_size = 128;
  c.workload.op_count = 12000;
  c.windows = 6;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("objspace_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Driver, ConfigValidation) {
  RunConfig c = small_run();
  EXPECT_NO_THROW(c.validate());
  c.threads = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  RunConfig d = small_run();
  d.workload.read_pct = 90;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(Driver, SixWindowContract) {
  const RunConfig c = small_run();
  const RunResult r = run_benchmark(c);
  ASSERT_EQ(r.windows.size(), 6U);
  EXPECT_EQ(r.summary.pr_series.size(), 6U);
  EXPECT_EQ(r.summary.ct_series.size(), 6U);
  std::uint64_t ops = 0;
  for (std::size_t w = 0; w < r.windows.size(); ++w) {
    EXPECT_EQ(r.windows[w].collector.window_index, w);
    EXPECT_EQ(r.summary.pr_series[w], r.windows[w].collector.pr_actual);
    EXPECT_EQ(r.summary.ct_series[w], r.windows[w].collector.cold_threshold_after);
    EXPECT_GT(r.windows[w].utilization, 0.0);
    EXPECT_LE(r.windows[w].utilization, 1.0);
    ops += r.windows[w].ops;
  }
  EXPECT_EQ(ops, c.workload.op_count);
  EXPECT_EQ(r.summary.run_ops, c.workload.op_count);
  EXPECT_EQ(r.summary.load_ops, c.workload.key_count);
  EXPECT_EQ(r.summary.checksum_failures, 0U);
  EXPECT_LT(r.summary.after_window, 6U);
  EXPECT_EQ(r.summary.outermost_scopes, c.workload.key_count + c.workload.op_count);
  for (std::size_t i = 1; i < r.summary.ct_series.size(); ++i) {
    const int delta = static_cast<int>(r.summary.ct_series[i]) -
                      static_cast<int>(r.summary.ct_series[i - 1]);
    EXPECT_LE(std::abs(delta), 1);
  }
}

TEST(Driver, SummaryJsonSchema) {
  const RunConfig c = small_run();
  const RunResult r = run_benchmark(c);
  const auto j = nlohmann::json::parse(summary_json(r.summary, c));
  for (const char* key :
       {"aggregateUtilizationBefore", "aggregateUtilizationAfter", "utilizationImprovement",
        "coldBytesFraction", "residentBytesFinal", "prSeries", "ctSeries", "migrationCounts",
        "derefOverheadNs", "throughputOpsPerSec", "converged", "afterWindow",
        "medianGuidesPerOp"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  for (const char* key : {"promotedToHot", "newToHot", "demotedToCold", "abortedMigrations"}) {
    EXPECT_TRUE(j["migrationCounts"].contains(key)) << key;
  }
  EXPECT_EQ(j["prSeries"].size(), 6U);
  const auto line = nlohmann::json::parse(window_json_line(r.windows[0]));
  EXPECT_EQ(line["windowIndex"], 0);
  EXPECT_TRUE(line["counts"].contains("scannedGuides"));
}

TEST(Driver, BaselineRunsTheSameOperations) {
  RunConfig guided = small_run();
  guided.workload.read_pct = 70;
  guided.workload.update_pct = 20;
  guided.workload.insert_pct = 10;
  guided.threads = 2;
  RunConfig base = guided;
  base.baseline = true;
  const RunResult g = run_benchmark(guided);
  const RunResult b = run_benchmark(base);
  EXPECT_EQ(g.summary.run_ops, b.summary.run_ops);
  EXPECT_EQ(g.summary.load_ops, b.summary.load_ops);
  EXPECT_EQ(g.summary.checksum_failures, 0U);
  EXPECT_EQ(b.summary.checksum_failures, 0U);
  EXPECT_EQ(b.summary.outermost_scopes, 0U);
  ASSERT_EQ(b.windows.size(), g.windows.size());
  for (std::size_t w = 0; w < b.windows.size(); ++w) {
    EXPECT_EQ(b.windows[w].ops, g.windows[w].ops);
    EXPECT_EQ(b.windows[w].collector.scanned_guides, 0U);
  }
  EXPECT_EQ(b.summary.heap_bytes.total_live(), g.summary.heap_bytes.total_live());
}

TEST(Driver, SkipListStructureRuns) {
  RunConfig c = small_run();
  c.structure = StoreKind::kSkipList;
  c.workload.update_pct = 10;
  c.workload.read_pct = 90;
  const RunResult r = run_benchmark(c);
  EXPECT_EQ(r.summary.checksum_failures, 0U);
  EXPECT_EQ(r.windows.size(), 6U);
}

TEST(Driver, TraceReplayAndReports) {
  const fs::path dir = scratch_dir("trace");
  PhaseShiftSpec ps;
  ps.key_count = 1024;
  ps.hotset_size = 64;
  ps.windows = 5;
  ps.shift_window = 2;
  ps.ops_per_window = 300;
  {
    std::ofstream out{dir / "t.csv"};
    const auto recs = phase_shift_trace(ps);
    write_trace(out, recs);
  }
  RunConfig c = small_run();
  c.trace_path = (dir / "t.csv").string();
  const RunResult r = run_benchmark(c);
  ASSERT_TRUE(r.summary.replay.has_value());
  EXPECT_EQ(r.summary.replay->ops, ps.key_count + ps.windows * ps.ops_per_window);
  EXPECT_EQ(r.summary.replay->hits, r.summary.replay->gets);
  EXPECT_EQ(r.windows.size(), ps.windows);

  write_reports(r, c, (dir / "out").string());
  for (const char* f : {"windows.jsonl", "summary.json", "utilization_cdf.csv", "hints.log"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  std::ifstream lines{dir / "out" / "windows.jsonl"};
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    EXPECT_TRUE(nlohmann::json::accept(line));
    ++n;
  }
  EXPECT_EQ(n, ps.windows);
  fs::remove_all(dir);
}

#ifdef OBJSPACE_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string{OBJSPACE_CLI_PATH} + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--keys 500 --ops 2000 --windows 2 --value-size 64"), 0);
  EXPECT_EQ(run_cli("--keys 0"), 2);
  EXPECT_EQ(run_cli("--read-pct 50"), 2);
  EXPECT_EQ(run_cli("--clock sideways"), 2);
  EXPECT_EQ(run_cli("--no-such-flag"), 2);

  const fs::path dir = scratch_dir("cli");
  {
    std::ofstream bad{dir / "bad.csv"};
    bad << "ts_ms,op,key,size\n0,FROB,1,0\n";
  }
  EXPECT_EQ(run_cli("--trace " + (dir / "bad.csv").string()), 1);
  EXPECT_EQ(run_cli("--keys 300 --ops 600 --windows 2 --value-size 64 --report " +
                    (dir / "rep").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "rep" / "summary.json"));
  fs::remove_all(dir);
}
#endif
