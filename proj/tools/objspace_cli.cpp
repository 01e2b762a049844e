// Experiment driver for the object-space runtime.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "objspace/driver.hpp"

namespace {

constexpr int kExitRuntimeFault = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  using objspace::ClockMode;
  using objspace::StoreKind;

  objspace::RunConfig config;
  objspace::WorkloadSpec& w = config.workload;
  std::string report_dir;

  CLI::App app{"Runs a KV workload or trace replay over guide-managed objects"};
  app.option_defaults()->always_capture_default();
  app.add_option("--keys", w.key_count, "Keys loaded before the run")->check(CLI::PositiveNumber);
  app.add_option("--key-size", w.key_size, "Key size in bytes")->check(CLI::PositiveNumber);
  app.add_option("--value-size", w.value_size, "Value size in bytes")
      ->check(CLI::Range(objspace::kMinValueSize, 65536U));
  app.add_option("--zipf-alpha", w.zipf_alpha, "Zipf skew")->check(CLI::NonNegativeNumber);
  app.add_option("--read-pct", w.read_pct, "GET share")->check(CLI::Range(0, 100));
  app.add_option("--update-pct", w.update_pct, "SET-existing share")->check(CLI::Range(0, 100));
  app.add_option("--insert-pct", w.insert_pct, "SET-new share")->check(CLI::Range(0, 100));
  app.add_option("--delete-pct", w.delete_pct, "DEL share")->check(CLI::Range(0, 100));
  app.add_option("--ops", w.op_count, "Operations in the run phase");
  app.add_option("--threads", config.threads, "Worker threads")->check(CLI::Range(1, 1024));
  app.add_option("--windows", config.windows, "Scan windows in the run phase")
      ->check(CLI::PositiveNumber);
  app.add_option("--scan-interval", config.scan_interval_seconds, "Seconds per scan window")
      ->check(CLI::PositiveNumber);
  app.add_option("--pr-target", config.pr_target, "Promotion-rate target per minute")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--ct-init", config.ct_init, "Initial cold threshold in windows")
      ->check(CLI::Range(1, 32));
  app.add_flag("--hinted", config.hinted, "Emit PAGEOUT hints once PR is stable");
  app.add_option("--trace", config.trace_path, "Replay a ts_ms,op,key,size trace")
      ->check(CLI::ExistingFile);
  app.add_option("--report", report_dir, "Directory for report files");
  std::string clock = "logical";
  app.add_option("--clock", clock, "Window clock")
      ->check(CLI::IsMember({"logical", "realtime"}, CLI::ignore_case));
  app.add_option("--seed", w.seed, "Workload seed");
  app.add_flag("--baseline", config.baseline, "Disable guides and the collector");
  std::string structure = "hashmap";
  app.add_option("--structure", structure, "Store structure")
      ->check(CLI::IsMember({"hashmap", "skiplist"}, CLI::ignore_case));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  w.clock = clock == "realtime" ? ClockMode::kRealtime : ClockMode::kLogical;
  config.structure = structure == "skiplist" ? StoreKind::kSkipList : StoreKind::kHashMap;

  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    std::cerr << "objspace: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const objspace::RunResult result = objspace::run_benchmark(config);
    if (report_dir.empty()) {
      std::cout << objspace::summary_json(result.summary, config) << '\n';
    } else {
      objspace::write_reports(result, config, report_dir);
      std::cerr << "objspace: " << result.windows.size() << " windows written to " << report_dir
                << '\n';
    }
    const std::uint64_t corrupt =
        result.summary.checksum_failures +
        (result.summary.replay ? result.summary.replay->corrupt_values : 0);
    if (corrupt != 0) {
      std::cerr << "objspace: runtime fault: " << corrupt << " values failed verification\n";
      return kExitRuntimeFault;
    }
  } catch (const objspace::TraceParseError& e) {
    std::cerr << "objspace: " << e.what() << '\n';
    return kExitRuntimeFault;
  } catch (const std::exception& e) {
    std::cerr << "objspace: runtime fault: " << e.what() << '\n';
    return kExitRuntimeFault;
  }
  return 0;
}
