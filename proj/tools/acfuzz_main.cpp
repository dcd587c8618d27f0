// acfuzz command line: campaign phases, benchmarking, reports and the
// simulated target.
#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include <spdlog/spdlog.h>

#include "acfuzz/campaign.hpp"
#include "acfuzz/harness.hpp"
#include "acfuzz/util.hpp"

namespace {

constexpr int kExitClean = 0;
constexpr int kExitFindings = 1;
constexpr int kExitError = 2;

std::atomic<bool> g_stop{false};

struct BudgetFlags {
  std::optional<std::size_t> max_requests;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  std::optional<double> p_rand;
  std::optional<int> max_checks;

  void add(CLI::App* cmd) {
    cmd->add_option("--max-requests", max_requests, "Dispatch budget across all checker roles");
    cmd->add_option("--duration", duration, "Wall-clock limit for fuzzing, seconds");
    cmd->add_option("--seed", seed, "Campaign RNG seed");
    cmd->add_option("--p-rand", p_rand, "Probability of also randomizing a less-important param")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--max-checks", max_checks, "Confirmation repetitions per candidate")
        ->check(CLI::PositiveNumber);
  }

  void apply(acfuzz::Config& c) const {
    if (max_requests) c.budget.max_requests = *max_requests;
    if (duration) c.budget.duration_s = *duration;
    if (seed) c.budget.seed = *seed;
    if (p_rand) c.budget.p_rand = *p_rand;
    if (max_checks) c.budget.max_checks = *max_checks;
  }
};

int exit_for(const std::vector<acfuzz::Finding>& findings) {
  for (const auto& f : findings)
    if (f.status == acfuzz::FindingStatus::kValid) return kExitFindings;
  return kExitClean;
}

void print_findings(const std::vector<acfuzz::Finding>& findings) {
  for (const auto& f : findings) {
    std::cout << acfuzz::to_string(f.status) << " " << acfuzz::to_string(f.kind) << " [" << f.role << "] "
              << f.method << " " << f.url;
    if (!f.body.empty()) std::cout << " body=" << f.body;
    std::cout << "\n    " << f.query << "  (checks " << f.confirmation_count
              << (f.low_confidence ? ", low confidence" : "") << ")\n";
  }
  if (findings.empty()) std::cout << "no findings\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grey-box access-control fuzzer"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string config_path;
  BudgetFlags budget;
  bool collect_only = false, with_bench = false, resume = false;
  std::size_t bench_n = 200;

  auto* run = app.add_subcommand("run", "Collect, analyze, reset and fuzz");
  run->add_option("-c,--config", config_path, "Campaign config (JSON)")->required();
  budget.add(run);
  run->add_flag("--collect-only", collect_only, "Stop after collection");
  run->add_flag("--bench", with_bench, "Measure instrumentation overhead after fuzzing");
  run->add_option("--bench-requests", bench_n, "Requests replayed by --bench");
  run->add_flag("--resume", resume, "Skip phases recorded in the checkpoint");

  auto* collect = app.add_subcommand("collect", "Log in and crawl or ingest traffic for every role");
  collect->add_option("-c,--config", config_path, "Campaign config (JSON)")->required();

  auto* analyze = app.add_subcommand("analyze", "Mark candidates and classify parameters");
  analyze->add_option("-c,--config", config_path, "Campaign config (JSON)")->required();

  auto* fuzz = app.add_subcommand("fuzz", "Reset the target and run the checkers");
  fuzz->add_option("-c,--config", config_path, "Campaign config (JSON)")->required();
  budget.add(fuzz);

  auto* bench = app.add_subcommand("bench", "Replay corpus requests with and without the covid header");
  bench->add_option("-c,--config", config_path, "Campaign config (JSON)")->required();
  bench->add_option("-n,--requests", bench_n, "Number of requests");

  std::string findings_path;
  bool as_json = false;
  auto* report = app.add_subcommand("report", "Deduplicate and print a findings file");
  report->add_option("findings", findings_path, "findings.json or report.json")->required();
  report->add_flag("--json", as_json, "Print JSON instead of text");

  std::string app_path, host = "127.0.0.1", sidecar_dir;
  int port = 8080;
  bool builtin_coincidence = false;
  auto* harness = app.add_subcommand("harness", "Serve a simulated target application");
  harness->add_option("--app", app_path, "App spec (JSON)");
  harness->add_flag("--coincidence", builtin_coincidence, "Serve the built-in coincidence app");
  harness->add_option("--port", port, "Port (0 picks a free one)");
  harness->add_option("--host", host, "Bind address");
  harness->add_option("--sidecar-dir", sidecar_dir, "Where sidecar files are written");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitClean : kExitError;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S.%e] %^%l%$ %v");

  try {
    if (*harness) {
      if (app_path.empty() == !builtin_coincidence) {
        std::cerr << "harness: give exactly one of --app or --coincidence\n";
        return kExitError;
      }
      auto spec = builtin_coincidence ? acfuzz::harness::coincidence_spec() : acfuzz::harness::load_app_spec(app_path);
      std::optional<std::filesystem::path> dir;
      if (!sidecar_dir.empty()) dir = sidecar_dir;
      auto target = acfuzz::harness::serve(spec, port, dir, host);
      spdlog::info("serving '{}' on {}", spec.name, target->base_url().to_string());
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      target->stop();
      return kExitClean;
    }

    if (*report) {
      auto findings = acfuzz::dedup_findings(acfuzz::load_findings(findings_path));
      if (as_json)
        std::cout << acfuzz::findings_json(findings).dump(2) << "\n";
      else
        print_findings(findings);
      return exit_for(findings);
    }

    auto config = acfuzz::load_config(config_path);
    budget.apply(config);

    if (*bench) {
      auto b = acfuzz::bench(config, bench_n);
      std::cout << acfuzz::to_json(b).dump(2) << "\n";
      return kExitClean;
    }

    acfuzz::CampaignOptions opts;
    if (*collect) {
      opts.stop_after = acfuzz::Phase::kCollect;
    } else if (*analyze) {
      opts.stop_after = acfuzz::Phase::kAnalyze;
      opts.resume = true;
    } else if (*fuzz) {
      opts.resume = true;
    } else {
      opts.stop_after = collect_only ? acfuzz::Phase::kCollect : acfuzz::Phase::kFuzz;
      opts.resume = resume;
      opts.bench = with_bench;
      opts.bench_requests = bench_n;
    }
    auto result = acfuzz::run_campaign(config, opts);
    if (opts.stop_after != acfuzz::Phase::kFuzz) return kExitClean;
    print_findings(result.findings);
    spdlog::info("report written to {}", (config.output_dir / "report.json").string());
    return exit_for(result.findings);
  } catch (const acfuzz::Error& e) {
    spdlog::error("{}: {}", acfuzz::to_string(e.code()), e.what());
    return kExitError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
}
