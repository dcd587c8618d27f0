#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acfuzz/config.hpp"
#include "acfuzz/oracle.hpp"
#include "acfuzz/param_analysis.hpp"

namespace acfuzz {

enum class Phase { kCollect, kAnalyze, kFuzz };
std::string_view to_string(Phase p);

struct CampaignOptions {
  Phase stop_after = Phase::kFuzz;
  // Skip phases the checkpoint in the output directory marks as done.
  bool resume = false;
  bool bench = false;
  std::size_t bench_requests = 200;
  // Replaces the configured LLM client (tests).
  LlmClient* llm = nullptr;
};

struct CampaignResult {
  std::vector<Finding> findings;  // deduplicated, sorted
  nlohmann::json report;
  std::vector<Phase> completed;
};

// Phases run in a fixed order: collect, analyze, reset + fuzz. Writes
// report.json, findings.json and checkpoint.json under the output directory.
CampaignResult run_campaign(const Config& config, const CampaignOptions& options = {});

struct BenchResult {
  std::size_t requests = 0;
  double mean_with_s = 0;
  double mean_without_s = 0;
  double delta_s = 0;
  std::size_t sidecars_with = 0;
  std::size_t sidecars_without = 0;  // files that appeared for header-less requests
};

nlohmann::json to_json(const BenchResult& b);

// Replays `n` corpus requests as the highest-ranked role, each once with and
// once without the covid header. Throws Error(kConfig) for n = 0 and
// Error(kEmptyCorpus) when the corpus is empty.
BenchResult bench(const Config& config, const Corpus& corpus, std::size_t n);
BenchResult bench(const Config& config, std::size_t n);

// Stable serialization shared by findings.json and the report command.
nlohmann::json findings_json(const std::vector<Finding>& findings);
std::vector<Finding> load_findings(const std::filesystem::path& file);

// Runs the configured reset hook; no-op without one.
void reset_target(const Config& config);

}  // namespace acfuzz
