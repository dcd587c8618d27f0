#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acfuzz/collector.hpp"
#include "acfuzz/url.hpp"

namespace acfuzz {

struct RoleConfig {
  std::string name;
  int rank = 0;
  LoginScript login;  // empty form_path: anonymous
  std::optional<std::filesystem::path> traffic;
  bool crawl = true;

  bool anonymous() const { return login.form_path.empty(); }
};

struct ResetConfig {
  std::optional<std::string> url;      // relative to the base URL or absolute
  std::optional<std::string> command;  // shell command
};

struct BudgetConfig {
  std::size_t max_requests = 2000;
  double duration_s = 300;
  std::uint64_t seed = 1;
  double p_rand = 0.25;
  int max_checks = 10;
};

struct LlmConfig {
  bool enabled = false;
  std::string endpoint;
  std::string model;
  std::string api_key_env = "ACFUZZ_LLM_KEY";
  std::optional<std::filesystem::path> cache;
  int timeout_ms = 30000;
};

struct Config {
  Url base_url;
  ResetConfig reset;
  std::string sentinel{kDefaultSentinel};
  std::vector<RoleConfig> roles;
  CrawlLimits crawler{200, 10, {"logout"}};
  int http_timeout_ms = 10000;
  BudgetConfig budget;
  std::set<std::string> ignored_tables;
  LlmConfig llm;
  std::filesystem::path sidecar_dir;
  int sidecar_timeout_ms = 2000;
  std::filesystem::path output_dir = "acfuzz-out";
};

// Relative paths resolve against base_dir. Throws Error(kConfig) naming the
// offending path, e.g. "$.roles[1].rank".
Config parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
Config load_config(const std::filesystem::path& file);

}  // namespace acfuzz
