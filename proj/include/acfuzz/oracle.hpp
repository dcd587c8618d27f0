#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "acfuzz/http.hpp"
#include "acfuzz/plan.hpp"
#include "acfuzz/sql_lexer.hpp"

namespace acfuzz {

struct CoverageEntry {
  std::string file;
  std::vector<int> lines;
};

// Per-request instrumentation record written by the target as
// <covid>.json: {"covid": "...", "queries": ["..."], "coverage": [{"file": "...", "lines": [..]}]}
struct QuerySidecar {
  std::string covid;
  std::vector<std::string> queries;
  std::vector<CoverageEntry> coverage;
};

nlohmann::json to_json(const QuerySidecar& s);
// Throws Error(kSchema) on a malformed document.
QuerySidecar parse_sidecar(const nlohmann::json& j);
// Also checks that covid equals the file's base name.
QuerySidecar read_sidecar(const std::filesystem::path& file);
std::filesystem::path sidecar_path(const std::filesystem::path& dir, std::string_view covid);

std::vector<LexedQuery> lex_all(const std::vector<std::string>& raw);
// Drops queries on ignored tables (case-insensitive).
std::vector<LexedQuery> filter_ignored(const std::vector<LexedQuery>& queries,
                                       const std::set<std::string>& ignored_tables);

struct Visibility {
  bool request_visible = false;
  std::set<std::string> page_refs;
  bool low_confidence = false;  // no Referer, or the page could not be fetched
};

struct RuleMatch {
  LexedQuery query;
  std::vector<std::string> matched_values;
};

// Function-level violation: a DML statement carries one of the submitted
// parameter values while the checker's referer page offers no trigger.
std::optional<RuleMatch> rule1_bfla(const MutationPlan& plan, const std::vector<LexedQuery>& queries,
                                    const Visibility& visibility);

// Object-level violation: a DML WHERE clause carries a substituted value the
// checker role never legitimately held (neither in its corpus nor on its
// referer page).
std::optional<RuleMatch> rule2_bola(const MutationPlan& plan, const std::vector<LexedQuery>& queries,
                                    const std::set<std::string>& page_refs,
                                    const std::set<std::string>& role_reference_values);

// Visibility from an already-fetched referer page.
Visibility visibility_from_page(const MutationPlan& plan, const Url& page_url, std::string_view html,
                                std::string_view sentinel);
// Fetches the plan's Referer with the checker's client.
Visibility referer_visibility(const MutationPlan& plan, HttpSession& http, std::string_view sentinel);

enum class FindingKind { kBola, kBfla };
enum class FindingStatus { kCandidate, kValid, kRetracted };
std::string_view to_string(FindingKind k);
std::string_view to_string(FindingStatus s);

struct DedupKey {
  std::string method;
  std::string path;
  std::string verb;
  std::string table;
  auto operator<=>(const DedupKey&) const = default;
};

struct Finding {
  FindingKind kind = FindingKind::kBola;
  std::string request_key;
  std::string method;
  std::string url;
  std::string body;
  std::string query;  // raw matched statement
  SqlVerb verb = SqlVerb::kOther;
  std::string table;
  std::vector<std::string> matched_values;
  std::string role;
  FindingStatus status = FindingStatus::kCandidate;
  int confirmation_count = 0;
  bool low_confidence = false;

  DedupKey dedup_key() const;
};

Finding make_finding(FindingKind kind, const MutationPlan& plan, const RuleMatch& match,
                     const std::string& role, bool low_confidence);

nlohmann::json to_json(const Finding& f);
Finding finding_from_json(const nlohmann::json& j);

// One representative per dedup key (the least under a total order over all
// fields, so the choice never depends on arrival order); output sorted by key.
std::vector<Finding> dedup_findings(const std::vector<Finding>& findings);

}  // namespace acfuzz
