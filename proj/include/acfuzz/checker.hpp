#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "acfuzz/corpus.hpp"
#include "acfuzz/http.hpp"
#include "acfuzz/oracle.hpp"
#include "acfuzz/plan.hpp"
#include "acfuzz/util.hpp"

namespace acfuzz {

using CoverageLine = std::pair<std::string, int>;

// Campaign-wide executed lines. Only grows.
class CoverageMap {
 public:
  // Adds the entries and returns the lines not seen before.
  std::set<CoverageLine> merge(const std::vector<CoverageEntry>& entries);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::set<CoverageLine> lines_;
};

enum class SurfaceReason { kNewCoverage, kHttp500, kBacSignal };
std::string_view to_string(SurfaceReason r);

struct AttackSurfaceItem {
  std::string record_id;
  SurfaceReason reason = SurfaceReason::kNewCoverage;
  std::set<CoverageLine> coverage_delta;
};

// Unique per (record id, reason); the first item wins.
class AttackSurface {
 public:
  bool add(AttackSurfaceItem item);
  std::vector<AttackSurfaceItem> items() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, SurfaceReason>, AttackSurfaceItem> items_;
};

// Weight of a record is 1 + its REFERENCE param count. Throws
// Error(kCampaignIdle) on an empty snapshot.
const RequestRecord& select_request(const std::vector<RequestRecord>& snapshot, Rng& rng);

// NUMERIC: uniform integer in [1, 1e9]; TEXT: 12 lowercase letters.
std::string random_value(ValueKind kind, Rng& rng);

struct MutationOptions {
  double p_rand = 0.25;
};

// The plan's covid is left empty; the caller assigns it per dispatch.
MutationPlan mutate(const RequestRecord& record, const std::string& role, const Corpus& corpus, Rng& rng,
                    const MutationOptions& options = {});

// A repetition of `plan` whose REFERENCE and randomized substitutions take
// values not in `used` (pool first, then random of the same kind). `used` is
// extended with the new values.
MutationPlan refresh_plan(const MutationPlan& plan, const std::string& role, const Corpus& corpus, Rng& rng,
                          std::set<std::string>& used);

struct Feedback {
  int status = 0;
  std::string body_digest;  // sha256 of the response body
  std::optional<QuerySidecar> sidecar;
  bool sidecar_timeout = false;
};

using Dispatcher = std::function<Feedback(const MutationPlan&)>;
using VisibilityProbe = std::function<Visibility(const MutationPlan&)>;

// Sends the mutated request with the session's cookies and the covid header,
// then polls for <covid>.json in `sidecar_dir`. The file is removed after a
// successful read. Throws Error(kNetwork).
Feedback dispatch(const MutationPlan& plan, HttpSession& session, const std::filesystem::path& sidecar_dir,
                  std::chrono::milliseconds timeout);

struct OracleContext {
  std::string role;
  const Corpus* corpus = nullptr;
  std::set<std::string> ignored_tables;
  VisibilityProbe visibility;  // fetches the plan's referer as `role`
  CoverageMap* coverage = nullptr;
};

struct Evaluation {
  std::vector<AttackSurfaceItem> items;
  std::optional<Finding> finding;
  std::optional<RuleMatch> match;
};

// Rule 1 for FUNCTION_LEVEL plans, Rule 2 for OBJECT_LEVEL ones. The referer
// is only fetched once a DML statement already carries a plan value.
Evaluation evaluate_feedback(const MutationPlan& plan, const Feedback& feedback, const OracleContext& ctx);

struct ConfirmResult {
  Finding finding;
  std::size_t dispatches = 0;
};

// Re-dispatches fresh variants of the candidate's plan up to max_checks times.
// VALID when every repetition hits the same rule on the same (verb, table)
// with one of its new values; RETRACTED at the first miss.
ConfirmResult confirm_finding(const Finding& candidate, const MutationPlan& plan, const OracleContext& ctx,
                              const Dispatcher& send, Rng& rng, int max_checks = 10);

struct CheckerOptions {
  std::size_t max_requests = 1000;  // mutated plus confirmation dispatches
  std::chrono::milliseconds duration{std::chrono::minutes(5)};
  double p_rand = 0.25;
  int max_checks = 10;
  std::uint64_t seed = 1;
  std::set<std::string> ignored_tables;
  std::filesystem::path sidecar_dir;
  std::chrono::milliseconds sidecar_timeout{2000};
  std::string sentinel;
  // Roles without a login. Records only they produced are skipped by
  // authenticated checkers.
  std::set<std::string> anonymous_roles;
};

struct CheckerStats {
  std::size_t dispatched = 0;
  std::size_t mutated = 0;
  std::size_t confirmations = 0;
  std::size_t non_rejected = 0;  // status 200 or 500
  std::map<int, std::size_t> status_counts;
  std::size_t sidecar_timeouts = 0;
  std::size_t network_errors = 0;
  std::size_t low_value_plans = 0;
  std::size_t candidates = 0;
  std::size_t valid = 0;
  std::size_t retracted = 0;
  std::size_t skipped_known = 0;  // candidates on an already confirmed key
  std::size_t testable_records = 0;
  std::size_t skipped_anonymous = 0;
};

struct CheckerResult {
  std::vector<Finding> findings;
  CheckerStats stats;
};

// Active checker for one role.
class Checker {
 public:
  Checker(std::string role, HttpSession& session, const Corpus& corpus, CheckerOptions options,
          CoverageMap& coverage, AttackSurface& surface);

  CheckerResult run();

 private:
  Feedback send(const MutationPlan& plan);

  std::string role_;
  HttpSession& session_;
  const Corpus& corpus_;
  CheckerOptions options_;
  CoverageMap& coverage_;
  AttackSurface& surface_;
  Rng rng_;
  CheckerStats stats_;
};

}  // namespace acfuzz
