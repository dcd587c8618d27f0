#include "acfuzz/campaign.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <future>

#include <spdlog/spdlog.h>

#include "acfuzz/checker.hpp"
#include "acfuzz/collector.hpp"
#include "acfuzz/role_analysis.hpp"
#include "acfuzz/util.hpp"

namespace acfuzz {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kCollect: return "collect";
    case Phase::kAnalyze: return "analyze";
    case Phase::kFuzz: return "fuzz";
  }
  return "collect";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Checkpoint {
  std::vector<std::string> completed;
  json stats = json::object();

  bool has(Phase p) const {
    return std::find(completed.begin(), completed.end(), std::string(to_string(p))) != completed.end();
  }
};

Checkpoint load_checkpoint(const fs::path& file) {
  Checkpoint cp;
  if (!fs::exists(file)) return cp;
  try {
    auto j = json::parse(read_file(file));
    cp.completed = j.value("completed", std::vector<std::string>{});
    cp.stats = j.value("stats", json::object());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kPersistence, "unreadable checkpoint " + file.string() + ": " + e.what());
  }
  return cp;
}

void save_checkpoint(const fs::path& file, const Checkpoint& cp) {
  write_file(file, json{{"completed", cp.completed}, {"stats", cp.stats}}.dump(2) + "\n");
}

std::vector<RoleRank> ranks_of(const Config& config) {
  std::vector<RoleRank> out;
  for (const auto& r : config.roles) out.push_back({r.name, r.rank});
  return out;
}

std::map<std::string, int> rank_map(const Config& config) {
  std::map<std::string, int> out;
  for (const auto& r : config.roles) out[r.name] = r.rank;
  return out;
}

json to_json(const CrawlStats& s) {
  return json{{"pages_visited", s.pages_visited}, {"links_followed", s.links_followed},
              {"forms_submitted", s.forms_submitted}, {"stored", s.stored},
              {"rejected", s.rejected}, {"errors", s.errors}};
}

json to_json(const CheckerStats& s) {
  json statuses = json::object();
  for (const auto& [code, n] : s.status_counts) statuses[std::to_string(code)] = n;
  return json{{"dispatched", s.dispatched}, {"mutated", s.mutated}, {"confirmations", s.confirmations},
              {"non_rejected", s.non_rejected}, {"status_counts", statuses},
              {"sidecar_timeouts", s.sidecar_timeouts}, {"network_errors", s.network_errors},
              {"low_value_plans", s.low_value_plans}, {"candidates", s.candidates}, {"valid", s.valid},
              {"retracted", s.retracted}, {"skipped_known", s.skipped_known},
              {"testable_records", s.testable_records}, {"skipped_anonymous", s.skipped_anonymous}};
}

RoleSession login_role(const Config& config, const RoleConfig& role) {
  return login(role.name, role.rank, role.login, config.base_url);
}

// Each role collects into its own staging list; lists are merged in config
// order so the corpus does not depend on thread timing.
json collect(const Config& config, Corpus& corpus) {
  auto start = Clock::now();
  struct Staged {
    std::vector<RequestRecord> records;
    CrawlStats crawl;
    IngestResult ingest;
  };
  std::vector<std::future<Staged>> jobs;
  for (std::size_t i = 0; i < config.roles.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&config, i] {
      const auto& role = config.roles[i];
      Staged staged;
      RequestSink sink = [&](const RequestRecord& r) { staged.records.push_back(r); };
      if (role.traffic) {
        staged.ingest = ingest_recorded(*role.traffic, sink, config.base_url);
        for (const auto& v : staged.ingest.violations) spdlog::warn("[{}] traffic {}", role.name, v);
      }
      if (role.crawl) {
        auto session = login_role(config, role);
        CrawlOptions opts;
        opts.limits = config.crawler;
        opts.sentinel = config.sentinel;
        opts.seed = derive_seed(config.budget.seed, 1000 + i);
        opts.timeout = std::chrono::milliseconds(config.http_timeout_ms);
        staged.crawl = crawl(session, opts, sink);
      }
      return staged;
    }));
  }
  std::vector<Staged> results;
  std::optional<Error> failure;
  for (auto& j : jobs) {
    try {
      results.push_back(j.get());
    } catch (const Error& e) {
      if (!failure) failure = e;
    }
  }
  if (failure) throw *failure;

  json stats = json::object();
  json roles = json::object();
  std::size_t incoming = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& role = config.roles[i].name;
    for (const auto& r : results[i].records) corpus.store_request(r, role);
    incoming += results[i].records.size();
    roles[role] = {{"crawl", to_json(results[i].crawl)},
                   {"ingested", results[i].ingest.stored},
                   {"ingest_skipped", results[i].ingest.skipped},
                   {"ingest_violations", results[i].ingest.violations.size()}};
  }
  stats["roles"] = roles;
  stats["collected_requests"] = incoming;
  stats["corpus_requests"] = corpus.size();
  stats["collection_time_s"] = seconds_since(start);
  spdlog::info("collection: {} requests -> {} unique in {:.2f}s", incoming, corpus.size(),
               stats["collection_time_s"].get<double>());
  return stats;
}

json analyze(const Config& config, Corpus& corpus, LlmClient* override_client) {
  auto start = Clock::now();
  auto roles = ranks_of(config);
  auto target = select_target(roles);
  auto ranks = rank_map(config);
  json candidates = json::object();
  for (const auto& checker : checker_roles(roles, target)) {
    auto part = mark_candidates(corpus, checker.name, ranks);
    candidates[checker.name] = {{"bfla", part.bfla.size()}, {"bola", part.bola.size()}};
    spdlog::info("[{}] candidates: {} BFLA, {} BOLA", checker.name, part.bfla.size(), part.bola.size());
  }

  std::unique_ptr<ChatCompletionsClient> owned;
  LlmClient* client = override_client;
  if (!client && config.llm.enabled) {
    const char* key = std::getenv(config.llm.api_key_env.c_str());
    if (!key) spdlog::warn("{} is not set; sending without an API key", config.llm.api_key_env);
    ChatCompletionsConfig cc;
    cc.endpoint = config.llm.endpoint;
    cc.model = config.llm.model;
    cc.api_key = key ? key : "";
    cc.timeout = std::chrono::milliseconds(config.llm.timeout_ms);
    owned = std::make_unique<ChatCompletionsClient>(cc);
    client = owned.get();
  }
  auto cache_file = config.llm.cache ? *config.llm.cache : config.output_dir / "llm_cache.json";
  ReplyCache cache(cache_file);
  ParamAnalyzer analyzer(corpus, client, &cache, config.llm.model);
  analyzer.analyze_all();
  auto s = analyzer.stats();
  spdlog::info("analysis: {} requests, {} LLM queries ({} cached), {} heuristic", s.requests, s.llm_queries,
               s.cache_hits, s.fallbacks);
  return json{{"target_role", target},
              {"candidates", candidates},
              {"analysis",
               {{"requests", s.requests}, {"llm_queries", s.llm_queries}, {"cache_hits", s.cache_hits},
                {"fallbacks", s.fallbacks}, {"unknown_names", s.unknown_names}}},
              {"llm_enabled", client != nullptr},
              {"analysis_time_s", seconds_since(start)}};
}

struct FuzzOutcome {
  std::vector<Finding> findings;
  json stats;
};

FuzzOutcome fuzz(const Config& config, const Corpus& corpus) {
  auto start = Clock::now();
  auto roles = ranks_of(config);
  auto target = select_target(roles);
  auto checkers = checker_roles(roles, target);
  std::set<std::string> anonymous;
  for (const auto& r : config.roles)
    if (r.anonymous()) anonymous.insert(r.name);

  CoverageMap coverage;
  AttackSurface surface;
  auto share = config.budget.max_requests / checkers.size();
  auto extra = config.budget.max_requests % checkers.size();

  // Sessions are established before any checker starts.
  std::vector<RoleSession> sessions;
  std::vector<std::size_t> indices;
  for (const auto& c : checkers) {
    auto it = std::find_if(config.roles.begin(), config.roles.end(),
                           [&](const RoleConfig& r) { return r.name == c.name; });
    indices.push_back(static_cast<std::size_t>(it - config.roles.begin()));
    sessions.push_back(login_role(config, *it));
  }

  std::vector<std::future<CheckerResult>> jobs;
  for (std::size_t k = 0; k < checkers.size(); ++k) {
    CheckerOptions opts;
    opts.max_requests = share + (k < extra ? 1 : 0);
    opts.duration = std::chrono::milliseconds(static_cast<long long>(config.budget.duration_s * 1000));
    opts.p_rand = config.budget.p_rand;
    opts.max_checks = config.budget.max_checks;
    opts.seed = derive_seed(config.budget.seed, indices[k]);
    opts.ignored_tables = config.ignored_tables;
    opts.sidecar_dir = config.sidecar_dir;
    opts.sidecar_timeout = std::chrono::milliseconds(config.sidecar_timeout_ms);
    opts.sentinel = config.sentinel;
    opts.anonymous_roles = anonymous;
    jobs.push_back(std::async(std::launch::async, [&, k, opts] {
      auto http = open_session(sessions[k], std::chrono::milliseconds(config.http_timeout_ms));
      Checker checker(checkers[k].name, http, corpus, opts, coverage, surface);
      return checker.run();
    }));
  }

  std::vector<Finding> all;
  json per_role = json::object();
  std::size_t dispatched = 0, non_rejected = 0;
  std::optional<Error> failure;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    try {
      auto r = jobs[k].get();
      all.insert(all.end(), r.findings.begin(), r.findings.end());
      per_role[checkers[k].name] = to_json(r.stats);
      dispatched += r.stats.dispatched;
      non_rejected += r.stats.non_rejected;
    } catch (const Error& e) {
      if (!failure) failure = e;
    }
  }
  if (failure) throw *failure;

  FuzzOutcome out;
  out.findings = dedup_findings(all);
  std::size_t valid = 0, retracted = 0;
  for (const auto& f : out.findings) {
    if (f.status == FindingStatus::kValid) ++valid;
    if (f.status == FindingStatus::kRetracted) ++retracted;
  }
  std::map<std::string, std::size_t> reasons;
  for (const auto& item : surface.items()) ++reasons[std::string(to_string(item.reason))];
  out.stats = json{{"checkers", per_role},
                   {"dispatched", dispatched},
                   {"non_rejected", non_rejected},
                   {"non_rejected_ratio", dispatched ? static_cast<double>(non_rejected) / dispatched : 0.0},
                   {"coverage_lines", coverage.size()},
                   {"attack_surface", reasons},
                   {"findings_valid", valid},
                   {"findings_retracted", retracted},
                   {"fuzz_time_s", seconds_since(start)}};
  spdlog::info("fuzzing: {} dispatched, {} VALID, {} RETRACTED", dispatched, valid, retracted);
  return out;
}

}  // namespace

json findings_json(const std::vector<Finding>& findings) {
  json list = json::array();
  for (const auto& f : findings) list.push_back(to_json(f));
  return json{{"findings", list}};
}

std::vector<Finding> load_findings(const fs::path& file) {
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, file.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("findings") || !j["findings"].is_array())
    throw Error(ErrorCode::kSchema, file.string() + ": expected an object with a 'findings' array");
  std::vector<Finding> out;
  for (const auto& f : j["findings"]) {
    try {
      out.push_back(finding_from_json(f));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchema, file.string() + ": " + e.what());
    }
  }
  return out;
}

void reset_target(const Config& config) {
  if (config.reset.url) {
    auto url = resolve_href(config.base_url, *config.reset.url);
    if (!url) throw Error(ErrorCode::kConfig, "reset url '" + *config.reset.url + "' is not on the target");
    HttpSession http(*url, std::chrono::milliseconds(config.http_timeout_ms));
    HttpRequest req;
    req.url = *url;
    auto resp = http.send(req);
    if (resp.status < 200 || resp.status >= 300)
      throw Error(ErrorCode::kNetwork, "reset returned status " + std::to_string(resp.status));
  }
  if (config.reset.command) {
    int rc = std::system(config.reset.command->c_str());
    if (rc != 0) throw Error(ErrorCode::kIo, "reset command exited with " + std::to_string(rc));
  }
}

CampaignResult run_campaign(const Config& config, const CampaignOptions& options) {
  fs::create_directories(config.output_dir);
  auto corpus_dir = config.output_dir / "corpus";
  auto checkpoint_file = config.output_dir / "checkpoint.json";
  Checkpoint cp;
  if (options.resume) {
    cp = load_checkpoint(checkpoint_file);
  } else {
    fs::remove_all(corpus_dir);
    fs::remove(checkpoint_file);
  }
  fs::create_directories(corpus_dir);
  fs::create_directories(config.sidecar_dir);
  Corpus corpus(config.sentinel, corpus_dir);
  CampaignResult result;

  auto finish_phase = [&](Phase p, const json& stats) {
    cp.completed.push_back(std::string(to_string(p)));
    for (const auto& [k, v] : stats.items()) cp.stats[k] = v;
    save_checkpoint(checkpoint_file, cp);
    result.completed.push_back(p);
  };

  if (!cp.has(Phase::kCollect)) {
    // Collection starts from the target's initial state.
    reset_target(config);
    finish_phase(Phase::kCollect, collect(config, corpus));
  } else {
    spdlog::info("resuming with {} collected requests", corpus.size());
    if (corpus.size() == 0) throw Error(ErrorCode::kEmptyCorpus, "checkpoint says collected but corpus is empty");
  }

  if (options.stop_after != Phase::kCollect) {
    if (!cp.has(Phase::kAnalyze)) finish_phase(Phase::kAnalyze, analyze(config, corpus, options.llm));

    if (options.stop_after == Phase::kFuzz) {
      reset_target(config);
      auto outcome = fuzz(config, corpus);
      result.findings = std::move(outcome.findings);
      for (const auto& [k, v] : outcome.stats.items()) cp.stats[k] = v;
      if (options.bench) {
        reset_target(config);
        cp.stats["bench"] = to_json(bench(config, corpus, options.bench_requests));
        reset_target(config);
      }
      write_file(config.output_dir / "findings.json", findings_json(result.findings).dump(2) + "\n");
      finish_phase(Phase::kFuzz, json::object());
    }
  }

  result.report = findings_json(result.findings);
  result.report["stats"] = cp.stats;
  json phases = json::array();
  for (const auto& p : cp.completed) phases.push_back(p);
  result.report["phases"] = phases;
  write_file(config.output_dir / "report.json", result.report.dump(2) + "\n");
  return result;
}

json to_json(const BenchResult& b) {
  return json{{"requests", b.requests},       {"mean_with_s", b.mean_with_s},
              {"mean_without_s", b.mean_without_s}, {"delta_s", b.delta_s},
              {"sidecars_with", b.sidecars_with},  {"sidecars_without", b.sidecars_without}};
}

BenchResult bench(const Config& config, const Corpus& corpus, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kConfig, "bench needs at least one request");
  auto records = corpus.snapshot();
  if (records.empty()) throw Error(ErrorCode::kEmptyCorpus, "bench needs a collected corpus");
  auto roles = ranks_of(config);
  auto target = select_target(roles);
  const auto& role = *std::find_if(config.roles.begin(), config.roles.end(),
                                   [&](const RoleConfig& r) { return r.name == target; });
  auto session = login_role(config, role);
  auto http = open_session(session, std::chrono::milliseconds(config.http_timeout_ms));
  fs::create_directories(config.sidecar_dir);

  auto count_files = [&] {
    std::size_t c = 0;
    for (const auto& e : fs::directory_iterator(config.sidecar_dir))
      if (e.path().extension() == ".json") ++c;
    return c;
  };
  Rng rng(derive_seed(config.budget.seed, 7777));
  BenchResult b;
  b.requests = n;
  double with_total = 0, without_total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& record = records[i % records.size()];
    auto plain = record.to_http();
    auto tagged = plain;
    auto covid = rng.uuid();
    tagged.headers[std::string(kCovidHeader)] = covid;

    auto before = count_files();
    auto run_plain = [&] {
      without_total += http.send(plain).elapsed.count();
      if (count_files() != before) ++b.sidecars_without;
    };
    auto run_tagged = [&] {
      with_total += http.send(tagged).elapsed.count();
      auto file = sidecar_path(config.sidecar_dir, covid);
      std::error_code ec;
      if (fs::exists(file, ec)) {
        ++b.sidecars_with;
        fs::remove(file, ec);
      }
      before = count_files();
    };
    // Alternate the order so warm-up effects do not favour one side.
    if (i % 2 == 0) {
      run_plain();
      run_tagged();
    } else {
      run_tagged();
      run_plain();
    }
  }
  b.mean_with_s = with_total / n;
  b.mean_without_s = without_total / n;
  b.delta_s = b.mean_with_s - b.mean_without_s;
  spdlog::info("bench: {} requests, with {:.6f}s, without {:.6f}s, delta {:.6f}s", n, b.mean_with_s,
               b.mean_without_s, b.delta_s);
  return b;
}

BenchResult bench(const Config& config, std::size_t n) {
  Corpus corpus(config.sentinel, config.output_dir / "corpus");
  return bench(config, corpus, n);
}

}  // namespace acfuzz
