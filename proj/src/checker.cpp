#include "acfuzz/checker.hpp"

#include <algorithm>
#include <thread>

#include <spdlog/spdlog.h>

namespace acfuzz {

std::set<CoverageLine> CoverageMap::merge(const std::vector<CoverageEntry>& entries) {
  std::lock_guard lock(mu_);
  std::set<CoverageLine> delta;
  for (const auto& e : entries)
    for (int line : e.lines)
      if (lines_.insert({e.file, line}).second) delta.insert({e.file, line});
  return delta;
}

std::size_t CoverageMap::size() const {
  std::lock_guard lock(mu_);
  return lines_.size();
}

std::string_view to_string(SurfaceReason r) {
  switch (r) {
    case SurfaceReason::kNewCoverage: return "NEW_COVERAGE";
    case SurfaceReason::kHttp500: return "HTTP_500";
    case SurfaceReason::kBacSignal: return "BAC_SIGNAL";
  }
  return "NEW_COVERAGE";
}

bool AttackSurface::add(AttackSurfaceItem item) {
  std::lock_guard lock(mu_);
  auto key = std::make_pair(item.record_id, item.reason);
  return items_.try_emplace(key, std::move(item)).second;
}

std::vector<AttackSurfaceItem> AttackSurface::items() const {
  std::lock_guard lock(mu_);
  std::vector<AttackSurfaceItem> out;
  for (const auto& [_, item] : items_) out.push_back(item);
  return out;
}

std::size_t AttackSurface::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

const RequestRecord& select_request(const std::vector<RequestRecord>& snapshot, Rng& rng) {
  if (snapshot.empty()) throw Error(ErrorCode::kCampaignIdle, "no requests to select from");
  std::uint64_t total = 0;
  for (const auto& r : snapshot) total += 1 + r.reference_count();
  auto pick = rng.below(total);
  for (const auto& r : snapshot) {
    auto w = 1 + r.reference_count();
    if (pick < w) return r;
    pick -= w;
  }
  return snapshot.back();
}

std::string random_value(ValueKind kind, Rng& rng) {
  if (kind == ValueKind::kNumeric) return std::to_string(1 + rng.below(1000000000ULL));
  return rng.lowercase(12);
}

namespace {

struct Slot {
  const Param* param;
  bool in_query;
};

// Atomic params: query pairs and body pairs that are not composite parents.
std::vector<Slot> atomic_slots(const RequestRecord& r) {
  std::vector<Slot> out;
  for (const auto& p : r.url.query) out.push_back({&p, true});
  for (const auto& p : r.body_params)
    if (p.parent || !has_children(r.body_params, p.name)) out.push_back({&p, false});
  return out;
}

Substitution make_sub(const Slot& s, std::string value, ValueSource source) {
  return Substitution{s.param->name, s.param->parent, s.in_query, s.param->value, std::move(value), source};
}

std::vector<Slot> slots_of(const RequestRecord& r, ParamClass cls) {
  std::vector<Slot> out;
  for (const auto& s : atomic_slots(r))
    if (r.param_class(s.param->name) == cls) out.push_back(s);
  return out;
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

std::vector<std::string> pool_without(const Corpus& corpus, ValueKind kind, const std::optional<std::string>& role,
                                      const std::set<std::string>& excluded) {
  std::vector<std::string> out;
  if (auto pool = corpus.reference_value_pool(kind, role))
    for (const auto& v : *pool)
      if (!excluded.count(v)) out.push_back(v);
  return out;
}

std::string random_unused(ValueKind kind, Rng& rng, const std::set<std::string>& used) {
  for (int i = 0; i < 64; ++i) {
    auto v = random_value(kind, rng);
    if (!used.count(v)) return v;
  }
  return random_value(kind, rng);
}

bool same_slot(const Substitution& s, const Slot& slot) {
  return s.param == slot.param->name && s.parent == slot.param->parent && s.in_query == slot.in_query;
}

}  // namespace

MutationPlan mutate(const RequestRecord& record, const std::string& role, const Corpus& corpus, Rng& rng,
                    const MutationOptions& options) {
  MutationPlan plan;
  plan.base_record = record;
  auto kind = record.candidate_kind(role);
  plan.test_kind = kind == CandidateKind::kBflaCandidate ? TestKind::kFunctionLevel : TestKind::kObjectLevel;

  for (const auto& s : slots_of(record, ParamClass::kSecurityMeasure)) {
    auto own = corpus.account_values(s.param->name, role);
    if (own.empty() || own.front() == s.param->value) continue;
    plan.substitutions.push_back(make_sub(s, own.front(), ValueSource::kAccountUnique));
  }
  if (plan.test_kind == TestKind::kFunctionLevel) return plan;

  auto refs = slots_of(record, ParamClass::kReference);
  auto minor = slots_of(record, ParamClass::kLessImportant);
  if (refs.empty()) {
    plan.low_value = true;
    if (!minor.empty()) {
      const auto& s = pick(minor, rng);
      plan.substitutions.push_back(make_sub(s, random_value(value_kind(s.param->value), rng), ValueSource::kRandom));
    }
    return plan;
  }

  const auto& ref = pick(refs, rng);
  auto vkind = value_kind(ref.param->value);
  std::set<std::string> self{ref.param->value};
  auto pool = pool_without(corpus, vkind, role, self);
  if (pool.empty()) pool = pool_without(corpus, vkind, std::nullopt, self);
  if (pool.empty())
    plan.substitutions.push_back(make_sub(ref, random_unused(vkind, rng, self), ValueSource::kRandom));
  else
    plan.substitutions.push_back(make_sub(ref, pick(pool, rng), ValueSource::kPool));

  if (!minor.empty() && rng.chance(options.p_rand)) {
    const auto& s = pick(minor, rng);
    plan.substitutions.push_back(make_sub(s, random_value(value_kind(s.param->value), rng), ValueSource::kRandom));
  }
  return plan;
}

MutationPlan refresh_plan(const MutationPlan& plan, const std::string& role, const Corpus& corpus, Rng& rng,
                          std::set<std::string>& used) {
  MutationPlan fresh;
  fresh.base_record = plan.base_record;
  fresh.test_kind = plan.test_kind;
  fresh.low_value = plan.low_value;
  const auto& record = plan.base_record;
  // Object-level values must stay foreign to the role.
  std::optional<std::string> exclude;
  if (plan.test_kind == TestKind::kObjectLevel) exclude = role;

  auto fresh_reference = [&](const std::string& old) {
    auto kind = value_kind(old);
    auto pool = pool_without(corpus, kind, exclude, used);
    auto v = pool.empty() ? random_unused(kind, rng, used) : pick(pool, rng);
    return std::make_pair(v, pool.empty() ? ValueSource::kRandom : ValueSource::kPool);
  };

  for (const auto& s : plan.substitutions) {
    Substitution next = s;
    if (s.source != ValueSource::kAccountUnique) {
      if (record.param_class(s.param) == ParamClass::kReference) {
        auto [v, src] = fresh_reference(s.old_value);
        next.new_value = v;
        next.source = src;
      } else {
        next.new_value = random_unused(value_kind(s.old_value), rng, used);
        next.source = ValueSource::kRandom;
      }
      used.insert(next.new_value);
    }
    fresh.substitutions.push_back(std::move(next));
  }
  if (plan.test_kind == TestKind::kFunctionLevel) {
    for (const auto& slot : slots_of(record, ParamClass::kReference)) {
      bool taken = std::any_of(fresh.substitutions.begin(), fresh.substitutions.end(),
                               [&](const Substitution& s) { return same_slot(s, slot); });
      if (taken) continue;
      auto [v, src] = fresh_reference(slot.param->value);
      used.insert(v);
      fresh.substitutions.push_back(make_sub(slot, v, src));
    }
  }
  return fresh;
}

Feedback dispatch(const MutationPlan& plan, HttpSession& session, const std::filesystem::path& sidecar_dir,
                  std::chrono::milliseconds timeout) {
  auto req = plan.mutated().to_http();
  req.headers[std::string(kCovidHeader)] = plan.covid;
  auto resp = session.send(req);
  Feedback fb;
  fb.status = resp.status;
  fb.body_digest = sha256_hex(resp.body);
  if (sidecar_dir.empty()) return fb;

  auto file = sidecar_path(sidecar_dir, plan.covid);
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    std::error_code ec;
    if (std::filesystem::exists(file, ec)) {
      try {
        fb.sidecar = read_sidecar(file);
        std::filesystem::remove(file, ec);
        return fb;
      } catch (const Error& e) {
        // A writer that does not rename atomically may still be writing.
        if (std::chrono::steady_clock::now() >= deadline) {
          spdlog::warn("unreadable sidecar {}: {}", file.string(), e.what());
          break;
        }
      }
    }
    if (std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  fb.sidecar_timeout = true;
  return fb;
}

Evaluation evaluate_feedback(const MutationPlan& plan, const Feedback& feedback, const OracleContext& ctx) {
  Evaluation ev;
  const auto& id = plan.base_record.id;
  if (feedback.sidecar && ctx.coverage) {
    auto delta = ctx.coverage->merge(feedback.sidecar->coverage);
    if (!delta.empty()) ev.items.push_back({id, SurfaceReason::kNewCoverage, std::move(delta)});
  }
  if (feedback.status == 500) ev.items.push_back({id, SurfaceReason::kHttp500, {}});
  if (!feedback.sidecar) return ev;

  auto queries = filter_ignored(lex_all(feedback.sidecar->queries), ctx.ignored_tables);
  auto probe = [&] {
    if (ctx.visibility) return ctx.visibility(plan);
    Visibility v;
    v.low_confidence = true;
    return v;
  };
  Visibility vis;
  FindingKind kind;
  if (plan.test_kind == TestKind::kFunctionLevel) {
    kind = FindingKind::kBfla;
    if (!rule1_bfla(plan, queries, Visibility{})) return ev;
    vis = probe();
    ev.match = rule1_bfla(plan, queries, vis);
  } else {
    kind = FindingKind::kBola;
    std::set<std::string> own;
    if (ctx.corpus) own = ctx.corpus->reference_values_of_role(ctx.role);
    if (!rule2_bola(plan, queries, {}, own)) return ev;
    vis = probe();
    ev.match = rule2_bola(plan, queries, vis.page_refs, own);
  }
  if (!ev.match) return ev;
  ev.finding = make_finding(kind, plan, *ev.match, ctx.role, vis.low_confidence);
  ev.items.push_back({id, SurfaceReason::kBacSignal, {}});
  return ev;
}

ConfirmResult confirm_finding(const Finding& candidate, const MutationPlan& plan, const OracleContext& ctx,
                              const Dispatcher& send, Rng& rng, int max_checks) {
  ConfirmResult result{candidate, 0};
  result.finding.status = FindingStatus::kValid;
  std::set<std::string> used;
  for (const auto& s : plan.substitutions) {
    used.insert(s.old_value);
    used.insert(s.new_value);
  }
  for (const auto& p : plan.base_record.all_params())
    if (plan.base_record.param_class(p.name) == ParamClass::kReference) used.insert(p.value);

  for (int i = 0; i < max_checks; ++i) {
    auto fresh = refresh_plan(plan, ctx.role, *ctx.corpus, rng, used);
    fresh.covid = rng.uuid();
    bool hit = false;
    try {
      auto fb = send(fresh);
      ++result.dispatches;
      auto ev = evaluate_feedback(fresh, fb, ctx);
      if (ev.finding && ev.finding->kind == candidate.kind && ev.finding->verb == candidate.verb &&
          iequals(ev.finding->table, candidate.table)) {
        auto fresh_values = fresh.substituted_values();
        hit = fresh_values.empty() ||
              std::any_of(ev.match->matched_values.begin(), ev.match->matched_values.end(),
                          [&](const std::string& v) { return fresh_values.count(v) > 0; });
      }
    } catch (const Error& e) {
      ++result.dispatches;
      spdlog::debug("confirmation dispatch failed: {}", e.what());
    }
    result.finding.confirmation_count = i + 1;
    if (!hit) {
      result.finding.status = FindingStatus::kRetracted;
      return result;
    }
  }
  return result;
}

Checker::Checker(std::string role, HttpSession& session, const Corpus& corpus, CheckerOptions options,
                 CoverageMap& coverage, AttackSurface& surface)
    : role_(std::move(role)),
      session_(session),
      corpus_(corpus),
      options_(std::move(options)),
      coverage_(coverage),
      surface_(surface),
      rng_(options_.seed) {}

Feedback Checker::send(const MutationPlan& plan) {
  ++stats_.dispatched;
  Feedback fb;
  try {
    fb = dispatch(plan, session_, options_.sidecar_dir, options_.sidecar_timeout);
  } catch (const Error&) {
    ++stats_.network_errors;
    throw;
  }
  ++stats_.status_counts[fb.status];
  if (fb.status == 200 || fb.status == 500) ++stats_.non_rejected;
  if (fb.sidecar_timeout) ++stats_.sidecar_timeouts;
  return fb;
}

CheckerResult Checker::run() {
  auto start = std::chrono::steady_clock::now();
  bool anonymous_checker = options_.anonymous_roles.count(role_) > 0;
  std::vector<RequestRecord> testable;
  for (auto& r : corpus_.snapshot()) {
    if (r.candidate_kind(role_) == CandidateKind::kUnset) continue;
    bool anonymous_only = !r.role_labels.empty() &&
                          std::all_of(r.role_labels.begin(), r.role_labels.end(),
                                      [&](const std::string& l) { return options_.anonymous_roles.count(l) > 0; });
    if (anonymous_only && !anonymous_checker) {
      ++stats_.skipped_anonymous;
      continue;
    }
    testable.push_back(std::move(r));
  }
  stats_.testable_records = testable.size();
  if (stats_.skipped_anonymous)
    spdlog::info("[{}] skipping {} anonymous-only requests", role_, stats_.skipped_anonymous);
  CheckerResult result;
  if (testable.empty()) {
    spdlog::warn("[{}] no requests to test", role_);
    result.stats = stats_;
    return result;
  }

  OracleContext ctx;
  ctx.role = role_;
  ctx.corpus = &corpus_;
  ctx.ignored_tables = options_.ignored_tables;
  ctx.coverage = &coverage_;
  ctx.visibility = [&](const MutationPlan& plan) { return referer_visibility(plan, session_, options_.sentinel); };
  Dispatcher dispatcher = [&](const MutationPlan& plan) { return send(plan); };

  std::set<DedupKey> confirmed;
  MutationOptions mopts{options_.p_rand};
  while (stats_.dispatched < options_.max_requests &&
         std::chrono::steady_clock::now() - start < options_.duration) {
    const auto& record = select_request(testable, rng_);
    auto plan = mutate(record, role_, corpus_, rng_, mopts);
    plan.covid = rng_.uuid();
    if (plan.low_value) ++stats_.low_value_plans;
    ++stats_.mutated;
    Feedback fb;
    try {
      fb = send(plan);
    } catch (const Error& e) {
      spdlog::debug("[{}] dispatch failed: {}", role_, e.what());
      continue;
    }
    auto ev = evaluate_feedback(plan, fb, ctx);
    for (auto& item : ev.items) surface_.add(std::move(item));
    if (!ev.finding) continue;
    ++stats_.candidates;
    auto key = ev.finding->dedup_key();
    if (confirmed.count(key)) {
      ++stats_.skipped_known;
      continue;
    }
    auto before = stats_.dispatched;
    auto confirmation = confirm_finding(*ev.finding, plan, ctx, dispatcher, rng_, options_.max_checks);
    stats_.confirmations += stats_.dispatched - before;
    if (confirmation.finding.status == FindingStatus::kValid) {
      ++stats_.valid;
      confirmed.insert(key);
      spdlog::info("[{}] {} confirmed: {} {} -> {}", role_, to_string(confirmation.finding.kind),
                   confirmation.finding.method, confirmation.finding.url, confirmation.finding.query);
    } else {
      ++stats_.retracted;
    }
    result.findings.push_back(std::move(confirmation.finding));
  }
  result.findings = dedup_findings(result.findings);
  result.stats = stats_;
  return result;
}

}  // namespace acfuzz
