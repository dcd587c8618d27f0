#include "acfuzz/oracle.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "acfuzz/html.hpp"
#include "acfuzz/util.hpp"

namespace acfuzz {

using nlohmann::json;

json to_json(const QuerySidecar& s) {
  json coverage = json::array();
  for (const auto& c : s.coverage) coverage.push_back({{"file", c.file}, {"lines", c.lines}});
  return json{{"covid", s.covid}, {"queries", s.queries}, {"coverage", coverage}};
}

QuerySidecar parse_sidecar(const json& j) {
  auto fail = [](const std::string& why) { return Error(ErrorCode::kSchema, "sidecar: " + why); };
  if (!j.is_object()) throw fail("document is not an object");
  QuerySidecar s;
  if (!j.contains("covid") || !j["covid"].is_string()) throw fail("missing string 'covid'");
  s.covid = j["covid"].get<std::string>();
  if (!j.contains("queries") || !j["queries"].is_array()) throw fail("'queries' must be an array");
  for (const auto& q : j["queries"]) {
    if (!q.is_string()) throw fail("'queries' entries must be strings");
    s.queries.push_back(q.get<std::string>());
  }
  if (!j.contains("coverage") || !j["coverage"].is_array()) throw fail("'coverage' must be an array");
  for (const auto& c : j["coverage"]) {
    if (!c.is_object() || !c.contains("file") || !c["file"].is_string())
      throw fail("coverage entries need a string 'file'");
    if (!c.contains("lines") || !c["lines"].is_array()) throw fail("coverage entries need a 'lines' array");
    CoverageEntry e;
    e.file = c["file"].get<std::string>();
    for (const auto& l : c["lines"]) {
      if (!l.is_number_integer()) throw fail("coverage lines must be integers");
      e.lines.push_back(l.get<int>());
    }
    s.coverage.push_back(std::move(e));
  }
  return s;
}

std::filesystem::path sidecar_path(const std::filesystem::path& dir, std::string_view covid) {
  return dir / (std::string(covid) + ".json");
}

QuerySidecar read_sidecar(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, "sidecar " + file.string() + ": " + e.what());
  }
  auto s = parse_sidecar(j);
  if (s.covid != file.stem().string())
    throw Error(ErrorCode::kSchema, "sidecar " + file.string() + " carries covid " + s.covid);
  return s;
}

std::vector<LexedQuery> lex_all(const std::vector<std::string>& raw) {
  std::vector<LexedQuery> out;
  out.reserve(raw.size());
  for (const auto& q : raw) out.push_back(lex_sql(q));
  return out;
}

std::vector<LexedQuery> filter_ignored(const std::vector<LexedQuery>& queries,
                                       const std::set<std::string>& ignored_tables) {
  std::vector<LexedQuery> out;
  for (const auto& q : queries) {
    bool ignored = std::any_of(ignored_tables.begin(), ignored_tables.end(),
                               [&](const std::string& t) { return iequals(t, q.table); });
    if (!ignored) out.push_back(q);
  }
  return out;
}

std::optional<RuleMatch> rule1_bfla(const MutationPlan& plan, const std::vector<LexedQuery>& queries,
                                    const Visibility& visibility) {
  if (visibility.request_visible) return std::nullopt;
  auto submitted = plan.submitted_values();
  for (const auto& q : queries) {
    if (!q.is_dml()) continue;
    std::vector<std::string> matched;
    for (const auto& lit : q.all_literals)
      if (submitted.count(lit) && std::find(matched.begin(), matched.end(), lit) == matched.end())
        matched.push_back(lit);
    if (!matched.empty()) return RuleMatch{q, std::move(matched)};
  }
  return std::nullopt;
}

std::optional<RuleMatch> rule2_bola(const MutationPlan& plan, const std::vector<LexedQuery>& queries,
                                    const std::set<std::string>& page_refs,
                                    const std::set<std::string>& role_reference_values) {
  auto substituted = plan.substituted_values();
  for (const auto& q : queries) {
    if (!q.is_dml()) continue;
    std::vector<std::string> matched;
    for (const auto& lit : q.where_literals) {
      if (!substituted.count(lit)) continue;
      if (page_refs.count(lit) || role_reference_values.count(lit)) continue;
      if (std::find(matched.begin(), matched.end(), lit) == matched.end()) matched.push_back(lit);
    }
    if (!matched.empty()) return RuleMatch{q, std::move(matched)};
  }
  return std::nullopt;
}

namespace {

struct ActionParam {
  std::string name;
  std::string value;
};

bool contains_pair(const std::vector<Param>& params, const ActionParam& a) {
  return std::any_of(params.begin(), params.end(),
                     [&](const Param& p) { return p.name == a.name && p.value == a.value; });
}

}  // namespace

Visibility visibility_from_page(const MutationPlan& plan, const Url& page_url, std::string_view markup,
                                std::string_view sentinel) {
  Visibility vis;
  const auto& record = plan.base_record;
  std::set<std::string> reference_names;
  for (const auto& [name, cls] : record.param_classes)
    if (cls == ParamClass::kReference) reference_names.insert(name);

  // Sys-gen, non-reference values name the action (f=save, do=remove).
  auto action_like = [&](const Param& p) {
    auto cls = record.param_class(p.name);
    bool user_gen = !sentinel.empty() && p.value.find(sentinel) != std::string::npos;
    return !p.value.empty() && !user_gen &&
           (cls == ParamClass::kLessImportant || cls == ParamClass::kUnclassified) &&
           !has_children(record.body_params, p.name);
  };
  std::vector<ActionParam> query_actions, body_actions;
  for (const auto& p : record.url.query)
    if (action_like(p)) query_actions.push_back({p.name, p.value});
  for (const auto& p : record.body_params)
    if (!p.parent && action_like(p)) body_actions.push_back({p.name, p.value});

  auto collect_refs = [&](const std::vector<Param>& params) {
    for (const auto& p : params)
      if (reference_names.count(p.name) && !p.value.empty()) vis.page_refs.insert(p.value);
  };

  auto doc = html::parse(markup);
  for (const auto& a : doc.anchors) {
    auto target = resolve_href(page_url, a.href);
    if (!target) continue;
    collect_refs(target->query);
    if (target->path != record.url.path || record.method != Method::kGet) continue;
    bool all = std::all_of(query_actions.begin(), query_actions.end(),
                           [&](const ActionParam& ap) { return contains_pair(target->query, ap); });
    if (all) vis.request_visible = true;
  }
  for (const auto& form : doc.forms) {
    auto target = form.action.empty() ? std::optional<Url>(page_url) : resolve_href(page_url, form.action);
    std::vector<Param> fields;
    for (const auto& f : form.fields) {
      if (f.name.empty()) continue;
      if (f.tag == "select") {
        for (const auto& o : f.options) fields.push_back({f.name, o, std::nullopt});
      } else {
        fields.push_back({f.name, f.value, std::nullopt});
      }
    }
    collect_refs(fields);
    if (!target) continue;
    collect_refs(target->query);
    Method m = form.method == "post" ? Method::kPost : Method::kGet;
    if (target->path != record.url.path || m != record.method) continue;
    auto kind_of = [&](const std::string& name) -> std::string {
      for (const auto& f : form.fields)
        if (f.name == name) return f.type;
      return {};
    };
    auto satisfied = [&](const ActionParam& ap) {
      if (contains_pair(target->query, ap)) return true;
      auto type = kind_of(ap.name);
      if (type.empty()) return false;
      // Visible fields are user-editable; hidden and select ones must match.
      if (type == "hidden" || type == "select") return contains_pair(fields, ap);
      return true;
    };
    bool all = std::all_of(query_actions.begin(), query_actions.end(), satisfied) &&
               std::all_of(body_actions.begin(), body_actions.end(), satisfied);
    if (all) vis.request_visible = true;
  }
  return vis;
}

Visibility referer_visibility(const MutationPlan& plan, HttpSession& http, std::string_view sentinel) {
  Visibility low;
  low.low_confidence = true;
  auto referer = plan.base_record.referer();
  if (!referer) return low;
  Url page;
  try {
    page = parse_url(*referer);
  } catch (const Error&) {
    return low;
  }
  HttpRequest req;
  req.method = Method::kGet;
  req.url = page;
  HttpResponse resp;
  try {
    resp = http.send(req);
  } catch (const Error&) {
    return low;
  }
  if (resp.status < 200 || resp.status >= 300) return low;
  return visibility_from_page(plan, page, resp.body, sentinel);
}

std::string_view to_string(FindingKind k) { return k == FindingKind::kBola ? "BOLA" : "BFLA"; }

std::string_view to_string(FindingStatus s) {
  switch (s) {
    case FindingStatus::kCandidate: return "CANDIDATE";
    case FindingStatus::kValid: return "VALID";
    case FindingStatus::kRetracted: return "RETRACTED";
  }
  return "CANDIDATE";
}

DedupKey Finding::dedup_key() const {
  std::string path;
  try {
    path = parse_url(url).path;
  } catch (const Error&) {
    path = url;
  }
  return DedupKey{method, path, std::string(to_string(verb)), to_lower(table)};
}

Finding make_finding(FindingKind kind, const MutationPlan& plan, const RuleMatch& match,
                     const std::string& role, bool low_confidence) {
  auto mutated = plan.mutated();
  Finding f;
  f.kind = kind;
  f.request_key = uniqueness_key(plan.base_record);
  f.method = std::string(to_string(mutated.method));
  f.url = mutated.url.to_string();
  f.body = mutated.body();
  f.query = match.query.raw;
  f.verb = match.query.verb;
  f.table = match.query.table;
  f.matched_values = match.matched_values;
  f.role = role;
  f.low_confidence = low_confidence;
  return f;
}

json to_json(const Finding& f) {
  auto key = f.dedup_key();
  return json{{"kind", to_string(f.kind)},
              {"status", to_string(f.status)},
              {"role", f.role},
              {"request", {{"method", f.method}, {"url", f.url}, {"body", f.body}, {"key", f.request_key}}},
              {"query", {{"raw", f.query}, {"verb", to_string(f.verb)}, {"table", f.table}}},
              {"matched_values", f.matched_values},
              {"confirmation_count", f.confirmation_count},
              {"low_confidence", f.low_confidence},
              {"dedup_key", {key.method, key.path, key.verb, key.table}}};
}

Finding finding_from_json(const json& j) {
  Finding f;
  auto kind = j.at("kind").get<std::string>();
  if (kind != "BOLA" && kind != "BFLA") throw Error(ErrorCode::kSchema, "finding kind '" + kind + "'");
  f.kind = kind == "BOLA" ? FindingKind::kBola : FindingKind::kBfla;
  auto status = j.at("status").get<std::string>();
  if (status == "VALID") f.status = FindingStatus::kValid;
  else if (status == "RETRACTED") f.status = FindingStatus::kRetracted;
  else if (status == "CANDIDATE") f.status = FindingStatus::kCandidate;
  else throw Error(ErrorCode::kSchema, "finding status '" + status + "'");
  f.role = j.at("role").get<std::string>();
  const auto& req = j.at("request");
  f.method = req.at("method").get<std::string>();
  f.url = req.at("url").get<std::string>();
  f.body = req.value("body", "");
  f.request_key = req.value("key", "");
  const auto& q = j.at("query");
  f.query = q.at("raw").get<std::string>();
  auto verb = q.value("verb", "OTHER");
  f.verb = verb == "INSERT"   ? SqlVerb::kInsert
           : verb == "UPDATE" ? SqlVerb::kUpdate
           : verb == "DELETE" ? SqlVerb::kDelete
           : verb == "SELECT" ? SqlVerb::kSelect
                              : SqlVerb::kOther;
  f.table = q.value("table", "");
  f.matched_values = j.value("matched_values", std::vector<std::string>{});
  f.confirmation_count = j.value("confirmation_count", 0);
  f.low_confidence = j.value("low_confidence", false);
  return f;
}

std::vector<Finding> dedup_findings(const std::vector<Finding>& findings) {
  // VALID beats RETRACTED beats CANDIDATE.
  auto status_rank = [](FindingStatus s) {
    return s == FindingStatus::kValid ? 0 : s == FindingStatus::kRetracted ? 1 : 2;
  };
  auto order = [&](const Finding& f) {
    return std::make_tuple(f.dedup_key(), status_rank(f.status), static_cast<int>(f.kind), f.role,
                           f.request_key, f.url, f.body, f.query, f.matched_values, -f.confirmation_count,
                           f.low_confidence);
  };
  std::map<DedupKey, Finding> best;
  for (const auto& f : findings) {
    auto [it, inserted] = best.try_emplace(f.dedup_key(), f);
    if (!inserted && order(f) < order(it->second)) it->second = f;
  }
  std::vector<Finding> out;
  for (auto& [_, f] : best) out.push_back(std::move(f));
  return out;
}

}  // namespace acfuzz
