#include "acfuzz/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "acfuzz/util.hpp"

namespace acfuzz {

using nlohmann::json;

std::string_view to_string(CandidateKind k) {
  switch (k) {
    case CandidateKind::kUnset: return "UNSET";
    case CandidateKind::kBolaCandidate: return "BOLA_CANDIDATE";
    case CandidateKind::kBflaCandidate: return "BFLA_CANDIDATE";
  }
  return "UNSET";
}

std::string_view to_string(ParamClass c) {
  switch (c) {
    case ParamClass::kUnclassified: return "UNCLASSIFIED";
    case ParamClass::kReference: return "REFERENCE";
    case ParamClass::kLessImportant: return "LESS_IMPORTANT";
    case ParamClass::kSecurityMeasure: return "SECURITY_MEASURE";
  }
  return "UNCLASSIFIED";
}

std::string_view to_string(Origin o) { return o == Origin::kUserGen ? "USER_GEN" : "SYS_GEN"; }
std::string_view to_string(ValueKind k) { return k == ValueKind::kNumeric ? "NUMERIC" : "TEXT"; }

std::string_view to_string(StoreOutcome o) {
  switch (o) {
    case StoreOutcome::kNew: return "NEW";
    case StoreOutcome::kLabelAdded: return "LABEL_ADDED";
    case StoreOutcome::kDuplicate: return "DUPLICATE";
  }
  return "DUPLICATE";
}

CandidateKind parse_candidate_kind(std::string_view s) {
  if (s == "BOLA_CANDIDATE") return CandidateKind::kBolaCandidate;
  if (s == "BFLA_CANDIDATE") return CandidateKind::kBflaCandidate;
  if (s == "UNSET") return CandidateKind::kUnset;
  throw Error(ErrorCode::kSchema, "unknown candidate kind '" + std::string(s) + "'");
}

ParamClass parse_param_class(std::string_view s) {
  if (s == "REFERENCE") return ParamClass::kReference;
  if (s == "LESS_IMPORTANT") return ParamClass::kLessImportant;
  if (s == "SECURITY_MEASURE") return ParamClass::kSecurityMeasure;
  if (s == "UNCLASSIFIED") return ParamClass::kUnclassified;
  throw Error(ErrorCode::kSchema, "unknown param class '" + std::string(s) + "'");
}

ValueKind value_kind(std::string_view value) {
  return starts_with_digit(value) ? ValueKind::kNumeric : ValueKind::kText;
}

CandidateKind RequestRecord::candidate_kind(std::string_view role) const {
  auto it = candidate_kinds.find(std::string(role));
  return it == candidate_kinds.end() ? CandidateKind::kUnset : it->second;
}

ParamClass RequestRecord::param_class(std::string_view name) const {
  auto it = param_classes.find(std::string(name));
  return it == param_classes.end() ? ParamClass::kUnclassified : it->second;
}

std::size_t RequestRecord::reference_count() const {
  std::size_t n = 0;
  for (const auto& [name, cls] : param_classes)
    if (cls == ParamClass::kReference) ++n;
  return n;
}

std::optional<std::string> RequestRecord::referer() const {
  auto it = headers.find("Referer");
  if (it == headers.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::vector<Param> RequestRecord::all_params() const {
  std::vector<Param> out = url.query;
  out.insert(out.end(), body_params.begin(), body_params.end());
  return out;
}

HttpRequest RequestRecord::to_http() const {
  HttpRequest req;
  req.method = method;
  req.url = url;
  req.headers = headers;
  req.body = body();
  return req;
}

RequestRecord make_record(Method method, std::string_view url, Headers headers,
                          std::string_view body) {
  RequestRecord r;
  r.method = method;
  r.url = parse_url(url);
  r.headers = std::move(headers);
  r.body_params = flatten_nested(parse_form(body));
  return r;
}

std::string uniqueness_key(const RequestRecord& record) {
  std::set<std::string> query_names;
  for (const auto& p : record.url.query) query_names.insert(p.name);
  std::set<std::string> body_names;
  for (const auto& p : record.body_params)
    if (!p.parent) body_names.insert(p.name);
  std::string key(to_string(record.method));
  key += ' ';
  key += record.url.base();
  key += record.url.path;
  key += " ?";
  for (const auto& n : query_names) key += percent_encode(n) + ",";
  key += " #";
  for (const auto& n : body_names) key += percent_encode(n) + ",";
  return key;
}

json to_json(const RequestRecord& r) {
  json body = json::array();
  for (const auto& p : r.body_params) {
    json jp = {{"name", p.name}, {"value", p.value}};
    if (p.parent) jp["parent"] = *p.parent;
    body.push_back(std::move(jp));
  }
  json headers = json::object();
  for (const auto& [k, v] : r.headers) headers[k] = v;
  json kinds = json::object();
  for (const auto& [role, k] : r.candidate_kinds) kinds[role] = to_string(k);
  json classes = json::object();
  for (const auto& [name, c] : r.param_classes) classes[name] = to_string(c);
  return json{{"id", r.id},
              {"method", to_string(r.method)},
              {"url", r.url.to_string()},
              {"headers", headers},
              {"body", body},
              {"role_labels", r.role_labels},
              {"candidate_kinds", kinds},
              {"param_classes", classes}};
}

RequestRecord record_from_json(const json& j) {
  RequestRecord r;
  r.id = j.at("id").get<std::string>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.url = parse_url(j.at("url").get<std::string>());
  const json headers = j.value("headers", json::object());
  for (const auto& [k, v] : headers.items()) r.headers[k] = v.get<std::string>();
  for (const auto& jp : j.value("body", json::array())) {
    Param p{jp.at("name").get<std::string>(), jp.at("value").get<std::string>(), std::nullopt};
    if (jp.contains("parent")) p.parent = jp.at("parent").get<std::string>();
    r.body_params.push_back(std::move(p));
  }
  r.role_labels = j.value("role_labels", RoleSet{});
  const json kinds = j.value("candidate_kinds", json::object());
  for (const auto& [role, k] : kinds.items()) r.candidate_kinds[role] = parse_candidate_kind(k.get<std::string>());
  const json classes = j.value("param_classes", json::object());
  for (const auto& [name, c] : classes.items())
    r.param_classes[name] = parse_param_class(c.get<std::string>());
  return r;
}

json to_json(const ParamEntry& e) {
  json values = json::array();
  for (const auto& [v, roles] : e.values)
    values.push_back({{"value", v}, {"kind", to_string(value_kind(v))}, {"roles", roles}});
  return json{{"name", e.name},
              {"values", values},
              {"role_labels", e.role_labels},
              {"origin", to_string(e.origin)},
              {"class", to_string(e.param_class)}};
}

ParamEntry param_from_json(const json& j) {
  ParamEntry e;
  e.name = j.at("name").get<std::string>();
  for (const auto& jv : j.at("values"))
    e.values[jv.at("value").get<std::string>()] = jv.value("roles", RoleSet{});
  e.role_labels = j.value("role_labels", RoleSet{});
  e.origin = j.value("origin", "SYS_GEN") == "USER_GEN" ? Origin::kUserGen : Origin::kSysGen;
  e.param_class = parse_param_class(j.value("class", "UNCLASSIFIED"));
  return e;
}

Corpus::Corpus(std::string sentinel, std::optional<std::filesystem::path> dir)
    : sentinel_(std::move(sentinel)), dir_(std::move(dir)) {
  if (dir_) {
    std::filesystem::create_directories(*dir_);
    load(*dir_);
  }
}

void Corpus::load(const std::filesystem::path& dir) {
  auto& c = *this;
  auto load_lines = [](const std::filesystem::path& file, auto&& on_line) {
    if (!std::filesystem::exists(file)) return;
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::kPersistence, "cannot read " + file.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        on_line(json::parse(line));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::kPersistence,
                    file.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  };
  load_lines(dir / "requests.jsonl", [&](const json& j) {
    auto r = record_from_json(j);
    auto key = uniqueness_key(r);
    if (auto it = c.by_id_.find(r.id); it != c.by_id_.end()) {
      c.records_[it->second] = std::move(r);
    } else {
      c.by_id_[r.id] = c.records_.size();
      c.by_key_[key] = c.records_.size();
      c.records_.push_back(std::move(r));
    }
  });
  load_lines(dir / "params.jsonl", [&](const json& j) {
    auto e = param_from_json(j);
    c.params_[e.name] = std::move(e);
  });
}

void Corpus::append_line(const std::filesystem::path& file, const json& j) {
  std::ofstream out(file, std::ios::app);
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::kPersistence, "cannot append to " + file.string());
}

void Corpus::append_record_locked(const RequestRecord& r) {
  if (dir_) append_line(*dir_ / "requests.jsonl", to_json(r));
}

void Corpus::append_param_locked(const ParamEntry& e) {
  if (dir_) append_line(*dir_ / "params.jsonl", to_json(e));
}

void Corpus::upsert_param_locked(const Param& p, const std::string& role) {
  auto [it, inserted] = params_.try_emplace(p.name);
  auto& e = it->second;
  bool changed = inserted;
  if (inserted) e.name = p.name;
  auto& roles = e.values[p.value];
  changed |= roles.insert(role).second;
  changed |= e.role_labels.insert(role).second;
  auto origin = Origin::kSysGen;
  for (const auto& [v, _] : e.values)
    if (!sentinel_.empty() && v.find(sentinel_) != std::string::npos) origin = Origin::kUserGen;
  changed |= origin != e.origin;
  e.origin = origin;
  if (changed) append_param_locked(e);
}

StoreOutcome Corpus::store_request(RequestRecord record, const std::string& role) {
  for (const auto* h : {"Cookie", "Host", "Content-Length"}) record.headers.erase(h);
  record.headers.erase(std::string(kCovidHeader));
  auto key = uniqueness_key(record);

  std::unique_lock lock(mu_);
  StoreOutcome outcome;
  if (auto it = by_key_.find(key); it != by_key_.end()) {
    auto& existing = records_[it->second];
    if (existing.role_labels.insert(role).second) {
      append_record_locked(existing);
      outcome = StoreOutcome::kLabelAdded;
    } else {
      outcome = StoreOutcome::kDuplicate;
    }
  } else {
    record.id = "r" + sha256_hex(key).substr(0, 16);
    record.role_labels = {role};
    record.candidate_kinds.clear();
    record.param_classes.clear();
    append_record_locked(record);
    by_key_[key] = records_.size();
    by_id_[record.id] = records_.size();
    records_.push_back(record);
    outcome = StoreOutcome::kNew;
  }
  for (const auto& p : record.url.query) upsert_param_locked(p, role);
  for (const auto& p : record.body_params) upsert_param_locked(p, role);
  return outcome;
}

std::vector<RequestRecord> Corpus::snapshot() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::optional<RequestRecord> Corpus::find(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return records_[it->second];
}

std::size_t Corpus::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

void Corpus::set_candidate_kind(std::string_view id, const std::string& checker_role,
                                CandidateKind kind) {
  std::unique_lock lock(mu_);
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return;
  auto& r = records_[it->second];
  auto [slot, inserted] = r.candidate_kinds.try_emplace(checker_role, kind);
  if (!inserted && slot->second == kind) return;
  slot->second = kind;
  append_record_locked(r);
}

namespace {
int class_precedence(ParamClass c) {
  switch (c) {
    case ParamClass::kSecurityMeasure: return 3;
    case ParamClass::kReference: return 2;
    case ParamClass::kLessImportant: return 1;
    case ParamClass::kUnclassified: return 0;
  }
  return 0;
}
}  // namespace

void Corpus::set_param_classes(std::string_view id, const std::map<std::string, ParamClass>& classes) {
  std::unique_lock lock(mu_);
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return;
  auto& r = records_[it->second];
  if (r.param_classes != classes) {
    r.param_classes = classes;
    append_record_locked(r);
  }
  for (const auto& [name, cls] : classes) {
    auto p = params_.find(name);
    if (p == params_.end()) continue;
    if (class_precedence(cls) > class_precedence(p->second.param_class)) {
      p->second.param_class = cls;
      append_param_locked(p->second);
    }
  }
}

std::optional<std::vector<std::string>> Corpus::reference_value_pool(
    ValueKind kind, const std::optional<std::string>& exclude_role) const {
  std::shared_lock lock(mu_);
  std::map<std::string, RoleSet> labels;
  for (const auto& [name, e] : params_) {
    if (e.param_class != ParamClass::kReference) continue;
    for (const auto& [v, roles] : e.values) {
      if (value_kind(v) != kind) continue;
      labels[v].insert(roles.begin(), roles.end());
    }
  }
  std::vector<std::string> pool;
  for (const auto& [v, roles] : labels)
    if (!exclude_role || !roles.count(*exclude_role)) pool.push_back(v);
  if (pool.empty()) return std::nullopt;
  return pool;
}

std::set<std::string> Corpus::reference_values_of_role(std::string_view role) const {
  std::shared_lock lock(mu_);
  std::set<std::string> out;
  for (const auto& [name, e] : params_) {
    if (e.param_class != ParamClass::kReference) continue;
    for (const auto& [v, roles] : e.values)
      if (roles.count(std::string(role))) out.insert(v);
  }
  return out;
}

std::vector<std::string> Corpus::account_values(std::string_view param, std::string_view role) const {
  std::shared_lock lock(mu_);
  std::vector<std::string> exclusive, shared;
  auto it = params_.find(std::string(param));
  if (it == params_.end()) return {};
  for (const auto& [v, roles] : it->second.values) {
    if (!roles.count(std::string(role))) continue;
    (roles.size() == 1 ? exclusive : shared).push_back(v);
  }
  exclusive.insert(exclusive.end(), shared.begin(), shared.end());
  return exclusive;
}

std::optional<ParamEntry> Corpus::param(std::string_view name) const {
  std::shared_lock lock(mu_);
  auto it = params_.find(std::string(name));
  if (it == params_.end()) return std::nullopt;
  return it->second;
}

std::vector<ParamEntry> Corpus::params() const {
  std::shared_lock lock(mu_);
  std::vector<ParamEntry> out;
  for (const auto& [_, e] : params_) out.push_back(e);
  return out;
}

}  // namespace acfuzz
