#include "acfuzz/param_analysis.hpp"

#include <spdlog/spdlog.h>

#include <regex>

#include "acfuzz/util.hpp"

namespace acfuzz {

std::string request_line(const RequestRecord& record) {
  std::string body;
  for (const auto& p : record.body_params) {
    if (!p.parent && has_children(record.body_params, p.name)) continue;
    if (!body.empty()) body.push_back('&');
    body += p.name + "=" + p.value;
  }
  return std::string(to_string(record.method)) + " " + record.url.to_string() + " " + body;
}

LlmQuery make_llm_query(const RequestRecord& record, const std::string& model) {
  LlmQuery q;
  q.request_line = request_line(record);
  q.model = model;
  q.cache_key = sha256_hex(q.request_line);
  std::string prompt(kPromptTemplate);
  static constexpr std::string_view kSlot = "{{REQUEST}}";
  if (auto pos = prompt.find(kSlot); pos != std::string::npos) {
    prompt.replace(pos, kSlot.size(), q.request_line);
  } else {
    prompt += "\n" + q.request_line;
  }
  q.prompt = std::move(prompt);
  return q;
}

std::vector<std::string> parse_llm_reply(std::string_view reply) {
  std::vector<std::string> names;
  for (auto& token : split(reply, ',')) {
    auto name = trim(token);
    while (!name.empty() && (name.front() == '`' || name.front() == '"' || name.front() == '\''))
      name.erase(name.begin());
    while (!name.empty() && (name.back() == '`' || name.back() == '"' || name.back() == '\'' || name.back() == '.'))
      name.pop_back();
    if (!name.empty()) names.push_back(std::move(name));
  }
  return names;
}

Origin classify_origin(const ParamEntry& entry, std::string_view sentinel) {
  for (const auto& [value, _] : entry.values)
    if (!sentinel.empty() && value.find(sentinel) != std::string::npos) return Origin::kUserGen;
  return Origin::kSysGen;
}

bool matches_security_rule(std::string_view name) {
  static const std::regex kSecurity("nonce|token|csrf|session", std::regex::icase);
  return std::regex_search(name.begin(), name.end(), kSecurity);
}

ParamClass heuristic_classify(std::string_view name, const std::set<std::string>& values,
                              std::string_view sentinel) {
  static const std::regex kReference(R"((^|_)id$|_id(\b|=)|^id$|^.*id$)", std::regex::icase);
  if (matches_security_rule(name)) return ParamClass::kSecurityMeasure;
  if (std::regex_search(name.begin(), name.end(), kReference)) return ParamClass::kReference;
  bool all_numeric_sys_gen = !values.empty();
  for (const auto& v : values) {
    if (value_kind(v) != ValueKind::kNumeric) all_numeric_sys_gen = false;
    if (!sentinel.empty() && v.find(sentinel) != std::string::npos) all_numeric_sys_gen = false;
  }
  return all_numeric_sys_gen ? ParamClass::kReference : ParamClass::kLessImportant;
}

ParamAnalyzer::ParamAnalyzer(Corpus& corpus, LlmClient* client, ReplyCache* cache, std::string model)
    : corpus_(corpus), client_(client), cache_(cache), model_(std::move(model)) {}

std::map<std::string, ParamClass> ParamAnalyzer::analyze_request(const RequestRecord& record) {
  const auto& sentinel = corpus_.sentinel();
  auto params = record.all_params();

  struct Info {
    Origin origin = Origin::kSysGen;
    std::set<std::string> values;
    bool composite = false;
  };
  std::map<std::string, Info> info;
  for (const auto& p : params) {
    auto& i = info[p.name];
    i.values.insert(p.value);
    if (!p.parent && has_children(record.body_params, p.name)) i.composite = true;
  }
  bool any_sys_gen = false;
  for (auto& [name, i] : info) {
    if (auto entry = corpus_.param(name)) {
      i.origin = classify_origin(*entry, sentinel);
      for (const auto& [v, _] : entry->values) i.values.insert(v);
    } else {
      ParamEntry tmp;
      for (const auto& v : i.values) tmp.values[v] = {};
      i.origin = classify_origin(tmp, sentinel);
    }
    if (i.origin == Origin::kSysGen && !i.composite) any_sys_gen = true;
  }

  std::optional<std::set<std::string>> llm_names;
  bool fallback = false;
  if (any_sys_gen && client_) {
    auto query = make_llm_query(record, model_);
    std::optional<std::string> reply;
    if (cache_) {
      reply = cache_->get(query.cache_key);
      if (reply) {
        std::lock_guard lock(mu_);
        ++stats_.cache_hits;
      }
    }
    if (!reply) {
      reply = client_->complete(query);
      if (reply && cache_) cache_->put(query.cache_key, *reply);
    }
    if (reply) {
      std::lock_guard lock(mu_);
      ++stats_.llm_queries;
      llm_names.emplace();
      for (auto& n : parse_llm_reply(*reply)) {
        if (!info.count(n)) {
          ++stats_.unknown_names;
          spdlog::warn("reply for {} names unknown parameter '{}'", record.id, n);
          continue;
        }
        llm_names->insert(n);
      }
    } else {
      fallback = true;
    }
  } else if (any_sys_gen) {
    fallback = true;
  }

  std::map<std::string, ParamClass> classes;
  for (const auto& [name, i] : info) {
    ParamClass cls;
    if (matches_security_rule(name)) {
      cls = ParamClass::kSecurityMeasure;
    } else if (i.origin == Origin::kUserGen || i.composite) {
      cls = ParamClass::kLessImportant;
    } else if (llm_names) {
      cls = llm_names->count(name) ? ParamClass::kReference : ParamClass::kLessImportant;
    } else {
      cls = heuristic_classify(name, i.values, sentinel);
    }
    classes[name] = cls;
  }
  {
    std::lock_guard lock(mu_);
    ++stats_.requests;
    if (fallback) ++stats_.fallbacks;
  }
  corpus_.set_param_classes(record.id, classes);
  return classes;
}

void ParamAnalyzer::analyze_all() {
  for (const auto& r : corpus_.snapshot()) analyze_request(r);
  if (cache_) cache_->save();
}

AnalysisStats ParamAnalyzer::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace acfuzz
