#include "acfuzz/collector.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <set>

#include "acfuzz/html.hpp"

namespace acfuzz {

using nlohmann::json;

namespace {

bool is_2xx(int status) { return status >= 200 && status < 300; }

bool is_html(const HttpResponse& r) {
  auto it = r.headers.find("Content-Type");
  return it == r.headers.end() || it->second.find("html") != std::string::npos;
}

bool excluded(const Url& url, const CrawlLimits& limits) {
  auto target = url.path_and_query();
  for (const auto& pattern : limits.exclude)
    if (!pattern.empty() && target.find(pattern) != std::string::npos) return true;
  return false;
}

RequestRecord to_record(const HttpRequest& req) {
  RequestRecord r;
  r.method = req.method;
  r.url = req.url;
  r.headers = req.headers;
  r.body_params = flatten_nested(parse_form(req.body));
  return r;
}

// Fills a form the way a user clicking through would: typed fields get a
// fresh random string with the sentinel appended, everything else its
// deterministic first choice.
std::vector<Param> fill_form(const html::Form& form, const std::string& sentinel, Rng& rng) {
  std::vector<Param> out;
  std::set<std::string> radio_done;
  bool submit_done = false;
  for (const auto& f : form.fields) {
    if (f.name.empty()) continue;
    const auto& type = f.type;
    if (f.tag == "select") {
      out.push_back({f.name, f.options.empty() ? std::string{} : f.options.front(), std::nullopt});
    } else if (f.tag == "textarea") {
      out.push_back({f.name, rng.lowercase(10) + sentinel, std::nullopt});
    } else if (type == "hidden") {
      out.push_back({f.name, f.value, std::nullopt});
    } else if (type == "checkbox") {
      out.push_back({f.name, f.value.empty() ? "on" : f.value, std::nullopt});
    } else if (type == "radio") {
      if (radio_done.insert(f.name).second) out.push_back({f.name, f.value, std::nullopt});
    } else if (type == "submit" || (f.tag == "button" && type == "submit")) {
      if (!submit_done) out.push_back({f.name, f.value, std::nullopt});
      submit_done = true;
    } else if (type == "file" || type == "reset" || type == "image" || type == "button") {
      continue;
    } else {
      out.push_back({f.name, rng.lowercase(10) + sentinel, std::nullopt});
    }
  }
  return out;
}

std::string form_key(Method m, const Url& action, const html::Form& form) {
  std::set<std::string> names;
  for (const auto& f : form.fields)
    if (!f.name.empty()) names.insert(f.name);
  std::string key = std::string(to_string(m)) + " " + action.base() + action.path;
  for (const auto& n : names) key += " " + n;
  return key;
}

}  // namespace

HttpSession open_session(const RoleSession& session, std::chrono::milliseconds timeout) {
  HttpSession http(session.home_url, timeout);
  http.cookies() = session.cookies;
  for (const auto& [k, v] : session.static_headers) http.set_static_header(k, v);
  return http;
}

RoleSession login(const std::string& role, int rank, const LoginScript& script, const Url& base_url) {
  RoleSession s;
  s.role = role;
  s.rank = rank;
  s.home_url = base_url;
  if (script.form_path.empty()) {
    if (script.home_path) {
      if (auto home = resolve_href(base_url, *script.home_path)) s.home_url = *home;
    }
    return s;
  }
  auto form_url = resolve_href(base_url, script.form_path);
  if (!form_url) throw Error(ErrorCode::kConfig, "login form path '" + script.form_path + "' is not on the target");
  HttpSession http(base_url);
  HttpRequest req;
  req.method = script.method;
  req.url = *form_url;
  std::vector<Param> fields;
  for (const auto& [k, v] : script.fields) fields.push_back({k, v, std::nullopt});
  if (script.method == Method::kGet) {
    req.url.query = fields;
  } else {
    req.body = encode_form(fields);
  }
  auto resp = http.send(req);

  std::optional<std::string> location;
  if (auto it = resp.headers.find("Location"); it != resp.headers.end()) location = it->second;
  bool ok = true;
  if (script.success_redirect)
    ok = ok && resp.status >= 300 && resp.status < 400 && location &&
         location->find(*script.success_redirect) != std::string::npos;
  if (script.success_contains) ok = ok && resp.body.find(*script.success_contains) != std::string::npos;
  if (!script.success_redirect && !script.success_contains)
    ok = (is_2xx(resp.status) || (resp.status >= 300 && resp.status < 400)) && !http.cookies().empty();
  if (!ok) throw Error(ErrorCode::kLoginFailed, "login for role '" + role + "' failed (status " +
                                                    std::to_string(resp.status) + ")");
  s.cookies = http.cookies();
  if (script.home_path) {
    if (auto home = resolve_href(base_url, *script.home_path)) s.home_url = *home;
  } else if (location) {
    if (auto home = resolve_href(*form_url, *location)) s.home_url = *home;
  }
  return s;
}

PageLink make_page_link(const Url& url, std::string anchor_text, std::string_view sentinel) {
  PageLink link;
  link.anchor_text = std::move(anchor_text);
  link.base = url.base();
  link.path = url.path;
  std::vector<Param> masked = url.query;
  for (auto& p : masked)
    if (!sentinel.empty() && p.value.find(sentinel) != std::string::npos) p.value = "*";
  link.query = encode_form(masked);
  return link;
}

CrawlStats crawl(const RoleSession& session, const CrawlOptions& options, const RequestSink& sink) {
  CrawlStats stats;
  Rng rng(options.seed);
  auto http = open_session(session, options.timeout);

  struct Pending {
    Url url;
    std::size_t depth;
    std::optional<std::string> referer;
    bool from_anchor;
  };
  std::vector<Pending> stack;
  std::set<std::string> visited;
  std::set<std::string> forms_seen;
  stack.push_back({session.home_url, 0, std::nullopt, false});

  auto send = [&](HttpRequest req) -> std::optional<HttpResponse> {
    req.headers[std::string(kCovidHeader)] = rng.uuid();
    try {
      auto resp = http.send(req);
      if (is_2xx(resp.status)) {
        ++stats.stored;
        sink(to_record(req));
      } else {
        ++stats.rejected;
      }
      return resp;
    } catch (const Error& e) {
      ++stats.errors;
      spdlog::warn("[{}] fetch failed: {}", session.role, e.what());
      return std::nullopt;
    }
  };

  auto push_links = [&](const html::Document& doc, const Url& page, std::size_t depth) {
    for (const auto& a : doc.anchors) {
      auto target = resolve_href(page, a.href);
      if (!target || excluded(*target, options.limits)) continue;
      if (visited.count(make_page_link(*target, a.text, options.sentinel).similarity_key())) continue;
      stack.push_back({*target, depth + 1, page.to_string(), true});
    }
  };

  while (!stack.empty() && stats.pages_visited < options.limits.max_pages) {
    auto next = std::move(stack.back());
    stack.pop_back();
    if (next.depth > options.limits.max_depth) continue;
    auto key = make_page_link(next.url, {}, options.sentinel).similarity_key();
    if (!visited.insert(key).second) continue;

    HttpRequest req;
    req.method = Method::kGet;
    req.url = next.url;
    if (next.referer) req.headers["Referer"] = *next.referer;
    auto resp = send(req);
    ++stats.pages_visited;
    if (next.from_anchor) ++stats.links_followed;
    if (!resp || !is_2xx(resp->status) || !is_html(*resp)) continue;

    auto doc = html::parse(resp->body);
    std::vector<html::Document> follow_ups;
    for (const auto& form : doc.forms) {
      Method m = form.method == "post" ? Method::kPost : Method::kGet;
      auto action = form.action.empty() ? std::optional<Url>(next.url) : resolve_href(next.url, form.action);
      if (!action || excluded(*action, options.limits)) continue;
      if (!forms_seen.insert(form_key(m, *action, form)).second) continue;
      auto fields = fill_form(form, options.sentinel, rng);
      HttpRequest submit;
      submit.method = m;
      submit.url = *action;
      submit.headers["Referer"] = next.url.to_string();
      if (m == Method::kGet) {
        submit.url.query = fields;
      } else {
        submit.body = encode_form(fields);
      }
      ++stats.forms_submitted;
      auto form_resp = send(submit);
      if (form_resp && is_2xx(form_resp->status) && is_html(*form_resp))
        follow_ups.push_back(html::parse(form_resp->body));
    }
    push_links(doc, next.url, next.depth);
    for (const auto& d : follow_ups) push_links(d, next.url, next.depth);
  }
  spdlog::info("[{}] crawl: {} pages, {} forms, {} stored, {} rejected", session.role,
               stats.pages_visited, stats.forms_submitted, stats.stored, stats.rejected);
  return stats;
}

CrawlStats crawl(const RoleSession& session, const CrawlOptions& options, Corpus& corpus) {
  return crawl(session, options,
               [&](const RequestRecord& r) { corpus.store_request(r, session.role); });
}

IngestResult ingest_recorded(const std::filesystem::path& traffic_file, const RequestSink& sink,
                             const std::optional<Url>& base) {
  auto absolute = [&](const std::string& u) {
    if (base && !u.empty() && u[0] == '/') return base->base() + u;
    return u;
  };
  std::ifstream in(traffic_file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read traffic file " + traffic_file.string());
  IngestResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto violation = [&](const std::string& why) {
      result.violations.push_back("line " + std::to_string(lineno) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      violation(std::string("invalid JSON: ") + e.what());
      continue;
    }
    if (!j.is_object()) {
      violation("entry is not an object");
      continue;
    }
    if (!j.contains("method") || !j["method"].is_string()) {
      violation("missing string field 'method'");
      continue;
    }
    if (!j.contains("url") || !j["url"].is_string()) {
      violation("missing string field 'url'");
      continue;
    }
    if (!j.contains("response_status") || !j["response_status"].is_number_integer()) {
      violation("missing integer field 'response_status'");
      continue;
    }
    if (j.contains("headers") && !j["headers"].is_object()) {
      violation("'headers' must be an object");
      continue;
    }
    if (j.contains("body") && !j["body"].is_string()) {
      violation("'body' must be a string");
      continue;
    }
    if (!is_2xx(j["response_status"].get<int>())) {
      ++result.skipped;
      continue;
    }
    try {
      Headers headers;
      const json header_obj = j.value("headers", json::object());
      for (const auto& [k, v] : header_obj.items()) {
        if (!v.is_string()) throw Error(ErrorCode::kSchema, "header '" + k + "' must be a string");
        headers[k] = iequals(k, "Referer") ? absolute(v.get<std::string>()) : v.get<std::string>();
      }
      auto record = make_record(parse_method(j["method"].get<std::string>()), absolute(j["url"].get<std::string>()),
                                std::move(headers), j.value("body", ""));
      sink(record);
      ++result.stored;
    } catch (const Error& e) {
      violation(e.what());
    }
  }
  for (const auto& v : result.violations) spdlog::warn("{}: {}", traffic_file.string(), v);
  return result;
}

IngestResult ingest_recorded(const std::filesystem::path& traffic_file, const std::string& role,
                             Corpus& corpus, const std::optional<Url>& base) {
  return ingest_recorded(
      traffic_file, [&](const RequestRecord& r) { corpus.store_request(r, role); }, base);
}

}  // namespace acfuzz
