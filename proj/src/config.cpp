#include "acfuzz/config.hpp"

#include "acfuzz/util.hpp"

namespace acfuzz {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "must be an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw Error(ErrorCode::kConfig, "config " + at(key) + ": " + why);
  }

  std::string at(const std::string& key) const { return key.empty() ? path_ : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_[key].is_null(); }
  const json& raw(const std::string& key) const { return j_[key]; }

  Reader child(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    return Reader(j_[key], at(key));
  }

  std::string str(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    if (!j_[key].is_string()) fail(key, "must be a string");
    return j_[key].get<std::string>();
  }
  std::string str(const std::string& key, const std::string& fallback) const { return has(key) ? str(key) : fallback; }

  long long integer(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    if (!j_[key].is_number_integer()) fail(key, "must be an integer");
    return j_[key].get<long long>();
  }
  long long integer(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_number()) fail(key, "must be a number");
    return j_[key].get<double>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_boolean()) fail(key, "must be a boolean");
    return j_[key].get<bool>();
  }

  std::vector<std::string> strings(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    if (!j_[key].is_array()) fail(key, "must be an array");
    for (std::size_t i = 0; i < j_[key].size(); ++i) {
      if (!j_[key][i].is_string()) fail(key + "[" + std::to_string(i) + "]", "must be a string");
      out.push_back(j_[key][i].get<std::string>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

RoleConfig parse_role(const Reader& r, const std::filesystem::path& base_dir) {
  RoleConfig role;
  role.name = r.str("name");
  if (role.name.empty()) r.fail("name", "must not be empty");
  role.rank = static_cast<int>(r.integer("rank"));
  if (r.has("login")) {
    auto l = r.child("login");
    role.login.form_path = l.str("url");
    try {
      role.login.method = parse_method(l.str("method", "POST"));
    } catch (const Error&) {
      l.fail("method", "unknown HTTP method");
    }
    if (l.has("fields")) {
      const auto& f = l.raw("fields");
      if (!f.is_object()) l.fail("fields", "must be an object");
      for (const auto& [k, v] : f.items()) {
        if (!v.is_string()) l.fail("fields." + k, "must be a string");
        role.login.fields[k] = v.get<std::string>();
      }
    }
    if (l.has("success_redirect")) role.login.success_redirect = l.str("success_redirect");
    if (l.has("success_contains")) role.login.success_contains = l.str("success_contains");
    if (l.has("home")) role.login.home_path = l.str("home");
  }
  if (r.has("home") && !role.login.home_path) role.login.home_path = r.str("home");
  if (r.has("traffic")) role.traffic = resolve(base_dir, r.str("traffic"));
  role.crawl = r.boolean("crawl", true);
  if (!role.crawl && !role.traffic) r.fail("crawl", "a role that does not crawl needs 'traffic'");
  return role;
}

}  // namespace

Config parse_config(const json& j, const std::filesystem::path& base_dir) {
  Reader root(j, "$");
  Config c;

  auto target = root.child("target");
  try {
    c.base_url = parse_url(target.str("base_url"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    target.fail("base_url", e.what());
  }
  if (target.has("reset")) {
    auto reset = target.child("reset");
    if (reset.has("url")) c.reset.url = reset.str("url");
    if (reset.has("command")) c.reset.command = reset.str("command");
    if (!c.reset.url && !c.reset.command) reset.fail("", "needs 'url' or 'command'");
  }
  c.http_timeout_ms = static_cast<int>(target.integer("timeout_ms", c.http_timeout_ms));

  c.sentinel = root.str("sentinel", c.sentinel);
  if (c.sentinel.empty()) root.fail("sentinel", "must not be empty");

  if (!root.has("roles")) root.fail("roles", "is required");
  const auto& roles = root.raw("roles");
  if (!roles.is_array()) root.fail("roles", "must be an array");
  if (roles.size() < 2) root.fail("roles", "needs at least two roles");
  std::set<std::string> names;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    Reader r(roles[i], "$.roles[" + std::to_string(i) + "]");
    auto role = parse_role(r, base_dir);
    if (!names.insert(role.name).second) r.fail("name", "duplicate role '" + role.name + "'");
    c.roles.push_back(std::move(role));
  }

  if (root.has("crawler")) {
    auto cr = root.child("crawler");
    auto max_pages = cr.integer("max_pages", static_cast<long long>(c.crawler.max_pages));
    auto max_depth = cr.integer("max_depth", static_cast<long long>(c.crawler.max_depth));
    if (max_pages < 1) cr.fail("max_pages", "must be at least 1");
    if (max_depth < 0) cr.fail("max_depth", "must not be negative");
    c.crawler.max_pages = static_cast<std::size_t>(max_pages);
    c.crawler.max_depth = static_cast<std::size_t>(max_depth);
    if (cr.has("exclude")) c.crawler.exclude = cr.strings("exclude");
  }

  if (root.has("budget")) {
    auto b = root.child("budget");
    auto max_requests = b.integer("max_requests", static_cast<long long>(c.budget.max_requests));
    if (max_requests < 0) b.fail("max_requests", "must not be negative");
    c.budget.max_requests = static_cast<std::size_t>(max_requests);
    c.budget.duration_s = b.number("duration_s", c.budget.duration_s);
    if (c.budget.duration_s <= 0) b.fail("duration_s", "must be positive");
    auto seed = b.integer("seed", static_cast<long long>(c.budget.seed));
    c.budget.seed = static_cast<std::uint64_t>(seed);
    c.budget.p_rand = b.number("p_rand", c.budget.p_rand);
    if (c.budget.p_rand < 0 || c.budget.p_rand > 1) b.fail("p_rand", "must be within [0, 1]");
    c.budget.max_checks = static_cast<int>(b.integer("max_checks", c.budget.max_checks));
    if (c.budget.max_checks < 1) b.fail("max_checks", "must be at least 1");
  }

  if (root.has("oracle")) {
    auto o = root.child("oracle");
    for (auto& t : o.strings("ignored_tables")) c.ignored_tables.insert(std::move(t));
  }

  if (root.has("llm")) {
    auto l = root.child("llm");
    c.llm.enabled = l.boolean("enabled", false);
    c.llm.endpoint = l.str("endpoint", "");
    c.llm.model = l.str("model", "");
    c.llm.api_key_env = l.str("api_key_env", c.llm.api_key_env);
    if (l.has("cache")) c.llm.cache = resolve(base_dir, l.str("cache"));
    c.llm.timeout_ms = static_cast<int>(l.integer("timeout_ms", c.llm.timeout_ms));
    if (c.llm.enabled && c.llm.endpoint.empty()) l.fail("endpoint", "is required when the LLM is enabled");
    if (c.llm.enabled && c.llm.model.empty()) l.fail("model", "is required when the LLM is enabled");
  }

  auto sidecar = root.child("sidecar");
  c.sidecar_dir = resolve(base_dir, sidecar.str("dir"));
  c.sidecar_timeout_ms = static_cast<int>(sidecar.integer("timeout_ms", c.sidecar_timeout_ms));
  if (c.sidecar_timeout_ms < 0) sidecar.fail("timeout_ms", "must not be negative");

  c.output_dir = resolve(base_dir, root.str("output", c.output_dir.string()));
  return c;
}

Config load_config(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kConfig, "config " + file.string() + ": " + e.what());
  }
  auto dir = file.parent_path();
  return parse_config(j, dir.empty() ? std::filesystem::path(".") : dir);
}

}  // namespace acfuzz
