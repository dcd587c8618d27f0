#include "acfuzz/harness.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "acfuzz/oracle.hpp"
#include "acfuzz/util.hpp"

namespace acfuzz::harness {

using nlohmann::json;

namespace {

Error schema(const std::string& path, const std::string& why) {
  return Error(ErrorCode::kSchema, "app spec " + path + ": " + why);
}

std::string req_string(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw schema(path + "." + key, "is required");
  if (!obj[key].is_string()) throw schema(path + "." + key, "must be a string");
  return obj[key].get<std::string>();
}

std::string opt_string(const json& obj, const std::string& key, const std::string& path,
                       const std::string& fallback = {}) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw schema(path + "." + key, "must be a string");
  return obj[key].get<std::string>();
}

// Scalars become strings; the store is untyped.
std::string scalar(const json& v, const std::string& path) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  throw schema(path, "must be a scalar");
}

std::map<std::string, std::string> string_map(const json& obj, const std::string& key, const std::string& path) {
  std::map<std::string, std::string> out;
  if (!obj.contains(key)) return out;
  if (!obj[key].is_object()) throw schema(path + "." + key, "must be an object");
  for (const auto& [k, v] : obj[key].items()) out[k] = scalar(v, path + "." + key + "." + k);
  return out;
}

std::set<std::string> string_set(const json& obj, const std::string& key, const std::string& path) {
  std::set<std::string> out;
  if (!obj.contains(key)) return out;
  if (!obj[key].is_array()) throw schema(path + "." + key, "must be an array");
  for (std::size_t i = 0; i < obj[key].size(); ++i) {
    const auto& v = obj[key][i];
    if (!v.is_string()) throw schema(path + "." + key + "[" + std::to_string(i) + "]", "must be a string");
    out.insert(v.get<std::string>());
  }
  return out;
}

std::string html_text(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) return {};
  const auto& v = obj[key];
  if (v.is_string()) return v.get<std::string>();
  // Arrays of lines keep long markup readable in the spec files.
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw schema(path + "." + key + "[" + std::to_string(i) + "]", "must be a string");
      out += v[i].get<std::string>();
      out += "\n";
    }
    return out;
  }
  throw schema(path + "." + key, "must be a string or an array of strings");
}

Step parse_step(const json& j, const std::string& path) {
  if (!j.is_object()) throw schema(path, "must be an object");
  Step s;
  s.op = opt_string(j, "op", path);
  static const std::set<std::string> ops{"", "insert", "update", "delete", "require_row"};
  if (!ops.count(s.op)) throw schema(path + ".op", "unknown op '" + s.op + "'");
  if (j.contains("sql")) s.sql = req_string(j, "sql", path);
  if (!s.op.empty()) s.table = req_string(j, "table", path);
  if (s.op == "update" || s.op == "delete" || s.op == "require_row") {
    s.column = req_string(j, "column", path);
    s.param = req_string(j, "param", path);
  }
  s.values = string_map(j, "values", path);
  s.auto_id = opt_string(j, "auto_id", path);
  if (j.contains("when")) {
    const auto& w = j["when"];
    if (!w.is_object()) throw schema(path + ".when", "must be an object");
    Condition c;
    c.param = req_string(w, "param", path + ".when");
    if (w.contains("equals")) c.equals = scalar(w["equals"], path + ".when.equals");
    if (w.contains("not_equals")) c.not_equals = scalar(w["not_equals"], path + ".when.not_equals");
    s.when = c;
  }
  if (j.contains("status")) {
    if (!j["status"].is_number_integer()) throw schema(path + ".status", "must be an integer");
    s.status = j["status"].get<int>();
  }
  return s;
}

std::vector<Step> parse_steps(const json& obj, const std::string& key, const std::string& path) {
  std::vector<Step> out;
  if (!obj.contains(key)) return out;
  if (!obj[key].is_array()) throw schema(path + "." + key, "must be an array");
  for (std::size_t i = 0; i < obj[key].size(); ++i)
    out.push_back(parse_step(obj[key][i], path + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

Route parse_route(const json& j, const std::string& path) {
  if (!j.is_object()) throw schema(path, "must be an object");
  Route r;
  try {
    r.method = parse_method(opt_string(j, "method", path, "GET"));
  } catch (const Error&) {
    throw schema(path + ".method", "unknown method");
  }
  r.path = req_string(j, "path", path);
  if (r.path.empty() || r.path[0] != '/') throw schema(path + ".path", "must start with '/'");
  r.match = string_map(j, "match", path);
  r.title = opt_string(j, "title", path, r.path);
  if (j.contains("login")) {
    if (!j["login"].is_boolean()) throw schema(path + ".login", "must be a boolean");
    r.login = j["login"].get<bool>();
  }
  r.roles = string_set(j, "roles", path);
  if (j.contains("owner_check")) {
    const auto& o = j["owner_check"];
    auto p = path + ".owner_check";
    if (!o.is_object()) throw schema(p, "must be an object");
    r.owner_check = OwnerCheck{req_string(o, "table", p), req_string(o, "column", p), req_string(o, "param", p),
                               opt_string(o, "owner_column", p, "owner")};
  }
  if (j.contains("token_param")) r.token_param = req_string(j, "token_param", path);
  r.denied_steps = parse_steps(j, "denied_steps", path);
  r.steps = parse_steps(j, "steps", path);
  if (j.contains("items")) {
    if (!j["items"].is_array()) throw schema(path + ".items", "must be an array");
    for (std::size_t i = 0; i < j["items"].size(); ++i) {
      const auto& it = j["items"][i];
      auto p = path + ".items[" + std::to_string(i) + "]";
      if (!it.is_object()) throw schema(p, "must be an object");
      Item item;
      item.roles = string_set(it, "roles", p);
      if (it.contains("foreach")) item.foreach = req_string(it, "foreach", p);
      item.where = string_map(it, "where", p);
      item.html = html_text(it, "html", p);
      r.items.push_back(std::move(item));
    }
  }
  r.response = html_text(j, "response", path);
  return r;
}

}  // namespace

AppSpec parse_app_spec(const json& j) {
  if (!j.is_object()) throw schema("$", "must be an object");
  AppSpec app;
  app.name = req_string(j, "name", "$");
  if (!j.contains("users") || !j["users"].is_array() || j["users"].empty())
    throw schema("$.users", "must be a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < j["users"].size(); ++i) {
    const auto& u = j["users"][i];
    auto p = "$.users[" + std::to_string(i) + "]";
    if (!u.is_object()) throw schema(p, "must be an object");
    User user;
    if (!u.contains("id") || !u["id"].is_number_integer()) throw schema(p + ".id", "must be an integer");
    user.id = u["id"].get<int>();
    user.username = req_string(u, "username", p);
    user.password = req_string(u, "password", p);
    user.role = req_string(u, "role", p);
    if (!names.insert(user.username).second) throw schema(p + ".username", "duplicate user");
    app.users.push_back(std::move(user));
  }
  if (j.contains("tables")) {
    if (!j["tables"].is_object()) throw schema("$.tables", "must be an object");
    for (const auto& [name, rows] : j["tables"].items()) {
      auto p = "$.tables." + name;
      if (!rows.is_array()) throw schema(p, "must be an array");
      auto& table = app.tables[name];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto rp = p + "[" + std::to_string(i) + "]";
        if (!rows[i].is_object()) throw schema(rp, "must be an object");
        Row row;
        for (const auto& [k, v] : rows[i].items()) row[k] = scalar(v, rp + "." + k);
        table.push_back(std::move(row));
      }
    }
  }
  if (!j.contains("routes") || !j["routes"].is_array()) throw schema("$.routes", "must be an array");
  for (std::size_t i = 0; i < j["routes"].size(); ++i)
    app.routes.push_back(parse_route(j["routes"][i], "$.routes[" + std::to_string(i) + "]"));
  if (j.contains("vulns")) {
    if (!j["vulns"].is_array()) throw schema("$.vulns", "must be an array");
    for (std::size_t i = 0; i < j["vulns"].size(); ++i) {
      const auto& v = j["vulns"][i];
      auto p = "$.vulns[" + std::to_string(i) + "]";
      if (!v.is_object()) throw schema(p, "must be an object");
      SeededVuln sv;
      sv.id = req_string(v, "id", p);
      sv.kind = req_string(v, "kind", p);
      if (sv.kind != "BOLA" && sv.kind != "BFLA") throw schema(p + ".kind", "must be BOLA or BFLA");
      sv.method = req_string(v, "method", p);
      sv.path = req_string(v, "path", p);
      sv.param = req_string(v, "param", p);
      sv.roles_exposed = string_set(v, "roles_exposed", p);
      sv.verb = req_string(v, "verb", p);
      sv.table = req_string(v, "table", p);
      app.vulns.push_back(std::move(sv));
    }
  }
  app.denied_body = opt_string(j, "denied_body", "$", app.denied_body);
  if (j.contains("latency_us")) {
    if (!j["latency_us"].is_number_integer()) throw schema("$.latency_us", "must be an integer");
    app.latency_us = j["latency_us"].get<int>();
  }
  return app;
}

AppSpec load_app_spec(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, "app spec " + file.string() + ": " + e.what());
  }
  return parse_app_spec(j);
}

std::string user_token(const AppSpec& app, const std::string& username) {
  return sha256_hex(app.name + ":" + username).substr(0, 12);
}

AppSpec coincidence_spec() {
  static const char* kSpec = R"json({
    "name": "coincidence",
    "users": [
      {"id": 1, "username": "admin", "password": "admin", "role": "admin"},
      {"id": 5, "username": "customer", "password": "customer", "role": "customer"}
    ],
    "tables": {"oc_cart": [{"cart_id": 1, "api_id": 0, "customer_id": 1}]},
    "routes": [
      {"path": "/dashboard.php", "title": "Account",
       "items": [
         {"roles": ["admin"], "html": "<a href=\"/cart.php?route=0\">API carts</a> <a href=\"/cart.php?route=1\">Customer carts</a>"},
         {"roles": ["customer"], "html": "<a href=\"/cart.php?route=5\">My cart</a>"},
         {"html": "<a href=\"/logout.php\">Logout</a>"}
       ]},
      {"path": "/cart.php", "title": "Cart",
       "steps": [{"sql": "DELETE FROM oc_cart WHERE (api_id > 0 OR customer_id = 1)"}],
       "response": "<p>Cart refreshed.</p><a href=\"/dashboard.php\">Back</a>"}
    ]
  })json";
  return parse_app_spec(json::parse(kSpec));
}

namespace {

struct Session {
  const User* user = nullptr;
};

std::string escape_html(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_sql(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\'') out += "''";
    else if (c == '\\') out += "\\\\";
    else out += c;
  }
  return out;
}

std::string page(const std::string& title, const std::string& body) {
  return "<!doctype html>\n<html><head><title>" + escape_html(title) + "</title></head><body>\n" + body +
         "\n</body></html>\n";
}

const char* kLoginForm =
    "<form action=\"/login.php\" method=\"post\">"
    "<input type=\"text\" name=\"username\"><input type=\"password\" name=\"password\">"
    "<input type=\"submit\" name=\"login\" value=\"Login\"></form>";

bool safe_covid(std::string_view c) {
  return !c.empty() && c.size() <= 64 &&
         std::all_of(c.begin(), c.end(), [](char ch) { return std::isxdigit(static_cast<unsigned char>(ch)) || ch == '-'; });
}

}  // namespace

struct Target::Impl {
  AppSpec app;
  std::optional<std::filesystem::path> sidecar_dir;
  std::map<std::string, std::vector<Row>> tables;
  std::map<std::string, Session> sessions;
  std::uint64_t session_counter = 0;
  mutable std::mutex mu;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string host;
  std::atomic<std::size_t> handled{0};

  // Sidecars are flushed by a writer thread after the response is sent.
  std::mutex queue_mu;
  std::condition_variable queue_cv;
  std::deque<QuerySidecar> pending;
  bool writer_done = false;
  std::thread writer;

  struct Trace {
    std::vector<std::string> queries;
    std::vector<int> lines;
  };

  struct Ctx {
    std::vector<Param> params;
    const User* user = nullptr;
    std::map<std::string, std::string> vars;
    Trace trace;
  };

  std::optional<std::string> lookup(const Ctx& ctx, const Row* row, const std::string& key) const {
    if (key.rfind("session.", 0) == 0) {
      if (!ctx.user) return std::string();
      auto field = key.substr(8);
      if (field == "id") return std::to_string(ctx.user->id);
      if (field == "username") return ctx.user->username;
      if (field == "role") return ctx.user->role;
      if (field == "token") return user_token(app, ctx.user->username);
      return std::nullopt;
    }
    if (row) {
      auto it = row->find(key);
      if (it != row->end()) return it->second;
    }
    if (auto it = ctx.vars.find(key); it != ctx.vars.end()) return it->second;
    for (const auto& p : ctx.params)
      if (p.name == key) return p.value;
    return std::nullopt;
  }

  template <class Escape>
  std::string render(const std::string& tmpl, const Ctx& ctx, const Row* row, Escape escape) const {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
      if (tmpl[i] == '{') {
        auto close = tmpl.find('}', i);
        if (close != std::string::npos) {
          auto key = tmpl.substr(i + 1, close - i - 1);
          bool ident = !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
            return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
          });
          if (ident) {
            out += escape(lookup(ctx, row, key).value_or(""));
            i = close + 1;
            continue;
          }
        }
      }
      out += tmpl[i++];
    }
    return out;
  }

  std::string param(const Ctx& ctx, const std::string& name) const {
    for (const auto& p : ctx.params)
      if (p.name == name) return p.value;
    return {};
  }

  // "*" accepts any non-empty value.
  bool has_param(const Ctx& ctx, const std::string& name, const std::string& value) const {
    return std::any_of(ctx.params.begin(), ctx.params.end(), [&](const Param& p) {
      return p.name == name && (value == "*" ? !p.value.empty() : p.value == value);
    });
  }

  const User* find_user(const std::string& username) const {
    for (const auto& u : app.users)
      if (u.username == username) return &u;
    return nullptr;
  }

  std::string new_session(const User* user) {
    auto sid = sha256_hex(app.name + "#" + std::to_string(++session_counter)).substr(0, 32);
    sessions[sid] = Session{user};
    return sid;
  }

  // Runs one step. Returns false when require_row fails.
  bool run_step(const Step& s, Ctx& ctx) {
    auto& table = tables[s.table];
    auto key = s.param.empty() ? std::string() : param(ctx, s.param);
    auto keyed = [&](const Row& r) {
      auto it = r.find(s.column);
      return it != r.end() && it->second == key;
    };
    bool ok = true;
    if (s.op == "insert") {
      Row row;
      for (const auto& [col, tmpl] : s.values) row[col] = render(tmpl, ctx, nullptr, [](std::string v) { return v; });
      if (!s.auto_id.empty()) {
        long long next = 1;
        for (const auto& r : table) {
          auto it = r.find(s.auto_id);
          if (it != r.end() && starts_with_digit(it->second)) next = std::max(next, std::stoll(it->second) + 1);
        }
        row[s.auto_id] = std::to_string(next);
        ctx.vars["insert_id"] = row[s.auto_id];
      }
      table.push_back(std::move(row));
    } else if (s.op == "update") {
      for (auto& r : table)
        if (keyed(r))
          for (const auto& [col, tmpl] : s.values) r[col] = render(tmpl, ctx, &r, [](std::string v) { return v; });
    } else if (s.op == "delete") {
      table.erase(std::remove_if(table.begin(), table.end(), keyed), table.end());
    } else if (s.op == "require_row") {
      ok = std::any_of(table.begin(), table.end(), keyed);
    }
    if (s.sql) ctx.trace.queries.push_back(render(*s.sql, ctx, nullptr, escape_sql));
    return ok;
  }

  bool condition_holds(const Step& s, const Ctx& ctx) const {
    if (!s.when) return true;
    auto v = param(ctx, s.when->param);
    if (s.when->equals && v != *s.when->equals) return false;
    if (s.when->not_equals && v == *s.when->not_equals) return false;
    return true;
  }

  std::string render_items(const Route& route, Ctx& ctx, int base) {
    std::string body;
    for (std::size_t k = 0; k < route.items.size(); ++k) {
      const auto& item = route.items[k];
      if (!item.roles.empty() && (!ctx.user || !item.roles.count(ctx.user->role))) continue;
      ctx.trace.lines.push_back(base + 20 + static_cast<int>(k));
      if (!item.foreach) {
        body += render(item.html, ctx, nullptr, escape_html);
        continue;
      }
      std::map<std::string, std::string> where;
      for (const auto& [col, tmpl] : item.where) where[col] = render(tmpl, ctx, nullptr, [](std::string v) { return v; });
      std::string sql = "SELECT * FROM " + *item.foreach;
      bool first = true;
      for (const auto& [col, v] : where) {
        sql += (first ? " WHERE " : " AND ") + col + " = '" + escape_sql(v) + "'";
        first = false;
      }
      ctx.trace.queries.push_back(sql);
      for (const auto& row : tables[*item.foreach]) {
        bool keep = std::all_of(where.begin(), where.end(), [&](const auto& w) {
          auto it = row.find(w.first);
          return it != row.end() && it->second == w.second;
        });
        if (keep) body += render(item.html, ctx, &row, escape_html);
      }
    }
    return body;
  }

  void respond(httplib::Response& res, int status, const std::string& title, const std::string& body) {
    res.status = status;
    res.set_content(page(title, body), "text/html; charset=utf-8");
  }

  void handle_route(const Route& route, int index, Ctx& ctx, httplib::Response& res) {
    int base = 100 * (index + 1);
    ctx.trace.lines.push_back(base);
    if (route.login && !ctx.user) {
      ctx.trace.lines.push_back(base + 1);
      respond(res, 200, "Login", std::string("<p>Please log in.</p>") + kLoginForm);
      return;
    }
    auto deny = [&](int line) {
      ctx.trace.lines.push_back(base + line);
      respond(res, 200, "Denied", app.denied_body);
    };
    if (!route.roles.empty() && !route.roles.count(ctx.user->role)) {
      for (const auto& s : route.denied_steps) run_step(s, ctx);
      return deny(2);
    }
    if (route.token_param && param(ctx, *route.token_param) != user_token(app, ctx.user->username)) return deny(4);
    if (const auto& oc = route.owner_check) {
      auto key = param(ctx, oc->param);
      ctx.trace.queries.push_back("SELECT " + oc->owner_column + " FROM " + oc->table + " WHERE " + oc->column +
                                  " = '" + escape_sql(key) + "'");
      const auto& rows = tables[oc->table];
      bool owned = std::any_of(rows.begin(), rows.end(), [&](const Row& r) {
        auto k = r.find(oc->column);
        auto o = r.find(oc->owner_column);
        return k != r.end() && o != r.end() && k->second == key && o->second == std::to_string(ctx.user->id);
      });
      if (!owned) return deny(3);
    }
    for (std::size_t i = 0; i < route.steps.size(); ++i) {
      const auto& s = route.steps[i];
      if (!condition_holds(s, ctx)) {
        ctx.trace.lines.push_back(base + 50 + static_cast<int>(i));
        continue;
      }
      ctx.trace.lines.push_back(base + 10 + static_cast<int>(i));
      if (!run_step(s, ctx)) {
        ctx.trace.lines.push_back(base + 90);
        respond(res, s.status, "Error", "<p>Fatal error: record not found</p>");
        return;
      }
    }
    auto body = render_items(route, ctx, base) + render(route.response, ctx, nullptr, escape_html);
    ctx.trace.lines.push_back(base + 99);
    respond(res, 200, route.title, body);
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    ++handled;
    Ctx ctx;
    auto target = req.target;
    auto qpos = target.find('?');
    std::string path = req.path;
    if (qpos != std::string::npos) ctx.params = parse_form(target.substr(qpos + 1));
    if (!req.body.empty()) {
      auto body = flatten_nested(parse_form(req.body));
      ctx.params.insert(ctx.params.end(), body.begin(), body.end());
    }
    Method method = Method::kGet;
    try {
      method = parse_method(req.method);
    } catch (const Error&) {
    }
    std::string covid = req.get_header_value(std::string(kCovidHeader));

    std::lock_guard lock(mu);
    std::string sid;
    if (auto cookies = req.get_header_value("Cookie"); !cookies.empty()) {
      CookieJar jar;
      for (const auto& part : split(cookies, ';')) apply_set_cookie(jar, trim(part));
      if (auto it = jar.find("SESSID"); it != jar.end() && sessions.count(it->second)) {
        sid = it->second;
        ctx.user = sessions[sid].user;
      }
    }

    if (path == "/__reset") {
      reset_locked();
      res.status = 200;
      res.set_content("reset\n", "text/plain");
    } else if (path == "/" || path == "/login.php") {
      ctx.trace.lines.push_back(1);
      if (method == Method::kPost) {
        auto username = param(ctx, "username");
        ctx.trace.queries.push_back("SELECT * FROM users WHERE username = '" + escape_sql(username) + "'");
        const User* user = find_user(username);
        if (user && user->password == param(ctx, "password")) {
          ctx.trace.lines.push_back(3);
          auto id = new_session(user);
          res.status = 302;
          res.set_header("Location", "/dashboard.php");
          res.set_header("Set-Cookie", "SESSID=" + id + "; Path=/");
        } else {
          ctx.trace.lines.push_back(4);
          respond(res, 200, "Login", std::string("<p>Invalid credentials.</p>") + kLoginForm);
        }
      } else {
        ctx.trace.lines.push_back(2);
        respond(res, 200, "Login", kLoginForm);
      }
    } else if (path == "/logout.php") {
      ctx.trace.lines.push_back(5);
      if (!sid.empty()) sessions.erase(sid);
      res.status = 302;
      res.set_header("Location", "/login.php");
    } else {
      int index = -1;
      bool script_exists = false;
      for (std::size_t i = 0; i < app.routes.size(); ++i) {
        const auto& r = app.routes[i];
        if (r.path == path) script_exists = true;
        if (r.method != method || r.path != path) continue;
        bool ok = std::all_of(r.match.begin(), r.match.end(),
                              [&](const auto& m) { return has_param(ctx, m.first, m.second); });
        if (ok) {
          index = static_cast<int>(i);
          break;
        }
      }
      if (index < 0 && script_exists) {
        // Like a front controller: unknown actions fall through to a default page.
        ctx.trace.lines.push_back(7);
        respond(res, 200, "Index", "<p>Nothing to do.</p>");
      } else if (index < 0) {
        ctx.trace.lines.push_back(9);
        respond(res, 404, "Not Found", "<p>Not Found</p>");
      } else {
        handle_route(app.routes[index], index, ctx, res);
      }
    }

    if (!covid.empty() && sidecar_dir && safe_covid(covid)) write_sidecar(covid, path, ctx.trace);
  }

  void write_sidecar(const std::string& covid, const std::string& path, const Trace& trace) {
    QuerySidecar s;
    s.covid = covid;
    s.queries = trace.queries;
    s.coverage.push_back({app.name + path, trace.lines});
    {
      std::lock_guard lock(queue_mu);
      pending.push_back(std::move(s));
    }
    queue_cv.notify_one();
  }

  void flush_sidecar(const QuerySidecar& s) {
    auto file = sidecar_path(*sidecar_dir, s.covid);
    auto tmp = file;
    tmp += ".tmp";
    try {
      write_file(tmp, to_json(s).dump());
      std::filesystem::rename(tmp, file);
    } catch (const std::exception& e) {
      spdlog::warn("sidecar write failed for {}: {}", s.covid, e.what());
    }
  }

  void writer_loop() {
    std::unique_lock lock(queue_mu);
    for (;;) {
      queue_cv.wait(lock, [&] { return writer_done || !pending.empty(); });
      while (!pending.empty()) {
        auto s = std::move(pending.front());
        pending.pop_front();
        lock.unlock();
        flush_sidecar(s);
        lock.lock();
      }
      if (writer_done) return;
    }
  }

  void stop_writer() {
    {
      std::lock_guard lock(queue_mu);
      writer_done = true;
    }
    queue_cv.notify_one();
    if (writer.joinable()) writer.join();
  }

  void reset_locked() {
    tables = app.tables;
    sessions.clear();
  }
};

Target::Target(AppSpec app, std::optional<std::filesystem::path> sidecar_dir) : impl_(std::make_unique<Impl>()) {
  impl_->app = std::move(app);
  impl_->sidecar_dir = std::move(sidecar_dir);
  if (impl_->sidecar_dir) {
    std::filesystem::create_directories(*impl_->sidecar_dir);
    impl_->writer = std::thread([this] { impl_->writer_loop(); });
  }
  impl_->tables = impl_->app.tables;
  // Regular handlers; a pre-routing hook would run before the body is read.
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle(req, res);
    if (impl_->app.latency_us > 0) std::this_thread::sleep_for(std::chrono::microseconds(impl_->app.latency_us));
  };
  impl_->server.set_tcp_nodelay(true);
  // The library default sets SO_REUSEPORT, which lets a second server share the port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Patch(".*", handler);
  impl_->server.Delete(".*", handler);
  impl_->server.Options(".*", handler);
}

Target::~Target() { stop(); }

void Target::start(const std::string& host, int port) {
  impl_->host = host;
  int bound = 0;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound <= 0) throw Error(ErrorCode::kPortInUse, "cannot bind " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port))
      throw Error(ErrorCode::kPortInUse, "port " + std::to_string(port) + " is in use on " + host);
    bound = port;
  }
  impl_->port = bound;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Target::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->stop_writer();
}

void Target::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Target::port() const { return impl_->port; }

Url Target::base_url() const {
  Url u;
  u.host = impl_->host;
  u.port = impl_->port;
  u.path = "/";
  return u;
}

const AppSpec& Target::app() const { return impl_->app; }

void Target::reset() {
  std::lock_guard lock(impl_->mu);
  impl_->reset_locked();
}

std::size_t Target::handled() const { return impl_->handled.load(); }

std::unique_ptr<Target> serve(const AppSpec& app, int port, std::optional<std::filesystem::path> sidecar_dir,
                              const std::string& host) {
  auto target = std::make_unique<Target>(app, std::move(sidecar_dir));
  target->start(host, port);
  return target;
}

std::unique_ptr<Target> coincidence_app(int port, std::optional<std::filesystem::path> sidecar_dir) {
  return serve(coincidence_spec(), port, std::move(sidecar_dir));
}

}  // namespace acfuzz::harness
