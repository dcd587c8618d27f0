#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acfuzz/http.hpp"
#include "acfuzz/url.hpp"

// Simulated web applications with an in-memory store. Every request carrying
// the covid header leaves a sidecar with the SQL the handler "executed" and
// the synthetic lines it went through.
namespace acfuzz::harness {

using Row = std::map<std::string, std::string>;

struct User {
  int id = 0;
  std::string username;
  std::string password;
  std::string role;
};

struct Condition {
  std::string param;
  std::optional<std::string> equals;
  std::optional<std::string> not_equals;
};

// One handler action. `sql` is rendered with request params, session fields
// and `{insert_id}` after the op ran.
struct Step {
  std::string op;  // "", "insert", "update", "delete", "require_row"
  std::optional<std::string> sql;
  std::string table;
  std::string column;  // key column for update/delete/require_row
  std::string param;   // request param holding the key
  std::map<std::string, std::string> values;  // insert values / update assignments
  std::string auto_id;                        // insert: column receiving max+1
  std::optional<Condition> when;
  int status = 500;  // require_row failure status
};

struct OwnerCheck {
  std::string table;
  std::string column;
  std::string param;
  std::string owner_column = "owner";
};

struct Item {
  std::set<std::string> roles;  // empty: everyone
  std::optional<std::string> foreach;
  std::map<std::string, std::string> where;  // column -> rendered value
  std::string html;
};

struct Route {
  Method method = Method::kGet;
  std::string path;
  std::map<std::string, std::string> match;  // required param values; "*" means any
  std::string title;
  bool login = true;
  std::set<std::string> roles;  // empty: any logged-in user
  std::optional<OwnerCheck> owner_check;
  std::optional<std::string> token_param;
  std::vector<Step> denied_steps;  // run when the role check rejects
  std::vector<Step> steps;
  std::vector<Item> items;
  std::string response;
};

struct SeededVuln {
  std::string id;
  std::string kind;  // BOLA or BFLA
  std::string method;
  std::string path;
  std::string param;
  std::set<std::string> roles_exposed;
  std::string verb;
  std::string table;
};

struct AppSpec {
  std::string name;
  std::vector<User> users;
  std::map<std::string, std::vector<Row>> tables;
  std::vector<Route> routes;
  std::vector<SeededVuln> vulns;
  std::string denied_body = "<p>Access denied</p>";
  int latency_us = 0;  // simulated handler work per request
};

// Throws Error(kSchema) naming the offending JSON path.
AppSpec parse_app_spec(const nlohmann::json& j);
AppSpec load_app_spec(const std::filesystem::path& file);
// Deterministic per-user token (CSRF/nonce stand-in).
std::string user_token(const AppSpec& app, const std::string& username);

// Built-in app whose cart handler always runs the same DELETE regardless of input.
AppSpec coincidence_spec();

class Target {
 public:
  Target(AppSpec app, std::optional<std::filesystem::path> sidecar_dir);
  ~Target();
  Target(const Target&) = delete;
  Target& operator=(const Target&) = delete;

  // Binds and starts serving on a background thread; port 0 picks a free
  // port. Throws Error(kPortInUse).
  void start(const std::string& host, int port);
  void stop();
  // Blocks until stop() or a signal.
  void wait();

  int port() const;
  Url base_url() const;
  const AppSpec& app() const;
  // Restores the initial tables and drops all sessions.
  void reset();
  std::size_t handled() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<Target> serve(const AppSpec& app, int port,
                              std::optional<std::filesystem::path> sidecar_dir = std::nullopt,
                              const std::string& host = "127.0.0.1");
std::unique_ptr<Target> coincidence_app(int port, std::optional<std::filesystem::path> sidecar_dir = std::nullopt);

}  // namespace acfuzz::harness
