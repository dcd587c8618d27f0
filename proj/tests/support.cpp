#include "support.hpp"

#include <atomic>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "acfuzz/util.hpp"

namespace fs = std::filesystem;

namespace acfuzz::test {

fs::path repo_path(const std::string& relative) { return fs::path(ACFUZZ_SOURCE_DIR) / relative; }

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("acfuzz-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

RunningApp::RunningApp(harness::AppSpec spec, const fs::path& work, int port) : sidecar_dir(work / "sidecars") {
  target = harness::serve(spec, port, sidecar_dir);
}

RunningApp::~RunningApp() {
  if (target) target->stop();
}

harness::AppSpec app_spec(const std::string& name) {
  if (name == "coincidence") return harness::coincidence_spec();
  return harness::load_app_spec(repo_path("harness/apps/" + name + ".json"));
}

Config app_config(const std::string& name, const RunningApp& app, const fs::path& work) {
  auto config = load_config(repo_path("harness/configs/" + name + ".json"));
  config.base_url = app.target->base_url();
  config.sidecar_dir = app.sidecar_dir;
  config.output_dir = work / "out";
  return config;
}

AppCampaign run_app_campaign(const std::string& name, const fs::path& work,
                             const std::function<void(Config&)>& tweak, const CampaignOptions& options, int port) {
  AppCampaign out;
  out.spec = app_spec(name);
  RunningApp app(out.spec, work, port);
  out.port = app.target->port();
  auto config = app_config(name, app, work);
  if (tweak) tweak(config);
  out.result = run_campaign(config, options);
  auto findings = config.output_dir / "findings.json";
  if (fs::exists(findings)) out.findings_file = read_file(findings);
  return out;
}

void quiet_logs() { spdlog::set_level(spdlog::level::warn); }

}  // namespace acfuzz::test
