#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "acfuzz/campaign.hpp"
#include "acfuzz/config.hpp"
#include "acfuzz/harness.hpp"

namespace acfuzz::test {

std::filesystem::path repo_path(const std::string& relative);

// Fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// A harness target whose sidecars land in `work`/sidecars. Port 0 picks a
// free one.
struct RunningApp {
  RunningApp(harness::AppSpec spec, const std::filesystem::path& work, int port = 0);
  ~RunningApp();
  std::unique_ptr<harness::Target> target;
  std::filesystem::path sidecar_dir;
};

// Loads harness/configs/<name>.json and points it at the running target and
// the work directory.
Config app_config(const std::string& name, const RunningApp& app, const std::filesystem::path& work);

harness::AppSpec app_spec(const std::string& name);

struct AppCampaign {
  CampaignResult result;
  std::string findings_file;  // findings.json contents
  harness::AppSpec spec;
  int port = 0;
};

// Serves the app, runs one campaign and stops the target again. Reusing a
// previous run's port keeps request keys (which carry the origin) comparable.
AppCampaign run_app_campaign(const std::string& name, const std::filesystem::path& work,
                             const std::function<void(Config&)>& tweak = {},
                             const CampaignOptions& options = {}, int port = 0);

void quiet_logs();

}  // namespace acfuzz::test
