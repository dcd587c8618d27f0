#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <thread>

#include "acfuzz/param_analysis.hpp"
#include "acfuzz/util.hpp"

namespace acfuzz {

using nlohmann::json;

ChatCompletionsClient::ChatCompletionsClient(ChatCompletionsConfig config) : config_(std::move(config)) {}

std::optional<std::string> ChatCompletionsClient::attempt(const LlmQuery& query) {
  ++calls_;
  Url url;
  try {
    url = parse_url(config_.endpoint);
  } catch (const Error& e) {
    spdlog::error("LLM endpoint: {}", e.what());
    return std::nullopt;
  }
  httplib::Client client(url.base());
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  json body = {{"model", query.model.empty() ? config_.model : query.model},
               {"temperature", 0},
               {"messages", json::array({{{"role", "user"}, {"content", query.prompt}}})}};
  auto res = client.Post(url.path_and_query(), headers, body.dump(), "application/json");
  if (!res) {
    spdlog::warn("LLM request failed: {}", httplib::to_string(res.error()));
    return std::nullopt;
  }
  if (res->status != 200) {
    spdlog::warn("LLM service replied {}", res->status);
    return std::nullopt;
  }
  try {
    auto j = json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    spdlog::warn("LLM reply unparseable: {}", e.what());
    return std::nullopt;
  }
}

std::optional<std::string> ChatCompletionsClient::complete(const LlmQuery& query) {
  if (auto reply = attempt(query)) return reply;
  std::this_thread::sleep_for(config_.backoff);
  if (auto reply = attempt(query)) return reply;
  return std::nullopt;
}

ReplyCache::ReplyCache(std::optional<std::filesystem::path> file) : file_(std::move(file)) {
  if (!file_ || !std::filesystem::exists(*file_)) return;
  try {
    auto j = json::parse(read_file(*file_));
    for (const auto& [k, v] : j.items()) entries_[k] = v.get<std::string>();
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kPersistence, "LLM cache " + file_->string() + ": " + e.what());
  }
}

std::optional<std::string> ReplyCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ReplyCache::put(const std::string& key, const std::string& reply) {
  std::lock_guard lock(mu_);
  entries_.try_emplace(key, reply);
}

void ReplyCache::save() const {
  if (!file_) return;
  std::lock_guard lock(mu_);
  write_file(*file_, json(entries_).dump(2) + "\n");
}

std::size_t ReplyCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace acfuzz
