#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>

#include "acfuzz/corpus.hpp"

namespace acfuzz {

extern const std::string_view kPromptTemplateVersion;
extern const std::string_view kPromptTemplate;

struct LlmQuery {
  std::string prompt;
  std::string request_line;
  std::string model;
  std::string cache_key;  // sha256 of request_line
};

// "[method] [full_url] [body_payload]" with nested body values replaced by
// their atomic pairs.
std::string request_line(const RequestRecord& record);
LlmQuery make_llm_query(const RequestRecord& record, const std::string& model);

// Comma-separated reply -> trimmed, non-empty names.
std::vector<std::string> parse_llm_reply(std::string_view reply);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Reply text, or nullopt when the service is unavailable.
  virtual std::optional<std::string> complete(const LlmQuery& query) = 0;
};

struct ChatCompletionsConfig {
  std::string endpoint;  // full URL of the chat-completions resource
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds backoff{500};  // wait before the single retry
};

class ChatCompletionsClient : public LlmClient {
 public:
  explicit ChatCompletionsClient(ChatCompletionsConfig config);
  std::optional<std::string> complete(const LlmQuery& query) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::optional<std::string> attempt(const LlmQuery& query);

  ChatCompletionsConfig config_;
  std::atomic<std::size_t> calls_{0};
};

// Replies keyed by LlmQuery::cache_key, persisted as one JSON object.
class ReplyCache {
 public:
  explicit ReplyCache(std::optional<std::filesystem::path> file = std::nullopt);
  std::optional<std::string> get(const std::string& key) const;
  // First writer wins for a key.
  void put(const std::string& key, const std::string& reply);
  void save() const;
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> file_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

Origin classify_origin(const ParamEntry& entry, std::string_view sentinel);
bool matches_security_rule(std::string_view name);
ParamClass heuristic_classify(std::string_view name, const std::set<std::string>& values,
                              std::string_view sentinel);

struct AnalysisStats {
  std::size_t requests = 0;
  std::size_t llm_queries = 0;   // served by cache or service
  std::size_t cache_hits = 0;
  std::size_t fallbacks = 0;     // requests classified by heuristics
  std::size_t unknown_names = 0; // reply names not in the request
};

class ParamAnalyzer {
 public:
  // `client` may be null: heuristics only.
  ParamAnalyzer(Corpus& corpus, LlmClient* client, ReplyCache* cache, std::string model = {});

  std::map<std::string, ParamClass> analyze_request(const RequestRecord& record);
  void analyze_all();
  AnalysisStats stats() const;

 private:
  Corpus& corpus_;
  LlmClient* client_;
  ReplyCache* cache_;
  std::string model_;
  mutable std::mutex mu_;
  AnalysisStats stats_;
};

}  // namespace acfuzz
