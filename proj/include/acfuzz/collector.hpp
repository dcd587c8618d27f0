#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acfuzz/corpus.hpp"
#include "acfuzz/http.hpp"
#include "acfuzz/util.hpp"

namespace acfuzz {

inline constexpr std::string_view kDefaultSentinel = "zzfuzzzz";

struct RoleSession {
  std::string role;
  int rank = 0;
  CookieJar cookies;
  Headers static_headers;
  Url home_url;
};

// Opens a client for the session's origin carrying its cookies and headers.
HttpSession open_session(const RoleSession& session,
                         std::chrono::milliseconds timeout = std::chrono::seconds(10));

struct LoginScript {
  std::string form_path;  // relative to the base URL
  Method method = Method::kPost;
  std::map<std::string, std::string> fields;
  std::optional<std::string> success_redirect;  // Location must contain this
  std::optional<std::string> success_contains;  // body must contain this
  std::optional<std::string> home_path;         // overrides the redirect target
};

// An empty script (no form_path) yields an anonymous session whose home is
// the base URL. Throws Error(kLoginFailed) or Error(kNetwork).
RoleSession login(const std::string& role, int rank, const LoginScript& script, const Url& base_url);

struct PageLink {
  std::string anchor_text;
  std::string base;
  std::string path;
  std::string query;  // sentinel-bearing values masked

  // Similar links have identical components; anchor text does not count.
  std::string similarity_key() const { return base + path + "?" + query; }
};

PageLink make_page_link(const Url& url, std::string anchor_text, std::string_view sentinel);

struct CrawlLimits {
  std::size_t max_pages = 200;
  std::size_t max_depth = 10;
  // Targets whose path+query contains any of these substrings are never
  // requested (logout links, destructive resets).
  std::vector<std::string> exclude;
};

struct CrawlOptions {
  CrawlLimits limits;
  std::string sentinel{kDefaultSentinel};
  std::uint64_t seed = 1;
  std::chrono::milliseconds timeout{10000};
};

struct CrawlStats {
  std::size_t pages_visited = 0;   // GET navigations including the home page
  std::size_t links_followed = 0;  // navigations discovered from anchors
  std::size_t forms_submitted = 0;
  std::size_t stored = 0;          // 2xx requests handed to the sink
  std::size_t rejected = 0;        // non-2xx responses
  std::size_t errors = 0;
};

// Receives every request that got a 2xx reply, in send order.
using RequestSink = std::function<void(const RequestRecord&)>;

// Depth-first crawl from the session's home page. Stops cleanly at limits.
CrawlStats crawl(const RoleSession& session, const CrawlOptions& options, const RequestSink& sink);
CrawlStats crawl(const RoleSession& session, const CrawlOptions& options, Corpus& corpus);

struct IngestResult {
  std::size_t stored = 0;
  std::size_t skipped = 0;  // non-2xx entries
  std::vector<std::string> violations;  // "line N: reason"
};

// Reads recorded traffic (JSON lines of {method, url, headers, body,
// response_status}); 2xx entries go to the sink. Root-relative URLs and
// Referer values ("/path?q") are resolved against `base` when given. Throws
// Error(kIo) when the file cannot be read.
IngestResult ingest_recorded(const std::filesystem::path& traffic_file, const RequestSink& sink,
                             const std::optional<Url>& base = std::nullopt);
IngestResult ingest_recorded(const std::filesystem::path& traffic_file, const std::string& role,
                             Corpus& corpus, const std::optional<Url>& base = std::nullopt);

}  // namespace acfuzz
