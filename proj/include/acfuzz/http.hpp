#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "acfuzz/url.hpp"

namespace acfuzz {

enum class Method { kGet, kPost, kPut, kPatch, kDelete, kHead, kOptions };

std::string_view to_string(Method m);
// Throws Error(kSchema) for an unknown verb.
Method parse_method(std::string_view text);

struct CaseInsensitiveLess {
  using is_transparent = void;
  bool operator()(std::string_view a, std::string_view b) const;
};

using Headers = std::map<std::string, std::string, CaseInsensitiveLess>;

inline constexpr std::string_view kCovidHeader = "X-FUZZER-COVID";

struct HttpRequest {
  Method method = Method::kGet;
  Url url;
  Headers headers;
  std::string body;  // form-encoded for POST
};

struct HttpResponse {
  int status = 0;
  Headers headers;
  std::string body;
  std::chrono::duration<double> elapsed{0};
};

// Name -> value. Attributes (path, expiry) are ignored; targets are
// single-host.
using CookieJar = std::map<std::string, std::string>;

std::string cookie_header(const CookieJar& jar);
// Applies one Set-Cookie header value to the jar.
void apply_set_cookie(CookieJar& jar, std::string_view set_cookie);

// Keep-alive client bound to one target origin with a cookie jar. Not
// thread-safe; each role owns its own.
class HttpSession {
 public:
  explicit HttpSession(const Url& origin, std::chrono::milliseconds timeout = std::chrono::seconds(10));
  ~HttpSession();
  HttpSession(HttpSession&&) noexcept;
  HttpSession& operator=(HttpSession&&) noexcept;

  // Sends with the jar's cookies (any Cookie header on the request is
  // replaced) and records Set-Cookie replies. Never follows redirects.
  // Throws Error(kNetwork) on transport failure.
  HttpResponse send(const HttpRequest& request);

  CookieJar& cookies() { return cookies_; }
  const CookieJar& cookies() const { return cookies_; }
  const Headers& static_headers() const { return static_headers_; }
  void set_static_header(std::string name, std::string value);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  CookieJar cookies_;
  Headers static_headers_;
};

}  // namespace acfuzz
