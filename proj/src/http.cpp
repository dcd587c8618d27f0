#include "acfuzz/http.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>

#include "acfuzz/util.hpp"

namespace acfuzz {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kGet: return "GET";
    case Method::kPost: return "POST";
    case Method::kPut: return "PUT";
    case Method::kPatch: return "PATCH";
    case Method::kDelete: return "DELETE";
    case Method::kHead: return "HEAD";
    case Method::kOptions: return "OPTIONS";
  }
  return "GET";
}

Method parse_method(std::string_view text) {
  static const std::pair<std::string_view, Method> kMethods[] = {
      {"GET", Method::kGet},       {"POST", Method::kPost}, {"PUT", Method::kPut},
      {"PATCH", Method::kPatch},   {"DELETE", Method::kDelete}, {"HEAD", Method::kHead},
      {"OPTIONS", Method::kOptions}};
  for (const auto& [name, m] : kMethods)
    if (iequals(name, text)) return m;
  throw Error(ErrorCode::kSchema, "unknown HTTP method '" + std::string(text) + "'");
}

bool CaseInsensitiveLess::operator()(std::string_view a, std::string_view b) const {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                      [](unsigned char x, unsigned char y) {
                                        return std::tolower(x) < std::tolower(y);
                                      });
}

std::string cookie_header(const CookieJar& jar) {
  std::string out;
  for (const auto& [name, value] : jar) {
    if (!out.empty()) out += "; ";
    out += name + "=" + value;
  }
  return out;
}

void apply_set_cookie(CookieJar& jar, std::string_view set_cookie) {
  auto first = set_cookie.substr(0, set_cookie.find(';'));
  auto eq = first.find('=');
  if (eq == std::string_view::npos) return;
  auto name = trim(first.substr(0, eq));
  auto value = trim(first.substr(eq + 1));
  if (name.empty()) return;
  auto attrs = to_lower(set_cookie);
  bool expired = attrs.find("max-age=0") != std::string::npos ||
                 attrs.find("expires=thu, 01 jan 1970") != std::string::npos;
  if (value.empty() || expired) {
    jar.erase(name);
  } else {
    jar[name] = value;
  }
}

struct HttpSession::Impl {
  explicit Impl(const Url& origin) : client(origin.base()) {}
  httplib::Client client;
};

HttpSession::HttpSession(const Url& origin, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>(origin)) {
  impl_->client.set_keep_alive(true);
  impl_->client.set_tcp_nodelay(true);
  impl_->client.set_follow_location(false);
  impl_->client.set_connection_timeout(timeout);
  impl_->client.set_read_timeout(timeout);
  impl_->client.set_write_timeout(timeout);
}

HttpSession::~HttpSession() = default;
HttpSession::HttpSession(HttpSession&&) noexcept = default;
HttpSession& HttpSession::operator=(HttpSession&&) noexcept = default;

void HttpSession::set_static_header(std::string name, std::string value) {
  static_headers_[std::move(name)] = std::move(value);
}

HttpResponse HttpSession::send(const HttpRequest& request) {
  httplib::Request req;
  req.method = std::string(to_string(request.method));
  req.path = request.url.path_and_query();
  for (const auto& [name, value] : static_headers_) req.set_header(name, value);
  for (const auto& [name, value] : request.headers) {
    if (iequals(name, "Cookie") || iequals(name, "Host") || iequals(name, "Content-Length"))
      continue;
    req.set_header(name, value);
  }
  if (!cookies_.empty()) req.set_header("Cookie", cookie_header(cookies_));
  if (request.method != Method::kGet && request.method != Method::kHead) {
    req.body = request.body;
    if (!req.has_header("Content-Type"))
      req.set_header("Content-Type", "application/x-www-form-urlencoded");
  }

  auto started = std::chrono::steady_clock::now();
  auto result = impl_->client.send(req);
  auto elapsed = std::chrono::steady_clock::now() - started;
  if (!result) {
    throw Error(ErrorCode::kNetwork, std::string(to_string(request.method)) + " " +
                                         request.url.to_string() + ": " +
                                         httplib::to_string(result.error()));
  }
  HttpResponse response;
  response.status = result->status;
  response.body = std::move(result->body);
  response.elapsed = elapsed;
  for (const auto& [name, value] : result->headers) {
    if (iequals(name, "Set-Cookie")) apply_set_cookie(cookies_, value);
    response.headers[name] = value;
  }
  return response;
}

}  // namespace acfuzz
