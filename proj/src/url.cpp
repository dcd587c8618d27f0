#include "acfuzz/url.hpp"

#include <cctype>

#include "acfuzz/util.hpp"

namespace acfuzz {

namespace {

int default_port(std::string_view scheme) { return scheme == "https" ? 443 : 80; }

std::string remove_dot_segments(std::string_view path) {
  std::vector<std::string> out;
  auto segments = split(path, '/');
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg == ".") continue;
    if (seg == "..") {
      if (out.size() > 1) out.pop_back();
      continue;
    }
    out.push_back(seg);
  }
  std::string result;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i) result.push_back('/');
    result += out[i];
  }
  if (result.empty() || result.front() != '/') result.insert(result.begin(), '/');
  if (!segments.empty() && (segments.back() == "." || segments.back() == "..") &&
      result.back() != '/')
    result.push_back('/');
  return result;
}

bool valid_param_name(std::string_view name) {
  if (name.empty()) return false;
  for (unsigned char c : name) {
    if (!(std::isalnum(c) || c == '_' || c == '-' || c == '[' || c == ']' || c == '.'))
      return false;
  }
  return true;
}

}  // namespace

std::string Url::base() const {
  std::string out = scheme + "://" + host;
  if (port != default_port(scheme)) out += ":" + std::to_string(port);
  return out;
}

std::string Url::path_and_query() const {
  std::string out = path;
  if (!query.empty()) out += "?" + encode_form(query);
  return out;
}

std::string Url::to_string() const { return base() + path_and_query(); }

std::optional<std::string> Url::query_value(std::string_view name) const {
  for (const auto& p : query)
    if (p.name == name) return p.value;
  return std::nullopt;
}

Url parse_url(std::string_view text) {
  auto fail = [&](const char* why) {
    return Error(ErrorCode::kMalformedUrl, "malformed URL '" + std::string(text) + "': " + why);
  };
  Url url;
  auto scheme_end = text.find("://");
  if (scheme_end == std::string_view::npos) throw fail("missing scheme");
  url.scheme = to_lower(text.substr(0, scheme_end));
  if (url.scheme != "http" && url.scheme != "https") throw fail("unsupported scheme");
  auto rest = text.substr(scheme_end + 3);
  auto frag = rest.find('#');
  if (frag != std::string_view::npos) rest = rest.substr(0, frag);
  auto authority_end = rest.find_first_of("/?");
  auto authority = rest.substr(0, authority_end);
  rest = authority_end == std::string_view::npos ? std::string_view{} : rest.substr(authority_end);
  if (authority.empty()) throw fail("missing host");
  auto colon = authority.rfind(':');
  url.port = default_port(url.scheme);
  if (colon != std::string_view::npos) {
    auto port_text = authority.substr(colon + 1);
    if (port_text.empty()) throw fail("empty port");
    int port = 0;
    for (char c : port_text) {
      if (c < '0' || c > '9') throw fail("non-numeric port");
      port = port * 10 + (c - '0');
      if (port > 65535) throw fail("port out of range");
    }
    url.port = port;
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) throw fail("missing host");
  url.host = to_lower(authority);
  auto qpos = rest.find('?');
  std::string_view path = rest.substr(0, qpos);
  url.path = path.empty() ? "/" : std::string(path);
  if (qpos != std::string_view::npos) url.query = parse_form(rest.substr(qpos + 1));
  return url;
}

std::optional<Url> resolve_href(const Url& page, std::string_view href_in) {
  std::string href = trim(href_in);
  if (href.empty() || href.front() == '#') return std::nullopt;
  auto lower = to_lower(href);
  if (lower.starts_with("javascript:") || lower.starts_with("mailto:") ||
      lower.starts_with("tel:") || lower.starts_with("data:"))
    return std::nullopt;
  if (auto frag = href.find('#'); frag != std::string::npos) href.resize(frag);

  Url target;
  if (lower.starts_with("http://") || lower.starts_with("https://")) {
    try {
      target = parse_url(href);
    } catch (const Error&) {
      return std::nullopt;
    }
  } else if (href.starts_with("//")) {
    try {
      target = parse_url(page.scheme + ":" + href);
    } catch (const Error&) {
      return std::nullopt;
    }
  } else {
    target = page;
    target.query.clear();
    auto qpos = href.find('?');
    std::string path = href.substr(0, qpos);
    if (!path.empty()) {
      if (path.front() == '/') {
        target.path = remove_dot_segments(path);
      } else {
        auto dir = page.path.substr(0, page.path.rfind('/') + 1);
        target.path = remove_dot_segments(dir + path);
      }
    }
    if (qpos != std::string::npos) target.query = parse_form(std::string_view(href).substr(qpos + 1));
  }
  if (target.host != page.host || target.port != page.port) return std::nullopt;
  return target;
}

std::string percent_decode(std::string_view s, bool plus_is_space) {
  std::string out;
  out.reserve(s.size());
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '+' && plus_is_space) {
      out.push_back(' ');
    } else if (c == '%' && i + 2 < s.size() && hex(s[i + 1]) >= 0 && hex(s[i + 2]) >= 0) {
      out.push_back(static_cast<char>(hex(s[i + 1]) * 16 + hex(s[i + 2])));
      i += 2;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

std::vector<Param> parse_form(std::string_view encoded) {
  std::vector<Param> out;
  if (encoded.empty()) return out;
  for (const auto& piece : split(encoded, '&')) {
    if (piece.empty()) continue;
    auto eq = piece.find('=');
    Param p;
    p.name = percent_decode(piece.substr(0, eq));
    p.value = eq == std::string::npos ? std::string{} : percent_decode(std::string_view(piece).substr(eq + 1));
    out.push_back(std::move(p));
  }
  return out;
}

bool has_children(const std::vector<Param>& params, std::string_view name) {
  for (const auto& p : params)
    if (p.parent && *p.parent == name) return true;
  return false;
}

std::string encode_form(const std::vector<Param>& params) {
  std::string out;
  for (const auto& p : params) {
    if (p.parent) continue;
    std::string value = p.value;
    if (has_children(params, p.name)) {
      std::vector<Param> children;
      for (const auto& c : params)
        if (c.parent && *c.parent == p.name) children.push_back({c.name, c.value, std::nullopt});
      value = encode_form(children);
    }
    if (!out.empty()) out.push_back('&');
    out += percent_encode(p.name) + "=" + percent_encode(value);
  }
  return out;
}

std::vector<Param> flatten_nested(std::vector<Param> params) {
  std::vector<Param> out;
  for (auto& p : params) {
    if (p.parent) continue;  // already flattened
    out.push_back(p);
    if (p.value.find('=') == std::string::npos) continue;
    auto inner = parse_form(p.value);
    bool composite = !inner.empty();
    for (const auto& piece : split(p.value, '&'))
      if (piece.find('=') == std::string::npos) composite = false;
    for (const auto& c : inner)
      if (!valid_param_name(c.name)) composite = false;
    if (!composite) continue;
    for (auto& c : inner) {
      c.parent = p.name;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace acfuzz
