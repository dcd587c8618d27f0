#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acfuzz {

// One name/value pair from a query string or form-encoded body. Pairs that
// were flattened out of a nested composite value carry the composite's name
// in `parent`.
struct Param {
  std::string name;
  std::string value;
  std::optional<std::string> parent;

  bool operator==(const Param&) const = default;
};

struct Url {
  std::string scheme = "http";
  std::string host;
  int port = 80;
  std::string path = "/";
  std::vector<Param> query;

  // scheme://host[:port]
  std::string base() const;
  std::string path_and_query() const;
  std::string to_string() const;
  // Value of the first query parameter with this name.
  std::optional<std::string> query_value(std::string_view name) const;
};

// Throws Error(kMalformedUrl) unless `text` is an absolute http(s) URL.
Url parse_url(std::string_view text);

// Resolves an href found on `page`. Returns nullopt for non-navigational
// targets (javascript:, mailto:, fragments, other hosts).
std::optional<Url> resolve_href(const Url& page, std::string_view href);

std::string percent_decode(std::string_view s, bool plus_is_space = true);
std::string percent_encode(std::string_view s);

std::vector<Param> parse_form(std::string_view encoded);
// Encodes top-level params; a composite parent is re-encoded from its
// flattened children so child substitutions propagate into the wire form.
std::string encode_form(const std::vector<Param>& params);

// Appends atomic children (parent = composite name) after every top-level
// value that is itself form-encoded. One level only.
std::vector<Param> flatten_nested(std::vector<Param> params);

bool has_children(const std::vector<Param>& params, std::string_view name);

}  // namespace acfuzz
