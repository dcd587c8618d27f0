#include "acfuzz/html.hpp"

#include <cctype>
#include <map>
#include <optional>

#include "acfuzz/util.hpp"

namespace acfuzz::html {

namespace {

struct Tag {
  std::string name;
  bool closing = false;
  std::map<std::string, std::string> attrs;
};

class Scanner {
 public:
  explicit Scanner(std::string_view s) : s_(s) {}

  bool done() const { return pos_ >= s_.size(); }

  // Text up to the next '<'.
  std::string_view text() {
    auto start = pos_;
    auto next = s_.find('<', pos_);
    pos_ = next == std::string_view::npos ? s_.size() : next;
    return s_.substr(start, pos_ - start);
  }

  // Parses the tag at pos_ (which points at '<'). Returns nullopt for
  // comments, doctypes and stray '<'.
  std::optional<Tag> tag() {
    if (s_.compare(pos_, 4, "<!--") == 0) {
      auto end = s_.find("-->", pos_ + 4);
      pos_ = end == std::string_view::npos ? s_.size() : end + 3;
      return std::nullopt;
    }
    ++pos_;  // '<'
    if (pos_ < s_.size() && (s_[pos_] == '!' || s_[pos_] == '?')) {
      skip_to('>');
      return std::nullopt;
    }
    Tag t;
    if (pos_ < s_.size() && s_[pos_] == '/') {
      t.closing = true;
      ++pos_;
    }
    auto name_start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == name_start) return std::nullopt;
    t.name = to_lower(s_.substr(name_start, pos_ - name_start));
    while (pos_ < s_.size()) {
      skip_space();
      if (pos_ >= s_.size()) break;
      if (s_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (s_[pos_] == '/') {
        ++pos_;
        continue;
      }
      auto an_start = pos_;
      while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) &&
             s_[pos_] != '=' && s_[pos_] != '>' && s_[pos_] != '/')
        ++pos_;
      auto attr = to_lower(s_.substr(an_start, pos_ - an_start));
      if (attr.empty()) {
        ++pos_;
        continue;
      }
      skip_space();
      std::string value;
      if (pos_ < s_.size() && s_[pos_] == '=') {
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'')) {
          char q = s_[pos_++];
          auto end = s_.find(q, pos_);
          if (end == std::string_view::npos) end = s_.size();
          value = decode_entities(s_.substr(pos_, end - pos_));
          pos_ = std::min(end + 1, s_.size());
        } else {
          auto v_start = pos_;
          while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != '>')
            ++pos_;
          value = decode_entities(s_.substr(v_start, pos_ - v_start));
        }
      }
      t.attrs.emplace(std::move(attr), std::move(value));
    }
    return t;
  }

  // Raw content up to </name>; consumes the closing tag.
  std::string_view raw_until_close(std::string_view name) {
    auto start = pos_;
    std::string needle = "</" + std::string(name);
    auto lower = to_lower(s_.substr(pos_));
    auto found = lower.find(needle);
    if (found == std::string::npos) {
      pos_ = s_.size();
      return s_.substr(start);
    }
    pos_ = start + found;
    auto content = s_.substr(start, found);
    skip_to('>');
    return content;
  }

 private:
  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  void skip_to(char c) {
    auto end = s_.find(c, pos_);
    pos_ = end == std::string_view::npos ? s_.size() : end + 1;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string attr(const Tag& t, const std::string& name) {
  auto it = t.attrs.find(name);
  return it == t.attrs.end() ? std::string{} : it->second;
}

std::string collapse_space(std::string_view s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
    } else {
      if (space) out.push_back(' ');
      space = false;
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

}  // namespace

std::string decode_entities(std::string_view s) {
  static const std::map<std::string, std::string, std::less<>> kNamed = {
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    auto entity = s.substr(i + 1, semi - i - 1);
    if (!entity.empty() && entity[0] == '#') {
      unsigned long code = 0;
      bool hex = entity.size() > 1 && (entity[1] == 'x' || entity[1] == 'X');
      bool ok = entity.size() > (hex ? 2u : 1u);
      for (std::size_t k = hex ? 2 : 1; k < entity.size() && ok; ++k) {
        char c = entity[k];
        int d = std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
                : (hex && std::isxdigit(static_cast<unsigned char>(c))) ? (std::tolower(c) - 'a' + 10)
                                                                        : -1;
        if (d < 0) ok = false;
        code = code * (hex ? 16 : 10) + static_cast<unsigned long>(d);
      }
      if (ok && code < 128) {
        out.push_back(static_cast<char>(code));
        i = semi;
        continue;
      }
    } else if (auto it = kNamed.find(entity); it != kNamed.end()) {
      out += it->second;
      i = semi;
      continue;
    }
    out.push_back('&');
  }
  return out;
}

Document parse(std::string_view markup) {
  Document doc;
  Scanner sc(markup);
  std::optional<Anchor> anchor;
  std::optional<Form> form;
  std::optional<FormField> select;

  auto push_field = [&](FormField f) {
    if (form) form->fields.push_back(std::move(f));
  };

  while (!sc.done()) {
    auto text = sc.text();
    if (anchor) anchor->text += decode_entities(text);
    if (sc.done()) break;
    auto t = sc.tag();
    if (!t) continue;
    const auto& name = t->name;
    if (!t->closing && (name == "script" || name == "style")) {
      sc.raw_until_close(name);
      continue;
    }
    if (name == "a") {
      if (!t->closing) {
        if (anchor) doc.anchors.push_back(*anchor);
        anchor = Anchor{attr(*t, "href"), {}};
      } else if (anchor) {
        anchor->text = collapse_space(anchor->text);
        doc.anchors.push_back(std::move(*anchor));
        anchor.reset();
      }
    } else if (name == "form") {
      if (!t->closing) {
        if (form) doc.forms.push_back(std::move(*form));
        Form f;
        f.action = attr(*t, "action");
        auto method = to_lower(attr(*t, "method"));
        f.method = method.empty() ? "get" : method;
        form = std::move(f);
      } else if (form) {
        doc.forms.push_back(std::move(*form));
        form.reset();
      }
    } else if (name == "input" && !t->closing) {
      FormField f;
      f.tag = "input";
      f.type = to_lower(attr(*t, "type"));
      if (f.type.empty()) f.type = "text";
      f.name = attr(*t, "name");
      f.value = attr(*t, "value");
      f.checked = t->attrs.count("checked") > 0;
      push_field(std::move(f));
    } else if (name == "textarea" && !t->closing) {
      FormField f;
      f.tag = "textarea";
      f.type = "textarea";
      f.name = attr(*t, "name");
      f.value = decode_entities(sc.raw_until_close("textarea"));
      push_field(std::move(f));
    } else if (name == "select") {
      if (!t->closing) {
        FormField f;
        f.tag = "select";
        f.type = "select";
        f.name = attr(*t, "name");
        select = std::move(f);
      } else if (select) {
        push_field(std::move(*select));
        select.reset();
      }
    } else if (name == "option" && !t->closing && select) {
      if (t->attrs.count("value")) {
        select->options.push_back(attr(*t, "value"));
      } else {
        // Option text is the value when no value attribute is present.
        auto content = sc.text();
        select->options.push_back(trim(decode_entities(content)));
      }
    } else if (name == "button" && !t->closing) {
      FormField f;
      f.tag = "button";
      f.type = to_lower(attr(*t, "type"));
      if (f.type.empty()) f.type = "submit";
      f.name = attr(*t, "name");
      f.value = attr(*t, "value");
      push_field(std::move(f));
    }
  }
  if (anchor) {
    anchor->text = collapse_space(anchor->text);
    doc.anchors.push_back(std::move(*anchor));
  }
  if (select) push_field(std::move(*select));
  if (form) doc.forms.push_back(std::move(*form));
  return doc;
}

}  // namespace acfuzz::html
