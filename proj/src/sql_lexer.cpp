#include "acfuzz/sql_lexer.hpp"

#include <cctype>
#include <optional>
#include <set>

namespace acfuzz {

std::string_view to_string(SqlVerb v) {
  switch (v) {
    case SqlVerb::kInsert: return "INSERT";
    case SqlVerb::kUpdate: return "UPDATE";
    case SqlVerb::kDelete: return "DELETE";
    case SqlVerb::kSelect: return "SELECT";
    case SqlVerb::kOther: return "OTHER";
  }
  return "OTHER";
}

namespace {

enum class Tok { kWord, kQuotedIdent, kString, kNumber, kPunct, kLParen, kRParen };

struct Token {
  Tok kind;
  std::string text;   // original spelling; literals unescaped
  std::string upper;  // words only
};

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_word_start(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalpha(u) || c == '_' || c == '$' || u >= 0x80;
}
bool is_word_char(char c) { return is_word_start(c) || is_digit(c); }

std::string upper_of(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

// Keywords after which a '-' starts a negative literal instead of a
// subtraction.
const std::set<std::string, std::less<>>& sign_keywords() {
  static const std::set<std::string, std::less<>> k = {
      "AND", "OR", "NOT", "WHERE", "SET", "VALUES", "VALUE", "IN", "BETWEEN", "LIKE", "IS",
      "THEN", "WHEN", "ELSE", "SELECT", "LIMIT", "OFFSET", "ON", "HAVING", "BY", "XOR", "CASE"};
  return k;
}

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  std::optional<std::vector<Token>> run() {
    while (i_ < s_.size()) {
      char c = s_[i_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i_;
      } else if ((c == '-' && peek(1) == '-') || c == '#') {
        while (i_ < s_.size() && s_[i_] != '\n') ++i_;
      } else if (c == '/' && peek(1) == '*') {
        auto end = s_.find("*/", i_ + 2);
        if (end == std::string_view::npos) return std::nullopt;
        i_ = end + 2;
      } else if (c == '\'' || c == '"') {
        if (!quoted(c)) return std::nullopt;
      } else if (c == '`') {
        auto end = s_.find('`', i_ + 1);
        if (end == std::string_view::npos) return std::nullopt;
        out_.push_back({Tok::kQuotedIdent, std::string(s_.substr(i_ + 1, end - i_ - 1)), {}});
        i_ = end + 1;
      } else if (is_digit(c) || (c == '.' && is_digit(peek(1)) && !after_name())) {
        number(false);
      } else if (c == '-' && (is_digit(peek(1)) || (peek(1) == '.' && is_digit(peek(2)))) && sign_allowed()) {
        number(true);
      } else if (is_word_start(c)) {
        auto start = i_;
        while (i_ < s_.size() && is_word_char(s_[i_])) ++i_;
        auto word = s_.substr(start, i_ - start);
        out_.push_back({Tok::kWord, std::string(word), upper_of(word)});
      } else if (c == '(') {
        out_.push_back({Tok::kLParen, "(", {}});
        ++i_;
      } else if (c == ')') {
        out_.push_back({Tok::kRParen, ")", {}});
        ++i_;
      } else {
        out_.push_back({Tok::kPunct, std::string(1, c), {}});
        ++i_;
      }
    }
    return std::move(out_);
  }

 private:
  char peek(std::size_t k) const { return i_ + k < s_.size() ? s_[i_ + k] : '\0'; }

  bool after_name() const {
    return !out_.empty() && (out_.back().kind == Tok::kWord || out_.back().kind == Tok::kQuotedIdent);
  }

  bool sign_allowed() const {
    if (out_.empty()) return true;
    const auto& t = out_.back();
    switch (t.kind) {
      case Tok::kPunct: return t.text != ".";
      case Tok::kLParen: return true;
      case Tok::kWord: return sign_keywords().count(t.upper) > 0;
      default: return false;
    }
  }

  bool quoted(char q) {
    std::string lit;
    ++i_;
    while (i_ < s_.size()) {
      char d = s_[i_];
      if (d == '\\' && i_ + 1 < s_.size()) {
        char e = s_[i_ + 1];
        switch (e) {
          case 'n': lit.push_back('\n'); break;
          case 't': lit.push_back('\t'); break;
          case 'r': lit.push_back('\r'); break;
          case '0': lit.push_back('\0'); break;
          default: lit.push_back(e); break;
        }
        i_ += 2;
      } else if (d == q) {
        if (peek(1) == q) {
          lit.push_back(q);
          i_ += 2;
        } else {
          ++i_;
          out_.push_back({Tok::kString, std::move(lit), {}});
          return true;
        }
      } else {
        lit.push_back(d);
        ++i_;
      }
    }
    return false;  // unterminated
  }

  void number(bool negative) {
    auto start = i_;
    if (negative) ++i_;
    if (s_[i_] == '0' && (peek(1) == 'x' || peek(1) == 'X') && std::isxdigit(static_cast<unsigned char>(peek(2)))) {
      i_ += 2;
      while (i_ < s_.size() && std::isxdigit(static_cast<unsigned char>(s_[i_]))) ++i_;
    } else {
      while (i_ < s_.size() && is_digit(s_[i_])) ++i_;
      if (i_ < s_.size() && s_[i_] == '.' && is_digit(peek(1))) {
        ++i_;
        while (i_ < s_.size() && is_digit(s_[i_])) ++i_;
      }
      if (i_ < s_.size() && (s_[i_] == 'e' || s_[i_] == 'E')) {
        std::size_t k = 1;
        if (peek(1) == '+' || peek(1) == '-') k = 2;
        if (is_digit(peek(k))) {
          i_ += k;
          while (i_ < s_.size() && is_digit(s_[i_])) ++i_;
        }
      }
    }
    if (!negative && i_ < s_.size() && is_word_char(s_[i_])) {
      // Identifier beginning with digits, e.g. 1st_table.
      while (i_ < s_.size() && is_word_char(s_[i_])) ++i_;
      auto word = s_.substr(start, i_ - start);
      out_.push_back({Tok::kWord, std::string(word), upper_of(word)});
      return;
    }
    out_.push_back({Tok::kNumber, std::string(s_.substr(start, i_ - start)), {}});
  }

  std::string_view s_;
  std::size_t i_ = 0;
  std::vector<Token> out_;
};

bool is_name(const Token& t) { return t.kind == Tok::kWord || t.kind == Tok::kQuotedIdent; }

// Reads a possibly qualified name at tokens[i]; returns the last component.
std::string read_table(const std::vector<Token>& t, std::size_t i) {
  if (i >= t.size() || !is_name(t[i])) return {};
  std::string name = t[i].text;
  while (i + 2 < t.size() && t[i + 1].kind == Tok::kPunct && t[i + 1].text == "." && is_name(t[i + 2])) {
    name = t[i + 2].text;
    i += 2;
  }
  return name;
}

std::size_t skip_words(const std::vector<Token>& t, std::size_t i, std::initializer_list<std::string_view> words) {
  while (i < t.size() && t[i].kind == Tok::kWord) {
    bool hit = false;
    for (auto w : words) hit |= t[i].upper == w;
    if (!hit) break;
    ++i;
  }
  return i;
}

std::optional<std::size_t> top_level_word(const std::vector<Token>& t, std::size_t from, std::string_view word) {
  int depth = 0;
  for (std::size_t i = from; i < t.size(); ++i) {
    if (t[i].kind == Tok::kLParen) ++depth;
    else if (t[i].kind == Tok::kRParen) --depth;
    else if (depth == 0 && t[i].kind == Tok::kWord && t[i].upper == word) return i;
  }
  return std::nullopt;
}

}  // namespace

LexedQuery lex_sql(std::string_view raw) {
  LexedQuery q;
  q.raw = std::string(raw);
  auto tokens = Lexer(raw).run();
  if (!tokens) return q;
  const auto& t = *tokens;

  std::size_t v = 0;
  while (v < t.size() && t[v].kind == Tok::kLParen) ++v;
  if (v >= t.size() || t[v].kind != Tok::kWord) return q;
  const auto& verb = t[v].upper;
  if (verb == "INSERT" || verb == "REPLACE") {
    // REPLACE INTO is an insert that may overwrite; both write rows.
    q.verb = SqlVerb::kInsert;
    q.table = read_table(t, skip_words(t, v + 1, {"LOW_PRIORITY", "DELAYED", "HIGH_PRIORITY", "IGNORE", "INTO"}));
  } else if (verb == "UPDATE") {
    q.verb = SqlVerb::kUpdate;
    q.table = read_table(t, skip_words(t, v + 1, {"LOW_PRIORITY", "IGNORE"}));
  } else if (verb == "DELETE" || verb == "SELECT") {
    q.verb = verb == "DELETE" ? SqlVerb::kDelete : SqlVerb::kSelect;
    if (auto from = top_level_word(t, v + 1, "FROM")) q.table = read_table(t, *from + 1);
  } else {
    q.verb = SqlVerb::kOther;
  }

  std::size_t where_begin = t.size(), where_end = t.size();
  if (auto where = top_level_word(t, v + 1, "WHERE")) {
    where_begin = *where + 1;
    int depth = 0;
    for (std::size_t i = where_begin; i < t.size(); ++i) {
      if (t[i].kind == Tok::kLParen) ++depth;
      else if (t[i].kind == Tok::kRParen) --depth;
      else if (depth <= 0 && ((t[i].kind == Tok::kPunct && t[i].text == ";") ||
                              (t[i].kind == Tok::kWord &&
                               (t[i].upper == "ORDER" || t[i].upper == "GROUP" || t[i].upper == "LIMIT" ||
                                t[i].upper == "HAVING" || t[i].upper == "UNION" || t[i].upper == "RETURNING")))) {
        where_end = i;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].kind != Tok::kString && t[i].kind != Tok::kNumber) continue;
    q.all_literals.push_back(t[i].text);
    if (i >= where_begin && i < where_end) q.where_literals.push_back(t[i].text);
  }
  return q;
}

}  // namespace acfuzz
