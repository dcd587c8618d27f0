#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace acfuzz {

enum class SqlVerb { kInsert, kUpdate, kDelete, kSelect, kOther };

std::string_view to_string(SqlVerb v);

struct LexedQuery {
  std::string raw;
  SqlVerb verb = SqlVerb::kOther;
  std::string table;                        // unqualified, unquoted
  std::vector<std::string> all_literals;    // source order, quotes stripped
  std::vector<std::string> where_literals;  // literals of the top-level WHERE clause

  bool is_dml() const {
    return verb == SqlVerb::kInsert || verb == SqlVerb::kUpdate || verb == SqlVerb::kDelete;
  }
};

// Case-insensitive scan; never throws. Unlexable input (e.g. an unterminated
// string) yields verb OTHER with no literals.
LexedQuery lex_sql(std::string_view raw);

}  // namespace acfuzz
