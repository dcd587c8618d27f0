#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "acfuzz/corpus.hpp"

namespace acfuzz {

enum class TestKind { kFunctionLevel, kObjectLevel };
enum class ValueSource { kPool, kRandom, kAccountUnique };

std::string_view to_string(TestKind k);
std::string_view to_string(ValueSource s);

struct Substitution {
  std::string param;
  std::optional<std::string> parent;  // composite body field holding the param
  bool in_query = false;
  std::string old_value;
  std::string new_value;
  ValueSource source = ValueSource::kPool;
};

struct MutationPlan {
  RequestRecord base_record;
  TestKind test_kind = TestKind::kFunctionLevel;
  std::vector<Substitution> substitutions;
  std::string covid;
  bool low_value = false;  // object-level test without any reference param

  // The base record with every substitution applied.
  RequestRecord mutated() const;
  // Non-empty parameter values of the mutated request.
  std::set<std::string> submitted_values() const;
  // New values from POOL or RANDOM substitutions (account swaps excluded).
  std::set<std::string> substituted_values() const;
};

}  // namespace acfuzz
