#include "acfuzz/plan.hpp"

namespace acfuzz {

std::string_view to_string(TestKind k) {
  return k == TestKind::kFunctionLevel ? "FUNCTION_LEVEL" : "OBJECT_LEVEL";
}

std::string_view to_string(ValueSource s) {
  switch (s) {
    case ValueSource::kPool: return "POOL";
    case ValueSource::kRandom: return "RANDOM";
    case ValueSource::kAccountUnique: return "ACCOUNT_UNIQUE";
  }
  return "POOL";
}

RequestRecord MutationPlan::mutated() const {
  RequestRecord r = base_record;
  for (const auto& s : substitutions) {
    auto& params = s.in_query ? r.url.query : r.body_params;
    for (auto& p : params) {
      if (p.name == s.param && p.parent == s.parent) {
        p.value = s.new_value;
        break;
      }
    }
  }
  return r;
}

std::set<std::string> MutationPlan::submitted_values() const {
  std::set<std::string> out;
  auto r = mutated();
  for (const auto& p : r.all_params()) {
    if (p.value.empty()) continue;
    if (!p.parent && has_children(r.body_params, p.name)) continue;
    out.insert(p.value);
  }
  return out;
}

std::set<std::string> MutationPlan::substituted_values() const {
  std::set<std::string> out;
  for (const auto& s : substitutions)
    if (s.source != ValueSource::kAccountUnique && !s.new_value.empty()) out.insert(s.new_value);
  return out;
}

}  // namespace acfuzz
