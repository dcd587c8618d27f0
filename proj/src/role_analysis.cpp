#include "acfuzz/role_analysis.hpp"

#include <algorithm>

#include "acfuzz/util.hpp"

namespace acfuzz {

std::string select_target(const std::vector<RoleRank>& roles) {
  if (roles.size() < 2) throw Error(ErrorCode::kConfig, "at least two roles are required");
  auto top = std::max_element(roles.begin(), roles.end(),
                              [](const RoleRank& a, const RoleRank& b) { return a.rank < b.rank; });
  auto ties = std::count_if(roles.begin(), roles.end(), [&](const RoleRank& r) { return r.rank == top->rank; });
  if (ties > 1)
    throw Error(ErrorCode::kConfig, "rank tie among top roles at rank " + std::to_string(top->rank));
  return top->name;
}

std::vector<RoleRank> checker_roles(const std::vector<RoleRank>& roles, const std::string& target) {
  std::vector<RoleRank> out;
  std::copy_if(roles.begin(), roles.end(), std::back_inserter(out),
               [&](const RoleRank& r) { return r.name != target; });
  return out;
}

CandidateKind classify_candidate(const RequestRecord& record, const std::string& checker_role,
                                 const std::map<std::string, int>& ranks) {
  if (record.role_labels.count(checker_role)) return CandidateKind::kBolaCandidate;
  auto own = ranks.find(checker_role);
  int checker_rank = own == ranks.end() ? 0 : own->second;
  for (const auto& label : record.role_labels) {
    auto it = ranks.find(label);
    if (it != ranks.end() && it->second > checker_rank) return CandidateKind::kBflaCandidate;
  }
  // Only lower (or unranked) roles produced it: reachable in principle.
  return CandidateKind::kBolaCandidate;
}

CandidatePartition mark_candidates(Corpus& corpus, const std::string& checker_role,
                                   const std::map<std::string, int>& ranks) {
  CandidatePartition part;
  for (const auto& r : corpus.snapshot()) {
    auto kind = classify_candidate(r, checker_role, ranks);
    (kind == CandidateKind::kBflaCandidate ? part.bfla : part.bola).insert(r.id);
    corpus.set_candidate_kind(r.id, checker_role, kind);
  }
  return part;
}

}  // namespace acfuzz
