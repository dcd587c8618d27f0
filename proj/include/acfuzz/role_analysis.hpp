#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "acfuzz/collector.hpp"
#include "acfuzz/corpus.hpp"

namespace acfuzz {

struct RoleRank {
  std::string name;
  int rank = 0;
};

// The strictly highest-ranked role. Throws Error(kConfig) for fewer than two
// roles or a tie at the top.
std::string select_target(const std::vector<RoleRank>& roles);
std::vector<RoleRank> checker_roles(const std::vector<RoleRank>& roles, const std::string& target);

struct CandidatePartition {
  std::set<std::string> bfla;  // record ids
  std::set<std::string> bola;
};

// Pure classification of one record for one checker role.
CandidateKind classify_candidate(const RequestRecord& record, const std::string& checker_role,
                                 const std::map<std::string, int>& ranks);

// Classifies every record for the checker role and writes the kinds back.
CandidatePartition mark_candidates(Corpus& corpus, const std::string& checker_role,
                                   const std::map<std::string, int>& ranks);

}  // namespace acfuzz
