#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "acfuzz/http.hpp"
#include "acfuzz/url.hpp"

namespace acfuzz {

enum class CandidateKind { kUnset, kBolaCandidate, kBflaCandidate };
enum class ParamClass { kUnclassified, kReference, kLessImportant, kSecurityMeasure };
enum class Origin { kUserGen, kSysGen };
enum class ValueKind { kNumeric, kText };

std::string_view to_string(CandidateKind k);
std::string_view to_string(ParamClass c);
std::string_view to_string(Origin o);
std::string_view to_string(ValueKind k);
CandidateKind parse_candidate_kind(std::string_view s);
ParamClass parse_param_class(std::string_view s);

// NUMERIC iff the first character is a decimal digit.
ValueKind value_kind(std::string_view value);

using RoleSet = std::set<std::string>;

struct RequestRecord {
  std::string id;
  Method method = Method::kGet;
  Url url;
  Headers headers;
  std::vector<Param> body_params;  // top-level pairs plus flattened children
  RoleSet role_labels;
  std::map<std::string, CandidateKind> candidate_kinds;  // keyed by checker role
  std::map<std::string, ParamClass> param_classes;

  CandidateKind candidate_kind(std::string_view role) const;
  ParamClass param_class(std::string_view name) const;
  std::size_t reference_count() const;
  std::optional<std::string> referer() const;
  // URL query params followed by body params.
  std::vector<Param> all_params() const;
  std::string body() const { return encode_form(body_params); }
  HttpRequest to_http() const;
};

// Builds a record from wire data; flattens nested body values. Throws
// Error(kMalformedUrl).
RequestRecord make_record(Method method, std::string_view url, Headers headers,
                          std::string_view body);

// Method, base URL, path, sorted query names and sorted body names. Values
// and headers never participate.
std::string uniqueness_key(const RequestRecord& record);

nlohmann::json to_json(const RequestRecord& record);
RequestRecord record_from_json(const nlohmann::json& j);

struct ParamEntry {
  std::string name;
  std::map<std::string, RoleSet> values;  // value -> roles that produced it
  RoleSet role_labels;
  Origin origin = Origin::kSysGen;
  ParamClass param_class = ParamClass::kUnclassified;
};

nlohmann::json to_json(const ParamEntry& entry);
ParamEntry param_from_json(const nlohmann::json& j);

enum class StoreOutcome { kNew, kLabelAdded, kDuplicate };
std::string_view to_string(StoreOutcome o);

// Role-labelled request and parameter stores. Writes serialize through one
// lock and are appended to requests.jsonl / params.jsonl when a directory is
// configured; on load the last line per id (or name) wins.
class Corpus {
 public:
  // With a directory, existing corpus files there are loaded (missing files
  // are an empty corpus) and new state is appended to them.
  explicit Corpus(std::string sentinel, std::optional<std::filesystem::path> dir = std::nullopt);

  StoreOutcome store_request(RequestRecord record, const std::string& role);

  std::vector<RequestRecord> snapshot() const;
  std::optional<RequestRecord> find(std::string_view id) const;
  std::size_t size() const;

  void set_candidate_kind(std::string_view id, const std::string& checker_role, CandidateKind kind);
  // Writes the classes to the record and merges them into the param corpus
  // (SECURITY_MEASURE > REFERENCE > LESS_IMPORTANT when requests disagree).
  void set_param_classes(std::string_view id, const std::map<std::string, ParamClass>& classes);

  // All values of `kind` from REFERENCE params, sorted; when exclude_role is
  // set, only values no REFERENCE param saw under that role. nullopt means
  // POOL_EMPTY.
  std::optional<std::vector<std::string>> reference_value_pool(
      ValueKind kind, const std::optional<std::string>& exclude_role = std::nullopt) const;
  // Values of REFERENCE params observed under `role`.
  std::set<std::string> reference_values_of_role(std::string_view role) const;
  // Values of one param observed under `role`, preferring values no other
  // role produced.
  std::vector<std::string> account_values(std::string_view param, std::string_view role) const;

  std::optional<ParamEntry> param(std::string_view name) const;
  std::vector<ParamEntry> params() const;
  const std::string& sentinel() const { return sentinel_; }

 private:
  void load(const std::filesystem::path& dir);
  void upsert_param_locked(const Param& p, const std::string& role);
  void append_record_locked(const RequestRecord& r);
  void append_param_locked(const ParamEntry& e);
  void append_line(const std::filesystem::path& file, const nlohmann::json& j);

  std::string sentinel_;
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mu_;
  std::vector<RequestRecord> records_;                   // insertion order
  std::unordered_map<std::string, std::size_t> by_key_;  // uniqueness key -> index
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, ParamEntry> params_;
};

}  // namespace acfuzz
