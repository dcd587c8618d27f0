#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace acfuzz {

enum class ErrorCode {
  kConfig,
  kMalformedUrl,
  kPersistence,
  kLoginFailed,
  kNetwork,
  kSchema,
  kSidecarTimeout,
  kCampaignIdle,
  kPortInUse,
  kEmptyCorpus,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Seeded generator with platform-independent derived distributions, so a
// fixed seed reproduces the same campaign on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform double in [0, 1).
  double unit();
  bool chance(double p) { return unit() < p; }
  // Random RFC 4122 version-4 UUID string.
  std::string uuid();
  std::string lowercase(std::size_t length);

 private:
  std::mt19937_64 engine_;
};

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool starts_with_digit(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split(std::string_view s, char sep);

std::string sha256_hex(std::string_view data);

// Combines a campaign seed with a role index into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace acfuzz
