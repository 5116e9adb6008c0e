#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace netcal {

// Library-wide error type. Kind::Validation covers bad inputs and malformed
// files (CLI exit code 1); Kind::Runtime covers I/O and internal failures
// (exit code 2).
class Error : public std::runtime_error {
 public:
  enum class Kind { Validation, Runtime };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw Error(Error::Kind::Validation, msg);
}

[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw Error(Error::Kind::Runtime, msg);
}

// Derives an independent RNG seed from (seed, salt). Used wherever per-item
// determinism must not depend on shared RNG state (per-anchor triplet draws,
// per-tree subsamples, per-run scenario seeds).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace netcal
