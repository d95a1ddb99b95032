#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace spur {

inline constexpr const char* kVersion = SPUR_VERSION;

/// Base of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller-supplied data or configuration violates a documented contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was read but its contents are malformed.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// xoshiro256** seeded through splitmix64. Same output on every platform,
/// which std::mt19937 + std::*_distribution cannot promise.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (both variates used).
  double normal();

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Number of worker threads: SPUR_THREADS if set and positive, else hardware.
unsigned worker_count();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one thread,
/// so results written per index are deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// 64-bit FNV-1a, used for provenance hashes.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace spur
