#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cm {

// Thrown when tensor/lattice shapes do not conform to an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown on malformed or unreadable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown on invalid user-facing configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a numeric invariant breaks at runtime (non-finite values etc.).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_str(const std::vector<int>& shape);

[[noreturn]] void throw_shape_error(const std::string& op, const std::vector<int>& a,
                                    const std::vector<int>& b);

// Worker-thread cap: CYCLEMORPH_THREADS if set, else the OpenMP default.
int thread_count();

// Deterministic seed derivation (splitmix64 mixing); independent of platform.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

inline std::int64_t numel_of(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

}  // namespace cm
