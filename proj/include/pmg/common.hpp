#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pmg {

using Real = double;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Batches are column-major throughout: one sample per column.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed argument.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Step index with no predecessor (t = 1 where t - 1 is required).
class BoundaryError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Invalid or inconsistent run configuration, missing referenced files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// SplitMix64 finalizer; used to derive independent per-item seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pmg
