#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace overparam {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flat parameter vector. Matrix-shaped parameters are flattened by the model
/// that owns them (see LowRankModel and ShallowNetModel for the layouts).
using ParamVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition (bad argument, ordering, or range).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Problem too large for a dense or enumerating routine.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractError(what);
}

inline void require_dim(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

/// |a-b| / (1 + max(|a|,|b|)).
inline double relative_gap(double a, double b) {
  return std::abs(a - b) / (1.0 + std::max(std::abs(a), std::abs(b)));
}

}  // namespace overparam
