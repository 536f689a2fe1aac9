#pragma once

// Brute-force references: finite differences, exact enumeration over SGD
// indices, normal-equation least-norm solves and the low-rank initializer.

#include "overparam/common.hpp"
#include "overparam/models.hpp"
#include "overparam/potentials.hpp"
#include "overparam/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace overparam {

struct OracleReport {
  std::string quantity;
  double main_value = 0.0;
  double oracle_value = 0.0;
  double relative_error = 0.0;
};

inline OracleReport compare(std::string quantity, double main_value, double oracle_value) {
  return {std::move(quantity), main_value, oracle_value, relative_gap(main_value, oracle_value)};
}

/// ||A - B||_F / (1 + max(||A||_F, ||B||_F)).
inline double relative_matrix_gap(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "relative_matrix_gap: shape mismatch");
  return (a - b).norm() / (1.0 + std::max(a.norm(), b.norm()));
}

inline double default_fd_step(const ParamVector& theta) {
  return 1e-6 * (1.0 + (theta.size() ? theta.cwiseAbs().maxCoeff() : 0.0));
}

/// Central differences (f(theta + h e_j) - f(theta - h e_j)) / 2h, column by column.
inline Matrix fd_jacobian(const Model& model, const ParamVector& theta, std::optional<double> h = std::nullopt) {
  detail::check_theta(model, theta);
  const double step = h.value_or(default_fd_step(theta));
  require(step > 0.0, "fd_jacobian: h must be positive");
  Matrix J(model.sample_count(), model.param_dim());
  ParamVector probe = theta;
  for (Index j = 0; j < model.param_dim(); ++j) {
    probe[j] = theta[j] + step;
    const Vector up = model.predict(probe);
    probe[j] = theta[j] - step;
    const Vector down = model.predict(probe);
    probe[j] = theta[j];
    J.col(j) = (up - down) / (2.0 * step);
  }
  return J;
}

/// Central-difference gradient of a scalar function.
inline ParamVector fd_gradient(const std::function<double(const ParamVector&)>& fn, const ParamVector& theta,
                               std::optional<double> h = std::nullopt) {
  const double step = h.value_or(default_fd_step(theta));
  ParamVector g(theta.size());
  ParamVector probe = theta;
  for (Index j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + step;
    const double up = fn(probe);
    probe[j] = theta[j] - step;
    const double down = fn(probe);
    probe[j] = theta[j];
    g[j] = (up - down) / (2.0 * step);
  }
  return g;
}

/// (1/n) sum_i g(theta - eta G(theta; i)), with G the per-sample gradient.
inline double enumerate_sgd_expectation(const Model& model, const ParamVector& theta, double eta,
                                        const std::function<double(const ParamVector&)>& g) {
  detail::check_theta(model, theta);
  const Index n = model.sample_count();
  if (n > kEnumerationCap) {
    throw CapacityError("enumerate_sgd_expectation: n = " + std::to_string(n) + " exceeds the enumeration cap");
  }
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += g(theta - eta * per_sample_gradient(model, theta, i));
  return total / static_cast<double>(n);
}

/// X^T (X X^T)^{-1} z through a Cholesky factorization of the Gram matrix.
inline ParamVector pseudo_inverse_solution(const Matrix& X, const Vector& z) {
  require_dim(z.size(), X.rows(), "pseudo_inverse_solution: right-hand side");
  const Matrix gram = X * X.transpose();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw RankDeficientError("pseudo_inverse_solution: X X^T is singular");
  const Vector d = llt.matrixL().toDenseMatrix().diagonal();
  if (d.size() > 0 && !(d.minCoeff() > 1e-10 * d.maxCoeff())) {
    throw RankDeficientError("pseudo_inverse_solution: X X^T is numerically singular");
  }
  return X.transpose() * llt.solve(z);
}

/// Singular-value interval [sqrt(||y||)/(rn)^(1/4), 2 sqrt(||y||)/(rn)^(1/4)].
struct InitInterval {
  double low = 0.0;
  double high = 0.0;
};

inline InitInterval lowrank_init_interval(Index r, Index n, double y_norm) {
  require(r >= 1 && n >= 1 && y_norm >= 0.0, "lowrank_init_interval: need r, n >= 1 and ||y|| >= 0");
  const double scale = std::sqrt(y_norm) / std::pow(static_cast<double>(r) * static_cast<double>(n), 0.25);
  return {scale, 2.0 * scale};
}

/// Theta0 = U diag(s) V^T with U (d x r) and V (r x r) from QR of Gaussian
/// matrices and s uniform in the interval. Returned column-major, flattened.
inline ParamVector lowrank_init(Index d, Index r, Index n, double y_norm, std::uint64_t seed) {
  require(r >= 1 && r <= d, "lowrank_init: need 1 <= r <= d");
  require(n >= 1, "lowrank_init: need n >= 1");
  const InitInterval iv = lowrank_init_interval(r, n, y_norm);
  Rng rng(seed);
  const Matrix gu = rng.normal_matrix(d, r);
  const Matrix gv = rng.normal_matrix(r, r);
  const Matrix U = Eigen::HouseholderQR<Matrix>(gu).householderQ() * Matrix::Identity(d, r);
  const Matrix V = Eigen::HouseholderQR<Matrix>(gv).householderQ() * Matrix::Identity(r, r);
  Vector s(r);
  for (Index k = 0; k < r; ++k) s[k] = iv.low + (iv.high - iv.low) * rng.uniform();
  const Matrix Theta = U * s.asDiagonal() * V.transpose();

  Eigen::JacobiSVD<Matrix> svd(Theta);
  const Vector& sv = svd.singularValues();
  const double slack = 1e-12 * (1.0 + iv.high);
  if (sv.minCoeff() < iv.low - slack || sv.maxCoeff() > iv.high + slack) {
    throw Error("lowrank_init: singular values left the target interval");
  }
  return Eigen::Map<const ParamVector>(Theta.data(), Theta.size());
}

}  // namespace overparam
