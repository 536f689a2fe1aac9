#pragma once

// Residual maps f: R^p -> R^n with exact Jacobians.
//
// Every model exposes the prediction f(theta), the labels y, the n x p
// Jacobian, per-sample access and the average Jacobian along a segment.
// Models are immutable after construction; all evaluations are pure.

#include "overparam/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace overparam {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Strictly increasing scalar nonlinearity with stored derivative bounds
/// gamma <= phi'(z) <= Gamma and |phi''(z)| <= M.
class Activation {
 public:
  enum class Kind { Identity, TanhLinear, SoftplusLinear };

  static Activation identity() { return Activation(Kind::Identity, 0.0, 1.0, 1.0, 0.0); }

  /// phi(z) = z + c tanh(z). phi'(z) = 1 + c sech^2(z) lies in (1, 1+c];
  /// the stored lower bound is the looser 1 - c.
  static Activation tanh_linear(double c) {
    require(c >= 0.0 && c < 1.0, "tanh_linear: c must lie in [0, 1)");
    return Activation(Kind::TanhLinear, c, 1.0 - c, 1.0 + c, 0.8 * c);
  }

  /// phi(z) = (1 - c) softplus(z) + c z, a non-decreasing function with a
  /// small linear component mixed in. phi' lies in (c, 1), |phi''| <= (1-c)/4.
  static Activation softplus_linear(double c) {
    require(c > 0.0 && c <= 1.0, "softplus_linear: c must lie in (0, 1]");
    return Activation(Kind::SoftplusLinear, c, c, 1.0, 0.25 * (1.0 - c));
  }

  double phi(double z) const {
    switch (kind_) {
      case Kind::Identity: return z;
      case Kind::TanhLinear: return z + c_ * std::tanh(z);
      case Kind::SoftplusLinear: return (1.0 - c_) * softplus(z) + c_ * z;
    }
    return z;
  }

  double dphi(double z) const {
    switch (kind_) {
      case Kind::Identity: return 1.0;
      case Kind::TanhLinear: {
        const double t = std::tanh(z);
        return 1.0 + c_ * (1.0 - t * t);
      }
      case Kind::SoftplusLinear: return (1.0 - c_) * logistic(z) + c_;
    }
    return 1.0;
  }

  double ddphi(double z) const {
    switch (kind_) {
      case Kind::Identity: return 0.0;
      case Kind::TanhLinear: {
        const double t = std::tanh(z);
        return -2.0 * c_ * t * (1.0 - t * t);
      }
      case Kind::SoftplusLinear: {
        const double s = logistic(z);
        return (1.0 - c_) * s * (1.0 - s);
      }
    }
    return 0.0;
  }

  /// Divided difference (phi(a) - phi(b)) / (a - b). Close arguments use
  /// phi' at the midpoint, whose error is O(M' gap^2) instead of round-off / gap.
  double secant(double a, double b) const {
    const double gap = a - b;
    if (std::abs(gap) <= 1e-5 * (1.0 + std::abs(a))) return dphi(0.5 * (a + b));
    return (phi(a) - phi(b)) / gap;
  }

  Kind kind() const { return kind_; }
  double parameter() const { return c_; }
  double gamma() const { return gamma_; }
  double Gamma() const { return Gamma_; }
  double M() const { return M_; }

  std::string name() const {
    switch (kind_) {
      case Kind::Identity: return "identity";
      case Kind::TanhLinear: return "tanh_linear";
      case Kind::SoftplusLinear: return "softplus_linear";
    }
    return "identity";
  }

 private:
  Activation(Kind kind, double c, double gamma, double Gamma, double M)
      : kind_(kind), c_(c), gamma_(gamma), Gamma_(Gamma), M_(M) {}

  static double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
  static double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  Kind kind_;
  double c_;
  double gamma_;
  double Gamma_;
  double M_;
};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadratureRule {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

/// Gauss-Legendre rule mapped to [0, 1], nodes found by Newton iteration on P_m.
inline QuadratureRule gauss_legendre(int m) {
  require(m >= 1, "gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.resize(m);
  rule.weights.resize(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      const double pm = m == 1 ? x : p1;
      const double pm1 = m == 1 ? 1.0 : p0;
      dp = m * (x * pm - pm1) / (x * x - 1.0);
      const double dx = pm / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[m - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = rule.weights[m - 1 - i] = 0.5 * w;
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Model interface
// ---------------------------------------------------------------------------

/// Closed-form Jacobian envelope available for some families.
struct JacobianEnvelope {
  double alpha = 0.0;
  double beta = 0.0;
  double row_bound = 0.0;
  double lipschitz = 0.0;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string family() const = 0;
  virtual Index param_dim() const = 0;
  virtual Index sample_count() const = 0;
  virtual const Vector& labels() const = 0;

  /// f(theta), length n.
  virtual Vector predict(const ParamVector& theta) const = 0;
  virtual double predict_one(const ParamVector& theta, Index i) const = 0;
  virtual Matrix jacobian_at(const ParamVector& theta) const = 0;
  virtual Vector jacobian_row_at(const ParamVector& theta, Index i) const = 0;

  /// Integral of J along the segment from b to a. The base version uses
  /// Gauss-Legendre quadrature; families with an exact form override it.
  virtual Matrix average_jacobian_between(const ParamVector& a, const ParamVector& b) const {
    const QuadratureRule& rule = quadrature();
    Matrix acc = Matrix::Zero(sample_count(), param_dim());
    const Vector diff = a - b;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      acc += rule.weights[q] * jacobian_at(b + rule.nodes[q] * diff);
    }
    return acc;
  }

  /// J(theta)^T r. Families with a cheaper contraction override it.
  virtual ParamVector gradient_from_residual(const ParamVector& theta, const Vector& r) const {
    return jacobian_at(theta).transpose() * r;
  }

  virtual std::optional<JacobianEnvelope> analytic_envelope() const { return std::nullopt; }

  void set_quadrature_nodes(int m) { quadrature_ = gauss_legendre(m); }
  const QuadratureRule& quadrature() const { return quadrature_; }

 protected:
  Model() : quadrature_(gauss_legendre(16)) {}
  Model(const Model&) = default;
  Model& operator=(const Model&) = default;

 private:
  QuadratureRule quadrature_;
};

namespace detail {
inline void check_theta(const Model& m, const ParamVector& theta) {
  require_dim(theta.size(), m.param_dim(), "parameter vector");
}
inline void check_index(const Model& m, Index i) {
  if (i < 0 || i >= m.sample_count()) {
    throw ContractError("sample index " + std::to_string(i) + " out of range [0, " +
                        std::to_string(m.sample_count()) + ")");
  }
}
inline void check_labels(const Vector& y, Index n) { require_dim(y.size(), n, "labels"); }
inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}
inline double smallest_row_singular_value(const Matrix& m) {
  if (m.rows() == 0 || m.rows() > m.cols()) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(m.rows() - 1);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// r(theta) = f(theta) - y.
inline Vector residual(const Model& model, const ParamVector& theta) {
  detail::check_theta(model, theta);
  return model.predict(theta) - model.labels();
}

inline Matrix jacobian(const Model& model, const ParamVector& theta) {
  detail::check_theta(model, theta);
  return model.jacobian_at(theta);
}

/// 1/2 ||f(theta) - y||^2.
inline double loss(const Model& model, const ParamVector& theta) {
  return 0.5 * residual(model, theta).squaredNorm();
}

/// J(theta)^T (f(theta) - y).
inline ParamVector gradient(const Model& model, const ParamVector& theta) {
  detail::check_theta(model, theta);
  const Vector r = model.predict(theta) - model.labels();
  return model.gradient_from_residual(theta, r);
}

/// Gradient of the i-th sample's squared misfit: r_i(theta) * grad f_i(theta).
inline ParamVector per_sample_gradient(const Model& model, const ParamVector& theta, Index i) {
  detail::check_theta(model, theta);
  detail::check_index(model, i);
  const double ri = model.predict_one(theta, i) - model.labels()[i];
  return ri * model.jacobian_row_at(theta, i);
}

/// Average Jacobian J(a, b) with f(a) - f(b) = J(a, b)(a - b).
inline Matrix average_jacobian(const Model& model, const ParamVector& a, const ParamVector& b) {
  detail::check_theta(model, a);
  detail::check_theta(model, b);
  return model.average_jacobian_between(a, b);
}

// ---------------------------------------------------------------------------
// Linear regression: f(theta) = X theta
// ---------------------------------------------------------------------------

class LinearModel final : public Model {
 public:
  LinearModel(Matrix X, Vector y) : X_(std::move(X)), y_(std::move(y)) {
    detail::check_labels(y_, X_.rows());
  }

  std::string family() const override { return "linear"; }
  Index param_dim() const override { return X_.cols(); }
  Index sample_count() const override { return X_.rows(); }
  const Vector& labels() const override { return y_; }
  const Matrix& data() const { return X_; }

  Vector predict(const ParamVector& theta) const override { return X_ * theta; }
  double predict_one(const ParamVector& theta, Index i) const override { return X_.row(i).dot(theta); }
  Matrix jacobian_at(const ParamVector&) const override { return X_; }
  Vector jacobian_row_at(const ParamVector&, Index i) const override { return X_.row(i).transpose(); }
  Matrix average_jacobian_between(const ParamVector&, const ParamVector&) const override { return X_; }

  std::optional<JacobianEnvelope> analytic_envelope() const override {
    JacobianEnvelope env;
    env.alpha = detail::smallest_row_singular_value(X_);
    env.beta = detail::spectral_norm(X_);
    env.row_bound = X_.rowwise().norm().maxCoeff();
    env.lipschitz = 0.0;
    return env;
  }

 private:
  Matrix X_;
  Vector y_;
};

// ---------------------------------------------------------------------------
// Generalized linear model: f(theta) = phi(X theta)
// ---------------------------------------------------------------------------

class GLMModel final : public Model {
 public:
  GLMModel(Matrix X, Vector y, Activation act) : X_(std::move(X)), y_(std::move(y)), act_(act) {
    detail::check_labels(y_, X_.rows());
  }

  std::string family() const override { return "glm"; }
  Index param_dim() const override { return X_.cols(); }
  Index sample_count() const override { return X_.rows(); }
  const Vector& labels() const override { return y_; }
  const Matrix& data() const { return X_; }
  const Activation& activation() const { return act_; }

  Vector predict(const ParamVector& theta) const override {
    Vector z = X_ * theta;
    for (Index i = 0; i < z.size(); ++i) z[i] = act_.phi(z[i]);
    return z;
  }
  double predict_one(const ParamVector& theta, Index i) const override {
    return act_.phi(X_.row(i).dot(theta));
  }

  /// diag(phi'(X theta)) X.
  Matrix jacobian_at(const ParamVector& theta) const override {
    const Vector z = X_ * theta;
    Matrix J = X_;
    for (Index i = 0; i < J.rows(); ++i) J.row(i) *= act_.dphi(z[i]);
    return J;
  }
  Vector jacobian_row_at(const ParamVector& theta, Index i) const override {
    return act_.dphi(X_.row(i).dot(theta)) * X_.row(i).transpose();
  }

  /// diag((phi(Xa) - phi(Xb)) / (Xa - Xb)) X, with phi' where the arguments coincide.
  Matrix average_jacobian_between(const ParamVector& a, const ParamVector& b) const override {
    const Vector za = X_ * a;
    const Vector zb = X_ * b;
    Matrix J = X_;
    for (Index i = 0; i < J.rows(); ++i) J.row(i) *= act_.secant(za[i], zb[i]);
    return J;
  }

  /// alpha = gamma sigma_min(X), beta = Gamma ||X||, B = Gamma max_i ||x_i||,
  /// L = M ||X||_{2,inf} ||X||.
  std::optional<JacobianEnvelope> analytic_envelope() const override {
    JacobianEnvelope env;
    const double row_max = X_.rowwise().norm().maxCoeff();
    const double op = detail::spectral_norm(X_);
    env.alpha = act_.gamma() * detail::smallest_row_singular_value(X_);
    env.beta = act_.Gamma() * op;
    env.row_bound = act_.Gamma() * row_max;
    env.lipschitz = act_.M() * row_max * op;
    return env;
  }

 private:
  Matrix X_;
  Vector y_;
  Activation act_;
};

// ---------------------------------------------------------------------------
// Burer-Monteiro low-rank regression: f_i(Theta) = trace(Theta^T X_i Theta)
// ---------------------------------------------------------------------------

/// Theta is d x r and stored column-major: theta[j * d + i] = Theta(i, j).
///
/// The Jacobian row for sample i is vect((X_i + X_i^T) Theta)^T, the exact
/// derivative for non-symmetric X_i.
class LowRankModel final : public Model {
 public:
  LowRankModel(std::vector<Matrix> Xs, Vector y, Index d, Index r)
      : Xs_(std::move(Xs)), y_(std::move(y)), d_(d), r_(r) {
    require(r_ >= 1 && r_ <= d_, "LowRankModel: need 1 <= r <= d");
    detail::check_labels(y_, static_cast<Index>(Xs_.size()));
    sym_.reserve(Xs_.size());
    for (const Matrix& X : Xs_) {
      require(X.rows() == d_ && X.cols() == d_, "LowRankModel: every X_i must be d x d");
      sym_.push_back(X + X.transpose());
    }
  }

  std::string family() const override { return "lowrank"; }
  Index param_dim() const override { return d_ * r_; }
  Index sample_count() const override { return static_cast<Index>(Xs_.size()); }
  const Vector& labels() const override { return y_; }
  Index d() const { return d_; }
  Index r() const { return r_; }
  const std::vector<Matrix>& inputs() const { return Xs_; }

  Eigen::Map<const Matrix> as_matrix(const ParamVector& theta) const {
    return Eigen::Map<const Matrix>(theta.data(), d_, r_);
  }

  // trace(Theta^T X Theta) = <X, Theta Theta^T>
  Vector predict(const ParamVector& theta) const override {
    const auto Theta = as_matrix(theta);
    const Matrix gram = Theta * Theta.transpose();
    Vector out(sample_count());
    for (Index i = 0; i < sample_count(); ++i) out[i] = Xs_[static_cast<std::size_t>(i)].cwiseProduct(gram).sum();
    return out;
  }

  double predict_one(const ParamVector& theta, Index i) const override {
    detail::check_index(*this, i);
    const auto Theta = as_matrix(theta);
    return (Theta.transpose() * Xs_[static_cast<std::size_t>(i)] * Theta).trace();
  }

  Matrix jacobian_at(const ParamVector& theta) const override {
    Matrix J(sample_count(), param_dim());
    for (Index i = 0; i < sample_count(); ++i) J.row(i) = jacobian_row_at(theta, i).transpose();
    return J;
  }

  Vector jacobian_row_at(const ParamVector& theta, Index i) const override {
    const Matrix G = sym_[static_cast<std::size_t>(i)] * as_matrix(theta);
    return Eigen::Map<const Vector>(G.data(), G.size());
  }

  /// sum_i r_i (X_i + X_i^T) Theta, without forming the n x dr Jacobian.
  ParamVector gradient_from_residual(const ParamVector& theta, const Vector& r) const override {
    Matrix weighted = Matrix::Zero(d_, d_);
    for (Index i = 0; i < sample_count(); ++i) weighted.noalias() += r[i] * sym_[static_cast<std::size_t>(i)];
    const Matrix G = weighted * as_matrix(theta);
    return Eigen::Map<const Vector>(G.data(), G.size());
  }

  /// J is affine in Theta, so the midpoint rule is exact.
  Matrix average_jacobian_between(const ParamVector& a, const ParamVector& b) const override {
    return jacobian_at(0.5 * (a + b));
  }

  /// Residual and Jacobian in one pass over the samples.
  std::pair<Vector, Matrix> residual_and_jacobian(const ParamVector& theta) const {
    const auto Theta = as_matrix(theta);
    Vector r(sample_count());
    Matrix J(sample_count(), param_dim());
    for (Index i = 0; i < sample_count(); ++i) {
      const Matrix G = sym_[static_cast<std::size_t>(i)] * Theta;
      // trace(Theta^T X Theta) = 1/2 <Theta, (X + X^T) Theta>
      r[i] = 0.5 * Theta.cwiseProduct(G).sum() - y_[i];
      J.row(i) = Eigen::Map<const Eigen::RowVectorXd>(G.data(), G.size());
    }
    return {std::move(r), std::move(J)};
  }

 private:
  std::vector<Matrix> Xs_;
  std::vector<Matrix> sym_;
  Vector y_;
  Index d_;
  Index r_;
};

// ---------------------------------------------------------------------------
// One-hidden-layer network: f(x; W) = v^T phi(W x), output weights fixed
// ---------------------------------------------------------------------------

/// W is k x d and stored row by row: theta[l * d + j] = W(l, j). The Jacobian
/// is the block row [v_1 J(w_1) ... v_k J(w_k)] with J(w) = diag(phi'(X w)) X.
class ShallowNetModel final : public Model {
 public:
  ShallowNetModel(Matrix X, Vector y, Vector v, Activation act)
      : X_(std::move(X)), y_(std::move(y)), v_(std::move(v)), act_(act) {
    detail::check_labels(y_, X_.rows());
    require(v_.size() >= 1, "ShallowNetModel: need at least one hidden unit");
    require(std::abs(v_.norm() - 1.0) <= 1e-12, "ShallowNetModel: output weights must have unit norm");
  }

  std::string family() const override { return "net"; }
  Index param_dim() const override { return hidden() * input_dim(); }
  Index sample_count() const override { return X_.rows(); }
  const Vector& labels() const override { return y_; }
  Index hidden() const { return v_.size(); }
  Index input_dim() const { return X_.cols(); }
  const Matrix& data() const { return X_; }
  const Vector& output_weights() const { return v_; }
  const Activation& activation() const { return act_; }

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> as_matrix(const ParamVector& theta) const {
    return Eigen::Map<const RowMajor>(theta.data(), hidden(), input_dim());
  }

  /// Pre-activations X w_l for hidden unit l.
  Vector preactivation(const ParamVector& theta, Index l) const {
    const Vector w = theta.segment(l * input_dim(), input_dim());
    return X_ * w;
  }

  Vector predict(const ParamVector& theta) const override {
    Vector out = Vector::Zero(sample_count());
    for (Index l = 0; l < hidden(); ++l) {
      const Vector z = preactivation(theta, l);
      for (Index i = 0; i < z.size(); ++i) out[i] += v_[l] * act_.phi(z[i]);
    }
    return out;
  }

  double predict_one(const ParamVector& theta, Index i) const override {
    const Vector z = as_matrix(theta) * X_.row(i).transpose();
    double out = 0.0;
    for (Index l = 0; l < z.size(); ++l) out += v_[l] * act_.phi(z[l]);
    return out;
  }

  Matrix jacobian_at(const ParamVector& theta) const override {
    const Index d = input_dim();
    Matrix J(sample_count(), param_dim());
    for (Index l = 0; l < hidden(); ++l) {
      const Vector z = preactivation(theta, l);
      for (Index i = 0; i < sample_count(); ++i) {
        J.block(i, l * d, 1, d) = (v_[l] * act_.dphi(z[i])) * X_.row(i);
      }
    }
    return J;
  }

  Vector jacobian_row_at(const ParamVector& theta, Index i) const override {
    const Vector z = as_matrix(theta) * X_.row(i).transpose();
    const Index d = input_dim();
    Vector row(param_dim());
    for (Index l = 0; l < hidden(); ++l) {
      row.segment(l * d, d) = (v_[l] * act_.dphi(z[l])) * X_.row(i).transpose();
    }
    return row;
  }

  /// Each unit is a GLM, so block l is v_l diag(secant of phi along X w_l) X.
  Matrix average_jacobian_between(const ParamVector& a, const ParamVector& b) const override {
    const Index d = input_dim();
    Matrix J(sample_count(), param_dim());
    for (Index l = 0; l < hidden(); ++l) {
      const Vector za = preactivation(a, l);
      const Vector zb = preactivation(b, l);
      for (Index i = 0; i < sample_count(); ++i) {
        J.block(i, l * d, 1, d) = (v_[l] * act_.secant(za[i], zb[i])) * X_.row(i);
      }
    }
    return J;
  }

  /// alpha = gamma sigma_min(X), beta = Gamma ||X||, L = M ||X||_{2,inf} ||X||.
  std::optional<JacobianEnvelope> analytic_envelope() const override {
    JacobianEnvelope env;
    const double row_max = X_.rowwise().norm().maxCoeff();
    const double op = detail::spectral_norm(X_);
    env.alpha = act_.gamma() * detail::smallest_row_singular_value(X_);
    env.beta = act_.Gamma() * op;
    env.row_bound = act_.Gamma() * row_max;
    env.lipschitz = act_.M() * row_max * op;
    return env;
  }

 private:
  Matrix X_;
  Vector y_;
  Vector v_;
  Activation act_;
};

}  // namespace overparam
