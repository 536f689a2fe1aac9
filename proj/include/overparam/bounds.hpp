#pragma once

// Inequality checks over recorded trajectories and the adversarial linear
// instances on which the distance lower bound is tight.

#include "overparam/common.hpp"
#include "overparam/descent.hpp"
#include "overparam/geometry.hpp"
#include "overparam/models.hpp"
#include "overparam/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace overparam {

enum class CheckStatus { Pass, Fail, Inconclusive };

inline std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

/// One inequality: the largest signed violation (lhs - rhs) over the run
/// against an absolute tolerance.
struct BoundRow {
  std::string name;
  std::string location;
  double max_violation = -std::numeric_limits<double>::infinity();
  double tolerance = 0.0;
  CheckStatus status = CheckStatus::Pass;
  Index worst_iter = -1;
  std::string note;

  void observe(double violation, Index iter) {
    if (worst_iter < 0 || std::isnan(violation) || violation > max_violation) {
      max_violation = violation;
      worst_iter = iter;
    }
  }

  void settle() {
    if (status == CheckStatus::Inconclusive) return;
    if (worst_iter < 0) max_violation = 0.0;
    status = (std::isfinite(max_violation) && max_violation <= tolerance) ? CheckStatus::Pass : CheckStatus::Fail;
  }
};

struct BoundReport {
  std::vector<BoundRow> rows;

  bool all_pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const BoundRow& r) { return r.status == CheckStatus::Pass; });
  }
  bool any_fail() const {
    return std::any_of(rows.begin(), rows.end(), [](const BoundRow& r) { return r.status == CheckStatus::Fail; });
  }
  const BoundRow* find(const std::string& name) const {
    for (const BoundRow& r : rows)
      if (r.name == name) return &r;
    return nullptr;
  }
  void append(const BoundReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
};

inline constexpr double kInequalityTolerance = 1e-9;
inline constexpr double kIdentityTolerance = 1e-8;
inline constexpr double kMonotoneTolerance = 1e-10;

namespace detail {

inline BoundRow make_row(std::string name, std::string location, double tolerance) {
  BoundRow row;
  row.name = std::move(name);
  row.location = std::move(location);
  row.tolerance = tolerance;
  return row;
}

inline void require_stride_one(const Trajectory& traj, const char* who) {
  require(!traj.rows.empty(), std::string(who) + ": empty trajectory");
  require(traj.stride == 1, std::string(who) + ": trajectory must be recorded with stride 1");
}

}  // namespace detail

/// Misfit envelope, closeness and path bounds, potential monotonicity and the
/// step size hypothesis of the GD plan. With theta_star, also the distance and
/// path ratios against the closest optimum.
inline BoundReport check_gd_theorem(const Trajectory& traj, const TheoryPlan& plan, const SpectrumBounds& bounds,
                                    const std::optional<ParamVector>& theta_star = std::nullopt) {
  detail::require_stride_one(traj, "check_gd_theorem");
  const double misfit0 = traj.rows.front().misfit;
  const double zeta = plan.zeta;
  const double radius = zeta > 0.0 ? misfit0 / zeta : std::numeric_limits<double>::infinity();

  BoundReport rep;
  BoundRow envelope = detail::make_row("misfit_envelope", "gd: squared misfit <= rate^t * initial",
                                       kInequalityTolerance * misfit0 * misfit0);
  BoundRow close = detail::make_row("closeness", "gd: zeta*dist + misfit <= initial misfit",
                                    kInequalityTolerance * misfit0);
  BoundRow path = detail::make_row("path_length", "gd: path <= initial misfit / zeta",
                                   kInequalityTolerance * (1.0 + radius));
  BoundRow potential = detail::make_row("potential_monotone", "gd: misfit + zeta*path nonincreasing",
                                        kMonotoneTolerance * misfit0);
  BoundRow step = detail::make_row("step_size", "gd: eta within the planned step", 1e-12 * plan.eta);

  double prev_v = 0.0;
  Index prev_iter = -1;
  for (const TrajectoryRow& row : traj.rows) {
    const double factor = std::pow(plan.rate, static_cast<double>(row.iter));
    envelope.observe(row.misfit * row.misfit - factor * misfit0 * misfit0, row.iter);
    close.observe(zeta * row.dist_init + row.misfit - misfit0, row.iter);
    path.observe(row.path_len - radius, row.iter);
    const double v = row.misfit + zeta * row.path_len;
    if (prev_iter >= 0) potential.observe(v - prev_v, row.iter);
    prev_v = v;
    prev_iter = row.iter;
  }
  step.observe(traj.eta - plan.eta, 0);
  for (BoundRow* r : {&envelope, &close, &path, &potential, &step}) {
    if (!(zeta > 0.0) && r != &step && r != &envelope) {
      r->status = CheckStatus::Inconclusive;
      r->note = "zeta <= 0 at this step, bound undefined";
    }
    r->settle();
    rep.rows.push_back(*r);
  }

  if (theta_star) {
    const double dstar = (*theta_star - traj.theta0).norm();
    const double ratio = zeta > 0.0 ? bounds.beta / zeta : std::numeric_limits<double>::infinity();
    BoundRow closest = detail::make_row("closest_ratio", "gd: dist <= beta/zeta * dist to closest optimum",
                                        kInequalityTolerance * (1.0 + ratio * dstar));
    BoundRow shortest = detail::make_row("shortest_ratio", "gd: path <= beta/zeta * dist to closest optimum",
                                         kInequalityTolerance * (1.0 + ratio * dstar));
    for (const TrajectoryRow& row : traj.rows) {
      closest.observe(row.dist_init - ratio * dstar, row.iter);
      shortest.observe(row.path_len - ratio * dstar, row.iter);
    }
    std::ostringstream note;
    note.precision(6);
    note << "observed/bound dist " << (dstar > 0 ? traj.rows.back().dist_init / (ratio * dstar) : 0.0)
         << ", path " << (dstar > 0 ? traj.rows.back().path_len / (ratio * dstar) : 0.0);
    closest.note = shortest.note = note.str();
    if (!(zeta > 0.0)) {
      closest.status = shortest.status = CheckStatus::Inconclusive;
      closest.note = shortest.note = "zeta <= 0 at this step, bound undefined";
    }
    closest.settle();
    shortest.settle();
    rep.rows.push_back(closest);
    rep.rows.push_back(shortest);
  }
  return rep;
}

/// ||r|| + beta ||theta - theta0|| >= ||r0|| at every recorded point.
inline BoundReport check_lower_bound(const Trajectory& traj, double beta) {
  require(!traj.rows.empty(), "check_lower_bound: empty trajectory");
  require(beta >= 0.0, "check_lower_bound: beta must be nonnegative");
  const double misfit0 = traj.rows.front().misfit;
  BoundRow row = detail::make_row("distance_lower_bound", "misfit + beta*dist >= initial misfit",
                                  kInequalityTolerance * misfit0);
  for (const TrajectoryRow& r : traj.rows) row.observe(misfit0 - r.misfit - beta * r.dist_init, r.iter);
  row.settle();
  return BoundReport{{row}};
}

/// max_t | ||r_t|| + slope ||theta_t - theta0|| - ||r0|| | / ||r0||.
inline double tight_line_deviation(const Trajectory& traj, double slope) {
  require(!traj.rows.empty(), "tight_line_deviation: empty trajectory");
  const double misfit0 = traj.rows.front().misfit;
  double worst = 0.0;
  for (const TrajectoryRow& r : traj.rows) worst = std::max(worst, std::abs(r.misfit + slope * r.dist_init - misfit0));
  return misfit0 > 0.0 ? worst / misfit0 : worst;
}

enum class LowerBoundMode { TightUpper, TightLower };

inline LowerBoundMode parse_lower_bound_mode(const std::string& s) {
  if (s == "tight-upper") return LowerBoundMode::TightUpper;
  if (s == "tight-lower") return LowerBoundMode::TightLower;
  throw ContractError("unknown lower-bound mode '" + s + "' (expected tight-upper|tight-lower)");
}

inline std::string to_string(LowerBoundMode m) { return m == LowerBoundMode::TightUpper ? "tight-upper" : "tight-lower"; }

struct LowerBoundInstance {
  LinearModel model;
  ParamVector theta0;
  ParamVector theta_star;
  double alpha;
  double beta;
  LowerBoundMode mode;
};

/// Two orthogonal rows alpha*e1 and beta*e2 in R^p, theta0 = 0, labels X
/// theta_star with theta_star = (beta/alpha) times the unit direction of the
/// first row (tight-lower) or of the last row (tight-upper).
inline LowerBoundInstance make_lower_bound_instance(double alpha, double beta, Index p, LowerBoundMode mode) {
  require(alpha > 0.0 && alpha <= beta, "make_lower_bound_instance: need 0 < alpha <= beta");
  require(std::isfinite(beta), "make_lower_bound_instance: beta must be finite");
  require(p >= 2, "make_lower_bound_instance: need p >= 2");
  Matrix X = Matrix::Zero(2, p);
  X(0, 0) = alpha;
  X(1, 1) = beta;
  ParamVector star = ParamVector::Zero(p);
  star[mode == LowerBoundMode::TightLower ? 0 : 1] = beta / alpha;
  Vector y = X * star;
  return LowerBoundInstance{LinearModel(X, y), ParamVector::Zero(p), star, alpha, beta, mode};
}

/// Default step for the lower-bound runs: half of 1 / beta^2.
inline double lower_bound_step(double beta) { return 0.5 / (beta * beta); }

/// Among runs that never leave B(nu/2), the mean squared misfit per iteration
/// against the SGD envelope plus three standard errors, and the exit frequency
/// against (4/nu)(beta/alpha)^(1/p) plus three standard errors.
inline BoundReport check_sgd_theorem(const std::vector<Trajectory>& trajs, const TheoryPlan& plan,
                                     const SpectrumBounds& bounds, Index horizon = -1) {
  require(!trajs.empty(), "check_sgd_theorem: no trajectories");
  require(bounds.alpha > 0.0, "check_sgd_theorem: alpha must be positive");
  const double misfit0 = trajs.front().rows.front().misfit;
  Index longest = 0;
  std::vector<const Trajectory*> survivors;
  Index exits = 0;
  for (const Trajectory& t : trajs) {
    detail::require_stride_one(t, "check_sgd_theorem");
    require(std::abs(t.rows.front().misfit - misfit0) <= 1e-12 * (1.0 + misfit0),
            "check_sgd_theorem: runs must share the initial point");
    const NeighborhoodReport nb = neighborhood_monitor(t, plan, bounds.alpha);
    if (nb.exit_half) {
      ++exits;
    } else {
      survivors.push_back(&t);
    }
    longest = std::max(longest, t.rows.back().iter);
  }
  const Index last = horizon >= 0 ? horizon : longest;

  BoundReport rep;
  BoundRow envelope = detail::make_row("sgd_mean_envelope",
                                       "sgd: surviving mean squared misfit <= rate^t * initial + 3 SE",
                                       kInequalityTolerance * misfit0 * misfit0);
  if (survivors.empty()) {
    envelope.status = CheckStatus::Inconclusive;
    envelope.max_violation = 0.0;
    envelope.note = "no run stayed inside the half neighborhood";
  } else {
    const double m = static_cast<double>(survivors.size());
    std::vector<std::size_t> cursor(survivors.size(), 0);
    for (Index t = 0; t <= last; ++t) {
      double sum = 0.0, sum_sq = 0.0;
      for (std::size_t s = 0; s < survivors.size(); ++s) {
        const auto& rows = survivors[s]->rows;
        while (cursor[s] + 1 < rows.size() && rows[cursor[s] + 1].iter <= t) ++cursor[s];
        const double v = rows[cursor[s]].misfit * rows[cursor[s]].misfit;
        sum += v;
        sum_sq += v * v;
      }
      const double mean = sum / m;
      const double var = m > 1.0 ? std::max(0.0, (sum_sq - m * mean * mean) / (m - 1.0)) : 0.0;
      const double se = std::sqrt(var / m);
      const double bound = std::pow(plan.rate, static_cast<double>(t)) * misfit0 * misfit0;
      envelope.observe(mean - bound - 3.0 * se, t);
    }
    envelope.note = std::to_string(survivors.size()) + " surviving runs";
    envelope.settle();
  }
  rep.rows.push_back(envelope);

  const double runs = static_cast<double>(trajs.size());
  const double freq = static_cast<double>(exits) / runs;
  const double se = std::sqrt(freq * (1.0 - freq) / runs);
  const double bound =
      (4.0 / plan.nu) * std::pow(bounds.beta / bounds.alpha, 1.0 / static_cast<double>(std::max<Index>(bounds.p, 1)));
  BoundRow exit = detail::make_row("sgd_exit_frequency", "sgd: exit frequency <= (4/nu)(beta/alpha)^(1/p) + 3 SE",
                                   0.0);
  exit.observe(freq - bound - 3.0 * se, 0);
  std::ostringstream note;
  note.precision(6);
  note << "exits " << exits << "/" << trajs.size() << ", bound " << bound;
  exit.note = note.str();
  exit.settle();
  rep.rows.push_back(exit);
  return rep;
}

// ---------------------------------------------------------------------------
// GLM closest optimum and convergence
// ---------------------------------------------------------------------------

/// Solves phi(z) = target by bisection on a bracket grown geometrically
/// around zero. phi must be strictly increasing. With tol = 0 the bracket
/// shrinks to adjacent doubles.
inline double invert_activation(const Activation& act, double target, double tol = 0.0) {
  double lo = -1.0, hi = 1.0;
  for (int k = 0; act.phi(lo) > target; ++k) {
    if (k > 2000) throw ContractError("invert_activation: no lower bracket");
    hi = lo;
    lo *= 2.0;
  }
  for (int k = 0; act.phi(hi) < target; ++k) {
    if (k > 2000) throw ContractError("invert_activation: no upper bracket");
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 2200 && hi - lo > tol * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (act.phi(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace detail {

/// Thin QR of X^T: X^T = Q R with Q p x n orthonormal.
struct RowSpaceBasis {
  Matrix Q;
  Matrix R;
};

inline RowSpaceBasis row_space_basis(const Matrix& X) {
  require(X.rows() <= X.cols(), "row_space_basis: need n <= p");
  Eigen::HouseholderQR<Matrix> qr(X.transpose());
  RowSpaceBasis out;
  out.Q = qr.householderQ() * Matrix::Identity(X.cols(), X.rows());
  out.R = qr.matrixQR().topRows(X.rows()).triangularView<Eigen::Upper>();
  const Vector diag = out.R.diagonal().cwiseAbs();
  const double scale = diag.size() ? diag.maxCoeff() : 0.0;
  if (diag.size() == 0 || !(diag.minCoeff() > 1e-12 * scale)) {
    throw RankDeficientError("closest optimum: X is not full row rank");
  }
  return out;
}

}  // namespace detail

/// theta* = (I - P_row) theta0 + X^T (X X^T)^{-1} phi^{-1}(y), computed through
/// a QR factorization of X^T.
inline ParamVector closest_optimum(const Matrix& X, const Vector& z, const ParamVector& theta0) {
  require_dim(theta0.size(), X.cols(), "closest_optimum: parameter vector");
  require_dim(z.size(), X.rows(), "closest_optimum: targets");
  const detail::RowSpaceBasis basis = detail::row_space_basis(X);
  const Vector coeffs = basis.R.transpose().triangularView<Eigen::Lower>().solve(z);
  const ParamVector null_part = theta0 - basis.Q * (basis.Q.transpose() * theta0);
  return null_part + basis.Q * coeffs;
}

inline ParamVector closest_optimum_glm(const GLMModel& model, const ParamVector& theta0) {
  detail::check_theta(model, theta0);
  const Vector& y = model.labels();
  Vector z(y.size());
  for (Index i = 0; i < y.size(); ++i) z[i] = invert_activation(model.activation(), y[i]);
  return closest_optimum(model.data(), z, theta0);
}

inline ParamVector closest_optimum_linear(const LinearModel& model, const ParamVector& theta0) {
  detail::check_theta(model, theta0);
  return closest_optimum(model.data(), model.labels(), theta0);
}

/// Distance-to-optimum envelope (1 - eta gamma^2 lambda_min(X X^T))^t, the
/// path bound (Gamma/gamma)^2 (lambda_max/lambda_min) ||theta0 - theta*||, the
/// step hypothesis eta <= 1/(Gamma^2 ||X||^2) and the constancy of the
/// null-space component. Needs the iterates (keep_iterates).
inline BoundReport check_glm_theorem(const Trajectory& traj, const Matrix& X, double gamma, double Gamma,
                                     const ParamVector& theta_star) {
  detail::require_stride_one(traj, "check_glm_theorem");
  require(traj.thetas.size() == traj.rows.size(), "check_glm_theorem: trajectory must keep its iterates");
  require_dim(theta_star.size(), X.cols(), "check_glm_theorem: theta_star");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(X * X.transpose(), Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  require(lmin > 0.0, "check_glm_theorem: X X^T is singular");
  const double q = 1.0 - traj.eta * gamma * gamma * lmin;
  const double d0 = (traj.theta0 - theta_star).norm();
  const double path_bound = (Gamma * Gamma) / (gamma * gamma) * (lmax / lmin) * d0;
  const detail::RowSpaceBasis basis = detail::row_space_basis(X);

  BoundRow envelope = detail::make_row("glm_distance_envelope", "glm: dist to optimum <= q^t * initial distance",
                                       kInequalityTolerance * d0);
  BoundRow path = detail::make_row("glm_path_length", "glm: path <= (Gamma/gamma)^2 (lmax/lmin) * initial distance",
                                   kInequalityTolerance * (1.0 + path_bound));
  BoundRow step = detail::make_row("glm_step_size", "glm: eta <= 1/(Gamma^2 ||X||^2)", 1e-12 / (Gamma * Gamma * lmax));
  BoundRow nullspace = detail::make_row("null_space_constant", "glm: null-space part of theta stays at theta0",
                                        1e-10 * (1.0 + traj.theta0.norm()));
  for (std::size_t k = 0; k < traj.rows.size(); ++k) {
    const TrajectoryRow& row = traj.rows[k];
    const ParamVector& theta = traj.thetas[k];
    envelope.observe((theta - theta_star).norm() - std::pow(q, static_cast<double>(row.iter)) * d0, row.iter);
    path.observe(row.path_len - path_bound, row.iter);
    const ParamVector delta = theta - traj.theta0;
    nullspace.observe((delta - basis.Q * (basis.Q.transpose() * delta)).norm(), row.iter);
  }
  step.observe(traj.eta - 1.0 / (Gamma * Gamma * lmax), 0);
  BoundReport rep;
  for (BoundRow* r : {&envelope, &path, &step, &nullspace}) {
    r->settle();
    rep.rows.push_back(*r);
  }
  return rep;
}

inline BoundReport check_glm_theorem(const Trajectory& traj, const GLMModel& model, const ParamVector& theta_star) {
  return check_glm_theorem(traj, model.data(), model.activation().gamma(), model.activation().Gamma(), theta_star);
}

inline BoundReport check_glm_theorem(const Trajectory& traj, const LinearModel& model, const ParamVector& theta_star) {
  return check_glm_theorem(traj, model.data(), 1.0, 1.0, theta_star);
}

/// Loss envelope (1 - eta mu)^t, PL potential monotonicity and its bound
/// sqrt(L0), the path bound sqrt(8 L0 / mu) and, with a smoothness constant,
/// the distance of the first zero-loss iterate (loss <= zero_loss) from
/// theta0 against sqrt(2 L0 / L).
inline BoundReport check_pl_theorems(const Trajectory& traj, double mu, std::optional<double> smoothness,
                                     double loss0, double zero_loss = 1e-20) {
  detail::require_stride_one(traj, "check_pl_theorems");
  require(mu > 0.0, "check_pl_theorems: mu must be positive");
  const double root0 = std::sqrt(loss0);
  BoundRow envelope = detail::make_row("pl_loss_envelope", "pl: loss <= (1 - eta mu)^t * initial loss",
                                       kInequalityTolerance * loss0);
  BoundRow potential = detail::make_row("pl_potential_monotone", "pl: sqrt(mu/8) dist + sqrt(loss) nonincreasing",
                                        kMonotoneTolerance * root0);
  BoundRow cap = detail::make_row("pl_potential_bound", "pl: sqrt(mu/8) dist + sqrt(loss) <= sqrt(initial loss)",
                                  kInequalityTolerance * root0);
  const double path_bound = std::sqrt(8.0 * loss0 / mu);
  BoundRow path = detail::make_row("pl_path_length", "pl: path <= sqrt(8 L0 / mu)",
                                   kInequalityTolerance * (1.0 + path_bound));
  const double q = 1.0 - traj.eta * mu;
  double prev = 0.0;
  bool first = true;
  std::optional<std::size_t> first_zero;
  for (std::size_t k = 0; k < traj.rows.size(); ++k) {
    const TrajectoryRow& row = traj.rows[k];
    envelope.observe(row.loss - std::pow(q, static_cast<double>(row.iter)) * loss0, row.iter);
    const double v = std::sqrt(mu / 8.0) * row.dist_init + std::sqrt(std::max(row.loss, 0.0));
    if (!first) potential.observe(v - prev, row.iter);
    cap.observe(v - root0, row.iter);
    path.observe(row.path_len - path_bound, row.iter);
    prev = v;
    first = false;
    if (!first_zero && row.loss <= zero_loss) first_zero = k;
  }
  BoundReport rep;
  for (BoundRow* r : {&envelope, &potential, &cap, &path}) {
    r->settle();
    rep.rows.push_back(*r);
  }
  if (smoothness) {
    const double radius = std::sqrt(2.0 * loss0 / *smoothness);
    BoundRow far = detail::make_row("pl_zero_loss_distance", "pl: first zero-loss point at dist >= sqrt(2 L0 / L)",
                                    1e-6);
    if (first_zero) {
      const TrajectoryRow& row = traj.rows[*first_zero];
      far.observe(radius - row.dist_init, row.iter);
      far.settle();
    } else {
      far.max_violation = 0.0;
      far.status = loss0 <= zero_loss ? CheckStatus::Pass : CheckStatus::Inconclusive;
      far.note = "no zero-loss point recorded";
    }
    rep.rows.push_back(far);
  }
  return rep;
}

/// Largest step allowed for the one-hidden-layer net:
/// 1/(2 Gamma^2 ||X||^2) min(1, gamma^2 sigma_min(X)^2 / (Gamma M ||X||_{2,inf} ||X|| ||r0||)).
inline double net_step_size(const ShallowNetModel& model, double misfit0) {
  const Activation& act = model.activation();
  const Matrix& X = model.data();
  const double norm = detail::spectral_norm(X);
  const double smin = detail::smallest_row_singular_value(X);
  const double row_max = X.rowwise().norm().maxCoeff();
  const double base = 1.0 / (2.0 * act.Gamma() * act.Gamma() * norm * norm);
  const double denom = act.Gamma() * act.M() * row_max * norm * misfit0;
  const double ratio = denom > 0.0 ? act.gamma() * act.gamma() * smin * smin / denom : 1.0;
  return base * std::min(1.0, ratio);
}

/// Misfit envelope (1 - eta gamma^2 sigma_min(X)^2)^t and the weighted
/// potential (gamma sigma_min(X)/4) ||W - W0||_F + ||r|| <= ||r0||.
inline BoundReport check_net_theorem(const Trajectory& traj, const ShallowNetModel& model) {
  detail::require_stride_one(traj, "check_net_theorem");
  const Activation& act = model.activation();
  const double smin = detail::smallest_row_singular_value(model.data());
  const double misfit0 = traj.rows.front().misfit;
  const double q = 1.0 - traj.eta * act.gamma() * act.gamma() * smin * smin;
  const double weight = act.gamma() * smin / 4.0;
  BoundRow envelope =
      detail::make_row("net_misfit_envelope", "net: misfit <= q^t * initial misfit", kInequalityTolerance * misfit0);
  BoundRow potential = detail::make_row("net_weighted_potential", "net: (gamma sigma_min/4)*dist + misfit <= initial misfit",
                                        kInequalityTolerance * misfit0);
  BoundRow step = detail::make_row("net_step_size", "net: eta within the step formula",
                                   1e-12 * net_step_size(model, misfit0));
  for (const TrajectoryRow& row : traj.rows) {
    envelope.observe(row.misfit - std::pow(q, static_cast<double>(row.iter)) * misfit0, row.iter);
    potential.observe(weight * row.dist_init + row.misfit - misfit0, row.iter);
  }
  step.observe(traj.eta - net_step_size(model, misfit0), 0);
  BoundReport rep;
  for (BoundRow* r : {&envelope, &potential, &step}) {
    r->settle();
    rep.rows.push_back(*r);
  }
  return rep;
}

/// CSV with columns name,location,max_violation,tolerance,status.
inline void write_bound_report_csv(std::ostream& os, const BoundReport& rep) {
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) out += (c == '"') ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
  };
  char buf[64];
  os << "name,location,max_violation,tolerance,status\n";
  for (const BoundRow& r : rep.rows) {
    os << r.name << ',' << quote(r.location) << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.max_violation);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.tolerance);
    os << buf << ',' << to_string(r.status) << '\n';
  }
}

inline std::string format_bound_report(const BoundReport& rep) {
  std::ostringstream os;
  os.precision(6);
  for (const BoundRow& r : rep.rows) {
    os << (r.status == CheckStatus::Pass ? "PASS" : r.status == CheckStatus::Fail ? "FAIL" : "INCONCLUSIVE") << "  "
       << r.name << "  max_violation=" << r.max_violation << " tol=" << r.tolerance;
    if (r.worst_iter >= 0) os << " at t=" << r.worst_iter;
    if (!r.note.empty()) os << "  (" << r.note << ")";
    os << '\n';
  }
  return os.str();
}

}  // namespace overparam
