#pragma once

// Full-batch GD, single-sample SGD and GD on a general loss, each recording a
// per-iteration trajectory.

#include "overparam/common.hpp"
#include "overparam/models.hpp"
#include "overparam/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace overparam {

struct OptimConfig {
  double eta = 0.0;
  Index max_iters = 1000;
  std::optional<double> tol_misfit;  // default 1e-10 (1 + ||y||)
  std::uint64_t seed = 0;
  Index record_every = 1;
  std::optional<double> zeta;  // weight of the path term in the GD potential
  bool keep_iterates = false;  // store every recorded theta

  void validate() const {
    require(std::isfinite(eta) && eta > 0.0, "OptimConfig: eta must be positive and finite");
    require(max_iters >= 1, "OptimConfig: max_iters must be at least 1");
    require(!tol_misfit || *tol_misfit >= 0.0, "OptimConfig: tol_misfit must be nonnegative");
    require(record_every >= 1, "OptimConfig: record_every must be at least 1");
    require(!zeta || *zeta >= 0.0, "OptimConfig: zeta must be nonnegative");
  }
};

enum class Termination { Converged, MaxIters, Stationary };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIters: return "max_iters";
    case Termination::Stationary: return "stationary";
  }
  return "unknown";
}

inline constexpr double kEmpty = std::numeric_limits<double>::quiet_NaN();

struct TrajectoryRow {
  Index iter = 0;
  double loss = 0.0;
  double misfit = 0.0;
  double dist_init = 0.0;
  double path_len = 0.0;
  double step_norm = 0.0;  // norm of the step that produced this iterate
  double gd_potential = kEmpty;
  double sgd_potential = kEmpty;
  double norm_misfit = 0.0;
  double norm_dist = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  std::vector<ParamVector> thetas;  // parallel to rows when keep_iterates
  ParamVector theta0;
  ParamVector final_theta;
  Termination reason = Termination::MaxIters;
  double eta = 0.0;
  Index stride = 1;
  // ||theta0|| = 0: norm_dist holds the raw dist_init.
  bool norm_dist_raw = false;

  const TrajectoryRow& front() const { return rows.front(); }
  const TrajectoryRow& back() const { return rows.back(); }
  std::size_t size() const { return rows.size(); }
};

class NonFiniteError : public Error {
 public:
  NonFiniteError(Index iter, Trajectory partial)
      : Error("non-finite loss at iteration " + std::to_string(iter)), iter_(iter), partial_(std::move(partial)) {}
  Index iteration() const { return iter_; }
  const Trajectory& partial() const { return partial_; }

 private:
  Index iter_;
  Trajectory partial_;
};

/// A loss with its gradient and, when known, a smoothness constant.
struct GeneralLoss {
  std::function<double(const ParamVector&)> value;
  std::function<ParamVector(const ParamVector&)> grad;
  std::optional<double> smoothness;
  Index dim = 0;
};

/// 1/2 ||f(theta) - y||^2 as a GeneralLoss.
inline GeneralLoss least_squares_loss(const Model& model, std::optional<double> smoothness = std::nullopt) {
  GeneralLoss out;
  out.value = [&model](const ParamVector& t) { return loss(model, t); };
  out.grad = [&model](const ParamVector& t) { return gradient(model, t); };
  out.smoothness = smoothness;
  out.dim = model.param_dim();
  return out;
}

namespace detail {

/// Residual and gradient in one evaluation.
inline std::pair<Vector, ParamVector> residual_and_gradient(const Model& model, const ParamVector& theta) {
  Vector r = model.predict(theta) - model.labels();
  ParamVector g = model.gradient_from_residual(theta, r);
  return {std::move(r), std::move(g)};
}

class Recorder {
 public:
  Recorder(const ParamVector& theta0, double misfit0, const OptimConfig& cfg)
      : cfg_(cfg), misfit0_(misfit0), theta0_norm_(theta0.norm()) {
    traj_.theta0 = theta0;
    traj_.eta = cfg.eta;
    traj_.stride = cfg.record_every;
    traj_.norm_dist_raw = theta0_norm_ == 0.0;
  }

  void record(Index iter, const ParamVector& theta, double misfit, double loss_value, double dist, double path,
              double step, double sgd_potential = kEmpty, std::optional<double> pl_mu = std::nullopt) {
    TrajectoryRow row;
    row.iter = iter;
    row.loss = loss_value;
    row.misfit = misfit;
    row.dist_init = dist;
    row.path_len = path;
    row.step_norm = step;
    if (pl_mu) {
      row.gd_potential = std::sqrt(*pl_mu / 8.0) * dist + misfit;
    } else if (cfg_.zeta) {
      row.gd_potential = misfit + *cfg_.zeta * path;
    }
    row.sgd_potential = sgd_potential;
    row.norm_misfit = misfit0_ > 0.0 ? misfit / misfit0_ : 0.0;
    row.norm_dist = traj_.norm_dist_raw ? dist : dist / theta0_norm_;
    traj_.rows.push_back(row);
    if (cfg_.keep_iterates) traj_.thetas.push_back(theta);
  }

  bool due(Index iter) const { return iter % cfg_.record_every == 0; }
  Trajectory& trajectory() { return traj_; }
  Trajectory take(const ParamVector& final_theta, Termination reason) {
    traj_.final_theta = final_theta;
    traj_.reason = reason;
    return std::move(traj_);
  }

 private:
  const OptimConfig& cfg_;
  double misfit0_;
  double theta0_norm_;
  Trajectory traj_;
};

inline double default_tolerance(const Model& model) { return 1e-10 * (1.0 + model.labels().norm()); }

}  // namespace detail

/// theta <- theta - eta grad L(theta). The final iterate is always recorded,
/// whatever the stride.
inline Trajectory run_gd(const Model& model, const ParamVector& theta0, const OptimConfig& cfg) {
  cfg.validate();
  detail::check_theta(model, theta0);
  const double tol = cfg.tol_misfit.value_or(detail::default_tolerance(model));

  ParamVector theta = theta0;
  auto [r, g] = detail::residual_and_gradient(model, theta);
  double misfit = r.norm();
  detail::Recorder rec(theta0, misfit, cfg);
  double path = 0.0, step = 0.0;
  Index iter = 0;
  bool recorded_last = false;

  auto record = [&]() {
    rec.record(iter, theta, misfit, 0.5 * misfit * misfit, (theta - theta0).norm(), path, step);
  };
  auto check_finite = [&]() {
    if (!std::isfinite(misfit)) throw NonFiniteError(iter, rec.trajectory());
  };

  check_finite();
  record();
  recorded_last = true;
  Termination reason = Termination::MaxIters;
  while (true) {
    if (misfit <= tol) {
      reason = Termination::Converged;
      break;
    }
    if (iter >= cfg.max_iters) break;
    if (g.squaredNorm() == 0.0) {
      reason = Termination::Stationary;
      break;
    }
    const ParamVector delta = cfg.eta * g;
    theta -= delta;
    step = delta.norm();
    path += step;
    ++iter;
    std::tie(r, g) = detail::residual_and_gradient(model, theta);
    misfit = r.norm();
    recorded_last = false;
    if (!std::isfinite(misfit)) {
      record();
      throw NonFiniteError(iter, rec.trajectory());
    }
    if (rec.due(iter)) {
      record();
      recorded_last = true;
    }
  }
  if (!recorded_last) record();
  return rec.take(theta, reason);
}

/// Potential spec for SGD runs: anchors p_l and the alpha weighting the mean
/// anchor distance.
struct SgdPotentialSpec {
  std::vector<ParamVector> anchors;
  double alpha = 0.0;
};

namespace detail {
inline double sgd_potential_value(double misfit, const ParamVector& theta, const SgdPotentialSpec& spec) {
  double total = 0.0;
  for (const ParamVector& a : spec.anchors) total += (theta - a).norm();
  return 12.0 * misfit + spec.alpha / static_cast<double>(spec.anchors.size()) * total;
}
}  // namespace detail

/// theta <- theta - eta r_i(theta) grad f_i(theta) with i = sgd_index(seed, step).
inline Trajectory run_sgd(const Model& model, const ParamVector& theta0, const OptimConfig& cfg,
                          const std::optional<SgdPotentialSpec>& potential = std::nullopt) {
  cfg.validate();
  detail::check_theta(model, theta0);
  if (potential) require(!potential->anchors.empty(), "run_sgd: potential needs at least one anchor");
  const double tol = cfg.tol_misfit.value_or(detail::default_tolerance(model));
  const Index n = model.sample_count();
  const Vector& y = model.labels();

  ParamVector theta = theta0;
  Vector r = model.predict(theta) - y;
  double misfit = r.norm();
  detail::Recorder rec(theta0, misfit, cfg);
  double path = 0.0, step = 0.0;
  Index iter = 0;
  bool recorded_last = false;

  auto record = [&]() {
    const double v = potential ? detail::sgd_potential_value(misfit, theta, *potential) : kEmpty;
    rec.record(iter, theta, misfit, 0.5 * misfit * misfit, (theta - theta0).norm(), path, step, v);
  };

  if (!std::isfinite(misfit)) throw NonFiniteError(0, rec.trajectory());
  record();
  recorded_last = true;
  Termination reason = Termination::MaxIters;
  while (true) {
    if (misfit <= tol) {
      reason = Termination::Converged;
      break;
    }
    if (iter >= cfg.max_iters) break;
    const Index i = sgd_index(cfg.seed, static_cast<std::uint64_t>(iter), n);
    const ParamVector delta = (cfg.eta * r[i]) * model.jacobian_row_at(theta, i);
    theta -= delta;
    step = delta.norm();
    path += step;
    ++iter;
    r = model.predict(theta) - y;
    misfit = r.norm();
    recorded_last = false;
    if (!std::isfinite(misfit)) {
      record();
      throw NonFiniteError(iter, rec.trajectory());
    }
    if (rec.due(iter)) {
      record();
      recorded_last = true;
    }
  }
  if (!recorded_last) record();
  return rec.take(theta, reason);
}

/// GD on a general loss. The misfit column holds sqrt(loss) and the
/// gd_potential column sqrt(mu/8) dist + sqrt(loss). Stops when
/// sqrt(loss) <= tol (default 1e-10).
inline Trajectory run_pl_gd(const GeneralLoss& objective, const ParamVector& theta0, const OptimConfig& cfg,
                            double mu) {
  cfg.validate();
  require(mu > 0.0, "run_pl_gd: mu must be positive");
  require(objective.value && objective.grad, "run_pl_gd: loss needs value and gradient");
  if (objective.dim > 0) require_dim(theta0.size(), objective.dim, "parameter vector");
  if (objective.smoothness) {
    require(cfg.eta <= 1.0 / *objective.smoothness * (1.0 + 1e-12), "run_pl_gd: eta exceeds 1/L");
  }
  const double tol = cfg.tol_misfit.value_or(1e-10);

  ParamVector theta = theta0;
  double value = objective.value(theta);
  double root = std::sqrt(std::max(value, 0.0));
  detail::Recorder rec(theta0, root, cfg);
  double path = 0.0, step = 0.0;
  Index iter = 0;
  bool recorded_last = false;

  auto record = [&]() { rec.record(iter, theta, root, value, (theta - theta0).norm(), path, step, kEmpty, mu); };

  if (!std::isfinite(value)) throw NonFiniteError(0, rec.trajectory());
  record();
  recorded_last = true;
  Termination reason = Termination::MaxIters;
  while (true) {
    if (root <= tol) {
      reason = Termination::Converged;
      break;
    }
    if (iter >= cfg.max_iters) break;
    const ParamVector g = objective.grad(theta);
    if (g.squaredNorm() == 0.0) {
      reason = Termination::Stationary;
      break;
    }
    const ParamVector delta = cfg.eta * g;
    theta -= delta;
    step = delta.norm();
    path += step;
    ++iter;
    value = objective.value(theta);
    root = std::sqrt(std::max(value, 0.0));
    recorded_last = false;
    if (!std::isfinite(value)) {
      record();
      throw NonFiniteError(iter, rec.trajectory());
    }
    if (rec.due(iter)) {
      record();
      recorded_last = true;
    }
  }
  if (!recorded_last) record();
  return rec.take(theta, reason);
}

struct PlCheckReport {
  double min_slack = std::numeric_limits<double>::infinity();  // min ||grad||^2 - 2 mu L
  ParamVector worst_point;
  Index probes = 0;
  bool passes() const { return min_slack >= 0.0; }
};

/// Evaluates ||grad L||^2 - 2 mu L at the center and at uniform points of the
/// ball. `tolerance` is absorbed into the slack as tolerance * (1 + 2 mu L).
inline PlCheckReport local_pl_check(const GeneralLoss& objective, const ParamVector& center, double radius, double mu,
                                    Index samples, std::uint64_t seed, double tolerance = 0.0) {
  require(radius > 0.0, "local_pl_check: radius must be positive");
  require(samples >= 1, "local_pl_check: need at least one sample");
  PlCheckReport rep;
  Rng rng(seed);
  auto visit = [&](const ParamVector& x) {
    const double value = objective.value(x);
    const double slack = objective.grad(x).squaredNorm() - 2.0 * mu * value + tolerance * (1.0 + 2.0 * mu * value);
    ++rep.probes;
    if (slack < rep.min_slack) {
      rep.min_slack = slack;
      rep.worst_point = x;
    }
  };
  visit(center);
  for (Index s = 0; s < samples; ++s) visit(rng.in_ball(center, radius));
  return rep;
}

}  // namespace overparam
