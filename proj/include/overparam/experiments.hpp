#pragma once

// Drivers shared by the command-line tool and the acceptance suite: problem
// construction from a RunConfig, the run/verify pipeline, the lower-bound
// instances, the low-rank study and the SGD drift trace.

#include "overparam/bounds.hpp"
#include "overparam/common.hpp"
#include "overparam/config.hpp"
#include "overparam/descent.hpp"
#include "overparam/geometry.hpp"
#include "overparam/models.hpp"
#include "overparam/oracle.hpp"
#include "overparam/potentials.hpp"
#include "overparam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace overparam {

/// Plan could not be formed (alpha is zero on the probes).
class CertificationError : public Error {
 public:
  using Error::Error;
};

struct Problem {
  std::shared_ptr<const Model> model;
  ParamVector theta0;
  std::optional<ParamVector> theta_star;  // closest optimum, linear and GLM only
};

inline Activation make_activation(const std::string& name, double c) {
  if (name == "identity") return Activation::identity();
  if (name == "tanh_linear") return Activation::tanh_linear(c);
  if (name == "softplus_linear") return Activation::softplus_linear(c);
  throw ConfigError("unknown activation '" + name + "'");
}

namespace detail {

inline Matrix config_matrix(const RunConfig& cfg, Rng& rng, Index rows, Index cols) {
  if (cfg.data == "explicit") {
    if (static_cast<Index>(cfg.X.size()) != rows * cols) {
      throw ConfigError("config: X has " + std::to_string(cfg.X.size()) + " entries, expected " +
                        std::to_string(rows * cols));
    }
    Matrix X(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) X(i, j) = cfg.X[static_cast<std::size_t>(i * cols + j)];
    return X;
  }
  return rng.normal_matrix(rows, cols);
}

inline Vector config_labels(const RunConfig& cfg, Rng& rng, Index n, const std::function<Vector(Rng&)>& planted) {
  if (cfg.labels == "explicit") {
    if (static_cast<Index>(cfg.y.size()) != n) {
      throw ConfigError("config: y has " + std::to_string(cfg.y.size()) + " entries, expected " + std::to_string(n));
    }
    return Eigen::Map<const Vector>(cfg.y.data(), n);
  }
  if (cfg.labels == "rademacher") {
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.rademacher();
    return y;
  }
  if (cfg.labels == "planted") return planted(rng);
  return rng.normal_vector(n);
}

}  // namespace detail

/// Builds the model and initial point. Data, labels and output weights come
/// from data_seed in that order; the initial point from init_seed.
inline Problem build_problem(const RunConfig& cfg) {
  Rng rng(cfg.data_seed);
  Problem out;
  const Activation act = make_activation(cfg.activation, cfg.activation_c);
  std::shared_ptr<Model> model;
  double y_norm = 0.0;

  if (cfg.family == "linear" || cfg.family == "glm") {
    const Matrix X = detail::config_matrix(cfg, rng, cfg.n, cfg.p);
    auto planted = [&](Rng& g) -> Vector {
      const Vector z = X * (g.normal_vector(cfg.p) / std::sqrt(static_cast<double>(cfg.p)));
      if (cfg.family == "linear") return z;
      return z.unaryExpr([&](double t) { return act.phi(t); });
    };
    const Vector y = detail::config_labels(cfg, rng, cfg.n, planted);
    y_norm = y.norm();
    if (cfg.family == "linear") {
      model = std::make_shared<LinearModel>(X, y);
    } else {
      model = std::make_shared<GLMModel>(X, y, act);
    }
  } else if (cfg.family == "net") {
    const Matrix X = detail::config_matrix(cfg, rng, cfg.n, cfg.d);
    Vector v;
    if (!cfg.v.empty()) {
      if (static_cast<Index>(cfg.v.size()) != cfg.k) throw ConfigError("config: v must have k entries");
      v = Eigen::Map<const Vector>(cfg.v.data(), cfg.k);
      if (std::abs(v.norm() - 1.0) > 1e-12) throw ConfigError("config: v must have unit norm");
    } else {
      v = random_unit_vector(rng, cfg.k);
    }
    auto planted = [&](Rng& g) -> Vector {
      const ShallowNetModel probe(X, Vector::Zero(cfg.n), v, act);
      return probe.predict(g.normal_vector(cfg.k * cfg.d) / std::sqrt(static_cast<double>(cfg.d)));
    };
    const Vector y = detail::config_labels(cfg, rng, cfg.n, planted);
    y_norm = y.norm();
    model = std::make_shared<ShallowNetModel>(X, y, v, act);
  } else if (cfg.family == "lowrank") {
    if (cfg.data == "explicit") throw ConfigError("config: the lowrank family only supports gaussian data");
    if (cfg.r > cfg.d) throw ConfigError("config: lowrank needs r <= d");
    std::vector<Matrix> Xs;
    Xs.reserve(static_cast<std::size_t>(cfg.n));
    for (Index i = 0; i < cfg.n; ++i) Xs.push_back(rng.normal_matrix(cfg.d, cfg.d));
    auto planted = [&](Rng& g) -> Vector {
      const LowRankModel probe(Xs, Vector::Zero(cfg.n), cfg.d, cfg.r);
      return probe.predict(g.normal_vector(cfg.d * cfg.r) / std::sqrt(static_cast<double>(cfg.d)));
    };
    const Vector y = detail::config_labels(cfg, rng, cfg.n, planted);
    y_norm = y.norm();
    model = std::make_shared<LowRankModel>(std::move(Xs), y, cfg.d, cfg.r);
  } else {
    throw ConfigError("unknown family '" + cfg.family + "'");
  }
  model->set_quadrature_nodes(cfg.quadrature_nodes);

  const Index p = model->param_dim();
  if (cfg.init == "zeros") {
    out.theta0 = ParamVector::Zero(p);
  } else if (cfg.init == "gaussian") {
    Rng init_rng(cfg.init_seed);
    out.theta0 = cfg.init_scale * init_rng.normal_vector(p);
  } else if (cfg.init == "lowrank") {
    if (cfg.family != "lowrank") throw ConfigError("config: init = lowrank needs family = lowrank");
    out.theta0 = lowrank_init(cfg.d, cfg.r, cfg.n, y_norm, cfg.init_seed);
  } else {
    if (static_cast<Index>(cfg.theta0.size()) != p) {
      throw ConfigError("config: theta0 has " + std::to_string(cfg.theta0.size()) + " entries, expected " +
                        std::to_string(p));
    }
    out.theta0 = Eigen::Map<const ParamVector>(cfg.theta0.data(), p);
  }

  try {
    if (const auto* glm = dynamic_cast<const GLMModel*>(model.get())) {
      if (glm->sample_count() <= glm->param_dim()) out.theta_star = closest_optimum_glm(*glm, out.theta0);
    } else if (const auto* lin = dynamic_cast<const LinearModel*>(model.get())) {
      if (lin->sample_count() <= lin->param_dim()) out.theta_star = closest_optimum_linear(*lin, out.theta0);
    }
  } catch (const RankDeficientError&) {
    out.theta_star.reset();
  }
  out.model = std::move(model);
  return out;
}

struct PipelineResult {
  Trajectory trajectory;
  std::vector<Trajectory> runs;  // every SGD run, the first is `trajectory`
  SpectrumBounds bounds;
  std::optional<TheoryPlan> plan;  // certified plan
  TheoryPlan used;  // plan quantities at the step actually taken
  AssumptionReport assumptions;
  BoundReport report;
  std::optional<AnchorSet> anchors;
  std::optional<NeighborhoodReport> neighborhood;
  std::string summary;  // key=value lines
};

namespace detail {

inline ProbeOptions probe_options(const RunConfig& cfg) {
  ProbeOptions o;
  o.samples = cfg.probe_samples;
  o.seed = splitmix64(cfg.data_seed ^ 0x70726f6265ULL);
  o.alpha_margin = cfg.alpha_margin;
  return o;
}

/// At most `cap` iterates, evenly spaced, always including the last.
inline std::vector<ParamVector> thin_iterates(const std::vector<ParamVector>& thetas, std::size_t cap) {
  if (thetas.size() <= cap) return thetas;
  std::vector<ParamVector> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) out.push_back(thetas[k * (thetas.size() - 1) / (cap - 1)]);
  return out;
}

/// beta over the probed ball and the recorded iterates.
inline double trajectory_beta(const Model& model, const ParamVector& theta0, const SpectrumBounds& bounds,
                              const Trajectory& traj, const ProbeOptions& base) {
  if (traj.thetas.empty()) return bounds.beta;
  ProbeOptions o = base;
  o.samples = 1;
  o.extra_points = thin_iterates(traj.thetas, 128);
  double reach = bounds.radius;
  for (const TrajectoryRow& r : traj.rows) reach = std::max(reach, r.dist_init);
  const SpectrumBounds along = probe_spectrum(model, theta0, reach > 0.0 ? reach : 1.0, o);
  return std::max(bounds.beta, along.beta);
}

inline void add_assumption_row(BoundReport& rep, const AssumptionReport& a) {
  BoundRow row;
  row.name = "assumptions";
  row.location = "jacobian spectrum and deviation, " + a.label();
  row.max_violation = a.passes() ? 0.0 : 1.0;
  row.tolerance = 0.0;
  row.status = a.passes() ? CheckStatus::Pass : CheckStatus::Fail;
  row.worst_iter = 0;
  rep.rows.push_back(row);
}

/// Runs an optimizer; on divergence keeps the finite prefix and records a
/// failing row in `rep`.
template <class Fn>
Trajectory guarded_run(Fn&& fn, BoundReport& rep) {
  try {
    return fn();
  } catch (const NonFiniteError& e) {
    Trajectory t = e.partial();
    std::size_t keep = 0;
    while (keep < t.rows.size() && std::isfinite(t.rows[keep].misfit)) ++keep;
    t.rows.resize(keep);
    if (t.thetas.size() > keep) t.thetas.resize(keep);
    if (!t.thetas.empty()) t.final_theta = t.thetas.back();
    BoundRow row = make_row("finite_iterates", "optimizer: loss stays finite", 0.0);
    row.observe(1.0, e.iteration());
    row.settle();
    rep.rows.push_back(row);
    return t;
  }
}

inline bool keep_iterates_ok(const RunConfig& cfg, Index p) {
  return static_cast<double>(cfg.iters / cfg.record_every + 2) * static_cast<double>(p) <= 5e7;
}

inline std::string prefix_lines(const std::string& prefix, const std::string& block) {
  std::istringstream lines(block);
  std::string line, out;
  while (std::getline(lines, line)) out += prefix + line + "\n";
  return out;
}

inline std::string kv(const std::string& key, double value) {
  std::ostringstream os;
  os.precision(17);
  os << key << '=' << value << '\n';
  return os.str();
}

}  // namespace detail

/// Plan quantities re-evaluated at the step actually used.
inline TheoryPlan plan_at_step(TheoryPlan plan, const SpectrumBounds& bounds, double misfit0, double eta, bool sgd) {
  plan.eta = eta;
  const double a = bounds.alpha, b = bounds.beta;
  plan.zeta = std::max(0.0, (plan.lambda - eta * b * b / 2.0) * a);
  if (sgd) {
    plan.rate = 1.0 - eta * a * a / (2.0 * static_cast<double>(bounds.n));
  } else {
    plan.rate = 1.0 - a * a * plan.lambda * eta;
    plan.radius_R = plan.zeta > 0.0 ? misfit0 / plan.zeta : std::numeric_limits<double>::infinity();
  }
  return plan;
}

inline PipelineResult run_gd_pipeline(const RunConfig& cfg, const Problem& prob) {
  const Model& model = *prob.model;
  PipelineResult res;
  const double misfit0 = residual(model, prob.theta0).norm();
  const DeviationRegime regime = parse_regime(cfg.regime);
  const ProbeOptions opts = detail::probe_options(cfg);

  if (cfg.probe_radius) {
    res.bounds = probe_spectrum(model, prob.theta0, *cfg.probe_radius, opts);
    if (res.bounds.alpha > 0.0) res.plan = gd_plan(res.bounds, misfit0, regime, cfg.lambda);
  } else {
    ProbeOptions center = opts;
    center.samples = 1;
    const SpectrumBounds at_center = probe_spectrum(model, prob.theta0, 1e-9 * (1.0 + prob.theta0.norm()), center);
    if (at_center.alpha > 0.0) {
      auto [b, p] = certify_gd_plan(model, prob.theta0, regime, cfg.lambda, opts);
      res.bounds = b;
      res.plan = p;
    } else {
      res.bounds = at_center;
    }
  }
  res.assumptions = verify_assumptions(model, res.bounds, regime, cfg.lambda);
  if (!cfg.eta && !res.plan) throw CertificationError("cannot certify a step size: alpha is zero on the probes");
  const double eta = cfg.eta ? *cfg.eta : res.plan->eta;
  TheoryPlan base = res.plan ? *res.plan : TheoryPlan{};
  base.regime = regime;
  base.lambda = cfg.lambda;
  res.used = plan_at_step(base, res.bounds, misfit0, eta, false);

  OptimConfig oc;
  oc.eta = eta;
  oc.max_iters = cfg.iters;
  oc.tol_misfit = cfg.tol;
  oc.record_every = cfg.record_every;
  oc.zeta = res.used.zeta;
  oc.keep_iterates = detail::keep_iterates_ok(cfg, model.param_dim());
  BoundReport divergence;
  res.trajectory = detail::guarded_run([&] { return run_gd(model, prob.theta0, oc); }, divergence);
  res.runs = {res.trajectory};

  detail::add_assumption_row(res.report, res.assumptions);
  const double beta_lb = detail::trajectory_beta(model, prob.theta0, res.bounds, res.trajectory, opts);
  res.report.append(check_lower_bound(res.trajectory, beta_lb));
  if (cfg.record_every == 1) {
    // family theorems with their own step hypotheses
    bool covered = false;
    BoundReport family;
    if (prob.theta_star && res.trajectory.thetas.size() == res.trajectory.rows.size()) {
      const auto* glm = dynamic_cast<const GLMModel*>(&model);
      const auto* lin = dynamic_cast<const LinearModel*>(&model);
      const Matrix& X = glm ? glm->data() : lin->data();
      const double Gamma = glm ? glm->activation().Gamma() : 1.0;
      const double gamma = glm ? glm->activation().gamma() : 1.0;
      const double limit = 1.0 / (Gamma * Gamma * std::pow(detail::spectral_norm(X), 2));
      if (eta <= limit * (1.0 + 1e-12)) {
        covered = true;
        family.append(check_glm_theorem(res.trajectory, X, gamma, Gamma, *prob.theta_star));
      }
    }
    if (const auto* net = dynamic_cast<const ShallowNetModel*>(&model)) {
      const double limit = net_step_size(*net, misfit0);
      if (net->sample_count() <= net->input_dim() && eta <= limit * (1.0 + 1e-12)) {
        covered = true;
        family.append(check_net_theorem(res.trajectory, *net));
      }
    }
    if (res.plan) {
      BoundReport gd = check_gd_theorem(res.trajectory, res.used, res.bounds, prob.theta_star);
      const bool within = eta <= res.plan->eta * (1.0 + 1e-12);
      for (BoundRow& row : gd.rows) {
        if (row.name == "step_size") {
          // the step must stay within the certified plan, not merely the used one
          row.max_violation = eta - res.plan->eta;
          row.worst_iter = 0;
          row.tolerance = 1e-12 * res.plan->eta;
          row.status = CheckStatus::Pass;
          row.settle();
        }
        if (!within && covered) {
          row.status = CheckStatus::Inconclusive;
          row.note = "step above the certified plan, covered by the family theorem";
        }
      }
      if (!within && covered) res.report.rows.front().status = CheckStatus::Inconclusive;
      res.report.append(gd);
    }
    if (!res.plan && !covered) {
      BoundRow row = detail::make_row("certification", "gd: alpha is zero on the probes, no plan", 0.0);
      row.observe(1.0, 0);
      row.settle();
      res.report.rows.push_back(row);
    }
    res.report.append(family);
  }
  res.report.append(divergence);
  std::string s;
  s += "command=run\noptimizer=gd\nfamily=" + cfg.family + "\n";
  s += format_bounds(res.bounds);
  s += format_assumptions(res.assumptions);
  if (res.plan) s += detail::prefix_lines("certified_", format_plan(*res.plan));
  s += detail::kv("eta", eta);
  s += detail::kv("zeta", res.used.zeta);
  s += detail::kv("beta_along_trajectory", beta_lb);
  s += "termination=" + to_string(res.trajectory.reason) + "\n";
  s += detail::kv("iterations", static_cast<double>(res.trajectory.rows.back().iter));
  s += detail::kv("final_misfit", res.trajectory.rows.back().misfit);
  s += detail::kv("final_norm_misfit", res.trajectory.rows.back().norm_misfit);
  s += detail::kv("final_norm_dist", res.trajectory.rows.back().norm_dist);
  if (res.trajectory.norm_dist_raw) s += "norm_dist_raw=1\n";
  res.summary = s;
  return res;
}

inline PipelineResult run_sgd_pipeline(const RunConfig& cfg, const Problem& prob) {
  const Model& model = *prob.model;
  PipelineResult res;
  const double misfit0 = residual(model, prob.theta0).norm();
  const DeviationRegime regime = parse_regime(cfg.regime);
  const ProbeOptions opts = detail::probe_options(cfg);

  ProbeOptions center = opts;
  center.samples = 1;
  res.bounds = probe_spectrum(model, prob.theta0, 1e-9 * (1.0 + prob.theta0.norm()), center);
  if (cfg.probe_radius) {
    res.bounds = probe_spectrum(model, prob.theta0, *cfg.probe_radius, opts);
  } else if (res.bounds.alpha > 0.0) {
    for (int round = 0; round < 3 && res.bounds.alpha > 0.0; ++round) {
      const double radius = misfit0 > 0.0 ? cfg.nu * misfit0 / res.bounds.alpha : 1.0;
      const double before = res.bounds.alpha;
      res.bounds = probe_spectrum(model, prob.theta0, radius, opts);
      if (round > 0 && res.bounds.alpha >= before) break;
    }
  }
  res.assumptions = verify_assumptions(model, res.bounds, regime, 0.5);
  if (res.bounds.alpha > 0.0) res.plan = sgd_plan(res.bounds, misfit0, cfg.nu, regime);
  if (!cfg.eta && !res.plan) throw CertificationError("cannot certify a step size: alpha is zero on the probes");
  const double eta = cfg.eta ? *cfg.eta : res.plan->eta;
  TheoryPlan base = res.plan ? *res.plan : TheoryPlan{};
  base.nu = cfg.nu;
  base.regime = regime;
  res.used = plan_at_step(base, res.bounds, misfit0, eta, true);

  std::optional<SgdPotentialSpec> spec;
  if (cfg.anchors) {
    if (!(res.bounds.alpha > 0.0)) throw CertificationError("anchors need a positive alpha");
    const PackingGeometry geom = packing_geometry(misfit0, res.bounds.alpha, res.bounds.beta, model.param_dim());
    const Index K = cfg.K ? *cfg.K : default_anchor_count(model.sample_count(), res.bounds.alpha, res.bounds.beta);
    res.anchors = build_packing(prob.theta0, geom.radius_Rp, geom.epsilon, K, splitmix64(cfg.opt_seed ^ 0x616e63ULL));
    spec = res.anchors->potential_spec(res.bounds.alpha);
  }

  BoundReport divergence;
  for (Index s = 0; s < cfg.sgd_runs; ++s) {
    OptimConfig oc;
    oc.eta = eta;
    oc.max_iters = cfg.iters;
    oc.tol_misfit = cfg.tol;
    oc.seed = cfg.opt_seed + static_cast<std::uint64_t>(s);
    oc.record_every = cfg.record_every;
    oc.keep_iterates = s == 0 && detail::keep_iterates_ok(cfg, model.param_dim());
    res.runs.push_back(detail::guarded_run([&] { return run_sgd(model, prob.theta0, oc, spec); }, divergence));
  }
  res.trajectory = res.runs.front();

  detail::add_assumption_row(res.report, res.assumptions);
  const double beta_lb = detail::trajectory_beta(model, prob.theta0, res.bounds, res.trajectory, opts);
  {
    BoundRow worst;
    bool first = true;
    for (const Trajectory& t : res.runs) {
      const BoundRow row = check_lower_bound(t, beta_lb).rows.front();
      if (first || row.max_violation > worst.max_violation) worst = row;
      first = false;
    }
    res.report.rows.push_back(worst);
  }
  if (res.plan) {
    BoundRow step;
    step.name = "step_size";
    step.location = "sgd: eta within the planned step";
    step.tolerance = 1e-12 * res.plan->eta;
    step.observe(eta - res.plan->eta, 0);
    step.settle();
    res.report.rows.push_back(step);
  }
  if (cfg.record_every == 1 && res.bounds.alpha > 0.0) {
    res.neighborhood = neighborhood_monitor(res.trajectory, res.used, res.bounds.alpha);
    if (res.runs.size() > 1) res.report.append(check_sgd_theorem(res.runs, res.used, res.bounds));
    if (res.anchors && res.trajectory.thetas.size() == res.trajectory.rows.size() &&
        model.sample_count() <= kEnumerationCap) {
      BoundRow drift;
      drift.name = "sgd_potential_drift";
      drift.location = "sgd: exact E[V(next)] - V <= 0 inside B(nu/2)";
      drift.tolerance = 1e-12;
      BoundRow gap;
      gap.name = "sgd_misfit_drift";
      gap.location = "sgd: E||r next|| <= ||r|| - eta/(4n) ||J^T r||^2/||r|| inside B(nu/2)";
      gap.tolerance = 1e-12 * (1.0 + misfit0);
      for (std::size_t k = 0; k < res.trajectory.rows.size(); ++k) {
        const TrajectoryRow& row = res.trajectory.rows[k];
        if (!in_neighborhood(row.dist_init, row.misfit, misfit0, res.bounds.alpha, cfg.nu / 2.0)) continue;
        const Drift dr = exact_conditional_drift(model, res.trajectory.thetas[k], eta, *res.anchors, res.bounds.alpha);
        drift.observe(dr.potential, row.iter);
        gap.observe(dr.misfit_bound_gap, row.iter);
      }
      drift.settle();
      gap.settle();
      res.report.rows.push_back(drift);
      res.report.rows.push_back(gap);
    }
  }

  res.report.append(divergence);
  std::string s;
  s += "command=run\noptimizer=sgd\nfamily=" + cfg.family + "\n";
  s += format_bounds(res.bounds);
  s += format_assumptions(res.assumptions);
  if (res.plan) s += detail::prefix_lines("certified_", format_plan(*res.plan));
  s += detail::kv("eta", eta);
  s += detail::kv("rate", res.used.rate);
  if (res.anchors) {
    s += detail::kv("anchors_K", static_cast<double>(res.anchors->K()));
    s += detail::kv("anchors_epsilon", res.anchors->epsilon);
    s += detail::kv("anchors_radius", res.anchors->radius_Rp);
  }
  if (res.neighborhood) {
    s += "exit_half=" + format_exit(res.neighborhood->exit_half) + "\n";
    s += "exit_full=" + format_exit(res.neighborhood->exit_full) + "\n";
  }
  s += detail::kv("runs", static_cast<double>(res.runs.size()));
  s += "termination=" + to_string(res.trajectory.reason) + "\n";
  s += detail::kv("final_misfit", res.trajectory.rows.back().misfit);
  if (res.trajectory.norm_dist_raw) s += "norm_dist_raw=1\n";
  res.summary = s;
  return res;
}

inline PipelineResult run_pl_pipeline(const RunConfig& cfg, const Problem& prob) {
  const Model& model = *prob.model;
  PipelineResult res;
  const double loss0 = loss(model, prob.theta0);
  const ProbeOptions opts = detail::probe_options(cfg);

  ProbeOptions center = opts;
  center.samples = 1;
  res.bounds = probe_spectrum(model, prob.theta0, 1e-9 * (1.0 + prob.theta0.norm()), center);
  double mu = cfg.mu.value_or(res.bounds.alpha * res.bounds.alpha);
  if (!(mu > 0.0)) throw CertificationError("cannot infer mu: alpha is zero at the initial point");
  const double radius = cfg.probe_radius.value_or(std::sqrt(8.0 * loss0 / mu) + 1e-12);
  res.bounds = probe_spectrum(model, prob.theta0, radius > 0.0 ? radius : 1.0, opts);
  if (!cfg.mu) mu = res.bounds.alpha * res.bounds.alpha;
  if (!(mu > 0.0)) throw CertificationError("cannot infer mu: alpha is zero on the probes");
  std::optional<double> smooth = cfg.smoothness;
  if (!smooth && cfg.family == "linear") smooth = res.bounds.beta * res.bounds.beta;
  if (!cfg.eta && !smooth) throw ConfigError("config: optimizer = pl needs eta or smoothness for this family");
  const double eta = cfg.eta ? *cfg.eta : 1.0 / *smooth;

  const GeneralLoss objective = least_squares_loss(model, smooth);
  OptimConfig oc;
  oc.eta = eta;
  oc.max_iters = cfg.iters;
  oc.tol_misfit = cfg.tol;
  oc.record_every = cfg.record_every;
  oc.keep_iterates = detail::keep_iterates_ok(cfg, model.param_dim());
  BoundReport divergence;
  res.trajectory = detail::guarded_run([&] { return run_pl_gd(objective, prob.theta0, oc, mu); }, divergence);
  res.runs = {res.trajectory};
  res.used.eta = eta;
  res.used.rate = 1.0 - eta * mu;

  const PlCheckReport pl = local_pl_check(objective, prob.theta0, radius > 0.0 ? radius : 1.0, mu, cfg.probe_samples,
                                          opts.seed, 1e-12);
  BoundRow plrow;
  plrow.name = "local_pl";
  plrow.location = "pl: ||grad||^2 >= 2 mu loss on " + std::to_string(pl.probes) + " probes";
  plrow.observe(-pl.min_slack, 0);
  plrow.tolerance = 0.0;
  plrow.settle();
  res.report.rows.push_back(plrow);
  const double beta_lb = detail::trajectory_beta(model, prob.theta0, res.bounds, res.trajectory, opts);
  res.report.append(check_lower_bound(res.trajectory, beta_lb));
  if (cfg.record_every == 1) res.report.append(check_pl_theorems(res.trajectory, mu, smooth, loss0));

  res.report.append(divergence);
  std::string s;
  s += "command=run\noptimizer=pl\nfamily=" + cfg.family + "\n";
  s += format_bounds(res.bounds);
  s += detail::kv("mu", mu);
  if (smooth) s += detail::kv("smoothness", *smooth);
  s += detail::kv("eta", eta);
  s += detail::kv("local_pl_min_slack", pl.min_slack);
  s += "termination=" + to_string(res.trajectory.reason) + "\n";
  s += detail::kv("final_loss", res.trajectory.rows.back().loss);
  if (res.trajectory.norm_dist_raw) s += "norm_dist_raw=1\n";
  res.summary = s;
  return res;
}

inline PipelineResult run_pipeline(const RunConfig& cfg) {
  const Problem prob = build_problem(cfg);
  if (cfg.optimizer == "sgd") return run_sgd_pipeline(cfg, prob);
  if (cfg.optimizer == "pl") return run_pl_pipeline(cfg, prob);
  return run_gd_pipeline(cfg, prob);
}

/// Probe, assumption check and both plans without running an optimizer.
struct VerifyResult {
  SpectrumBounds bounds;
  AssumptionReport assumptions;
  std::optional<TheoryPlan> gd;
  std::optional<TheoryPlan> sgd;
  std::optional<JacobianEnvelope> analytic;
  std::string text;
};

inline VerifyResult run_verify(const RunConfig& cfg) {
  const Problem prob = build_problem(cfg);
  const Model& model = *prob.model;
  const double misfit0 = residual(model, prob.theta0).norm();
  const DeviationRegime regime = parse_regime(cfg.regime);
  const ProbeOptions opts = detail::probe_options(cfg);
  VerifyResult out;
  if (cfg.probe_radius) {
    out.bounds = probe_spectrum(model, prob.theta0, *cfg.probe_radius, opts);
  } else {
    ProbeOptions center = opts;
    center.samples = 1;
    const SpectrumBounds at_center = probe_spectrum(model, prob.theta0, 1e-9 * (1.0 + prob.theta0.norm()), center);
    out.bounds = at_center.alpha > 0.0 ? certify_gd_plan(model, prob.theta0, regime, cfg.lambda, opts).first
                                       : probe_spectrum(model, prob.theta0, 1.0, opts);
  }
  out.assumptions = verify_assumptions(model, out.bounds, regime, cfg.lambda);
  if (out.bounds.alpha > 0.0) {
    out.gd = gd_plan(out.bounds, misfit0, regime, cfg.lambda);
    out.sgd = sgd_plan(out.bounds, misfit0, cfg.nu, regime);
  }
  out.analytic = model.analytic_envelope();
  std::string s = "command=verify\nfamily=" + cfg.family + "\n";
  s += detail::kv("initial_misfit", misfit0);
  s += format_bounds(out.bounds);
  s += format_assumptions(out.assumptions);
  if (out.gd) s += detail::prefix_lines("gd_", format_plan(*out.gd));
  if (out.sgd) s += detail::prefix_lines("sgd_", format_plan(*out.sgd));
  if (out.analytic) {
    s += detail::kv("analytic_alpha", out.analytic->alpha);
    s += detail::kv("analytic_beta", out.analytic->beta);
    s += detail::kv("analytic_L", out.analytic->lipschitz);
  }
  out.text = s;
  return out;
}

// ---------------------------------------------------------------------------
// Lower-bound instances
// ---------------------------------------------------------------------------

struct LowerBoundResult {
  LowerBoundInstance instance;
  Trajectory trajectory;
  double deviation = 0.0;  // relative deviation from the tight line
  BoundReport report;
};

/// GD at eta = 0.5/beta^2 from the origin. The tight line has slope beta for
/// tight-upper and alpha for tight-lower.
inline LowerBoundResult run_lower_bound(double alpha, double beta, Index p, LowerBoundMode mode, Index iters = 10000) {
  LowerBoundInstance inst = make_lower_bound_instance(alpha, beta, p, mode);
  OptimConfig oc;
  oc.eta = lower_bound_step(beta);
  oc.max_iters = iters;
  oc.tol_misfit = 0.0;
  Trajectory traj = run_gd(inst.model, inst.theta0, oc);
  const double slope = mode == LowerBoundMode::TightUpper ? beta : alpha;
  LowerBoundResult out{inst, traj, tight_line_deviation(traj, slope), check_lower_bound(traj, beta)};
  BoundRow tight;
  tight.name = "tight_line";
  tight.location = std::string("misfit + ") + (mode == LowerBoundMode::TightUpper ? "beta" : "alpha") +
                   "*dist equals the initial misfit";
  tight.tolerance = kIdentityTolerance;
  tight.observe(out.deviation, 0);
  tight.settle();
  out.report.rows.push_back(tight);
  return out;
}

// ---------------------------------------------------------------------------
// Low-rank study
// ---------------------------------------------------------------------------

struct LowRankRun {
  Index n = 0;
  std::uint64_t seed = 0;
  double c1 = 1.0;
  double eta = 0.0;
  double y_norm = 0.0;
  Trajectory trajectory;
  bool monotone = true;
};

/// Each step may rise by at most rel_tol * loss0, which absorbs round-off once
/// the loss reaches the floating-point floor.
inline bool loss_nonincreasing(const Trajectory& t, double rel_tol = 1e-12) {
  if (t.rows.empty()) return true;
  const double slack = rel_tol * t.rows.front().loss;
  for (std::size_t k = 1; k < t.rows.size(); ++k)
    if (!(t.rows[k].loss <= t.rows[k - 1].loss + slack)) return false;
  return true;
}

/// One seed: Gaussian X_i, Rademacher labels, spectral initialization and
/// eta = c1 sqrt(n) / (r^2 d ||y||). Without a fixed c1, c1 starts at 1 and
/// is halved until the first 10 iterations are monotone in loss.
inline LowRankRun run_lowrank_seed(Index n, std::uint64_t seed, Index iters = 200, Index d = 100, Index r = 4,
                                   std::optional<double> fixed_c1 = std::nullopt) {
  Rng rng(seed);
  std::vector<Matrix> Xs;
  Xs.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) Xs.push_back(rng.normal_matrix(d, d));
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.rademacher();
  const LowRankModel model(std::move(Xs), y, d, r);
  const ParamVector theta0 = lowrank_init(d, r, n, y.norm(), splitmix64(seed ^ 0x696e6974ULL));

  LowRankRun out;
  out.n = n;
  out.seed = seed;
  out.y_norm = y.norm();
  const double base = std::sqrt(static_cast<double>(n)) / (static_cast<double>(r * r * d) * y.norm());
  auto config = [&](double c1, Index steps) {
    OptimConfig oc;
    oc.eta = c1 * base;
    oc.max_iters = steps;
    oc.tol_misfit = 0.0;
    return oc;
  };
  double c1 = fixed_c1.value_or(1.0);
  if (!fixed_c1) {
    for (int halvings = 0; halvings < 60; ++halvings, c1 *= 0.5) {
      try {
        if (loss_nonincreasing(run_gd(model, theta0, config(c1, 10)))) break;
      } catch (const NonFiniteError&) {
      }
    }
  }
  out.c1 = c1;
  out.eta = c1 * base;
  out.trajectory = run_gd(model, theta0, config(c1, iters));
  out.monotone = loss_nonincreasing(out.trajectory);
  return out;
}

inline double median(std::vector<double> xs) {
  require(!xs.empty(), "median: empty input");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

struct LowRankSummary {
  Index n = 0;
  double median_norm_misfit = 0.0;
  double median_norm_dist = 0.0;
  bool all_monotone = true;
  double min_c1 = 1.0;
};

inline LowRankSummary summarize_lowrank(const std::vector<LowRankRun>& runs) {
  require(!runs.empty(), "summarize_lowrank: no runs");
  LowRankSummary s;
  s.n = runs.front().n;
  std::vector<double> misfits, dists;
  for (const LowRankRun& r : runs) {
    misfits.push_back(r.trajectory.rows.back().norm_misfit);
    dists.push_back(r.trajectory.rows.back().norm_dist);
    s.all_monotone = s.all_monotone && r.monotone;
    s.min_c1 = std::min(s.min_c1, r.c1);
  }
  s.median_norm_misfit = median(misfits);
  s.median_norm_dist = median(dists);
  return s;
}

// ---------------------------------------------------------------------------
// SGD drift trace
// ---------------------------------------------------------------------------

struct DriftRow {
  Index iter = 0;
  bool in_half = false;
  Drift drift;
  double potential = 0.0;
};

/// Exact one-step drifts at every recorded state of an SGD run (iterates kept).
inline std::vector<DriftRow> drift_trace(const Model& model, const Trajectory& traj, const AnchorSet& anchors,
                                         double alpha, double nu) {
  require(traj.thetas.size() == traj.rows.size(), "drift_trace: trajectory must keep its iterates");
  const double misfit0 = traj.rows.front().misfit;
  std::vector<DriftRow> out;
  out.reserve(traj.rows.size());
  for (std::size_t k = 0; k < traj.rows.size(); ++k) {
    const TrajectoryRow& row = traj.rows[k];
    DriftRow d;
    d.iter = row.iter;
    d.in_half = in_neighborhood(row.dist_init, row.misfit, misfit0, alpha, nu / 2.0);
    d.drift = exact_conditional_drift(model, traj.thetas[k], traj.eta, anchors, alpha);
    d.potential = row.sgd_potential;
    out.push_back(d);
  }
  return out;
}

}  // namespace overparam
