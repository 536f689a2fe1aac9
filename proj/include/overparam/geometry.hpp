#pragma once

// Empirical Jacobian geometry over a ball and the step sizes, radii and rates
// that follow from it. Every quantity here is measured at finitely many probe
// points; nothing is certified over the continuous ball.

#include "overparam/common.hpp"
#include "overparam/models.hpp"
#include "overparam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace overparam {

enum class DeviationRegime { Bounded, Smooth };

inline std::string to_string(DeviationRegime r) { return r == DeviationRegime::Bounded ? "bounded" : "smooth"; }

inline DeviationRegime parse_regime(const std::string& s) {
  if (s == "bounded") return DeviationRegime::Bounded;
  if (s == "smooth") return DeviationRegime::Smooth;
  throw ContractError("unknown deviation regime '" + s + "' (expected bounded|smooth)");
}

struct SpectrumBounds {
  double alpha = 0.0;      // min probed sigma_min, times (1 - margin)
  double alpha_raw = 0.0;  // min probed sigma_min
  double beta = 0.0;       // max probed ||J||
  double row_bound_B = 0.0;
  double lipschitz_L = 0.0;
  double max_deviation = 0.0;  // max probed ||J(t2) - J(t1)||
  ParamVector worst_pair_first;
  ParamVector worst_pair_second;
  Index probe_count = 0;
  double radius = 0.0;
  ParamVector center;
  Index n = 0;
  Index p = 0;
};

struct ProbeOptions {
  Index samples = 64;
  std::uint64_t seed = 0;
  double alpha_margin = 0.0;  // report alpha_raw * (1 - margin)
  std::int64_t max_entries = 4'000'000;
  std::vector<ParamVector> extra_points;  // e.g. a recorded trajectory
};

namespace detail {

struct ProbeSpectrum {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

/// Smallest and largest singular value of a wide n x p Jacobian. sigma_min is
/// the n-th singular value, zero when n > p.
inline ProbeSpectrum spectrum_of(const Matrix& J) {
  ProbeSpectrum out;
  if (J.size() == 0) return out;
  Eigen::BDCSVD<Matrix> svd(J);
  const Vector& s = svd.singularValues();
  out.sigma_max = s(0);
  out.sigma_min = J.rows() <= J.cols() ? s(J.rows() - 1) : 0.0;
  return out;
}

}  // namespace detail

/// Dense-SVD probe of the Jacobian at the center, at uniform points in the
/// ball and at any extra points. The Lipschitz estimate and the maximal
/// deviation use the pairs (center, x_i) and (x_i, x_{i+1}) in probe order.
inline SpectrumBounds probe_spectrum(const Model& model, const ParamVector& center, double radius,
                                     const ProbeOptions& opts = {}) {
  detail::check_theta(model, center);
  require(radius > 0.0, "probe_spectrum: radius must be positive");
  require(opts.samples >= 1, "probe_spectrum: need at least one sample");
  require(opts.alpha_margin >= 0.0 && opts.alpha_margin < 1.0, "probe_spectrum: margin must lie in [0, 1)");
  const std::int64_t entries = static_cast<std::int64_t>(model.sample_count()) * model.param_dim();
  if (entries > opts.max_entries) {
    throw CapacityError("probe_spectrum: Jacobian has " + std::to_string(entries) +
                        " entries, above the dense SVD cap of " + std::to_string(opts.max_entries));
  }

  std::vector<ParamVector> points;
  points.reserve(static_cast<std::size_t>(opts.samples) + 1 + opts.extra_points.size());
  points.push_back(center);
  Rng rng(opts.seed);
  for (Index s = 0; s < opts.samples; ++s) points.push_back(rng.in_ball(center, radius));
  for (const ParamVector& x : opts.extra_points) {
    detail::check_theta(model, x);
    points.push_back(x);
  }

  std::vector<Matrix> jacobians;
  jacobians.reserve(points.size());
  for (const ParamVector& x : points) jacobians.push_back(model.jacobian_at(x));

  SpectrumBounds out;
  out.center = center;
  out.radius = radius;
  out.n = model.sample_count();
  out.p = model.param_dim();
  out.probe_count = static_cast<Index>(points.size());
  out.alpha_raw = std::numeric_limits<double>::infinity();
  for (const Matrix& J : jacobians) {
    const auto spec = detail::spectrum_of(J);
    out.alpha_raw = std::min(out.alpha_raw, spec.sigma_min);
    out.beta = std::max(out.beta, spec.sigma_max);
    if (J.rows() > 0) out.row_bound_B = std::max(out.row_bound_B, J.rowwise().norm().maxCoeff());
  }
  out.alpha = out.alpha_raw * (1.0 - opts.alpha_margin);

  auto visit_pair = [&](std::size_t a, std::size_t b) {
    const double dist = (points[a] - points[b]).norm();
    const double dev = detail::spectral_norm(jacobians[a] - jacobians[b]);
    if (dev > out.max_deviation || out.worst_pair_first.size() == 0) {
      out.max_deviation = dev;
      out.worst_pair_first = points[a];
      out.worst_pair_second = points[b];
    }
    if (dist > 0.0) out.lipschitz_L = std::max(out.lipschitz_L, dev / dist);
  };
  for (std::size_t i = 1; i < points.size(); ++i) visit_pair(0, i);
  for (std::size_t i = 2; i < points.size(); ++i) visit_pair(i - 1, i);
  return out;
}

inline SpectrumBounds probe_spectrum(const Model& model, const ParamVector& center, double radius,
                                     Index samples, std::uint64_t seed) {
  ProbeOptions opts;
  opts.samples = samples;
  opts.seed = seed;
  return probe_spectrum(model, center, radius, opts);
}

/// Radius, step size and contraction factor of a descent scheme.
struct TheoryPlan {
  double radius_R = 0.0;
  double eta = 0.0;
  double rate = 1.0;  // per-iteration factor on the squared misfit
  DeviationRegime regime = DeviationRegime::Bounded;
  double lambda = 0.5;
  double nu = 3.0;
  double zeta = 0.0;  // GD potential weight (lambda - eta beta^2 / 2) alpha
  double failure_probability = 0.0;  // SGD plans only
};

/// Full-batch GD plan. bounded: eta = lambda / beta^2. smooth: eta =
/// min(lambda, 2(1 - lambda) alpha^2 / (L misfit)) / beta^2. The radius is
/// misfit / ((lambda - eta beta^2 / 2) alpha) and the rate 1 - alpha^2 lambda eta.
inline TheoryPlan gd_plan(const SpectrumBounds& bounds, double initial_misfit, DeviationRegime regime,
                          double lambda = 0.5) {
  require(lambda > 0.0 && lambda <= 1.0, "gd_plan: lambda must lie in (0, 1]");
  require(initial_misfit >= 0.0, "gd_plan: misfit must be nonnegative");
  if (!(bounds.alpha > 0.0)) throw ContractError("gd_plan: alpha is zero, cannot certify a plan");
  require(bounds.beta >= bounds.alpha, "gd_plan: need beta >= alpha");

  const double a2 = bounds.alpha * bounds.alpha;
  const double b2 = bounds.beta * bounds.beta;
  TheoryPlan plan;
  plan.regime = regime;
  plan.lambda = lambda;
  double scale = lambda;
  if (regime == DeviationRegime::Smooth && bounds.lipschitz_L > 0.0 && initial_misfit > 0.0) {
    scale = std::min(lambda, 2.0 * (1.0 - lambda) * a2 / (bounds.lipschitz_L * initial_misfit));
  }
  plan.eta = scale / b2;
  plan.zeta = (lambda - plan.eta * b2 / 2.0) * bounds.alpha;
  plan.radius_R = initial_misfit / plan.zeta;
  plan.rate = 1.0 - a2 * lambda * plan.eta;
  return plan;
}

/// Single-sample SGD plan with neighborhood multiplier nu >= 3.
inline TheoryPlan sgd_plan(const SpectrumBounds& bounds, double initial_misfit, double nu,
                           DeviationRegime regime) {
  require(nu >= 3.0, "sgd_plan: nu must be at least 3");
  require(initial_misfit >= 0.0, "sgd_plan: misfit must be nonnegative");
  if (!(bounds.alpha > 0.0)) throw ContractError("sgd_plan: alpha is zero, cannot certify a plan");
  require(bounds.n >= 1 && bounds.p >= 1, "sgd_plan: bounds carry no problem dimensions");

  const double a = bounds.alpha, b = bounds.beta, B = bounds.row_bound_B;
  TheoryPlan plan;
  plan.regime = regime;
  plan.nu = nu;
  plan.lambda = 0.5;
  double denom = nu * b * b * B * B;
  if (regime == DeviationRegime::Smooth) denom += nu * b * B * bounds.lipschitz_L * initial_misfit;
  plan.eta = a * a / denom;
  plan.radius_R = nu * initial_misfit / a;
  plan.rate = 1.0 - plan.eta * a * a / (2.0 * static_cast<double>(bounds.n));
  plan.zeta = (plan.lambda - plan.eta * b * b / 2.0) * a;
  plan.failure_probability = (4.0 / nu) * std::pow(b / a, 1.0 / static_cast<double>(bounds.p));
  return plan;
}

/// Probe-then-plan: probes at the center alone, sizes the ball from that
/// plan, reprobes over the ball and recomputes, up to `rounds` times or until
/// alpha stops shrinking.
inline std::pair<SpectrumBounds, TheoryPlan> certify_gd_plan(const Model& model, const ParamVector& theta0,
                                                             DeviationRegime regime, double lambda,
                                                             ProbeOptions opts, int rounds = 3) {
  const double misfit0 = residual(model, theta0).norm();
  ProbeOptions center_only = opts;
  center_only.samples = 1;
  SpectrumBounds bounds = probe_spectrum(model, theta0, 1e-12 * (1.0 + theta0.norm()), center_only);
  TheoryPlan plan = gd_plan(bounds, misfit0, regime, lambda);
  for (int k = 0; k < rounds; ++k) {
    const double radius = plan.radius_R > 0.0 ? plan.radius_R : 1.0;
    const SpectrumBounds next = probe_spectrum(model, theta0, radius, opts);
    const bool stable = next.alpha >= bounds.alpha && k > 0;
    bounds = next;
    plan = gd_plan(bounds, misfit0, regime, lambda);
    if (stable) break;
  }
  return {bounds, plan};
}

struct AssumptionReport {
  bool spectrum_holds = false;  // alpha > 0 over every probe
  bool bounded_deviation_holds = false;
  double bounded_threshold = 0.0;  // (1 - lambda) alpha^2 / beta
  double max_deviation = 0.0;
  ParamVector worst_first;
  ParamVector worst_second;
  bool smooth_deviation_holds = false;
  double lipschitz_L = 0.0;
  Index probes = 0;
  DeviationRegime regime = DeviationRegime::Bounded;
  double lambda = 0.5;

  bool passes() const {
    if (!spectrum_holds) return false;
    return regime == DeviationRegime::Bounded ? bounded_deviation_holds : smooth_deviation_holds;
  }

  std::string label() const { return "empirical over " + std::to_string(probes) + " probes"; }
};

/// Compares the probed deviation with (1 - lambda) alpha^2 / beta and checks
/// that a finite Lipschitz estimate exists. Results hold only at the probes.
inline AssumptionReport verify_assumptions(const Model& model, const SpectrumBounds& bounds,
                                           DeviationRegime regime, double lambda = 0.5) {
  require(bounds.probe_count > 0, "verify_assumptions: bounds are not populated");
  require_dim(bounds.p, model.param_dim(), "verify_assumptions: bounds dimension");
  AssumptionReport rep;
  rep.regime = regime;
  rep.lambda = lambda;
  rep.probes = bounds.probe_count;
  rep.spectrum_holds = bounds.alpha > 0.0 && std::isfinite(bounds.beta);
  rep.bounded_threshold = bounds.beta > 0.0 ? (1.0 - lambda) * bounds.alpha * bounds.alpha / bounds.beta : 0.0;
  rep.max_deviation = bounds.max_deviation;
  rep.worst_first = bounds.worst_pair_first;
  rep.worst_second = bounds.worst_pair_second;
  rep.bounded_deviation_holds = bounds.max_deviation <= rep.bounded_threshold;
  rep.lipschitz_L = bounds.lipschitz_L;
  rep.smooth_deviation_holds = std::isfinite(bounds.lipschitz_L);
  return rep;
}

/// Flat key=value block.
inline std::string format_bounds(const SpectrumBounds& b) {
  std::ostringstream os;
  os.precision(17);
  os << "alpha=" << b.alpha << "\n"
     << "alpha_raw=" << b.alpha_raw << "\n"
     << "beta=" << b.beta << "\n"
     << "B=" << b.row_bound_B << "\n"
     << "L=" << b.lipschitz_L << "\n"
     << "max_deviation=" << b.max_deviation << "\n"
     << "radius=" << b.radius << "\n"
     << "probes=" << b.probe_count << "\n";
  return os.str();
}

inline std::string format_plan(const TheoryPlan& p) {
  std::ostringstream os;
  os.precision(17);
  os << "regime=" << to_string(p.regime) << "\n"
     << "lambda=" << p.lambda << "\n"
     << "R=" << p.radius_R << "\n"
     << "eta=" << p.eta << "\n"
     << "rate=" << p.rate << "\n"
     << "zeta=" << p.zeta << "\n";
  if (p.failure_probability > 0.0) os << "nu=" << p.nu << "\n" << "failure_probability=" << p.failure_probability << "\n";
  return os.str();
}

inline std::string format_assumptions(const AssumptionReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "assumptions=" << r.label() << "\n"
     << "spectrum_holds=" << (r.spectrum_holds ? 1 : 0) << "\n"
     << "bounded_deviation_holds=" << (r.bounded_deviation_holds ? 1 : 0) << "\n"
     << "bounded_threshold=" << r.bounded_threshold << "\n"
     << "max_deviation=" << r.max_deviation << "\n"
     << "smooth_deviation_holds=" << (r.smooth_deviation_holds ? 1 : 0) << "\n"
     << "passes=" << (r.passes() ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace overparam
