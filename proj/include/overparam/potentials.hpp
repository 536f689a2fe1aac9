#pragma once

// Anchor packings, the two potentials, exact one-step SGD drifts and
// neighborhood exit monitoring.

#include "overparam/common.hpp"
#include "overparam/descent.hpp"
#include "overparam/geometry.hpp"
#include "overparam/models.hpp"
#include "overparam/rng.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace overparam {

class PackingInfeasibleError : public Error {
 public:
  PackingInfeasibleError(const std::string& what, Index achieved) : Error(what), achieved_(achieved) {}
  Index achieved() const { return achieved_; }

 private:
  Index achieved_;
};

struct AnchorSet {
  std::vector<ParamVector> anchors;
  double epsilon = 0.0;
  double radius_Rp = 0.0;
  ParamVector center;

  Index K() const { return static_cast<Index>(anchors.size()); }

  double min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < anchors.size(); ++a)
      for (std::size_t b = a + 1; b < anchors.size(); ++b) best = std::min(best, (anchors[a] - anchors[b]).norm());
    return best;
  }

  double max_center_distance() const {
    double worst = 0.0;
    for (const ParamVector& p : anchors) worst = std::max(worst, (p - center).norm());
    return worst;
  }

  /// Exhaustive pairwise and containment check.
  bool valid() const {
    if (anchors.empty()) return false;
    return min_pairwise_distance() >= epsilon && max_center_distance() <= radius_Rp;
  }

  /// (1/K) sum_l ||theta - p_l||.
  double mean_distance(const ParamVector& theta) const {
    double total = 0.0;
    for (const ParamVector& p : anchors) total += (theta - p).norm();
    return total / static_cast<double>(anchors.size());
  }

  SgdPotentialSpec potential_spec(double alpha) const { return SgdPotentialSpec{anchors, alpha}; }
};

/// Anchor count at the supermartingale threshold: ceil(sqrt(n) beta / alpha).
inline Index default_anchor_count(Index n, double alpha, double beta) {
  require(alpha > 0.0 && beta >= alpha, "default_anchor_count: need 0 < alpha <= beta");
  return static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(n)) * beta / alpha));
}

/// Packing radius 1.25 (beta/alpha)^(1/p) misfit0 / alpha and separation misfit0 / alpha.
struct PackingGeometry {
  double epsilon = 0.0;
  double radius_Rp = 0.0;
};

inline PackingGeometry packing_geometry(double misfit0, double alpha, double beta, Index p) {
  require(alpha > 0.0 && beta >= alpha && p >= 1, "packing_geometry: need 0 < alpha <= beta, p >= 1");
  return {misfit0 / alpha, 1.25 * std::pow(beta / alpha, 1.0 / static_cast<double>(p)) * misfit0 / alpha};
}

/// Rejection sampling: the center is the first anchor, later candidates are
/// uniform in the ball and kept when at least epsilon from every kept anchor.
inline AnchorSet build_packing(const ParamVector& center, double radius_Rp, double epsilon, Index K,
                               std::uint64_t seed, std::int64_t max_attempts = -1) {
  require(epsilon > 0.0, "build_packing: epsilon must be positive");
  require(radius_Rp > 0.0, "build_packing: radius must be positive");
  require(K >= 1, "build_packing: K must be at least 1");
  AnchorSet out;
  out.epsilon = epsilon;
  out.radius_Rp = radius_Rp;
  out.center = center;
  out.anchors.push_back(center);
  if (K == 1) return out;
  if (epsilon > 2.0 * radius_Rp) {
    throw PackingInfeasibleError("build_packing: epsilon " + std::to_string(epsilon) + " exceeds the ball diameter " +
                                     std::to_string(2.0 * radius_Rp) + "; achieved 1 of " + std::to_string(K),
                                 1);
  }
  const std::int64_t cap = max_attempts > 0 ? max_attempts : 100000 * static_cast<std::int64_t>(K);
  Rng rng(seed);
  for (std::int64_t attempt = 0; attempt < cap && out.K() < K; ++attempt) {
    ParamVector candidate = rng.in_ball(center, radius_Rp);
    bool ok = true;
    for (const ParamVector& p : out.anchors) {
      if ((candidate - p).norm() < epsilon) {
        ok = false;
        break;
      }
    }
    if (ok) out.anchors.push_back(std::move(candidate));
  }
  if (out.K() < K) {
    throw PackingInfeasibleError("build_packing: achieved " + std::to_string(out.K()) + " of " + std::to_string(K) +
                                     " anchors after " + std::to_string(cap) + " attempts",
                                 out.K());
  }
  return out;
}

/// misfit + zeta * path_or_dist.
inline double gd_potential(double misfit, double path_or_dist, double zeta) {
  require(misfit >= 0.0 && path_or_dist >= 0.0 && zeta >= 0.0, "gd_potential: inputs must be nonnegative");
  return misfit + zeta * path_or_dist;
}

struct PotentialValue {
  double gd_value = 0.0;   // misfit + zeta * dist, zeta = alpha / 4 unless given
  double sgd_value = 0.0;  // 12 misfit + alpha * mean anchor distance
  double misfit_term = 0.0;
  double distance_term = 0.0;  // alpha * mean anchor distance
  std::optional<double> init_bound;  // 14 (beta/alpha)^(1/p) misfit0, at theta0 with beta given
  bool init_bound_holds = true;
};

inline PotentialValue sgd_potential(const Model& model, const ParamVector& theta, const AnchorSet& anchors,
                                    double alpha, std::optional<double> beta = std::nullopt,
                                    std::optional<double> zeta = std::nullopt) {
  detail::check_theta(model, theta);
  require(!anchors.anchors.empty(), "sgd_potential: anchor set is empty");
  require(alpha >= 0.0, "sgd_potential: alpha must be nonnegative");
  const double misfit = residual(model, theta).norm();
  PotentialValue v;
  v.misfit_term = 12.0 * misfit;
  v.distance_term = alpha * anchors.mean_distance(theta);
  v.sgd_value = v.misfit_term + v.distance_term;
  const double dist0 = anchors.center.size() == theta.size() ? (theta - anchors.center).norm() : 0.0;
  v.gd_value = misfit + zeta.value_or(alpha / 4.0) * dist0;
  if (beta && alpha > 0.0 && anchors.center.size() == theta.size() && theta == anchors.center) {
    v.init_bound = 14.0 * std::pow(*beta / alpha, 1.0 / static_cast<double>(theta.size())) * misfit;
    v.init_bound_holds = v.sgd_value <= *v.init_bound;
  }
  return v;
}

/// Exact one-step expectations over the n equally likely SGD indices.
struct Drift {
  double misfit = 0.0;     // E||r+|| - ||r||
  double distance = 0.0;   // E d_P(theta+) - d_P(theta)
  double potential = 0.0;  // E V(theta+) - V(theta)
  double squared_misfit_ratio = 0.0;  // E||r+||^2 / ||r||^2, 0 at r = 0
  double misfit_bound_gap = 0.0;  // E||r+|| - (||r|| - eta/(4n) ||J^T r||^2 / ||r||)
};

inline constexpr Index kEnumerationCap = 10000;

inline Drift exact_conditional_drift(const Model& model, const ParamVector& theta, double eta,
                                     const AnchorSet& anchors, double alpha) {
  detail::check_theta(model, theta);
  const Index n = model.sample_count();
  if (n > kEnumerationCap) {
    throw CapacityError("exact_conditional_drift: n = " + std::to_string(n) + " exceeds the enumeration cap " +
                        std::to_string(kEnumerationCap));
  }
  require(!anchors.anchors.empty(), "exact_conditional_drift: anchor set is empty");
  const Vector r = residual(model, theta);
  const double misfit = r.norm();
  const double dist = anchors.mean_distance(theta);

  double mean_misfit = 0.0, mean_sq = 0.0, mean_dist = 0.0;
  for (Index i = 0; i < n; ++i) {
    const ParamVector next = theta - (eta * r[i]) * model.jacobian_row_at(theta, i);
    const double m = residual(model, next).norm();
    mean_misfit += m;
    mean_sq += m * m;
    mean_dist += anchors.mean_distance(next);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mean_misfit *= inv_n;
  mean_sq *= inv_n;
  mean_dist *= inv_n;

  Drift out;
  out.misfit = mean_misfit - misfit;
  out.distance = mean_dist - dist;
  out.potential = 12.0 * out.misfit + alpha * out.distance;
  out.squared_misfit_ratio = misfit > 0.0 ? mean_sq / (misfit * misfit) : 0.0;
  if (misfit > 0.0) {
    const double g2 = model.gradient_from_residual(theta, r).squaredNorm();
    out.misfit_bound_gap = mean_misfit - (misfit - eta / (4.0 * static_cast<double>(n)) * g2 / misfit);
  }
  return out;
}

/// Membership in B(scale): ||theta - theta0|| <= scale misfit0 / alpha and
/// ||r|| <= (2 scale / 3) misfit0.
inline bool in_neighborhood(double dist_init, double misfit, double misfit0, double alpha, double scale) {
  return dist_init <= scale * misfit0 / alpha && misfit <= 2.0 * scale / 3.0 * misfit0;
}

struct NeighborhoodReport {
  std::optional<Index> exit_half;  // first iteration outside B(nu/2)
  std::optional<Index> exit_full;  // first iteration outside B(nu)
  double nu = 0.0;
  bool never_left_half() const { return !exit_half; }
};

inline std::string format_exit(const std::optional<Index>& t) { return t ? std::to_string(*t) : "never"; }

/// First exit times from B(nu/2) and B(nu), from the recorded misfit and
/// distance columns.
inline NeighborhoodReport neighborhood_monitor(const Trajectory& traj, const TheoryPlan& plan, double alpha) {
  require(!traj.rows.empty(), "neighborhood_monitor: empty trajectory");
  require(alpha > 0.0, "neighborhood_monitor: alpha must be positive");
  require(traj.stride == 1, "neighborhood_monitor: trajectory must be recorded with stride 1");
  NeighborhoodReport rep;
  rep.nu = plan.nu;
  const double misfit0 = traj.rows.front().misfit;
  for (const TrajectoryRow& row : traj.rows) {
    if (!rep.exit_half && !in_neighborhood(row.dist_init, row.misfit, misfit0, alpha, plan.nu / 2.0))
      rep.exit_half = row.iter;
    if (!rep.exit_full && !in_neighborhood(row.dist_init, row.misfit, misfit0, alpha, plan.nu)) {
      rep.exit_full = row.iter;
      break;
    }
  }
  return rep;
}

/// Header "K epsilon radius p", then one anchor per line.
inline void write_packing(std::ostream& os, const AnchorSet& set) {
  std::ostringstream buf;
  buf.precision(17);
  const Index p = set.center.size();
  buf << set.K() << ' ' << set.epsilon << ' ' << set.radius_Rp << ' ' << p << '\n';
  for (const ParamVector& a : set.anchors) {
    for (Index j = 0; j < p; ++j) buf << (j ? " " : "") << a[j];
    buf << '\n';
  }
  os << buf.str();
}

inline AnchorSet read_packing(std::istream& is, const ParamVector& center) {
  AnchorSet out;
  Index K = 0, p = 0;
  if (!(is >> K >> out.epsilon >> out.radius_Rp >> p)) throw ContractError("read_packing: malformed header");
  require_dim(p, center.size(), "read_packing: anchor dimension");
  require(K >= 1, "read_packing: K must be at least 1");
  out.center = center;
  for (Index k = 0; k < K; ++k) {
    ParamVector a(p);
    for (Index j = 0; j < p; ++j)
      if (!(is >> a[j])) throw ContractError("read_packing: truncated anchor " + std::to_string(k));
    out.anchors.push_back(std::move(a));
  }
  return out;
}

}  // namespace overparam
