// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "overparam/overparam.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace overparam;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

std::string csv_of(const Trajectory& t) {
  std::ostringstream os;
  write_trajectory_csv(os, t);
  return os.str();
}

std::string config_path(const std::string& name) { return std::string(OVERPARAM_SOURCE_DIR) + "/examples_cfg/" + name; }

// ---------------------------------------------------------------------------

Outcome jacobians() {
  struct Case {
    std::string name;
    std::shared_ptr<Model> model;
  };
  Rng rng(101);
  std::vector<Case> cases;
  cases.push_back({"linear", std::make_shared<LinearModel>(rng.normal_matrix(5, 8), rng.normal_vector(5))});
  cases.push_back({"glm tanh", std::make_shared<GLMModel>(rng.normal_matrix(5, 8), rng.normal_vector(5),
                                                          Activation::tanh_linear(0.3))});
  cases.push_back({"glm softplus", std::make_shared<GLMModel>(rng.normal_matrix(5, 8), rng.normal_vector(5),
                                                              Activation::softplus_linear(0.3))});
  {
    const Vector v = random_unit_vector(rng, 3);
    cases.push_back({"net", std::make_shared<ShallowNetModel>(rng.normal_matrix(4, 5), rng.normal_vector(4), v,
                                                              Activation::tanh_linear(0.3))});
  }
  {
    std::vector<Matrix> Xs;
    for (int i = 0; i < 4; ++i) Xs.push_back(rng.normal_matrix(6, 6));
    cases.push_back({"lowrank", std::make_shared<LowRankModel>(Xs, rng.normal_vector(4), 6, 2)});
  }
  Outcome out;
  double worst = 0.0;
  for (const Case& c : cases) {
    for (int k = 0; k < 20; ++k) {
      const ParamVector theta = rng.normal_vector(c.model->param_dim());
      const Matrix J = jacobian(*c.model, theta);
      const Matrix F = fd_jacobian(*c.model, theta);
      const double err = (J - F).norm() / std::max(F.norm(), 1e-300);
      worst = std::max(worst, err);
      if (err > 1e-5) {
        out.pass = false;
        out.detail += c.name + " err=" + fmt(err) + " ";
      }
    }
  }
  out.detail += "max relative error " + fmt(worst) + " over 5 models x 20 points";
  return out;
}

struct GlmSetup {
  GLMModel model;
  ParamVector theta0;
  double eta;
};

GlmSetup glm_setup(std::uint64_t seed) {
  Rng rng(seed);
  const Matrix X = rng.normal_matrix(20, 50);
  const Vector y = rng.normal_vector(20);
  const ParamVector theta0 = rng.normal_vector(50) / std::sqrt(50.0);
  const Activation act = Activation::tanh_linear(0.3);
  const double norm = detail::spectral_norm(X);
  return {GLMModel(X, y, act), theta0, 1.0 / (act.Gamma() * act.Gamma() * norm * norm)};
}

Trajectory glm_run(const GlmSetup& s) {
  OptimConfig oc;
  oc.eta = s.eta;
  oc.max_iters = 2000;
  oc.tol_misfit = 0.0;
  oc.keep_iterates = true;
  return run_gd(s.model, s.theta0, oc);
}

Outcome glm_convergence() {
  Outcome out;
  double worst_slack = -1.0, worst_final = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GlmSetup s = glm_setup(1000 + seed);
    const Trajectory t = glm_run(s);
    const ParamVector star = closest_optimum_glm(s.model, s.theta0);
    const BoundReport rep = check_glm_theorem(t, s.model, star);
    const BoundRow* env = rep.find("glm_distance_envelope");
    const double d0 = (s.theta0 - star).norm();
    // slack is envelope - distance, measured relative to the initial distance
    worst_slack = std::max(worst_slack, env->max_violation / d0);
    const double final_ratio = (t.final_theta - star).norm() / d0;
    worst_final = std::max(worst_final, final_ratio);
    if (env->max_violation > 1e-9 * d0 || final_ratio > 1e-6 || t.rows.back().iter != 2000) out.pass = false;
  }
  out.detail = "worst envelope violation " + fmt(worst_slack) + " (relative), worst final distance ratio " +
               fmt(worst_final) + ", 10 seeds";
  return out;
}

Outcome lower_bound_equality() {
  Outcome out;
  const std::vector<std::pair<double, double>> pairs = {{1, 2}, {1, 10}, {3, 3}};
  double worst = 0.0;
  for (auto [a, b] : pairs) {
    const LowerBoundResult res = run_lower_bound(a, b, 3, LowerBoundMode::TightUpper, 10000);
    const double dev = tight_line_deviation(res.trajectory, b);
    worst = std::max(worst, dev);
    if (dev > 1e-8) out.pass = false;
  }
  out.detail = "max deviation from the tight line " + fmt(worst) + " (relative)";
  return out;
}

Outcome universal_lower_bound() {
  Outcome out;
  double worst = -1.0;
  std::string bad;
  const std::vector<std::string> shipped = {"linear_trivial.cfg", "glm.cfg",        "lowrank.cfg",
                                            "net.cfg",            "sgd_linear.cfg", "pl_linear.cfg"};
  for (const std::string& name : shipped) {
    const RunConfig cfg = load_config(config_path(name));
    const Problem prob = build_problem(cfg);
    const PipelineResult res = run_pipeline(cfg);
    for (const Trajectory& t : res.runs) {
      if (t.thetas.size() != t.rows.size()) continue;
      ProbeOptions o;
      o.samples = 1;
      o.extra_points = t.thetas;
      double reach = 1e-9;
      for (const TrajectoryRow& r : t.rows) reach = std::max(reach, r.dist_init);
      const double beta = probe_spectrum(*prob.model, prob.theta0, reach, o).beta;
      const BoundRow row = check_lower_bound(t, beta).rows.front();
      const double m0 = t.rows.front().misfit;
      worst = std::max(worst, row.max_violation / std::max(m0, 1e-300));
      if (row.max_violation > 1e-9 * m0) bad += name + " ";
    }
  }
  // the lower-bound instances themselves
  for (auto mode : {LowerBoundMode::TightUpper, LowerBoundMode::TightLower}) {
    const LowerBoundResult lb = run_lower_bound(1.0, 2.0, 2, mode, 2000);
    if (lb.report.rows.front().status != CheckStatus::Pass) bad += "lower-bound-" + to_string(mode) + " ";
  }
  out.pass = bad.empty();
  out.detail = "worst relative violation " + fmt(worst) + " across linear, glm, lowrank, net, sgd, pl runs";
  if (!bad.empty()) out.detail += "; failing: " + bad;
  return out;
}

Outcome gd_potential_monotone() {
  Outcome out;
  struct Case {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Case> cases;
  for (std::uint64_t seed : {1, 2, 3}) {
    RunConfig c;
    c.family = "glm";
    c.n = 20;
    c.p = 50;
    c.activation = "tanh_linear";
    c.data_seed = 500 + seed;
    c.init = "gaussian";
    c.init_scale = 0.1;
    c.iters = 1000;
    c.probe_samples = 32;
    cases.push_back({"glm seed " + std::to_string(seed), c});
  }
  for (std::uint64_t seed : {1, 2}) {
    RunConfig c;
    c.family = "lowrank";
    c.d = 20;
    c.r = 2;
    c.n = 10;
    c.labels = "rademacher";
    c.init = "lowrank";
    c.data_seed = 600 + seed;
    c.init_seed = 700 + seed;
    c.iters = 500;
    c.probe_samples = 16;
    cases.push_back({"lowrank seed " + std::to_string(seed), c});
  }
  int checked = 0;
  double worst = -1.0;
  for (const Case& c : cases) {
    const PipelineResult res = run_pipeline(c.cfg);
    if (!res.assumptions.passes()) continue;
    ++checked;
    const Trajectory& t = res.trajectory;
    const double v0 = t.rows.front().gd_potential;
    for (std::size_t k = 1; k < t.rows.size(); ++k) {
      const double rise = t.rows[k].gd_potential - t.rows[k - 1].gd_potential;
      worst = std::max(worst, rise / v0);
      if (!(rise <= 1e-10 * v0)) {
        out.pass = false;
        out.detail += c.name + " rises at t=" + std::to_string(t.rows[k].iter) + " ";
        break;
      }
    }
  }
  if (checked == 0) out.pass = false;
  out.detail += std::to_string(checked) + " runs with passing assumptions, worst relative step increase " + fmt(worst);
  return out;
}

RunConfig sgd_instance() {
  RunConfig c;
  c.family = "linear";
  c.n = 2;
  c.p = 2;
  c.data = "explicit";
  c.X = {1, 0, 0, 2};
  c.labels = "explicit";
  c.y = {0, 4};
  c.optimizer = "sgd";
  c.nu = 8.0;
  c.tol = 0.0;
  return c;
}

Outcome sgd_supermartingale() {
  RunConfig c = sgd_instance();
  c.iters = 500;
  c.anchors = true;
  c.K = static_cast<Index>(std::ceil(std::sqrt(2.0) * 2.0));
  c.opt_seed = 77;
  const PipelineResult res = run_pipeline(c);
  const Problem prob = build_problem(c);
  const std::vector<DriftRow> trace = drift_trace(*prob.model, res.trajectory, *res.anchors, res.bounds.alpha, c.nu);
  Outcome out;
  double worst = -std::numeric_limits<double>::infinity();
  int inside = 0;
  for (const DriftRow& d : trace) {
    if (!d.in_half) continue;
    ++inside;
    worst = std::max(worst, d.drift.potential);
    if (!(d.drift.potential <= 1e-12)) out.pass = false;
  }
  if (inside == 0) out.pass = false;
  out.detail = "eta=" + fmt(res.used.eta) + " K=" + std::to_string(res.anchors->K()) + ", " + std::to_string(inside) +
               " states inside B(nu/2), max drift " + fmt(worst);
  return out;
}

Outcome sgd_expected_decay() {
  RunConfig c = sgd_instance();
  c.iters = 250;
  c.sgd_runs = 500;
  c.opt_seed = 9000;
  const PipelineResult res = run_pipeline(c);
  const BoundReport rep = check_sgd_theorem(res.runs, res.used, res.bounds, 250);
  Outcome out;
  for (const BoundRow& r : rep.rows) {
    if (r.status != CheckStatus::Pass) out.pass = false;
    out.detail += r.name + " margin " + fmt(r.max_violation - r.tolerance) + "; ";
  }
  out.detail += "500 seeds";
  return out;
}

Outcome lowrank_experiment() {
  Outcome out;
  std::vector<LowRankSummary> sums;
  for (Index n : {25, 50, 100, 200}) {
    std::vector<LowRankRun> runs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) runs.push_back(run_lowrank_seed(n, 4000 + seed, 200));
    sums.push_back(summarize_lowrank(runs));
  }
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const LowRankSummary& s = sums[i];
    out.detail += "n=" + std::to_string(s.n) + " misfit " + fmt(s.median_norm_misfit) + " dist " +
                  fmt(s.median_norm_dist) + (s.all_monotone ? "" : " non-monotone") + "; ";
    if (s.n <= 100 && s.median_norm_misfit > 0.1) out.pass = false;
    if (i > 0 && s.median_norm_dist < sums[i - 1].median_norm_dist) out.pass = false;
    if (!s.all_monotone) out.pass = false;
  }
  return out;
}

Outcome lowrank_spectrum() {
  const Index d = 20, r = 2, n = 10;
  Rng rng(31337);
  std::vector<Matrix> Xs;
  for (Index i = 0; i < n; ++i) Xs.push_back(rng.normal_matrix(d, d));
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = rng.rademacher();
  const LowRankModel model(Xs, y, d, r);
  const ParamVector theta0 = lowrank_init(d, r, n, y.norm(), 31338);
  const SpectrumBounds b = probe_spectrum(model, theta0, 1e-9, 1, 5);
  const double scale = std::sqrt(y.norm()) / std::pow(static_cast<double>(r * n), 0.25);
  const double lo = 0.005 * scale * std::sqrt(static_cast<double>(d * r));
  const double hi = 100.0 * scale * std::sqrt(static_cast<double>(d)) * static_cast<double>(r);
  Outcome out;
  out.pass = b.alpha >= lo && b.beta <= hi;
  out.detail = "alpha=" + fmt(b.alpha) + " (>= " + fmt(lo) + "), beta=" + fmt(b.beta) + " (<= " + fmt(hi) + ")";
  return out;
}

Outcome pl_suite() {
  const RunConfig cfg = load_config(config_path("pl_linear.cfg"));
  const PipelineResult res = run_pipeline(cfg);
  Outcome out;
  for (const char* name : {"pl_loss_envelope", "pl_path_length", "pl_zero_loss_distance"}) {
    const BoundRow* row = res.report.find(name);
    if (!row || row->status != CheckStatus::Pass) {
      out.pass = false;
      out.detail += std::string(name) + " not passing; ";
    }
  }
  const Trajectory& t = res.trajectory;
  out.detail += "eta=" + fmt(t.eta) + ", final loss " + fmt(t.rows.back().loss) + " after " +
                std::to_string(t.rows.back().iter) + " steps, path " + fmt(t.rows.back().path_len);
  return out;
}

struct NetSetup {
  ShallowNetModel model;
  ParamVector theta0;
};

NetSetup net_setup(std::uint64_t seed) {
  Rng rng(seed);
  const Matrix X = rng.normal_matrix(10, 30);
  const Vector v = random_unit_vector(rng, 8);
  const Vector y = rng.normal_vector(10);
  const ParamVector theta0 = rng.normal_vector(8 * 30) / std::sqrt(30.0);
  return {ShallowNetModel(X, y, v, Activation::tanh_linear(0.3)), theta0};
}

Trajectory net_run(const NetSetup& s) {
  OptimConfig oc;
  oc.eta = net_step_size(s.model, residual(s.model, s.theta0).norm());
  oc.max_iters = 2000;
  oc.tol_misfit = 0.0;
  return run_gd(s.model, s.theta0, oc);
}

Outcome shallow_net() {
  Outcome out;
  double worst = -1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NetSetup s = net_setup(2000 + seed);
    const Trajectory t = net_run(s);
    const BoundReport rep = check_net_theorem(t, s.model);
    for (const BoundRow& r : rep.rows) {
      worst = std::max(worst, r.max_violation);
      if (r.status != CheckStatus::Pass) {
        out.pass = false;
        out.detail += r.name + " fails for seed " + std::to_string(seed) + "; ";
      }
    }
  }
  out.detail += "worst violation " + fmt(worst) + " over 5 seeds";
  return out;
}

Outcome determinism() {
  Outcome out;
  std::vector<std::pair<std::string, std::function<std::string()>>> runs;
  runs.push_back({"glm", [] { return csv_of(glm_run(glm_setup(1000))); }});
  runs.push_back({"lower-bound", [] { return csv_of(run_lower_bound(1, 2, 3, LowerBoundMode::TightUpper).trajectory); }});
  runs.push_back({"sgd", [] {
                    RunConfig c = sgd_instance();
                    c.iters = 500;
                    c.anchors = true;
                    c.opt_seed = 77;
                    return csv_of(run_pipeline(c).trajectory);
                  }});
  runs.push_back({"lowrank", [] { return csv_of(run_lowrank_seed(25, 4000, 200).trajectory); }});
  runs.push_back({"pl", [] { return csv_of(run_pipeline(load_config(config_path("pl_linear.cfg"))).trajectory); }});
  runs.push_back({"net", [] { return csv_of(net_run(net_setup(2000))); }});
  for (auto& [name, fn] : runs) {
    if (fn() != fn()) {
      out.pass = false;
      out.detail += name + " differs; ";
    }
  }
  out.detail += std::to_string(runs.size()) + " runs repeated";
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all = {
      {1, "jacobian correctness", 10, jacobians},
      {2, "glm convergence", 30, glm_convergence},
      {3, "lower-bound equality", 5, lower_bound_equality},
      {4, "universal lower bound", 120, universal_lower_bound},
      {5, "gd potential monotone", 120, gd_potential_monotone},
      {6, "sgd exact supermartingale", 10, sgd_supermartingale},
      {7, "sgd expected decay", 60, sgd_expected_decay},
      {8, "low-rank experiment", 300, lowrank_experiment},
      {9, "low-rank jacobian spectrum", 10, lowrank_spectrum},
      {10, "pl suite", 5, pl_suite},
      {11, "shallow net", 60, shallow_net},
      {12, "determinism", 120, determinism},
  };
  int failed = 0;
  for (const Criterion& c : all) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      o.pass = false;
      o.detail += "; over the time budget";
    }
    if (!o.pass) ++failed;
    std::printf("%s  %2d %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
