// overparam: run, verify, lower-bound, experiment-lowrank, sgd-martingale.
// Exit codes: 0 all checks pass, 1 bound violation or no certificate,
// 2 configuration or parameter error, 3 capacity or I/O error.

#include "overparam/overparam.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace overparam;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<Index> iters;
  std::string eta;
  std::optional<double> nu;
  std::optional<double> lambda;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c, bool needs_config) {
  auto* opt = app->add_option("--config", c.config, "key = value configuration file");
  if (needs_config) opt->required();
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "optimizer seed");
  app->add_option("--iters", c.iters, "iteration budget")->check(CLI::PositiveNumber);
  app->add_option("--eta", c.eta, "step size or 'auto'");
  app->add_option("--nu", c.nu, "neighborhood scale for SGD");
  app->add_option("--lambda", c.lambda, "GD plan parameter in (0, 1]");
  app->add_flag("--quiet", c.quiet, "print nothing on success");
}

RunConfig load_with_overrides(const Common& c) {
  RunConfig cfg = load_config(c.config);
  if (c.seed) cfg.opt_seed = *c.seed;
  if (c.iters) set_config_value(cfg, "iters", std::to_string(*c.iters));
  if (!c.eta.empty()) set_config_value(cfg, "eta", c.eta);
  if (c.nu) set_config_value(cfg, "nu", detail::format_double(*c.nu));
  if (c.lambda) set_config_value(cfg, "lambda", detail::format_double(*c.lambda));
  return cfg;
}

fs::path output_dir(const Common& c, const std::string& from_config) {
  fs::path dir;
  if (!c.out.empty()) {
    dir = c.out;
  } else if (!from_config.empty()) {
    dir = from_config;
  } else if (const char* env = std::getenv("OVERPARAM_OUT_DIR")) {
    dir = env;
  } else {
    dir = ".";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_bounds(const fs::path& path, const BoundReport& rep) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  write_bound_report_csv(os, rep);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

int cmd_run(const Common& c) {
  const RunConfig cfg = load_with_overrides(c);
  const fs::path dir = output_dir(c, cfg.out_dir);
  const PipelineResult res = run_pipeline(cfg);
  save_trajectory_csv((dir / "trajectory.csv").string(), res.trajectory);
  write_bounds(dir / "bounds.csv", res.report);
  write_text(dir / "summary.txt", res.summary);
  const bool fail = res.report.any_fail();
  if (!c.quiet || fail) std::cout << format_bound_report(res.report);
  return fail ? 1 : 0;
}

int cmd_verify(const Common& c) {
  const RunConfig cfg = load_with_overrides(c);
  const VerifyResult v = run_verify(cfg);
  if (!c.quiet) std::cout << v.text;
  if (!c.out.empty()) write_text(output_dir(c, "") / "verify.txt", v.text);
  return v.assumptions.passes() && v.gd ? 0 : 1;
}

struct LowerBoundArgs {
  double alpha = 1.0;
  double beta = 2.0;
  Index p = 2;
  std::string mode = "tight-upper";
};

int cmd_lower_bound(const Common& c, const LowerBoundArgs& a) {
  const LowerBoundMode mode = parse_lower_bound_mode(a.mode);
  const LowerBoundResult res = run_lower_bound(a.alpha, a.beta, a.p, mode, c.iters.value_or(10000));
  const fs::path dir = output_dir(c, "");
  const LowerBoundInstance& inst = res.instance;
  std::string instance = "# rows of X, then y, theta0 and the planted optimum\n";
  auto line = [](const Eigen::Ref<const Vector>& v) {
    std::vector<double> xs(v.data(), v.data() + v.size());
    return detail::format_array(xs) + "\n";
  };
  for (Index i = 0; i < inst.model.data().rows(); ++i) instance += "X" + std::to_string(i) + " = " + line(inst.model.data().row(i).transpose());
  instance += "y = " + line(inst.model.labels());
  instance += "theta0 = " + line(inst.theta0);
  instance += "theta_star = " + line(inst.theta_star);
  write_text(dir / "instance.txt", instance);
  save_trajectory_csv((dir / "trajectory.csv").string(), res.trajectory);
  BoundReport rep = res.report;
  write_bounds(dir / "bounds.csv", rep);
  char buf[256];
  std::snprintf(buf, sizeof buf, "command=lower-bound\nmode=%s\nalpha=%.17g\nbeta=%.17g\np=%ld\neta=%.17g\ndeviation=%.17g\n",
                a.mode.c_str(), a.alpha, a.beta, static_cast<long>(a.p), res.trajectory.eta, res.deviation);
  write_text(dir / "summary.txt", buf);
  if (!c.quiet) std::cout << buf << format_bound_report(rep);
  return rep.any_fail() ? 1 : 0;
}

struct LowRankArgs {
  std::vector<Index> ns = {25, 50, 100, 200};
  Index seeds = 1;
  Index d = 100;
  Index r = 4;
  std::optional<double> c1;
};

int cmd_experiment_lowrank(const Common& c, const LowRankArgs& a) {
  for (Index n : a.ns) {
    if (n < 1 || n > 200) throw ContractError("experiment-lowrank: n must lie in [1, 200]");
  }
  const fs::path dir = output_dir(c, "");
  const std::uint64_t base = c.seed.value_or(0);
  const Index iters = c.iters.value_or(200);
  std::string summary = "command=experiment-lowrank\n";
  summary += std::string("c1_mode=") + (a.c1 ? "fixed" : "auto (halved from 1 until the first 10 steps are monotone)") + "\n";
  char buf[256];
  bool all_monotone = true;
  for (Index n : a.ns) {
    std::vector<LowRankRun> runs;
    for (Index s = 0; s < a.seeds; ++s) {
      const std::uint64_t seed = base + static_cast<std::uint64_t>(s);
      runs.push_back(run_lowrank_seed(n, seed, iters, a.d, a.r, a.c1));
      const LowRankRun& run = runs.back();
      save_trajectory_csv((dir / ("lowrank_n" + std::to_string(n) + "_seed" + std::to_string(seed) + ".csv")).string(),
                          run.trajectory);
      std::snprintf(buf, sizeof buf, "n=%ld seed=%llu y_norm=%.17g c1=%.17g eta=%.17g monotone=%d final_norm_misfit=%.17g final_norm_dist=%.17g\n",
                    static_cast<long>(n), static_cast<unsigned long long>(seed), run.y_norm, run.c1, run.eta, run.monotone ? 1 : 0,
                    run.trajectory.rows.back().norm_misfit, run.trajectory.rows.back().norm_dist);
      summary += buf;
    }
    const LowRankSummary s = summarize_lowrank(runs);
    all_monotone = all_monotone && s.all_monotone;
    std::snprintf(buf, sizeof buf, "median n=%ld norm_misfit=%.17g norm_dist=%.17g\n", static_cast<long>(n),
                  s.median_norm_misfit, s.median_norm_dist);
    summary += buf;
  }
  write_text(dir / "summary.txt", summary);
  if (!c.quiet) std::cout << summary;
  return all_monotone ? 0 : 1;
}

int cmd_sgd_martingale(const Common& c) {
  RunConfig cfg = load_with_overrides(c);
  cfg.optimizer = "sgd";
  cfg.anchors = true;
  cfg.sgd_runs = 1;
  cfg.record_every = 1;
  const fs::path dir = output_dir(c, cfg.out_dir);
  const Problem prob = build_problem(cfg);
  const PipelineResult res = run_pipeline(cfg);
  const std::vector<DriftRow> trace = drift_trace(*prob.model, res.trajectory, *res.anchors, res.bounds.alpha, cfg.nu);
  std::string csv = "iter,in_half,misfit,potential,drift_misfit,drift_distance,drift_potential,misfit_bound_gap\n";
  char buf[512];
  double worst = -std::numeric_limits<double>::infinity();
  for (const DriftRow& d : trace) {
    const TrajectoryRow& row = res.trajectory.rows[static_cast<std::size_t>(&d - trace.data())];
    std::snprintf(buf, sizeof buf, "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long>(d.iter),
                  d.in_half ? 1 : 0, row.misfit, d.potential, d.drift.misfit, d.drift.distance, d.drift.potential,
                  d.drift.misfit_bound_gap);
    csv += buf;
    if (d.in_half) worst = std::max(worst, d.drift.potential);
  }
  save_trajectory_csv((dir / "trajectory.csv").string(), res.trajectory);
  write_text(dir / "drift.csv", csv);
  write_bounds(dir / "bounds.csv", res.report);
  std::snprintf(buf, sizeof buf, "max_drift_inside_half=%.17g\n", worst);
  write_text(dir / "summary.txt", res.summary + buf);
  const bool fail = res.report.any_fail();
  if (!c.quiet || fail) std::cout << res.summary << buf << format_bound_report(res.report);
  return fail ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory bounds for gradient methods on overparameterized least squares"};
  app.require_subcommand(1);
  Common run_c, verify_c, lb_c, lr_c, mart_c;
  LowerBoundArgs lb;
  LowRankArgs lr;

  auto* run = app.add_subcommand("run", "run an optimizer and check the trajectory bounds");
  add_common(run, run_c, true);
  auto* verify = app.add_subcommand("verify", "probe the Jacobian spectrum and print the plans");
  add_common(verify, verify_c, true);
  auto* lower = app.add_subcommand("lower-bound", "GD on the two-sample instance attaining the lower bound");
  add_common(lower, lb_c, false);
  lower->add_option("--alpha", lb.alpha, "smallest singular value")->required();
  lower->add_option("--beta", lb.beta, "largest singular value")->required();
  lower->add_option("-p,--p", lb.p, "parameter dimension (>= 2)");
  lower->add_option("--mode", lb.mode, "tight-upper or tight-lower");
  auto* lowrank = app.add_subcommand("experiment-lowrank", "low-rank regression study");
  add_common(lowrank, lr_c, false);
  lowrank->add_option("--n", lr.ns, "sample counts");
  lowrank->add_option("--seeds", lr.seeds, "seeds per sample count")->check(CLI::PositiveNumber);
  lowrank->add_option("--d", lr.d, "matrix side");
  lowrank->add_option("--r", lr.r, "factor rank");
  lowrank->add_option("--c1", lr.c1, "fixed step constant (default: auto-tuned)");
  auto* mart = app.add_subcommand("sgd-martingale", "exact one-step drift of the SGD potential along a run");
  add_common(mart, mart_c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(run_c);
    if (*verify) return cmd_verify(verify_c);
    if (*lower) return cmd_lower_bound(lb_c, lb);
    if (*lowrank) return cmd_experiment_lowrank(lr_c, lr);
    if (*mart) return cmd_sgd_martingale(mart_c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "parameter error: " << e.what() << '\n';
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 3;
  } catch (const CertificationError& e) {
    std::cerr << "cannot certify: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
