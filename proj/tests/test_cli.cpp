#include "overparam/overparam.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace overparam;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

// Runs the command-line tool with stdout and stderr captured.
Outcome cli(const std::string& args) {
  const std::string cmd = std::string("\"") + OVERPARAM_CLI_PATH + "\" " + args + " 2>&1";
  Outcome out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.output.append(buf, got);
  const int status = pclose(pipe);
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

std::string example(const std::string& name) { return std::string(OVERPARAM_SOURCE_DIR) + "/examples_cfg/" + name; }

fs::path scratch_root() { return fs::temp_directory_path() / ("overparam_cli_test_" + std::to_string(::getpid())); }

class ScratchCleanup : public ::testing::Environment {
 public:
  void TearDown() override { fs::remove_all(scratch_root()); }
};

const auto* const kCleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

fs::path scratch(const std::string& name) {
  const fs::path dir = scratch_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::string arg(const fs::path& p) { return "\"" + p.string() + "\""; }

const char* kDiagConfig =
    "family = linear\nn = 2\np = 2\ndata = explicit\nX = 1, 0, 0, 2\nlabels = explicit\ny = 0, 4\n"
    "optimizer = gd\neta = auto\niters = 100\ntol = 0\nprobe_samples = 16\n";

}  // namespace

TEST(CliRun, TrivialLinearHalves) {
  const fs::path dir = scratch("trivial");
  const Outcome o = cli("run --config " + arg(example("linear_trivial.cfg")) + " --out " + arg(dir) + " --quiet");
  ASSERT_EQ(o.code, 0) << o.output;
  const std::string text = slurp(dir / "trajectory.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "iter,loss,misfit,dist_init,path_len,step_norm,gd_potential,sgd_potential,norm_misfit,norm_dist");
  const Trajectory t = load_trajectory_csv((dir / "trajectory.csv").string());
  ASSERT_EQ(t.size(), 41u);
  for (const TrajectoryRow& row : t.rows) {
    EXPECT_EQ(row.misfit, std::ldexp(1.0, -static_cast<int>(row.iter)));
    EXPECT_TRUE(std::isnan(row.sgd_potential));
  }
  EXPECT_TRUE(fs::exists(dir / "bounds.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.txt"));
}

TEST(CliRun, GlmAtTheoremStepPasses) {
  const RunConfig cfg = load_config(example("glm.cfg"));
  const Problem prob = build_problem(cfg);
  const auto& glm = dynamic_cast<const GLMModel&>(*prob.model);
  const double norm = detail::spectral_norm(glm.data());
  const double Gamma = glm.activation().Gamma();
  const double eta = 1.0 / (Gamma * Gamma * norm * norm);
  const fs::path dir = scratch("glm");
  const Outcome o = cli("run --config " + arg(example("glm.cfg")) + " --out " + arg(dir) + " --eta " +
                        detail::format_double(eta) + " --quiet");
  EXPECT_EQ(o.code, 0) << o.output;
  const std::string bounds = slurp(dir / "bounds.csv");
  EXPECT_NE(bounds.find("glm_distance_envelope"), std::string::npos);
  EXPECT_EQ(bounds.find(",fail\n"), std::string::npos) << bounds;
}

TEST(CliRun, ViolatedStepFails) {
  const fs::path dir = scratch("bad_step");
  const Outcome o = cli("run --config " + arg(example("glm_bad_step.cfg")) + " --out " + arg(dir) + " --quiet");
  EXPECT_EQ(o.code, 1) << o.output;
  EXPECT_NE(slurp(dir / "bounds.csv").find(",fail\n"), std::string::npos);
  EXPECT_NE(o.output.find("FAIL"), std::string::npos);
}

TEST(CliRun, ShippedConfigsExitCodes) {
  for (const char* name : {"linear_trivial.cfg", "glm.cfg", "lowrank.cfg", "net.cfg", "sgd_linear.cfg",
                           "pl_linear.cfg"}) {
    const fs::path dir = scratch(std::string("shipped_") + name);
    const Outcome o = cli("run --config " + arg(example(name)) + " --out " + arg(dir) + " --quiet");
    EXPECT_EQ(o.code, 0) << name << "\n" << o.output;
  }
}

TEST(CliRun, DeterministicBytes) {
  for (const char* name : {"glm.cfg", "sgd_linear.cfg"}) {
    const fs::path a = scratch(std::string("det_a_") + name), b = scratch(std::string("det_b_") + name);
    ASSERT_EQ(cli("run --config " + arg(example(name)) + " --out " + arg(a) + " --quiet").code, 0);
    ASSERT_EQ(cli("run --config " + arg(example(name)) + " --out " + arg(b) + " --quiet").code, 0);
    for (const char* file : {"trajectory.csv", "bounds.csv", "summary.txt"}) {
      EXPECT_EQ(slurp(a / file), slurp(b / file)) << name << " " << file;
    }
  }
}

TEST(CliRun, SeedOverrideChangesSgd) {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  cli("run --config " + arg(example("sgd_linear.cfg")) + " --out " + arg(a) + " --quiet");
  cli("run --config " + arg(example("sgd_linear.cfg")) + " --out " + arg(b) + " --seed 99 --quiet");
  EXPECT_NE(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
}

TEST(CliRun, OutputDirFromEnvironment) {
  const fs::path dir = scratch("env");
  const std::string args = "run --config " + arg(example("linear_trivial.cfg")) + " --quiet";
  const std::string cmd = "OVERPARAM_OUT_DIR=" + arg(dir) + " ";
  FILE* pipe = popen((cmd + "\"" + OVERPARAM_CLI_PATH + "\" " + args).c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  EXPECT_EQ(WEXITSTATUS(pclose(pipe)), 0);
  EXPECT_TRUE(fs::exists(dir / "trajectory.csv"));
}

TEST(CliExitCodes, ConfigErrors) {
  const fs::path dir = scratch("config_errors");
  write_file(dir / "unknown.cfg", "family = linear\nbogus_key = 1\n");
  write_file(dir / "badvalue.cfg", "family = linear\niters = -4\n");
  EXPECT_EQ(cli("run --config " + arg(dir / "unknown.cfg") + " --out " + arg(dir)).code, 2);
  EXPECT_EQ(cli("run --config " + arg(dir / "badvalue.cfg") + " --out " + arg(dir)).code, 2);
  EXPECT_EQ(cli("run --config " + arg(example("glm.cfg")) + " --eta banana --out " + arg(dir)).code, 2);
  EXPECT_EQ(cli("run").code, 2);
  EXPECT_EQ(cli("no-such-command").code, 2);
}

TEST(CliExitCodes, IoErrors) {
  const fs::path dir = scratch("io_errors");
  EXPECT_EQ(cli("run --config " + arg(dir / "missing.cfg") + " --out " + arg(dir)).code, 3);
  write_file(dir / "blocker", "not a directory\n");
  EXPECT_EQ(cli("run --config " + arg(example("linear_trivial.cfg")) + " --out " + arg(dir / "blocker" / "sub"))
                .code,
            3);
}

TEST(CliExitCodes, CapacityError) {
  const fs::path dir = scratch("capacity");
  write_file(dir / "big.cfg",
             "family = linear\nn = 1000\np = 4001\nlabels = gaussian\noptimizer = gd\neta = auto\n");
  // the dense Jacobian has 4001000 entries, just above the probe cap
  EXPECT_EQ(cli("verify --config " + arg(dir / "big.cfg") + " --quiet").code, 3);
}

TEST(CliLowerBound, TightInstances) {
  for (const std::string args : {"--alpha 1 --beta 2 --p 2 --mode tight-upper", "--alpha 1 --beta 1 --p 2 --mode tight-upper",
                                 "--alpha 1 --beta 1 --p 2 --mode tight-lower"}) {
    const fs::path dir = scratch("lower_" + std::to_string(std::hash<std::string>{}(args)));
    const Outcome o = cli("lower-bound " + args + " --out " + arg(dir) + " --quiet");
    ASSERT_EQ(o.code, 0) << args << "\n" << o.output;
    const auto kv = key_values(slurp(dir / "summary.txt"));
    EXPECT_LE(std::stod(kv.at("deviation")), 1e-8) << args;
    EXPECT_TRUE(fs::exists(dir / "instance.txt"));
    const std::string traj = slurp(dir / "trajectory.csv");
    EXPECT_NE(traj.find(kRawDistFootnote), std::string::npos);
  }
}

TEST(CliLowerBound, OrderingViolated) {
  const fs::path dir = scratch("lower_bad");
  EXPECT_EQ(cli("lower-bound --alpha 2 --beta 1 --out " + arg(dir)).code, 2);
  EXPECT_EQ(cli("lower-bound --alpha 1 --beta 2 --mode sideways --out " + arg(dir)).code, 2);
}

TEST(CliVerify, DiagonalLinear) {
  const fs::path dir = scratch("verify_diag");
  write_file(dir / "diag.cfg", kDiagConfig);
  const Outcome o = cli("verify --config " + arg(dir / "diag.cfg"));
  ASSERT_EQ(o.code, 0) << o.output;
  const auto kv = key_values(o.output);
  EXPECT_EQ(kv.at("alpha"), "1");
  EXPECT_EQ(kv.at("beta"), "2");
  EXPECT_EQ(kv.at("L"), "0");
  EXPECT_EQ(kv.at("gd_eta"), "0.125");
}

TEST(CliVerify, GlmSmallRadiusBoundedDeviation) {
  const fs::path dir = scratch("verify_glm");
  std::string text = slurp(example("glm.cfg"));
  text += "probe_radius = 0.001\nregime = bounded\n";
  write_file(dir / "glm.cfg", text);
  const Outcome o = cli("verify --config " + arg(dir / "glm.cfg"));
  EXPECT_EQ(o.code, 0) << o.output;
  EXPECT_EQ(key_values(o.output).at("bounded_deviation_holds"), "1");
}

TEST(CliVerify, NetSpectrumNearClosedForm) {
  const fs::path dir = scratch("verify_net");
  write_file(dir / "net.cfg",
             "family = net\nn = 10\nd = 30\nk = 8\nactivation = tanh_linear\nactivation_c = 0.3\n"
             "data_seed = 31\ninit = zeros\noptimizer = gd\neta = auto\nprobe_samples = 16\nprobe_radius = 0.001\n");
  const Outcome o = cli("verify --config " + arg(dir / "net.cfg"));
  const auto kv = key_values(o.output);
  ASSERT_TRUE(kv.count("analytic_beta")) << o.output;
  // near W = 0 every unit sits at phi'(0) = Gamma, so the top singular value is Gamma ||X||
  EXPECT_NEAR(std::stod(kv.at("beta")) / std::stod(kv.at("analytic_beta")), 1.0, 0.05);
  EXPECT_GE(std::stod(kv.at("alpha")), 0.95 * std::stod(kv.at("analytic_alpha")));
}

TEST(CliLowRank, ExperimentFiles) {
  const fs::path dir = scratch("lowrank");
  const Outcome o = cli("experiment-lowrank --n 25 --seeds 1 --out " + arg(dir) + " --quiet");
  ASSERT_EQ(o.code, 0) << o.output;
  const Trajectory t = load_trajectory_csv((dir / "lowrank_n25_seed0.csv").string());
  EXPECT_EQ(t.back().iter, 200);
  EXPECT_LE(t.back().norm_misfit, 0.05);
  EXPECT_NE(slurp(dir / "summary.txt").find("c1="), std::string::npos);
}

TEST(CliLowRank, RademacherNorm) {
  const fs::path dir = scratch("lowrank_norm");
  const Outcome o = cli("experiment-lowrank --n 100 --seeds 1 --iters 3 --out " + arg(dir) + " --quiet");
  ASSERT_EQ(o.code, 0) << o.output;
  const std::string summary = slurp(dir / "summary.txt");
  EXPECT_NE(summary.find("n=100 seed=0 y_norm=10 "), std::string::npos) << summary;
}

TEST(CliSgdMartingale, DriftFile) {
  const fs::path dir = scratch("martingale");
  const Outcome o = cli("sgd-martingale --config " + arg(example("sgd_linear.cfg")) + " --out " + arg(dir) +
                        " --iters 100 --quiet");
  EXPECT_EQ(o.code, 0) << o.output;
  const std::string drift = slurp(dir / "drift.csv");
  EXPECT_EQ(drift.substr(0, drift.find('\n')),
            "iter,in_half,misfit,potential,drift_misfit,drift_distance,drift_potential,misfit_bound_gap");
  EXPECT_EQ(std::count(drift.begin(), drift.end(), '\n'), 102);
}

TEST(ConfigFormat, RoundTripShippedConfigs) {
  for (const auto& entry : fs::directory_iterator(std::string(OVERPARAM_SOURCE_DIR) + "/examples_cfg")) {
    const RunConfig a = load_config(entry.path().string());
    const RunConfig b = parse_config_text(to_text(a));
    EXPECT_TRUE(a == b) << entry.path();
    EXPECT_EQ(to_text(b), to_text(a));
  }
}

TEST(ConfigFormat, Syntax) {
  const RunConfig c = parse_config_text("# comment\n  family = glm  \n\nX = 1, 2,3\neta = auto\nK = 4\n");
  EXPECT_EQ(c.family, "glm");
  EXPECT_EQ(c.X, (std::vector<double>{1, 2, 3}));
  EXPECT_FALSE(c.eta.has_value());
  EXPECT_EQ(c.K, 4);
  EXPECT_THROW(parse_config_text("nonsense = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("family glm\n"), ConfigError);
  EXPECT_THROW(parse_config_text("family = cubic\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/overparam.cfg"), IoError);
}

TEST(CsvFormat, RoundTripExact) {
  Rng rng(3);
  const GLMModel m(rng.normal_matrix(4, 9), rng.normal_vector(4), Activation::tanh_linear(0.3));
  OptimConfig c;
  c.eta = 0.05;
  c.max_iters = 60;
  c.tol_misfit = 0.0;
  c.zeta = 0.1;
  const Trajectory t = run_gd(m, rng.normal_vector(9), c);
  std::stringstream ss;
  write_trajectory_csv(ss, t);
  const Trajectory back = read_trajectory_csv(ss);
  EXPECT_TRUE(same_rows(t, back));

  SgdPotentialSpec spec{{ParamVector::Zero(9)}, 1.0};
  c.seed = 5;
  const Trajectory s = run_sgd(m, ParamVector::Zero(9), c, spec);
  std::stringstream ss2;
  write_trajectory_csv(ss2, s);
  const std::string text = ss2.str();
  EXPECT_NE(text.find(kRawDistFootnote), std::string::npos);
  const Trajectory back2 = read_trajectory_csv(ss2);
  EXPECT_TRUE(same_rows(s, back2));
  EXPECT_TRUE(back2.norm_dist_raw);
}
