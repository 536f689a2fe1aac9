#pragma once

// Flat key = value run configuration. '#' starts a comment, arrays are
// comma-separated, unknown keys are rejected. to_text() emits every key in a
// fixed order so parse(to_text(c)) == c.

#include "overparam/common.hpp"

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace overparam {

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  // model
  std::string family = "linear";  // linear | glm | lowrank | net
  Index n = 2;
  Index p = 2;  // linear, glm
  Index d = 4;  // lowrank matrix side, net input dimension
  Index r = 1;  // lowrank factor rank
  Index k = 1;  // net hidden width
  std::string activation = "identity";  // identity | tanh_linear | softplus_linear
  double activation_c = 0.3;
  std::string data = "gaussian";  // gaussian | explicit
  std::vector<double> X;  // explicit data, row-major
  std::string labels = "gaussian";  // gaussian | rademacher | planted | explicit
  std::vector<double> y;
  std::vector<double> v;  // net output weights; random unit vector when empty
  std::uint64_t data_seed = 1;
  std::string init = "zeros";  // zeros | gaussian | lowrank | explicit
  double init_scale = 1.0;
  std::vector<double> theta0;
  std::uint64_t init_seed = 2;
  int quadrature_nodes = 16;

  // optimizer
  std::string optimizer = "gd";  // gd | sgd | pl
  std::optional<double> eta;  // empty means auto
  Index iters = 1000;
  std::optional<double> tol;  // empty means the default tolerance
  std::uint64_t opt_seed = 3;
  Index record_every = 1;

  // diagnostics
  Index probe_samples = 64;
  std::optional<double> probe_radius;  // empty means the plan radius
  double alpha_margin = 0.0;
  std::string regime = "smooth";  // bounded | smooth
  double lambda = 0.5;
  double nu = 8.0;
  std::optional<Index> K;  // empty means ceil(sqrt(n) beta / alpha)
  bool anchors = false;
  Index sgd_runs = 1;
  std::optional<double> mu;  // pl: empty means alpha^2
  std::optional<double> smoothness;  // pl: empty means beta^2 for linear models

  std::string out_dir;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError("config: empty value for '" + key + "'");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError("config: '" + key + "' expects a real number, got '" + t + "'");
  }
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + t + "'");
  }
  return v;
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (t.empty() || t[0] == '-' || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + t + "'");
  }
  return v;
}

inline std::vector<double> parse_array(const std::string& key, const std::string& text) {
  std::vector<double> out;
  const std::string t = trim(text);
  if (t.empty()) return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

inline std::string format_array(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_double(xs[i]);
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "on" || t == "true" || t == "1") return true;
  if (t == "off" || t == "false" || t == "0") return false;
  throw ConfigError("config: '" + key + "' expects on|off, got '" + t + "'");
}

inline void check_choice(const std::string& key, const std::string& value, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (value == o) return;
  std::string msg = "config: '" + key + "' must be one of";
  for (const char* o : options) msg += std::string(" ") + o;
  throw ConfigError(msg + ", got '" + value + "'");
}

}  // namespace detail

/// Applies one key = value assignment. Throws ConfigError on unknown keys or
/// malformed values.
inline void set_config_value(RunConfig& c, const std::string& key_in, const std::string& value_in) {
  using namespace detail;
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  auto positive = [&](long long v) {
    if (v < 1) throw ConfigError("config: '" + key + "' must be at least 1");
    return static_cast<Index>(v);
  };
  auto auto_or_real = [&]() -> std::optional<double> {
    if (value == "auto" || value == "default") return std::nullopt;
    return parse_double(key, value);
  };

  if (key == "family") {
    check_choice(key, value, {"linear", "glm", "lowrank", "net"});
    c.family = value;
  } else if (key == "n") {
    c.n = positive(parse_integer(key, value));
  } else if (key == "p") {
    c.p = positive(parse_integer(key, value));
  } else if (key == "d") {
    c.d = positive(parse_integer(key, value));
  } else if (key == "r") {
    c.r = positive(parse_integer(key, value));
  } else if (key == "k") {
    c.k = positive(parse_integer(key, value));
  } else if (key == "activation") {
    check_choice(key, value, {"identity", "tanh_linear", "softplus_linear"});
    c.activation = value;
  } else if (key == "activation_c") {
    c.activation_c = parse_double(key, value);
  } else if (key == "data") {
    check_choice(key, value, {"gaussian", "explicit"});
    c.data = value;
  } else if (key == "X") {
    c.X = parse_array(key, value);
  } else if (key == "labels") {
    check_choice(key, value, {"gaussian", "rademacher", "planted", "explicit"});
    c.labels = value;
  } else if (key == "y") {
    c.y = parse_array(key, value);
  } else if (key == "v") {
    c.v = parse_array(key, value);
  } else if (key == "data_seed") {
    c.data_seed = parse_seed(key, value);
  } else if (key == "init") {
    check_choice(key, value, {"zeros", "gaussian", "lowrank", "explicit"});
    c.init = value;
  } else if (key == "init_scale") {
    c.init_scale = parse_double(key, value);
  } else if (key == "theta0") {
    c.theta0 = parse_array(key, value);
  } else if (key == "init_seed") {
    c.init_seed = parse_seed(key, value);
  } else if (key == "quadrature_nodes") {
    c.quadrature_nodes = static_cast<int>(positive(parse_integer(key, value)));
  } else if (key == "optimizer") {
    check_choice(key, value, {"gd", "sgd", "pl"});
    c.optimizer = value;
  } else if (key == "eta") {
    c.eta = auto_or_real();
    if (c.eta && !(*c.eta > 0.0)) throw ConfigError("config: 'eta' must be positive or auto");
  } else if (key == "iters") {
    c.iters = positive(parse_integer(key, value));
  } else if (key == "tol") {
    c.tol = auto_or_real();
    if (c.tol && *c.tol < 0.0) throw ConfigError("config: 'tol' must be nonnegative");
  } else if (key == "opt_seed") {
    c.opt_seed = parse_seed(key, value);
  } else if (key == "record_every") {
    c.record_every = positive(parse_integer(key, value));
  } else if (key == "probe_samples") {
    c.probe_samples = positive(parse_integer(key, value));
  } else if (key == "probe_radius") {
    c.probe_radius = auto_or_real();
    if (c.probe_radius && !(*c.probe_radius > 0.0)) throw ConfigError("config: 'probe_radius' must be positive");
  } else if (key == "alpha_margin") {
    c.alpha_margin = parse_double(key, value);
    if (c.alpha_margin < 0.0 || c.alpha_margin >= 1.0) throw ConfigError("config: 'alpha_margin' must lie in [0, 1)");
  } else if (key == "regime") {
    check_choice(key, value, {"bounded", "smooth"});
    c.regime = value;
  } else if (key == "lambda") {
    c.lambda = parse_double(key, value);
    if (!(c.lambda > 0.0 && c.lambda <= 1.0)) throw ConfigError("config: 'lambda' must lie in (0, 1]");
  } else if (key == "nu") {
    c.nu = parse_double(key, value);
    if (!(c.nu >= 3.0)) throw ConfigError("config: 'nu' must be at least 3");
  } else if (key == "K") {
    if (value == "auto") {
      c.K.reset();
    } else {
      c.K = positive(parse_integer(key, value));
    }
  } else if (key == "anchors") {
    c.anchors = parse_bool(key, value);
  } else if (key == "sgd_runs") {
    c.sgd_runs = positive(parse_integer(key, value));
  } else if (key == "mu") {
    c.mu = auto_or_real();
    if (c.mu && !(*c.mu > 0.0)) throw ConfigError("config: 'mu' must be positive");
  } else if (key == "smoothness") {
    c.smoothness = auto_or_real();
    if (c.smoothness && !(*c.smoothness > 0.0)) throw ConfigError("config: 'smoothness' must be positive");
  } else if (key == "out_dir") {
    c.out_dir = value;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

inline RunConfig parse_config(std::istream& in) {
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(c, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  return parse_config(in);
}

inline std::string to_text(const RunConfig& c) {
  using detail::format_array;
  using detail::format_double;
  auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string("auto"); };
  std::ostringstream os;
  os << "family = " << c.family << "\n"
     << "n = " << c.n << "\n"
     << "p = " << c.p << "\n"
     << "d = " << c.d << "\n"
     << "r = " << c.r << "\n"
     << "k = " << c.k << "\n"
     << "activation = " << c.activation << "\n"
     << "activation_c = " << format_double(c.activation_c) << "\n"
     << "data = " << c.data << "\n"
     << "X = " << format_array(c.X) << "\n"
     << "labels = " << c.labels << "\n"
     << "y = " << format_array(c.y) << "\n"
     << "v = " << format_array(c.v) << "\n"
     << "data_seed = " << c.data_seed << "\n"
     << "init = " << c.init << "\n"
     << "init_scale = " << format_double(c.init_scale) << "\n"
     << "theta0 = " << format_array(c.theta0) << "\n"
     << "init_seed = " << c.init_seed << "\n"
     << "quadrature_nodes = " << c.quadrature_nodes << "\n"
     << "optimizer = " << c.optimizer << "\n"
     << "eta = " << opt(c.eta) << "\n"
     << "iters = " << c.iters << "\n"
     << "tol = " << opt(c.tol) << "\n"
     << "opt_seed = " << c.opt_seed << "\n"
     << "record_every = " << c.record_every << "\n"
     << "probe_samples = " << c.probe_samples << "\n"
     << "probe_radius = " << opt(c.probe_radius) << "\n"
     << "alpha_margin = " << format_double(c.alpha_margin) << "\n"
     << "regime = " << c.regime << "\n"
     << "lambda = " << format_double(c.lambda) << "\n"
     << "nu = " << format_double(c.nu) << "\n"
     << "K = " << (c.K ? std::to_string(*c.K) : std::string("auto")) << "\n"
     << "anchors = " << (c.anchors ? "on" : "off") << "\n"
     << "sgd_runs = " << c.sgd_runs << "\n"
     << "mu = " << opt(c.mu) << "\n"
     << "smoothness = " << opt(c.smoothness) << "\n"
     << "out_dir = " << c.out_dir << "\n";
  return os.str();
}

}  // namespace overparam
