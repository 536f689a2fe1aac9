#pragma once

// Trajectory CSV. Numbers use 17 significant digits so a read reproduces the
// in-memory rows exactly; NaN (an absent potential) is written as an empty
// field. A trailing '#' line flags raw norm_dist values.

#include "overparam/config.hpp"
#include "overparam/descent.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace overparam {

inline constexpr const char* kTrajectoryHeader =
    "iter,loss,misfit,dist_init,path_len,step_norm,gd_potential,sgd_potential,norm_misfit,norm_dist";
inline constexpr const char* kRawDistFootnote = "# norm_dist: raw dist_init (initial point is the origin)";

namespace detail {
inline void append_number(std::string& out, double x) {
  if (std::isnan(x)) return;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}
}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const TrajectoryRow& r : traj.rows) {
    out += std::to_string(r.iter);
    for (double x : {r.loss, r.misfit, r.dist_init, r.path_len, r.step_norm, r.gd_potential, r.sgd_potential,
                     r.norm_misfit, r.norm_dist}) {
      out += ',';
      detail::append_number(out, x);
    }
    out += '\n';
  }
  if (traj.norm_dist_raw) {
    out += kRawDistFootnote;
    out += '\n';
  }
  os << out;
}

inline void save_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  write_trajectory_csv(os, traj);
  if (!os) throw IoError("write failed for '" + path + "'");
}

/// Rows and the raw-distance flag; everything else in Trajectory is left default.
inline Trajectory read_trajectory_csv(std::istream& is) {
  Trajectory traj;
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) throw IoError("trajectory csv: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == kRawDistFootnote) traj.norm_dist_raw = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 10) throw IoError("trajectory csv: expected 10 fields, got " + std::to_string(fields.size()));
    auto num = [](const std::string& s) { return s.empty() ? kEmpty : std::strtod(s.c_str(), nullptr); };
    TrajectoryRow r;
    r.iter = static_cast<Index>(std::strtoll(fields[0].c_str(), nullptr, 10));
    r.loss = num(fields[1]);
    r.misfit = num(fields[2]);
    r.dist_init = num(fields[3]);
    r.path_len = num(fields[4]);
    r.step_norm = num(fields[5]);
    r.gd_potential = num(fields[6]);
    r.sgd_potential = num(fields[7]);
    r.norm_misfit = num(fields[8]);
    r.norm_dist = num(fields[9]);
    traj.rows.push_back(r);
  }
  return traj;
}

inline Trajectory load_trajectory_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path + "'");
  return read_trajectory_csv(is);
}

/// Field-by-field equality with NaN == NaN.
inline bool same_rows(const Trajectory& a, const Trajectory& b) {
  if (a.rows.size() != b.rows.size() || a.norm_dist_raw != b.norm_dist_raw) return false;
  auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const TrajectoryRow& x = a.rows[i];
    const TrajectoryRow& y = b.rows[i];
    if (x.iter != y.iter || !eq(x.loss, y.loss) || !eq(x.misfit, y.misfit) || !eq(x.dist_init, y.dist_init) ||
        !eq(x.path_len, y.path_len) || !eq(x.step_norm, y.step_norm) || !eq(x.gd_potential, y.gd_potential) ||
        !eq(x.sgd_potential, y.sgd_potential) || !eq(x.norm_misfit, y.norm_misfit) || !eq(x.norm_dist, y.norm_dist))
      return false;
  }
  return true;
}

}  // namespace overparam
