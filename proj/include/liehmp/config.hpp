#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "liehmp/eg_hmp.hpp"
#include "liehmp/errors.hpp"
#include "liehmp/hmp.hpp"
#include "liehmp/io.hpp"
#include "liehmp/lie_group.hpp"
#include "liehmp/satellite.hpp"

namespace liehmp {

/// Switching point to compare the optimizer's result against. The matrix is
/// kept as given; `g_s` is its nearest rotation.
struct ReferencePoint {
  Eigen::Matrix3d given;
  double deviation = 0.0;
  So3::Element g_s;
  double t_s = 0.0;
};

struct RunConfig {
  HybridProblem<So3> problem;
  So3::Element g_s0;
  double t_s0 = 0.0;
  SolverControls solver;
  EGConfig eg;
  std::string output_dir = "out";
  bool emit_plots = false;
  std::optional<ReferencePoint> reference;
  /// Raw problem block, echoed into summaries.
  io::json problem_json;
  /// Messages produced while loading (matrix projections).
  std::vector<std::string> log;
};

namespace config_detail {

inline void allow_keys(const io::json& j, const std::string& where,
                       std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + "." + it.key() + ": unknown field");
}

inline double number(const io::json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + ": must be finite");
  return x;
}

inline double positive(const io::json& j, const std::string& where) {
  const double x = number(j, where);
  if (!(x > 0.0)) throw ConfigError(where + ": must be positive");
  return x;
}

inline int integer(const io::json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

/// Nearest rotation to m (polar factor).
inline Eigen::Matrix3d polar(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

inline So3::Element rotation(const So3& group, const io::json& j, const std::string& where,
                             std::vector<std::string>& log, double tol = 1e-6) {
  Eigen::Matrix3d m;
  try {
    m = io::matrix_from_json<3, 3>(j, where);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const double err = group.membership_error(m);
  if (!(err <= tol)) {
    throw ConfigError(where + ": not a rotation (deviation " + io::fmt(err) + " exceeds " +
                      io::fmt(tol) + ")");
  }
  if (err == 0.0) return So3::Element(m);
  log.push_back(where + ": projected onto SO(3) (deviation " + io::fmt(err) + ")");
  return So3::Element(polar(m));
}

inline PhaseSpec<3> phase(const io::json& j, const std::string& where) {
  allow_keys(j, where, {"id", "channels", "drift", "weights", "bounds"});
  PhaseSpec<3> p;
  p.id = j.value("id", where);
  if (!j.contains("channels") || !j["channels"].is_array())
    throw ConfigError(where + ".channels: required array of channel indices");
  for (std::size_t i = 0; i < j["channels"].size(); ++i)
    p.channels.push_back(integer(j["channels"][i], where + ".channels"));
  if (j.contains("drift")) {
    try {
      p.drift = io::matrix_from_json<3, 1>(j["drift"], where + ".drift");
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("weights")) {
    if (!j["weights"].is_array()) throw ConfigError(where + ".weights: expected an array");
    for (const auto& w : j["weights"]) p.weights.push_back(positive(w, where + ".weights"));
  }
  if (j.contains("bounds")) {
    if (!j["bounds"].is_array()) throw ConfigError(where + ".bounds: expected an array");
    for (const auto& b : j["bounds"]) {
      if (b.is_null()) {
        p.bounds.emplace_back();
      } else if (b.is_array() && b.size() == 2) {
        p.bounds.push_back(ControlBound{number(b[0], where + ".bounds"), number(b[1], where + ".bounds")});
      } else {
        throw ConfigError(where + ".bounds: entries are null or [lo, hi]");
      }
    }
  }
  try {
    p.validate();
  } catch (const InvalidPhase& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return p;
}

}  // namespace config_detail

/**
 * @brief Parses and validates a run configuration.
 *
 * Matrices are 9-element row-major arrays. Channel indices are zero-based.
 * The optional surface is the level set g(r, c) = offset; the optional jump
 * multiplies the state by a fixed rotation on the left or right.
 */
inline RunConfig parse_config(const So3& group, const io::json& j) {
  using namespace config_detail;
  allow_keys(j, "config",
             {"problem", "integrator", "shooting", "eg", "output_dir", "emit_plots", "reference"});
  RunConfig c;
  if (!j.contains("problem")) throw ConfigError("config.problem: required");
  const auto& p = j["problem"];
  allow_keys(p, "problem",
             {"t0", "tf", "g0", "gf", "phase1", "phase2", "ts0", "gs0", "surface", "jump"});
  for (const char* k : {"t0", "tf", "g0", "gf", "phase1", "phase2", "ts0", "gs0"})
    if (!p.contains(k)) throw ConfigError(std::string("problem.") + k + ": required");
  c.problem_json = p;
  auto& pr = c.problem;
  pr.t0 = number(p["t0"], "problem.t0");
  pr.tf = number(p["tf"], "problem.tf");
  if (!(pr.t0 < pr.tf)) throw ConfigError("problem.tf: must exceed problem.t0");
  pr.g0 = rotation(group, p["g0"], "problem.g0", c.log);
  pr.gf = rotation(group, p["gf"], "problem.gf", c.log);
  pr.phase1 = phase(p["phase1"], "problem.phase1");
  pr.phase2 = phase(p["phase2"], "problem.phase2");
  c.t_s0 = number(p["ts0"], "problem.ts0");
  if (!(c.t_s0 > pr.t0 && c.t_s0 < pr.tf))
    throw ConfigError("problem.ts0: must lie strictly between t0 and tf");
  c.g_s0 = rotation(group, p["gs0"], "problem.gs0", c.log);

  if (p.contains("surface")) {
    const auto& s = p["surface"];
    allow_keys(s, "problem.surface", {"entry", "offset"});
    if (!s.contains("entry") || !s["entry"].is_array() || s["entry"].size() != 2)
      throw ConfigError("problem.surface.entry: expected [row, col]");
    const int r = integer(s["entry"][0], "problem.surface.entry");
    const int col = integer(s["entry"][1], "problem.surface.entry");
    if (r < 0 || r > 2 || col < 0 || col > 2)
      throw ConfigError("problem.surface.entry: indices must be 0, 1 or 2");
    const double off = number(s.value("offset", io::json(0.0)), "problem.surface.offset");
    pr.surface = SwitchingSurface<So3>{[r, col, off](const So3::Element& g) { return g(r, col) - off; },
                                       {}};
  }
  if (p.contains("jump")) {
    const auto& jm = p["jump"];
    allow_keys(jm, "problem.jump", {"left", "right"});
    if (jm.contains("left") == jm.contains("right"))
      throw ConfigError("problem.jump: give exactly one of left or right");
    const bool left = jm.contains("left");
    const auto A = rotation(group, left ? jm["left"] : jm["right"],
                            left ? "problem.jump.left" : "problem.jump.right", c.log);
    pr.jump.map = [A, left](const So3::Element& g) { return left ? A * g : g * A; };
  }

  if (j.contains("integrator")) {
    const auto& ij = j["integrator"];
    allow_keys(ij, "integrator", {"h"});
    if (ij.contains("h")) c.solver.shooting.integration.h = positive(ij["h"], "integrator.h");
  }
  if (j.contains("shooting")) {
    const auto& sj = j["shooting"];
    allow_keys(sj, "shooting",
               {"tol", "n_starts", "seed", "start_range", "mu_max", "max_iters", "threads"});
    if (sj.contains("tol")) c.solver.shooting.tol = positive(sj["tol"], "shooting.tol");
    if (sj.contains("n_starts")) {
      c.solver.n_starts = integer(sj["n_starts"], "shooting.n_starts");
      if (c.solver.n_starts < 1) throw ConfigError("shooting.n_starts: must be at least 1");
    }
    if (sj.contains("seed")) {
      if (!sj["seed"].is_number_integer() || sj["seed"].get<std::int64_t>() < 0)
        throw ConfigError("shooting.seed: expected a non-negative integer");
      c.solver.seed = sj["seed"].get<std::uint64_t>();
    }
    if (sj.contains("start_range"))
      c.solver.shooting.start_range = positive(sj["start_range"], "shooting.start_range");
    if (sj.contains("mu_max")) c.solver.mu_max = positive(sj["mu_max"], "shooting.mu_max");
    if (sj.contains("max_iters")) {
      c.solver.shooting.max_iters = integer(sj["max_iters"], "shooting.max_iters");
      if (c.solver.shooting.max_iters < 1) throw ConfigError("shooting.max_iters: must be at least 1");
    }
    if (sj.contains("threads")) {
      c.solver.shooting.threads = integer(sj["threads"], "shooting.threads");
      if (c.solver.shooting.threads < 1) throw ConfigError("shooting.threads: must be at least 1");
    }
  }
  if (j.contains("eg")) {
    const auto& ej = j["eg"];
    allow_keys(ej, "eg",
               {"beta", "theta_init", "theta_shrink", "theta_grow", "max_iters", "ts_step_scale"});
    if (ej.contains("beta")) c.eg.beta = positive(ej["beta"], "eg.beta");
    if (ej.contains("theta_init")) c.eg.theta_init = positive(ej["theta_init"], "eg.theta_init");
    if (ej.contains("theta_shrink")) c.eg.theta_shrink = positive(ej["theta_shrink"], "eg.theta_shrink");
    if (ej.contains("theta_grow")) c.eg.theta_grow = positive(ej["theta_grow"], "eg.theta_grow");
    if (ej.contains("max_iters")) c.eg.max_iters = integer(ej["max_iters"], "eg.max_iters");
    if (ej.contains("ts_step_scale")) c.eg.ts_step_scale = positive(ej["ts_step_scale"], "eg.ts_step_scale");
    try {
      c.eg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("output_dir: expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("emit_plots")) {
    if (!j["emit_plots"].is_boolean()) throw ConfigError("emit_plots: expected true or false");
    c.emit_plots = j["emit_plots"].get<bool>();
  }
  if (j.contains("reference")) {
    const auto& rj = j["reference"];
    allow_keys(rj, "reference", {"gs", "ts"});
    if (!rj.contains("gs") || !rj.contains("ts")) throw ConfigError("reference: needs gs and ts");
    Eigen::Matrix3d m;
    try {
      m = io::matrix_from_json<3, 3>(rj["gs"], "reference.gs");
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    c.reference = ReferencePoint{m, group.membership_error(m), So3::Element(polar(m)),
                                 number(rj["ts"], "reference.ts")};
  }
  try {
    c.problem.validate(group);
  } catch (const Error& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  return c;
}

/// Embedded configuration of the satellite reorientation example.
inline io::json satellite_config_json() {
  const auto p = satellite::problem();
  io::json j;
  j["problem"] = {
      {"t0", p.t0},
      {"tf", p.tf},
      {"g0", io::to_json_rowmajor(p.g0.matrix())},
      {"gf", io::to_json_rowmajor(p.gf.matrix())},
      {"phase1", {{"id", p.phase1.id}, {"channels", p.phase1.channels}}},
      {"phase2", {{"id", p.phase2.id}, {"channels", p.phase2.channels}}},
      {"ts0", satellite::kInitialSwitchTime},
      {"gs0", io::to_json_rowmajor(satellite::initial_switch_state().matrix())}};
  j["integrator"] = {{"h", 1e-3}};
  j["shooting"] = {
      {"tol", 1e-8}, {"n_starts", 16}, {"seed", 42}, {"start_range", 1.0}, {"mu_max", 1e3}};
  j["eg"] = {{"beta", 1e-6}, {"theta_init", 0.5},   {"theta_shrink", 0.5},
             {"theta_grow", 2.0}, {"max_iters", 200}, {"ts_step_scale", 1.0}};
  j["output_dir"] = "out/satellite";
  j["emit_plots"] = true;
  j["reference"] = {{"gs", io::to_json_rowmajor(satellite::reference_switch_matrix())},
                    {"ts", satellite::kReferenceSwitchTime}};
  return j;
}

}  // namespace liehmp
