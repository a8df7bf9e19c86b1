// lgh: command-line front end for hybrid optimal control on SO(3).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "liehmp/check.hpp"
#include "liehmp/config.hpp"
#include "liehmp/dynamics.hpp"
#include "liehmp/eg_hmp.hpp"
#include "liehmp/extremal.hpp"
#include "liehmp/hmp.hpp"
#include "liehmp/io.hpp"
#include "liehmp/shooting.hpp"

namespace fs = std::filesystem;
using namespace liehmp;
using io::json;

namespace {

namespace exit_code {
constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kNonTransversal = 2;
constexpr int kConfig = 3;
constexpr int kNoConvergedStart = 4;
constexpr int kLineSearchFailed = 5;
constexpr int kOther = 6;
}  // namespace exit_code

const So3& group() {
  static const So3 g = make_so3();
  return g;
}

RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: not valid JSON (" + std::string(e.what()) + ")");
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(group(), j);
}

RunConfig load_or_embedded(const std::string& path) {
  return path.empty() ? parse_config(group(), satellite_config_json()) : load_config(path);
}

fs::path output_dir(const RunConfig& c) {
  if (const char* env = std::getenv("LGH_OUTPUT_DIR"); env && *env) return env;
  return c.output_dir;
}

void report_log(const RunConfig& c) {
  for (const auto& m : c.log) std::cerr << "lgh: " << m << "\n";
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// --------------------------------------------------------------- simulate

struct ControlTable {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> u;
};

ControlTable read_controls(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("controls: empty file");
  ControlTable tab;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("controls: non-numeric entry '" + cell + "'");
      }
    }
    if (row.size() < 2) throw ConfigError("controls: rows need t and at least one control");
    if (width == 0) width = row.size();
    if (row.size() != width) throw ConfigError("controls: ragged rows");
    if (!tab.t.empty() && !(row[0] > tab.t.back()))
      throw ConfigError("controls: times must increase");
    tab.t.push_back(row[0]);
    tab.u.push_back(Eigen::Map<Eigen::VectorXd>(row.data() + 1, row.size() - 1));
  }
  if (tab.t.empty()) throw ConfigError("controls: no rows");
  return tab;
}

ControlSignal piecewise(const ControlTable& tab, int k) {
  if (tab.u.front().size() < k)
    throw ConfigError("controls: need " + std::to_string(k) + " control columns");
  return [&tab, k](double t) {
    const auto it = std::upper_bound(tab.t.begin(), tab.t.end(), t);
    const std::size_t i = it == tab.t.begin() ? 0 : static_cast<std::size_t>(it - tab.t.begin() - 1);
    return Eigen::VectorXd(tab.u[i].head(k));
  };
}

int cmd_simulate(const RunConfig& c, const std::string& controls_path) {
  const auto tab = read_controls(controls_path);
  const auto& p = c.problem;
  const auto dir = output_dir(c);
  const SwitchingSurface<So3>* surface = p.surface ? &*p.surface : nullptr;
  std::vector<double> bps;
  for (double t : tab.t)
    if (t > p.t0 && t < p.tf) bps.push_back(t);
  try {
    const auto traj =
        simulate(group(), p.phase1, p.phase2, p.g0, piecewise(tab, p.phase1.num_controls()),
                 piecewise(tab, p.phase2.num_controls()), p.t0, p.tf,
                 c.solver.shooting.integration.h, surface, p.jump, bps);
    io::write_atomic(dir / "trajectory.csv", trajectory_csv(group(), traj, surface));
    json ev = json::array();
    for (const auto& e : traj.events) {
      ev.push_back({{"t", e.t},
                    {"g_pre", io::to_json_rowmajor(e.g_pre.matrix())},
                    {"g_post", io::to_json_rowmajor(e.g_post.matrix())},
                    {"transversality", e.transversality}});
    }
    io::write_atomic(dir / "events.json",
                     dump({{"events", ev}, {"cost", hybrid_cost(traj, p.terminal_cost)}}));
  } catch (const NonTransversal& e) {
    io::write_atomic(dir / "events.json", dump({{"error", "NonTransversal"}, {"message", e.what()}}));
    throw;
  }
  return exit_code::kOk;
}

// ------------------------------------------------------------------ shoot

std::string extremal_csv(const ExtremalTrajectory<So3>& tr) {
  std::vector<std::string> header{"t"};
  for (int r = 1; r <= 3; ++r)
    for (int col = 1; col <= 3; ++col) header.push_back("g" + std::to_string(r) + std::to_string(col));
  for (int i = 1; i <= 3; ++i) header.push_back("lambda" + std::to_string(i));
  const int k = tr.u.empty() ? 0 : static_cast<int>(tr.u.front().size());
  for (int i = 1; i <= k; ++i) header.push_back("u" + std::to_string(i));
  header.push_back("H");
  io::CsvWriter csv(header);
  for (std::size_t s = 0; s < tr.t.size(); ++s) {
    std::vector<double> row{tr.t[s]};
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) row.push_back(tr.g[s](r, col));
    for (int i = 0; i < 3; ++i) row.push_back(tr.costate[s](i));
    for (int i = 0; i < k; ++i) row.push_back(tr.u[s](i));
    row.push_back(tr.H[s]);
    csv.row(row);
  }
  return csv.str();
}

int cmd_shoot(const RunConfig& c, int phase, const std::string& target_path) {
  const auto& p = c.problem;
  So3::Element target = phase == 1 ? c.g_s0 : p.gf;
  if (!target_path.empty()) {
    json tj;
    try {
      tj = json::parse(io::read_file(target_path));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("target: ") + e.what());
    }
    std::vector<std::string> log;
    target = config_detail::rotation(group(), tj.is_object() ? tj.value("g", json()) : tj, "target", log);
    for (const auto& m : log) std::cerr << "lgh: " << m << "\n";
  }
  const auto& spec = phase == 1 ? p.phase1 : p.phase2;
  const auto start = phase == 1 ? p.g0 : apply_jump(group(), p.jump, c.g_s0);
  const double ta = phase == 1 ? p.t0 : c.t_s0, tb = phase == 1 ? c.t_s0 : p.tf;
  const PhaseBvp<So3> bvp{&group(), &spec, start, target, ta, tb};
  const auto ms = multi_start_shoot(bvp, c.solver.n_starts, c.solver.seed, c.solver.shooting);
  const auto tr = integrate_extremal(group(), spec, start, ms.best.costate0, ta, tb,
                                     c.solver.shooting.integration);
  double drift = 0.0;
  for (double H : tr.H) drift = std::max(drift, std::abs(H - tr.H.front()));
  auto j = to_json(ms.best);
  j["phase"] = phase;
  j["hamiltonian"] = ms.best.hamiltonian;
  j["hamiltonian_drift"] = drift;
  const auto dir = output_dir(c);
  const std::string tag = "phase" + std::to_string(phase);
  io::write_atomic(dir / ("shoot_" + tag + ".json"), dump(j));
  io::write_atomic(dir / ("extremal_" + tag + ".csv"), extremal_csv(tr));
  std::cout << dump(j);
  return exit_code::kOk;
}

// --------------------------------------------------------------- optimize

void write_plots(const fs::path& dir) {
  io::write_atomic(dir / "state.gp",
                   "set datafile separator ','\n"
                   "set key autotitle columnhead\n"
                   "set title 'Hybrid State Trajectory'\n"
                   "set xlabel 't'\n"
                   "plot for [c=2:10] 'state_phase1.csv' using 1:c with lines, \\\n"
                   "     for [c=2:10] 'state_phase2.csv' using 1:c with lines dashtype 2\n"
                   "pause -1\n");
  io::write_atomic(dir / "adjoint.gp",
                   "set datafile separator ','\n"
                   "set key autotitle columnhead\n"
                   "set title 'Hybrid Adjoint Trajectory'\n"
                   "set xlabel 't'\n"
                   "plot for [c=11:13] 'state_phase1.csv' using 1:c with lines, \\\n"
                   "     for [c=11:13] 'state_phase2.csv' using 1:c with lines dashtype 2\n"
                   "pause -1\n");
  io::write_atomic(dir / "convergence.gp",
                   "set datafile separator ','\n"
                   "set title 'EG-HMP Convergence'\n"
                   "set xlabel 'iteration'\n"
                   "set ylabel 'v'\n"
                   "plot 'history.csv' using 1:2 every ::1 with linespoints title 'v'\n"
                   "pause -1\n");
}

json point_json(const EGIterate<So3>& x) {
  return {{"g_s", io::to_json_rowmajor(x.g_s.matrix())},
          {"t_s", x.t_s},
          {"v", x.v},
          {"pg", io::to_json_vector(x.pg)},
          {"dv_dts", x.dv_dts},
          {"stationarity", x.stationarity}};
}

json calibration_json(const GradientCalibration& c) {
  return {{"grad_sign", c.grad_sign},
          {"time_sign", c.time_sign},
          {"grad_frozen", c.grad_frozen},
          {"time_frozen", c.time_frozen},
          {"grad_angle_deg", c.grad_angle_deg},
          {"grad_ratio", c.grad_ratio},
          {"time_ratio", c.time_ratio}};
}

// Compares the optimizer's end point with a reference switching point.
json reference_json(const RunConfig& c, const ValueOracle<So3>& main, const EGIterate<So3>& last) {
  const auto& ref = *c.reference;
  json j{{"g_s", io::to_json_rowmajor(ref.given)},
         {"t_s", ref.t_s},
         {"orthogonality_deviation", ref.deviation},
         {"nearest_rotation", io::to_json_rowmajor(ref.g_s.matrix())}};
  const double dt = std::abs(last.t_s - ref.t_s);
  const double dg = (last.g_s.matrix() - ref.given).cwiseAbs().maxCoeff();
  j["abs_t_s_difference"] = dt;
  j["max_abs_g_s_entry_difference"] = dg;
  j["within_tolerance"] = dt <= 0.1 && dg <= 0.05;
  try {
    ValueOracle<So3> o(group(), c.problem, c.solver);
    o.set_calibration(main.calibration());
    const auto vg = o.evaluate(ref.g_s, ref.t_s);
    j["v"] = vg.v;
    j["stationarity"] = group().inner(vg.grad_body, vg.grad_body) + vg.dv_dts * vg.dv_dts;
    j["pg"] = io::to_json_vector(vg.grad_body);
    j["dv_dts"] = vg.dv_dts;
    j["residuals"] = to_json(hmp_residuals(group(), c.problem, ref.g_s, ref.t_s, vg,
                                           c.solver.shooting.integration));
  } catch (const Error& e) {
    j["error"] = e.what();
  }
  return j;
}

int cmd_optimize(const RunConfig& c) {
  const auto dir = output_dir(c);
  ValueOracle<So3> oracle(group(), c.problem, c.solver);
  EGResult<So3> res;
  try {
    res = optimize(oracle, c.g_s0, c.t_s0, c.eg);
  } catch (const Error& e) {
    if (const auto* h = dynamic_cast<const HistoryCarrier<So3>*>(&e)) {
      io::write_atomic(dir / "history.csv", history_csv(h->history));
      io::write_atomic(dir / "history.json", dump(to_json(h->history)));
    }
    throw;
  }
  const auto& last = res.last();
  const auto& p = c.problem;
  const auto& integ = c.solver.shooting.integration;
  const auto tr1 = integrate_extremal(group(), p.phase1, p.g0, res.final.phase1.costate0, p.t0,
                                      last.t_s, integ);
  const auto tr2 = integrate_extremal(group(), p.phase2, apply_jump(group(), p.jump, last.g_s),
                                      res.final.phase2.costate0, last.t_s, p.tf, integ);
  double closure = 0.0;
  for (const auto* tr : {&tr1, &tr2})
    for (const auto& g : tr->g) closure = std::max(closure, group().membership_error(g.matrix()));
  for (const auto& x : res.history.iterates)
    closure = std::max(closure, group().membership_error(x.g_s.matrix()));

  json s;
  s["stop_reason"] = res.history.stop_reason;
  s["stop_test_met"] = res.history.stop_test_met;
  s["iterations"] = last.k;
  s["initial"] = point_json(res.history.iterates.front());
  s["final"] = point_json(last);
  s["phase1"] = to_json(res.final.phase1);
  s["phase2"] = to_json(res.final.phase2);
  s["hamiltonian_pre"] = res.final.H_pre;
  s["hamiltonian_post"] = res.final.H_post;
  s["residuals"] = to_json(hmp_residuals(group(), p, last.g_s, last.t_s, res.final, integ));
  s["lasalle"] = to_json(lasalle_audit(res.history, c.eg.beta));
  s["calibration"] = calibration_json(oracle.calibration());
  s["max_closure_error"] = closure;
  s["value_evaluations"] = oracle.evaluations();
  if (c.reference) s["reference"] = reference_json(c, oracle, last);
  s["config_log"] = c.log;
  s["problem"] = c.problem_json;

  io::write_atomic(dir / "history.csv", history_csv(res.history));
  io::write_atomic(dir / "history.json", dump(to_json(res.history)));
  io::write_atomic(dir / "state_phase1.csv", extremal_csv(tr1));
  io::write_atomic(dir / "state_phase2.csv", extremal_csv(tr2));
  io::write_atomic(dir / "summary.json", dump(s));
  if (c.emit_plots) write_plots(dir);
  std::cout << "stop: " << res.history.stop_reason << "  iterations: " << last.k
            << "  v: " << io::fmt(last.v) << "  t_s: " << io::fmt(last.t_s) << "\n";
  return exit_code::kOk;
}

// ------------------------------------------------------------------ check

int cmd_check(const RunConfig& c, bool flip_sign) {
  CheckOptions opt;
  if (flip_sign) opt.sign = CostateSign::Reversed;
  const auto rep = run_checks(group(), c.problem, c.g_s0, c.t_s0, c.solver, opt);
  auto j = to_json(rep);
  j["costate_sign"] = flip_sign ? "reversed" : "coadjoint";
  io::write_atomic(output_dir(c) / "check.json", dump(j));
  for (const auto& i : rep.items) {
    std::cout << (i.pass ? "pass " : "FAIL ") << i.name << "  measured " << io::fmt(i.measured)
              << "  threshold " << io::fmt(i.threshold) << "\n";
  }
  return rep.all_pass() ? exit_code::kOk : exit_code::kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid optimal control on SO(3): simulation, shooting and switching optimization"};
  app.require_subcommand(1);

  std::string config_path, controls_path, target_path;
  int phase = 1;
  bool flip_sign = false, print_config = false;

  auto* sim = app.add_subcommand("simulate", "integrate piecewise-constant controls through one switch");
  sim->add_option("--config", config_path, "run configuration (JSON)")->required();
  sim->add_option("--controls", controls_path, "CSV with columns t,u1..uk")->required();

  auto* sh = app.add_subcommand("shoot", "solve one phase boundary-value problem");
  sh->add_option("--config", config_path, "run configuration (JSON)")->required();
  sh->add_option("--phase", phase, "phase index")->check(CLI::IsMember({1, 2}));
  sh->add_option("--target", target_path, "target matrix (JSON, 9 row-major numbers)");

  auto* opt = app.add_subcommand("optimize", "descend the hybrid value over switching state and time");
  opt->add_option("--config", config_path, "run configuration (JSON)")->required();

  auto* chk = app.add_subcommand("check", "run the invariant battery");
  chk->add_option("--config", config_path, "run configuration (JSON)");
  chk->add_flag("--flip-costate-sign", flip_sign, "test hook: reverse the costate transport");

  auto* sat = app.add_subcommand("run-satellite", "optimize the embedded satellite example");
  sat->add_flag("--print-config", print_config, "print the embedded configuration and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? exit_code::kOk : exit_code::kConfig;
  }

  try {
    if (*sat) {
      if (print_config) {
        std::cout << dump(satellite_config_json());
        return exit_code::kOk;
      }
      const auto c = parse_config(group(), satellite_config_json());
      return cmd_optimize(c);
    }
    const auto c = *chk ? load_or_embedded(config_path) : load_config(config_path);
    report_log(c);
    if (*sim) return cmd_simulate(c, controls_path);
    if (*sh) return cmd_shoot(c, phase, target_path);
    if (*opt) return cmd_optimize(c);
    if (*chk) return cmd_check(c, flip_sign);
  } catch (const ConfigError& e) {
    std::cerr << "lgh: configuration error: " << e.what() << "\n";
    return exit_code::kConfig;
  } catch (const NonTransversal& e) {
    std::cerr << "lgh: non-transversal switch: " << e.what() << "\n";
    return exit_code::kNonTransversal;
  } catch (const NoConvergedStart& e) {
    std::cerr << "lgh: shooting failed: " << e.what() << "\n";
    return exit_code::kNoConvergedStart;
  } catch (const LineSearchFailed& e) {
    std::cerr << "lgh: line search failed: " << e.what() << "\n";
    return exit_code::kLineSearchFailed;
  } catch (const std::exception& e) {
    std::cerr << "lgh: " << e.what() << "\n";
    return exit_code::kOther;
  }
  return exit_code::kOther;
}
