// Acceptance report: one line per criterion, on stdout and in
// acceptance_report.txt in the working directory. Exit status is 0 once the
// report is complete; with --strict it is 1 if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "liehmp/config.hpp"
#include "liehmp/dynamics.hpp"
#include "liehmp/extremal.hpp"
#include "liehmp/hmp.hpp"
#include "liehmp/io.hpp"
#include "liehmp/satellite.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace liehmp;
using io::json;
using Vec = So3::Vec;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int lgh(const std::string& args, const fs::path& out) {
  fs::create_directories(out);
  const std::string cmd = "LGH_OUTPUT_DIR='" + out.string() + "' '" + LGH_BINARY + "' " + args +
                          " >'" + (out / "stdout.txt").string() + "' 2>'" +
                          (out / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string num(double x) { return io::fmt(x); }

const So3& G() {
  static const So3 g = make_so3();
  return g;
}

Vec uniform(std::mt19937_64& rng, double s) { return oracle::uniform3(rng, -s, s); }

// ---------------------------------------------------------------- 1
Verdict algebra_tables() {
  const auto t0 = Clock::now();
  // [e1,e2]=e3, [e1,e3]=-e2, [e2,e3]=e1 and ad columns read off that table
  const Vec e[3] = {Vec::Unit(0), Vec::Unit(1), Vec::Unit(2)};
  Eigen::Matrix3d ad[3];
  ad[0] << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  ad[1] << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  ad[2] << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  bool exact = G().bracket(e[0], e[1]) == e[2] && G().bracket(e[0], e[2]) == -e[1] &&
               G().bracket(e[1], e[2]) == e[0];
  for (int i = 0; i < 3; ++i) {
    exact = exact && G().bracket(e[i], e[i]) == Vec::Zero() && G().ad_matrix(e[i]) == ad[i];
    for (int j = 0; j < 3; ++j)
      exact = exact && G().bracket(e[i], e[j]) == oracle::vee(oracle::hat(e[i]) * oracle::hat(e[j]) -
                                                              oracle::hat(e[j]) * oracle::hat(e[i]));
  }
  exact = exact && G().killing_matrix() == 2.0 * Eigen::Matrix3d::Identity();
  const double dt = seconds_since(t0);
  return {1, exact && dt < 1.0, std::string(exact ? "exact" : "mismatch") + ", " + num(dt) + " s"};
}

// ---------------------------------------------------------------- 3
Verdict conservation() {
  std::mt19937_64 rng(301);
  const auto p = satellite::problem();
  double dH = 0.0, norm = 0.0, idle = 0.0;
  for (int ph = 0; ph < 2; ++ph) {
    const auto& phase = ph == 0 ? p.phase1 : p.phase2;
    const int unactuated = ph == 0 ? 2 : 1;  // lambda_3 in phase 1, lambda_2 in phase 2
    for (int k = 0; k < 100; ++k) {
      const Vec lam0 = uniform(rng, 1.0);
      const auto tr = integrate_extremal(G(), phase, G().exp(uniform(rng, 2.0)), lam0, 0.0, 5.0, {});
      for (std::size_t i = 0; i < tr.t.size(); ++i) {
        dH = std::max(dH, std::abs(tr.H[i] - tr.H.front()) / (1.0 + std::abs(tr.H.front())));
        norm = std::max(norm, std::abs(tr.costate[i].norm() - lam0.norm()));
        idle = std::max(idle, std::abs(tr.costate[i](unactuated) - lam0(unactuated)));
      }
    }
  }
  const bool ok = dH <= 1e-8 && norm <= 1e-8 && idle <= 1e-8;
  return {3, ok, "rel dH " + num(dH) + ", |lambda| drift " + num(norm) + ", idle component drift " + num(idle)};
}

// ---------------------------------------------------------------- 4
Verdict pairing() {
  std::mt19937_64 rng(401);
  double drift = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vec lam0 = uniform(rng, 2.0), w0 = uniform(rng, 2.0), xi = uniform(rng, 2.0);
    const auto r = propagate_pairing(G(), lam0, w0, xi, 1.0);
    // transports integrated independently: lambda' = ad_xi^T lambda, w' = -ad_xi w
    const oracle::Mat3 A = G().ad_matrix(xi);
    const Vec lam = oracle::rk4_linear(A.transpose(), lam0, 1.0, 2000);
    const Vec w = oracle::rk4_linear(-A, w0, 1.0, 2000);
    drift = std::max({drift, r.drift, std::abs(lam.dot(w) - lam0.dot(w0)),
                      (lam - r.costate).norm(), (w - r.tangent).norm()});
  }
  return {4, drift < 1e-10, "max drift " + num(drift)};
}

// ---------------------------------------------------------------- 5
Verdict needles() {
  std::mt19937_64 rng(501);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto p = satellite::problem();
  const double eps = 1e-5;
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const auto& phase = k % 2 ? p.phase2 : p.phase1;
    Eigen::VectorXd u0(phase.num_controls()), u1(phase.num_controls());
    for (int c = 0; c < u0.size(); ++c) {
      u0(c) = 1.5 * U(rng);
      u1(c) = 1.5 * U(rng);
    }
    const double t1 = 1.0 + 0.5 * U(rng), t = t1 + 1.0 + 0.5 * U(rng);
    const auto body = [&](const Eigen::VectorXd& u) {
      Vec xi = Vec::Zero();
      for (int c = 0; c < u.size(); ++c) xi(phase.channels[c]) += u(c);
      return oracle::hat(xi);
    };
    const oracle::Mat3 g0 = oracle::expm(oracle::hat(uniform(rng, 1.0)));
    const oracle::Mat3 nominal = g0 * oracle::expm(t * body(u0));
    const oracle::Mat3 varied = g0 * oracle::expm((t1 - eps) * body(u0)) *
                                oracle::expm(eps * body(u1)) * oracle::expm((t - t1) * body(u0));
    const Vec fd = oracle::vee(nominal.transpose() * (varied - nominal) / eps);
    const Vec formula = needle_endpoint_derivative(G(), phase, u0, t1, u1, t);
    worst = std::max(worst, (fd - formula).norm() / formula.norm());
  }
  return {5, worst <= 1e-3, "max relative error " + num(worst) + " over 50 scenarios"};
}

// ---------------------------------------------------------------- 6
Verdict gradient(const RunConfig& cfg) {
  std::mt19937_64 rng(601);
  std::uniform_real_distribution<double> ts_dist(4.5, 7.5);
  ValueOracle<So3> o(G(), cfg.problem, cfg.solver);
  double worst = 0.0, slowest = 0.0;
  int failures = 0;
  for (int k = 0; k < 20; ++k) {
    const auto g = cfg.g_s0 * So3::Element(oracle::expm(oracle::hat(uniform(rng, 0.4))));
    const double ts = ts_dist(rng);
    try {
      const auto t0 = Clock::now();
      const auto vg = o.evaluate(g, ts);
      slowest = std::max(slowest, seconds_since(t0));
      // central differences on a fresh oracle so no state is shared with the evaluation
      ValueOracle<So3> fresh(G(), cfg.problem, cfg.solver);
      fresh.evaluate(g, ts);
      const double d = 1e-5;
      Vec fd_g;
      for (int i = 0; i < 3; ++i) {
        const Vec step = d * Vec::Unit(i);
        const double plus = fresh.value(So3::Element(g.matrix() * oracle::expm(oracle::hat(step))), ts);
        const double minus = fresh.value(So3::Element(g.matrix() * oracle::expm(oracle::hat(-step))), ts);
        fd_g(i) = (plus - minus) / (2 * d);
      }
      const double fd_t = (fresh.value(g, ts + d) - fresh.value(g, ts - d)) / (2 * d);
      // directional derivative d/ds v(g exp(s e_i)) equals I(pg, e_i)
      const Vec lowered = G().metric_lower(vg.grad_body);
      const double err = std::hypot((lowered - fd_g).norm(), vg.dv_dts - fd_t);
      const double scale = std::hypot(fd_g.norm(), fd_t);
      worst = std::max(worst, scale > 0 ? err / scale : err);
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "criterion 6: point " << k << ": " << e.what() << "\n";
    }
  }
  const bool ok = failures == 0 && worst <= 1e-3 && slowest < 10.0;
  return {6, ok, "max relative error " + num(worst) + ", slowest evaluation " + num(slowest) +
                     " s, failed points " + std::to_string(failures)};
}

// ---------------------------------------------------------------- 2, 7, 8, 10
struct SatelliteRun {
  int code = -1;
  double seconds = 0.0;
  json summary;
};

SatelliteRun run_satellite(const fs::path& out) {
  fs::remove_all(out);
  SatelliteRun r;
  const auto t0 = Clock::now();
  r.code = lgh("run-satellite", out);
  r.seconds = seconds_since(t0);
  if (fs::exists(out / "summary.json")) r.summary = json::parse(slurp(out / "summary.json"));
  return r;
}

Verdict closure(const SatelliteRun& r) {
  if (r.summary.is_null()) return {2, false, "no summary (exit " + std::to_string(r.code) + ")"};
  const double e = r.summary["max_closure_error"];
  return {2, e < 1e-9, "max |g g^T - I| " + num(e) + ", run " + num(r.seconds) + " s"};
}

Verdict eg_behaviour(const SatelliteRun& r) {
  if (r.summary.is_null()) return {7, false, "no summary (exit " + std::to_string(r.code) + ")"};
  const auto& s = r.summary;
  const bool monotone = s["lasalle"]["monotone"];
  const bool stopped = s["stop_test_met"];
  const double gap = std::abs(s["hamiltonian_pre"].get<double>() - s["hamiltonian_post"].get<double>());
  const bool ok = r.code == 0 && monotone && stopped && gap <= 1e-4 && r.seconds <= 300.0;
  return {7, ok, std::string("monotone ") + (monotone ? "yes" : "no") + ", stop test " +
                     (stopped ? "met" : "not met") + " after " + s["iterations"].dump() +
                     " iterations (stationarity " + num(s["final"]["stationarity"]) + "), |H1-H2| " +
                     num(gap) + ", " + num(r.seconds) + " s"};
}

Verdict regression(const SatelliteRun& r, bool c7) {
  if (r.summary.is_null()) return {8, false, "no summary"};
  const auto& s = r.summary;
  const auto ref = satellite::reference_switch_matrix();
  double dg = 0.0;
  for (int i = 0; i < 9; ++i) dg = std::max(dg, std::abs(s["final"]["g_s"][i].get<double>() - ref(i / 3, i % 3)));
  const double dt = std::abs(s["final"]["t_s"].get<double>() - satellite::kReferenceSwitchTime);
  const bool hit = dt <= 0.1 && dg <= 0.05;
  const auto& rs = s["reference"];
  const bool documented = rs.contains("v") && rs.contains("residuals") && s.contains("residuals");
  std::string d = "t_s off by " + num(dt) + ", max entry off by " + num(dg) + "; v final " +
                  num(s["final"]["v"]) + " vs reference " + (rs.contains("v") ? num(rs["v"]) : "n/a");
  if (!hit) d += documented ? ", discrepancy documented" : ", discrepancy not documented";
  if (!hit && !c7) d += ", fallback needs criterion 7";
  return {8, hit || (c7 && documented), d};
}

Verdict determinism(const fs::path& a, const fs::path& b, const SatelliteRun& rb) {
  if (rb.code != 0) return {10, false, "second run exit " + std::to_string(rb.code)};
  int files = 0;
  std::vector<std::string> differ;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    if (name == "stdout.txt" || name == "stderr.txt") continue;
    ++files;
    if (!fs::exists(b / name) || slurp(entry.path()) != slurp(b / name)) differ.push_back(name.string());
  }
  std::string d = std::to_string(files) + " files compared";
  for (const auto& f : differ) d += ", differs: " + f;
  return {10, files > 0 && differ.empty(), d};
}

// ---------------------------------------------------------------- 9
Verdict beta_tightening(const fs::path& root) {
  const auto t0 = Clock::now();
  const auto base = satellite_config_json();
  struct End {
    double grad;
    So3::Element g;
    double t;
  };
  std::vector<End> ends;
  std::string d;
  for (double beta : {1e-3, 1e-5, 1e-7}) {
    auto cfg = base;
    cfg["eg"]["beta"] = beta;
    cfg["emit_plots"] = false;
    cfg.erase("reference");
    const fs::path out = root / ("beta_" + num(beta));
    fs::remove_all(out);
    fs::create_directories(out);
    std::ofstream(out / "config.json") << cfg.dump(2);
    const int code = lgh("optimize --config '" + (out / "config.json").string() + "'", out);
    if (code != 0 || !fs::exists(out / "summary.json"))
      return {9, false, "beta " + num(beta) + " exit " + std::to_string(code)};
    const auto s = json::parse(slurp(out / "summary.json"));
    Eigen::Matrix3d g;
    for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = s["final"]["g_s"][i];
    ends.push_back({std::sqrt(s["final"]["stationarity"].get<double>()), So3::Element(g), s["final"]["t_s"]});
    d += "beta " + num(beta) + ": |grad| " + num(ends.back().grad) + " (" + s["iterations"].dump() + " it); ";
  }
  const auto dist = [](const End& a, const End& b) {
    return std::hypot(G().distance(a.g, b.g), a.t - b.t);
  };
  const double d01 = dist(ends[0], ends[1]), d12 = dist(ends[1], ends[2]);
  const double secs = seconds_since(t0);
  const bool ok = ends[1].grad < ends[0].grad && ends[2].grad < ends[1].grad && d12 < d01 && secs <= 900.0;
  d += "distances " + num(d01) + ", " + num(d12) + "; " + num(secs) + " s";
  return {9, ok, d};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  const fs::path root = fs::temp_directory_path() / "lgh_acceptance";
  fs::create_directories(root);
  const auto cfg = parse_config(G(), satellite_config_json());

  std::ofstream file("acceptance_report.txt");
  std::vector<Verdict> v;
  const auto report = [&](Verdict x) {
    std::ostringstream line;
    line << "criterion " << x.id << ": " << (x.pass ? "PASS" : "FAIL") << "  " << x.detail;
    std::cout << line.str() << std::endl;
    file << line.str() << std::endl;
    v.push_back(std::move(x));
  };

  report(algebra_tables());
  const auto first = run_satellite(root / "satellite_a");
  report(closure(first));
  report(conservation());
  report(pairing());
  report(needles());
  report(gradient(cfg));
  const auto c7 = eg_behaviour(first);
  report(c7);
  report(regression(first, c7.pass));
  report(beta_tightening(root));
  const auto second = run_satellite(root / "satellite_b");
  report(determinism(root / "satellite_a", root / "satellite_b", second));

  int passed = 0;
  for (const auto& x : v) passed += x.pass;
  std::cout << passed << "/" << v.size() << " criteria pass" << std::endl;
  file << passed << "/" << v.size() << " criteria pass" << std::endl;
  return strict && passed != static_cast<int>(v.size()) ? 1 : 0;
}
