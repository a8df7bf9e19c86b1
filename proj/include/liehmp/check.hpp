#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "liehmp/dynamics.hpp"
#include "liehmp/extremal.hpp"
#include "liehmp/hmp.hpp"
#include "liehmp/io.hpp"

namespace liehmp {

struct CheckItem {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckItem> items;
  bool all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const auto& i) { return i.pass; });
  }
};

inline io::json to_json(const CheckReport& r) {
  io::json j;
  j["all_pass"] = r.all_pass();
  io::json items = io::json::array();
  for (const auto& i : r.items) {
    io::json x{{"name", i.name}, {"pass", i.pass}, {"measured", i.measured},
               {"threshold", i.threshold}};
    if (!i.detail.empty()) x["detail"] = i.detail;
    items.push_back(std::move(x));
  }
  j["checks"] = std::move(items);
  return j;
}

struct CheckOptions {
  int extremals = 20;
  double window = 5.0;
  int gradient_points = 2;
  std::uint64_t seed = 2024;
  /// Costate transport used throughout; `Reversed` is the mutation hook.
  CostateSign sign = CostateSign::Coadjoint;
};

namespace check_detail {

inline CheckItem at_most(std::string name, double measured, double threshold) {
  return {std::move(name), measured <= threshold, measured, threshold, {}};
}

}  // namespace check_detail

/**
 * @brief Property battery over the SO(3) group and a problem instance:
 * algebra tables, closure, conservation, pairing, needle variations and the
 * value gradient. Every entry reports the measured drift.
 */
inline CheckReport run_checks(const So3& group, const HybridProblem<So3>& problem,
                              const So3::Element& g_s, double t_s, SolverControls controls,
                              const CheckOptions& opt = {}) {
  using check_detail::at_most;
  using Vec = So3::Vec;
  CheckReport rep;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto rvec = [&](double s) { return Vec(s * U(rng), s * U(rng), s * U(rng)); };

  // algebra tables
  {
    double err = 0.0;
    const Vec e1 = Vec::Unit(0), e2 = Vec::Unit(1), e3 = Vec::Unit(2);
    err = std::max(err, (group.bracket(e1, e2) - e3).cwiseAbs().maxCoeff());
    err = std::max(err, (group.bracket(e1, e3) + e2).cwiseAbs().maxCoeff());
    err = std::max(err, (group.bracket(e2, e3) - e1).cwiseAbs().maxCoeff());
    for (int i = 0; i < 3; ++i)
      err = std::max(err, group.bracket(Vec::Unit(i), Vec::Unit(i)).cwiseAbs().maxCoeff());
    rep.items.push_back(at_most("bracket_table", err, 0.0));
    const double kerr = (group.killing_matrix() - 2.0 * So3::AdMat::Identity()).cwiseAbs().maxCoeff();
    rep.items.push_back(at_most("killing_matrix", kerr, 0.0));
  }

  ExtremalOptions ext;
  ext.h = controls.shooting.integration.h;
  ext.sign = opt.sign;

  // extremals of both phases
  double closure = 0.0, dH = 0.0, casimir = 0.0, pairing = 0.0;
  for (const auto* phase : {&problem.phase1, &problem.phase2}) {
    for (int k = 0; k < opt.extremals; ++k) {
      const Vec lam0 = rvec(1.0);
      const Vec w0 = rvec(1.0);
      const auto g0 = group.exp(rvec(2.0));
      const auto tr = integrate_extremal(group, *phase, g0, lam0, 0.0, opt.window, ext);
      for (std::size_t i = 0; i < tr.t.size(); ++i) {
        closure = std::max(closure, group.membership_error(tr.g[i].matrix()));
        dH = std::max(dH, std::abs(tr.H[i] - tr.H.front()) / (1.0 + std::abs(tr.H.front())));
        casimir = std::max(casimir, std::abs(tr.costate[i].norm() - lam0.norm()));
        // w(t) = Ad_{g(t)^-1 g0} w0 solves w' = -ad_xi w
        if (i % 50 == 0) {
          const Vec w = group.Ad(group.inverse(tr.g[i]) * g0, w0);
          pairing = std::max(pairing, std::abs(tr.costate[i].dot(w) - lam0.dot(w0)));
        }
      }
    }
  }
  rep.items.push_back(at_most("orthogonality", closure, 1e-9));
  rep.items.push_back(at_most("hamiltonian_conservation", dH, 1e-8));
  rep.items.push_back(at_most("costate_norm_conservation", casimir, 1e-8));
  rep.items.push_back(at_most("pairing_along_extremals", pairing, 1e-10));

  {
    double drift = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto r = propagate_pairing(group, rvec(2.0), rvec(2.0), rvec(2.0), 1.0);
      drift = std::max(drift, r.drift);
    }
    rep.items.push_back(at_most("pairing_transport", drift, 1e-10));
  }

  // needle variations against forward differences
  {
    double worst = 0.0;
    const double eps = 1e-5, h = 1e-3;
    for (int k = 0; k < 10; ++k) {
      const auto& phase = k % 2 ? problem.phase1 : problem.phase2;
      Eigen::VectorXd u0(phase.num_controls()), u1(phase.num_controls());
      for (int c = 0; c < u0.size(); ++c) {
        u0(c) = 1.5 * U(rng);
        u1(c) = 1.5 * U(rng);
      }
      const double t1 = 0.6 + 0.4 * U(rng), t = t1 + 0.6 + 0.4 * U(rng);
      const auto g0 = group.exp(rvec(1.0));
      const ControlSignal nominal = [u0](double) { return u0; };
      const ControlSignal needle = [=](double s) { return (s > t1 - eps && s <= t1) ? u1 : u0; };
      const auto a = integrate_phase(group, phase, g0, nominal, 0.0, t, h, {t1 - eps, t1});
      const auto b = integrate_phase(group, phase, g0, needle, 0.0, t, h, {t1 - eps, t1});
      const Vec fd = group.vee(a.g.back().matrix().transpose() *
                               (b.g.back().matrix() - a.g.back().matrix()) / eps, 1e-3);
      const Vec formula = needle_endpoint_derivative(group, phase, u0, t1, u1, t);
      worst = std::max(worst, (fd - formula).norm() / formula.norm());
    }
    rep.items.push_back(at_most("needle_vs_fd", worst, 1e-3));
  }

  // value gradient against central differences
  {
    controls.shooting.integration.sign = opt.sign;
    CheckItem item{"gradient_vs_fd", false, 0.0, 1e-3, {}};
    try {
      ValueOracle<So3> oracle(group, problem, controls);
      double worst = 0.0;
      for (int k = 0; k < opt.gradient_points; ++k) {
        const auto g = k == 0 ? g_s : g_s * group.exp(rvec(0.1));
        const double t = k == 0 ? t_s : std::clamp(t_s + 0.1 * U(rng), problem.t0 + 0.1, problem.tf - 0.1);
        const auto vg = oracle.evaluate(g, t);
        const auto fd = oracle.fd_gradient(g, t);
        const double num = std::hypot((vg.grad_body - fd.grad_body).norm(), vg.dv_dts - fd.dv_dts);
        const double den = std::hypot(fd.grad_body.norm(), fd.dv_dts);
        worst = std::max(worst, den > 0.0 ? num / den : num);
      }
      item.measured = worst;
      item.pass = worst <= item.threshold;
    } catch (const std::exception& e) {
      item.measured = std::numeric_limits<double>::infinity();
      item.detail = e.what();
    }
    rep.items.push_back(item);
  }
  return rep;
}

}  // namespace liehmp
