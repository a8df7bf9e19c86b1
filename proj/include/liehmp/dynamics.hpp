#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "liehmp/errors.hpp"
#include "liehmp/io.hpp"
#include "liehmp/lie_group.hpp"
#include "liehmp/phase.hpp"
#include "liehmp/quadrature.hpp"

namespace liehmp {

/// g * exp(h X): the exact flow of a constant body velocity.
template <class Group>
typename Group::Element step_exact(const Group& group, const typename Group::Element& g,
                                   const typename Group::Vec& X, double h) {
  return g * group.exp(h * X);
}

/// One commutator-free fourth-order step for g' = g xi(t), given the body
/// velocities at the four classical Runge-Kutta stages.
template <class Group>
typename Group::Element cf4_step(const Group& group, const typename Group::Element& g,
                                 const typename Group::Vec& x1, const typename Group::Vec& x2,
                                 const typename Group::Vec& x3, const typename Group::Vec& x4,
                                 double h) {
  if (x1 == x2 && x2 == x3 && x3 == x4) return g * group.exp(h * x1);
  const typename Group::Vec a = h * (0.25 * x1 + x2 / 6.0 + x3 / 6.0 - x4 / 12.0);
  const typename Group::Vec b = h * (-x1 / 12.0 + x2 / 6.0 + x3 / 6.0 + 0.25 * x4);
  return g * group.exp(a) * group.exp(b);
}

/// Above this step-doubling discrepancy a step is rejected.
inline constexpr double kMaxLocalError = 1e-3;

using ControlSignal = std::function<Eigen::VectorXd(double)>;

/// Samples of a forward integration within one phase.
template <class Group>
struct PhaseTrajectory {
  std::vector<double> t;
  std::vector<typename Group::Element> g;
  std::vector<Eigen::VectorXd> u;
  /// Running cost accumulated from the first sample up to each sample.
  std::vector<double> cost;

  double total_cost() const { return cost.empty() ? 0.0 : cost.back(); }
};

/**
 * @brief Integrates g' = g (sum_c u_c(t) e_c + drift) over [ta, tb].
 *
 * The window is split at `breakpoints`; inside each piece the step is at most
 * h. Stage controls are sampled strictly inside each piece, so a control that
 * is constant on each piece is integrated exactly. The running cost is
 * accumulated with Simpson's rule on each step.
 */
template <class Group>
PhaseTrajectory<Group> integrate_phase(const Group& group, const PhaseSpec<Group::kDim>& phase,
                                       const typename Group::Element& g0,
                                       const ControlSignal& control, double ta, double tb,
                                       double h, std::vector<double> breakpoints = {}) {
  using Vec = typename Group::Vec;
  if (!(tb > ta)) throw std::invalid_argument("integrate_phase: empty window");
  if (!(h > 0.0)) throw std::invalid_argument("integrate_phase: step must be positive");

  std::vector<double> knots{ta};
  std::sort(breakpoints.begin(), breakpoints.end());
  for (double b : breakpoints)
    if (b > ta && b < tb && b > knots.back()) knots.push_back(b);
  knots.push_back(tb);

  PhaseTrajectory<Group> out;
  auto g = g0;
  double acc = 0.0;
  out.t.push_back(ta);
  out.g.push_back(g);
  out.u.push_back(control(ta));
  out.cost.push_back(0.0);

  const auto velocity = [&](double t, Eigen::VectorXd* u_out, double* rate) {
    const Eigen::VectorXd u = control(t);
    if (u_out) *u_out = u;
    if (rate) *rate = running_cost(phase, u);
    return body_velocity(phase, u);
  };

  for (std::size_t piece = 0; piece + 1 < knots.size(); ++piece) {
    const double a = knots[piece];
    const double b = knots[piece + 1];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    const double step = (b - a) / n;
    for (int i = 0; i < n; ++i) {
      const double t0 = a + i * step;
      const double t1 = (i + 1 == n) ? b : a + (i + 1) * step;
      const double dt = t1 - t0;
      const double lo = std::nextafter(t0, t1);
      const double hi = std::nextafter(t1, t0);
      double r1, r2, r4;
      const Vec x1 = velocity(lo, nullptr, &r1);
      const Vec x2 = velocity(t0 + 0.5 * dt, nullptr, &r2);
      const Vec x4 = velocity(hi, nullptr, &r4);
      const auto full = cf4_step(group, g, x1, x2, x2, x4, dt);

      // step doubling
      const Vec xq1 = velocity(t0 + 0.25 * dt, nullptr, nullptr);
      const Vec xq3 = velocity(t0 + 0.75 * dt, nullptr, nullptr);
      const auto half = cf4_step(group, cf4_step(group, g, x1, xq1, xq1, x2, 0.5 * dt), x2, xq3,
                                 xq3, x4, 0.5 * dt);
      const double err = (full.matrix() - half.matrix()).cwiseAbs().maxCoeff();
      if (err > kMaxLocalError) {
        throw StepTooLarge("local error estimate " + std::to_string(err) + " at t=" +
                           std::to_string(t0) + " exceeds the limit; reduce the step");
      }

      g = half;
      acc += dt / 6.0 * (r1 + 4.0 * r2 + r4);
      Eigen::VectorXd u_here;
      if (i + 1 == n && piece + 2 == knots.size()) {
        u_here = control(hi);
      } else {
        u_here = control(t1);
      }
      out.t.push_back(t1);
      out.g.push_back(g);
      out.u.push_back(std::move(u_here));
      out.cost.push_back(acc);
    }
  }
  return out;
}

// ------------------------------------------------------------------ surfaces

/// Level-set switching surface {g : level(g) = 0}.
template <class Group>
struct SwitchingSurface {
  std::function<double(const typename Group::Element&)> level;
  /// Optional analytic body differential p_i = d/ds level(g exp(s e_i)) at s=0.
  std::function<typename Group::Vec(const typename Group::Element&)> body_differential;
  double tol_zero = 1e-10;
  double eps_trans = 1e-8;
  double fd_step = 1e-6;
};

template <class Group>
double directional_derivative(const Group& group, const SwitchingSurface<Group>& surface,
                              const typename Group::Element& g, const typename Group::Vec& X) {
  if (surface.body_differential) return surface.body_differential(g).dot(X);
  const double s = surface.fd_step;
  return (surface.level(g * group.exp(s * X)) - surface.level(g * group.exp(-s * X))) / (2.0 * s);
}

/// Rate of change of the level along the body velocity X at g.
template <class Group>
double transversality(const Group& group, const SwitchingSurface<Group>& surface,
                      const typename Group::Element& g, const typename Group::Vec& X) {
  return directional_derivative(group, surface, g, X);
}

/// Body-frame normal nu with I(nu, .) equal to the body differential of the
/// level. g is expected to lie on the surface.
template <class Group>
typename Group::Vec surface_normal_body(const Group& group, const SwitchingSurface<Group>& surface,
                                        const typename Group::Element& g) {
  typename Group::Vec p;
  if (surface.body_differential) {
    p = surface.body_differential(g);
  } else {
    for (int i = 0; i < Group::kDim; ++i)
      p(i) = directional_derivative(group, surface, g, Group::Vec::Unit(i));
  }
  if (p.norm() < 1e-10) {
    throw DegenerateNormal("level function has a vanishing differential at this point");
  }
  return group.metric_raise(p);
}

template <class Group>
struct SwitchEvent {
  double t;
  typename Group::Element g_pre;
  typename Group::Element g_post;
  double transversality;
  /// Index of the last sample strictly before the event.
  std::size_t index;
};

namespace detail {

// Piecewise exponential interpolation between samples k and k+1.
template <class Group>
struct FrozenSegment {
  const Group* group;
  typename Group::Element g0;
  typename Group::Vec X;
  double t0;

  typename Group::Element at(double s) const { return g0 * group->exp((s - t0) * X); }
};

template <class Group>
FrozenSegment<Group> frozen(const Group& group, const PhaseTrajectory<Group>& traj,
                            std::size_t k) {
  const double dt = traj.t[k + 1] - traj.t[k];
  const typename Group::Vec X = group.log(group.inverse(traj.g[k]) * traj.g[k + 1]) / dt;
  return {&group, traj.g[k], X, traj.t[k]};
}

}  // namespace detail

/**
 * @brief Locates the first transversal crossing of the surface along sampled
 * states.
 *
 * The crossing is bracketed between samples and refined by bisection along
 * the exponential curve through the bracketing samples. Tangential contact
 * before the first crossing, or a crossing with |rate| below eps_trans,
 * raises NonTransversal.
 */
template <class Group>
std::optional<SwitchEvent<Group>> detect_switch(const Group& group,
                                                const PhaseTrajectory<Group>& traj,
                                                const SwitchingSurface<Group>& surface) {
  const std::size_t n = traj.t.size();
  if (n < 2) return std::nullopt;
  std::vector<double> lv(n);
  for (std::size_t k = 0; k < n; ++k) lv[k] = surface.level(traj.g[k]);

  // |level| has a local minimum at sample k without a sign change. The minimum
  // of the interpolating parabola through samples k-1, k, k+1 estimates the
  // closest approach; a fourth sample bounds the interpolation error.
  const auto touch_check = [&](std::size_t k) {
    const double t0 = traj.t[k - 1], t1 = traj.t[k], t2 = traj.t[k + 1];
    const double d01 = (lv[k] - lv[k - 1]) / (t1 - t0);
    const double d12 = (lv[k + 1] - lv[k]) / (t2 - t1);
    const double c2 = (d12 - d01) / (t2 - t0);
    if (c2 == 0.0) return;
    const double slope = d01 + c2 * (t1 - t0);
    const double tv = t1 - slope / (2.0 * c2);
    const double pv = lv[k] + slope * (tv - t1) + c2 * (tv - t1) * (tv - t1);
    double err = 0.0;
    if (k + 2 < n || k >= 2) {
      const std::size_t j = (k + 2 < n) ? k + 2 : k - 2;
      const double t3 = traj.t[j];
      const double d23 = (j > k) ? (lv[j] - lv[k + 1]) / (t3 - t2) : (lv[k - 1] - lv[j]) / (t0 - t3);
      const double c2b = (j > k) ? (d23 - d12) / (t3 - t1) : (d01 - d23) / (t1 - t3);
      const double c3 = (j > k) ? (c2b - c2) / (t3 - t0) : (c2 - c2b) / (t2 - t3);
      err = std::abs(c3 * (tv - t0) * (tv - t1) * (tv - t2));
    }
    if (std::abs(pv) <= 10.0 * surface.tol_zero + err) {
      throw NonTransversal("trajectory touches the switching surface tangentially near t=" +
                           io::fmt(tv) + " (closest level " + io::fmt(pv) + ")");
    }
  };

  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (k >= 1 && lv[k] != 0.0 && std::abs(lv[k]) <= std::abs(lv[k - 1]) &&
        std::abs(lv[k]) <= std::abs(lv[k + 1]) && (lv[k - 1] * lv[k] > 0.0) &&
        (lv[k] * lv[k + 1] > 0.0)) {
      touch_check(k);
    }
    if (lv[k + 1] == 0.0 && lv[k] != 0.0) {
      // A sample lands exactly on the surface.
      std::size_t m = k + 2;
      while (m < n && lv[m] == 0.0) ++m;
      if (m < n && (lv[m] > 0.0) == (lv[k] > 0.0)) {
        throw NonTransversal("trajectory touches the switching surface tangentially at t=" +
                             io::fmt(traj.t[k + 1]));
      }
      const auto seg = detail::frozen(group, traj, k);
      const double rate = transversality(group, surface, traj.g[k + 1], seg.X);
      if (std::abs(rate) < surface.eps_trans) {
        throw NonTransversal("crossing at t=" + io::fmt(traj.t[k + 1]) +
                             " is not transversal (rate " + io::fmt(rate) + ")");
      }
      return SwitchEvent<Group>{traj.t[k + 1], traj.g[k + 1], traj.g[k + 1], rate, k};
    }
    if (!(lv[k] * lv[k + 1] < 0.0)) continue;

    const auto seg = detail::frozen(group, traj, k);
    double a = traj.t[k];
    double b = traj.t[k + 1];
    double fa = lv[k];
    double s = b;
    double fs = lv[k + 1];
    for (int it = 0; it < 400; ++it) {
      s = 0.5 * (a + b);
      fs = surface.level(seg.at(s));
      const bool narrow = (b - a) <= 1e-12 * std::max(1.0, std::abs(s));
      if (std::abs(fs) <= surface.tol_zero && narrow) break;
      if (fs == 0.0) break;
      if ((fa < 0.0) == (fs < 0.0)) {
        a = s;
        fa = fs;
      } else {
        b = s;
      }
      if ((b - a) <= std::numeric_limits<double>::epsilon() * std::abs(s)) break;
    }
    const auto g_pre = seg.at(s);
    const double rate = transversality(group, surface, g_pre, seg.X);
    if (std::abs(rate) < surface.eps_trans) {
      throw NonTransversal("crossing at t=" + io::fmt(s) + " is not transversal (rate " +
                           io::fmt(rate) + ")");
    }
    return SwitchEvent<Group>{s, g_pre, g_pre, rate, k};
  }
  return std::nullopt;
}

// --------------------------------------------------------------------- jumps

template <class Group>
struct JumpMap {
  /// Empty means the identity map.
  std::function<typename Group::Element(const typename Group::Element&)> map;

  bool is_identity() const { return !map; }
};

template <class Group>
typename Group::Element apply_jump(const Group& group, const JumpMap<Group>& jump,
                                   const typename Group::Element& g_pre, double tol = 1e-9) {
  if (jump.is_identity()) return g_pre;
  auto g = jump.map(g_pre);
  const double err = group.membership_error(g.matrix());
  if (!(err <= tol)) {
    throw ResultOffGroup("jump map output leaves the group (deviation " + io::fmt(err) + ")");
  }
  return g;
}

// ---------------------------------------------------------------- simulation

template <class Group>
struct HybridTrajectory {
  std::vector<PhaseTrajectory<Group>> phases;
  std::vector<SwitchEvent<Group>> events;

  const typename Group::Element& final_state() const { return phases.back().g.back(); }
};

template <class Group>
using TerminalCost = std::function<double(const typename Group::Element&)>;

/// Sum of the running costs of all phases plus the terminal cost.
template <class Group>
double hybrid_cost(const HybridTrajectory<Group>& traj, const TerminalCost<Group>& terminal = {}) {
  double total = 0.0;
  for (const auto& p : traj.phases) total += p.total_cost();
  if (terminal) total += terminal(traj.final_state());
  return total;
}

/**
 * @brief Simulates the two-phase system over [t0, tf] with at most one
 * autonomous switch.
 *
 * Phase 1 runs until the first crossing of the surface (if any); the state
 * jumps and phase 2 continues to tf. Controls are supplied per phase.
 */
template <class Group>
HybridTrajectory<Group> simulate(const Group& group, const PhaseSpec<Group::kDim>& phase1,
                                 const PhaseSpec<Group::kDim>& phase2,
                                 const typename Group::Element& g0, const ControlSignal& control1,
                                 const ControlSignal& control2, double t0, double tf, double h,
                                 const SwitchingSurface<Group>* surface,
                                 const JumpMap<Group>& jump = {},
                                 const std::vector<double>& breakpoints = {}) {
  HybridTrajectory<Group> out;
  auto first = integrate_phase(group, phase1, g0, control1, t0, tf, h, breakpoints);
  if (!surface) {
    out.phases.push_back(std::move(first));
    return out;
  }
  auto event = detect_switch(group, first, *surface);
  if (!event) {
    out.phases.push_back(std::move(first));
    return out;
  }
  // Re-integrate phase 1 up to the event so its samples and cost end there.
  std::vector<double> bp_pre;
  for (double b : breakpoints)
    if (b < event->t) bp_pre.push_back(b);
  auto pre = integrate_phase(group, phase1, g0, control1, t0, event->t, h, bp_pre);
  event->g_pre = pre.g.back();
  event->g_post = apply_jump(group, jump, event->g_pre);
  event->index = pre.t.size() - 1;
  out.phases.push_back(std::move(pre));
  out.events.push_back(*event);
  if (event->t < tf) {
    out.phases.push_back(
        integrate_phase(group, phase2, event->g_post, control2, event->t, tf, h, breakpoints));
  }
  return out;
}

/// CSV with columns t, g11..gNN, u1..uk, level (nan without a surface).
template <class Group>
std::string trajectory_csv(const Group& group, const HybridTrajectory<Group>& traj,
                           const SwitchingSurface<Group>* surface) {
  (void)group;
  constexpr int N = Group::kMatrixSize;
  int k = 0;
  for (const auto& p : traj.phases)
    for (const auto& u : p.u) k = std::max(k, static_cast<int>(u.size()));
  std::vector<std::string> header{"t"};
  for (int r = 1; r <= N; ++r)
    for (int c = 1; c <= N; ++c) header.push_back("g" + std::to_string(r) + std::to_string(c));
  for (int i = 1; i <= k; ++i) header.push_back("u" + std::to_string(i));
  header.push_back("level");
  io::CsvWriter csv(header);
  for (const auto& p : traj.phases) {
    for (std::size_t s = 0; s < p.t.size(); ++s) {
      std::vector<double> row{p.t[s]};
      for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) row.push_back(p.g[s](r, c));
      for (int i = 0; i < k; ++i) row.push_back(i < p.u[s].size() ? p.u[s](i) : 0.0);
      row.push_back(surface ? surface->level(p.g[s]) : std::numeric_limits<double>::quiet_NaN());
      csv.row(row);
    }
  }
  return csv.str();
}

// ----------------------------------------------------- variational validators

/// Body-frame endpoint derivative at time t of a needle variation placed at
/// t1 with value u1, for a nominal control that is constant on [t1, t].
template <class Group>
typename Group::Vec needle_endpoint_derivative(const Group& group,
                                               const PhaseSpec<Group::kDim>& phase,
                                               const Eigen::VectorXd& u_nominal, double t1,
                                               const Eigen::VectorXd& u1, double t) {
  const typename Group::Vec xi = body_velocity(phase, u_nominal);
  const typename Group::Vec df = body_velocity(phase, u1) - xi;
  return group.Ad(group.exp(-(t - t1) * xi), df);
}

template <class Group>
struct PairingTransport {
  typename Group::Vec costate;
  typename Group::Vec tangent;
  double drift;
};

/// Transports a tangent vector and a costate along a constant body velocity:
/// w(tau) = Ad_{exp(-tau xi)} w0, lambda(tau) = Ad*_{exp(tau xi)} lambda0.
template <class Group>
PairingTransport<Group> propagate_pairing(const Group& group, const typename Group::Vec& costate0,
                                          const typename Group::Vec& tangent0,
                                          const typename Group::Vec& xi, double tau) {
  PairingTransport<Group> out;
  out.tangent = group.Ad(group.exp(-tau * xi), tangent0);
  out.costate = group.Ad_star(group.exp(tau * xi), costate0);
  out.drift = std::abs(out.costate.dot(out.tangent) - costate0.dot(tangent0));
  return out;
}

}  // namespace liehmp
