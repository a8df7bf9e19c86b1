#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "liehmp/dynamics.hpp"
#include "liehmp/errors.hpp"
#include "liehmp/extremal.hpp"
#include "liehmp/io.hpp"
#include "liehmp/phase.hpp"
#include "liehmp/shooting.hpp"

namespace liehmp {

/// Two-phase fixed-endpoint problem: g0 at t0 to gf at tf with one switch.
template <class Group>
struct HybridProblem {
  using Element = typename Group::Element;

  PhaseSpec<Group::kDim> phase1;
  PhaseSpec<Group::kDim> phase2;
  double t0 = 0.0;
  double tf = 1.0;
  Element g0;
  Element gf;
  std::optional<SwitchingSurface<Group>> surface;
  JumpMap<Group> jump;
  /// Cost on the final state; empty means zero.
  TerminalCost<Group> terminal_cost;

  void validate(const Group& group, double tol = 1e-9) const {
    phase1.validate();
    phase2.validate();
    if (!(t0 < tf)) throw InvalidPhase("problem requires t0 < tf");
    if (!(group.membership_error(g0.matrix()) <= tol)) throw OffGroup("g0 is not on the group");
    if (!(group.membership_error(gf.matrix()) <= tol)) throw OffGroup("gf is not on the group");
  }
};

/// Costate just before the switch: lambda_post + mu I(nu, .).
template <class Group>
typename Group::Vec adjoint_jump(const Group& group, const typename Group::Vec& costate_post,
                                 double mu, const typename Group::Vec& normal) {
  return costate_post + mu * group.metric_lower(normal);
}

struct MuSolution {
  /// All roots found in [-mu_max, mu_max], ascending.
  std::vector<double> roots;
  /// Root of smallest magnitude (positive on ties).
  double mu = 0.0;
};

/**
 * @brief Multiplier mu that restores continuity of the minimized Hamiltonian
 * across the switch: H1(lambda_post + mu I(nu,.)) = H2(lambda_post).
 *
 * For an unbounded quadratic first phase the equation is a quadratic in mu
 * and is solved in closed form; otherwise sign changes are scanned and
 * refined by bisection.
 */
template <class Group>
MuSolution solve_mu(const Group& group, const PhaseSpec<Group::kDim>& phase1,
                    const PhaseSpec<Group::kDim>& phase2, const typename Group::Vec& costate_post,
                    const typename Group::Vec& normal, double mu_max = 1e3, double tol = 1e-10) {
  using Vec = typename Group::Vec;
  if (normal.norm() == 0.0) throw NoRoot("zero normal: the jump direction is undefined");
  const Vec n = group.metric_lower(normal);
  const double h2 = minimized_hamiltonian(phase2, costate_post);
  const auto phi = [&](double mu) {
    return minimized_hamiltonian(phase1, Vec(costate_post + mu * n)) - h2;
  };

  MuSolution out;
  if (phase1.cost == CostKind::QuadraticHalfNorm && !phase1.bounded()) {
    double a = 0.0, b = n.dot(phase1.drift);
    for (int k = 0; k < phase1.num_controls(); ++k) {
      const int c = phase1.channels[k];
      const double w = phase1.weight(k);
      a -= 0.5 * n(c) * n(c) / w;
      b -= costate_post(c) * n(c) / w;
    }
    const double c0 = phi(0.0);
    if (a == 0.0) {
      if (b != 0.0) out.roots.push_back(-c0 / b);
      else if (c0 == 0.0) out.roots.push_back(0.0);
    } else {
      const double disc = b * b - 4.0 * a * c0;
      if (disc >= 0.0) {
        const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
        if (q != 0.0) {
          out.roots.push_back(q / a);
          out.roots.push_back(c0 / q);
        } else {
          out.roots.push_back(0.0);
        }
      }
    }
  } else {
    const int samples = 2001;
    double prev_mu = -mu_max, prev = phi(prev_mu);
    if (prev == 0.0) out.roots.push_back(prev_mu);
    for (int i = 1; i < samples; ++i) {
      const double m = -mu_max + 2.0 * mu_max * i / (samples - 1);
      const double f = phi(m);
      if (f == 0.0) {
        out.roots.push_back(m);
      } else if (prev != 0.0 && (prev < 0.0) != (f < 0.0)) {
        double lo = prev_mu, hi = m, flo = prev;
        for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::abs(lo)); ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = phi(mid);
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
        out.roots.push_back(0.5 * (lo + hi));
      }
      prev_mu = m;
      prev = f;
    }
  }
  std::erase_if(out.roots, [&](double r) { return !std::isfinite(r) || std::abs(r) > mu_max; });
  std::sort(out.roots.begin(), out.roots.end());
  if (out.roots.empty()) {
    throw NoRoot("Hamiltonian continuity has no multiplier in [-" + io::fmt(mu_max) + ", " +
                 io::fmt(mu_max) + "]");
  }
  out.mu = out.roots.front();
  for (double r : out.roots) {
    if (std::abs(r) < std::abs(out.mu) || (std::abs(r) == std::abs(out.mu) && r > out.mu)) {
      out.mu = r;
    }
  }
  return out;
}

// -------------------------------------------------------------- value oracle

struct SolverControls {
  ShootingOptions shooting;
  int n_starts = 8;
  std::uint64_t seed = 1;
  /// Central-difference step used for gradient calibration.
  double fd_delta = 1e-5;
  double mu_max = 1e3;
  /// Reuse the previous costate as the only start while it keeps converging.
  bool warm_start = true;
};

template <class Group>
struct ValueGradient {
  using Vec = typename Group::Vec;
  Vec grad_body = Vec::Zero();
  double dv_dts = 0.0;
  double v = 0.0;
  /// Phase-1 costate at the switch and phase-2 costate just after it (pulled
  /// back through the jump when there is one).
  Vec costate_pre = Vec::Zero();
  Vec costate_post = Vec::Zero();
  double H_pre = 0.0;
  double H_post = 0.0;
  ShootingResult<Group> phase1;
  ShootingResult<Group> phase2;
};

/// Sign convention linking costate differences to the value gradient,
/// fixed by comparison with central differences.
struct GradientCalibration {
  double grad_sign = -1.0;
  double time_sign = 1.0;
  bool grad_frozen = false;
  bool time_frozen = false;
  double grad_angle_deg = 0.0;
  double grad_ratio = 1.0;
  double time_ratio = 1.0;
};

template <class Group>
struct FdGradient {
  typename Group::Vec differential;  // d/ds v(g exp(s e_i))
  typename Group::Vec grad_body;     // metric_raise(differential)
  double dv_dts;
};

/**
 * @brief Hybrid value v(g_s, t_s) = J1(g0 -> g_s on [t0, t_s]) +
 * J2(jump(g_s) -> gf on [t_s, tf]) with its gradient from the costates.
 *
 * Each phase is solved by multi-start shooting on first use; later
 * evaluations start from the previous costate and fall back to the full
 * multi-start when that fails. Not thread-safe (it carries warm starts).
 */
template <class Group>
class ValueOracle {
 public:
  using Vec = typename Group::Vec;
  using AdMat = typename Group::AdMat;
  using Element = typename Group::Element;

  ValueOracle(const Group& group, HybridProblem<Group> problem, SolverControls controls = {})
      : group_(group), problem_(std::move(problem)), controls_(std::move(controls)) {
    problem_.validate(group_);
  }

  const HybridProblem<Group>& problem() const { return problem_; }
  const SolverControls& controls() const { return controls_; }
  const GradientCalibration& calibration() const { return calibration_; }
  void set_calibration(const GradientCalibration& c) { calibration_ = c; }
  int evaluations() const { return evaluations_; }

  /// All shooting starts of the most recent full multi-start, per phase.
  const std::vector<ShootingResult<Group>>& branches(int phase) const {
    return phase == 1 ? branches1_ : branches2_;
  }

  struct Solved {
    Element g_s;
    double t_s;
    ShootingResult<Group> phase1;
    ShootingResult<Group> phase2;
    double v;
  };

  /// Value only. Trial points start from the costates of the last point
  /// passed to `evaluate` and leave them unchanged.
  double value(const Element& g_s, double t_s) { return solve(g_s, t_s, false).v; }

  /// Value and costate gradient at (g_s, t_s). The first call with a
  /// resolvable gradient fixes the sign convention against central
  /// differences.
  ValueGradient<Group> evaluate(const Element& g_s, double t_s) {
    const Solved s = solve(g_s, t_s, true);
    ValueGradient<Group> out = assemble(s);
    if (!calibration_.grad_frozen || !calibration_.time_frozen) {
      calibrate_at(s, out);
      out = assemble(s);
      // calibration moved the warm starts; restore this point's solution
      warm1_ = s.phase1.costate0;
      warm2_ = s.phase2.costate0;
      last_ = s;
    }
    return out;
  }

  /// Central differences of v along g_s exp(+-delta e_i) and t_s +- delta.
  FdGradient<Group> fd_gradient(const Element& g_s, double t_s, double delta = 0.0) {
    if (delta == 0.0) delta = controls_.fd_delta;
    const Solved base = solve(g_s, t_s, true);
    FdGradient<Group> out;
    for (int i = 0; i < Group::kDim; ++i) {
      restore(base);
      const double vp = value(g_s * group_.exp(delta * Vec::Unit(i)), t_s);
      restore(base);
      const double vm = value(g_s * group_.exp(-delta * Vec::Unit(i)), t_s);
      out.differential(i) = (vp - vm) / (2.0 * delta);
    }
    restore(base);
    const double tp = value(g_s, t_s + delta);
    restore(base);
    const double tm = value(g_s, t_s - delta);
    out.dv_dts = (tp - tm) / (2.0 * delta);
    restore(base);
    out.grad_body = group_.metric_raise(out.differential);
    return out;
  }

  /// Compares the costate formulas with central differences at a point and
  /// freezes the signs that agree. Throws GradientCalibrationFailed when the
  /// two disagree beyond 45 degrees or 10% in magnitude.
  void calibrate(const Element& g_s, double t_s) {
    const Solved s = solve(g_s, t_s, true);
    auto vg = assemble(s);
    calibrate_at(s, vg);
  }

  const Group& group() const { return group_; }

 private:
  void restore(const Solved& s) {
    warm1_ = s.phase1.costate0;
    warm2_ = s.phase2.costate0;
    last_ = s;
  }

  ShootingResult<Group> solve_phase(const PhaseBvp<Group>& bvp, std::optional<Vec>& warm,
                                    std::vector<ShootingResult<Group>>& branches, bool anchor) {
    std::optional<ShootingResult<Group>> near;
    if (warm && controls_.warm_start) {
      try {
        auto r = shoot(bvp, *warm, controls_.shooting);
        // a converged costate far from the warm start is another branch
        if (r.converged) {
          if ((r.costate0 - *warm).norm() <= kBranchJump * (1.0 + warm->norm())) {
            if (anchor) warm = r.costate0;
            return r;
          }
          near = std::move(r);
        }
      } catch (const SingularJacobian&) {
      }
    }
    MultiStartResult<Group> ms;
    try {
      ms = multi_start_shoot(bvp, controls_.n_starts, controls_.seed, controls_.shooting,
                             std::optional<Vec>{});
    } catch (const NoConvergedStart&) {
      if (!near) throw;
      ms.best = *near;
    }
    if (near && better(*near, ms.best)) ms.best = *near;
    if (anchor) {
      branches = ms.starts;
      warm = ms.best.costate0;
    }
    return ms.best;
  }

  Solved solve(const Element& g_s, double t_s, bool anchor) {
    if (last_ && last_->g_s == g_s && last_->t_s == t_s) {
      if (anchor) {
        warm1_ = last_->phase1.costate0;
        warm2_ = last_->phase2.costate0;
      }
      return *last_;
    }
    if (!(t_s > problem_.t0 && t_s < problem_.tf)) {
      throw std::invalid_argument("switching time must lie strictly inside (t0, tf)");
    }
    ++evaluations_;
    const PhaseBvp<Group> b1{&group_, &problem_.phase1, problem_.g0, g_s, problem_.t0, t_s};
    const Element g_post = apply_jump(group_, problem_.jump, g_s);
    const PhaseBvp<Group> b2{&group_, &problem_.phase2, g_post, problem_.gf, t_s, problem_.tf};
    Solved s{g_s, t_s, solve_phase(b1, warm1_, branches1_, anchor),
             solve_phase(b2, warm2_, branches2_, anchor), 0.0};
    s.v = s.phase1.cost + s.phase2.cost;
    if (problem_.terminal_cost) s.v += problem_.terminal_cost(problem_.gf);
    last_ = s;
    return s;
  }

  // Body differential of the jump map at g, by central differences.
  AdMat jump_differential(const Element& g) const {
    AdMat D;
    const double d = 1e-6;
    const Element base = apply_jump(group_, problem_.jump, g);
    const Element base_inv = group_.inverse(base);
    for (int i = 0; i < Group::kDim; ++i) {
      const Element p = apply_jump(group_, problem_.jump, g * group_.exp(d * Vec::Unit(i)));
      const Element m = apply_jump(group_, problem_.jump, g * group_.exp(-d * Vec::Unit(i)));
      D.col(i) = (group_.log(base_inv * p) - group_.log(base_inv * m)) / (2.0 * d);
    }
    return D;
  }

  ValueGradient<Group> assemble(const Solved& s) const {
    ValueGradient<Group> out;
    out.v = s.v;
    out.phase1 = s.phase1;
    out.phase2 = s.phase2;
    out.costate_pre = s.phase1.costate_end;
    out.costate_post = s.phase2.costate0;
    if (!problem_.jump.is_identity()) {
      out.costate_post = jump_differential(s.g_s).transpose() * out.costate_post;
    }
    out.H_pre = s.phase1.hamiltonian;
    out.H_post = s.phase2.hamiltonian;
    out.grad_body =
        calibration_.grad_sign * group_.metric_raise(out.costate_pre - out.costate_post);
    out.dv_dts = calibration_.time_sign * (out.H_pre - out.H_post);
    return out;
  }

  void calibrate_at(const Solved& s, const ValueGradient<Group>& vg) {
    const auto fd = fd_gradient(s.g_s, s.t_s);
    restore(s);
    const Vec raw = vg.grad_body / calibration_.grad_sign;
    const double raw_t = vg.dv_dts / calibration_.time_sign;
    constexpr double kResolvable = 1e-6;

    if (!calibration_.grad_frozen && fd.grad_body.norm() > kResolvable) {
      const double cosang =
          group_.inner(raw, fd.grad_body) /
          std::sqrt(group_.inner(raw, raw) * group_.inner(fd.grad_body, fd.grad_body));
      const double sign = cosang >= 0.0 ? 1.0 : -1.0;
      const double angle = std::acos(std::clamp(std::abs(cosang), 0.0, 1.0)) * 180.0 /
                           std::numbers::pi;
      const double ratio = std::sqrt(group_.inner(raw, raw) / group_.inner(fd.grad_body, fd.grad_body));
      calibration_.grad_angle_deg = angle;
      calibration_.grad_ratio = ratio;
      if (angle > 45.0 || std::abs(ratio - 1.0) > 0.1) {
        throw GradientCalibrationFailed(
            "costate gradient disagrees with finite differences (angle " + io::fmt(angle) +
            " deg, magnitude ratio " + io::fmt(ratio) + ")");
      }
      calibration_.grad_sign = sign;
      calibration_.grad_frozen = true;
    }
    if (!calibration_.time_frozen && std::abs(fd.dv_dts) > kResolvable) {
      const double ratio = std::abs(raw_t / fd.dv_dts);
      calibration_.time_ratio = ratio;
      if (std::abs(ratio - 1.0) > 0.1) {
        throw GradientCalibrationFailed(
            "Hamiltonian gap disagrees with the time finite difference (ratio " +
            io::fmt(ratio) + ")");
      }
      calibration_.time_sign = (raw_t * fd.dv_dts >= 0.0) ? 1.0 : -1.0;
      calibration_.time_frozen = true;
    }
  }

  static constexpr double kBranchJump = 0.5;

  const Group& group_;
  HybridProblem<Group> problem_;
  SolverControls controls_;
  GradientCalibration calibration_;
  std::optional<Vec> warm1_;
  std::optional<Vec> warm2_;
  std::optional<Solved> last_;
  std::vector<ShootingResult<Group>> branches1_;
  std::vector<ShootingResult<Group>> branches2_;
  int evaluations_ = 0;
};

// ---------------------------------------------------------------- residuals

struct HmpResiduals {
  double hamiltonian_gap = 0.0;
  double minimization_gap = 0.0;
  /// Absent when the problem has no switching surface.
  std::optional<double> jump_alignment;
};

inline io::json to_json(const HmpResiduals& r) {
  io::json j;
  j["hamiltonian_gap"] = r.hamiltonian_gap;
  j["minimization_gap"] = r.minimization_gap;
  j["jump_alignment"] = r.jump_alignment ? io::json(*r.jump_alignment) : io::json("n/a");
  return j;
}

/**
 * @brief Checks the necessary conditions at a solved switching point.
 *
 * minimization_gap is the largest H(u*) - H(u) over random admissible u at
 * sampled times of both extremals (clipped below at 0).
 */
template <class Group>
HmpResiduals hmp_residuals(const Group& group, const HybridProblem<Group>& problem,
                           const typename Group::Element& g_s, double t_s,
                           const ValueGradient<Group>& vg, const ExtremalOptions& integration = {},
                           int samples = 10000, std::uint64_t seed = 7) {
  HmpResiduals out;
  out.hamiltonian_gap = std::abs(vg.H_pre - vg.H_post);

  const auto tr1 = integrate_extremal(group, problem.phase1, problem.g0, vg.phase1.costate0,
                                      problem.t0, t_s, integration);
  const auto g_post = apply_jump(group, problem.jump, g_s);
  const auto tr2 = integrate_extremal(group, problem.phase2, g_post, vg.phase2.costate0, t_s,
                                      problem.tf, integration);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 0.0;
  const int per_time = 100;
  for (int s = 0; s < samples; s += per_time) {
    const bool first = (s / per_time) % 2 == 0;
    const auto& tr = first ? tr1 : tr2;
    const auto& phase = first ? problem.phase1 : problem.phase2;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, tr.t.size() - 1)(rng);
    const auto& lam = tr.costate[idx];
    const Eigen::VectorXd ustar = minimize_hamiltonian(phase, lam);
    const double hstar = hamiltonian(phase, lam, ustar);
    for (int k = 0; k < per_time; ++k) {
      Eigen::VectorXd u = ustar;
      for (int c = 0; c < u.size(); ++c) {
        u(c) += (1.0 + std::abs(ustar(c))) * unit(rng);
        if (const auto b = phase.bound(c)) u(c) = std::clamp(u(c), b->lo, b->hi);
      }
      worst = std::max(worst, hstar - hamiltonian(phase, lam, u));
    }
  }
  out.minimization_gap = worst;

  if (problem.surface) {
    const auto nu = surface_normal_body(group, *problem.surface, g_s);
    const auto n = group.metric_lower(nu);
    const auto d = vg.costate_pre - vg.costate_post;
    out.jump_alignment = (d - (d.dot(n) / n.squaredNorm()) * n).norm();
  }
  return out;
}

}  // namespace liehmp
