#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "liehmp/dynamics.hpp"
#include "liehmp/errors.hpp"
#include "liehmp/phase.hpp"
#include "liehmp/quadrature.hpp"

namespace liehmp {

/// Orientation of the costate transport. `Coadjoint` is lambda' = ad*_xi
/// lambda, which keeps <lambda, w> constant for tangent vectors w transported
/// by w' = -ad_xi w. `Reversed` flips it.
enum class CostateSign { Coadjoint, Reversed };

inline double sign_factor(CostateSign s) { return s == CostateSign::Coadjoint ? 1.0 : -1.0; }

struct ExtremalOptions {
  double h = 1e-3;
  CostateSign sign = CostateSign::Coadjoint;
  /// Step-doubling check on the first step.
  bool check_step = true;
};

template <class Group>
struct ExtremalRhs {
  typename Group::Vec velocity;
  typename Group::Vec costate_rate;
  double cost_rate;
};

/// Body velocity under the minimizing control and the costate rate.
template <class Group>
ExtremalRhs<Group> extremal_rhs(const Group& group, const PhaseSpec<Group::kDim>& phase,
                                const typename Group::Vec& costate,
                                CostateSign sign = CostateSign::Coadjoint) {
  const auto flow = minimized_flow(phase, costate);
  return {flow.velocity, sign_factor(sign) * group.ad_star_apply(flow.velocity, costate),
          flow.cost_rate};
}

template <class Group>
struct ExtremalTrajectory {
  std::string phase_id;
  double h = 0.0;
  std::vector<double> t;
  std::vector<typename Group::Element> g;
  std::vector<typename Group::Vec> costate;
  std::vector<Eigen::VectorXd> u;
  std::vector<double> H;
};

namespace detail {

template <class Group>
struct ExtremalStep {
  typename Group::Element g;
  typename Group::Vec costate;
};

// Classic RK4 on the costate; the state takes a commutator-free step with the
// same stage velocities.
template <class Group>
ExtremalStep<Group> extremal_step(const Group& group, const PhaseSpec<Group::kDim>& phase,
                                  const typename Group::Element& g,
                                  const typename Group::Vec& lam, double h, CostateSign sign) {
  using Vec = typename Group::Vec;
  const auto s1 = extremal_rhs(group, phase, lam, sign);
  const Vec l2 = lam + 0.5 * h * s1.costate_rate;
  const auto s2 = extremal_rhs(group, phase, l2, sign);
  const Vec l3 = lam + 0.5 * h * s2.costate_rate;
  const auto s3 = extremal_rhs(group, phase, l3, sign);
  const Vec l4 = lam + h * s3.costate_rate;
  const auto s4 = extremal_rhs(group, phase, l4, sign);
  return {cf4_step(group, g, s1.velocity, s2.velocity, s3.velocity, s4.velocity, h),
          lam + h / 6.0 *
                    (s1.costate_rate + 2.0 * s2.costate_rate + 2.0 * s3.costate_rate +
                     s4.costate_rate)};
}

template <class Group>
void check_first_step(const Group& group, const PhaseSpec<Group::kDim>& phase,
                      const typename Group::Element& g, const typename Group::Vec& lam, double h,
                      CostateSign sign) {
  const auto full = extremal_step(group, phase, g, lam, h, sign);
  const auto half1 = extremal_step(group, phase, g, lam, 0.5 * h, sign);
  const auto half2 = extremal_step(group, phase, half1.g, half1.costate, 0.5 * h, sign);
  const double eg = (full.g.matrix() - half2.g.matrix()).cwiseAbs().maxCoeff();
  const double el =
      (full.costate - half2.costate).cwiseAbs().maxCoeff() / std::max(1.0, lam.norm());
  const double err = std::max(eg, el);
  if (err > kMaxLocalError) {
    throw StepTooLarge("extremal local error estimate " + std::to_string(err) +
                       " exceeds the limit; reduce the step");
  }
}

}  // namespace detail

/// Samples the extremal from (g0, lambda0) over [ta, tb] on a uniform grid
/// with an even number of steps no longer than options.h.
template <class Group>
ExtremalTrajectory<Group> integrate_extremal(const Group& group,
                                             const PhaseSpec<Group::kDim>& phase,
                                             const typename Group::Element& g0,
                                             const typename Group::Vec& costate0, double ta,
                                             double tb, const ExtremalOptions& options = {}) {
  const StepGrid grid = make_grid(tb - ta, options.h);
  if (options.check_step) detail::check_first_step(group, phase, g0, costate0, grid.h, options.sign);
  ExtremalTrajectory<Group> out;
  out.phase_id = phase.id;
  out.h = grid.h;
  const auto record = [&](double t, const typename Group::Element& g,
                          const typename Group::Vec& lam) {
    const Eigen::VectorXd u = minimize_hamiltonian(phase, lam);
    out.t.push_back(t);
    out.g.push_back(g);
    out.costate.push_back(lam);
    out.H.push_back(hamiltonian(phase, lam, u));
    out.u.push_back(u);
  };
  auto g = g0;
  typename Group::Vec lam = costate0;
  record(ta, g, lam);
  for (int i = 0; i < grid.steps; ++i) {
    const auto next = detail::extremal_step(group, phase, g, lam, grid.h, options.sign);
    g = next.g;
    lam = next.costate;
    record(i + 1 == grid.steps ? tb : ta + (i + 1) * grid.h, g, lam);
  }
  return out;
}

template <class Group>
struct ExtremalEndpoint {
  typename Group::Element g;
  typename Group::Vec costate;
  double cost;
};

/// Endpoint of the extremal and its running cost (Simpson on the step grid),
/// without storing samples.
template <class Group>
ExtremalEndpoint<Group> extremal_endpoint(const Group& group, const PhaseSpec<Group::kDim>& phase,
                                          const typename Group::Element& g0,
                                          const typename Group::Vec& costate0, double ta,
                                          double tb, const ExtremalOptions& options = {}) {
  const StepGrid grid = make_grid(tb - ta, options.h);
  if (options.check_step) detail::check_first_step(group, phase, g0, costate0, grid.h, options.sign);
  auto g = g0;
  typename Group::Vec lam = costate0;
  double acc = minimized_flow(phase, lam).cost_rate;
  for (int i = 0; i < grid.steps; ++i) {
    const auto next = detail::extremal_step(group, phase, g, lam, grid.h, options.sign);
    g = next.g;
    lam = next.costate;
    const double w = (i + 1 == grid.steps) ? 1.0 : ((i % 2 == 0) ? 4.0 : 2.0);
    acc += w * minimized_flow(phase, lam).cost_rate;
  }
  return {g, lam, acc * grid.h / 3.0};
}

/// Simpson quadrature of the running cost over the samples.
template <class Group>
double phase_cost(const PhaseSpec<Group::kDim>& phase, const ExtremalTrajectory<Group>& traj) {
  std::vector<double> rate(traj.t.size());
  for (std::size_t i = 0; i < rate.size(); ++i) rate[i] = running_cost(phase, traj.u[i]);
  return simpson(traj.t, rate);
}

}  // namespace liehmp
