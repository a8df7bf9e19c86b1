#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "liehmp/errors.hpp"

namespace liehmp {

struct ControlBound {
  double lo;
  double hi;
};

enum class CostKind { QuadraticHalfNorm, Custom };

/**
 * @brief One discrete mode of the hybrid system.
 *
 * The body velocity is sum_c u_c e_c + drift over the active channels c.
 * Channel indices are zero-based. Controls are vectors with one entry per
 * active channel, in the order of `channels`.
 */
template <int Dim>
struct PhaseSpec {
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Control = Eigen::VectorXd;

  std::string id;
  std::vector<int> channels;
  Vec drift = Vec::Zero();

  CostKind cost = CostKind::QuadraticHalfNorm;
  /// Per-channel weights w_c of the running cost 1/2 sum w_c u_c^2.
  std::vector<double> weights;
  /// Per-channel bounds, aligned with `channels`. Empty means unbounded.
  std::vector<std::optional<ControlBound>> bounds;

  std::function<double(const Control&)> custom_cost;
  std::function<Control(const Vec& costate)> custom_minimizer;

  int num_controls() const { return static_cast<int>(channels.size()); }

  double weight(int k) const { return weights.empty() ? 1.0 : weights[k]; }

  std::optional<ControlBound> bound(int k) const {
    return bounds.empty() ? std::nullopt : bounds[k];
  }

  bool bounded() const {
    return std::any_of(bounds.begin(), bounds.end(), [](const auto& b) { return b.has_value(); });
  }

  void validate() const {
    if (channels.empty()) throw InvalidPhase("phase '" + id + "' has no active channels");
    std::set<int> seen;
    for (int c : channels) {
      if (c < 0 || c >= Dim) throw InvalidPhase("phase '" + id + "' has a channel out of range");
      if (!seen.insert(c).second) throw InvalidPhase("phase '" + id + "' repeats a channel");
    }
    if (!weights.empty()) {
      if (weights.size() != channels.size()) throw InvalidPhase("weights/channels size mismatch");
      for (double w : weights)
        if (!(w > 0.0)) throw InvalidPhase("cost weights must be positive");
    }
    if (!bounds.empty()) {
      if (bounds.size() != channels.size()) throw InvalidPhase("bounds/channels size mismatch");
      for (const auto& b : bounds)
        if (b && !(b->lo <= b->hi)) throw InvalidPhase("control bound with lo > hi");
    }
    if (cost == CostKind::Custom && !custom_cost) {
      throw InvalidPhase("custom running cost selected without a cost function");
    }
  }
};

template <int Dim>
PhaseSpec<Dim> quadratic_phase(std::string id, std::vector<int> channels) {
  PhaseSpec<Dim> p;
  p.id = std::move(id);
  p.channels = std::move(channels);
  return p;
}

/// Body velocity produced by control u.
template <int Dim>
typename PhaseSpec<Dim>::Vec body_velocity(const PhaseSpec<Dim>& phase,
                                           const Eigen::VectorXd& u) {
  if (u.size() != phase.num_controls()) {
    throw DimensionMismatch("control has " + std::to_string(u.size()) + " entries, phase '" +
                            phase.id + "' has " + std::to_string(phase.num_controls()) +
                            " channels");
  }
  typename PhaseSpec<Dim>::Vec xi = phase.drift;
  for (int k = 0; k < phase.num_controls(); ++k) xi(phase.channels[k]) += u(k);
  return xi;
}

template <int Dim>
double running_cost(const PhaseSpec<Dim>& phase, const Eigen::VectorXd& u) {
  if (phase.cost == CostKind::Custom) return phase.custom_cost(u);
  double s = 0.0;
  for (int k = 0; k < phase.num_controls(); ++k) s += phase.weight(k) * u(k) * u(k);
  return 0.5 * s;
}

/// H(lambda, u) = <lambda, body velocity> + running cost. Independent of g.
template <int Dim>
double hamiltonian(const PhaseSpec<Dim>& phase, const typename PhaseSpec<Dim>::Vec& costate,
                   const Eigen::VectorXd& u) {
  return costate.dot(body_velocity(phase, u)) + running_cost(phase, u);
}

/// Pointwise minimizer of H over admissible controls.
template <int Dim>
Eigen::VectorXd minimize_hamiltonian(const PhaseSpec<Dim>& phase,
                                     const typename PhaseSpec<Dim>::Vec& costate) {
  if (phase.cost == CostKind::Custom) {
    if (!phase.custom_minimizer) {
      throw MissingMinimizer("phase '" + phase.id + "' has a custom cost but no minimizer");
    }
    return phase.custom_minimizer(costate);
  }
  Eigen::VectorXd u(phase.num_controls());
  for (int k = 0; k < phase.num_controls(); ++k) {
    double v = -costate(phase.channels[k]) / phase.weight(k);
    if (const auto b = phase.bound(k)) v = std::clamp(v, b->lo, b->hi);
    u(k) = v;
  }
  return u;
}

/// Minimized body velocity and running cost rate, without heap traffic for
/// the quadratic case. Used in the inner integration loops.
template <int Dim>
struct MinimizedFlow {
  typename PhaseSpec<Dim>::Vec velocity;
  double cost_rate;
};

template <int Dim>
MinimizedFlow<Dim> minimized_flow(const PhaseSpec<Dim>& phase,
                                  const typename PhaseSpec<Dim>::Vec& costate) {
  if (phase.cost == CostKind::Custom) {
    const Eigen::VectorXd u = minimize_hamiltonian(phase, costate);
    return {body_velocity(phase, u), running_cost(phase, u)};
  }
  MinimizedFlow<Dim> out{phase.drift, 0.0};
  for (int k = 0; k < phase.num_controls(); ++k) {
    const int c = phase.channels[k];
    const double w = phase.weight(k);
    double v = -costate(c) / w;
    if (const auto b = phase.bound(k)) v = std::clamp(v, b->lo, b->hi);
    out.velocity(c) += v;
    out.cost_rate += 0.5 * w * v * v;
  }
  return out;
}

template <int Dim>
double minimized_hamiltonian(const PhaseSpec<Dim>& phase,
                             const typename PhaseSpec<Dim>::Vec& costate) {
  const auto f = minimized_flow(phase, costate);
  return costate.dot(f.velocity) + f.cost_rate;
}

}  // namespace liehmp
