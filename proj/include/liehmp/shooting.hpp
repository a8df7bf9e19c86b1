#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "liehmp/errors.hpp"
#include "liehmp/extremal.hpp"
#include "liehmp/io.hpp"

namespace liehmp {

struct ShootingOptions {
  /// Convergence threshold on the residual norm.
  double tol = 1e-8;
  /// Iterations continue past `tol` until this residual or until no progress.
  double polish_tol = 1e-13;
  int max_iters = 60;
  double jacobian_step = 1e-6;
  double damping_min = 1e-8;
  double damping_max = 1e2;
  /// Range of the random multi-start costate components.
  double start_range = 3.0;
  /// Worker threads for multi-start; results do not depend on it.
  int threads = 1;
  ExtremalOptions integration;
};

template <class Group>
struct ShootingResult {
  using Vec = typename Group::Vec;
  Vec costate0 = Vec::Zero();
  Vec residual = Vec::Constant(std::numeric_limits<double>::infinity());
  int iterations = 0;
  bool converged = false;
  double cost = std::numeric_limits<double>::infinity();
  /// Costate at the end of the window and the (conserved) Hamiltonian value.
  Vec costate_end = Vec::Zero();
  double hamiltonian = 0.0;
  /// Index of the multi-start that produced this result.
  int start_index = 0;
  std::string failure;

  double residual_norm() const { return residual.norm(); }
};

template <class Group>
io::json to_json(const ShootingResult<Group>& r) {
  io::json j;
  j["lambda0"] = io::to_json_vector(r.costate0);
  j["residual_norm"] = r.residual_norm();
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["cost"] = r.cost;
  return j;
}

/// Two-point boundary-value problem for one phase: steer g_start to g_target
/// over [ta, tb] along an extremal.
template <class Group>
struct PhaseBvp {
  const Group* group;
  const PhaseSpec<Group::kDim>* phase;
  typename Group::Element g_start;
  typename Group::Element g_target;
  double ta;
  double tb;
};

namespace detail {

template <class Group>
struct ResidualEval {
  typename Group::Vec r;
  ExtremalEndpoint<Group> end;
};

template <class Group>
ResidualEval<Group> shooting_residual(const PhaseBvp<Group>& bvp,
                                      const typename Group::Vec& costate0,
                                      const ExtremalOptions& integ) {
  const auto& G = *bvp.group;
  auto end = extremal_endpoint(G, *bvp.phase, bvp.g_start, costate0, bvp.ta, bvp.tb, integ);
  const typename Group::Vec r = G.log(G.inverse(end.g) * bvp.g_target);
  return {r, std::move(end)};
}

template <class Group>
std::optional<ResidualEval<Group>> try_residual(const PhaseBvp<Group>& bvp,
                                                const typename Group::Vec& costate0,
                                                const ExtremalOptions& integ) {
  if (!costate0.allFinite()) return std::nullopt;
  try {
    auto e = shooting_residual(bvp, costate0, integ);
    if (!e.r.allFinite()) return std::nullopt;
    return e;
  } catch (const NearCutLocus&) {
    return std::nullopt;
  } catch (const StepTooLarge&) {
    return std::nullopt;
  }
}

}  // namespace detail

/**
 * @brief Levenberg-Marquardt on the initial costate.
 *
 * The residual is log(g(tb)^-1 g_target). The Jacobian is a forward
 * difference. The damping climbs a x10 ladder on rejected steps and falls
 * back on accepted ones.
 */
template <class Group>
ShootingResult<Group> shoot(const PhaseBvp<Group>& bvp, const typename Group::Vec& guess,
                            const ShootingOptions& options = {}) {
  using Vec = typename Group::Vec;
  using AdMat = typename Group::AdMat;
  constexpr int D = Group::kDim;
  if (!(bvp.tb > bvp.ta)) throw std::invalid_argument("shoot: window has no length");
  if (!guess.allFinite()) throw std::invalid_argument("shoot: guess is not finite");

  ShootingResult<Group> out;
  Vec lam = guess;
  auto cur = detail::try_residual(bvp, lam, options.integration);
  if (!cur) {
    out.failure = "residual undefined at the initial guess";
    return out;
  }
  double rn = cur->r.norm();
  double damping = options.damping_min;
  int it = 0;
  for (; it < options.max_iters && rn > options.polish_tol; ++it) {
    AdMat J;
    bool jac_ok = true;
    for (int i = 0; i < D; ++i) {
      Vec lp = lam;
      lp(i) += options.jacobian_step;
      const auto e = detail::try_residual(bvp, lp, options.integration);
      if (!e) {
        jac_ok = false;
        break;
      }
      J.col(i) = (e->r - cur->r) / options.jacobian_step;
    }
    if (!jac_ok) {
      out.failure = "residual undefined while forming the Jacobian";
      break;
    }
    const AdMat JtJ = J.transpose() * J;
    const Vec Jtr = J.transpose() * cur->r;
    bool accepted = false;
    double best_ratio = 1.0;
    while (damping <= options.damping_max * (1.0 + 1e-12)) {
      const Vec step = (JtJ + damping * AdMat::Identity()).ldlt().solve(-Jtr);
      const Vec trial = lam + step;
      auto e = detail::try_residual(bvp, trial, options.integration);
      if (e && e->r.norm() < rn) {
        best_ratio = e->r.norm() / rn;
        lam = trial;
        cur = std::move(e);
        rn = cur->r.norm();
        damping = std::max(options.damping_min, damping / 10.0);
        accepted = true;
        break;
      }
      damping *= 10.0;
    }
    if (!accepted) {
      if (rn <= options.tol) break;
      out.costate0 = lam;
      out.residual = cur->r;
      out.iterations = it + 1;
      throw SingularJacobian("damping exhausted at residual " + io::fmt(rn));
    }
    // Below tol, stop polishing once progress stalls at the round-off floor.
    if (rn <= options.tol && best_ratio > 0.5) {
      ++it;
      break;
    }
  }
  out.costate0 = lam;
  out.residual = cur->r;
  out.iterations = it;
  out.converged = rn <= options.tol;
  out.cost = cur->end.cost;
  out.costate_end = cur->end.costate;
  out.hamiltonian = minimized_hamiltonian(*bvp.phase, lam);
  return out;
}

/// Costate whose minimizing control reproduces the constant body velocity
/// that joins the endpoints, on active channels; zero elsewhere.
template <class Group>
typename Group::Vec initial_guess(const PhaseBvp<Group>& bvp) {
  using Vec = typename Group::Vec;
  const auto& G = *bvp.group;
  Vec v;
  try {
    v = G.log(G.inverse(bvp.g_start) * bvp.g_target) / (bvp.tb - bvp.ta);
  } catch (const NearCutLocus&) {
    return Vec::Zero();
  }
  Vec lam = Vec::Zero();
  const auto& phase = *bvp.phase;
  for (int k = 0; k < phase.num_controls(); ++k) {
    const int c = phase.channels[k];
    lam(c) = -phase.weight(k) * (v(c) - phase.drift(c));
  }
  return lam;
}

template <class Group>
struct MultiStartResult {
  ShootingResult<Group> best;
  /// Every start in index order, converged or not.
  std::vector<ShootingResult<Group>> starts;
};

/// Start 0 is `guess` (or the heuristic guess); the others are uniform in
/// [-range, range] per component, drawn in index order from a seeded engine.
template <class Group>
std::vector<typename Group::Vec> start_costates(const PhaseBvp<Group>& bvp, int n_starts,
                                                std::uint64_t seed, double range,
                                                const std::optional<typename Group::Vec>& guess) {
  std::vector<typename Group::Vec> starts;
  starts.push_back(guess ? *guess : initial_guess(bvp));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-range, range);
  for (int i = 1; i < n_starts; ++i) {
    typename Group::Vec v;
    for (int k = 0; k < Group::kDim; ++k) v(k) = d(rng);
    starts.push_back(v);
  }
  return starts;
}

/// Deterministic preference among converged results: cost, then |lambda0|,
/// then start index.
template <class Group>
bool better(const ShootingResult<Group>& a, const ShootingResult<Group>& b) {
  if (a.converged != b.converged) return a.converged;
  if (a.cost != b.cost) return a.cost < b.cost;
  const double na = a.costate0.norm(), nb = b.costate0.norm();
  if (na != nb) return na < nb;
  return a.start_index < b.start_index;
}

template <class Group>
MultiStartResult<Group> multi_start_shoot(const PhaseBvp<Group>& bvp, int n_starts,
                                          std::uint64_t seed, const ShootingOptions& options = {},
                                          const std::optional<typename Group::Vec>& guess = {},
                                          const std::vector<int>& order = {}) {
  if (n_starts < 1) throw std::invalid_argument("multi_start_shoot: need at least one start");
  const auto starts = start_costates(bvp, n_starts, seed, options.start_range, guess);

  const auto run = [&](int i) {
    ShootingResult<Group> r;
    try {
      r = shoot(bvp, starts[i], options);
    } catch (const SingularJacobian& e) {
      r.costate0 = starts[i];
      r.failure = e.what();
    }
    r.start_index = i;
    return r;
  };

  std::vector<int> idx = order;
  if (idx.empty())
    for (int i = 0; i < n_starts; ++i) idx.push_back(i);

  MultiStartResult<Group> out;
  out.starts.resize(n_starts);
  if (options.threads > 1) {
    for (std::size_t b = 0; b < idx.size(); b += options.threads) {
      std::vector<std::future<ShootingResult<Group>>> batch;
      for (std::size_t k = b; k < std::min(idx.size(), b + options.threads); ++k)
        batch.push_back(std::async(std::launch::async, run, idx[k]));
      for (auto& f : batch) {
        auto r = f.get();
        out.starts[r.start_index] = std::move(r);
      }
    }
  } else {
    for (int i : idx) out.starts[i] = run(i);
  }

  const ShootingResult<Group>* best = nullptr;
  for (const auto& r : out.starts)
    if (r.converged && (!best || better(r, *best))) best = &r;
  if (!best) {
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& r : out.starts) lowest = std::min(lowest, r.residual_norm());
    throw NoConvergedStart("none of " + std::to_string(n_starts) +
                           " shooting starts converged (best residual " + io::fmt(lowest) + ")");
  }
  out.best = *best;
  return out;
}

}  // namespace liehmp
