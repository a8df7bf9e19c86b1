#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "liehmp/errors.hpp"
#include "liehmp/hmp.hpp"
#include "liehmp/io.hpp"

namespace liehmp {

struct EGConfig {
  double beta = 1e-6;
  double theta_init = 0.5;
  double theta_shrink = 0.5;
  double theta_grow = 2.0;
  int max_iters = 200;
  /// Relative step taken on the switching time.
  double ts_step_scale = 1.0;
  double armijo = 1e-4;
  double theta_min = 1e-12;

  void validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("eg.beta must be positive");
    if (!(theta_init > 0.0)) throw std::invalid_argument("eg.theta_init must be positive");
    if (!(theta_shrink > 0.0 && theta_shrink < 1.0))
      throw std::invalid_argument("eg.theta_shrink must lie in (0, 1)");
    if (!(theta_grow >= 1.0)) throw std::invalid_argument("eg.theta_grow must be >= 1");
    if (max_iters < 1) throw std::invalid_argument("eg.max_iters must be >= 1");
    if (!(ts_step_scale > 0.0)) throw std::invalid_argument("eg.ts_step_scale must be positive");
  }
};

template <class Group>
struct EGIterate {
  int k = 0;
  typename Group::Element g_s;
  double t_s = 0.0;
  double v = 0.0;
  typename Group::Vec pg = Group::Vec::Zero();
  double dv_dts = 0.0;
  /// Step that produced this iterate (0 for the start).
  double theta = 0.0;
  /// I(pg, pg) + dv_dts^2.
  double stationarity = 0.0;
  bool monotone = true;
};

template <class Group>
struct EGHistory {
  std::vector<EGIterate<Group>> iterates;
  bool stop_test_met = false;
  std::string stop_reason;
};

/// Attached to errors thrown by `optimize`.
template <class Group>
struct HistoryCarrier {
  EGHistory<Group> history;
};

template <class Group, class Base>
class WithHistory : public Base, public HistoryCarrier<Group> {
 public:
  WithHistory(const Base& e, EGHistory<Group> h) : Base(e), HistoryCarrier<Group>{std::move(h)} {}
};

template <class Group>
struct EGResult {
  EGHistory<Group> history;
  ValueGradient<Group> final;
  const EGIterate<Group>& last() const { return history.iterates.back(); }
};

template <class Group>
double stationarity(const Group& group, const ValueGradient<Group>& vg) {
  return group.inner(vg.grad_body, vg.grad_body) + vg.dv_dts * vg.dv_dts;
}

template <class Group>
struct StepCandidate {
  typename Group::Element g_s;
  double t_s;
};

/// Point reached by step theta along the negative gradient, with t_s kept
/// one integration step inside the horizon.
template <class Group>
StepCandidate<Group> eg_step(const Group& group, const HybridProblem<Group>& problem,
                             const typename Group::Element& g_s, double t_s,
                             const ValueGradient<Group>& vg, double theta, const EGConfig& config,
                             double h) {
  const auto g = g_s * group.exp(-theta * vg.grad_body);
  const double lo = problem.t0 + h, hi = problem.tf - h;
  const double t = std::clamp(t_s - theta * config.ts_step_scale * vg.dv_dts, lo, hi);
  return {g, t};
}

template <class Group>
struct LineSearchResult {
  double theta;
  StepCandidate<Group> point;
  double v;
};

/**
 * @brief Backtracking Armijo search starting from
 * min(grow * theta_prev, 32 * theta_init).
 *
 * Candidates where a phase cannot be solved count as rejected. Throws
 * LineSearchFailed once theta drops below theta_min.
 */
template <class Group>
LineSearchResult<Group> line_search(ValueOracle<Group>& oracle,
                                    const typename Group::Element& g_s, double t_s,
                                    const ValueGradient<Group>& vg, double theta_prev,
                                    const EGConfig& config) {
  const auto& group = oracle.group();
  const double h = oracle.controls().shooting.integration.h;
  const double slope = group.inner(vg.grad_body, vg.grad_body) +
                       config.ts_step_scale * vg.dv_dts * vg.dv_dts;
  double theta = std::min(config.theta_grow * theta_prev, config.theta_init * 32.0);
  while (theta >= config.theta_min) {
    const auto cand = eg_step(group, oracle.problem(), g_s, t_s, vg, theta, config, h);
    try {
      const double v = oracle.value(cand.g_s, cand.t_s);
      if (v <= vg.v - config.armijo * theta * slope) return {theta, cand, v};
    } catch (const NoConvergedStart&) {
    } catch (const NearCutLocus&) {
    } catch (const StepTooLarge&) {
    }
    theta *= config.theta_shrink;
  }
  throw LineSearchFailed("no sufficient decrease down to step " + io::fmt(config.theta_min));
}

/// Gradient descent on the switching state and time until
/// I(pg, pg) + dv_dts^2 < beta or max_iters.
template <class Group>
EGResult<Group> optimize(ValueOracle<Group>& oracle, const typename Group::Element& g_s0,
                         double t_s0, const EGConfig& config = {}) {
  config.validate();
  const auto& group = oracle.group();
  EGResult<Group> out;
  auto& hist = out.history;
  const auto record = [&](int k, const typename Group::Element& g, double t,
                          const ValueGradient<Group>& vg, double theta) {
    const bool mono = hist.iterates.empty() || vg.v <= hist.iterates.back().v;
    hist.iterates.push_back(
        {k, g, t, vg.v, vg.grad_body, vg.dv_dts, theta, stationarity(group, vg), mono});
  };

  auto fail = [&]<class E>(const E& e) -> void { throw WithHistory<Group, E>(e, hist); };

  auto g = g_s0;
  double t = t_s0;
  ValueGradient<Group> vg;
  try {
    vg = oracle.evaluate(g, t);
  } catch (const NoConvergedStart& e) {
    fail(e);
  } catch (const GradientCalibrationFailed& e) {
    fail(e);
  }
  record(0, g, t, vg, 0.0);
  double theta_prev = config.theta_init / config.theta_grow;
  for (int k = 1;; ++k) {
    if (hist.iterates.back().stationarity < config.beta) {
      hist.stop_test_met = true;
      hist.stop_reason = "stationarity below beta";
      break;
    }
    if (k > config.max_iters) {
      hist.stop_reason = "iteration limit";
      break;
    }
    LineSearchResult<Group> ls;
    try {
      ls = line_search(oracle, g, t, vg, theta_prev, config);
      vg = oracle.evaluate(ls.point.g_s, ls.point.t_s);
    } catch (const LineSearchFailed& e) {
      fail(e);
    } catch (const NoConvergedStart& e) {
      fail(e);
    }
    g = ls.point.g_s;
    t = ls.point.t_s;
    theta_prev = ls.theta;
    record(k, g, t, vg, ls.theta);
  }
  out.final = vg;
  return out;
}

struct LaSalleReport {
  bool monotone = true;
  /// Every iterate stays in the initial sublevel set {v <= v(0)}.
  bool bounded = true;
  bool stop_test_met = false;
  double final_stationarity = 0.0;
  std::vector<std::string> violations;
  std::vector<std::string> notes;

  bool ok() const { return violations.empty(); }
};

/// Audits a finished run: non-increasing v, iterates inside the initial
/// sublevel set, and whether the last iterate passes the stop test.
template <class Group>
LaSalleReport lasalle_audit(const EGHistory<Group>& hist, double beta, double v_tol = 1e-12) {
  LaSalleReport r;
  const auto& it = hist.iterates;
  if (it.empty()) throw std::invalid_argument("lasalle_audit: empty history");
  for (std::size_t k = 1; k < it.size(); ++k) {
    if (!(it[k].v <= it[k - 1].v)) {
      r.monotone = false;
      r.violations.push_back("v increased at iteration " + std::to_string(it[k].k));
    }
    if (!(it[k].v <= it.front().v + v_tol)) {
      r.bounded = false;
      r.violations.push_back("iteration " + std::to_string(it[k].k) +
                             " left the initial sublevel set");
    }
  }
  r.final_stationarity = it.back().stationarity;
  r.stop_test_met = r.final_stationarity < beta;
  if (!r.stop_test_met) r.notes.push_back("stop test not reached");
  return r;
}

template <class Group>
std::string history_csv(const EGHistory<Group>& hist) {
  std::vector<std::string> header{"k", "v"};
  for (int i = 1; i <= Group::kDim; ++i) header.push_back("pg" + std::to_string(i));
  for (const char* c : {"dv_dts", "theta", "ts"}) header.emplace_back(c);
  io::CsvWriter csv(header);
  for (const auto& x : hist.iterates) {
    std::vector<double> row{static_cast<double>(x.k), x.v};
    for (int i = 0; i < Group::kDim; ++i) row.push_back(x.pg(i));
    row.push_back(x.dv_dts);
    row.push_back(x.theta);
    row.push_back(x.t_s);
    csv.row(row);
  }
  return csv.str();
}

template <class Group>
io::json to_json(const EGHistory<Group>& hist) {
  io::json j;
  j["stop_test_met"] = hist.stop_test_met;
  j["stop_reason"] = hist.stop_reason;
  io::json its = io::json::array();
  for (const auto& x : hist.iterates) {
    its.push_back({{"k", x.k},
                   {"v", x.v},
                   {"pg", io::to_json_vector(x.pg)},
                   {"dv_dts", x.dv_dts},
                   {"theta", x.theta},
                   {"ts", x.t_s},
                   {"g_s", io::to_json_rowmajor(x.g_s.matrix())},
                   {"stationarity", x.stationarity}});
  }
  j["iterates"] = std::move(its);
  return j;
}

inline io::json to_json(const LaSalleReport& r) {
  return {{"monotone", r.monotone},
          {"bounded", r.bounded},
          {"stop_test_met", r.stop_test_met},
          {"final_stationarity", r.final_stationarity},
          {"violations", r.violations},
          {"notes", r.notes}};
}

}  // namespace liehmp
