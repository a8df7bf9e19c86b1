#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "liehmp/eg_hmp.hpp"
#include "oracles.hpp"

using namespace liehmp;
using Vec = So3::Vec;
using Element = So3::Element;

namespace {

const So3& G() {
  static const So3 g = make_so3();
  return g;
}

Element rot(const oracle::Vec3& x) { return Element(oracle::expm(oracle::hat(x))); }

// identity -> exp(a e1) over [0, T]; e1 is actuated in both phases, so the
// optimal value is a^2 / 2T along the whole family b = a ts / T.
HybridProblem<So3> axis_problem(double a, double T) {
  HybridProblem<So3> p;
  p.phase1 = quadratic_phase<3>("q1", {0, 1});
  p.phase2 = quadratic_phase<3>("q2", {0, 2});
  p.t0 = 0.0;
  p.tf = T;
  p.g0 = Element::identity();
  p.gf = rot({a, 0, 0});
  return p;
}

SolverControls controls() {
  SolverControls c;
  c.n_starts = 4;
  c.seed = 3;
  return c;
}

ValueGradient<So3> fake_gradient(const Vec& pg, double dts, double v = 1.0) {
  ValueGradient<So3> vg;
  vg.grad_body = pg;
  vg.dv_dts = dts;
  vg.v = v;
  return vg;
}

EGIterate<So3> iterate(int k, double v, double st = 1.0) {
  EGIterate<So3> it;
  it.k = k;
  it.v = v;
  it.stationarity = st;
  return it;
}

}  // namespace

TEST(EgStep, ZeroStepIsIdentity) {
  const auto p = axis_problem(1.0, 3.0);
  const Element g = rot({0.2, -0.1, 0.4});
  const auto c = eg_step(G(), p, g, 1.3, fake_gradient(Vec(0.3, 0.1, -0.2), 0.7), 0.0, {}, 1e-3);
  EXPECT_LT((c.g_s.matrix() - g.matrix()).norm(), 1e-15);
  EXPECT_EQ(c.t_s, 1.3);
}

TEST(EgStep, RightMultipliesByExponential) {
  const auto p = axis_problem(1.0, 3.0);
  const Element g = rot({0.2, -0.1, 0.4});
  const Vec pg(0.3, 0.1, -0.2);
  EGConfig cfg;
  cfg.ts_step_scale = 0.5;
  const auto c = eg_step(G(), p, g, 1.3, fake_gradient(pg, 0.8), 0.25, cfg, 1e-3);
  const oracle::Mat3 want = g.matrix() * oracle::expm(oracle::hat(-0.25 * pg));
  EXPECT_LT((c.g_s.matrix() - want).norm(), 1e-13);
  EXPECT_NEAR(c.t_s, 1.3 - 0.25 * 0.5 * 0.8, 1e-15);
}

TEST(EgStep, SwitchTimeStaysInsideHorizon) {
  const auto p = axis_problem(1.0, 3.0);
  const auto lo = eg_step(G(), p, Element::identity(), 0.5, fake_gradient(Vec::Zero(), 10.0), 1.0,
                          {}, 1e-3);
  EXPECT_NEAR(lo.t_s, 1e-3, 1e-15);
  const auto hi = eg_step(G(), p, Element::identity(), 0.5, fake_gradient(Vec::Zero(), -10.0), 1.0,
                          {}, 1e-3);
  EXPECT_NEAR(hi.t_s, 3.0 - 1e-3, 1e-15);
}

TEST(EgConfig, RejectsBadValues) {
  EGConfig c;
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.theta_shrink = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Optimize, StartAtOptimumStopsImmediately) {
  const double a = 1.2, T = 3.0, ts = 1.0;
  ValueOracle<So3> o(G(), axis_problem(a, T), controls());
  const auto r = optimize(o, rot({a * ts / T, 0, 0}), ts);
  ASSERT_EQ(r.history.iterates.size(), 1u);
  EXPECT_TRUE(r.history.stop_test_met);
  EXPECT_NEAR(r.last().v, a * a / (2 * T), 1e-10);
}

TEST(Optimize, ConvergesToClosedFormMinimum) {
  const double a = 1.2, T = 3.0;
  ValueOracle<So3> o(G(), axis_problem(a, T), controls());
  EGConfig cfg;
  cfg.beta = 1e-10;
  const auto r = optimize(o, rot({0.1, 0, 0}), 1.0, cfg);
  EXPECT_TRUE(r.history.stop_test_met);
  EXPECT_NEAR(r.last().v, a * a / (2 * T), 1e-6);
  const auto audit = lasalle_audit(r.history, cfg.beta);
  EXPECT_TRUE(audit.ok());
  EXPECT_TRUE(audit.monotone);
  EXPECT_TRUE(audit.stop_test_met);
  for (const auto& it : r.history.iterates) EXPECT_TRUE(it.monotone);
}

// off the axis the e3 direction is stiff and descent zigzags; only progress is asserted
TEST(Optimize, OffAxisStartDescends) {
  const double a = 1.2, T = 3.0;
  ValueOracle<So3> o(G(), axis_problem(a, T), controls());
  EGConfig cfg;
  cfg.max_iters = 60;
  const auto r = optimize(o, rot({0.1, 0.05, -0.05}), 1.0, cfg);
  EXPECT_TRUE(lasalle_audit(r.history, cfg.beta).ok());
  EXPECT_LT(r.last().v - a * a / (2 * T), 0.1 * (r.history.iterates.front().v - a * a / (2 * T)));
  EXPECT_LT(r.last().stationarity, 0.1 * r.history.iterates.front().stationarity);
}

TEST(Optimize, AscentDirectionFailsLineSearchWithHistory) {
  ValueOracle<So3> o(G(), axis_problem(1.2, 3.0), controls());
  GradientCalibration flipped;
  flipped.grad_sign = 1.0;
  flipped.time_sign = -1.0;
  flipped.grad_frozen = flipped.time_frozen = true;
  o.set_calibration(flipped);
  try {
    optimize(o, rot({0.1, 0.05, 0.0}), 1.0);
    FAIL() << "expected LineSearchFailed";
  } catch (const LineSearchFailed& e) {
    const auto* h = dynamic_cast<const HistoryCarrier<So3>*>(&e);
    ASSERT_NE(h, nullptr);
    EXPECT_EQ(h->history.iterates.size(), 1u);
  }
}

TEST(Optimize, IterationLimitIsReported) {
  ValueOracle<So3> o(G(), axis_problem(1.2, 3.0), controls());
  EGConfig cfg;
  cfg.beta = 1e-300;
  cfg.max_iters = 3;
  const auto r = optimize(o, rot({0.1, 0.05, -0.05}), 1.0, cfg);
  EXPECT_EQ(r.history.iterates.size(), 4u);
  EXPECT_FALSE(r.history.stop_test_met);
  EXPECT_EQ(r.history.stop_reason, "iteration limit");
  const auto audit = lasalle_audit(r.history, cfg.beta);
  EXPECT_TRUE(audit.ok());
  ASSERT_EQ(audit.notes.size(), 1u);
}

TEST(LaSalle, FlagsIncreaseAndEscape) {
  EGHistory<So3> h;
  h.iterates = {iterate(0, 1.0), iterate(1, 0.8), iterate(2, 1.5), iterate(3, 0.9, 1e-9)};
  const auto r = lasalle_audit(h, 1e-6);
  EXPECT_FALSE(r.ok());
  EXPECT_FALSE(r.monotone);
  EXPECT_FALSE(r.bounded);
  EXPECT_EQ(r.violations.size(), 2u);
  EXPECT_TRUE(r.stop_test_met);
  EXPECT_THROW(lasalle_audit(EGHistory<So3>{}, 1e-6), std::invalid_argument);
}

TEST(LaSalle, EqualValuesAreMonotone) {
  EGHistory<So3> h;
  h.iterates = {iterate(0, 1.0), iterate(1, 1.0), iterate(2, 0.5)};
  EXPECT_TRUE(lasalle_audit(h, 1e-6).ok());
}

TEST(History, CsvHeaderAndRows) {
  EGHistory<So3> h;
  h.iterates = {iterate(0, 2.0), iterate(1, 1.5)};
  h.iterates[1].pg = Vec(0.1, 0.2, 0.3);
  h.iterates[1].t_s = 4.5;
  std::istringstream in(history_csv(h));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "k,v,pg1,pg2,pg3,dv_dts,theta,ts");
  int rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  EXPECT_EQ(rows, 2);
  const auto j = to_json(h);
  EXPECT_EQ(j["iterates"].size(), 2u);
  EXPECT_EQ(j["iterates"][1]["ts"], 4.5);
}
