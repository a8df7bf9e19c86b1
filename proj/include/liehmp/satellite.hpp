#pragma once

#include <Eigen/Dense>

#include "liehmp/hmp.hpp"
#include "liehmp/lie_group.hpp"

namespace liehmp::satellite {

/// Reorientation of a satellite whose actuators change between phases:
/// torque channels {1, 2} first, then {1, 3}, unit weights, no drift.
inline HybridProblem<So3> problem() {
  HybridProblem<So3> p;
  p.phase1 = quadratic_phase<3>("q1", {0, 1});
  p.phase2 = quadratic_phase<3>("q2", {0, 2});
  p.t0 = 0.0;
  p.tf = 10.0;
  Eigen::Matrix3d g0;
  g0 << 0, 0, 1,
        0, -1, 0,
        1, 0, 0;
  p.g0 = So3::Element(g0);
  p.gf = So3::Element::identity();
  return p;
}

inline So3::Element initial_switch_state() {
  Eigen::Matrix3d gs;
  gs << 0, 1, 0,
        -1, 0, 0,
        0, 0, 1;
  return So3::Element(gs);
}

inline constexpr double kInitialSwitchTime = 5.8;

/// Expected converged switching matrix, four decimals. Rows 1 and 2 are
/// visibly non-orthogonal, so this is kept as a plain matrix.
inline Eigen::Matrix3d reference_switch_matrix() {
  Eigen::Matrix3d gs;
  gs << 0.3039, 0.9574, -0.1194,
        -0.3688, 0.1508, -0.9165,
        -0.8604, 0.3156, 0.3988;
  return gs;
}

inline constexpr double kReferenceSwitchTime = 5.9733;

}  // namespace liehmp::satellite
