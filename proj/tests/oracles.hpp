#pragma once
// Independent reference computations used only by the tests.

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace oracle {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
inline Mat3 expm(const Mat3& A) {
  const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Mat3 B = A / std::ldexp(1.0, squarings);
  Mat3 term = Mat3::Identity();
  Mat3 sum = Mat3::Identity();
  for (int k = 1; k <= 20; ++k) {
    term = term * B / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// hat written out entry by entry in the layout used throughout the library.
inline Mat3 hat(const Vec3& x) {
  Mat3 m;
  m << 0, x(0), x(2), -x(0), 0, x(1), -x(2), -x(1), 0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return {m(0, 1), m(1, 2), m(0, 2)}; }

/// Classic RK4 for a linear system y' = A y with constant A.
inline Vec3 rk4_linear(const Mat3& A, Vec3 y, double T, int steps) {
  const double h = T / steps;
  for (int i = 0; i < steps; ++i) {
    const Vec3 k1 = A * y;
    const Vec3 k2 = A * (y + 0.5 * h * k1);
    const Vec3 k3 = A * (y + 0.5 * h * k2);
    const Vec3 k4 = A * (y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

inline Vec3 uniform3(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return {d(rng), d(rng), d(rng)};
}

/// Rotation with the angle kept below pi - margin.
inline Mat3 random_rotation(std::mt19937_64& rng, double max_angle = 3.0) {
  Vec3 axis = uniform3(rng, -1, 1);
  while (axis.norm() < 1e-3) axis = uniform3(rng, -1, 1);
  std::uniform_real_distribution<double> a(0.0, max_angle);
  return expm(hat(a(rng) * axis.normalized()));
}

}  // namespace oracle
