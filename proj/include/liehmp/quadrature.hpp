#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace liehmp {

/// Composite Simpson rule on a possibly non-uniform grid. An odd number of
/// intervals is closed with a three-point correction on the last interval.
inline double simpson(const std::vector<double>& t, const std::vector<double>& f) {
  if (t.size() != f.size()) throw std::invalid_argument("simpson: size mismatch");
  const std::size_t n = t.size();
  if (n < 2) return 0.0;
  if (n == 2) return 0.5 * (t[1] - t[0]) * (f[0] + f[1]);

  double total = 0.0;
  const std::size_t intervals = n - 1;
  const std::size_t paired = intervals - intervals % 2;
  for (std::size_t i = 0; i < paired; i += 2) {
    const double h0 = t[i + 1] - t[i];
    const double h1 = t[i + 2] - t[i + 1];
    const double hs = h0 + h1;
    total += hs / 6.0 *
             ((2.0 - h1 / h0) * f[i] + hs * hs / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
  }
  if (intervals % 2 == 1) {
    const std::size_t k = n - 1;
    const double h0 = t[k - 1] - t[k - 2];
    const double h1 = t[k] - t[k - 1];
    total += f[k] * (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1)) +
             f[k - 1] * (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0) -
             f[k - 2] * h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
  }
  return total;
}

/// Uniform step count for a window: at least 2, even, step no larger than h_max.
struct StepGrid {
  int steps;
  double h;
};

inline StepGrid make_grid(double length, double h_max) {
  if (!(length > 0.0) || !(h_max > 0.0)) throw std::invalid_argument("make_grid: bad window");
  int n = static_cast<int>(std::ceil(length / h_max - 1e-9));
  if (n < 2) n = 2;
  if (n % 2) ++n;
  return {n, length / n};
}

}  // namespace liehmp
