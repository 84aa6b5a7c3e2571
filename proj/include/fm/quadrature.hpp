#pragma once
// Adaptive Gauss-Kronrod 15(7) quadrature on finite intervals.  The 7-point
// Gauss rule embedded in the 15-point Kronrod rule gives a cheap error
// estimate per panel; panels are bisected (worst first) until the summed
// error estimate meets the tolerance.

#include <functional>

namespace fm::quad {

struct Result {
  double value = 0;
  double error = 0; // accumulated error estimate
};

Result integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-10, double rel_tol = 1e-8,
                 int max_panels = 2000);

} // namespace fm::quad
