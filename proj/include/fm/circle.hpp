#pragma once
// The circle benchmark: rotation dynamics on concentric circles in R^2.
//
// The fast field is the rotation generator F(x)z = z L x, L = [[0,-1],[1,0]],
// whose leaves are circles, pi = radius.  A scalar fast driver Z rotates the
// state: X_t = r0 (cos(th0 + Z_t + b t), sin(...)), with b the compensator
// drift, so everything has closed forms: the invariant measure on each leaf
// is uniform, the averaged drift of the linear perturbation K(x) = A x is
// Q(r) = (a + d) r / 2, the averaged solution is w(t) = r0 e^{(a+d)t/2},
// and the ergodic deviation of the window average of the radial component
// of K has explicit first and second moments in terms of the Levy symbol
// Psi evaluated at the angular frequencies 1, 2 and 4.
//
// These closed forms are the oracles the generic integrators and estimators
// are verified against.

#include "fm/averaging.hpp"

#include <array>
#include <complex>
#include <memory>

namespace fm::circle {

enum class Perturbation { constant, linear };
// Slow-noise coefficient shapes:
//   none            K~ = 0
//   planar          K~ = amplitude * Id2 (translations; vertical limit 0)
//   radial_additive K~(x) z~ = (x/|x|) (rho . z~)      -> w jumps additively
//   radial_linear   K~(x) z~ = x (rho . z~)            -> w jumps by e^{rho.z~}
enum class SlowKind { none, planar, radial_additive, radial_linear };

struct CircleConfig {
  std::array<double, 4> A{0, 0, 0, 0}; // row-major [[a, b], [c, d]]
  Perturbation pert = Perturbation::linear;
  std::array<double, 2> kvec{0, 0}; // constant-K case
  std::array<double, 2> x0{1, 0};
  levy::LevyMeasure nu;       // scalar fast driver
  levy::LevyMeasure nu_tilde; // slow driver (dim 2 for planar, else per rho)
  SlowKind slow_kind = SlowKind::none;
  double slow_amplitude = 1;
  std::array<double, 2> rho{0, 0}; // radial kinds: row applied to z~
  double delta = 0;                // truncation level
};

// A circle system bundles the foliated fields (with the exact rotation flow
// registered) and the averaging problem with analytic Q and h = radial
// component of the perturbing drift.
struct CircleSystem {
  CircleConfig cfg;
  marcus::FoliatedSystem sys;
  averaging::Problem prob;
  // keep-alive for the std::function captures inside sys/prob
  std::shared_ptr<void> guts;
};

CircleSystem make_circle(const CircleConfig& cfg);

// Exact unperturbed path: the angle is th0 + Z_t (plus compensator drift),
// accumulated without wrapping; the radius is the stored r0 bit-for-bit.
struct ExactCirclePath {
  double r0 = 0;
  double theta0 = 0;
  std::vector<double> t;
  std::vector<double> theta;
  void state(std::size_t i, double* out) const; // (r0 cos, r0 sin)
};

ExactCirclePath exact_fast_path(const CircleConfig& cfg,
                                const levy::JumpPath& z, double mesh_dt);

// Radial component of the perturbing drift at angle theta, radius r, with
// the angle measured so the point is (r sin theta, r cos theta), i.e.
// theta = atan2(x, y) (this is the convention the closed-form deviation
// moments below are stated in; it runs opposite to the rotation direction,
// which the implementations account for by conjugating Psi):
//   linear:   r (a sin^2 + d cos^2 + (b+c) sin cos)(theta)
//   constant: k1 sin(theta) + k2 cos(theta)
// Either way radial_K(atan2(x, y), |x|) = <K(x), x>/|x| exactly.
double radial_K(const CircleConfig& cfg, double theta, double r);

// radial_K's angle of a point: atan2(x, y).
double circle_angle(const double* x);

// Leaf average of radial_K: (a+d) r / 2 for the linear perturbation, 0 for
// the constant one.
double analytic_Q(const CircleConfig& cfg, double r);

// Averaged solution w(t) from r0: r0 e^{(a+d)t/2} (linear) or r0 (constant).
// Only valid when the slow-noise term of the averaged equation is zero.
double averaged_solution(const CircleConfig& cfg, double t, double r0);

// Exact ergodic-deviation values for the window average of radial_K over
// [0, t], starting on radius r0 at angle theta0 (radial_K's convention,
// theta0 = circle_angle(x0)).
//   p = 2: the exact L^2 deviation, from the two-time covariance evaluated
//          by adaptive quadrature of the Psi-exponential integrals.
//   p = 1: the closed-form bound |d-a| r / (2 |Re Psi(2)| t) on the *bias*
//          |E avg - Q| (constant perturbation: |k| analogue with Psi(1)).
std::vector<double> analytic_eta_bounds(const CircleConfig& cfg, double p,
                                        const std::vector<double>& t_grid,
                                        double r0, double theta0);

// Exact signed bias E[avg_t] - Q for the window average, used to validate
// the mean-deviation estimator.  theta0 as in analytic_eta_bounds.
double analytic_eta_bias(const CircleConfig& cfg, double t, double r0,
                         double theta0);

} // namespace fm::circle
