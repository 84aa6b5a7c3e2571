#pragma once
// Canonical (Marcus) SDE integration on foliated state spaces.
//
// The state space R^m carries a projection pi onto R^d whose fibers are the
// leaves; the unperturbed dynamics
//
//     dX = F0(X) dt + F(X) o dZ        (o = canonical/Marcus)
//
// is leaf-preserving: F0 and the columns of F are tangent to the leaves, so
// pi(X) is constant along unperturbed paths.  The perturbed system adds a
// transversal drift and a slow driver at strength eps:
//
//     dXe = F0 dt + F o dZ + eps K dt + eps K~(Xe) o dZ~.
//
// Integration runs on a grid (uniform mesh plus all jump times plus caller
// nodes): deterministic drift between nodes with one classical RK4 step per
// interval, canonical jump maps at jump times.  When a fast and a slow jump
// collide at the same instant the fast one is applied first.
//
// Three couplings of the slow driver are supported, differing in how a
// sampled slow path (with its own clock and horizon) is fed to the
// integrator:
//   - physical:     the integrator itself runs the slow clock; jumps arrive
//                   at their sampled times and act through eps K~ z~.
//   - vanishing:    the integrator runs the accelerated clock u = t/eps; a
//                   slow jump sampled at time t~ arrives at u = t~/eps and
//                   still acts through eps K~ z~, so its effect is O(eps)
//                   and the slow noise drops out of the averaged equation.
//   - time_changed: accelerated clock as above, but the driver is amplified
//                   by 1/eps, so jumps act through eps K~ (z~/eps) = K~ z~
//                   and keep O(1) effect, matching the averaged equation
//                   jump-for-jump.
// The slow compensator drift enters the integrator rhs as
// eps K~ (s b~) per integrator time unit, where s is eps under vanishing
// (slow time runs at rate eps on the accelerated clock, without the 1/eps
// amplification) and 1 otherwise.

#include "fm/flow.hpp"
#include "fm/levy.hpp"

#include <functional>
#include <vector>

namespace fm::marcus {

using PointField = std::function<void(const double* x, double* out)>;
using Projection = std::function<void(const double* x, double* out)>;

struct FoliatedSystem {
  int m = 0; // ambient dimension
  int d = 0; // leaf-coordinate dimension
  PointField F0;            // leaf-tangent drift (may be null = zero)
  flow::VectorField F;      // fast noise coefficient, leaf-tangent
  PointField K;             // transversal drift perturbation (may be null)
  flow::VectorField K_tilde; // slow noise coefficient (may have m == 0 = absent)
  Projection pi;            // leaf coordinates
};

enum class SlowCoupling { physical, vanishing, time_changed };

// A path on a node grid; states are row-major (n x m).  At a jump time the
// stored state is the post-jump value.
struct PathGrid {
  int m = 0;
  std::vector<double> t;
  std::vector<double> x;
  const double* state(std::size_t i) const { return x.data() + i * m; }
  std::size_t size() const { return t.size(); }
  // index of the last node with t[i] <= s (nodes are strictly increasing)
  std::size_t locate(double s) const;
};

// Integrate the unperturbed system on [t0, t0 + z.T] from x0.  Only jumps of
// z with t0 < time <= t0 + z.T are applied (times in the path are absolute).
// extra_nodes, if given, are added to the grid so later comparisons need no
// interpolation.
PathGrid integrate_unperturbed(const FoliatedSystem& sys,
                               const levy::JumpPath& z, const double* x0,
                               double t0, double horizon, double mesh_dt,
                               double tol,
                               const std::vector<double>* extra_nodes = nullptr);

// Integrate the perturbed system from x0 on [0, horizon] (integrator clock).
// ztilde carries its own clock; see SlowCoupling above.
PathGrid integrate_perturbed(const FoliatedSystem& sys, double eps,
                             const levy::JumpPath& z,
                             const levy::JumpPath& ztilde,
                             SlowCoupling coupling, const double* x0,
                             double horizon, double mesh_dt, double tol,
                             const std::vector<double>* extra_nodes = nullptr);

struct Estimate {
  double value = 0;
  double se = 0; // standard error of the estimate
};

// L^p deviation sup_{t <= T} |pi(Xe_t) - pi(X_t)| between the perturbed and
// unperturbed systems driven by the same fast path (and the same slow path
// for the perturbed one), in physical time.  Returns the L^p norm over
// replicas with a delta-method standard error.
Estimate perturbation_gap(const FoliatedSystem& sys,
                          const levy::LevyMeasure& nu,
                          const levy::LevyMeasure& nu_tilde, double delta,
                          const double* x0, double eps, double T, double p,
                          int replicas, double mesh_dt, double tol,
                          std::uint64_t seed, int workers = 1);

} // namespace fm::marcus
