#pragma once
// Averaging estimators: ergodic averages on leaves, the averaged slow
// equation, and the strong averaging error with its block decomposition.
//
// For an observable h the leaf average Q^h(v) is the integral of h over the
// leaf through v against the invariant measure of the unperturbed dynamics.
// The averaged equation on leaf coordinates is
//
//     dw = Q^{piK}(w) dt + K~_V(w) o dZ~ ,  w(0) = pi(x0),
//
// and the strong averaging statement compares pi(Xe) on the accelerated
// clock t/eps with w(t) in L^p, uniformly on [0, T]:
//
//     error(eps) <= C T (eps^lambda + eta(c T |ln eps|))
//
// where eta(t) is the L^p rate of the ergodic average over windows of
// length t.  The block decomposition behind that bound partitions the
// accelerated horizon into N blocks of length Delta = c T |ln eps| and
// splits the accumulated defect delta^h into
//   A1: deviation of the perturbed path from leaf-frozen restarts,
//   A2: ergodic deviation of the restarts over one block,
//   A3: Riemann-sum defect of the block endpoints;
// delta^h = A1 + A2 + A3 exactly when all integrals share one grid, which
// the implementation arranges, so |delta^h| <= |A1| + |A2| + |A3| holds
// samplewise.

#include "fm/marcus.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace fm::averaging {

using ScalarField = std::function<double(const double* x)>;

// Everything needed to run averaging experiments on one system: the fields,
// the driving measures, the slow-noise coupling, the averaged drift Q (leaf
// coordinates), the vertical slow coefficient for the averaged equation, and
// the observable h = pi-component of K.
struct Problem {
  const marcus::FoliatedSystem* sys = nullptr;
  levy::LevyMeasure nu;        // fast driver
  levy::LevyMeasure nu_tilde;  // slow driver (may be empty: no slow noise)
  bool has_slow = false;
  marcus::SlowCoupling coupling = marcus::SlowCoupling::vanishing;
  double delta = 0; // truncation level for both drivers
  std::function<void(const double* v, double* out)> Q; // averaged drift on R^d
  flow::VectorField K_tilde_V; // vertical slow coefficient (m == 0: none)
  ScalarField h;               // observable whose leaf average is Q (d = 1)
};

struct Partition {
  double Delta = 0; // block length on the accelerated clock
  long N = 0;       // number of blocks
};

// Delta = c T |ln eps|, N = floor(1 / (c eps |ln eps|)) + 1, so that
// N Delta >= T / eps.  Requires eps in (0,1), c > 0, T > 0.
Partition make_partition(double c, double T, double eps);

// Monte Carlo estimate of Q^h(pi(x0)) by long-run time averages: each
// replica integrates the unperturbed system for t_burn + t_avg and averages
// h over the last t_avg (trapezoid on the path grid).  d = 1 observables.
marcus::Estimate averaged_drift_mc(const Problem& prob, const ScalarField& h,
                                   const double* x0, double t_burn,
                                   double t_avg, int replicas, double mesh_dt,
                                   double tol, std::uint64_t seed,
                                   int workers = 1);

struct EtaRow {
  double t = 0;
  double lp_dev = 0;  // (E |avg_t - q|^p)^{1/p}
  double lp_se = 0;   // bootstrap standard error of lp_dev
  double mean_dev = 0; // E[avg_t - q], signed (the bias of the window average)
  double mean_se = 0;  // standard error of mean_dev
};

// Ergodic deviation of the window average (1/t) int_0^t h(X_s) ds from the
// limit q, per window length in t_grid.  One unperturbed path per replica
// feeds every window (nested windows share the prefix).  lp_dev measures the
// L^p fluctuation; mean_dev measures the signed bias, which is the quantity
// with an O(1/t) closed-form bound.
std::vector<EtaRow> estimate_eta(const Problem& prob, const ScalarField& h,
                                 double q, const double* x0,
                                 const std::vector<double>& t_grid, double p,
                                 int replicas, double mesh_dt, double tol,
                                 std::uint64_t seed, int workers = 1);

// Integrate the averaged equation dw = Q(w) dt + K~_V(w) o dZ~ from v0 on
// [0, T] (slow clock).  K_tilde_V.m == 0 means no slow-noise term.
marcus::PathGrid integrate_averaged(
    const std::function<void(const double*, double*)>& Q,
    const flow::VectorField& K_tilde_V, const levy::JumpPath& ztilde,
    const double* v0, int d, double T, double mesh_dt, double tol,
    const std::vector<double>* extra_nodes = nullptr);

struct ErrorRow {
  double epsilon = 0, p = 0, lambda = 0, c = 0, T = 0;
  double error_lp = 0;     // (E sup_{t<=T} |pi(Xe_{t/eps}) - w(t)|^p)^{1/p}
  double stderr_ = 0;      // delta-method standard error
  double eta_at_scale = 0; // eta_p(c T |ln eps|) estimated on the same system
  double a1 = 0, a2 = 0, a3 = 0; // mean |A_i| over replicas (accelerated clock)
  long replicas = 0;
  std::uint64_t seed = 0;
  // samplewise triangle defect: max over replicas of
  // |delta^h| - (|A1|+|A2|+|A3|), <= 0 up to rounding
  double triangle_slack_max = 0;
};

// One sweep point of the strong averaging experiment.  Every replica
// integrates the perturbed system over N Delta on the accelerated clock and
// the averaged equation on [0, T], compares them on a shared 2048-point grid
// (plus slow jump times), and accumulates the block diagnostics A1, A2, A3.
ErrorRow averaging_error(const Problem& prob, const double* x0, double eps,
                         double T, double p, double lambda, double c,
                         int replicas, double mesh_dt, double tol,
                         std::uint64_t seed, int workers = 1,
                         int eta_replicas = 0);

// Least-squares slope of log y against log x (y > 0), with R^2.
struct SlopeFit {
  double slope = 0, intercept = 0, r2 = 0;
};
SlopeFit fit_loglog_slope(const std::vector<double>& x,
                          const std::vector<double>& y);

// Pool-adjacent-violators isotonic regression (non-increasing fit).
std::vector<double> isotonic_non_increasing(const std::vector<double>& y,
                                            const std::vector<double>& w);

} // namespace fm::averaging
