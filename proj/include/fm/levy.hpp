#pragma once
// Pure-jump Levy measures and path sampling.
//
// A measure is either a finite collection of atoms (vector-valued jumps), a
// symmetric truncated-stable measure on the real line, or a user-supplied
// finite-activity density.  The truncated-stable family has density
// scale * |z|^(-1-alpha) restricted to delta_inner < |z| <= 1, two-sided and
// symmetric; all mass sits inside the unit ball, so its large-jump part is
// empty and the small-jump moments control everything.
//
// Paths are sampled at truncation level delta >= 0: jumps with |z| > delta
// arrive at rate nu({|z| > delta}), and the removed compensated range
// delta < |z| <= 1 leaves the deterministic drift
//     b_delta = -int_{delta < |z| <= 1} z nu(dz)
// per unit time.  For symmetric measures b_delta is exactly zero and is
// computed as such (no quadrature noise).

#include "fm/rng.hpp"

#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fm::levy {

struct Atom {
  double mass = 0;
  std::vector<double> z; // jump vector, dimension = measure dimension
};

enum class Region { inner, outer, all }; // |z| <= 1, |z| > 1, everything

struct LevyMeasure {
  enum class Kind { discrete, truncated_stable, density };
  Kind kind = Kind::discrete;
  int dim = 1;

  // discrete
  std::vector<Atom> atoms;

  // truncated_stable (dim 1): density scale*|z|^(-1-alpha) on
  // delta_inner < |z| <= 1, symmetric
  double alpha = 0;
  double scale = 0;
  double delta_inner = 0;

  // density: finite total mass with a caller-supplied normalized sampler
  double density_mass = 0;
  std::function<std::vector<double>(rng::RngStream&)> density_sampler;
  std::function<double(double)> density_abs_moment; // p -> int |z|^p nu(dz)

  static LevyMeasure discrete(std::vector<Atom> atoms);
  static LevyMeasure truncated_stable(double alpha, double scale,
                                      double delta_inner);
  static LevyMeasure density(int dim, double mass,
                             std::function<std::vector<double>(rng::RngStream&)> sampler,
                             std::function<double(double)> abs_moment);
};

class DivergentMomentError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

// int_{region} |z|^p nu(dz).  Throws DivergentMomentError when the integral
// diverges (truncated-stable with delta_inner = 0 and p <= alpha).
double moment(const LevyMeasure& nu, double p, Region region = Region::all);

// Total mass above a threshold: nu({|z| > delta}).
double mass_above(const LevyMeasure& nu, double delta);

// Second moment of the jumps a sampling truncation at delta drops:
// int_{|z| <= delta} |z|^2 nu(dz).  This bounds the quadratic bias of
// replacing those jumps by their compensator drift.  Density measures
// sample untruncated, so their bias is zero.
double truncation_bias(const LevyMeasure& nu, double delta);

// Compensator drift b_delta (vector of length dim); exactly zero for
// symmetric measures.
std::vector<double> compensator_drift(const LevyMeasure& nu, double delta);

// Levy symbol Psi(p) = int (e^{ipz} - 1 - ipz 1{|z|<=1}) nu(dz), scalar
// measures only; E[e^{ip Z_t}] = e^{t Psi(p)} and Re Psi <= 0.
std::complex<double> characteristic_exponent(const LevyMeasure& nu, double p);

struct JumpPath {
  double T = 0;             // horizon
  double delta = 0;         // truncation level used when sampling
  int dim = 1;
  std::vector<double> times;              // strictly increasing in (0, T]
  std::vector<std::vector<double>> jumps; // one vector per time
  std::vector<double> drift;              // b_delta, applied per unit time
};

// Sample the jumps of Z on [0, T] at truncation level delta.  Requires
// finite activity above delta; for a truncated-stable measure with
// delta_inner = 0 this means delta > 0.
JumpPath sample_jump_path(const LevyMeasure& nu, double T, double delta,
                          rng::RngStream& g);

} // namespace fm::levy
