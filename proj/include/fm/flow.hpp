#pragma once
// Vector fields and the canonical (Marcus) jump map.
//
// A field F assigns to each state x an m x r matrix, so F(x)z is a tangent
// vector for a noise value z in R^r.  A jump of size z moves the state along
// the time-1 flow of the frozen field y -> F(y)z:
//
//     Phi_F(z, x) = Y(1),   dY/ds = F(Y) z,   Y(0) = x.
//
// The flow is computed with a fixed-substep RK4 pass whose accuracy is
// verified by Richardson halving; if the halved solution disagrees beyond
// the requested tolerance the step is redone with an adaptive
// Dormand-Prince 5(4) integrator.  Fields may register a closed-form flow
// (rotations, translations), which is then used directly and makes the jump
// map exact to rounding.

#include <functional>
#include <vector>

namespace fm::flow {

struct VectorField {
  int m = 0; // state dimension
  int r = 0; // noise dimension
  // out = F(x) z
  std::function<void(const double* x, const double* z, double* out)> apply;
  // optional directional derivative: out = d/de F(x + e v) z at e = 0
  std::function<void(const double* x, const double* z, const double* v,
                     double* out)>
      jacobian_apply;
  // optional exact time-1 flow of F(.)z from x
  std::function<void(const double* z, const double* x, double* out)>
      closed_flow;
};

// F(x)z = z * (A x) for a scalar driver; A is m x m row-major.  The exact
// jump map is the matrix exponential e^{zA}, left to the integrator here so
// tests can compare against independently computed values.
VectorField linear_field(int m, std::vector<double> A_rowmajor);

// Constant field F(x) = M (m x r row-major): jumps are exact translations
// x + M z, registered as a closed-form flow.
VectorField constant_field(int m, int r, std::vector<double> M_rowmajor);

// Planar rotation generator, F(x)z = z * [[0,-1],[1,0]] x, with the exact
// rotation closed form registered.
VectorField rotation_field();

// Evaluate the Marcus map Phi_F(z, x).  tol bounds the max-norm endpoint
// error of the numerical flow (ignored when a closed form is registered).
void jump_flow(const VectorField& f, const double* z, const double* x,
               double* out, double tol);

// Phi_F(z, x) - x - F(x)z, the deviation of the canonical jump from its
// linearization; O(|z|^2) as z -> 0.
void marcus_jump_correction(const VectorField& f, const double* z,
                            const double* x, double* out, double tol);

// Flow states Y(t; x) of the frozen field y -> F(y)z at the given times in
// [0, 1], returned row-major (n_times x m).  Uses the closed form when
// available (Y(t;x) = Phi_F(tz, x) by autonomy).
std::vector<double> flow_states(const VectorField& f, const double* z,
                                const double* x,
                                const std::vector<double>& times, double tol);

// sup over an equispaced t-grid in [0,1] of
//   | (DF(Y(t;x))z) F(Y(t;x))z  -  (DF(Y(t;y))z) F(Y(t;y))z |
// i.e. the mismatch of flow accelerations started from x and from y.  This
// is the quantity controlling the jump map's dependence on its base point;
// it is bounded by C |x-y| |z|^2 for fields with bounded derivatives.
// Requires jacobian_apply.
double flow_defect(const VectorField& f, const double* z, const double* x,
                    const double* y, int grid_n = 33, double tol = 1e-10);

} // namespace fm::flow
