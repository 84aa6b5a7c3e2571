#include "fm/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace fm::flow {

namespace {

double norm2(const double* v, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

double max_abs_diff(const double* a, const double* b, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

using Rhs = std::function<void(const double* y, double* dy)>;

// one classical RK4 step of size h, in place; k1..k4,tmp are scratch of size m
void rk4_step(const Rhs& rhs, int m, double h, double* y, double* k1,
              double* k2, double* k3, double* k4, double* tmp) {
  rhs(y, k1);
  for (int i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  rhs(tmp, k2);
  for (int i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  rhs(tmp, k3);
  for (int i = 0; i < m; ++i) tmp[i] = y[i] + h * k3[i];
  rhs(tmp, k4);
  for (int i = 0; i < m; ++i)
    y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

struct Scratch {
  std::vector<double> buf;
  double *k1, *k2, *k3, *k4, *tmp;
  explicit Scratch(int m) : buf(static_cast<std::size_t>(5 * m)) {
    k1 = buf.data();
    k2 = k1 + m;
    k3 = k2 + m;
    k4 = k3 + m;
    tmp = k4 + m;
  }
};

void rk4_span(const Rhs& rhs, int m, double t0, double t1, int steps,
              double* y, Scratch& s) {
  double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i)
    rk4_step(rhs, m, h, y, s.k1, s.k2, s.k3, s.k4, s.tmp);
}

// Dormand-Prince 5(4) adaptive integration over [t0, t1]; the embedded
// 4th-order solution drives the step control with mixed tolerance tol.
void dopri5_span(const Rhs& rhs, int m, double t0, double t1, double tol,
                 double* y) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695,
                          e4 = 393.0 / 640, e5 = -92097.0 / 339200,
                          e6 = 187.0 / 2100, e7 = 1.0 / 40;
  const double span = t1 - t0;
  if (span <= 0) return;
  std::vector<double> buf(static_cast<std::size_t>(9 * m));
  double* k1 = buf.data();
  double* k2 = k1 + m;
  double* k3 = k2 + m;
  double* k4 = k3 + m;
  double* k5 = k4 + m;
  double* k6 = k5 + m;
  double* k7 = k6 + m;
  double* tmp = k7 + m;
  double* y5 = tmp + m;
  double t = t0;
  double h = span / 16.0;
  const double hmin = span * 1e-14;
  int rejected_in_a_row = 0;
  while (t < t1) {
    if (h > t1 - t) h = t1 - t;
    if (h < hmin)
      throw std::runtime_error("flow: adaptive step size underflow");
    rhs(y, k1);
    for (int i = 0; i < m; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    rhs(tmp, k2);
    for (int i = 0; i < m; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(tmp, k3);
    for (int i = 0; i < m; ++i)
      tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(tmp, k4);
    for (int i = 0; i < m; ++i)
      tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(tmp, k5);
    for (int i = 0; i < m; ++i)
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] +
                           a64 * k4[i] + a65 * k5[i]);
    rhs(tmp, k6);
    for (int i = 0; i < m; ++i)
      y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                          b6 * k6[i]);
    rhs(y5, k7);
    double err = 0;
    for (int i = 0; i < m; ++i) {
      double y4 = y[i] + h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] +
                              e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      double sc = tol * (1.0 + std::max(std::abs(y[i]), std::abs(y5[i])));
      err = std::max(err, std::abs(y5[i] - y4) / sc);
    }
    if (err <= 1.0) {
      t += h;
      std::memcpy(y, y5, static_cast<std::size_t>(m) * sizeof(double));
      rejected_in_a_row = 0;
    } else if (++rejected_in_a_row > 60) {
      throw std::runtime_error("flow: adaptive integrator failed to converge");
    }
    double grow = 0.9 * std::pow(err > 1e-300 ? err : 1e-300, -0.2);
    grow = std::min(5.0, std::max(0.2, grow));
    h *= grow;
  }
}

int base_substeps(const double* z, int r) {
  double zn = norm2(z, r);
  double n = std::ceil(4.0 * zn);
  return std::max(8, n > 1e6 ? 1000000 : static_cast<int>(n));
}

} // namespace

VectorField linear_field(int m, std::vector<double> A) {
  if (static_cast<int>(A.size()) != m * m)
    throw std::invalid_argument("flow: linear field needs an m x m matrix");
  VectorField f;
  f.m = m;
  f.r = 1;
  auto mat = std::make_shared<std::vector<double>>(std::move(A));
  f.apply = [m, mat](const double* x, const double* z, double* out) {
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < m; ++j) s += (*mat)[static_cast<std::size_t>(i * m + j)] * x[j];
      out[i] = z[0] * s;
    }
  };
  f.jacobian_apply = [m, mat](const double*, const double* z, const double* v,
                              double* out) {
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < m; ++j) s += (*mat)[static_cast<std::size_t>(i * m + j)] * v[j];
      out[i] = z[0] * s;
    }
  };
  return f;
}

VectorField constant_field(int m, int r, std::vector<double> M) {
  if (static_cast<int>(M.size()) != m * r)
    throw std::invalid_argument("flow: constant field needs an m x r matrix");
  VectorField f;
  f.m = m;
  f.r = r;
  auto mat = std::make_shared<std::vector<double>>(std::move(M));
  f.apply = [m, r, mat](const double*, const double* z, double* out) {
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < r; ++j) s += (*mat)[static_cast<std::size_t>(i * r + j)] * z[j];
      out[i] = s;
    }
  };
  f.jacobian_apply = [m](const double*, const double*, const double*,
                         double* out) {
    for (int i = 0; i < m; ++i) out[i] = 0.0;
  };
  f.closed_flow = [m, r, mat](const double* z, const double* x, double* out) {
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < r; ++j) s += (*mat)[static_cast<std::size_t>(i * r + j)] * z[j];
      out[i] = x[i] + s;
    }
  };
  return f;
}

VectorField rotation_field() {
  VectorField f;
  f.m = 2;
  f.r = 1;
  f.apply = [](const double* x, const double* z, double* out) {
    out[0] = -z[0] * x[1];
    out[1] = z[0] * x[0];
  };
  f.jacobian_apply = [](const double*, const double* z, const double* v,
                        double* out) {
    out[0] = -z[0] * v[1];
    out[1] = z[0] * v[0];
  };
  f.closed_flow = [](const double* z, const double* x, double* out) {
    double c = std::cos(z[0]), s = std::sin(z[0]);
    double x0 = x[0], x1 = x[1];
    out[0] = x0 * c - x1 * s;
    out[1] = x0 * s + x1 * c;
  };
  return f;
}

void jump_flow(const VectorField& f, const double* z, const double* x,
               double* out, double tol) {
  if (!f.apply && !f.closed_flow)
    throw std::invalid_argument("flow: field has no evaluation function");
  const int m = f.m;
  if (f.closed_flow) {
    f.closed_flow(z, x, out);
    return;
  }
  Rhs rhs = [&f, z](const double* y, double* dy) { f.apply(y, z, dy); };
  Scratch s(m);
  // fixed-substep pass, then Richardson halving as the accuracy check
  int n = base_substeps(z, f.r);
  std::vector<double> y1(x, x + m), y2(x, x + m);
  rk4_span(rhs, m, 0.0, 1.0, n, y1.data(), s);
  rk4_span(rhs, m, 0.0, 1.0, 2 * n, y2.data(), s);
  if (max_abs_diff(y1.data(), y2.data(), m) <= tol) {
    std::memcpy(out, y2.data(), static_cast<std::size_t>(m) * sizeof(double));
    return;
  }
  std::memcpy(y2.data(), x, static_cast<std::size_t>(m) * sizeof(double));
  dopri5_span(rhs, m, 0.0, 1.0, tol, y2.data());
  std::memcpy(out, y2.data(), static_cast<std::size_t>(m) * sizeof(double));
}

void marcus_jump_correction(const VectorField& f, const double* z,
                            const double* x, double* out, double tol) {
  const int m = f.m;
  std::vector<double> phi(static_cast<std::size_t>(m)),
      fx(static_cast<std::size_t>(m));
  jump_flow(f, z, x, phi.data(), tol);
  f.apply(x, z, fx.data());
  for (int i = 0; i < m; ++i) out[i] = phi[i] - x[i] - fx[i];
}

std::vector<double> flow_states(const VectorField& f, const double* z,
                                const double* x,
                                const std::vector<double>& times, double tol) {
  const int m = f.m;
  std::vector<double> out(times.size() * static_cast<std::size_t>(m));
  for (double t : times)
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument("flow: flow times must lie in [0,1]");
  if (f.closed_flow) {
    std::vector<double> tz(static_cast<std::size_t>(f.r));
    for (std::size_t i = 0; i < times.size(); ++i) {
      for (int j = 0; j < f.r; ++j) tz[static_cast<std::size_t>(j)] = times[i] * z[j];
      f.closed_flow(tz.data(), x, out.data() + i * static_cast<std::size_t>(m));
    }
    return out;
  }
  if (!std::is_sorted(times.begin(), times.end()))
    throw std::invalid_argument("flow: flow times must be sorted");
  Rhs rhs = [&f, z](const double* y, double* dy) { f.apply(y, z, dy); };
  Scratch s(m);
  const int n = 2 * base_substeps(z, f.r);
  std::vector<double> y(x, x + m);
  double prev = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    double t = times[i];
    if (t > prev) {
      int steps = std::max(1, static_cast<int>(std::ceil((t - prev) * n)));
      // verify with a halved pass; fall back to the adaptive integrator,
      // restarting from the state at prev rather than the advanced one
      std::vector<double> y1(y), y2(y);
      rk4_span(rhs, m, prev, t, steps, y1.data(), s);
      rk4_span(rhs, m, prev, t, 2 * steps, y2.data(), s);
      if (max_abs_diff(y1.data(), y2.data(), m) > tol) {
        y2 = y;
        dopri5_span(rhs, m, prev, t, tol, y2.data());
      }
      y = y2;
      prev = t;
    }
    std::memcpy(out.data() + i * static_cast<std::size_t>(m), y.data(),
                static_cast<std::size_t>(m) * sizeof(double));
  }
  return out;
}

double flow_defect(const VectorField& f, const double* z, const double* x,
                   const double* y, int grid_n, double tol) {
  if (!f.jacobian_apply)
    throw std::invalid_argument("flow: defect needs jacobian_apply");
  if (grid_n < 2) throw std::invalid_argument("flow: defect grid needs >= 2 points");
  const int m = f.m;
  std::vector<double> grid(static_cast<std::size_t>(grid_n));
  for (int i = 0; i < grid_n; ++i)
    grid[static_cast<std::size_t>(i)] = static_cast<double>(i) / (grid_n - 1);
  std::vector<double> sx = flow_states(f, z, x, grid, tol);
  std::vector<double> sy = flow_states(f, z, y, grid, tol);
  std::vector<double> g(static_cast<std::size_t>(m)),
      ax(static_cast<std::size_t>(m)), ay(static_cast<std::size_t>(m));
  double worst = 0;
  for (int i = 0; i < grid_n; ++i) {
    const double* ux = sx.data() + static_cast<std::size_t>(i) * m;
    const double* uy = sy.data() + static_cast<std::size_t>(i) * m;
    // acceleration of the frozen flow: (DF(u)z) F(u)z
    f.apply(ux, z, g.data());
    f.jacobian_apply(ux, z, g.data(), ax.data());
    f.apply(uy, z, g.data());
    f.jacobian_apply(uy, z, g.data(), ay.data());
    double d2 = 0;
    for (int j = 0; j < m; ++j) {
      double d = ax[static_cast<std::size_t>(j)] - ay[static_cast<std::size_t>(j)];
      d2 += d * d;
    }
    worst = std::max(worst, std::sqrt(d2));
  }
  return worst;
}

} // namespace fm::flow
