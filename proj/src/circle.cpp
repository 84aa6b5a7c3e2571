#include "fm/circle.hpp"

#include "fm/quadrature.hpp"

#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>

namespace fm::circle {

namespace {

struct Guts {
  CircleConfig cfg;
};

// What CircleSystem::guts actually owns: the captured config plus the heap
// copy of the fields that Problem::sys points at.  The anchor keeps that
// pointer valid across copies and moves of the CircleSystem itself.
struct Keep {
  std::shared_ptr<Guts> guts;
  std::shared_ptr<marcus::FoliatedSystem> sys_anchor;
};

void validate(const CircleConfig& cfg) {
  double r0 = std::hypot(cfg.x0[0], cfg.x0[1]);
  if (!(r0 > 0))
    throw std::invalid_argument("circle: x0 must not be the origin");
  if (cfg.nu.dim != 1)
    throw std::invalid_argument("circle: the fast driver must be scalar");
  if (cfg.slow_kind == SlowKind::planar && cfg.nu_tilde.dim != 2)
    throw std::invalid_argument("circle: planar slow noise needs a 2-d driver");
}

// angular frequency and complex amplitude of the radial observable in the
// radial_K angle convention: radial_K(theta, r) = base + Re[gamma e^{i f theta}]
struct Harmonic {
  int freq = 0;
  std::complex<double> gamma; // coefficient of e^{i freq theta}
  double base = 0;            // the leaf average
};

Harmonic harmonic_of(const CircleConfig& cfg, double r) {
  Harmonic h;
  if (cfg.pert == Perturbation::linear) {
    // a sin^2 + d cos^2 + (b+c) sin cos
    //   = (a+d)/2 + (d-a)/2 cos 2th + (b+c)/2 sin 2th
    const double a = cfg.A[0], b = cfg.A[1], c = cfg.A[2], d = cfg.A[3];
    h.freq = 2;
    h.gamma = std::complex<double>((d - a) / 2.0, -(b + c) / 2.0) * r;
    h.base = (a + d) / 2.0 * r;
  } else {
    // k1 sin + k2 cos = Re[(k2 - i k1) e^{i th}]
    h.freq = 1;
    h.gamma = std::complex<double>(cfg.kvec[1], -cfg.kvec[0]);
    h.base = 0.0;
  }
  return h;
}

// The rotation advances the position angle atan2(y, x), so radial_K's angle
// atan2(x, y) evolves as theta0 - Z_t: the symbol governing e^{i f theta_t}
// is Psi(-f) = conj Psi(f).
std::complex<double> psi_at(const levy::LevyMeasure& nu, double freq) {
  return std::conj(levy::characteristic_exponent(nu, freq));
}

} // namespace

CircleSystem make_circle(const CircleConfig& cfg) {
  validate(cfg);
  CircleSystem out;
  out.cfg = cfg;
  auto guts = std::make_shared<Guts>();
  guts->cfg = cfg;

  marcus::FoliatedSystem& sys = out.sys;
  sys.m = 2;
  sys.d = 1;
  sys.F = flow::rotation_field();
  sys.pi = [](const double* x, double* v) { v[0] = std::hypot(x[0], x[1]); };
  // transversal drift K(x)
  if (cfg.pert == Perturbation::linear) {
    sys.K = [guts](const double* x, double* out2) {
      const auto& A = guts->cfg.A;
      out2[0] = A[0] * x[0] + A[1] * x[1];
      out2[1] = A[2] * x[0] + A[3] * x[1];
    };
  } else {
    sys.K = [guts](const double*, double* out2) {
      out2[0] = guts->cfg.kvec[0];
      out2[1] = guts->cfg.kvec[1];
    };
  }
  // slow noise coefficient K~
  switch (cfg.slow_kind) {
    case SlowKind::none:
      break;
    case SlowKind::planar:
      sys.K_tilde = flow::constant_field(
          2, 2,
          {cfg.slow_amplitude, 0.0, 0.0, cfg.slow_amplitude});
      break;
    case SlowKind::radial_additive:
      // K~(x) z~ = (x/|x|) (rho . z~): unit-speed radial motion, so the
      // time-1 flow is |x| -> |x| + rho.z~ along the fixed ray
      sys.K_tilde.m = 2;
      sys.K_tilde.r = static_cast<int>(cfg.nu_tilde.dim);
      sys.K_tilde.apply = [guts](const double* x, const double* z,
                                 double* out2) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        double r = std::hypot(x[0], x[1]);
        out2[0] = x[0] / r * rz;
        out2[1] = x[1] / r * rz;
      };
      sys.K_tilde.closed_flow = [guts](const double* z, const double* x,
                                       double* out2) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        double r = std::hypot(x[0], x[1]);
        double rn = r + rz;
        if (!(rn > 0))
          throw std::domain_error("circle: radial jump through the origin");
        out2[0] = x[0] / r * rn;
        out2[1] = x[1] / r * rn;
      };
      break;
    case SlowKind::radial_linear:
      // K~(x) z~ = x (rho . z~): the time-1 flow scales by e^{rho.z~}
      sys.K_tilde.m = 2;
      sys.K_tilde.r = static_cast<int>(cfg.nu_tilde.dim);
      sys.K_tilde.apply = [guts](const double* x, const double* z,
                                 double* out2) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        out2[0] = x[0] * rz;
        out2[1] = x[1] * rz;
      };
      sys.K_tilde.closed_flow = [guts](const double* z, const double* x,
                                       double* out2) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        double s = std::exp(rz);
        out2[0] = x[0] * s;
        out2[1] = x[1] * s;
      };
      break;
  }

  averaging::Problem& prob = out.prob;
  // not &out.sys: that would dangle as soon as the caller moved or copied
  // the returned struct, so prob borrows a stable heap copy instead
  auto anchor = std::make_shared<marcus::FoliatedSystem>(sys);
  prob.sys = anchor.get();
  out.guts = std::make_shared<Keep>(Keep{guts, std::move(anchor)});
  prob.nu = cfg.nu;
  prob.nu_tilde = cfg.nu_tilde;
  prob.has_slow = cfg.slow_kind != SlowKind::none;
  prob.delta = cfg.delta;
  // the vertical part of the slow coefficient and the matching coupling:
  // radial kinds keep O(1) slow jumps on the accelerated clock and pair with
  // an averaged equation carrying the same jumps; planar translations vanish
  // with eps, so the averaged equation is the plain ODE
  switch (cfg.slow_kind) {
    case SlowKind::none:
    case SlowKind::planar:
      prob.coupling = marcus::SlowCoupling::vanishing;
      break;
    case SlowKind::radial_additive: {
      prob.coupling = marcus::SlowCoupling::time_changed;
      prob.K_tilde_V.m = 1;
      prob.K_tilde_V.r = static_cast<int>(cfg.nu_tilde.dim);
      prob.K_tilde_V.apply = [guts](const double*, const double* z,
                                    double* out1) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        out1[0] = rz;
      };
      prob.K_tilde_V.closed_flow = [guts](const double* z, const double* x,
                                          double* out1) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        out1[0] = x[0] + rz;
      };
      break;
    }
    case SlowKind::radial_linear: {
      prob.coupling = marcus::SlowCoupling::time_changed;
      prob.K_tilde_V.m = 1;
      prob.K_tilde_V.r = static_cast<int>(cfg.nu_tilde.dim);
      prob.K_tilde_V.apply = [guts](const double* x, const double* z,
                                    double* out1) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        out1[0] = x[0] * rz;
      };
      prob.K_tilde_V.closed_flow = [guts](const double* z, const double* x,
                                          double* out1) {
        double rz = guts->cfg.rho[0] * z[0];
        if (guts->cfg.nu_tilde.dim > 1) rz += guts->cfg.rho[1] * z[1];
        out1[0] = x[0] * std::exp(rz);
      };
      break;
    }
  }
  if (cfg.pert == Perturbation::linear) {
    const double trace = cfg.A[0] + cfg.A[3];
    prob.Q = [trace](const double* v, double* out1) {
      out1[0] = trace / 2.0 * v[0];
    };
  } else {
    prob.Q = [](const double*, double* out1) { out1[0] = 0.0; };
  }
  prob.h = [guts](const double* x) {
    return radial_K(guts->cfg, circle_angle(x), std::hypot(x[0], x[1]));
  };
  return out;
}

void ExactCirclePath::state(std::size_t i, double* out) const {
  out[0] = r0 * std::cos(theta[i]);
  out[1] = r0 * std::sin(theta[i]);
}

ExactCirclePath exact_fast_path(const CircleConfig& cfg,
                                const levy::JumpPath& z, double mesh_dt) {
  validate(cfg);
  if (z.dim != 1)
    throw std::invalid_argument("circle: exact path needs a scalar driver");
  ExactCirclePath path;
  path.r0 = std::hypot(cfg.x0[0], cfg.x0[1]);
  path.theta0 = std::atan2(cfg.x0[1], cfg.x0[0]);
  const double b = z.drift.empty() ? 0.0 : z.drift[0];
  // nodes: uniform mesh plus jump times, exactly like the integrator grid
  std::vector<double> nodes;
  auto steps = static_cast<std::size_t>(std::ceil(z.T / mesh_dt - 1e-9));
  nodes.reserve(steps + z.times.size() + 2);
  nodes.push_back(0.0);
  for (std::size_t k = 1; k < steps; ++k) nodes.push_back(static_cast<double>(k) * mesh_dt);
  nodes.push_back(z.T);
  for (double t : z.times)
    if (t > 0 && t <= z.T) nodes.push_back(t);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  path.t = nodes;
  path.theta.resize(nodes.size());
  // the angle accumulates drift and jumps without wrapping
  std::size_t j = 0;
  double jump_sum = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    while (j < z.times.size() && z.times[j] <= nodes[i] && z.times[j] > 0)
      jump_sum += z.jumps[j++][0];
    path.theta[i] = path.theta0 + b * nodes[i] + jump_sum;
  }
  return path;
}

double radial_K(const CircleConfig& cfg, double theta, double r) {
  const double ct = std::cos(theta), st = std::sin(theta);
  if (cfg.pert == Perturbation::linear) {
    const double a = cfg.A[0], b = cfg.A[1], c = cfg.A[2], d = cfg.A[3];
    return r * (a * st * st + d * ct * ct + (b + c) * st * ct);
  }
  return cfg.kvec[0] * st + cfg.kvec[1] * ct;
}

double circle_angle(const double* x) { return std::atan2(x[0], x[1]); }

double analytic_Q(const CircleConfig& cfg, double r) {
  if (cfg.pert == Perturbation::linear)
    return (cfg.A[0] + cfg.A[3]) / 2.0 * r;
  return 0.0;
}

double averaged_solution(const CircleConfig& cfg, double t, double r0) {
  if (cfg.pert == Perturbation::linear)
    return r0 * std::exp((cfg.A[0] + cfg.A[3]) / 2.0 * t);
  return r0;
}

std::vector<double> analytic_eta_bounds(const CircleConfig& cfg, double p,
                                        const std::vector<double>& t_grid,
                                        double r0, double theta0) {
  validate(cfg);
  Harmonic h = harmonic_of(cfg, r0);
  const std::complex<double> psi_w = psi_at(cfg.nu, h.freq);
  const std::complex<double> psi_2w = psi_at(cfg.nu, 2.0 * h.freq);
  if (!(psi_w.real() < 0))
    throw std::domain_error(
        "circle: the driver is invisible at the observable's frequency "
        "(Re Psi = 0), no decay rate exists");
  std::vector<double> out;
  out.reserve(t_grid.size());
  if (p == 1.0) {
    // closed-form bound on the bias of the window average,
    // |gamma| / (|Re Psi| t); for the linear perturbation this is
    // |d - a| r / (2 |Re Psi(2)| t) when b + c = 0
    for (double t : t_grid)
      out.push_back(std::abs(h.gamma) / (std::abs(psi_w.real()) * t));
    return out;
  }
  if (p != 2.0)
    throw std::invalid_argument("circle: analytic bounds exist for p in {1,2}");
  // exact second moment of the window-average deviation:
  //   E[(avg - base)^2] = |g|^2/2 E|J|^2 + 1/2 Re[g^2 e^{2i freq theta0} EJ2]
  // with J = (1/t) int_0^t e^{i freq (theta_s - theta_0)} ds; theta_s - theta_0
  // is a Levy process with symbol psi_w (compensator drift included), so the
  // two-time moments reduce to single integrals of Psi-exponentials,
  // evaluated by adaptive quadrature
  const std::complex<double> g2phase =
      h.gamma * h.gamma *
      std::exp(std::complex<double>(0.0, 2.0 * h.freq * theta0));
  for (double t : t_grid) {
    auto re_decay = [&](double u) {
      return (t - u) * (std::exp(u * psi_w)).real();
    };
    double ejj =
        2.0 / (t * t) *
        quad::integrate(re_decay, 0.0, t, 1e-12, 1e-10).value;
    // EJ2 = (2/t^2) int_0^t e^{sigma Psi(2w)} (e^{(t-sigma) Psi(w)} - 1)/Psi(w) dsigma
    auto ej2_re = [&](double s) {
      std::complex<double> val = std::exp(s * psi_2w) *
                                 (std::exp((t - s) * psi_w) - 1.0) / psi_w;
      return val.real();
    };
    auto ej2_im = [&](double s) {
      std::complex<double> val = std::exp(s * psi_2w) *
                                 (std::exp((t - s) * psi_w) - 1.0) / psi_w;
      return val.imag();
    };
    std::complex<double> ej2(
        quad::integrate(ej2_re, 0.0, t, 1e-12, 1e-10).value,
        quad::integrate(ej2_im, 0.0, t, 1e-12, 1e-10).value);
    ej2 *= 2.0 / (t * t);
    double second = 0.5 * std::norm(h.gamma) * ejj + 0.5 * (g2phase * ej2).real();
    out.push_back(std::sqrt(std::max(0.0, second)));
  }
  return out;
}

double analytic_eta_bias(const CircleConfig& cfg, double t, double r0,
                         double theta0) {
  Harmonic h = harmonic_of(cfg, r0);
  const std::complex<double> psi_w = psi_at(cfg.nu, h.freq);
  if (psi_w.real() == 0.0)
    throw std::domain_error(
        "circle: the driver is invisible at the observable's frequency "
        "(Re Psi = 0), no decay rate exists");
  const std::complex<double> phase =
      std::exp(std::complex<double>(0.0, h.freq * theta0));
  std::complex<double> val =
      h.gamma * phase * (std::exp(t * psi_w) - 1.0) / (t * psi_w);
  return val.real();
}

} // namespace fm::circle
