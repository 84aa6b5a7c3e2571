#include "fm/marcus.hpp"

#include "fm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace fm::marcus {

namespace {

struct Event {
  double t = 0;
  int kind = 0; // 0: fast jump, 1: slow jump (fast applied first on ties)
  std::size_t idx = 0;
};

// Shared grid walker: deterministic drift with one RK4 step per grid
// interval, canonical jump maps at event times.  Nodes are the uniform mesh,
// all event times, and any caller-supplied extra nodes, deduplicated
// exactly; the stored state at an event node is the post-jump value.
class Stepper {
public:
  Stepper(int m, std::function<void(const double*, double*)> rhs)
      : m_(m), rhs_(std::move(rhs)), k_(static_cast<std::size_t>(5 * m)) {}

  void drift(double h, double* y) {
    if (h <= 0) return;
    double* k1 = k_.data();
    double* k2 = k1 + m_;
    double* k3 = k2 + m_;
    double* k4 = k3 + m_;
    double* tmp = k4 + m_;
    rhs_(y, k1);
    for (int i = 0; i < m_; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    rhs_(tmp, k2);
    for (int i = 0; i < m_; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    rhs_(tmp, k3);
    for (int i = 0; i < m_; ++i) tmp[i] = y[i] + h * k3[i];
    rhs_(tmp, k4);
    for (int i = 0; i < m_; ++i)
      y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }

private:
  int m_;
  std::function<void(const double*, double*)> rhs_;
  std::vector<double> k_;
};

std::vector<double> build_nodes(double t0, double horizon, double mesh_dt,
                                const std::vector<Event>& events,
                                const std::vector<double>* extra) {
  if (!(horizon > 0)) throw std::invalid_argument("marcus: horizon must be > 0");
  if (!(mesh_dt > 0)) throw std::invalid_argument("marcus: mesh_dt must be > 0");
  std::vector<double> nodes;
  auto steps = static_cast<std::size_t>(std::ceil(horizon / mesh_dt - 1e-9));
  nodes.reserve(steps + events.size() + (extra ? extra->size() : 0) + 2);
  nodes.push_back(t0);
  for (std::size_t k = 1; k < steps; ++k) nodes.push_back(t0 + static_cast<double>(k) * mesh_dt);
  nodes.push_back(t0 + horizon);
  for (const auto& e : events) nodes.push_back(e.t);
  if (extra)
    for (double t : *extra)
      if (t > t0 && t < t0 + horizon) nodes.push_back(t);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

// the full integration core shared by the unperturbed and perturbed entry
// points
PathGrid integrate_core(int m,
                        const std::function<void(const double*, double*)>& rhs,
                        std::vector<Event> events,
                        const std::function<void(const Event&, double*)>& apply_jump,
                        const double* x0, double t0, double horizon,
                        double mesh_dt, const std::vector<double>* extra) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) {
                     if (a.t != b.t) return a.t < b.t;
                     return a.kind < b.kind; // fast before slow on ties
                   });
  std::vector<double> nodes = build_nodes(t0, horizon, mesh_dt, events, extra);
  PathGrid path;
  path.m = m;
  path.t = nodes;
  path.x.resize(nodes.size() * static_cast<std::size_t>(m));
  Stepper stepper(m, rhs);
  std::vector<double> y(x0, x0 + m);
  std::size_t ev = 0;
  std::memcpy(path.x.data(), y.data(), static_cast<std::size_t>(m) * sizeof(double));
  // events exactly at t0 are not part of the window (jumps live in (t0, t0+H])
  while (ev < events.size() && events[ev].t <= t0) ++ev;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    stepper.drift(nodes[i] - nodes[i - 1], y.data());
    while (ev < events.size() && events[ev].t == nodes[i]) {
      apply_jump(events[ev], y.data());
      ++ev;
    }
    std::memcpy(path.x.data() + i * static_cast<std::size_t>(m), y.data(),
                static_cast<std::size_t>(m) * sizeof(double));
  }
  return path;
}

void check_system(const FoliatedSystem& sys) {
  if (sys.m <= 0 || sys.d <= 0)
    throw std::invalid_argument("marcus: system dimensions must be positive");
  if (sys.m > 8 || sys.d > 8)
    throw std::invalid_argument(
        "marcus: dimensions above 8 are not supported (stack buffers)");
  if (!sys.F.apply && !sys.F.closed_flow)
    throw std::invalid_argument("marcus: system needs a fast coefficient field");
  if (!sys.pi) throw std::invalid_argument("marcus: system needs a projection");
}

std::vector<Event> events_from(const levy::JumpPath& p, int kind, double t0,
                               double t1, double time_scale) {
  std::vector<Event> ev;
  ev.reserve(p.times.size());
  for (std::size_t i = 0; i < p.times.size(); ++i) {
    double t = p.times[i] * time_scale;
    if (t > t0 && t <= t1) ev.push_back({t, kind, i});
  }
  return ev;
}

} // namespace

std::size_t PathGrid::locate(double s) const {
  auto it = std::upper_bound(t.begin(), t.end(), s);
  if (it == t.begin())
    throw std::out_of_range("marcus: time before the first grid node");
  return static_cast<std::size_t>(it - t.begin()) - 1;
}

PathGrid integrate_unperturbed(const FoliatedSystem& sys,
                               const levy::JumpPath& z, const double* x0,
                               double t0, double horizon, double mesh_dt,
                               double tol,
                               const std::vector<double>* extra_nodes) {
  check_system(sys);
  if (z.dim != sys.F.r)
    throw std::invalid_argument("marcus: fast path dimension mismatch");
  const int m = sys.m;
  const double* b = z.drift.data();
  bool has_drift = false;
  for (double v : z.drift) has_drift = has_drift || v != 0.0;
  auto rhs = [&sys, b, has_drift, m](const double* y, double* dy) {
    if (sys.F0) {
      sys.F0(y, dy);
    } else {
      for (int i = 0; i < m; ++i) dy[i] = 0.0;
    }
    if (has_drift) {
      double fb[8];
      sys.F.apply(y, b, fb);
      for (int i = 0; i < m; ++i) dy[i] += fb[i];
    }
  };
  auto jump = [&sys, &z, tol](const Event& e, double* y) {
    double out[8];
    flow::jump_flow(sys.F, z.jumps[e.idx].data(), y, out, tol);
    std::memcpy(y, out, static_cast<std::size_t>(sys.m) * sizeof(double));
  };
  return integrate_core(m, rhs, events_from(z, 0, t0, t0 + horizon, 1.0), jump,
                        x0, t0, horizon, mesh_dt, extra_nodes);
}

PathGrid integrate_perturbed(const FoliatedSystem& sys, double eps,
                             const levy::JumpPath& z,
                             const levy::JumpPath& ztilde,
                             SlowCoupling coupling, const double* x0,
                             double horizon, double mesh_dt, double tol,
                             const std::vector<double>* extra_nodes) {
  check_system(sys);
  if (!(eps > 0)) throw std::invalid_argument("marcus: eps must be > 0");
  if (z.dim != sys.F.r)
    throw std::invalid_argument("marcus: fast path dimension mismatch");
  const bool has_slow = sys.K_tilde.m > 0;
  if (has_slow && ztilde.dim != sys.K_tilde.r)
    throw std::invalid_argument("marcus: slow path dimension mismatch");
  if (has_slow && sys.K_tilde.r > 8)
    throw std::invalid_argument("marcus: slow noise dimension above 8");
  const int m = sys.m;

  // slow clock handling, per the coupling table in the header: time_scale
  // maps sampled slow jump times onto the integrator clock, size_scale maps
  // z~ into the argument of the K~ flow, drift_scale does the same for the
  // compensator drift rate
  double time_scale = 1.0, size_scale = eps, drift_scale = 1.0;
  switch (coupling) {
    case SlowCoupling::physical:
      break;
    case SlowCoupling::vanishing:
      time_scale = 1.0 / eps;
      drift_scale = eps;
      break;
    case SlowCoupling::time_changed:
      time_scale = 1.0 / eps;
      size_scale = 1.0;
      break;
  }

  const double* b = z.drift.data();
  bool fast_drift = false;
  for (double v : z.drift) fast_drift = fast_drift || v != 0.0;
  bool slow_drift = false;
  std::vector<double> bs(ztilde.drift.size());
  if (has_slow)
    for (std::size_t j = 0; j < ztilde.drift.size(); ++j) {
      bs[j] = drift_scale * ztilde.drift[j];
      slow_drift = slow_drift || bs[j] != 0.0;
    }

  auto rhs = [&sys, b, &bs, eps, fast_drift, slow_drift, has_slow,
              m](const double* y, double* dy) {
    if (sys.F0) {
      sys.F0(y, dy);
    } else {
      for (int i = 0; i < m; ++i) dy[i] = 0.0;
    }
    if (fast_drift) {
      double fb[8];
      sys.F.apply(y, b, fb);
      for (int i = 0; i < m; ++i) dy[i] += fb[i];
    }
    if (sys.K) {
      double kx[8];
      sys.K(y, kx);
      for (int i = 0; i < m; ++i) dy[i] += eps * kx[i];
    }
    if (has_slow && slow_drift) {
      double kb[8];
      sys.K_tilde.apply(y, bs.data(), kb);
      for (int i = 0; i < m; ++i) dy[i] += eps * kb[i];
    }
  };

  std::vector<Event> events = events_from(z, 0, 0.0, horizon, 1.0);
  if (has_slow) {
    std::vector<Event> sl = events_from(ztilde, 1, 0.0, horizon, time_scale);
    events.insert(events.end(), sl.begin(), sl.end());
  }
  auto jump = [&sys, &z, &ztilde, size_scale, tol](const Event& e, double* y) {
    double out[8];
    if (e.kind == 0) {
      flow::jump_flow(sys.F, z.jumps[e.idx].data(), y, out, tol);
    } else {
      double zs[8];
      const auto& zj = ztilde.jumps[e.idx];
      for (std::size_t j = 0; j < zj.size(); ++j) zs[j] = size_scale * zj[j];
      flow::jump_flow(sys.K_tilde, zs, y, out, tol);
    }
    std::memcpy(y, out, static_cast<std::size_t>(sys.m) * sizeof(double));
  };
  return integrate_core(m, rhs, std::move(events), jump, x0, 0.0, horizon,
                        mesh_dt, extra_nodes);
}

Estimate perturbation_gap(const FoliatedSystem& sys,
                          const levy::LevyMeasure& nu,
                          const levy::LevyMeasure& nu_tilde, double delta,
                          const double* x0, double eps, double T, double p,
                          int replicas, double mesh_dt, double tol,
                          std::uint64_t seed, int workers) {
  check_system(sys);
  if (!(p >= 1)) throw std::invalid_argument("marcus: p must be >= 1");
  if (replicas <= 1)
    throw std::invalid_argument("marcus: need at least 2 replicas");
  const bool has_slow = sys.K_tilde.m > 0;
  const int d = sys.d;
  std::vector<double> supp(static_cast<std::size_t>(replicas));
  par::parallel_for(static_cast<std::size_t>(replicas), workers, [&](std::size_t i) {
    rng::RngStream gf(seed, static_cast<std::uint32_t>(i), rng::role::fast);
    rng::RngStream gs(seed, static_cast<std::uint32_t>(i), rng::role::slow);
    levy::JumpPath z = levy::sample_jump_path(nu, T, delta, gf);
    levy::JumpPath zt;
    if (has_slow) {
      zt = levy::sample_jump_path(nu_tilde, T, delta, gs);
    } else {
      zt.T = T;
      zt.dim = sys.K_tilde.r > 0 ? sys.K_tilde.r : 1;
      zt.drift.assign(static_cast<std::size_t>(zt.dim), 0.0);
    }
    // both paths share every grid node so the sup needs no interpolation
    PathGrid xe = integrate_perturbed(sys, eps, z, zt,
                                      SlowCoupling::physical, x0, T, mesh_dt,
                                      tol, nullptr);
    PathGrid x = integrate_unperturbed(sys, z, x0, 0.0, T, mesh_dt, tol, &xe.t);
    double worst = 0;
    double va[8], vb[8];
    for (std::size_t k = 0; k < xe.size(); ++k) {
      std::size_t kx = x.locate(xe.t[k]);
      sys.pi(xe.state(k), va);
      sys.pi(x.state(kx), vb);
      double s2 = 0;
      for (int j = 0; j < d; ++j) s2 += (va[j] - vb[j]) * (va[j] - vb[j]);
      worst = std::max(worst, std::sqrt(s2));
    }
    supp[i] = std::pow(worst, p);
  });
  double mean = 0;
  for (double v : supp) mean += v;
  mean /= static_cast<double>(replicas);
  double var = 0;
  for (double v : supp) var += (v - mean) * (v - mean);
  var /= static_cast<double>(replicas - 1);
  double se_mean = std::sqrt(var / static_cast<double>(replicas));
  Estimate est;
  est.value = std::pow(mean, 1.0 / p);
  // delta method: d/dm m^{1/p} = m^{1/p-1} / p
  est.se = mean > 0 ? se_mean * std::pow(mean, 1.0 / p - 1.0) / p : 0.0;
  return est;
}

} // namespace fm::marcus
