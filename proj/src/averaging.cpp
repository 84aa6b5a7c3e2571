#include "fm/averaging.hpp"

#include "fm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fm::averaging {

namespace {

// trapezoid integral of a sampled function over path nodes [i0, i1]
double trapezoid(const std::vector<double>& t, const std::vector<double>& f,
                 std::size_t i0, std::size_t i1) {
  double s = 0;
  for (std::size_t i = i0; i < i1; ++i)
    s += 0.5 * (f[i] + f[i + 1]) * (t[i + 1] - t[i]);
  return s;
}

struct MeanVar {
  double mean = 0, se = 0;
};

MeanVar mean_se(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  MeanVar r;
  for (double x : v) r.mean += x;
  r.mean /= n;
  double var = 0;
  for (double x : v) var += (x - r.mean) * (x - r.mean);
  var /= (n - 1.0);
  r.se = std::sqrt(var / n);
  return r;
}

void check_problem(const Problem& prob) {
  if (!prob.sys) throw std::invalid_argument("averaging: problem needs a system");
  if (!prob.Q) throw std::invalid_argument("averaging: problem needs Q");
}

} // namespace

Partition make_partition(double c, double T, double eps) {
  if (!(eps > 0 && eps < 1))
    throw std::invalid_argument("averaging: eps must lie in (0,1)");
  if (!(c > 0)) throw std::invalid_argument("averaging: c must be > 0");
  if (!(T > 0)) throw std::invalid_argument("averaging: T must be > 0");
  Partition p;
  const double lne = -std::log(eps); // |ln eps|
  p.Delta = c * T * lne;
  p.N = static_cast<long>(std::floor(1.0 / (c * eps * lne))) + 1;
  return p;
}

marcus::Estimate averaged_drift_mc(const Problem& prob, const ScalarField& h,
                                   const double* x0, double t_burn,
                                   double t_avg, int replicas, double mesh_dt,
                                   double tol, std::uint64_t seed,
                                   int workers) {
  check_problem(prob);
  if (!(t_avg > 0)) throw std::invalid_argument("averaging: t_avg must be > 0");
  if (!(t_burn >= 0)) throw std::invalid_argument("averaging: t_burn must be >= 0");
  if (replicas <= 1) throw std::invalid_argument("averaging: need >= 2 replicas");
  const double horizon = t_burn + t_avg;
  std::vector<double> avg(static_cast<std::size_t>(replicas));
  std::vector<double> burn_node{t_burn};
  par::parallel_for(static_cast<std::size_t>(replicas), workers, [&](std::size_t i) {
    rng::RngStream g(seed, static_cast<std::uint32_t>(i), rng::role::fast);
    levy::JumpPath z = levy::sample_jump_path(prob.nu, horizon, prob.delta, g);
    marcus::PathGrid path = marcus::integrate_unperturbed(
        *prob.sys, z, x0, 0.0, horizon, mesh_dt, tol,
        t_burn > 0 ? &burn_node : nullptr);
    std::vector<double> hv(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) hv[k] = h(path.state(k));
    std::size_t k0 = t_burn > 0 ? path.locate(t_burn) : 0;
    avg[i] = trapezoid(path.t, hv, k0, path.size() - 1) / t_avg;
  });
  MeanVar mv = mean_se(avg);
  return {mv.mean, mv.se};
}

std::vector<EtaRow> estimate_eta(const Problem& prob, const ScalarField& h,
                                 double q, const double* x0,
                                 const std::vector<double>& t_grid, double p,
                                 int replicas, double mesh_dt, double tol,
                                 std::uint64_t seed, int workers) {
  check_problem(prob);
  if (t_grid.empty()) throw std::invalid_argument("averaging: empty t grid");
  if (!std::is_sorted(t_grid.begin(), t_grid.end()))
    throw std::invalid_argument("averaging: t grid must be sorted");
  if (!(t_grid.front() > 0))
    throw std::invalid_argument("averaging: window lengths must be > 0");
  if (!(p >= 1)) throw std::invalid_argument("averaging: p must be >= 1");
  if (replicas <= 1) throw std::invalid_argument("averaging: need >= 2 replicas");
  const double horizon = t_grid.back();
  const std::size_t nt = t_grid.size();
  // dev[j * replicas + i]: window-average deviation of replica i at window j
  std::vector<double> dev(nt * static_cast<std::size_t>(replicas));
  par::parallel_for(static_cast<std::size_t>(replicas), workers, [&](std::size_t i) {
    rng::RngStream g(seed, static_cast<std::uint32_t>(i), rng::role::fast);
    levy::JumpPath z = levy::sample_jump_path(prob.nu, horizon, prob.delta, g);
    marcus::PathGrid path = marcus::integrate_unperturbed(
        *prob.sys, z, x0, 0.0, horizon, mesh_dt, tol, &t_grid);
    std::vector<double> hv(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) hv[k] = h(path.state(k));
    // running trapezoid; every window end is a grid node
    std::size_t j = 0;
    double integral = 0;
    for (std::size_t k = 0; k + 1 < path.size() && j < nt; ++k) {
      integral += 0.5 * (hv[k] + hv[k + 1]) * (path.t[k + 1] - path.t[k]);
      while (j < nt && path.t[k + 1] == t_grid[j]) {
        dev[j * static_cast<std::size_t>(replicas) + i] =
            integral / t_grid[j] - q;
        ++j;
      }
    }
    if (j != nt)
      throw std::logic_error("averaging: window end missing from the grid");
  });

  // bootstrap standard error for the L^p deviation (resampling replicas with
  // replacement; one deterministic stream drives all windows)
  const int B = 200;
  rng::RngStream gboot(seed, 0, rng::role::bootstrap);
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(replicas));
  std::vector<std::vector<double>> boot_lp(nt);
  for (auto& v : boot_lp) v.reserve(B);
  for (int b = 0; b < B; ++b) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < replicas; ++i) {
      auto idx = static_cast<std::size_t>(gboot.next_u64() %
                                          static_cast<std::uint64_t>(replicas));
      ++counts[idx];
    }
    for (std::size_t j = 0; j < nt; ++j) {
      double s = 0;
      const double* row = dev.data() + j * static_cast<std::size_t>(replicas);
      for (std::size_t i2 = 0; i2 < static_cast<std::size_t>(replicas); ++i2)
        if (counts[i2] > 0)
          s += counts[i2] * std::pow(std::abs(row[i2]), p);
      boot_lp[j].push_back(std::pow(s / replicas, 1.0 / p));
    }
  }

  std::vector<EtaRow> rows(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    const double* row = dev.data() + j * static_cast<std::size_t>(replicas);
    std::vector<double> absp(static_cast<std::size_t>(replicas)),
        raw(static_cast<std::size_t>(replicas));
    for (std::size_t i2 = 0; i2 < static_cast<std::size_t>(replicas); ++i2) {
      absp[i2] = std::pow(std::abs(row[i2]), p);
      raw[i2] = row[i2];
    }
    MeanVar mp = mean_se(absp), mr = mean_se(raw);
    rows[j].t = t_grid[j];
    rows[j].lp_dev = std::pow(mp.mean, 1.0 / p);
    MeanVar bs = mean_se(boot_lp[j]);
    // spread of the bootstrap replicates, not the SE of their mean
    rows[j].lp_se = bs.se * std::sqrt(static_cast<double>(B));
    rows[j].mean_dev = mr.mean;
    rows[j].mean_se = mr.se;
  }
  return rows;
}

marcus::PathGrid integrate_averaged(
    const std::function<void(const double*, double*)>& Q,
    const flow::VectorField& K_tilde_V, const levy::JumpPath& ztilde,
    const double* v0, int d, double T, double mesh_dt, double tol,
    const std::vector<double>* extra_nodes) {
  // the averaged equation is itself an unperturbed canonical SDE on R^d:
  // drift Q, noise coefficient K~_V, driver Z~
  marcus::FoliatedSystem avg;
  avg.m = d;
  avg.d = d;
  avg.F0 = Q;
  if (K_tilde_V.m > 0) {
    avg.F = K_tilde_V;
  } else {
    // no slow-noise term: a zero field of matching driver dimension
    int r = ztilde.dim > 0 ? ztilde.dim : 1;
    avg.F = flow::constant_field(d, r, std::vector<double>(
                                           static_cast<std::size_t>(d * r), 0.0));
  }
  avg.pi = [d](const double* x, double* out) {
    for (int i = 0; i < d; ++i) out[i] = x[i];
  };
  levy::JumpPath zt = ztilde;
  if (K_tilde_V.m == 0) {
    zt.times.clear();
    zt.jumps.clear();
    std::fill(zt.drift.begin(), zt.drift.end(), 0.0);
    if (zt.drift.empty()) zt.drift.assign(static_cast<std::size_t>(avg.F.r), 0.0);
    zt.dim = avg.F.r;
  }
  zt.T = T;
  return marcus::integrate_unperturbed(avg, zt, v0, 0.0, T, mesh_dt, tol,
                                       extra_nodes);
}

ErrorRow averaging_error(const Problem& prob, const double* x0, double eps,
                         double T, double p, double lambda, double c,
                         int replicas, double mesh_dt, double tol,
                         std::uint64_t seed, int workers, int eta_replicas) {
  check_problem(prob);
  if (!prob.h)
    throw std::invalid_argument("averaging: problem needs the observable h");
  if (!(T > 0 && T <= 1))
    throw std::invalid_argument("averaging: T must lie in (0, 1]");
  if (!(p >= 2)) throw std::invalid_argument("averaging: p must be >= 2");
  if (!(lambda > 0 && lambda < 1))
    throw std::invalid_argument("averaging: lambda must lie in (0,1)");
  if (replicas <= 1) throw std::invalid_argument("averaging: need >= 2 replicas");
  const marcus::FoliatedSystem& sys = *prob.sys;
  const int d = sys.d;
  const Partition part = make_partition(c, T, eps);
  const double U = part.Delta * static_cast<double>(part.N); // fast horizon
  const bool time_changed = prob.coupling == marcus::SlowCoupling::time_changed;
  if (prob.has_slow && prob.coupling == marcus::SlowCoupling::physical)
    throw std::invalid_argument(
        "averaging: the error functional needs slow jumps on the accelerated "
        "clock (vanishing or time_changed coupling)");

  // comparison grid on the slow clock
  const int kCompare = 2048;
  std::vector<double> cmp_slow(kCompare);
  for (int j = 0; j < kCompare; ++j)
    cmp_slow[static_cast<std::size_t>(j)] = T * (j + 1) / kCompare;

  std::vector<double> supp(static_cast<std::size_t>(replicas));
  std::vector<double> a1s(static_cast<std::size_t>(replicas)),
      a2s(static_cast<std::size_t>(replicas)),
      a3s(static_cast<std::size_t>(replicas)),
      slack(static_cast<std::size_t>(replicas));

  par::parallel_for(static_cast<std::size_t>(replicas), workers, [&](std::size_t i) {
    rng::RngStream gf(seed, static_cast<std::uint32_t>(i), rng::role::fast);
    rng::RngStream gs(seed, static_cast<std::uint32_t>(i), rng::role::slow);
    levy::JumpPath z = levy::sample_jump_path(prob.nu, U, prob.delta, gf);
    // the slow driver lives on the slow clock: one sample on [0, eps U]
    // (just past T) is shared by the perturbed path and the averaged one
    levy::JumpPath zt;
    if (prob.has_slow) {
      zt = levy::sample_jump_path(prob.nu_tilde, eps * U, prob.delta, gs);
    } else {
      zt.T = eps * U;
      zt.dim = sys.K_tilde.m > 0 ? sys.K_tilde.r : 1;
      zt.drift.assign(static_cast<std::size_t>(zt.dim), 0.0);
    }

    // extra fast nodes: comparison times and block boundaries
    std::vector<double> extra_fast;
    extra_fast.reserve(cmp_slow.size() + static_cast<std::size_t>(part.N) + 1);
    for (double t : cmp_slow) extra_fast.push_back(t / eps);
    for (long n = 1; n <= part.N; ++n)
      extra_fast.push_back(part.Delta * static_cast<double>(n));
    marcus::PathGrid xe =
        marcus::integrate_perturbed(sys, eps, z, zt, prob.coupling, x0, U,
                                    mesh_dt, tol, &extra_fast);

    // averaged path on [0, T]; it shares the slow driver (jump-for-jump
    // under time_changed, drift-only under vanishing where the slow term is
    // O(eps) and drops out of the averaged equation)
    double v0[8];
    sys.pi(x0, v0);
    std::vector<double> extra_slow = cmp_slow;
    for (double t : zt.times)
      if (t < T) extra_slow.push_back(t);
    marcus::PathGrid w = integrate_averaged(
        prob.Q, time_changed ? prob.K_tilde_V : flow::VectorField{}, zt, v0,
        d, T, mesh_dt, tol, &extra_slow);

    // sup over the comparison grid (slow clock) plus the slow jump times;
    // the paired fast-clock time must be computed with the same float
    // expression used when the node was created, so the lookups hit exact
    // grid nodes
    double worst = 0;
    double va[8], vb[8];
    std::vector<std::pair<double, double>> cmp; // (slow t, fast u)
    cmp.reserve(cmp_slow.size() + zt.times.size());
    for (double t : cmp_slow) cmp.push_back({t, t / eps});
    {
      const double inv_eps = 1.0 / eps; // matches the integrator's time scale
      for (double t : zt.times)
        if (t > 0 && t <= T) cmp.push_back({t, t * inv_eps});
    }
    for (const auto& [t, u] : cmp) {
      std::size_t ke = xe.locate(u);
      std::size_t kw = w.locate(t);
      sys.pi(xe.state(ke), va);
      const double* wmem = w.state(kw);
      for (int j2 = 0; j2 < d; ++j2) vb[j2] = wmem[j2];
      double s2 = 0;
      for (int j2 = 0; j2 < d; ++j2) s2 += (va[j2] - vb[j2]) * (va[j2] - vb[j2]);
      worst = std::max(worst, std::sqrt(s2));
    }
    supp[i] = std::pow(worst, p);

    // block decomposition of the accumulated defect at t* = eps N Delta:
    //   delta = eps int_0^{N Delta} [h - Q(pi)](Xe_u) du
    //   A1_n  = eps [int_block h(Xe) - int_block h(Xhat_n)]
    //   A2_n  = eps [int_block h(Xhat_n) - Delta Q(pi(Xe_{n Delta}))]
    //   A3    = eps [sum_n Delta Q(pi(Xe_{n Delta})) - int_0^{N Delta} Q(pi(Xe))]
    // with every Xe integral on the path grid, so delta = A1 + A2 + A3
    // exactly up to rounding.
    std::vector<double> hv(xe.size()), qv(xe.size());
    for (std::size_t k = 0; k < xe.size(); ++k) {
      hv[k] = prob.h(xe.state(k));
      sys.pi(xe.state(k), va);
      double qd[8];
      prob.Q(va, qd);
      // d = 1 observables: Q is scalar along the first leaf coordinate
      qv[k] = qd[0];
    }
    double A1 = 0, A2 = 0, A3 = 0;
    double int_h_total = trapezoid(xe.t, hv, 0, xe.size() - 1);
    double int_q_total = trapezoid(xe.t, qv, 0, xe.size() - 1);
    for (long n = 0; n < part.N; ++n) {
      double bstart = part.Delta * static_cast<double>(n);
      double bend = part.Delta * static_cast<double>(n + 1);
      std::size_t k0 = n == 0 ? 0 : xe.locate(bstart);
      std::size_t k1 = xe.locate(bend);
      double int_h_block = trapezoid(xe.t, hv, k0, k1);
      // leaf-frozen restart from Xe at the block start, same fast jumps;
      // bend - bstart is exact (Sterbenz), so the restart window closes
      // float-exactly on the block boundary
      marcus::PathGrid xh = marcus::integrate_unperturbed(
          sys, z, xe.state(k0), bstart, bend - bstart, mesh_dt, tol, nullptr);
      std::vector<double> hh(xh.size());
      for (std::size_t k = 0; k < xh.size(); ++k) hh[k] = prob.h(xh.state(k));
      double int_h_hat = trapezoid(xh.t, hh, 0, xh.size() - 1);
      sys.pi(xe.state(k0), va);
      double qd[8];
      prob.Q(va, qd);
      A1 += int_h_block - int_h_hat;
      A2 += int_h_hat - part.Delta * qd[0];
      A3 += part.Delta * qd[0];
    }
    A3 -= int_q_total;
    A1 *= eps;
    A2 *= eps;
    A3 *= eps;
    double delta_h = eps * (int_h_total - int_q_total);
    a1s[i] = std::abs(A1);
    a2s[i] = std::abs(A2);
    a3s[i] = std::abs(A3);
    slack[i] = std::abs(delta_h) - (a1s[i] + a2s[i] + a3s[i]);
  });

  MeanVar mv = mean_se(supp);
  ErrorRow row;
  row.epsilon = eps;
  row.p = p;
  row.lambda = lambda;
  row.c = c;
  row.T = T;
  row.error_lp = std::pow(mv.mean, 1.0 / p);
  row.stderr_ = mv.mean > 0
                    ? mv.se * std::pow(mv.mean, 1.0 / p - 1.0) / p
                    : 0.0;
  MeanVar m1 = mean_se(a1s), m2 = mean_se(a2s), m3 = mean_se(a3s);
  row.a1 = m1.mean;
  row.a2 = m2.mean;
  row.a3 = m3.mean;
  row.replicas = replicas;
  row.seed = seed;
  row.triangle_slack_max = *std::max_element(slack.begin(), slack.end());

  // ergodic rate at the block scale, from an independent sub-seed
  if (eta_replicas <= 0) eta_replicas = replicas;
  const double t_scale = c * T * (-std::log(eps));
  double va[8], qd[8];
  sys.pi(x0, va);
  prob.Q(va, qd); // the limit of the window average from x0
  std::vector<EtaRow> eta = estimate_eta(prob, prob.h, qd[0], x0, {t_scale}, p,
                                         eta_replicas, mesh_dt, tol, seed + 1,
                                         workers);
  row.eta_at_scale = eta.front().lp_dev;
  return row;
}

SlopeFit fit_loglog_slope(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit: need matching vectors of length >= 2");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0))
      throw std::invalid_argument("fit: log-log fit needs positive data");
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  SlopeFit f;
  double den = n * sxx - sx * sx;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_tot = syy - sy * sy / n;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double r = std::log(y[i]) - (f.intercept + f.slope * std::log(x[i]));
    ss_res += r * r;
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

std::vector<double> isotonic_non_increasing(const std::vector<double>& y,
                                            const std::vector<double>& w) {
  // pool adjacent violators on the negated sequence (non-decreasing fit)
  const std::size_t n = y.size();
  if (w.size() != n) throw std::invalid_argument("isotonic: length mismatch");
  std::vector<double> level, weight;
  std::vector<std::size_t> count;
  for (std::size_t i = 0; i < n; ++i) {
    double lv = -y[i], wt = w[i];
    std::size_t ct = 1;
    while (!level.empty() && level.back() > lv) {
      lv = (level.back() * weight.back() + lv * wt) / (weight.back() + wt);
      wt += weight.back();
      ct += count.back();
      level.pop_back();
      weight.pop_back();
      count.pop_back();
    }
    level.push_back(lv);
    weight.push_back(wt);
    count.push_back(ct);
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < level.size(); ++b)
    for (std::size_t k = 0; k < count[b]; ++k) out.push_back(-level[b]);
  return out;
}

} // namespace fm::averaging
