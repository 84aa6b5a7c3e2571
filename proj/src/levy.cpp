#include "fm/levy.hpp"

#include "fm/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fm::levy {

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void validate(const LevyMeasure& nu) {
  switch (nu.kind) {
    case LevyMeasure::Kind::discrete:
      if (nu.atoms.empty())
        throw std::invalid_argument("levy: discrete measure needs atoms");
      for (const auto& a : nu.atoms) {
        if (!(a.mass > 0))
          throw std::invalid_argument("levy: atom masses must be > 0");
        if (static_cast<int>(a.z.size()) != nu.dim)
          throw std::invalid_argument("levy: atom dimension mismatch");
        if (norm2(a.z) == 0)
          throw std::invalid_argument("levy: atoms at the origin are not jumps");
      }
      break;
    case LevyMeasure::Kind::truncated_stable:
      if (!(nu.alpha > 0 && nu.alpha < 2))
        throw std::invalid_argument("levy: alpha must lie in (0,2)");
      if (!(nu.scale > 0))
        throw std::invalid_argument("levy: scale must be > 0");
      if (!(nu.delta_inner >= 0 && nu.delta_inner < 1))
        throw std::invalid_argument("levy: delta_inner must lie in [0,1)");
      break;
    case LevyMeasure::Kind::density:
      if (!(nu.density_mass > 0) || !nu.density_sampler)
        throw std::invalid_argument("levy: density measure needs mass and sampler");
      break;
  }
}

// int_{lo < z <= hi} z^{p - 1 - alpha} dz for one side of the symmetric
// truncated-stable density (exponent arithmetic done in closed form).
double ts_one_sided_power(double alpha, double lo, double hi, double p) {
  double e = p - alpha;
  if (std::abs(e) < 1e-14) return std::log(hi / lo);
  return (std::pow(hi, e) - std::pow(lo, e)) / e;
}

} // namespace

LevyMeasure LevyMeasure::discrete(std::vector<Atom> atoms) {
  LevyMeasure nu;
  nu.kind = Kind::discrete;
  nu.dim = atoms.empty() ? 1 : static_cast<int>(atoms.front().z.size());
  nu.atoms = std::move(atoms);
  validate(nu);
  return nu;
}

LevyMeasure LevyMeasure::truncated_stable(double alpha, double scale,
                                          double delta_inner) {
  LevyMeasure nu;
  nu.kind = Kind::truncated_stable;
  nu.dim = 1;
  nu.alpha = alpha;
  nu.scale = scale;
  nu.delta_inner = delta_inner;
  validate(nu);
  return nu;
}

LevyMeasure LevyMeasure::density(
    int dim, double mass,
    std::function<std::vector<double>(rng::RngStream&)> sampler,
    std::function<double(double)> abs_moment) {
  LevyMeasure nu;
  nu.kind = Kind::density;
  nu.dim = dim;
  nu.density_mass = mass;
  nu.density_sampler = std::move(sampler);
  nu.density_abs_moment = std::move(abs_moment);
  validate(nu);
  return nu;
}

double moment(const LevyMeasure& nu, double p, Region region) {
  validate(nu);
  if (!(p >= 0)) throw std::invalid_argument("levy: moment order must be >= 0");
  switch (nu.kind) {
    case LevyMeasure::Kind::discrete: {
      double s = 0;
      for (const auto& a : nu.atoms) {
        double n = norm2(a.z);
        bool inner = n <= 1.0;
        if (region == Region::all || (region == Region::inner && inner) ||
            (region == Region::outer && !inner))
          s += a.mass * std::pow(n, p);
      }
      return s;
    }
    case LevyMeasure::Kind::truncated_stable: {
      if (region == Region::outer) return 0.0; // no mass beyond |z| = 1
      if (nu.delta_inner == 0 && p <= nu.alpha)
        throw DivergentMomentError(
            "levy: |z|^p is not integrable near 0 for p <= alpha when "
            "delta_inner = 0");
      return 2 * nu.scale *
             ts_one_sided_power(nu.alpha, nu.delta_inner, 1.0, p);
    }
    case LevyMeasure::Kind::density:
      if (!nu.density_abs_moment)
        throw std::invalid_argument("levy: density measure lacks a moment function");
      if (region != Region::all)
        throw std::invalid_argument("levy: density moments support region=all only");
      return nu.density_abs_moment(p);
  }
  return 0;
}

double mass_above(const LevyMeasure& nu, double delta) {
  validate(nu);
  if (!(delta >= 0)) throw std::invalid_argument("levy: delta must be >= 0");
  switch (nu.kind) {
    case LevyMeasure::Kind::discrete: {
      double s = 0;
      for (const auto& a : nu.atoms)
        if (norm2(a.z) > delta) s += a.mass;
      return s;
    }
    case LevyMeasure::Kind::truncated_stable: {
      double lo = std::max(delta, nu.delta_inner);
      if (lo >= 1.0) return 0.0;
      if (lo == 0)
        throw DivergentMomentError(
            "levy: infinite activity at delta = 0 (delta_inner = 0)");
      return 2 * nu.scale * ts_one_sided_power(nu.alpha, lo, 1.0, 0.0);
    }
    case LevyMeasure::Kind::density:
      if (delta > 0)
        throw std::invalid_argument(
            "levy: density measures sample at delta = 0 only");
      return nu.density_mass;
  }
  return 0;
}

double truncation_bias(const LevyMeasure& nu, double delta) {
  validate(nu);
  if (!(delta >= 0)) throw std::invalid_argument("levy: delta must be >= 0");
  switch (nu.kind) {
    case LevyMeasure::Kind::discrete: {
      double s = 0;
      for (const auto& a : nu.atoms) {
        double n = norm2(a.z);
        if (n <= delta) s += a.mass * n * n;
      }
      return s;
    }
    case LevyMeasure::Kind::truncated_stable: {
      double hi = std::min(delta, 1.0);
      if (hi <= nu.delta_inner) return 0.0;
      return 2 * nu.scale * ts_one_sided_power(nu.alpha, nu.delta_inner, hi, 2.0);
    }
    case LevyMeasure::Kind::density:
      return 0.0; // sampled untruncated
  }
  return 0;
}

std::vector<double> compensator_drift(const LevyMeasure& nu, double delta) {
  validate(nu);
  std::vector<double> b(static_cast<std::size_t>(nu.dim), 0.0);
  if (delta >= 1.0) return b;
  switch (nu.kind) {
    case LevyMeasure::Kind::discrete:
      for (const auto& a : nu.atoms) {
        double n = norm2(a.z);
        if (n > delta && n <= 1.0)
          for (int i = 0; i < nu.dim; ++i)
            b[static_cast<std::size_t>(i)] -= a.mass * a.z[static_cast<std::size_t>(i)];
      }
      return b;
    case LevyMeasure::Kind::truncated_stable:
      return b; // symmetric: exactly zero, by construction
    case LevyMeasure::Kind::density:
      return b; // density measures are required to be symmetric
  }
  return b;
}

std::complex<double> characteristic_exponent(const LevyMeasure& nu, double p) {
  validate(nu);
  if (nu.dim != 1)
    throw std::invalid_argument(
        "levy: characteristic_exponent is defined for scalar measures");
  switch (nu.kind) {
    case LevyMeasure::Kind::discrete: {
      std::complex<double> s = 0;
      for (const auto& a : nu.atoms) {
        double z = a.z[0];
        std::complex<double> term(std::cos(p * z) - 1.0, std::sin(p * z));
        if (std::abs(z) <= 1.0) term -= std::complex<double>(0.0, p * z);
        s += a.mass * term;
      }
      return s;
    }
    case LevyMeasure::Kind::truncated_stable: {
      // symmetric: the odd part cancels, leaving 2 s int (cos(pz)-1) z^{-1-a}
      // which converges near 0 even for delta_inner = 0
      double a = nu.alpha, s = nu.scale, lo = nu.delta_inner;
      auto f = [a, p](double z) {
        return (std::cos(p * z) - 1.0) * std::pow(z, -1.0 - a);
      };
      // the integrand vanishes like z^{1-a} at 0; split to help the panels
      double re = 0;
      if (lo < 1e-3) {
        // series-safe region: cos(pz)-1 ~ -p^2 z^2 / 2
        auto g = [a, p](double z) {
          double c = std::cos(p * z) - 1.0;
          return c * std::pow(z, -1.0 - a);
        };
        re += quad::integrate(g, lo, 1e-3, 1e-14, 1e-11).value;
        re += quad::integrate(f, 1e-3, 1.0, 1e-13, 1e-11).value;
      } else {
        re += quad::integrate(f, lo, 1.0, 1e-13, 1e-11).value;
      }
      return {2 * s * re, 0.0};
    }
    case LevyMeasure::Kind::density:
      throw std::invalid_argument(
          "levy: characteristic_exponent needs an explicit density");
  }
  return {};
}

JumpPath sample_jump_path(const LevyMeasure& nu, double T, double delta,
                          rng::RngStream& g) {
  validate(nu);
  if (!(T > 0)) throw std::invalid_argument("levy: horizon must be > 0");
  if (!(delta >= 0)) throw std::invalid_argument("levy: delta must be >= 0");
  JumpPath path;
  path.T = T;
  path.delta = delta;
  path.dim = nu.dim;
  path.drift = compensator_drift(nu, delta);

  double rate = mass_above(nu, delta); // throws if infinite
  std::uint64_t n = g.poisson(rate * T);
  path.times.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) path.times[i] = g.uniform(0.0, T);
  std::sort(path.times.begin(), path.times.end());
  // strictly increasing times: float collisions (probability ~ n^2 / 2^52)
  // are broken by nudging the later arrival up one ulp
  for (std::uint64_t i = 1; i < n; ++i)
    if (path.times[i] <= path.times[i - 1])
      path.times[i] = std::nextafter(path.times[i - 1], T);
  path.jumps.resize(n);

  switch (nu.kind) {
    case LevyMeasure::Kind::discrete: {
      // alias table over the atoms above the threshold
      std::vector<double> w;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < nu.atoms.size(); ++i)
        if (norm2(nu.atoms[i].z) > delta) {
          w.push_back(nu.atoms[i].mass);
          idx.push_back(i);
        }
      if (w.empty()) {
        path.times.clear();
        path.jumps.clear();
        return path;
      }
      rng::AliasTable table(w);
      for (std::uint64_t i = 0; i < n; ++i)
        path.jumps[i] = nu.atoms[idx[table.sample(g)]].z;
      break;
    }
    case LevyMeasure::Kind::truncated_stable: {
      double lo = std::max(delta, nu.delta_inner);
      // inverse CDF of the one-sided density z^{-1-a} on (lo, 1]:
      // |z| = (lo^{-a} - u (lo^{-a} - 1))^{-1/a}
      double a = nu.alpha, loa = std::pow(lo, -a);
      for (std::uint64_t i = 0; i < n; ++i) {
        double u = g.u01();
        double mag = std::pow(loa - u * (loa - 1.0), -1.0 / a);
        double sign = g.u01() < 0.5 ? -1.0 : 1.0;
        path.jumps[i] = {sign * mag};
      }
      break;
    }
    case LevyMeasure::Kind::density: {
      for (std::uint64_t i = 0; i < n; ++i) {
        path.jumps[i] = nu.density_sampler(g);
        if (static_cast<int>(path.jumps[i].size()) != nu.dim)
          throw std::invalid_argument("levy: sampler dimension mismatch");
      }
      break;
    }
  }
  return path;
}

} // namespace fm::levy
