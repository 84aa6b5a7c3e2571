// Python bindings for the main operations: Levy measure construction and
// sampling, jump flows, the circle example, the ergodic-deviation table and
// the averaging error sweep.  Thin wrappers only; all numerics live in the
// C++ core.

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fm/averaging.hpp"
#include "fm/circle.hpp"
#include "fm/flow.hpp"
#include "fm/harness.hpp"
#include "fm/levy.hpp"
#include "fm/marcus.hpp"

#include <array>
#include <complex>
#include <memory>
#include <stdexcept>

namespace py = pybind11;
using namespace fm;

namespace {

levy::LevyMeasure measure_from_dict(const py::dict& d) {
  std::string kind = py::cast<std::string>(d["kind"]);
  if (kind == "atoms") {
    std::vector<levy::Atom> atoms;
    for (auto item : py::cast<py::list>(d["atoms"])) {
      auto pair = py::cast<py::tuple>(item);
      levy::Atom a;
      a.mass = py::cast<double>(pair[0]);
      a.z = py::cast<std::vector<double>>(pair[1]);
      atoms.push_back(std::move(a));
    }
    return levy::LevyMeasure::discrete(std::move(atoms));
  }
  if (kind == "truncated_stable")
    return levy::LevyMeasure::truncated_stable(py::cast<double>(d["alpha"]),
                                               py::cast<double>(d["scale"]),
                                               py::cast<double>(d["delta_inner"]));
  throw std::invalid_argument("measure kind must be atoms or truncated_stable");
}

circle::CircleConfig config_from_dict(const py::dict& d) {
  circle::CircleConfig cfg;
  std::string pert = py::cast<std::string>(d["perturbation"]);
  if (pert == "linear") {
    cfg.pert = circle::Perturbation::linear;
    auto A = py::cast<std::vector<double>>(d["A"]);
    if (A.size() != 4) throw std::invalid_argument("A: need 4 entries");
    std::copy(A.begin(), A.end(), cfg.A.begin());
  } else if (pert == "constant") {
    cfg.pert = circle::Perturbation::constant;
    auto K = py::cast<std::vector<double>>(d["K"]);
    if (K.size() != 2) throw std::invalid_argument("K: need 2 entries");
    std::copy(K.begin(), K.end(), cfg.kvec.begin());
  } else {
    throw std::invalid_argument("perturbation must be linear or constant");
  }
  if (d.contains("x0")) {
    auto x0 = py::cast<std::vector<double>>(d["x0"]);
    if (x0.size() != 2) throw std::invalid_argument("x0: need 2 entries");
    std::copy(x0.begin(), x0.end(), cfg.x0.begin());
  }
  cfg.delta = py::cast<double>(d["delta"]);
  cfg.nu = measure_from_dict(py::cast<py::dict>(d["nu"]));
  std::string slow =
      d.contains("slow") ? py::cast<std::string>(d["slow"]) : "none";
  if (slow != "none") {
    cfg.nu_tilde = measure_from_dict(py::cast<py::dict>(d["nu_tilde"]));
    if (slow == "planar") {
      cfg.slow_kind = circle::SlowKind::planar;
      if (d.contains("slow_amplitude"))
        cfg.slow_amplitude = py::cast<double>(d["slow_amplitude"]);
    } else if (slow == "radial_additive" || slow == "radial_linear") {
      cfg.slow_kind = slow == "radial_additive"
                          ? circle::SlowKind::radial_additive
                          : circle::SlowKind::radial_linear;
      auto rho = py::cast<std::vector<double>>(d["rho"]);
      if (rho.size() != static_cast<std::size_t>(cfg.nu_tilde.dim) ||
          rho.size() > 2)
        throw std::invalid_argument("rho: one entry per nu_tilde dimension");
      std::copy(rho.begin(), rho.end(), cfg.rho.begin());
    } else {
      throw std::invalid_argument(
          "slow must be none, planar, radial_additive or radial_linear");
    }
  }
  return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Marcus-type jump SDEs on foliated spaces: core operations";

  py::register_exception<levy::DivergentMomentError>(m, "DivergentMomentError");

  m.def(
      "measure_moment",
      [](const py::dict& nu, double p, const std::string& region) {
        levy::Region r;
        if (region == "inner")
          r = levy::Region::inner;
        else if (region == "outer")
          r = levy::Region::outer;
        else if (region == "all")
          r = levy::Region::all;
        else
          throw std::invalid_argument("region must be inner, outer or all");
        return levy::moment(measure_from_dict(nu), p, r);
      },
      py::arg("nu"), py::arg("p"), py::arg("region") = "all",
      "p-th absolute moment over |z| <= 1 (inner), |z| > 1 (outer) or all");

  m.def(
      "characteristic_exponent",
      [](const py::dict& nu, double xi) {
        auto v = levy::characteristic_exponent(measure_from_dict(nu), xi);
        return std::complex<double>(v.real(), v.imag());
      },
      py::arg("nu"), py::arg("xi"),
      "log E e^{i xi Z_1} for the compensated 1-d driver");

  m.def(
      "sample_jump_path",
      [](const py::dict& nu, double delta, double T, std::uint64_t seed,
         std::uint64_t replica, std::uint32_t role) {
        rng::RngStream stream(seed, replica, role);
        levy::JumpPath p = levy::sample_jump_path(measure_from_dict(nu), T,
                                                  delta, stream);
        py::dict out;
        out["times"] = p.times;
        py::list jumps;
        for (const auto& z : p.jumps) jumps.append(z);
        out["jumps"] = jumps;
        out["drift"] = p.drift;
        out["T"] = p.T;
        return out;
      },
      py::arg("nu"), py::arg("delta"), py::arg("T"), py::arg("seed"),
      py::arg("replica") = 0, py::arg("role") = 0,
      "Poisson jump skeleton above delta plus the compensator drift");

  m.def(
      "jump_flow",
      [](const std::vector<double>& A, const std::vector<double>& x, double z,
         double tol) {
        if (A.size() != x.size() * x.size())
          throw std::invalid_argument("A must be m x m row-major");
        auto field = flow::linear_field(static_cast<int>(x.size()), A);
        std::vector<double> out(x.size());
        flow::jump_flow(field, &z, x.data(), out.data(), tol);
        return out;
      },
      py::arg("A"), py::arg("x"), py::arg("z"), py::arg("tol") = 1e-12,
      "time-1 flow of the field A x scaled by the jump z");

  m.def(
      "exact_fast_path",
      [](const py::dict& cfg, double T, double mesh_dt, std::uint64_t seed,
         std::uint64_t replica) {
        auto cc = config_from_dict(cfg);
        rng::RngStream stream(seed, replica, 0);
        levy::JumpPath zp =
            levy::sample_jump_path(cc.nu, T, cc.delta, stream);
        circle::ExactCirclePath p =
            circle::exact_fast_path(cc, zp, mesh_dt);
        py::dict out;
        out["t"] = p.t;
        out["theta"] = p.theta;
        out["r0"] = p.r0;
        out["theta0"] = p.theta0;
        return out;
      },
      py::arg("config"), py::arg("T"), py::arg("mesh_dt"), py::arg("seed"),
      py::arg("replica") = 0,
      "closed-form rotation path of the unperturbed circle system");

  m.def(
      "averaged_solution",
      [](const py::dict& cfg, double t, double r0) {
        return circle::averaged_solution(config_from_dict(cfg), t, r0);
      },
      py::arg("config"), py::arg("t"), py::arg("r0"));

  m.def(
      "analytic_eta_bounds",
      [](const py::dict& cfg, double p, const std::vector<double>& t_grid,
         double r0, double theta0) {
        return circle::analytic_eta_bounds(config_from_dict(cfg), p, t_grid,
                                           r0, theta0);
      },
      py::arg("config"), py::arg("p"), py::arg("t_grid"), py::arg("r0"),
      py::arg("theta0"));

  m.def(
      "estimate_eta",
      [](const py::dict& cfg, const std::vector<double>& t_grid, double p,
         int replicas, double mesh_dt, double tol, std::uint64_t seed,
         int workers) {
        auto cc = config_from_dict(cfg);
        circle::CircleSystem sys = circle::make_circle(cc);
        double r0 = std::hypot(cc.x0[0], cc.x0[1]);
        double q = circle::analytic_Q(cc, r0);
        auto rows = averaging::estimate_eta(sys.prob, sys.prob.h, q,
                                            cc.x0.data(), t_grid, p, replicas,
                                            mesh_dt, tol, seed, workers);
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["t"] = r.t;
          d["lp_dev"] = r.lp_dev;
          d["lp_se"] = r.lp_se;
          d["mean_dev"] = r.mean_dev;
          d["mean_se"] = r.mean_se;
          out.append(d);
        }
        return out;
      },
      py::arg("config"), py::arg("t_grid"), py::arg("p"), py::arg("replicas"),
      py::arg("mesh_dt") = 0.01, py::arg("tol") = 1e-10, py::arg("seed") = 1,
      py::arg("workers") = 1,
      "Monte Carlo table of the ergodic deviation eta(t)");

  m.def(
      "averaging_error",
      [](const py::dict& cfg, double eps, double T, double p, double lambda,
         double c, int replicas, double mesh_dt, double tol,
         std::uint64_t seed, int workers) {
        auto cc = config_from_dict(cfg);
        circle::CircleSystem sys = circle::make_circle(cc);
        averaging::ErrorRow r = averaging::averaging_error(
            sys.prob, cc.x0.data(), eps, T, p, lambda, c, replicas, mesh_dt,
            tol, seed, workers);
        py::dict d;
        d["epsilon"] = r.epsilon;
        d["error_lp"] = r.error_lp;
        d["stderr"] = r.stderr_;
        d["eta_at_scale"] = r.eta_at_scale;
        d["a1"] = r.a1;
        d["a2"] = r.a2;
        d["a3"] = r.a3;
        d["triangle_slack_max"] = r.triangle_slack_max;
        return d;
      },
      py::arg("config"), py::arg("eps"), py::arg("T"), py::arg("p"),
      py::arg("lambda"), py::arg("c"), py::arg("replicas"),
      py::arg("mesh_dt") = 0.01, py::arg("tol") = 1e-10, py::arg("seed") = 1,
      py::arg("workers") = 1,
      "one row of the averaging-error sweep at a fixed epsilon");

  m.def("config_hash", &harness::config_hash, py::arg("text"),
        "FNV-1a hash of a config file's bytes, as in diagnostics.json");
}
