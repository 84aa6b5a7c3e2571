#include "fm/averaging.hpp"

#include "fm/circle.hpp"

#include "doctest.h"

#include <cmath>
#include <vector>

using namespace fm;

namespace {

circle::CircleConfig base_config() {
  circle::CircleConfig cfg;
  cfg.A = {0.0, 0.0, 0.0, 2.0}; // a=0, b=0, c=0, d=2
  cfg.pert = circle::Perturbation::linear;
  cfg.x0 = {0.0, 1.0}; // circle_angle = atan2(0,1) = 0
  cfg.nu = levy::LevyMeasure::discrete({{1.0, {1.0}}});
  cfg.delta = 0.5;
  return cfg;
}

} // namespace

TEST_CASE("partition arithmetic") {
  // c=0.5, T=1, eps=0.1: Delta = 0.5 ln 10, N = floor(1/(0.05 ln 10)) + 1 = 9
  auto p1 = averaging::make_partition(0.5, 1.0, 0.1);
  CHECK(p1.Delta == doctest::Approx(0.5 * std::log(10.0)).epsilon(1e-15));
  CHECK(p1.N == 9);
  // c=1, T=1, eps=e^{-1}: Delta = 1, N = floor(e) + 1 = 3
  auto p2 = averaging::make_partition(1.0, 1.0, std::exp(-1.0));
  CHECK(p2.Delta == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p2.N == 3);
  // the blocks always cover the accelerated horizon
  for (double eps : {0.3, 0.1, 0.03, 0.01}) {
    auto p = averaging::make_partition(0.7, 0.8, eps);
    CHECK(p.Delta * static_cast<double>(p.N) > 0.8 / eps);
  }
  CHECK_THROWS_AS((void)averaging::make_partition(0.5, 1.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)averaging::make_partition(-0.5, 1.0, 0.1),
                  std::invalid_argument);
}

TEST_CASE("averaged drift estimator finds (a+d) r / 2 on the circle") {
  auto cfg = base_config();
  auto cs = circle::make_circle(cfg);
  auto est = averaging::averaged_drift_mc(cs.prob, cs.prob.h, cfg.x0.data(),
                                          5.0, 60.0, 48, 0.02, 1e-10, 404, 1);
  // Q = (0+2)/2 * 1 = 1; the long-window average has O(1/t) bias and
  // O(1/sqrt(t)) fluctuation, so 48 windows of length 60 resolve it well
  CHECK(est.value == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(est.value - 1.0) < 4.0 * est.se + 0.02);
}

TEST_CASE("integrate_averaged reproduces exponential growth") {
  auto Q = [](const double* v, double* out) { out[0] = v[0]; };
  flow::VectorField none;
  levy::JumpPath zt;
  zt.T = 0.6;
  zt.dim = 1;
  zt.drift = {0.0};
  const double v0[1] = {2.0};
  auto w = averaging::integrate_averaged(Q, none, zt, v0, 1, 0.6, 0.01, 1e-12);
  CHECK(w.t.back() == 0.6);
  CHECK(w.state(w.size() - 1)[0] ==
        doctest::Approx(3.64423760078101795).epsilon(1e-10));
}

TEST_CASE("integrate_averaged applies vertical slow jumps") {
  // dw = 0 dt, jumps translate w by the jump value
  auto Q = [](const double*, double* out) { out[0] = 0.0; };
  auto kv = flow::constant_field(1, 1, {1.0});
  levy::JumpPath zt;
  zt.T = 1.0;
  zt.dim = 1;
  zt.times = {0.25, 0.75};
  zt.jumps = {{0.5}, {-0.2}};
  zt.drift = {0.0};
  const double v0[1] = {1.0};
  auto w = averaging::integrate_averaged(Q, kv, zt, v0, 1, 1.0, 0.25, 1e-12);
  CHECK(w.state(w.locate(0.5))[0] == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(w.state(w.size() - 1)[0] == doctest::Approx(1.3).epsilon(1e-14));
}

TEST_CASE("eta table decays and matches the exact L2 deviation") {
  auto cfg = base_config();
  auto cs = circle::make_circle(cfg);
  std::vector<double> t_grid{5.0, 10.0, 20.0};
  const double q = circle::analytic_Q(cfg, 1.0); // = 1
  auto rows = averaging::estimate_eta(cs.prob, cs.prob.h, q, cfg.x0.data(),
                                      t_grid, 2.0, 400, 0.02, 1e-10, 515, 1);
  REQUIRE(rows.size() == 3);

  // frozen closed-form values for this config (atom driver, a=0, d=2,
  // theta0=0): the L2 deviation of the window average
  const double exact[3] = {0.2899160104236199, 0.2077786603592796,
                           0.1478972387487636};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].t == t_grid[i]);
    CHECK(rows[i].lp_se > 0.0);
    CHECK(std::abs(rows[i].lp_dev - exact[i]) < 3.0 * rows[i].lp_se);
    if (i > 0) CHECK(rows[i].lp_dev < rows[i - 1].lp_dev);
  }

  // the same closed forms through the public analytic routine
  auto an = circle::analytic_eta_bounds(cfg, 2.0, t_grid, 1.0, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(an[i] == doctest::Approx(exact[i]).epsilon(1e-9));
}

TEST_CASE("analytic eta values at a second configuration") {
  // a=1.5, d=0.5 has gamma = -0.5: same |gamma| as the base config scaled
  circle::CircleConfig cfg = base_config();
  cfg.A = {1.5, 0.0, 0.0, 0.5};
  std::vector<double> t_grid{2.0, 5.0, 10.0};
  auto an = circle::analytic_eta_bounds(cfg, 2.0, t_grid, 1.0, 0.0);
  CHECK(an[0] == doctest::Approx(0.2178337515590218).epsilon(1e-9));
  CHECK(an[1] == doctest::Approx(0.1449580052118099).epsilon(1e-9));
  CHECK(an[2] == doctest::Approx(0.1038893301796398).epsilon(1e-9));
}

TEST_CASE("eta bias bound holds and the signed bias matches") {
  auto cfg = base_config();
  auto cs = circle::make_circle(cfg);
  std::vector<double> t_grid{5.0, 20.0};
  const double q = 1.0;
  auto rows = averaging::estimate_eta(cs.prob, cs.prob.h, q, cfg.x0.data(),
                                      t_grid, 1.0, 600, 0.02, 1e-10, 616, 1);
  auto bound = circle::analytic_eta_bounds(cfg, 1.0, t_grid, 1.0, 0.0);
  // frozen: 0.141228292744 at t=5, 0.0353070731859 at t=20
  CHECK(bound[0] == doctest::Approx(0.141228292744).epsilon(1e-9));
  CHECK(bound[1] == doctest::Approx(0.0353070731859).epsilon(1e-9));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    // the exact signed bias sits inside the bound, and the estimate inside
    // three standard errors of the exact value
    double bias = circle::analytic_eta_bias(cfg, t_grid[i], 1.0, 0.0);
    CHECK(std::abs(bias) <= bound[i]);
    CHECK(std::abs(rows[i].mean_dev - bias) < 3.5 * rows[i].mean_se);
  }
}

TEST_CASE("degenerate perturbation has zero deviation") {
  // a = d and b = -c make radial_K constant on the leaf: gamma = 0
  circle::CircleConfig cfg = base_config();
  cfg.A = {1.0, 0.7, -0.7, 1.0};
  std::vector<double> t_grid{2.0, 8.0};
  auto an = circle::analytic_eta_bounds(cfg, 2.0, t_grid, 1.0, 0.3);
  CHECK(an[0] == doctest::Approx(0.0));
  CHECK(an[1] == doctest::Approx(0.0));
}

TEST_CASE("slope fit recovers exact power laws") {
  std::vector<double> x{0.1, 0.05, 0.02, 0.01};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 0.8));
  auto fit = averaging::fit_loglog_slope(x, y);
  CHECK(fit.slope == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS((void)averaging::fit_loglog_slope({0.1, 0.2}, {1.0, -1.0}),
                  std::invalid_argument);
}

TEST_CASE("isotonic regression projects onto non-increasing sequences") {
  std::vector<double> y{3.0, 1.0, 2.0, 0.5};
  std::vector<double> w{1.0, 1.0, 1.0, 1.0};
  auto fit = averaging::isotonic_non_increasing(y, w);
  REQUIRE(fit.size() == 4);
  // the violating pair (1, 2) pools to 1.5
  CHECK(fit[0] == doctest::Approx(3.0));
  CHECK(fit[1] == doctest::Approx(1.5));
  CHECK(fit[2] == doctest::Approx(1.5));
  CHECK(fit[3] == doctest::Approx(0.5));
  for (std::size_t i = 1; i < fit.size(); ++i) CHECK(fit[i] <= fit[i - 1]);

  // already monotone data is returned unchanged
  std::vector<double> z{4.0, 3.0, 2.0};
  auto same = averaging::isotonic_non_increasing(z, {1.0, 1.0, 1.0});
  CHECK(same[0] == 4.0);
  CHECK(same[1] == 3.0);
  CHECK(same[2] == 2.0);

  // weights tilt the pooled value toward the heavier point
  auto tilted = averaging::isotonic_non_increasing({1.0, 2.0}, {3.0, 1.0});
  CHECK(tilted[0] == doctest::Approx(1.25));
  CHECK(tilted[1] == doctest::Approx(1.25));
}

TEST_CASE("averaging error row is reproducible and internally consistent") {
  auto cfg = base_config();
  auto cs = circle::make_circle(cfg);
  const double eps = 0.1, T = 0.5, p = 2.0, lambda = 0.8, c = 0.5;
  auto row = averaging::averaging_error(cs.prob, cfg.x0.data(), eps, T, p,
                                        lambda, c, 32, 0.02, 1e-10, 99, 1, 64);
  CHECK(row.epsilon == eps);
  CHECK(row.replicas == 32);
  CHECK(row.error_lp > 0.0);
  CHECK(row.stderr_ > 0.0);
  CHECK(row.eta_at_scale > 0.0);
  CHECK(row.a1 >= 0.0);
  CHECK(row.a2 >= 0.0);
  CHECK(row.a3 >= 0.0);
  // the exact block decomposition keeps the samplewise triangle defect at
  // rounding level
  CHECK(row.triangle_slack_max <= 1e-10);

  auto again = averaging::averaging_error(cs.prob, cfg.x0.data(), eps, T, p,
                                          lambda, c, 32, 0.02, 1e-10, 99, 4,
                                          64);
  CHECK(row.error_lp == again.error_lp);
  CHECK(row.a1 == again.a1);
  CHECK(row.a2 == again.a2);
  CHECK(row.a3 == again.a3);
  CHECK(row.triangle_slack_max == again.triangle_slack_max);
}

TEST_CASE("physical coupling is rejected by the averaging functional") {
  auto cfg = base_config();
  cfg.slow_kind = circle::SlowKind::planar;
  cfg.nu_tilde = levy::LevyMeasure::discrete(
      {{0.5, {0.3, 0.0}}, {0.5, {-0.3, 0.0}}});
  auto cs = circle::make_circle(cfg);
  cs.prob.coupling = marcus::SlowCoupling::physical;
  CHECK_THROWS_AS((void)averaging::averaging_error(cs.prob, cfg.x0.data(), 0.1,
                                                   0.5, 2.0, 0.8, 0.5, 4, 0.05,
                                                   1e-10, 1, 1, 4),
                  std::invalid_argument);
}
