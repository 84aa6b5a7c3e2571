#include "fm/harness.hpp"

#include "fm/circle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace fm::harness {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// shortest decimal that parses back to exactly v
std::string fmt_num(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", ch);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  return out;
}

// minimal ordered JSON emitter; keys are inserted in call order so the
// output is byte-stable
class JsonWriter {
public:
  std::string str() const { return out_; }

  void begin_obj(const char* key = nullptr) { open(key, '{'); }
  void end_obj() { close('}'); }
  void begin_arr(const char* key = nullptr) { open(key, '['); }
  void end_arr() { close(']'); }

  void field(const char* key, double v) { prefix(key); out_ += fmt_num(v); }
  void field(const char* key, long v) { prefix(key); out_ += std::to_string(v); }
  void field(const char* key, std::uint64_t v) {
    prefix(key);
    out_ += std::to_string(v);
  }
  void field(const char* key, bool v) { prefix(key); out_ += v ? "true" : "false"; }
  void field(const char* key, const std::string& v) {
    prefix(key);
    out_ += '"';
    out_ += json_escape(v);
    out_ += '"';
  }
  void elem(double v) { prefix(nullptr); out_ += fmt_num(v); }

private:
  std::string out_;
  std::vector<bool> first_{true};

  void prefix(const char* key) {
    if (!first_.back()) out_ += ',';
    first_.back() = false;
    if (key) {
      out_ += '"';
      out_ += key;
      out_ += "\":";
    }
  }
  void open(const char* key, char ch) {
    prefix(key);
    out_ += ch;
    first_.push_back(true);
  }
  void close(char ch) {
    out_ += ch;
    first_.pop_back();
  }
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double observed = 0;
  double bound = 0;
  double se = 0;
  std::string detail;
};

// ordinary least squares of y against x (used for the calibration fit of
// log gap against T, which is linear in T rather than log T)
struct LinFit {
  double slope = 0, intercept = 0;
};

LinFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LinFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

levy::LevyMeasure measure_from(const Config& c, const std::string& prefix) {
  std::string kind = c.get_str(prefix + ".kind");
  try {
    if (kind == "atoms") {
      std::vector<levy::Atom> atoms;
      for (int i = 0;; ++i) {
        std::string base = prefix + ".atom." + std::to_string(i);
        if (!c.has(base + ".mass")) break;
        levy::Atom a;
        a.mass = c.get_num(base + ".mass");
        a.z = c.get_list(base + ".z");
        atoms.push_back(std::move(a));
      }
      if (atoms.empty())
        c.fail(prefix + ".kind", "atoms kind needs " + prefix + ".atom.0.mass");
      return levy::LevyMeasure::discrete(std::move(atoms));
    }
    if (kind == "truncated_stable")
      return levy::LevyMeasure::truncated_stable(c.get_num(prefix + ".alpha"),
                                                 c.get_num(prefix + ".scale"),
                                                 c.get_num(prefix + ".delta_inner"));
  } catch (const std::invalid_argument& e) {
    c.fail(prefix + ".kind", e.what());
  }
  c.fail(prefix + ".kind", "unknown measure kind (atoms | truncated_stable)");
}

circle::CircleConfig circle_from(const Config& c) {
  circle::CircleConfig cc;
  std::string pert = c.get_str("perturbation");
  if (pert == "linear") {
    cc.pert = circle::Perturbation::linear;
    auto A = c.get_list("A");
    if (A.size() != 4) c.fail("A", "need 4 entries, row-major [[a,b],[c,d]]");
    std::copy(A.begin(), A.end(), cc.A.begin());
  } else if (pert == "constant") {
    cc.pert = circle::Perturbation::constant;
    auto K = c.get_list("K");
    if (K.size() != 2) c.fail("K", "need 2 entries");
    std::copy(K.begin(), K.end(), cc.kvec.begin());
  } else {
    c.fail("perturbation", "must be linear or constant");
  }
  auto x0 = c.get_list("x0", {1.0, 0.0});
  if (x0.size() != 2) c.fail("x0", "need 2 entries");
  std::copy(x0.begin(), x0.end(), cc.x0.begin());
  cc.delta = c.get_num("delta");
  cc.nu = measure_from(c, "nu");

  std::string slow = c.get_str("slow", "none");
  if (slow == "none") {
    cc.slow_kind = circle::SlowKind::none;
  } else if (slow == "planar") {
    cc.slow_kind = circle::SlowKind::planar;
    cc.slow_amplitude = c.get_num("slow_amplitude", 1.0);
    cc.nu_tilde = measure_from(c, "nu_tilde");
  } else if (slow == "radial_additive" || slow == "radial_linear") {
    cc.slow_kind = slow == "radial_additive" ? circle::SlowKind::radial_additive
                                             : circle::SlowKind::radial_linear;
    cc.nu_tilde = measure_from(c, "nu_tilde");
    auto rho = c.get_list("rho");
    if (rho.size() != static_cast<std::size_t>(cc.nu_tilde.dim) ||
        rho.size() > 2)
      c.fail("rho", "need one entry per nu_tilde dimension (at most 2)");
    std::copy(rho.begin(), rho.end(), cc.rho.begin());
  } else {
    c.fail("slow", "must be none, planar, radial_additive or radial_linear");
  }
  return cc;
}

std::vector<std::string> str_list(const Config& c, const std::string& key) {
  if (!c.has(key)) return {};
  std::istringstream in(c.get_str(key));
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

void require_sweep(const Config& c, const std::string& key,
                   const std::vector<double>& eps) {
  if (eps.empty()) c.fail(key, "need at least one epsilon");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0 && eps[i] < 1)) c.fail(key, "epsilons must lie in (0,1)");
    if (i > 0 && !(eps[i] < eps[i - 1]))
      c.fail(key, "epsilons must be strictly decreasing");
  }
}

struct RunState {
  const Config* cfg = nullptr;
  circle::CircleConfig ccfg;
  circle::CircleSystem csys;
  double mesh_dt = 0, tol = 0;
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<CheckResult> checks;
  // report.json fragments, already serialized
  std::string averaging_json, eta_json, gap_json;
  std::vector<averaging::ErrorRow> csv_rows;
  // diagnostics
  bool calibrated = false;
  double cal_k2 = 0, cal_c = 0;
};

void add_check(RunState& st, CheckResult r) {
  std::printf("check %-28s %s  observed=%s bound=%s se=%s  %s\n",
              r.name.c_str(), r.passed ? "PASS" : "FAIL",
              fmt_num(r.observed).c_str(), fmt_num(r.bound).c_str(),
              fmt_num(r.se).c_str(), r.detail.c_str());
  st.checks.push_back(std::move(r));
}

double calibrate_c(RunState& st, double p, double lambda) {
  const Config& c = *st.cfg;
  // fit log gap(T) ~ log k1 eps + k2 T on a T sweep, then choose the
  // partition constant c = (1 - lambda') / k2 with lambda' = (1+lambda)/2
  const std::vector<double> t_grid{0.4, 0.8, 1.2, 1.6, 2.0};
  const double eps = c.get_num("averaging.calibrate_eps", 0.1);
  const int replicas = static_cast<int>(
      c.get_int("averaging.calibrate_replicas", c.get_int("averaging.replicas")));
  std::vector<double> lg;
  lg.reserve(t_grid.size());
  for (double T : t_grid) {
    marcus::Estimate g = marcus::perturbation_gap(
        st.csys.sys, st.ccfg.nu, st.ccfg.nu_tilde, st.ccfg.delta,
        st.ccfg.x0.data(), eps, T, p, replicas, st.mesh_dt, st.tol, st.seed,
        st.workers);
    if (!(g.value > 0))
      throw ConfigError("calibration: perturbation gap vanished; the "
                        "perturbation is trivial, set c explicitly");
    lg.push_back(std::log(g.value));
  }
  LinFit fit = linear_fit(t_grid, lg);
  if (!(fit.slope > 0))
    throw ConfigError("calibration: fitted k2 <= 0, the gap does not grow "
                      "with T; set c explicitly");
  st.calibrated = true;
  st.cal_k2 = fit.slope;
  st.cal_c = (1.0 - (1.0 + lambda) / 2.0) / fit.slope;
  return st.cal_c;
}

void run_averaging(RunState& st) {
  const Config& c = *st.cfg;
  auto eps = c.get_list("averaging.epsilons");
  require_sweep(c, "averaging.epsilons", eps);
  const double p = c.get_num("averaging.p");
  const double lambda = c.get_num("averaging.lambda");
  const double T = c.get_num("averaging.T");
  const int replicas = static_cast<int>(c.get_int("averaging.replicas"));
  const int eta_replicas =
      static_cast<int>(c.get_int("averaging.eta_replicas", 0));
  double cval;
  if (c.get_str("averaging.c") == "calibrate")
    cval = calibrate_c(st, p, lambda);
  else
    cval = c.get_num("averaging.c");

  std::vector<averaging::ErrorRow> rows;
  rows.reserve(eps.size());
  for (double e : eps)
    rows.push_back(averaging::averaging_error(
        st.csys.prob, st.ccfg.x0.data(), e, T, p, lambda, cval, replicas,
        st.mesh_dt, st.tol, st.seed, st.workers, eta_replicas));

  JsonWriter jw;
  jw.begin_obj();
  jw.field("p", p);
  jw.field("lambda", lambda);
  jw.field("c", cval);
  jw.field("T", T);
  jw.begin_arr("rows");
  for (const auto& r : rows) {
    jw.begin_obj();
    jw.field("epsilon", r.epsilon);
    jw.field("error_lp", r.error_lp);
    jw.field("stderr", r.stderr_);
    jw.field("eta_at_scale", r.eta_at_scale);
    jw.field("a1", r.a1);
    jw.field("a2", r.a2);
    jw.field("a3", r.a3);
    jw.field("replicas", r.replicas);
    jw.field("seed", r.seed);
    jw.field("triangle_slack_max", r.triangle_slack_max);
    jw.end_obj();
  }
  jw.end_arr();
  if (eps.size() >= 2) {
    std::vector<double> ev(eps), errv;
    for (const auto& r : rows) errv.push_back(r.error_lp);
    bool positive = std::all_of(errv.begin(), errv.end(),
                                [](double v) { return v > 0; });
    if (positive) {
      averaging::SlopeFit f = averaging::fit_loglog_slope(ev, errv);
      jw.begin_obj("slope");
      jw.field("slope", f.slope);
      jw.field("intercept", f.intercept);
      jw.field("r2", f.r2);
      jw.end_obj();
    }
  }
  jw.end_obj();
  st.averaging_json = jw.str();
  st.csv_rows = rows;

  for (const std::string& name : str_list(c, "averaging.checks")) {
    if (name == "monotone") {
      // strictly decreasing error along the (decreasing) epsilon sweep
      CheckResult r;
      r.name = "averaging.monotone";
      r.passed = true;
      r.bound = 0;
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t i = 1; i < rows.size(); ++i) {
        double drop = rows[i - 1].error_lp - rows[i].error_lp;
        if (drop < worst) {
          worst = drop;
          r.se = std::hypot(rows[i - 1].stderr_, rows[i].stderr_);
          r.detail = "smallest drop at epsilon=" + fmt_num(rows[i].epsilon);
        }
        if (!(drop > 0)) r.passed = false;
      }
      r.observed = worst;
      add_check(st, std::move(r));
    } else if (name == "envelope") {
      // error <= C T (eps^lambda + eta_hat) with C fixed at the largest eps
      CheckResult r;
      r.name = "averaging.envelope";
      r.passed = true;
      r.bound = 1;
      const double env0 =
          T * (std::pow(rows[0].epsilon, lambda) + rows[0].eta_at_scale);
      const double C = rows[0].error_lp / env0;
      double worst = 0;
      std::string detail = "C=" + fmt_num(C) + " ratios";
      for (std::size_t i = 1; i < rows.size(); ++i) {
        double env =
            C * T * (std::pow(rows[i].epsilon, lambda) + rows[i].eta_at_scale);
        double ratio = rows[i].error_lp / env;
        detail += " " + fmt_num(ratio);
        if (ratio > worst) {
          worst = ratio;
          r.se = rows[i].stderr_ / env;
        }
        if (!(ratio <= 1.0)) r.passed = false;
      }
      r.observed = worst;
      r.detail = std::move(detail);
      if (rows.size() < 2) {
        r.passed = true;
        r.detail = "calibration point only";
      }
      add_check(st, std::move(r));
    } else if (name == "bound") {
      // absolute bound error <= eps^lambda T, allowing 3 SE of slack
      CheckResult r;
      r.name = "averaging.bound";
      r.passed = true;
      double worst = -std::numeric_limits<double>::infinity();
      for (const auto& row : rows) {
        double b = std::pow(row.epsilon, lambda) * T;
        double margin = row.error_lp - b - 3.0 * row.stderr_;
        if (margin > worst) {
          worst = margin;
          r.observed = row.error_lp;
          r.bound = b;
          r.se = row.stderr_;
          r.detail = "tightest at epsilon=" + fmt_num(row.epsilon) +
                     " (3 SE allowance)";
        }
        if (!(margin <= 0)) r.passed = false;
      }
      add_check(st, std::move(r));
    } else {
      c.fail("averaging.checks", "unknown check '" + name +
                                     "' (monotone | envelope | bound)");
    }
  }
}

void run_eta(RunState& st) {
  const Config& c = *st.cfg;
  auto t_grid = c.get_list("eta.t_grid");
  const double p = c.get_num("eta.p");
  const int replicas = static_cast<int>(c.get_int("eta.replicas"));

  const double r0 = std::hypot(st.ccfg.x0[0], st.ccfg.x0[1]);
  const double theta0 = circle::circle_angle(st.ccfg.x0.data());
  const double q = circle::analytic_Q(st.ccfg, r0);

  std::vector<averaging::EtaRow> rows = averaging::estimate_eta(
      st.csys.prob, st.csys.prob.h, q, st.ccfg.x0.data(), t_grid, p, replicas,
      st.mesh_dt, st.tol, st.seed, st.workers);

  // closed-form column when one exists for this p
  std::vector<double> analytic;
  bool have_analytic = false;
  if (p == 1.0 || p == 2.0) {
    try {
      analytic = circle::analytic_eta_bounds(st.ccfg, p, t_grid, r0, theta0);
      have_analytic = true;
    } catch (const std::domain_error&) {
      // degenerate driver: no closed form, table stays empirical
    }
  }

  JsonWriter jw;
  jw.begin_obj();
  jw.field("p", p);
  jw.field("q", q);
  jw.begin_arr("rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    jw.begin_obj();
    jw.field("t", rows[i].t);
    jw.field("lp_dev", rows[i].lp_dev);
    jw.field("lp_se", rows[i].lp_se);
    jw.field("mean_dev", rows[i].mean_dev);
    jw.field("mean_se", rows[i].mean_se);
    if (have_analytic)
      jw.field(p == 1.0 ? "bias_bound" : "analytic_l2", analytic[i]);
    jw.end_obj();
  }
  jw.end_arr();
  if (rows.size() >= 2) {
    std::vector<double> lp;
    for (const auto& r : rows) lp.push_back(r.lp_dev);
    if (std::all_of(lp.begin(), lp.end(), [](double v) { return v > 0; })) {
      averaging::SlopeFit f = averaging::fit_loglog_slope(t_grid, lp);
      jw.begin_obj("slope");
      jw.field("slope", f.slope);
      jw.field("intercept", f.intercept);
      jw.field("r2", f.r2);
      jw.end_obj();
    }
  }
  jw.end_obj();
  st.eta_json = jw.str();

  for (const std::string& name : str_list(c, "eta.checks")) {
    if (name == "slope") {
      std::vector<double> lp;
      for (const auto& r : rows) lp.push_back(r.lp_dev);
      averaging::SlopeFit f = averaging::fit_loglog_slope(t_grid, lp);
      CheckResult r;
      r.name = "eta.slope";
      r.observed = f.slope;
      r.bound = -0.5;
      r.se = 0.1;
      r.passed = std::abs(f.slope + 0.5) <= 0.1;
      r.detail = "target -0.5 within 0.1, r2=" + fmt_num(f.r2);
      add_check(st, std::move(r));
    } else if (name == "p2_analytic") {
      if (p != 2.0) c.fail("eta.checks", "p2_analytic needs eta.p = 2");
      if (!have_analytic)
        c.fail("eta.checks", "p2_analytic: no closed form for this driver");
      CheckResult r;
      r.name = "eta.p2_analytic";
      r.passed = true;
      double worst = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double dev = std::abs(rows[i].lp_dev - analytic[i]);
        if (rows[i].lp_se <= 0) continue;
        double sig = dev / rows[i].lp_se;
        if (sig > worst) {
          worst = sig;
          r.observed = rows[i].lp_dev;
          r.bound = analytic[i];
          r.se = rows[i].lp_se;
          r.detail = "worst at t=" + fmt_num(rows[i].t) + " (" + fmt_num(sig) +
                     " SE, limit 3)";
        }
        if (!(sig <= 3.0)) r.passed = false;
      }
      add_check(st, std::move(r));
    } else if (name == "p1_bound") {
      if (p != 1.0) c.fail("eta.checks", "p1_bound needs eta.p = 1");
      if (!have_analytic)
        c.fail("eta.checks", "p1_bound: no closed form for this driver");
      // the closed form bounds the bias |E avg - q|; allow 3 SE on the mean
      CheckResult r;
      r.name = "eta.p1_bound";
      r.passed = true;
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double margin =
            std::abs(rows[i].mean_dev) - analytic[i] - 3.0 * rows[i].mean_se;
        if (margin > worst) {
          worst = margin;
          r.observed = std::abs(rows[i].mean_dev);
          r.bound = analytic[i];
          r.se = rows[i].mean_se;
          r.detail = "tightest at t=" + fmt_num(rows[i].t) +
                     " (3 SE allowance)";
        }
        if (!(margin <= 0)) r.passed = false;
      }
      add_check(st, std::move(r));
    } else if (name == "monotone_envelope") {
      // the isotonic (non-increasing) fit must sit within 2 SE of each point
      std::vector<double> lp, w;
      for (const auto& r : rows) {
        lp.push_back(r.lp_dev);
        w.push_back(r.lp_se > 0 ? 1.0 / (r.lp_se * r.lp_se) : 1.0);
      }
      std::vector<double> fit = averaging::isotonic_non_increasing(lp, w);
      CheckResult r;
      r.name = "eta.monotone_envelope";
      r.passed = true;
      double worst = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].lp_se <= 0) continue;
        double sig = std::abs(fit[i] - lp[i]) / rows[i].lp_se;
        if (sig > worst) {
          worst = sig;
          r.observed = lp[i];
          r.bound = fit[i];
          r.se = rows[i].lp_se;
          r.detail = "worst at t=" + fmt_num(rows[i].t) + " (" + fmt_num(sig) +
                     " SE, limit 2)";
        }
        if (!(sig <= 2.0)) r.passed = false;
      }
      add_check(st, std::move(r));
    } else {
      c.fail("eta.checks",
             "unknown check '" + name +
                 "' (slope | p2_analytic | p1_bound | monotone_envelope)");
    }
  }
}

void run_gap(RunState& st) {
  const Config& c = *st.cfg;
  auto eps = c.get_list("gap.epsilons");
  require_sweep(c, "gap.epsilons", eps);
  const double p = c.get_num("gap.p");
  const double T = c.get_num("gap.T");
  const int replicas = static_cast<int>(c.get_int("gap.replicas"));

  std::vector<marcus::Estimate> rows;
  rows.reserve(eps.size());
  for (double e : eps)
    rows.push_back(marcus::perturbation_gap(
        st.csys.sys, st.ccfg.nu, st.ccfg.nu_tilde, st.ccfg.delta,
        st.ccfg.x0.data(), e, T, p, replicas, st.mesh_dt, st.tol, st.seed,
        st.workers));

  JsonWriter jw;
  jw.begin_obj();
  jw.field("p", p);
  jw.field("T", T);
  jw.begin_arr("rows");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    jw.begin_obj();
    jw.field("epsilon", eps[i]);
    jw.field("value", rows[i].value);
    jw.field("se", rows[i].se);
    jw.end_obj();
  }
  jw.end_arr();
  bool positive = std::all_of(rows.begin(), rows.end(),
                              [](const marcus::Estimate& e) { return e.value > 0; });
  averaging::SlopeFit fit;
  bool have_fit = false;
  if (eps.size() >= 2 && positive) {
    std::vector<double> vals;
    for (const auto& r : rows) vals.push_back(r.value);
    fit = averaging::fit_loglog_slope(eps, vals);
    have_fit = true;
    jw.begin_obj("slope");
    jw.field("slope", fit.slope);
    jw.field("intercept", fit.intercept);
    jw.field("r2", fit.r2);
    jw.end_obj();
  }
  jw.end_obj();
  st.gap_json = jw.str();

  for (const std::string& name : str_list(c, "gap.checks")) {
    if (name == "slope") {
      CheckResult r;
      r.name = "gap.slope";
      r.bound = 1.0;
      r.se = 0.1;
      if (!have_fit) {
        r.passed = false;
        r.detail = "no log-log fit (need >= 2 positive estimates)";
      } else {
        r.observed = fit.slope;
        r.passed = std::abs(fit.slope - 1.0) <= 0.1;
        r.detail = "target 1.0 within 0.1, r2=" + fmt_num(fit.r2);
      }
      add_check(st, std::move(r));
    } else {
      c.fail("gap.checks", "unknown check '" + name + "' (slope)");
    }
  }
}

} // namespace

// a key counts as used only when a getter accepted its value, so a key that
// failed to parse still shows up in unused_keys()
static const std::string& raw_get(const Config& c, const std::string& key) {
  auto it = c.kv.find(key);
  if (it == c.kv.end())
    throw ConfigError(c.path + ": missing required key '" + key + "'");
  return it->second.first;
}

std::string Config::get_str(const std::string& key) const {
  const std::string& v = raw_get(*this, key);
  used.insert(key);
  return v;
}

std::string Config::get_str(const std::string& key,
                            const std::string& dflt) const {
  return has(key) ? get_str(key) : dflt;
}

double Config::get_num(const std::string& key) const {
  const std::string& v = raw_get(*this, key);
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) fail(key, "not a number: '" + v + "'");
  used.insert(key);
  return x;
}

double Config::get_num(const std::string& key, double dflt) const {
  return has(key) ? get_num(key) : dflt;
}

long Config::get_int(const std::string& key) const {
  const std::string& v = raw_get(*this, key);
  char* end = nullptr;
  long x = std::strtol(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size()) fail(key, "not an integer: '" + v + "'");
  used.insert(key);
  return x;
}

long Config::get_int(const std::string& key, long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::istringstream in(raw_get(*this, key));
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    double x = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
      fail(key, "not a number in list: '" + tok + "'");
    out.push_back(x);
  }
  if (out.empty()) fail(key, "empty list");
  used.insert(key);
  return out;
}

std::vector<double> Config::get_list(const std::string& key,
                                     std::vector<double> dflt) const {
  return has(key) ? get_list(key) : dflt;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kv)
    if (used.count(k) == 0) out.push_back(k);
  return out;
}

void Config::fail(const std::string& key, const std::string& msg) const {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(path + ": key '" + key + "': " + msg);
  throw ConfigError(path + ":" + std::to_string(it->second.second) + ": key '" +
                    key + "': " + msg);
}

Config parse_config_text(const std::string& text, const std::string& path) {
  Config cfg;
  cfg.path = path;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (key.find_first_not_of(
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.") !=
        std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": key '" + key + "' has characters outside [A-Za-z0-9_.]");
    if (val.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": key '" + key +
                        "' has an empty value");
    if (!cfg.kv.emplace(key, std::make_pair(val, lineno)).second)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": duplicate key '" + key + "'");
  }
  return cfg;
}

Config parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string csv_header() {
  return "epsilon,p,lambda,c,T,error_lp,stderr,eta_at_scale,a1,a2,a3,replicas,"
         "seed";
}

RunResult run(const RunOptions& opts) {
  std::ifstream in(opts.config_path, std::ios::binary);
  if (!in) throw ConfigError(opts.config_path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string raw = buf.str();
  Config cfg = parse_config_text(raw, opts.config_path);

  if (cfg.get_int("schema_version") != 1)
    cfg.fail("schema_version", "this build reads schema_version = 1");
  if (cfg.get_str("example") != "circle")
    cfg.fail("example", "only the circle example is built in");

  RunState st;
  st.cfg = &cfg;
  st.ccfg = circle_from(cfg);
  try {
    st.csys = circle::make_circle(st.ccfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(opts.config_path + ": " + e.what());
  }
  st.mesh_dt = cfg.get_num("mesh_dt", 0.01);
  st.tol = cfg.get_num("tol", 1e-10);
  // the config's seed is read even when overridden, so the override never
  // changes which keys count as used
  const auto cfg_seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  st.seed = opts.seed ? *opts.seed : cfg_seed;

  int workers = opts.workers;
  if (workers <= 0) {
    if (const char* env = std::getenv("FOLIATED_MARCUS_WORKERS"))
      workers = std::atoi(env);
  }
  if (workers <= 0)
    workers = static_cast<int>(std::thread::hardware_concurrency());
  st.workers = std::max(1, workers);

  const std::string cfg_experiment = cfg.get_str("experiment", "all");
  const std::string experiment =
      !opts.experiment.empty() ? opts.experiment : cfg_experiment;
  if (experiment != "all" && experiment != "averaging" && experiment != "eta" &&
      experiment != "gap")
    throw ConfigError("experiment must be one of eta, gap, averaging, all (got '" +
                      experiment + "')");

  const bool want_avg = experiment == "averaging" ||
                        (experiment == "all" && cfg.has("averaging.epsilons"));
  const bool want_eta =
      experiment == "eta" || (experiment == "all" && cfg.has("eta.t_grid"));
  const bool want_gap =
      experiment == "gap" || (experiment == "all" && cfg.has("gap.epsilons"));
  if (!want_avg && !want_eta && !want_gap)
    throw ConfigError(opts.config_path +
                      ": no experiment blocks present (averaging.epsilons, "
                      "eta.t_grid or gap.epsilons)");

  if (want_avg) run_averaging(st);
  if (want_eta) run_eta(st);
  if (want_gap) run_gap(st);

  // reject typo'd keys: everything legitimate has been read by now
  if (experiment == "all") {
    auto leftover = cfg.unused_keys();
    if (!leftover.empty()) {
      std::string msg = opts.config_path + ": unknown key(s):";
      for (const auto& k : leftover)
        msg += " '" + k + "' (line " + std::to_string(cfg.kv.at(k).second) + ")";
      throw ConfigError(msg);
    }
  }

  bool all_passed = std::all_of(st.checks.begin(), st.checks.end(),
                                [](const CheckResult& r) { return r.passed; });

  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir);
  RunResult res;
  res.exit_code = all_passed ? 0 : 1;
  res.csv_path = (fs::path(opts.out_dir) / "report.csv").string();
  res.report_path = (fs::path(opts.out_dir) / "report.json").string();
  res.diagnostics_path = (fs::path(opts.out_dir) / "diagnostics.json").string();

  {
    std::ofstream out(res.csv_path, std::ios::binary);
    out << csv_header() << "\n";
    for (const auto& r : st.csv_rows) {
      out << fmt_num(r.epsilon) << ',' << fmt_num(r.p) << ','
          << fmt_num(r.lambda) << ',' << fmt_num(r.c) << ',' << fmt_num(r.T)
          << ',' << fmt_num(r.error_lp) << ',' << fmt_num(r.stderr_) << ','
          << fmt_num(r.eta_at_scale) << ',' << fmt_num(r.a1) << ','
          << fmt_num(r.a2) << ',' << fmt_num(r.a3) << ',' << r.replicas << ','
          << r.seed << "\n";
    }
  }
  {
    JsonWriter jw;
    jw.begin_obj();
    jw.field("schema_version", static_cast<long>(1));
    jw.field("example", std::string("circle"));
    jw.end_obj();
    std::string head = jw.str();
    head.pop_back(); // reopen the object to splice pre-serialized sections
    std::string body = head;
    if (!st.averaging_json.empty()) body += ",\"averaging\":" + st.averaging_json;
    if (!st.eta_json.empty()) body += ",\"eta\":" + st.eta_json;
    if (!st.gap_json.empty()) body += ",\"gap\":" + st.gap_json;
    JsonWriter jc;
    jc.begin_arr();
    for (const auto& r : st.checks) {
      jc.begin_obj();
      jc.field("name", r.name);
      jc.field("passed", r.passed);
      jc.field("observed", r.observed);
      jc.field("bound", r.bound);
      jc.field("se", r.se);
      jc.field("detail", r.detail);
      jc.end_obj();
    }
    jc.end_arr();
    body += ",\"checks\":" + jc.str();
    body += ",\"passed\":";
    body += all_passed ? "true" : "false";
    body += "}";
    std::ofstream out(res.report_path, std::ios::binary);
    out << body << "\n";
  }
  {
    JsonWriter jw;
    jw.begin_obj();
    jw.field("schema_version", static_cast<long>(1));
    jw.field("config_hash", config_hash(raw));
    jw.field("build", std::string("gcc ") + __VERSION__);
    jw.field("rng", std::string("philox4x32-10"));
    jw.field("mesh_dt", st.mesh_dt);
    jw.field("tol", st.tol);
    jw.field("delta", st.ccfg.delta);
    jw.begin_obj("truncation_bias");
    jw.field("nu", levy::truncation_bias(st.ccfg.nu, st.ccfg.delta));
    if (st.ccfg.slow_kind != circle::SlowKind::none)
      jw.field("nu_tilde",
               levy::truncation_bias(st.ccfg.nu_tilde, st.ccfg.delta));
    jw.end_obj();
    if (st.calibrated) {
      jw.begin_obj("calibration");
      jw.field("k2", st.cal_k2);
      jw.field("c", st.cal_c);
      jw.end_obj();
    }
    jw.end_obj();
    std::ofstream out(res.diagnostics_path, std::ios::binary);
    out << jw.str() << "\n";
  }
  return res;
}

} // namespace fm::harness
