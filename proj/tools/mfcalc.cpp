#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfcalc/error.hpp"
#include "mfcalc/lions.hpp"
#include "mfcalc/parallel.hpp"
#include "mfcalc/pde.hpp"
#include "mfcalc/report.hpp"
#include "mfcalc/rng.hpp"
#include "mfcalc/scenario.hpp"
#include "mfcalc/tangents.hpp"
#include "mfcalc/value.hpp"

using nlohmann::json;
using namespace mfcalc;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n, k, m;
  unsigned threads = 0;
  std::string out;
  double tol_scale = 1.0;
};

struct Context {
  Scenario s;
  SimConfig cfg;
  std::size_t M = 0;
  double tol_scale = 1.0;

  EmpiricalMeasure init() const { return s.init.materialize(cfg.n_particles, cfg.seed); }
  double tol(const std::string& key, double fallback) const {
    return s.tolerance(key, fallback) * tol_scale;
  }
  bool has_tol(const std::string& key) const { return s.tolerances.count(key) != 0; }
  std::vector<Probe> point_probes() const {
    std::vector<Probe> out;
    for (const auto& y : s.probes) out.push_back(Probe::at(y));
    if (out.empty()) out.push_back(Probe::at(s.x));
    return out;
  }
  std::vector<std::vector<double>> probe_points() const {
    return s.probes.empty() ? std::vector<std::vector<double>>{s.x} : s.probes;
  }
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct Outcome {
  json report = json::object();
  std::vector<Check> checks;
  std::map<std::string, Table> tables;
};

json vec(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

json estimate(const Estimate& e) { return {{"value", e.value}, {"std_error", e.std_error}}; }

std::vector<std::size_t> sample_particles(std::size_t n) {
  std::vector<std::size_t> out{0};
  if (n > 2) out.push_back(n / 2);
  if (n > 1) out.push_back(n - 1);
  return out;
}

void require_dim1(const Context& c, const char* what) {
  if (c.s.dim != 1) throw UnsupportedConfiguration(std::string(what) + " is implemented for d = 1 only");
}

// ---------------------------------------------------------------- simulate

Outcome run_simulate(const Context& c) {
  Outcome o;
  const auto init = c.init();
  const auto sys = simulate_particles(c.s.coeffs, init, c.cfg);
  const auto pilot = simulate_pilot(c.s.coeffs, c.s.x, sys, sys.pilot_stream(0));
  const std::size_t d = sys.dim(), K = sys.steps();
  const std::size_t stride = std::max<std::size_t>(1, K / 100);

  Table moments{{"step", "time"}, {}};
  for (std::size_t a = 0; a < d; ++a) {
    moments.header.push_back("mean" + std::to_string(a));
    moments.header.push_back("var" + std::to_string(a));
  }
  for (std::size_t a = 0; a < d; ++a) moments.header.push_back("pilot" + std::to_string(a));
  double sup = 0.0;
  for (std::size_t k = 0; k <= K; ++k) {
    std::vector<double> mean(d, 0.0), sq(d, 0.0);
    for (std::size_t i = 0; i < sys.size(); ++i) {
      const auto x = sys.state(k, i);
      for (std::size_t a = 0; a < d; ++a) {
        mean[a] += x[a];
        sq[a] += x[a] * x[a];
        sup = std::max(sup, std::abs(x[a]));
      }
    }
    if (k % stride != 0 && k != K) continue;
    std::vector<double> row{static_cast<double>(k), sys.time(k)};
    for (std::size_t a = 0; a < d; ++a) {
      const double m = mean[a] / static_cast<double>(sys.size());
      row.push_back(m);
      row.push_back(sq[a] / static_cast<double>(sys.size()) - m * m);
    }
    const auto p = pilot.at(k);
    row.insert(row.end(), p.begin(), p.end());
    moments.rows.push_back(std::move(row));
  }
  o.tables["moments"] = std::move(moments);
  const auto& last = o.tables["moments"].rows.back();
  o.report["final_mean"] = std::vector<double>(last.begin() + 2, last.begin() + 2 + 2 * d);
  o.report["pilot_final"] = vec(pilot.at(K));
  o.report["sup_abs_state"] = sup;
  o.report["second_moment_T"] = sys.law_at(K).second_moment();
  o.checks.push_back(gate_finite("second_moment_T", sys.law_at(K).second_moment()));
  return o;
}

// ---------------------------------------------------------------------- w2

Outcome run_w2(const Context& c) {
  Outcome o;
  const auto init = c.init();
  const auto sys = simulate_particles(c.s.coeffs, init, c.cfg);
  const std::size_t K = sys.steps();
  const auto mu0 = sys.law_at(0), muh = sys.law_at(K / 2), muT = sys.law_at(K);
  const double w0T = w2_distance(mu0, muT), w0h = w2_distance(mu0, muh), whT = w2_distance(muh, muT);
  o.report["w2_initial_final"] = w0T;
  o.report["w2_initial_half"] = w0h;
  o.report["w2_half_final"] = whT;
  o.checks.push_back(gate("triangle_excess", w0T - w0h - whT, 1e-12));

  Table t{{"step", "time", "w2_from_initial"}, {}};
  const std::size_t stride = std::max<std::size_t>(1, K / 32);
  for (std::size_t k = 0; k <= K; k += stride) {
    t.rows.push_back({static_cast<double>(k), sys.time(k), w2_distance(mu0, sys.law_at(k))});
  }
  o.tables["w2_path"] = std::move(t);

  // Regularity constants: flow stability in W2 and the Lipschitz probe.
  std::vector<double> shifted(init.samples().begin(), init.samples().end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.05 * std::cos(0.7 * static_cast<double>(i));
  const EmpiricalMeasure init2(shifted, init.dim());
  const double stab = w2_stability(c.s.coeffs, c.cfg, init, init2);
  std::vector<double> x2 = c.s.x;
  x2[0] += 0.1;
  const std::vector<LipschitzPair> pairs{{c.s.x, init, x2, init2}};
  const double lip = lipschitz_probe(c.s.coeffs, c.cfg, pairs, std::min<std::size_t>(c.M, 256));
  o.report["w2_stability"] = stab;
  o.report["lipschitz_constant"] = lip;
  o.checks.push_back(gate_finite("w2_stability", stab));
  o.checks.push_back(gate_finite("lipschitz_constant", lip));
  return o;
}

// ------------------------------------------------------------ taylor-check

Outcome run_taylor(const Context& c) {
  if (!c.s.taylor) throw ConfigError("/taylor", "taylor-check needs a 'taylor' section");
  const auto& ts = *c.s.taylor;
  const std::size_t d = c.s.dim;
  Outcome o;
  const EmpiricalMeasure base(ts.base, d);
  const auto rec = taylor_expansion_check(ts.f, PairedSample(base, EmpiricalMeasure(ts.direction, d)), ts.x);
  o.report["lhs"] = rec.lhs;
  o.report["expansion"] = rec.expansion;
  o.report["remainder"] = rec.remainder;
  o.report["bound_ratio"] = rec.bound_ratio;
  if (c.has_tol("taylor")) o.checks.push_back(gate("remainder", std::abs(rec.remainder), c.tol("taylor", 1e-12)));

  Table scaling{{"eps", "remainder", "remainder_over_eps3", "bound_ratio"}, {}};
  std::vector<double> eps_list{1e-1, 1e-2, 1e-3}, rems;
  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    const double eps = eps_list[e];
    std::vector<double> dir(ts.direction);
    for (double& v : dir) v *= eps;
    const auto r = taylor_expansion_check(ts.f, PairedSample(base, EmpiricalMeasure(dir, d)), ts.x);
    scaling.rows.push_back({eps, r.remainder, r.remainder / (eps * eps * eps), r.bound_ratio});
    rems.push_back(std::abs(r.remainder));
    o.checks.push_back(gate_finite("bound_ratio_eps_1e-" + std::to_string(e + 1), r.bound_ratio));
  }
  // Log-log slope between consecutive scales where the remainder clears the noise floor.
  double slope = 3.0;
  bool any = false;
  for (std::size_t i = 0; i + 1 < rems.size(); ++i) {
    if (rems[i] > 1e-12 && rems[i + 1] > 1e-12) {
      const double sl = std::log(rems[i] / rems[i + 1]) / std::log(eps_list[i] / eps_list[i + 1]);
      slope = any ? std::min(slope, sl) : sl;
      any = true;
    }
  }
  o.report["remainder_slope"] = any ? json(slope) : json(nullptr);
  if (any) o.checks.push_back(gate("slope_deficit", 2.7 - slope, 0.0));
  o.tables["remainder_scaling"] = std::move(scaling);

  Table ind{{"n", "count", "ratio"}, {}};
  for (std::size_t count : {64, 16, 4, 1}) {
    const double r = indicator_expansion_ratio(256, count, 1.0);
    ind.rows.push_back({256.0, static_cast<double>(count), r});
    o.checks.push_back(gate("indicator_ratio_deviation_" + std::to_string(count), std::abs(r - 1.0), 0.1));
  }
  o.tables["indicator_ratio"] = std::move(ind);
  return o;
}

// ----------------------------------------------------------- tangent-check

Outcome run_tangent(const Context& c) {
  Outcome o;
  const auto init = c.init();
  const auto sys = simulate_particles(c.s.coeffs, init, c.cfg);
  const auto pilot = simulate_pilot(c.s.coeffs, c.s.x, sys, sys.pilot_stream(0));
  const std::size_t K = sys.steps(), n = sys.size(), d = sys.dim();
  const auto t1 = integrate_first_order(c.s.coeffs, sys, pilot, per_particle_probes(sys));
  o.report["sup_dx_pilot"] = t1.sup_dx;
  o.report["sup_u_pilot"] = t1.sup_u;
  o.checks.push_back(gate_finite("sup_dx_pilot", t1.sup_dx));
  o.checks.push_back(gate_finite("sup_u_pilot", t1.sup_u));

  const NoiseSource dirs(c.cfg.seed ^ 0x5DEECE66DULL);
  Table t{{"direction", "component", "frechet", "fd", "relative"}, {}};
  double worst = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> eta(n * d);
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = dirs.normal(r, i, 0);
    const auto fr = frechet_directional(t1, sys, eta, K);
    const auto fd = fd_directional_oracle(c.s.coeffs, init, c.cfg, c.s.x, eta, 1e-4);
    for (std::size_t a = 0; a < d; ++a) {
      const double oracle = fd[K * d + a];
      const double rel = std::abs(fr[a] - oracle) / (1.0 + std::abs(oracle));
      worst = std::max(worst, rel);
      t.rows.push_back({static_cast<double>(r), static_cast<double>(a), fr[a], oracle, rel});
    }
  }
  o.tables["frechet_vs_fd"] = std::move(t);
  o.report["frechet_fd_max_relative"] = worst;
  o.checks.push_back(gate("frechet_fd_relative", worst, c.tol("tangent", 1e-2)));

  auto probes = c.point_probes();
  const auto parts = sample_particles(n);
  for (std::size_t j : parts) probes.push_back(Probe::particle(j));
  const double cons = tangent_consistency_check(c.s.coeffs, sys, probes, parts);
  o.report["tangent_consistency"] = cons;
  o.checks.push_back(gate("tangent_consistency", cons, c.tol("flow", 1e-12)));
  return o;
}

// ---------------------------------------------------------- symmetry-check

double relative_gap(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(a[i]));
  }
  return scale > 1e-12 ? diff / scale : diff;
}

Outcome run_symmetry(const Context& c) {
  Outcome o;
  const auto init = c.init();
  auto xs = c.probe_points();
  xs.push_back(c.s.x);
  double coef = 0.0;
  for (const auto& f : c.s.coeffs.sigma) coef = std::max(coef, coefficient_symmetry_check(f, init, xs));
  for (const auto& f : c.s.coeffs.drift) coef = std::max(coef, coefficient_symmetry_check(f, init, xs));
  if (c.s.phi) coef = std::max(coef, coefficient_symmetry_check(*c.s.phi, init, xs));
  o.report["coefficient_symmetry"] = coef;
  o.checks.push_back(gate("coefficient_symmetry", coef, c.tol("coef_symmetry", 1e-6)));
  if (c.s.dim != 1) {
    o.report["mixed_symmetry"] = "skipped: d > 1";
    return o;
  }

  const auto sys = simulate_particles(c.s.coeffs, init, c.cfg);
  const auto probes = c.point_probes();
  const auto sr = mixed_symmetry_check(c.s.coeffs, sys, c.s.x, probes);
  o.report["mixed_symmetry"] = {{"discrepancy", sr.discrepancy}, {"scale", sr.scale},
                                {"relative", sr.relative()}};
  o.checks.push_back(gate("mixed_symmetry_relative", sr.scale > 1e-12 ? sr.relative() : sr.discrepancy,
                          c.tol("mixed_symmetry", 2e-2)));

  if (c.s.phi) {
    const ValueQuery q{c.cfg.t_start, c.cfg.t_end, c.s.x, init, *c.s.phi, c.M};
    const auto rep = second_derivatives_V(c.s.coeffs, q, c.cfg, probes, {});
    const auto fd = fd_dx_dmu_V(c.s.coeffs, q, c.cfg, probes, 1e-3);
    std::vector<double> tangent;
    Table t{{"probe", "tangent", "fd"}, {}};
    for (std::size_t i = 0; i < probes.size(); ++i) {
      tangent.push_back(rep.dx_dmu_v[i].value);
      t.rows.push_back({static_cast<double>(i), rep.dx_dmu_v[i].value, fd[i]});
    }
    const double rel = relative_gap(tangent, fd);
    o.tables["dx_dmu_V"] = std::move(t);
    o.report["dx_dmu_V_relative"] = rel;
    o.checks.push_back(gate("dx_dmu_V_estimators_relative", rel, c.tol("mixed_symmetry", 2e-2)));
  }
  return o;
}

// ------------------------------------------------------------------- value

Outcome run_value(const Context& c) {
  if (!c.s.phi) throw ConfigError("/phi", "value needs a terminal functional");
  Outcome o;
  const auto init = c.init();
  const std::size_t d = c.s.dim;
  const ValueQuery q{c.cfg.t_start, c.cfg.t_end, c.s.x, init, *c.s.phi, c.M};
  ValueOptions opt;
  opt.probes = c.point_probes();
  const auto ys = c.probe_points();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (d == 1) {
    opt.second_order = true;
    for (std::size_t i = 0; i < ys.size(); ++i) pairs.emplace_back(i, i);
    if (ys.size() > 1) pairs.emplace_back(0, ys.size() - 1);
    opt.pairs = pairs;
  }
  const auto r = evaluate_value(c.s.coeffs, q, c.cfg, opt);

  o.report["V"] = estimate(r.v);
  o.report["dV_dt"] = estimate(r.dv_dt);
  json dx = json::array(), dmu = json::array();
  for (const auto& e : r.dv_dx) dx.push_back(estimate(e));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    json row = json::array();
    for (const auto& e : r.dmu_v[i]) row.push_back(estimate(e));
    dmu.push_back({{"y", ys[i]}, {"dmu_V", row}});
  }
  o.report["dV_dx"] = dx;
  o.report["dmu_V"] = dmu;
  double sup_second = 0.0;
  if (opt.second_order) {
    o.report["d2V_dx2"] = estimate(r.d2v_dx2);
    json sec = json::array();
    for (std::size_t i = 0; i < ys.size(); ++i) {
      sec.push_back({{"y", ys[i]}, {"dx_dmu_V", estimate(r.dx_dmu_v[i])}, {"dy_dmu_V", estimate(r.dy_dmu_v[i])}});
      sup_second = std::max({sup_second, std::abs(r.dx_dmu_v[i].value), std::abs(r.dy_dmu_v[i].value)});
    }
    json d2 = json::array();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      d2.push_back({{"pair", {pairs[p].first, pairs[p].second}}, {"d2mu_V", estimate(r.d2mu_v[p])}});
      sup_second = std::max(sup_second, std::abs(r.d2mu_v[p].value));
    }
    sup_second = std::max(sup_second, std::abs(r.d2v_dx2.value));
    o.report["second_order"] = sec;
    o.report["d2mu_V"] = d2;
    o.report["sup_second_derivative"] = sup_second;
  }

  Table tab{{"probe", "y0", "dmu_V0", "std_error"}, {}};
  for (std::size_t i = 0; i < ys.size(); ++i) {
    tab.rows.push_back({static_cast<double>(i), ys[i][0], r.dmu_v[i][0].value, r.dmu_v[i][0].std_error});
  }
  o.tables["dmu_V"] = std::move(tab);

  if (c.s.candidate) {
    const auto cf = closed_form_derivatives(*c.s.candidate, q.t, q.x, init, ys, opt.second_order ? pairs : decltype(pairs){});
    double e_dx = 0.0, e_dmu = 0.0, e_second = 0.0;
    for (std::size_t a = 0; a < d; ++a) e_dx = std::max(e_dx, std::abs(r.dv_dx[a].value - cf.dx[a]));
    for (std::size_t i = 0; i < ys.size(); ++i) {
      for (std::size_t a = 0; a < d; ++a) e_dmu = std::max(e_dmu, std::abs(r.dmu_v[i][a].value - cf.dmu[i][a]));
    }
    if (opt.second_order) {
      e_second = std::abs(r.d2v_dx2.value - cf.dxx[0]);
      for (std::size_t i = 0; i < ys.size(); ++i) {
        e_second = std::max({e_second, std::abs(r.dx_dmu_v[i].value - cf.dx_dmu[i][0]),
                             std::abs(r.dy_dmu_v[i].value - cf.dy_dmu[i][0])});
      }
      for (std::size_t p = 0; p < pairs.size(); ++p) e_second = std::max(e_second, std::abs(r.d2mu_v[p].value - cf.d2mu[p]));
    }
    const double e_v = std::abs(r.v.value - cf.value), e_dt = std::abs(r.dv_dt.value - cf.dt);
    o.report["closed_form"] = {{"V", cf.value}, {"dV_dt", cf.dt}, {"dV_dx", cf.dx}, {"dmu_V", cf.dmu}};
    o.report["closed_form_errors"] = {{"V", e_v}, {"dV_dx", e_dx}, {"dmu_V", e_dmu}, {"dV_dt", e_dt}, {"second", e_second}};
    const std::vector<std::pair<std::string, double>> gated{
        {"value", e_v}, {"dx", e_dx}, {"dmu", e_dmu}, {"dt", e_dt}, {"second", e_second}};
    for (const auto& [key, err] : gated) {
      if (c.has_tol(key)) o.checks.push_back(gate(key + "_error", err, c.tol(key, 0.0)));
    }
  }
  if (c.has_tol("second") && !c.s.candidate && opt.second_order) {
    o.checks.push_back(gate("second_abs", sup_second, c.tol("second", 0.0)));
  }

  if (!c.s.u_pilot_y.empty()) {
    const auto sys = simulate_particles(c.s.coeffs, init, c.cfg);
    const auto pilot = simulate_pilot(c.s.coeffs, c.s.x, sys, sys.pilot_stream(0));
    const auto t1 = integrate_first_order(c.s.coeffs, sys, pilot, {Probe::at(c.s.u_pilot_y)});
    const auto u = t1.u_at(0, sys.steps());
    double err = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) err = std::max(err, std::abs(u[i] - c.s.u_pilot_expected[i]));
    o.report["u_pilot"] = {{"y", c.s.u_pilot_y}, {"value", vec(u)}, {"error", err}};
    o.checks.push_back(gate("u_pilot_error", err, c.tol("u_pilot", 2e-3)));
  }

  if (c.s.times.size() >= 3) {
    const auto h = time_regularity_probe(c.s.coeffs, q, c.cfg, c.s.times, opt.probes);
    o.report["holder_half"] = {{"V", h.v}, {"dV_dx", h.dv_dx}, {"dmu_V", h.dmu_v}};
    o.checks.push_back(gate_finite("holder_V", h.v));
    o.checks.push_back(gate_finite("holder_dV_dx", h.dv_dx));
    o.checks.push_back(gate_finite("holder_dmu_V", h.dmu_v));
  }
  return o;
}

// ------------------------------------------------------------ pde-residual

Outcome run_pde(const Context& c) {
  if (!c.s.phi) throw ConfigError("/phi", "pde-residual needs a terminal functional");
  require_dim1(c, "pde-residual");
  Outcome o;
  std::vector<std::pair<double, double>> pts;
  const std::vector<double> times = c.s.times.empty() ? std::vector<double>{c.cfg.t_start} : c.s.times;
  for (double t : times) pts.emplace_back(t, c.s.x[0]);
  const auto rep = pde_residual(c.s.coeffs, *c.s.phi, c.init(), pts, c.cfg, c.M);
  Table t{{"t", "x", "residual", "std_error", "dt", "dx_drift", "dxx_diff", "mu_drift", "ymu_diff"}, {}};
  for (const auto& p : rep.points) {
    const auto& k = p.components;
    t.rows.push_back({p.t, p.x[0], p.residual, p.std_error, k.dt, k.dx_drift, k.dxx_diff, k.mu_drift, k.ymu_diff});
  }
  o.tables["residual"] = std::move(t);
  o.report["max_abs_residual"] = rep.max_abs;
  o.checks.push_back(c.has_tol("residual") ? gate("max_abs_residual", rep.max_abs, c.tol("residual", 0.0))
                                           : gate_finite("max_abs_residual", rep.max_abs));
  return o;
}

// --------------------------------------------------------------- ito-check

Outcome run_ito(const Context& c) {
  if (!c.s.candidate) throw ConfigError("/candidate", "ito-check needs a candidate functional");
  Outcome o;
  const auto r = ito_residual(c.s.coeffs, *c.s.candidate, c.init(), c.cfg, c.s.x, c.M);
  o.report["mean_gap"] = r.mean_gap;
  o.report["martingale_drift"] = r.martingale_drift;
  o.report["gap_error"] = {{"pilot_se", r.gap_pilot_se}, {"particle_sd", r.gap_particle_sd},
                           {"discretization", r.gap_discretization}, {"total", r.gap_error}};
  o.report["drift_error"] = r.drift_error;
  o.report["gap_ratio"] = r.gap_ratio;
  o.report["drift_ratio"] = r.drift_ratio;
  o.checks.push_back(gate("gap_ratio", r.gap_ratio, c.tol("ito_ratio", 3.0)));
  o.checks.push_back(gate("drift_ratio", r.drift_ratio, c.tol("ito_ratio", 3.0)));
  return o;
}

// -------------------------------------------------------------- flow-check

Outcome run_flow(const Context& c) {
  Outcome o;
  const auto init = c.init();
  const std::size_t K = c.cfg.n_steps;
  const double tol = c.tol("flow", 1e-12);
  Table t{{"split_step", "discrepancy"}, {}};
  double flow = 0.0;
  for (std::size_t split : {K / 4, K / 2, (3 * K) / 4}) {
    if (split == 0 || split >= K) continue;
    const double v = flow_check(c.s.coeffs, init, c.cfg, c.s.x, split);
    t.rows.push_back({static_cast<double>(split), v});
    flow = std::max(flow, v);
  }
  o.tables["flow"] = std::move(t);
  o.report["flow_discrepancy"] = flow;
  o.checks.push_back(gate("flow", flow, tol));

  const auto sys = simulate_particles(c.s.coeffs, init, c.cfg);
  const auto parts = sample_particles(sys.size());
  const double cons = consistency_check(c.s.coeffs, sys, parts);
  o.report["consistency_discrepancy"] = cons;
  o.checks.push_back(gate("consistency", cons, tol));

  std::vector<std::size_t> rev(init.size());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = rev.size() - 1 - i;
  const double perm = permutation_check(c.s.coeffs, init, c.cfg, c.s.x, rev);
  o.report["permutation_discrepancy"] = perm;
  o.checks.push_back(gate("permutation", perm, tol));
  return o;
}

using Runner = std::function<Outcome(const Context&)>;

const std::vector<std::pair<std::string, Runner>>& runners() {
  static const std::vector<std::pair<std::string, Runner>> r{
      {"simulate", run_simulate},       {"w2", run_w2},
      {"taylor-check", run_taylor},     {"tangent-check", run_tangent},
      {"symmetry-check", run_symmetry}, {"value", run_value},
      {"pde-residual", run_pde},        {"ito-check", run_ito},
      {"flow-check", run_flow}};
  return r;
}

// Subcommands that apply to a scenario; the rest are skipped by `suite`.
bool applicable(const std::string& name, const Context& c) {
  if (name == "taylor-check") return c.s.taylor.has_value();
  if (name == "value") return c.s.phi.has_value();
  if (name == "pde-residual") return c.s.phi.has_value() && c.s.dim == 1;
  if (name == "ito-check") return c.s.candidate != nullptr;
  return true;
}

Outcome run_suite(const Context& c) {
  Outcome o;
  json parts = json::object();
  for (const auto& [name, fn] : runners()) {
    if (!applicable(name, c)) {
      parts[name] = {{"skipped", true}};
      continue;
    }
    auto sub = fn(c);
    for (auto& ch : sub.checks) {
      ch.name = name + "/" + ch.name;
      o.checks.push_back(ch);
    }
    for (auto& [tname, tab] : sub.tables) o.tables[name + "_" + tname] = std::move(tab);
    sub.report["pass"] = all_pass(sub.checks);
    parts[name] = std::move(sub.report);
  }
  o.report["subcommands"] = std::move(parts);
  return o;
}

Context make_context(const std::string& file, const Overrides& ov) {
  Context c{load_scenario(file), {}, 0, ov.tol_scale};
  c.cfg = c.s.sim;
  if (ov.seed) c.cfg.seed = *ov.seed;
  if (ov.n) {
    if (c.s.init.fixed_size()) throw ConfigError("--n", "the initial law has a fixed sample list");
    c.cfg.n_particles = *ov.n;
  }
  if (ov.k) c.cfg.n_steps = *ov.k;
  c.M = ov.m ? *ov.m : c.s.pilots;
  if (c.M == 0) throw ConfigError("--m", "needs at least one pilot");
  if (!(ov.tol_scale > 0.0)) throw ConfigError("--tol-scale", "must be positive");
  try {
    c.cfg.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError("overrides", e.what());
  }
  return c;
}

json resolved_params(const Context& c, const std::string& sub, const std::string& file) {
  return {{"subcommand", sub},
          {"scenario_file", file},
          {"scenario", c.s.raw},
          {"resolved",
           {{"n_particles", c.cfg.n_particles},
            {"n_steps", c.cfg.n_steps},
            {"t_start", c.cfg.t_start},
            {"t_end", c.cfg.t_end},
            {"seed", c.cfg.seed},
            {"pilots", c.M},
            {"tol_scale", c.tol_scale}}}};
}

int execute(const std::string& sub, const std::string& file, const Overrides& ov) {
  if (ov.threads > 0) worker_limit() = ov.threads;
  const auto c = make_context(file, ov);
  Runner fn = run_suite;
  for (const auto& [name, r] : runners()) {
    if (name == sub) fn = r;
  }
  const auto started = std::chrono::steady_clock::now();
  const RunDirectory dir(resolve_out_root(ov.out), c.s.name, sub);
  dir.write_params(resolved_params(c, sub, file));
  auto out = fn(c);
  const bool pass = all_pass(out.checks);
  out.report["scenario"] = c.s.name;
  out.report["subcommand"] = sub;
  out.report["checks"] = to_json(out.checks);
  out.report["pass"] = pass;
  dir.write_report(out.report);
  for (const auto& [name, t] : out.tables) dir.write_table(name, t.header, t.rows);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  for (const auto& ch : out.checks) {
    std::printf("%-4s %-44s %.6g", ch.pass ? "ok" : "FAIL", ch.name.c_str(), ch.value);
    if (ch.finite_only) {
      std::printf(" (finite)\n");
    } else {
      std::printf(" (limit %.3g)\n", ch.limit);
    }
  }
  std::printf("%s %s: %s in %.1fs -> %s\n", sub.c_str(), c.s.name.c_str(), pass ? "pass" : "FAIL", secs,
              dir.path().string().c_str());
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mfcalc: mean-field SDE calculus verifier"};
  app.require_subcommand(1);
  Overrides ov;
  std::string file;
  std::uint64_t seed = 0;
  std::size_t n = 0, k = 0, m = 0;
  std::string chosen;

  auto add_common = [&](CLI::App* s) {
    s->add_option("scenario", file, "scenario JSON file")->required()->check(CLI::ExistingFile);
    s->add_option("--seed", seed, "noise seed");
    s->add_option("--n", n, "particles");
    s->add_option("--k", k, "time steps");
    s->add_option("--m", m, "pilot replicas");
    s->add_option("--threads", ov.threads, "worker cap (results do not depend on it)");
    s->add_option("--out", ov.out, "output root (default $MFCALC_OUT or ./out)");
    s->add_option("--tol-scale", ov.tol_scale, "multiplies every tolerance");
  };
  std::vector<std::string> names;
  for (const auto& [name, r] : runners()) names.push_back(name);
  names.push_back("suite");
  const std::map<std::string, std::string> help{
      {"simulate", "simulate the particle system and a pilot path"},
      {"w2", "W2 distances of the particle law along the grid"},
      {"taylor-check", "second-order expansion remainder and its scaling"},
      {"tangent-check", "measure-derivative tangents against common-noise finite differences"},
      {"symmetry-check", "symmetry of second derivatives"},
      {"value", "V and its derivatives, against the candidate closed form if given"},
      {"pde-residual", "residual of the master-type PDE along the scenario times"},
      {"ito-check", "Ito formula gap and martingale drift of the candidate"},
      {"flow-check", "restart, consistency and permutation identities"},
      {"suite", "every applicable check"},
  };
  for (const auto& name : names) {
    auto* s = app.add_subcommand(name, help.at(name));
    add_common(s);
    s->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }
  for (const auto& name : names) {
    auto* s = app.get_subcommand(name);
    if (!s->parsed()) continue;
    if (s->count("--seed")) ov.seed = seed;
    if (s->count("--n")) ov.n = n;
    if (s->count("--k")) ov.k = k;
    if (s->count("--m")) ov.m = m;
  }

  try {
    return execute(chosen, file, ov);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const UnsupportedConfiguration& e) {
    std::fprintf(stderr, "unsupported configuration: %s\n", e.what());
    return 3;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 2;
  }
}
