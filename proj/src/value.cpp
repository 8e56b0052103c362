#include "mfcalc/value.hpp"

#include <algorithm>
#include <cmath>

#include "mfcalc/error.hpp"
#include "mfcalc/parallel.hpp"

namespace mfcalc {

Estimate summarize(std::span<const double> samples) {
  Estimate e;
  const std::size_t n = samples.size();
  if (n == 0) return e;
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  e.value = mean;
  e.std_error = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  return e;
}

namespace {

SimConfig query_config(const ValueQuery& q, const SimConfig& cfg, bool& terminal) {
  if (q.t > q.T) throw InvalidInput("value query: t must not exceed T");
  if (q.M < 1) throw InvalidInput("value query: need at least one pilot replica");
  if (q.x.size() != q.init.dim() || q.phi.dim() != q.init.dim()) {
    throw InvalidInput("value query: dimension mismatch");
  }
  SimConfig c = cfg;
  c.n_particles = q.init.size();
  c.t_start = q.t;
  c.t_end = q.T;
  terminal = !(q.T > q.t);
  if (terminal) {
    // Evaluated at step 0 of a throwaway grid.
    c.t_end = q.t + 1.0;
    c.n_steps = 1;
  }
  return c;
}

std::vector<double> strided(std::span<const double> v, std::size_t stride, std::size_t off) {
  std::vector<double> out;
  out.reserve(v.size() / stride);
  for (std::size_t i = off; i < v.size(); i += stride) out.push_back(v[i]);
  return out;
}

}  // namespace

ValueReport evaluate_value(const CoefficientSet& coeffs, const ValueQuery& q,
                           const SimConfig& cfg, const ValueOptions& opt) {
  bool terminal = false;
  const SimConfig c = query_config(q, cfg, terminal);
  const std::size_t d = coeffs.dim;
  if (opt.second_order && d != 1) {
    throw UnsupportedConfiguration("second-order value derivatives are implemented for d = 1 only");
  }
  const auto sys = simulate_particles(coeffs, q.init, c);
  const std::size_t M = q.M;
  std::vector<std::vector<double>> starts(M, q.x);
  std::vector<std::uint64_t> streams(M);
  for (std::size_t m = 0; m < M; ++m) streams[m] = sys.pilot_stream(m);
  TangentOptions topt;
  topt.second_order = opt.second_order;
  topt.pairs = opt.pairs;
  TangentSystem ts(coeffs, sys, std::move(starts), std::move(streams), opt.probes, topt);
  if (!terminal) ts.run();
  const std::size_t k = ts.step();

  const auto& phi = q.phi;
  const std::size_t S = phi.num_kernels();
  const auto ag = ts.aggregate(phi.kernels());
  const std::size_t W = ts.total_width();
  const std::size_t P = opt.pairs.size();
  const std::size_t Q = opt.probes.size();

  // Generator pieces of the measure argument: L kappa_s over the particles.
  const CoefficientEvaluator ev(coeffs);
  const auto& law = sys.moments(k);
  const std::size_t n = sys.size();
  std::vector<double> lk(S, 0.0);
  {
    std::vector<double> sig(d * d), drift(d), grad(d), hess(d * d), a(d * d);
    for (std::size_t l = 0; l < n; ++l) {
      const auto xl = sys.state(k, l);
      ev.eval(law, xl, sig, drift);
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t e = 0; e < d; ++e) acc += sig[i * d + e] * sig[j * d + e];
          a[i * d + j] = acc;
        }
      }
      for (std::size_t s = 0; s < S; ++s) {
        double v;
        phi.kernels()[s].eval(xl, v, grad, hess);
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          acc += grad[i] * drift[i];
          for (std::size_t j = 0; j < d; ++j) acc += 0.5 * hess[i * d + j] * a[i * d + j];
        }
        lk[s] += acc;
      }
    }
    for (double& v : lk) v /= static_cast<double>(n);
  }

  ValueReport r;
  r.width = W;
  for (std::size_t qi = 0; qi < Q; ++qi) r.column.push_back(ts.column(qi));
  r.rep_v.resize(M);
  r.rep_dt.resize(M);
  r.rep_dx.resize(M * d);
  r.rep_dmu.resize(M * W);
  std::vector<double> rep_dxdmu, rep_d2mu;
  if (opt.second_order) {
    r.rep_dxx.resize(M);
    r.rep_dydmu.resize(M * Q);
    rep_dxdmu.resize(M * Q);
    rep_d2mu.resize(M * P);
  }

  OuterDerivatives g;
  std::vector<double> sig(d * d), drift(d);
  for (std::size_t m = 0; m < M; ++m) {
    const auto x = ts.pilot_x(m);
    const auto J = ts.pilot_J(m);
    g.resize(d, S);
    phi.derivatives(x, ag.z, g);
    r.rep_v[m] = g.value;
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < d; ++a) acc += g.dx[a] * J[a * d + i];
      r.rep_dx[m * d + i] = acc;
    }
    for (std::size_t col = 0; col < W; ++col) {
      double acc = 0.0;
      for (std::size_t a = 0; a < d; ++a) acc += g.dx[a] * ts.pilot_U_row(m, a)[col];
      for (std::size_t s = 0; s < S; ++s) acc += g.dz[s] * ag.dm[s * W + col];
      r.rep_dmu[m * W + col] = acc;
    }
    // d_t V = -L Phi at the terminal state.
    ev.eval(law, x, sig, drift);
    double gen = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      gen += g.dx[i] * drift[i];
      for (std::size_t j = 0; j < d; ++j) {
        double aij = 0.0;
        for (std::size_t e = 0; e < d; ++e) aij += sig[i * d + e] * sig[j * d + e];
        gen += 0.5 * g.dxx[i * d + j] * aij;
      }
    }
    for (std::size_t s = 0; s < S; ++s) gen += g.dz[s] * lk[s];
    r.rep_dt[m] = -gen;

    if (opt.second_order) {
      const double j1 = J[0];
      const auto u = ts.pilot_U_row(m, 0);
      const auto kk = ts.pilot_K(m);
      const auto uy = ts.pilot_Uy(m);
      const auto u2 = ts.pilot_U2(m);
      r.rep_dxx[m] = g.dxx[0] * j1 * j1 + g.dx[0] * ts.pilot_J2(m);
      for (std::size_t qi = 0; qi < Q; ++qi) {
        const std::size_t col = ts.column(qi);
        double a1 = g.dxx[0] * j1 * u[col] + g.dx[0] * kk[col];
        double a2 = g.dx[0] * uy[col];
        for (std::size_t s = 0; s < S; ++s) {
          a1 += g.dxdz[s] * j1 * ag.dm[s * W + col];
          a2 += g.dz[s] * ag.dym[s * W + col];
        }
        rep_dxdmu[m * Q + qi] = a1;
        r.rep_dydmu[m * Q + qi] = a2;
      }
      for (std::size_t p = 0; p < P; ++p) {
        const std::size_t ca = ts.column(opt.pairs[p].first);
        const std::size_t cb = ts.column(opt.pairs[p].second);
        double acc = g.dxx[0] * u[ca] * u[cb] + g.dx[0] * u2[p];
        for (std::size_t s = 0; s < S; ++s) {
          const double dma = ag.dm[s * W + ca], dmb = ag.dm[s * W + cb];
          acc += g.dxdz[s] * (u[ca] * dmb + u[cb] * dma) + g.dz[s] * ag.d2m[s * P + p];
          for (std::size_t t = 0; t < S; ++t) acc += g.dzz[s * S + t] * dma * ag.dm[t * W + cb];
        }
        rep_d2mu[m * P + p] = acc;
      }
    }
  }

  for (double v : r.rep_v) {
    if (!std::isfinite(v)) throw NumericError("value: non-finite terminal functional");
  }
  r.v = summarize(r.rep_v);
  // Exact boundary value: the particle system sums moments in canonical
  // order, which may differ from Phi(x, init) in the last bit.
  if (terminal) r.v = Estimate{phi.eval(q.x, q.init), 0.0};
  r.dv_dt = summarize(r.rep_dt);
  for (std::size_t i = 0; i < d; ++i) r.dv_dx.push_back(summarize(strided(r.rep_dx, d, i)));
  r.dmu_v.resize(Q);
  for (std::size_t qi = 0; qi < Q; ++qi) {
    for (std::size_t i = 0; i < ts.width(qi); ++i) {
      r.dmu_v[qi].push_back(summarize(strided(r.rep_dmu, W, ts.column(qi) + i)));
    }
  }
  if (opt.second_order) {
    r.d2v_dx2 = summarize(r.rep_dxx);
    for (std::size_t qi = 0; qi < Q; ++qi) {
      r.dx_dmu_v.push_back(summarize(strided(rep_dxdmu, Q, qi)));
      r.dy_dmu_v.push_back(summarize(strided(r.rep_dydmu, Q, qi)));
    }
    for (std::size_t p = 0; p < P; ++p) r.d2mu_v.push_back(summarize(strided(rep_d2mu, P, p)));
  }
  return r;
}

Estimate estimate_V(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg) {
  return evaluate_value(coeffs, q, cfg).v;
}

std::vector<Estimate> grad_x_V(const CoefficientSet& coeffs, const ValueQuery& q,
                               const SimConfig& cfg) {
  return evaluate_value(coeffs, q, cfg).dv_dx;
}

std::vector<std::vector<Estimate>> lions_grad_V(const CoefficientSet& coeffs, const ValueQuery& q,
                                                const SimConfig& cfg,
                                                const std::vector<Probe>& probes) {
  ValueOptions o;
  o.probes = probes;
  return evaluate_value(coeffs, q, cfg, o).dmu_v;
}

ValueReport second_derivatives_V(const CoefficientSet& coeffs, const ValueQuery& q,
                                 const SimConfig& cfg, const std::vector<Probe>& probes,
                                 std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  ValueOptions o;
  o.probes = probes;
  o.pairs = std::move(pairs);
  o.second_order = true;
  return evaluate_value(coeffs, q, cfg, o);
}

Estimate dt_V(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg) {
  return evaluate_value(coeffs, q, cfg).dv_dt;
}

Probe direction_probe(const ValueQuery& q, const SimConfig& cfg, std::span<const double> eta,
                      bool independent) {
  const std::size_t n = q.init.size(), d = q.init.dim();
  if (eta.size() != n * d) throw InvalidInput("direction_probe: eta must be N x d");
  if (!cfg.canonical_order) return Probe::weighted({eta.begin(), eta.end()}, independent);
  const auto order = canonical_permutation(q.init);
  std::vector<double> out(n * d);
  for (std::size_t p = 0; p < n; ++p) {
    std::copy(eta.begin() + order[p] * d, eta.begin() + (order[p] + 1) * d, out.begin() + p * d);
  }
  return Probe::weighted(std::move(out), independent);
}

namespace {

// V alone: pilots advanced by plain Euler steps along the same paths as
// evaluate_value, without tangents.
double plain_value(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg) {
  bool terminal = false;
  const SimConfig c = query_config(q, cfg, terminal);
  if (terminal) return q.phi.eval(q.x, q.init);
  const auto sys = simulate_particles(coeffs, q.init, c);
  const std::size_t K = sys.steps(), d = coeffs.dim;
  const auto comps = coeffs.components();
  const NoiseSource noise(c.seed);
  const auto z = q.phi.moments(sys.law_at(K));
  std::vector<double> values(q.M);
  parallel_for(0, q.M, [&](std::size_t m) {
    std::vector<double> x(q.x), next(d), inc(d + 1);
    const std::uint64_t stream = sys.pilot_stream(m);
    for (std::size_t k = 0; k < K; ++k) {
      draw_increments(noise, c, stream, k, inc);
      euler_step(comps, sys.moments(k), x, inc, next);
      check_state(next, k + 1, m);
      x.swap(next);
    }
    values[m] = q.phi.value_at(x, z);
  });
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("value: non-finite terminal functional");
  }
  return summarize(values).value;
}

// Value with the initial samples moved by h * eta, pairing fixed.
double shifted_value(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                     std::span<const double> eta, double h) {
  const std::size_t n = q.init.size(), d = q.init.dim();
  if (eta.size() != n * d) throw InvalidInput("fd oracle: eta must be N x d");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (cfg.canonical_order) order = canonical_permutation(q.init);
  std::vector<double> s(n * d);
  for (std::size_t p = 0; p < n; ++p) {
    const auto pt = q.init.point(order[p]);
    for (std::size_t a = 0; a < d; ++a) s[p * d + a] = pt[a] + h * eta[order[p] * d + a];
  }
  ValueQuery qq = q;
  qq.init = EmpiricalMeasure(std::move(s), d);
  SimConfig c = cfg;
  c.canonical_order = false;
  return plain_value(coeffs, qq, c);
}

}  // namespace

double fd_value_direction(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                          std::span<const double> eta, double h) {
  return (shifted_value(coeffs, q, cfg, eta, h) - shifted_value(coeffs, q, cfg, eta, -h)) /
         (2.0 * h);
}

double fd_value_direction2(const CoefficientSet& coeffs, const ValueQuery& q,
                           const SimConfig& cfg, std::span<const double> eta, double h) {
  return (shifted_value(coeffs, q, cfg, eta, h) - 2.0 * shifted_value(coeffs, q, cfg, eta, 0.0) +
          shifted_value(coeffs, q, cfg, eta, -h)) /
         (h * h);
}

double fd_value_x(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                  double h) {
  ValueQuery up = q, dn = q;
  up.x[0] += h;
  dn.x[0] -= h;
  return (estimate_V(coeffs, up, cfg).value - estimate_V(coeffs, dn, cfg).value) / (2.0 * h);
}

double fd_value_xx(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                   double h) {
  ValueQuery up = q, dn = q;
  up.x[0] += h;
  dn.x[0] -= h;
  return (estimate_V(coeffs, up, cfg).value - 2.0 * estimate_V(coeffs, q, cfg).value +
          estimate_V(coeffs, dn, cfg).value) /
         (h * h);
}

double fd_value_t(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                  double delta) {
  ValueQuery up = q, dn = q;
  up.t += delta;
  dn.t -= delta;
  return (estimate_V(coeffs, up, cfg).value - estimate_V(coeffs, dn, cfg).value) / (2.0 * delta);
}

std::vector<double> fd_dx_dmu_V(const CoefficientSet& coeffs, const ValueQuery& q,
                                const SimConfig& cfg, const std::vector<Probe>& probes, double h) {
  ValueQuery up = q, dn = q;
  up.x[0] += h;
  dn.x[0] -= h;
  const auto a = lions_grad_V(coeffs, up, cfg, probes);
  const auto b = lions_grad_V(coeffs, dn, cfg, probes);
  std::vector<double> out(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) {
    out[i] = (a[i][0].value - b[i][0].value) / (2.0 * h);
  }
  return out;
}

HolderReport time_regularity_probe(const CoefficientSet& coeffs, const ValueQuery& q,
                                   const SimConfig& cfg, std::span<const double> times,
                                   const std::vector<Probe>& probes) {
  if (times.size() < 3) throw InvalidInput("time_regularity_probe: need at least three times");
  std::vector<ValueReport> reps;
  ValueOptions o;
  o.probes = probes;
  for (double t : times) {
    ValueQuery qq = q;
    qq.t = t;
    reps.push_back(evaluate_value(coeffs, qq, cfg, o));
  }
  HolderReport h;
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t j = i + 1; j < times.size(); ++j) {
      const double s = std::sqrt(std::abs(times[i] - times[j]));
      if (s == 0.0) continue;
      h.v = std::max(h.v, std::abs(reps[i].v.value - reps[j].v.value) / s);
      for (std::size_t a = 0; a < reps[i].dv_dx.size(); ++a) {
        h.dv_dx = std::max(h.dv_dx, std::abs(reps[i].dv_dx[a].value - reps[j].dv_dx[a].value) / s);
      }
      for (std::size_t p = 0; p < probes.size(); ++p) {
        for (std::size_t a = 0; a < reps[i].dmu_v[p].size(); ++a) {
          h.dmu_v = std::max(
              h.dmu_v, std::abs(reps[i].dmu_v[p][a].value - reps[j].dmu_v[p][a].value) / s);
        }
      }
    }
  }
  return h;
}

}  // namespace mfcalc
