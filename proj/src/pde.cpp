#include "mfcalc/pde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfcalc/error.hpp"

namespace mfcalc {

namespace {

void diffusion_matrix(std::span<const double> sig, std::size_t d, std::span<double> a) {
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t e = 0; e < d; ++e) acc += sig[i * d + e] * sig[j * d + e];
      a[i * d + j] = acc;
    }
  }
}

}  // namespace

double apply_generator(const CoefficientSet& coeffs, const GeneratorInput& g) {
  const std::size_t d = coeffs.dim;
  const std::size_t n = g.law.size();
  if (g.law.dim() != d || g.x.size() != d || g.dx.size() != d || g.dxx.size() != d * d ||
      g.dmu.size() != n * d || g.dydmu.size() != n * d * d) {
    throw InvalidInput("apply_generator: inconsistent bundle sizes");
  }
  const CoefficientEvaluator ev(coeffs);
  const auto law = compute_moments(ev.components(), g.law.samples(), n);
  std::vector<double> sig(d * d), drift(d), a(d * d);

  ev.eval(law, g.x, sig, drift);
  diffusion_matrix(sig, d, a);
  double out = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    out += g.dx[i] * drift[i];
    for (std::size_t j = 0; j < d; ++j) out += 0.5 * g.dxx[i * d + j] * a[i * d + j];
  }
  double nonlocal = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    ev.eval(law, g.law.point(l), sig, drift);
    diffusion_matrix(sig, d, a);
    for (std::size_t i = 0; i < d; ++i) {
      nonlocal += g.dmu[l * d + i] * drift[i];
      for (std::size_t j = 0; j < d; ++j) {
        nonlocal += 0.5 * g.dydmu[l * d * d + i * d + j] * a[i * d + j];
      }
    }
  }
  return out + nonlocal / static_cast<double>(n);
}

ResidualReport pde_residual(const CoefficientSet& coeffs, const CylinderFunctional& phi,
                            const EmpiricalMeasure& init,
                            std::span<const std::pair<double, double>> points,
                            const SimConfig& cfg, std::size_t M) {
  if (coeffs.dim != 1) throw UnsupportedConfiguration("pde_residual is implemented for d = 1 only");
  const std::size_t n = init.size();
  const CoefficientEvaluator ev(coeffs);
  const auto law0 = compute_moments(ev.components(), init.samples(), n);
  std::vector<double> wb(n), wa(n);
  double sig = 0.0, drift = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    ev.eval(law0, init.point(l), std::span<double>(&sig, 1), std::span<double>(&drift, 1));
    wb[l] = drift;
    wa[l] = sig * sig;
  }

  ResidualReport rep;
  for (const auto& [t, x] : points) {
    ValueQuery q{t, cfg.t_end, {x}, init, phi, M};
    ValueOptions o;
    o.second_order = true;
    o.probes = {direction_probe(q, cfg, wb), direction_probe(q, cfg, wa)};
    const auto r = evaluate_value(coeffs, q, cfg, o);

    const double xv = x;
    ev.eval(law0, std::span<const double>(&xv, 1), std::span<double>(&sig, 1),
            std::span<double>(&drift, 1));
    const double ax = sig * sig;

    ResidualPoint pt;
    pt.t = t;
    pt.x = {x};
    pt.components.dt = r.dv_dt.value;
    pt.components.dx_drift = r.dv_dx[0].value * drift;
    pt.components.dxx_diff = 0.5 * r.d2v_dx2.value * ax;
    pt.components.mu_drift = r.dmu_v[0][0].value;
    pt.components.ymu_diff = 0.5 * r.dy_dmu_v[1].value;

    std::vector<double> per(M);
    for (std::size_t m = 0; m < M; ++m) {
      per[m] = r.rep_dt[m] + r.rep_dx[m] * drift + 0.5 * r.rep_dxx[m] * ax +
               r.rep_dmu[m * r.width + r.column[0]] + 0.5 * r.rep_dydmu[m * 2 + 1];
    }
    const auto e = summarize(per);
    pt.residual = e.value;
    pt.std_error = e.std_error;
    rep.max_abs = std::max(rep.max_abs, std::abs(pt.residual));
    rep.points.push_back(std::move(pt));
  }
  return rep;
}

// ---------------------------------------------------------------------------

PhiSumFunctional::PhiSumFunctional(double horizon, std::vector<Term> terms)
    : horizon_(horizon), terms_(std::move(terms)) {
  if (terms_.empty()) throw InvalidInput("phi-sum functional: needs at least one term");
  dim_ = terms_.front().f.dim();
  for (const auto& t : terms_) {
    if (t.f.dim() != dim_) throw InvalidInput("phi-sum functional: dimension mismatch");
    offset_.push_back(kernels_.size());
    kernels_.insert(kernels_.end(), t.f.kernels().begin(), t.f.kernels().end());
  }
}

void PhiSumFunctional::eval(double t, std::span<const double> x, std::span<const double> z,
                            OuterDerivatives& out, double& dt) const {
  const std::size_t d = dim_;
  const std::size_t M = kernels_.size();
  out.resize(d, M);
  out.value = 0.0;
  dt = 0.0;
  OuterDerivatives g;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const auto& tm = terms_[i];
    const std::size_t m = tm.f.num_kernels();
    const std::size_t off = offset_[i];
    g.resize(d, m);
    tm.f.derivatives(x, z.subspan(off, m), g);
    const double tau = horizon_ - t;
    const double ex = std::exp(tm.lambda * tau);
    const double phi = tm.a + tm.c * ex + tm.e * tau;
    const double dphi = -tm.c * tm.lambda * ex - tm.e;
    out.value += phi * g.value;
    dt += dphi * g.value;
    for (std::size_t a = 0; a < d; ++a) {
      out.dx[a] += phi * g.dx[a];
      for (std::size_t b = 0; b < d; ++b) out.dxx[a * d + b] += phi * g.dxx[a * d + b];
      for (std::size_t j = 0; j < m; ++j) out.dxdz[a * M + off + j] += phi * g.dxdz[a * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      out.dz[off + j] += phi * g.dz[j];
      for (std::size_t k = 0; k < m; ++k) out.dzz[(off + j) * M + off + k] += phi * g.dzz[j * m + k];
    }
  }
}

std::string PhiSumFunctional::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const auto& t = terms_[i];
    os << (i ? " + " : "") << "(" << t.a << " + " << t.c << "*exp(" << t.lambda << "*(T-t)) + "
       << t.e << "*(T-t)) * [" << t.f.describe() << "]";
  }
  return os.str();
}

MeanRatioFunctional::MeanRatioFunctional(std::size_t dim, double horizon, double a)
    : dim_(dim), horizon_(horizon), a_(a), kernels_{Kernel{KernelType::identity, 0, 1.0}} {
  if (dim_ == 0) throw InvalidInput("mean-ratio functional: dimension must be positive");
}

void MeanRatioFunctional::eval(double t, std::span<const double> x, std::span<const double> z,
                               OuterDerivatives& out, double& dt) const {
  out.resize(dim_, 1);
  const double tau = horizon_ - t;
  const double den = 1.0 - a_ * z[0] * tau;
  if (!(den > 0.0)) throw NumericError("mean-ratio functional: singular denominator");
  const double g = 1.0 / den;
  const double x0 = x[0];
  out.value = x0 * g;
  out.dx[0] = g;
  out.dz[0] = x0 * a_ * tau * g * g;
  out.dxdz[0] = a_ * tau * g * g;
  out.dzz[0] = 2.0 * x0 * a_ * a_ * tau * tau * g * g * g;
  dt = -x0 * a_ * z[0] * g * g;
}

std::string MeanRatioFunctional::describe() const {
  std::ostringstream os;
  os << "x0 / (1 - " << a_ << " * mean * (T - t)), T = " << horizon_;
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

struct ItoPass {
  double gap = 0.0, gap_se = 0.0, gap_part_var = 0.0;
  std::vector<double> drift, drift_se, drift_part_var;  // per step
};

ItoPass ito_pass(const CoefficientSet& coeffs, const TimeFunctional& F,
                 const EmpiricalMeasure& init, const SimConfig& cfg, std::span<const double> x,
                 std::size_t M) {
  const std::size_t d = coeffs.dim;
  const auto sys = simulate_particles(coeffs, init, cfg);
  const std::size_t n = sys.size(), K = sys.steps();
  const double dt = cfg.dt();
  const auto& kernels = F.kernels();
  const std::size_t S = kernels.size();
  const CoefficientEvaluator ev(coeffs);
  const auto& comps = ev.components();
  const NoiseSource noise(cfg.seed);

  std::vector<double> px(M * d);
  for (std::size_t m = 0; m < M; ++m) std::copy(x.begin(), x.end(), px.begin() + m * d);
  std::vector<double> integral(M, 0.0), fval(M), gen(M), mean_dz(S);
  std::vector<double> z(S), lk(S), sig(d * d), drift(d), a(d * d), grad(d), hess(d * d);
  std::vector<double> kgrad(n * S * d), ksig(n * d * d);
  std::vector<double> inc(d + 1), next(d);
  OuterDerivatives g;
  double f0 = 0.0, part_var = 0.0;

  ItoPass out;
  out.drift.resize(K + 1);
  out.drift_se.resize(K + 1);
  out.drift_part_var.resize(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    const double t = sys.time(k);
    const auto& law = sys.moments(k);
    std::fill(z.begin(), z.end(), 0.0);
    std::fill(lk.begin(), lk.end(), 0.0);
    for (std::size_t l = 0; l < n; ++l) {
      const auto xl = sys.state(k, l);
      ev.eval(law, xl, sig, drift);
      diffusion_matrix(sig, d, a);
      std::copy(sig.begin(), sig.end(), ksig.begin() + l * d * d);
      for (std::size_t s = 0; s < S; ++s) {
        double v;
        kernels[s].eval(xl, v, grad, hess);
        z[s] += v;
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          acc += grad[i] * drift[i];
          for (std::size_t j = 0; j < d; ++j) acc += 0.5 * hess[i * d + j] * a[i * d + j];
          kgrad[(l * S + s) * d + i] = grad[i];
        }
        lk[s] += acc;
      }
    }
    for (std::size_t s = 0; s < S; ++s) {
      z[s] /= static_cast<double>(n);
      lk[s] /= static_cast<double>(n);
    }

    std::fill(mean_dz.begin(), mean_dz.end(), 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      const std::span<const double> xm(px.data() + m * d, d);
      double ft = 0.0;
      F.eval(t, xm, z, g, ft);
      fval[m] = g.value;
      ev.eval(law, xm, sig, drift);
      diffusion_matrix(sig, d, a);
      double gm = ft;
      for (std::size_t i = 0; i < d; ++i) {
        gm += g.dx[i] * drift[i];
        for (std::size_t j = 0; j < d; ++j) gm += 0.5 * g.dxx[i * d + j] * a[i * d + j];
      }
      for (std::size_t s = 0; s < S; ++s) {
        gm += g.dz[s] * lk[s];
        mean_dz[s] += g.dz[s];
      }
      gen[m] = gm;
    }
    if (k == 0) f0 = fval[0];

    // Drift statistic at step k.
    {
      std::vector<double> dev(M);
      for (std::size_t m = 0; m < M; ++m) dev[m] = fval[m] - f0;
      const auto e = summarize(dev);
      out.drift[k] = e.value;
      out.drift_se[k] = e.std_error;
      out.drift_part_var[k] = part_var;
    }
    if (k == K) {
      std::vector<double> delta(M);
      for (std::size_t m = 0; m < M; ++m) delta[m] = fval[m] - f0 - integral[m];
      const auto e = summarize(delta);
      out.gap = e.value;
      out.gap_se = e.std_error;
      out.gap_part_var = part_var;
      break;
    }

    // Shared particle-noise integral: its conditional variance over this step.
    for (double& v : mean_dz) v /= static_cast<double>(M);
    double step_var = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t e = 0; e < d; ++e) {
        double c = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
          for (std::size_t i = 0; i < d; ++i) {
            c += mean_dz[s] * kgrad[(l * S + s) * d + i] * ksig[l * d * d + i * d + e];
          }
        }
        step_var += c * c;
      }
    }
    part_var += step_var * dt / (static_cast<double>(n) * static_cast<double>(n));

    for (std::size_t m = 0; m < M; ++m) {
      integral[m] += gen[m] * dt;
      draw_increments(noise, cfg, sys.pilot_stream(m), k, inc);
      euler_step(comps, law, std::span<const double>(px.data() + m * d, d), inc, next);
      for (std::size_t e = 0; e < d; ++e) {
        if (!std::isfinite(next[e]) || std::abs(next[e]) > kBlowUpThreshold) {
          throw BlowUpError(k + 1, m);
        }
      }
      std::copy(next.begin(), next.end(), px.begin() + m * d);
    }
  }
  return out;
}

}  // namespace

ItoRecord ito_residual(const CoefficientSet& coeffs, const TimeFunctional& F,
                       const EmpiricalMeasure& init, const SimConfig& cfg,
                       std::span<const double> x, std::size_t M) {
  if (F.dim() != coeffs.dim || x.size() != coeffs.dim) {
    throw InvalidInput("ito_residual: dimension mismatch");
  }
  if (cfg.n_steps < 2 || cfg.n_steps % 2 != 0) {
    throw InvalidInput("ito_residual: needs an even number of steps for the coarse pass");
  }
  SimConfig c = cfg;
  c.n_particles = init.size();
  const auto fine = ito_pass(coeffs, F, init, c, x, M);
  if (c.step_offset != 0 || c.noise_substeps != 1) {
    throw InvalidInput("ito_residual: expects a plain grid (no offset, no substeps)");
  }
  // Coarse pass on the same Brownian path.
  SimConfig cc = c;
  cc.n_steps = c.n_steps / 2;
  cc.noise_substeps = 2;
  const auto coarse = ito_pass(coeffs, F, init, cc, x, M);

  ItoRecord r;
  r.mean_gap = std::abs(fine.gap);
  r.gap_pilot_se = fine.gap_se;
  r.gap_particle_sd = std::sqrt(fine.gap_part_var);
  r.gap_discretization = std::abs(fine.gap - coarse.gap);
  r.gap_error = std::hypot(r.gap_pilot_se, r.gap_particle_sd) + r.gap_discretization;
  r.gap_ratio = r.mean_gap / std::max(r.gap_error, 1e-300);

  for (double v : fine.drift) r.martingale_drift = std::max(r.martingale_drift, std::abs(v));
  for (std::size_t j = 1; j <= cc.n_steps; ++j) {
    const std::size_t k = 2 * j;
    const double err = std::hypot(fine.drift_se[k], std::sqrt(fine.drift_part_var[k])) +
                       std::abs(fine.drift[k] - coarse.drift[j]);
    const double v = std::abs(fine.drift[k]);
    const double ratio = v / std::max(err, 1e-300);
    if (ratio >= r.drift_ratio) {
      r.drift_ratio = ratio;
      r.drift_error = err;
    }
  }
  return r;
}

}  // namespace mfcalc

namespace mfcalc {

ClosedFormDerivatives closed_form_derivatives(
    const TimeFunctional& F, double t, std::span<const double> x, const EmpiricalMeasure& mu,
    const std::vector<std::vector<double>>& ys,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const std::size_t d = F.dim();
  if (x.size() != d || mu.dim() != d) throw InvalidInput("closed_form_derivatives: dimension mismatch");
  const auto& kernels = F.kernels();
  const std::size_t S = kernels.size();
  std::vector<double> z(S, 0.0);
  for (std::size_t l = 0; l < mu.size(); ++l) {
    for (std::size_t s = 0; s < S; ++s) z[s] += kernels[s].value(mu.point(l));
  }
  for (double& v : z) v /= static_cast<double>(mu.size());

  OuterDerivatives g;
  ClosedFormDerivatives out;
  F.eval(t, x, z, g, out.dt);
  out.value = g.value;
  out.dx = g.dx;
  out.dxx = g.dxx;

  // Kernel gradients and Hessians at every y.
  std::vector<std::vector<double>> kg(ys.size(), std::vector<double>(S * d));
  std::vector<std::vector<double>> kh(ys.size(), std::vector<double>(S * d * d));
  std::vector<double> grad(d), hess(d * d);
  for (std::size_t q = 0; q < ys.size(); ++q) {
    if (ys[q].size() != d) throw InvalidInput("closed_form_derivatives: probe dimension");
    for (std::size_t s = 0; s < S; ++s) {
      double v;
      kernels[s].eval(ys[q], v, grad, hess);
      std::copy(grad.begin(), grad.end(), kg[q].begin() + s * d);
      std::copy(hess.begin(), hess.end(), kh[q].begin() + s * d * d);
    }
  }
  for (std::size_t q = 0; q < ys.size(); ++q) {
    std::vector<double> first(d, 0.0), mixed(d * d, 0.0), dy(d * d, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < d; ++k) {
        first[k] += g.dz[s] * kg[q][s * d + k];
        for (std::size_t i = 0; i < d; ++i) {
          mixed[i * d + k] += g.dxdz[i * S + s] * kg[q][s * d + k];
          dy[i * d + k] += g.dz[s] * kh[q][s * d * d + i * d + k];
        }
      }
    }
    out.dmu.push_back(std::move(first));
    out.dx_dmu.push_back(std::move(mixed));
    out.dy_dmu.push_back(std::move(dy));
  }
  for (const auto& [a, b] : pairs) {
    if (d != 1) throw UnsupportedConfiguration("closed_form_derivatives: pairs need d = 1");
    if (a >= ys.size() || b >= ys.size()) throw InvalidInput("closed_form_derivatives: bad pair");
    double acc = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t r = 0; r < S; ++r) acc += g.dzz[s * S + r] * kg[a][s] * kg[b][r];
    }
    out.d2mu.push_back(acc);
  }
  return out;
}

}  // namespace mfcalc
