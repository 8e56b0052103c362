#include "mfcalc/tangents.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mfcalc/error.hpp"
#include "mfcalc/parallel.hpp"

namespace mfcalc {

Probe Probe::at(std::vector<double> y, std::size_t copies) {
  Probe p;
  p.kind = ProbeKind::point;
  p.y = std::move(y);
  p.copies = copies;
  return p;
}

Probe Probe::particle(std::size_t j) {
  Probe p;
  p.kind = ProbeKind::particle;
  p.index = j;
  return p;
}

Probe Probe::weighted(std::vector<double> eta, bool independent) {
  Probe p;
  p.kind = ProbeKind::weighted;
  p.direction = std::move(eta);
  p.independent = independent;
  return p;
}

std::vector<Probe> per_particle_probes(const ParticleSystem& system) {
  std::vector<Probe> out;
  out.reserve(system.size());
  for (std::size_t j = 0; j < system.size(); ++j) out.push_back(Probe::particle(j));
  return out;
}

std::vector<double> to_particle_order(const ParticleSystem& system, std::span<const double> v) {
  const std::size_t n = system.size(), d = system.dim();
  if (v.size() != n * d) throw InvalidInput("to_particle_order: expected N x d entries");
  std::vector<double> out(n * d);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t src = system.order()[p];
    std::copy(v.begin() + src * d, v.begin() + (src + 1) * d, out.begin() + p * d);
  }
  return out;
}

struct TangentSystem::Scratch {
  std::vector<OuterDerivatives> g;
  std::vector<double> du, dj, dk, duy, du2, xnew;
};

TangentSystem::TangentSystem(const CoefficientSet& coeffs, const ParticleSystem& system,
                             std::vector<std::vector<double>> pilot_starts,
                             std::vector<std::uint64_t> pilot_streams, std::vector<Probe> probes,
                             TangentOptions options)
    : coeffs_(&coeffs),
      sys_(&system),
      comps_(coeffs.components()),
      d_(coeffs.dim),
      n_(system.size()),
      n_pilots_(pilot_starts.size()),
      probes_(std::move(probes)),
      opts_(std::move(options)) {
  if (system.dim() != d_) throw InvalidInput("tangents: dimension mismatch");
  if (pilot_streams.size() != n_pilots_) throw InvalidInput("tangents: one stream per pilot");
  if (opts_.second_order && d_ != 1) {
    throw UnsupportedConfiguration("second-order tangents are implemented for d = 1 only");
  }
  if (!opts_.second_order && !opts_.pairs.empty()) {
    throw InvalidInput("tangents: probe pairs need second_order");
  }
  for (const auto& [a, b] : opts_.pairs) {
    if (a >= probes_.size() || b >= probes_.size()) throw InvalidInput("tangents: bad probe pair");
  }

  col_.resize(probes_.size());
  for (std::size_t q = 0; q < probes_.size(); ++q) {
    col_[q] = w_;
    w_ += probes_[q].width(d_);
  }

  std::vector<double> starts;
  for (std::size_t m = 0; m < n_pilots_; ++m) {
    if (pilot_starts[m].size() != d_) throw InvalidInput("tangents: pilot start dimension");
    starts.insert(starts.end(), pilot_starts[m].begin(), pilot_starts[m].end());
    fstream_.push_back(pilot_streams[m]);
  }
  std::map<std::size_t, std::size_t> particle_copy;
  auto copy_of_particle = [&](std::size_t l) {
    auto it = particle_copy.find(l);
    if (it != particle_copy.end()) return it->second;
    const auto x0 = system.state(0, l);
    starts.insert(starts.end(), x0.begin(), x0.end());
    fstream_.push_back(system.particle_stream(l));
    const std::size_t idx = fstream_.size() - 1;
    particle_copy.emplace(l, idx);
    return idx;
  };

  copies_.resize(probes_.size());
  for (std::size_t q = 0; q < probes_.size(); ++q) {
    const auto& pr = probes_[q];
    auto& list = copies_[q];
    switch (pr.kind) {
      case ProbeKind::point: {
        if (pr.y.size() != d_) throw InvalidInput("tangents: probe point dimension");
        const std::size_t r = pr.copies == 0 ? n_ : pr.copies;
        if (r > n_) throw InvalidInput("tangents: more copies than particle streams");
        std::vector<double> seed(d_ * d_, 0.0);
        for (std::size_t a = 0; a < d_; ++a) seed[a * d_ + a] = 1.0 / static_cast<double>(r);
        for (std::size_t c = 0; c < r; ++c) {
          starts.insert(starts.end(), pr.y.begin(), pr.y.end());
          fstream_.push_back(system.particle_stream(c));
          list.push_back({fstream_.size() - 1, seed});
        }
        break;
      }
      case ProbeKind::particle: {
        if (pr.index >= n_) throw InvalidInput("tangents: particle probe out of range");
        std::vector<double> seed(d_ * d_, 0.0);
        for (std::size_t a = 0; a < d_; ++a) seed[a * d_ + a] = 1.0;
        list.push_back({copy_of_particle(pr.index), seed});
        break;
      }
      case ProbeKind::weighted: {
        if (pr.direction.size() != n_ * d_) {
          throw InvalidInput("tangents: weighted probe needs N x d direction");
        }
        for (std::size_t l = 0; l < n_; ++l) {
          std::vector<double> seed(d_);
          bool any = false;
          for (std::size_t a = 0; a < d_; ++a) {
            seed[a] = pr.direction[l * d_ + a] / static_cast<double>(n_);
            any = any || seed[a] != 0.0;
          }
          if (!any) continue;
          if (pr.independent) {
            const auto x0 = system.state(0, l);
            starts.insert(starts.end(), x0.begin(), x0.end());
            fstream_.push_back(kIndependentCopyStream + l);
            list.push_back({fstream_.size() - 1, seed});
          } else {
            list.push_back({copy_of_particle(l), seed});
          }
        }
        break;
      }
    }
  }

  n_frozen_ = fstream_.size();
  n_ufrozen_ = opts_.second_order ? n_frozen_ : n_pilots_;
  const std::size_t P = opts_.pairs.size();
  fx_ = std::move(starts);
  fj_.assign(n_frozen_ * d_ * d_, 0.0);
  for (std::size_t f = 0; f < n_frozen_; ++f) {
    for (std::size_t a = 0; a < d_; ++a) fj_[f * d_ * d_ + a * d_ + a] = 1.0;
  }
  fu_.assign(n_ufrozen_ * d_ * w_, 0.0);
  pu_.assign(n_ * d_ * w_, 0.0);
  if (opts_.second_order) {
    fj2_.assign(n_frozen_, 0.0);
    fk_.assign(n_frozen_ * w_, 0.0);
    fuy_.assign(n_frozen_ * w_, 0.0);
    fu2_.assign(n_frozen_ * P, 0.0);
    puy_.assign(n_ * w_, 0.0);
    pu2_.assign(n_ * P, 0.0);
  }
}

std::vector<double> TangentSystem::pilot_U(std::size_t m, std::size_t q) const {
  const std::size_t w = width(q);
  std::vector<double> out(d_ * w);
  for (std::size_t a = 0; a < d_; ++a) {
    const auto row = pilot_U_row(m, a);
    std::copy(row.begin() + col_[q], row.begin() + col_[q] + w, out.begin() + a * w);
  }
  return out;
}

std::vector<double> TangentSystem::particle_U(std::size_t l, std::size_t q) const {
  const std::size_t w = width(q);
  std::vector<double> out(d_ * w);
  for (std::size_t a = 0; a < d_; ++a) {
    const auto row = particle_U_row(l, a);
    std::copy(row.begin() + col_[q], row.begin() + col_[q] + w, out.begin() + a * w);
  }
  return out;
}

Aggregates TangentSystem::aggregate(const std::vector<Kernel>& kernels) const {
  const std::size_t S = kernels.size();
  const std::size_t W = w_;
  const std::size_t P = opts_.pairs.size();
  const bool so = opts_.second_order;
  Aggregates ag;
  ag.kernels = S;
  ag.width = W;
  ag.pairs = P;
  ag.z.assign(S, 0.0);
  ag.dm.assign(S * W, 0.0);
  if (so) {
    ag.dym.assign(S * W, 0.0);
    ag.d2m.assign(S * P, 0.0);
  }
  if (S == 0) return ag;

  const double inv_n = 1.0 / static_cast<double>(n_);
  std::vector<double> grad(d_), hess(d_ * d_);
  std::vector<double> acc(W);
  for (std::size_t s = 0; s < S; ++s) {
    const Kernel& kern = kernels[s];
    double* dm = ag.dm.data() + s * W;
    double zsum = 0.0;

    // Particle part.
    for (std::size_t l = 0; l < n_; ++l) {
      double v;
      kern.eval(sys_->state(step_, l), v, grad, hess);
      zsum += v;
      for (std::size_t a = 0; a < d_; ++a) {
        const double c = grad[a] * inv_n;
        if (c == 0.0) continue;
        const double* u = pu_.data() + (l * d_ + a) * W;
        for (std::size_t col = 0; col < W; ++col) dm[col] += c * u[col];
      }
      if (so) {
        const double g1 = grad[0] * inv_n;
        const double h1 = hess[0] * inv_n;
        double* dym = ag.dym.data() + s * W;
        const double* uy = puy_.data() + l * W;
        for (std::size_t col = 0; col < W; ++col) dym[col] += g1 * uy[col];
        const double* u = pu_.data() + l * W;
        const double* u2 = pu2_.data() + l * P;
        for (std::size_t p = 0; p < P; ++p) {
          const double ua = u[col_[opts_.pairs[p].first]];
          const double ub = u[col_[opts_.pairs[p].second]];
          ag.d2m[s * P + p] += h1 * ua * ub + g1 * u2[p];
        }
      }
    }
    ag.z[s] = zsum * inv_n;

    // Copy part.
    for (std::size_t q = 0; q < probes_.size(); ++q) {
      const std::size_t w = width(q);
      for (const auto& cp : copies_[q]) {
        double v;
        kern.eval(std::span<const double>(fx_.data() + cp.path * d_, d_), v, grad, hess);
        const double* J = fj_.data() + cp.path * d_ * d_;
        for (std::size_t b = 0; b < d_; ++b) {
          double r = 0.0;
          for (std::size_t a = 0; a < d_; ++a) r += grad[a] * J[a * d_ + b];
          if (r == 0.0) continue;
          for (std::size_t i = 0; i < w; ++i) dm[col_[q] + i] += r * cp.seed[b * w + i];
        }
        if (so) {
          const double wt = cp.seed[0];
          const double j1 = J[0];
          ag.dym[s * W + col_[q]] += wt * (hess[0] * j1 * j1 + grad[0] * fj2_[cp.path]);
          const double* u = fu_.data() + cp.path * W;
          const double* k = fk_.data() + cp.path * W;
          for (std::size_t p = 0; p < P; ++p) {
            const auto [pa, pb] = opts_.pairs[p];
            if (pa == q) {
              const std::size_t c = col_[pb];
              ag.d2m[s * P + p] += wt * (hess[0] * j1 * u[c] + grad[0] * k[c]);
            }
            if (pb == q) {
              const std::size_t c = col_[pa];
              ag.d2m[s * P + p] += wt * (hess[0] * j1 * u[c] + grad[0] * k[c]);
            }
          }
        }
      }
    }
  }
  for (double v : ag.dm) {
    if (!std::isfinite(v)) throw NumericError("tangent aggregate became non-finite at step", step_);
  }
  return ag;
}

void TangentSystem::update_path(const PathRefs& p, std::span<const double> inc,
                                const LawMoments& law, const std::vector<Aggregates>& agg,
                                Scratch& s) const {
  const std::size_t W = w_;
  const std::size_t P = opts_.pairs.size();
  const bool so = opts_.second_order;
  s.g.resize(comps_.size());
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    s.g[c].resize(d_, comps_[c].f->num_kernels());
    comps_[c].f->derivatives(p.x, law.of(c), s.g[c]);
  }

  if (p.u) s.du.assign(d_ * W, 0.0);
  if (p.j) s.dj.assign(d_ * d_, 0.0);
  if (so) {
    if (p.k) s.dk.assign(W, 0.0);
    if (p.uy) s.duy.assign(W, 0.0);
    if (p.u2) s.du2.assign(P, 0.0);
  }
  double dj2 = 0.0;

  for (std::size_t c = 0; c < comps_.size(); ++c) {
    const auto& comp = comps_[c];
    const double dz = inc[comp.inc];
    const auto& g = s.g[c];
    const auto& ag = agg[c];
    const std::size_t S = ag.kernels;
    const std::size_t a = comp.row;

    if (so) {
      // d = 1: every object is scalar per column.
      const double gx = g.dx[0];
      const double gxx = g.dxx[0];
      const double J = p.j ? p.j[0] : 0.0;
      if (p.u2) {
        for (std::size_t pr = 0; pr < P; ++pr) {
          const std::size_t ca = col_[opts_.pairs[pr].first];
          const std::size_t cb = col_[opts_.pairs[pr].second];
          const double ua = p.u[ca], ub = p.u[cb];
          double v = gx * p.u2[pr] + gxx * ua * ub;
          for (std::size_t si = 0; si < S; ++si) {
            const double dma = ag.dm[si * W + ca], dmb = ag.dm[si * W + cb];
            v += g.dxdz[si] * (ua * dmb + ub * dma) + g.dz[si] * ag.d2m[si * P + pr];
            for (std::size_t t = 0; t < S; ++t) v += g.dzz[si * S + t] * dma * ag.dm[t * W + cb];
          }
          s.du2[pr] += dz * v;
        }
      }
      if (p.k) {
        for (std::size_t col = 0; col < W; ++col) {
          double v = gx * p.k[col] + gxx * J * p.u[col];
          for (std::size_t si = 0; si < S; ++si) v += g.dxdz[si] * J * ag.dm[si * W + col];
          s.dk[col] += dz * v;
        }
      }
      if (p.uy) {
        for (std::size_t col = 0; col < W; ++col) {
          double v = gx * p.uy[col];
          for (std::size_t si = 0; si < S; ++si) v += g.dz[si] * ag.dym[si * W + col];
          s.duy[col] += dz * v;
        }
      }
      if (p.j2) dj2 += dz * (gx * p.j2[0] + gxx * J * J);
    }

    if (p.u) {
      double* du = s.du.data() + a * W;
      for (std::size_t b = 0; b < d_; ++b) {
        const double c1 = dz * g.dx[b];
        if (c1 == 0.0) continue;
        const double* u = p.u + b * W;
        for (std::size_t col = 0; col < W; ++col) du[col] += c1 * u[col];
      }
      for (std::size_t si = 0; si < S; ++si) {
        const double c1 = dz * g.dz[si];
        if (c1 == 0.0) continue;
        const double* dm = ag.dm.data() + si * W;
        for (std::size_t col = 0; col < W; ++col) du[col] += c1 * dm[col];
      }
    }
    if (p.j) {
      for (std::size_t b = 0; b < d_; ++b) {
        const double c1 = dz * g.dx[b];
        if (c1 == 0.0) continue;
        for (std::size_t e = 0; e < d_; ++e) s.dj[a * d_ + e] += c1 * p.j[b * d_ + e];
      }
    }
    if (p.xout) p.xout[a] += g.value * dz;
  }

  if (so) {
    if (p.u2) for (std::size_t pr = 0; pr < P; ++pr) p.u2[pr] += s.du2[pr];
    if (p.k) for (std::size_t col = 0; col < W; ++col) p.k[col] += s.dk[col];
    if (p.uy) for (std::size_t col = 0; col < W; ++col) p.uy[col] += s.duy[col];
    if (p.j2) p.j2[0] += dj2;
  }
  if (p.u) for (std::size_t e = 0; e < d_ * W; ++e) p.u[e] += s.du[e];
  if (p.j) for (std::size_t e = 0; e < d_ * d_; ++e) p.j[e] += s.dj[e];
}

void TangentSystem::advance() {
  const std::size_t k = step_;
  if (k >= sys_->steps()) throw InvalidInput("tangents: already at the final step");
  const auto& cfg = sys_->config();
  const NoiseSource noise(cfg.seed);
  const auto& law = sys_->moments(k);
  const std::size_t W = w_;
  const std::size_t P = opts_.pairs.size();
  const bool so = opts_.second_order;

  std::vector<Aggregates> agg;
  agg.reserve(comps_.size());
  for (const auto& comp : comps_) agg.push_back(aggregate(comp.f->kernels()));

  // Particles first: they read only the step-k frozen state through `agg`.
  parallel_for(0, n_, [&](std::size_t l) {
    thread_local Scratch s;
    thread_local std::vector<double> inc;
    inc.resize(d_ + 1);
    draw_increments(noise, cfg, sys_->particle_stream(l), k, inc);
    PathRefs r;
    r.x = sys_->state(k, l);
    r.u = pu_.data() + l * d_ * W;
    if (so) {
      r.uy = puy_.data() + l * W;
      r.u2 = pu2_.data() + l * P;
    }
    update_path(r, inc, law, agg, s);
  }, 16);

  parallel_for(0, n_frozen_, [&](std::size_t f) {
    thread_local Scratch s;
    thread_local std::vector<double> inc, xnew;
    inc.resize(d_ + 1);
    draw_increments(noise, cfg, fstream_[f], k, inc);
    std::span<double> xs(fx_.data() + f * d_, d_);
    xnew.assign(xs.begin(), xs.end());
    PathRefs r;
    r.x = xs;
    r.xout = xnew.data();
    r.j = fj_.data() + f * d_ * d_;
    if (f < n_ufrozen_) r.u = fu_.data() + f * d_ * W;
    if (so) {
      r.j2 = fj2_.data() + f;
      r.k = fk_.data() + f * W;
      if (f < n_pilots_) {
        r.uy = fuy_.data() + f * W;
        r.u2 = fu2_.data() + f * P;
      }
    }
    update_path(r, inc, law, agg, s);
    for (std::size_t a = 0; a < d_; ++a) {
      if (!std::isfinite(xnew[a]) || std::abs(xnew[a]) > kBlowUpThreshold) {
        throw BlowUpError(k + 1, f);
      }
      xs[a] = xnew[a];
    }
  }, 16);
  ++step_;
}

void TangentSystem::run(const Observer& observer) {
  if (observer) observer(*this, step_);
  while (step_ < sys_->steps()) {
    advance();
    if (observer) observer(*this, step_);
  }
}

namespace {

double sup_abs(std::span<const double> v, double cur) {
  for (double x : v) cur = std::max(cur, std::abs(x));
  return cur;
}

}  // namespace

FirstOrderTangents integrate_first_order(const CoefficientSet& coeffs,
                                         const ParticleSystem& system, const PilotPath& pilot,
                                         const std::vector<Probe>& probes,
                                         std::span<const std::size_t> record_particles) {
  TangentSystem ts(coeffs, system, {pilot.start}, {pilot.stream}, probes);
  const std::size_t d = coeffs.dim;
  const std::size_t K = system.steps();
  FirstOrderTangents out;
  out.dim = d;
  out.steps = K;
  out.recorded.assign(record_particles.begin(), record_particles.end());
  out.per_particle = probes.size() == system.size();
  for (std::size_t q = 0; q < probes.size(); ++q) {
    out.widths.push_back(ts.width(q));
    if (probes[q].kind != ProbeKind::particle || probes[q].index != q) out.per_particle = false;
  }
  out.pilot_path.reserve((K + 1) * d);
  out.dx_pilot.reserve((K + 1) * d * d);
  out.u_pilot.resize(probes.size());
  out.u_particles.assign(out.recorded.size(), std::vector<std::vector<double>>(probes.size()));
  ts.run([&](const TangentSystem& t, std::size_t) {
    const auto x = t.pilot_x(0);
    out.pilot_path.insert(out.pilot_path.end(), x.begin(), x.end());
    const auto j = t.pilot_J(0);
    out.dx_pilot.insert(out.dx_pilot.end(), j.begin(), j.end());
    out.sup_dx = sup_abs(j, out.sup_dx);
    for (std::size_t q = 0; q < probes.size(); ++q) {
      const auto u = t.pilot_U(0, q);
      out.u_pilot[q].insert(out.u_pilot[q].end(), u.begin(), u.end());
      out.sup_u = sup_abs(u, out.sup_u);
    }
    for (std::size_t r = 0; r < out.recorded.size(); ++r) {
      for (std::size_t q = 0; q < probes.size(); ++q) {
        const auto u = t.particle_U(out.recorded[r], q);
        out.u_particles[r][q].insert(out.u_particles[r][q].end(), u.begin(), u.end());
      }
    }
  });
  return out;
}

SecondOrderTangents integrate_second_order(const CoefficientSet& coeffs,
                                           const ParticleSystem& system, const PilotPath& pilot,
                                           const std::vector<Probe>& probes,
                                           std::vector<std::pair<std::size_t, std::size_t>> pairs) {
  if (coeffs.dim != 1) {
    throw UnsupportedConfiguration("second-order tangents are implemented for d = 1 only");
  }
  TangentOptions opt;
  opt.second_order = true;
  opt.pairs = pairs;
  TangentSystem ts(coeffs, system, {pilot.start}, {pilot.stream}, probes, opt);
  const std::size_t K = system.steps();
  SecondOrderTangents out;
  out.pairs = std::move(pairs);
  auto& f = out.first;
  f.dim = 1;
  f.steps = K;
  f.widths.assign(probes.size(), 1);
  f.u_pilot.resize(probes.size());
  out.dmu_dx.resize(probes.size());
  out.dy_dmu.resize(probes.size());
  out.u2.resize(out.pairs.size());
  ts.run([&](const TangentSystem& t, std::size_t) {
    f.pilot_path.push_back(t.pilot_x(0)[0]);
    f.dx_pilot.push_back(t.pilot_J(0)[0]);
    f.sup_dx = std::max(f.sup_dx, std::abs(t.pilot_J(0)[0]));
    out.dxx_pilot.push_back(t.pilot_J2(0));
    out.sup_second = std::max(out.sup_second, std::abs(t.pilot_J2(0)));
    const auto u = t.pilot_U_row(0, 0);
    const auto k = t.pilot_K(0);
    const auto uy = t.pilot_Uy(0);
    for (std::size_t q = 0; q < probes.size(); ++q) {
      const std::size_t c = t.column(q);
      f.u_pilot[q].push_back(u[c]);
      f.sup_u = std::max(f.sup_u, std::abs(u[c]));
      out.dmu_dx[q].push_back(k[c]);
      out.dy_dmu[q].push_back(uy[c]);
      out.sup_second = std::max({out.sup_second, std::abs(k[c]), std::abs(uy[c])});
    }
    const auto u2 = t.pilot_U2(0);
    for (std::size_t p = 0; p < u2.size(); ++p) {
      out.u2[p].push_back(u2[p]);
      out.sup_second = std::max(out.sup_second, std::abs(u2[p]));
    }
  });
  return out;
}

std::vector<double> frechet_directional(const FirstOrderTangents& t1, const ParticleSystem& system,
                                        std::span<const double> eta, std::size_t step) {
  if (!t1.per_particle) {
    throw InvalidInput("frechet_directional: tangents were not integrated per particle");
  }
  if (step > t1.steps) throw InvalidInput("frechet_directional: step out of range");
  const std::size_t n = system.size(), d = system.dim();
  const auto e = to_particle_order(system, eta);
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto u = t1.u_at(j, step);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t i = 0; i < d; ++i) out[a] += u[a * d + i] * e[j * d + i];
    }
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

std::vector<double> fd_directional_oracle(const CoefficientSet& coeffs,
                                          const EmpiricalMeasure& init, const SimConfig& cfg,
                                          std::span<const double> x, std::span<const double> eta,
                                          double h, bool central) {
  if (!(h > 0.0)) throw InvalidInput("fd_directional_oracle: h must be positive");
  const std::size_t n = init.size(), d = init.dim();
  if (eta.size() != n * d) throw InvalidInput("fd_directional_oracle: eta must be N x d");

  // Fix the particle order once so base and perturbed runs pair sample i with
  // the same noise stream.
  std::vector<double> base, dir;
  if (cfg.canonical_order) {
    const auto order = canonical_permutation(init);
    base.resize(n * d);
    dir.resize(n * d);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t src = order[p];
      const auto pt = init.point(src);
      std::copy(pt.begin(), pt.end(), base.begin() + p * d);
      std::copy(eta.begin() + src * d, eta.begin() + (src + 1) * d, dir.begin() + p * d);
    }
  } else {
    base.assign(init.samples().begin(), init.samples().end());
    dir.assign(eta.begin(), eta.end());
  }
  SimConfig fixed = cfg;
  fixed.canonical_order = false;

  auto run = [&](double step) {
    std::vector<double> s(base);
    for (std::size_t e = 0; e < s.size(); ++e) s[e] += step * dir[e];
    const auto sys = simulate_particles(coeffs, EmpiricalMeasure(std::move(s), d), fixed);
    return simulate_pilot(coeffs, x, sys, sys.pilot_stream(0)).path;
  };
  const auto up = run(h);
  const auto dn = central ? run(-h) : run(0.0);
  const double denom = central ? 2.0 * h : h;
  std::vector<double> out(up.size());
  for (std::size_t e = 0; e < up.size(); ++e) out[e] = (up[e] - dn[e]) / denom;
  return out;
}

SymmetryReport mixed_symmetry_check(const CoefficientSet& coeffs, const ParticleSystem& system,
                                    std::span<const double> x, const std::vector<Probe>& probes,
                                    double h) {
  if (coeffs.dim != 1) {
    throw UnsupportedConfiguration("mixed_symmetry_check is implemented for d = 1 only");
  }
  const std::uint64_t stream = system.pilot_stream(0);
  const std::vector<double> x0(x.begin(), x.end());
  const auto pilot = simulate_pilot(coeffs, x0, system, stream);
  const auto t2 = integrate_second_order(coeffs, system, pilot, probes, {});
  const auto up = integrate_first_order(coeffs, system,
                                        simulate_pilot(coeffs, std::vector<double>{x0[0] + h},
                                                       system, stream),
                                        probes);
  const auto dn = integrate_first_order(coeffs, system,
                                        simulate_pilot(coeffs, std::vector<double>{x0[0] - h},
                                                       system, stream),
                                        probes);
  SymmetryReport r;
  for (std::size_t q = 0; q < probes.size(); ++q) {
    for (std::size_t k = 0; k <= system.steps(); ++k) {
      const double fd = (up.u_pilot[q][k] - dn.u_pilot[q][k]) / (2.0 * h);
      const double an = t2.dmu_dx[q][k];
      r.discrepancy = std::max(r.discrepancy, std::abs(fd - an));
      r.scale = std::max(r.scale, std::abs(an));
    }
  }
  return r;
}

double tangent_consistency_check(const CoefficientSet& coeffs, const ParticleSystem& system,
                                 const std::vector<Probe>& probes,
                                 std::span<const std::size_t> particles) {
  std::vector<std::vector<double>> starts;
  std::vector<std::uint64_t> streams;
  for (std::size_t l : particles) {
    if (l >= system.size()) throw InvalidInput("tangent_consistency_check: particle out of range");
    const auto x0 = system.state(0, l);
    starts.emplace_back(x0.begin(), x0.end());
    streams.push_back(system.particle_stream(l));
  }
  TangentSystem ts(coeffs, system, std::move(starts), std::move(streams), probes);
  double worst = 0.0;
  ts.run([&](const TangentSystem& t, std::size_t k) {
    for (std::size_t m = 0; m < particles.size(); ++m) {
      const auto xp = t.pilot_x(m);
      const auto xs = system.state(k, particles[m]);
      for (std::size_t a = 0; a < xp.size(); ++a) worst = std::max(worst, std::abs(xp[a] - xs[a]));
      for (std::size_t a = 0; a < t.dim(); ++a) {
        const auto up = t.pilot_U_row(m, a);
        const auto ul = t.particle_U_row(particles[m], a);
        for (std::size_t c = 0; c < up.size(); ++c) worst = std::max(worst, std::abs(up[c] - ul[c]));
      }
    }
  });
  return worst;
}

}  // namespace mfcalc
