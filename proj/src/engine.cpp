#include "mfcalc/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mfcalc/error.hpp"
#include "mfcalc/parallel.hpp"

namespace mfcalc {

CoefficientSet::CoefficientSet(std::size_t d, std::vector<CylinderFunctional> s,
                               std::vector<CylinderFunctional> b)
    : dim(d), sigma(std::move(s)), drift(std::move(b)) {
  if (dim == 0) throw InvalidInput("coefficients: dimension must be positive");
  if (sigma.size() != dim * dim) throw InvalidInput("coefficients: sigma needs d*d entries");
  if (drift.size() != dim) throw InvalidInput("coefficients: drift needs d entries");
  for (const auto& f : sigma) {
    if (f.dim() != dim) throw InvalidInput("coefficients: sigma entry has wrong dimension");
  }
  for (const auto& f : drift) {
    if (f.dim() != dim) throw InvalidInput("coefficients: drift entry has wrong dimension");
  }
}

std::vector<CoefficientSet::Component> CoefficientSet::components() const {
  std::vector<Component> out;
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t e = 0; e < dim; ++e) {
      const auto& f = sigma[a * dim + e];
      if (!f.is_zero()) out.push_back({a, e, &f});
    }
  }
  for (std::size_t a = 0; a < dim; ++a) {
    if (!drift[a].is_zero()) out.push_back({a, dim, &drift[a]});
  }
  return out;
}

bool CoefficientSet::measure_dependent() const {
  for (const auto& f : sigma) {
    if (f.depends_on_measure()) return true;
  }
  for (const auto& f : drift) {
    if (f.depends_on_measure()) return true;
  }
  return false;
}

void SimConfig::validate() const {
  if (n_particles < 2) throw InvalidInput("sim config: need at least two particles");
  if (n_steps < 1) throw InvalidInput("sim config: need at least one step");
  if (noise_substeps < 1) throw InvalidInput("sim config: noise_substeps must be positive");
  if (!(t_end > t_start) || !std::isfinite(t_start) || !std::isfinite(t_end)) {
    throw InvalidInput("sim config: need t_start < t_end");
  }
}

LawMoments compute_moments(const std::vector<CoefficientSet::Component>& comps,
                           std::span<const double> states, std::size_t count) {
  LawMoments law;
  law.offset.resize(comps.size());
  std::size_t total = 0;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    law.offset[c] = total;
    total += comps[c].f->num_kernels();
  }
  law.values.assign(total, 0.0);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const std::size_t m = comps[c].f->num_kernels();
    if (m == 0) continue;
    comps[c].f->moments(states, count, std::span<double>(law.values).subspan(law.offset[c], m));
  }
  return law;
}

void euler_step(const std::vector<CoefficientSet::Component>& comps, const LawMoments& law,
                std::span<const double> x, std::span<const double> inc, std::span<double> out) {
  std::copy(x.begin(), x.end(), out.begin());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const auto& comp = comps[c];
    out[comp.row] += comp.f->value_at(x, law.of(c)) * inc[comp.inc];
  }
}

void draw_increments(const NoiseSource& noise, const SimConfig& cfg, std::uint64_t stream,
                     std::size_t k, std::span<double> inc) {
  const std::size_t d = inc.size() - 1;
  const double dt = cfg.dt();
  const std::uint32_t sub = cfg.noise_substeps;
  if (sub <= 1) {
    noise.normals(stream, cfg.step_offset + k, inc.first(d));
    const double s = std::sqrt(dt);
    for (std::size_t e = 0; e < d; ++e) inc[e] *= s;
  } else {
    thread_local std::vector<double> z;
    z.resize(d);
    std::fill(inc.begin(), inc.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
    const std::uint64_t base = (cfg.step_offset + k) * sub;
    for (std::uint32_t i = 0; i < sub; ++i) {
      noise.normals(stream, base + i, z);
      for (std::size_t e = 0; e < d; ++e) inc[e] += z[e];
    }
    const double s = std::sqrt(dt / sub);
    for (std::size_t e = 0; e < d; ++e) inc[e] *= s;
  }
  inc[d] = dt;
}

CoefficientEvaluator::CoefficientEvaluator(const CoefficientSet& coeffs)
    : d_(coeffs.dim), comps_(coeffs.components()) {}

void CoefficientEvaluator::eval(const LawMoments& law, std::span<const double> x,
                                std::span<double> sigma, std::span<double> drift) const {
  std::fill(sigma.begin(), sigma.end(), 0.0);
  std::fill(drift.begin(), drift.end(), 0.0);
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    const auto& comp = comps_[c];
    const double v = comp.f->value_at(x, law.of(c));
    if (comp.inc == d_) {
      drift[comp.row] = v;
    } else {
      sigma[comp.row * d_ + comp.inc] = v;
    }
  }
}

void check_state(std::span<const double> x, std::size_t step, std::size_t path) {
  for (double v : x) {
    if (!std::isfinite(v) || std::abs(v) > kBlowUpThreshold) throw BlowUpError(step, path);
  }
}

EmpiricalMeasure ParticleSystem::law_at(std::size_t k) const {
  const auto s = states(k);
  return EmpiricalMeasure(std::vector<double>(s.begin(), s.end()), d_);
}

ParticleSystem simulate_particles(const CoefficientSet& coeffs, const EmpiricalMeasure& init,
                                  const SimConfig& cfg) {
  cfg.validate();
  if (init.size() != cfg.n_particles) {
    throw InvalidInput("simulate_particles: initial measure size differs from n_particles");
  }
  if (init.dim() != coeffs.dim) throw InvalidInput("simulate_particles: dimension mismatch");

  ParticleSystem sys;
  sys.n_ = cfg.n_particles;
  sys.d_ = coeffs.dim;
  sys.k_ = cfg.n_steps;
  sys.cfg_ = cfg;
  const std::size_t n = sys.n_, d = sys.d_, K = sys.k_;
  if (cfg.canonical_order) {
    sys.order_ = canonical_permutation(init);
  } else {
    sys.order_.resize(n);
    std::iota(sys.order_.begin(), sys.order_.end(), 0);
  }
  sys.paths_.resize((K + 1) * n * d);
  for (std::size_t p = 0; p < n; ++p) {
    const auto src = init.point(sys.order_[p]);
    std::copy(src.begin(), src.end(), sys.paths_.begin() + p * d);
  }

  const auto comps = coeffs.components();
  const NoiseSource noise(cfg.seed);
  sys.moments_.reserve(K + 1);
  for (std::size_t k = 0; k <= K; ++k) {
    sys.moments_.push_back(compute_moments(comps, sys.states(k), n));
    if (k == K) break;
    const double* cur = sys.paths_.data() + k * n * d;
    double* next = sys.paths_.data() + (k + 1) * n * d;
    const auto& law = sys.moments_[k];
    parallel_for(0, n, [&](std::size_t i) {
      thread_local std::vector<double> inc;
      inc.resize(d + 1);
      draw_increments(noise, cfg, sys.particle_stream(i), k, inc);
      std::span<double> out(next + i * d, d);
      euler_step(comps, law, std::span<const double>(cur + i * d, d), inc, out);
      check_state(out, k + 1, i);
    });
  }
  return sys;
}

PilotPath simulate_pilot(const CoefficientSet& coeffs, std::span<const double> x,
                         const ParticleSystem& system, std::uint64_t stream) {
  const std::size_t d = coeffs.dim;
  if (x.size() != d || system.dim() != d) throw InvalidInput("simulate_pilot: dimension mismatch");
  const std::size_t K = system.steps();
  const auto& cfg = system.config();
  const auto comps = coeffs.components();
  const NoiseSource noise(cfg.seed);

  PilotPath p;
  p.start.assign(x.begin(), x.end());
  p.stream = stream;
  p.path.resize((K + 1) * d);
  std::copy(x.begin(), x.end(), p.path.begin());
  check_state(x, 0, 0);
  std::vector<double> inc(d + 1);
  for (std::size_t k = 0; k < K; ++k) {
    draw_increments(noise, cfg, stream, k, inc);
    std::span<double> out(p.path.data() + (k + 1) * d, d);
    euler_step(comps, system.moments(k), p.at(k), inc, out);
    check_state(out, k + 1, 0);
  }
  return p;
}

double flow_check(const CoefficientSet& coeffs, const EmpiricalMeasure& init, const SimConfig& cfg,
                  std::span<const double> x, std::size_t split_step) {
  if (split_step == 0 || split_step >= cfg.n_steps) {
    throw InvalidInput("flow_check: split step must lie strictly inside the grid");
  }
  const auto sys = simulate_particles(coeffs, init, cfg);
  const auto pilot = simulate_pilot(coeffs, x, sys, sys.pilot_stream(0));

  SimConfig rc = cfg;
  rc.t_start = sys.time(split_step);
  rc.n_steps = cfg.n_steps - split_step;
  rc.step_offset = cfg.step_offset + split_step;
  rc.canonical_order = false;  // particle p keeps stream p
  const auto mid = sys.states(split_step);
  const auto restarted =
      simulate_particles(coeffs, EmpiricalMeasure({mid.begin(), mid.end()}, coeffs.dim), rc);
  const auto rpilot =
      simulate_pilot(coeffs, pilot.at(split_step), restarted, sys.pilot_stream(0));

  double worst = 0.0;
  for (std::size_t j = 0; j <= rc.n_steps; ++j) {
    const auto a = sys.states(split_step + j);
    const auto b = restarted.states(j);
    for (std::size_t e = 0; e < a.size(); ++e) worst = std::max(worst, std::abs(a[e] - b[e]));
    const auto pa = pilot.at(split_step + j);
    const auto pb = rpilot.at(j);
    for (std::size_t e = 0; e < pa.size(); ++e) worst = std::max(worst, std::abs(pa[e] - pb[e]));
  }
  return worst;
}

double consistency_check(const CoefficientSet& coeffs, const ParticleSystem& system,
                         std::span<const std::size_t> particles) {
  double worst = 0.0;
  for (std::size_t i : particles) {
    if (i >= system.size()) throw InvalidInput("consistency_check: particle out of range");
    const auto p = simulate_pilot(coeffs, system.state(0, i), system, system.particle_stream(i));
    for (std::size_t k = 0; k <= system.steps(); ++k) {
      const auto a = p.at(k);
      const auto b = system.state(k, i);
      for (std::size_t e = 0; e < a.size(); ++e) worst = std::max(worst, std::abs(a[e] - b[e]));
    }
  }
  return worst;
}

double permutation_check(const CoefficientSet& coeffs, const EmpiricalMeasure& init,
                         const SimConfig& cfg, std::span<const double> x,
                         std::span<const std::size_t> order, std::size_t n_pilots) {
  const auto s1 = simulate_particles(coeffs, init, cfg);
  const auto s2 = simulate_particles(coeffs, init.permuted(order), cfg);
  double worst = 0.0;
  for (std::size_t m = 0; m < n_pilots; ++m) {
    const auto p1 = simulate_pilot(coeffs, x, s1, s1.pilot_stream(m));
    const auto p2 = simulate_pilot(coeffs, x, s2, s2.pilot_stream(m));
    for (std::size_t e = 0; e < p1.path.size(); ++e) {
      worst = std::max(worst, std::abs(p1.path[e] - p2.path[e]));
    }
  }
  return worst;
}

double lipschitz_probe(const CoefficientSet& coeffs, const SimConfig& cfg,
                       std::span<const LipschitzPair> pairs, std::size_t n_pilots) {
  double worst = 0.0;
  for (const auto& pr : pairs) {
    double gap = 0.0;
    for (std::size_t e = 0; e < pr.x1.size(); ++e) gap += (pr.x1[e] - pr.x2[e]) * (pr.x1[e] - pr.x2[e]);
    gap = std::sqrt(gap) + w2_distance(pr.init1, pr.init2);
    if (gap == 0.0) continue;
    const auto s1 = simulate_particles(coeffs, pr.init1, cfg);
    const auto s2 = simulate_particles(coeffs, pr.init2, cfg);
    double acc = 0.0;
    for (std::size_t m = 0; m < n_pilots; ++m) {
      const auto p1 = simulate_pilot(coeffs, pr.x1, s1, s1.pilot_stream(m));
      const auto p2 = simulate_pilot(coeffs, pr.x2, s2, s2.pilot_stream(m));
      double sup = 0.0;
      for (std::size_t k = 0; k <= s1.steps(); ++k) {
        double r2 = 0.0;
        const auto a = p1.at(k);
        const auto b = p2.at(k);
        for (std::size_t e = 0; e < a.size(); ++e) r2 += (a[e] - b[e]) * (a[e] - b[e]);
        sup = std::max(sup, r2);
      }
      acc += sup;
    }
    worst = std::max(worst, std::sqrt(acc / static_cast<double>(n_pilots)) / gap);
  }
  return worst;
}

double w2_stability(const CoefficientSet& coeffs, const SimConfig& cfg,
                    const EmpiricalMeasure& init1, const EmpiricalMeasure& init2) {
  const double w0 = w2_distance(init1, init2);
  if (w0 == 0.0) return 0.0;
  const auto s1 = simulate_particles(coeffs, init1, cfg);
  const auto s2 = simulate_particles(coeffs, init2, cfg);
  return w2_distance(s1.law_at(s1.steps()), s2.law_at(s2.steps())) / w0;
}

EmpiricalMeasure sample_gaussian(std::span<const double> mean, std::span<const double> std,
                                 std::size_t n, std::uint64_t seed) {
  const std::size_t d = mean.size();
  if (d == 0 || std.size() != d) throw InvalidInput("gaussian sampler: mean/std mismatch");
  const NoiseSource noise(seed);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < d; ++e) {
      out[i * d + e] = mean[e] + std[e] * noise.normal(kInitSamplerStream, i, static_cast<std::uint32_t>(e));
    }
  }
  return EmpiricalMeasure(std::move(out), d);
}

EmpiricalMeasure sample_uniform(std::span<const double> lo, std::span<const double> hi,
                                std::size_t n, std::uint64_t seed) {
  const std::size_t d = lo.size();
  if (d == 0 || hi.size() != d) throw InvalidInput("uniform sampler: bounds mismatch");
  const NoiseSource noise(seed);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < d; ++e) {
      const double u = noise.uniform(kInitSamplerStream, i, static_cast<std::uint32_t>(e));
      out[i * d + e] = lo[e] + (hi[e] - lo[e]) * u;
    }
  }
  return EmpiricalMeasure(std::move(out), d);
}

EmpiricalMeasure sample_dirac(std::span<const double> c, std::size_t n) {
  std::vector<double> out;
  out.reserve(n * c.size());
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), c.begin(), c.end());
  return EmpiricalMeasure(std::move(out), c.size());
}

void write_paths_csv(std::ostream& os, const ParticleSystem& system, std::size_t stride) {
  const std::size_t d = system.dim();
  os << "step,time,particle_id";
  for (std::size_t e = 0; e < d; ++e) os << ",x" << e;
  os << '\n';
  os.precision(17);
  for (std::size_t k = 0; k <= system.steps(); k += std::max<std::size_t>(1, stride)) {
    for (std::size_t i = 0; i < system.size(); ++i) {
      os << k << ',' << system.time(k) << ',' << i;
      for (double v : system.state(k, i)) os << ',' << v;
      os << '\n';
    }
  }
}

}  // namespace mfcalc
