#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mfcalc/cylinder.hpp"
#include "mfcalc/measure.hpp"
#include "mfcalc/rng.hpp"

namespace mfcalc {

/// dX = sigma(X, mu) dB + b(X, mu) dt with sigma d x d and b in R^d, every
/// entry a cylinder functional.
struct CoefficientSet {
  std::size_t dim = 1;
  std::vector<CylinderFunctional> sigma;  // d*d row-major: sigma[a*d + e]
  std::vector<CylinderFunctional> drift;  // d

  CoefficientSet(std::size_t d, std::vector<CylinderFunctional> sigma,
                 std::vector<CylinderFunctional> drift);

  /// One entry of the flattened component list: row a of the state is driven
  /// by increment `inc` (0..d-1 = Brownian components, d = dt).
  struct Component {
    std::size_t row;
    std::size_t inc;
    const CylinderFunctional* f;
  };
  /// Non-zero components only, sigma first then drift.
  std::vector<Component> components() const;

  bool measure_dependent() const;
};

struct SimConfig {
  std::size_t n_particles = 1024;
  std::size_t n_steps = 256;
  double t_start = 0.0;
  double t_end = 1.0;
  std::uint64_t seed = 1;
  /// Noise for grid step k is drawn at counter step_offset + k. Restarts use it
  /// to replay the increments of a longer run.
  std::uint64_t step_offset = 0;
  /// Sort initial samples before assigning particle streams, so results depend
  /// on the initial law only.
  bool canonical_order = true;
  /// Each increment is the sum of this many finer draws at counters
  /// (step_offset + k) * substeps + i. A run with K/2 steps and substeps 2
  /// sees the Brownian path of a K-step run with substeps 1.
  std::uint32_t noise_substeps = 1;

  double dt() const { return (t_end - t_start) / static_cast<double>(n_steps); }
  void validate() const;
};

inline constexpr double kBlowUpThreshold = 1e12;

/// Moments of every component's kernels at one step, laid out per component in
/// the order of CoefficientSet::components().
struct LawMoments {
  std::vector<double> values;
  std::vector<std::size_t> offset;  // per component
  std::span<const double> of(std::size_t c) const {
    const std::size_t end = c + 1 < offset.size() ? offset[c + 1] : values.size();
    return std::span<const double>(values).subspan(offset[c], end - offset[c]);
  }
};

LawMoments compute_moments(const std::vector<CoefficientSet::Component>& comps,
                           std::span<const double> states, std::size_t count);

/// One Euler step for a single path: out = x + sum_c f_c(x, z_c) inc_c.
/// `inc` holds d Brownian increments followed by dt.
void euler_step(const std::vector<CoefficientSet::Component>& comps, const LawMoments& law,
                std::span<const double> x, std::span<const double> inc, std::span<double> out);

/// Throws BlowUpError when a state entry is non-finite or beyond kBlowUpThreshold.
void check_state(std::span<const double> x, std::size_t step, std::size_t path);

/// Fills inc with the d Brownian increments of grid step k (see
/// SimConfig::noise_substeps) and appends dt.
void draw_increments(const NoiseSource& noise, const SimConfig& cfg, std::uint64_t stream,
                     std::size_t k, std::span<double> inc);

/// sigma(x, mu_k) and b(x, mu_k) from precomputed law moments.
class CoefficientEvaluator {
 public:
  explicit CoefficientEvaluator(const CoefficientSet& coeffs);
  /// sigma: d*d row-major, drift: d.
  void eval(const LawMoments& law, std::span<const double> x, std::span<double> sigma,
            std::span<double> drift) const;
  const std::vector<CoefficientSet::Component>& components() const noexcept { return comps_; }

 private:
  std::size_t d_;
  std::vector<CoefficientSet::Component> comps_;
};

class ParticleSystem {
 public:
  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t steps() const noexcept { return k_; }
  const SimConfig& config() const noexcept { return cfg_; }
  double time(std::size_t k) const { return cfg_.t_start + static_cast<double>(k) * cfg_.dt(); }

  /// States at step k, row-major N x d.
  std::span<const double> states(std::size_t k) const {
    return std::span<const double>(paths_).subspan(k * n_ * d_, n_ * d_);
  }
  std::span<const double> state(std::size_t k, std::size_t i) const {
    return std::span<const double>(paths_).subspan((k * n_ + i) * d_, d_);
  }
  EmpiricalMeasure law_at(std::size_t k) const;
  const LawMoments& moments(std::size_t k) const { return moments_[k]; }

  /// order()[p] is the caller's index of the initial sample carried by particle p.
  const std::vector<std::size_t>& order() const noexcept { return order_; }

  std::uint64_t particle_stream(std::size_t i) const { return i; }
  std::uint64_t pilot_stream(std::size_t m) const { return n_ + m; }

 private:
  friend ParticleSystem simulate_particles(const CoefficientSet&, const EmpiricalMeasure&,
                                           const SimConfig&);
  std::size_t n_ = 0, d_ = 0, k_ = 0;
  SimConfig cfg_;
  std::vector<double> paths_;  // (K+1) x N x d
  std::vector<LawMoments> moments_;
  std::vector<std::size_t> order_;
};

struct PilotPath {
  std::vector<double> start;
  std::vector<double> path;  // (K+1) x d
  std::uint64_t stream = 0;

  std::span<const double> at(std::size_t k) const {
    return std::span<const double>(path).subspan(k * start.size(), start.size());
  }
};

ParticleSystem simulate_particles(const CoefficientSet& coeffs, const EmpiricalMeasure& init,
                                  const SimConfig& cfg);

PilotPath simulate_pilot(const CoefficientSet& coeffs, std::span<const double> x,
                         const ParticleSystem& system, std::uint64_t stream);

/// Restart identity on [t_{k*}, T]: max |restarted - original| over particles
/// and pilot.
double flow_check(const CoefficientSet& coeffs, const EmpiricalMeasure& init, const SimConfig& cfg,
                  std::span<const double> x, std::size_t split_step);

/// max |pilot(x = xi_i, stream i) - particle i| over grid and the given particles.
double consistency_check(const CoefficientSet& coeffs, const ParticleSystem& system,
                         std::span<const std::size_t> particles);

/// max |pilot - pilot'| where the second run uses a permuted copy of init.
double permutation_check(const CoefficientSet& coeffs, const EmpiricalMeasure& init,
                         const SimConfig& cfg, std::span<const double> x,
                         std::span<const std::size_t> order, std::size_t n_pilots = 4);

struct LipschitzPair {
  std::vector<double> x1;
  EmpiricalMeasure init1;
  std::vector<double> x2;
  EmpiricalMeasure init2;
};

/// max over pairs of sqrt(E sup_s |dX_s|^2) / (|dx| + W2(init1, init2)), the
/// expectation over `n_pilots` common pilot streams.
double lipschitz_probe(const CoefficientSet& coeffs, const SimConfig& cfg,
                       std::span<const LipschitzPair> pairs, std::size_t n_pilots = 64);

/// W2(law_T(init2), law_T(init1)) / W2(init1, init2) under common particle streams.
double w2_stability(const CoefficientSet& coeffs, const SimConfig& cfg,
                    const EmpiricalMeasure& init1, const EmpiricalMeasure& init2);

/// Sample from a named initial law on the dedicated sampler stream.
EmpiricalMeasure sample_gaussian(std::span<const double> mean, std::span<const double> std,
                                 std::size_t n, std::uint64_t seed);
EmpiricalMeasure sample_uniform(std::span<const double> lo, std::span<const double> hi,
                                std::size_t n, std::uint64_t seed);
EmpiricalMeasure sample_dirac(std::span<const double> c, std::size_t n);

/// CSV with columns step,time,particle_id,x0..x{d-1}.
void write_paths_csv(std::ostream& os, const ParticleSystem& system, std::size_t stride = 1);

}  // namespace mfcalc
