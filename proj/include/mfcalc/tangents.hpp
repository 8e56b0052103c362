#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "mfcalc/engine.hpp"

namespace mfcalc {

enum class ProbeKind { point, particle, weighted };

/// Where a measure derivative d_mu(.)(y) is taken.
///   point:    y in R^d, the independent copy X^{t,y} realized by `copies`
///             paths started at y on particle streams 0..copies-1 (0 = N)
///   particle: y = xi_j; d_mu is N times the derivative in particle j's
///             initial position
///   weighted: the directional combination (1/N) sum_j d_mu(.)(xi_j) eta_j,
///             eta given per particle in the system's particle order; the
///             copy behind xi_j is particle j itself, or with `independent`
///             a path from xi_j on its own stream (the independent-copy
///             representation, exact only as N grows)
struct Probe {
  ProbeKind kind = ProbeKind::point;
  std::vector<double> y;
  std::size_t index = 0;
  std::vector<double> direction;  // N x d
  std::size_t copies = 0;
  bool independent = false;

  static Probe at(std::vector<double> y, std::size_t copies = 0);
  static Probe particle(std::size_t j);
  static Probe weighted(std::vector<double> eta, bool independent = false);

  std::size_t width(std::size_t d) const { return kind == ProbeKind::weighted ? 1 : d; }
};

/// Probe j = particle j for every particle, in particle order.
std::vector<Probe> per_particle_probes(const ParticleSystem& system);

/// Reorders a caller-indexed N x d array into the system's particle order.
std::vector<double> to_particle_order(const ParticleSystem& system, std::span<const double> v);

struct TangentOptions {
  bool second_order = false;                             // d = 1 only
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // probe index pairs for d^2_mu
};

/// Measure-derivative aggregates of a kernel list at the current step.
/// For kernel s and tangent column c (probe q owns columns
/// [column(q), column(q) + width(q))):
///   z[s]          = <mu, kappa_s>
///   dm[s*W + c]   = d_mu z_s along column c
///   dym[s*W + c]  = d_y of dm (d = 1, second order)
///   d2m[s*P + p]  = second measure derivative along pair p (d = 1, second order)
struct Aggregates {
  std::size_t kernels = 0, width = 0, pairs = 0;
  std::vector<double> z, dm, dym, d2m;
};

/// Couples the carrying particle system with frozen-law paths (pilots and
/// the copies behind each probe) and integrates, with the same Euler grid
/// and increments, every tangent process:
///   J  = d_x X, J2 = d_x^2 X, U(q) = d_mu X(q), K(q) = d_x d_mu X(q),
///   Uy(q) = d_y d_mu X(q), U2(p, q) = d^2_mu X(p, q).
/// The recursions are the exact derivatives of the discrete scheme, so
/// finite differences with common noise agree to O(h^2).
class TangentSystem {
 public:
  using Observer = std::function<void(const TangentSystem&, std::size_t)>;

  TangentSystem(const CoefficientSet& coeffs, const ParticleSystem& system,
                std::vector<std::vector<double>> pilot_starts,
                std::vector<std::uint64_t> pilot_streams, std::vector<Probe> probes,
                TangentOptions options = {});

  /// Integrates to the final step; `observer(*this, k)` sees step k = 0..K.
  void run(const Observer& observer = {});

  std::size_t step() const noexcept { return step_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t num_pilots() const noexcept { return n_pilots_; }
  std::size_t num_probes() const noexcept { return probes_.size(); }
  std::size_t num_pairs() const noexcept { return opts_.pairs.size(); }
  std::size_t total_width() const noexcept { return w_; }
  std::size_t column(std::size_t q) const { return col_[q]; }
  std::size_t width(std::size_t q) const { return probes_[q].width(d_); }
  bool second_order() const noexcept { return opts_.second_order; }
  const ParticleSystem& system() const noexcept { return *sys_; }
  const CoefficientSet& coefficients() const noexcept { return *coeffs_; }

  std::span<const double> pilot_x(std::size_t m) const { return {fx_.data() + m * d_, d_}; }
  std::span<const double> pilot_J(std::size_t m) const {
    return {fj_.data() + m * d_ * d_, d_ * d_};
  }
  /// Row a of U for pilot m over all columns.
  std::span<const double> pilot_U_row(std::size_t m, std::size_t a) const {
    return {fu_.data() + (m * d_ + a) * w_, w_};
  }
  /// d x width(q) block of U for pilot m and probe q.
  std::vector<double> pilot_U(std::size_t m, std::size_t q) const;
  double pilot_J2(std::size_t m) const { return fj2_[m]; }
  std::span<const double> pilot_K(std::size_t m) const { return {fk_.data() + m * w_, w_}; }
  std::span<const double> pilot_Uy(std::size_t m) const { return {fuy_.data() + m * w_, w_}; }
  std::span<const double> pilot_U2(std::size_t m) const {
    return {fu2_.data() + m * opts_.pairs.size(), opts_.pairs.size()};
  }

  std::span<const double> particle_x(std::size_t l) const { return sys_->state(step_, l); }
  std::span<const double> particle_U_row(std::size_t l, std::size_t a) const {
    return {pu_.data() + (l * d_ + a) * w_, w_};
  }
  std::vector<double> particle_U(std::size_t l, std::size_t q) const;

  /// Aggregates of an arbitrary kernel list at the current step.
  Aggregates aggregate(const std::vector<Kernel>& kernels) const;

 private:
  struct Copy {
    std::size_t path;
    std::vector<double> seed;  // d x width, weight folded in
  };
  struct Scratch;

  void advance();
  struct PathRefs {
    std::span<const double> x;
    double* xout = nullptr;
    double* u = nullptr;   // d x W
    double* j = nullptr;   // d x d
    double* j2 = nullptr;  // 1
    double* k = nullptr;   // W
    double* uy = nullptr;  // W
    double* u2 = nullptr;  // P
  };
  void update_path(const PathRefs& p, std::span<const double> inc, const LawMoments& law,
                   const std::vector<Aggregates>& agg, Scratch& s) const;

  const CoefficientSet* coeffs_;
  const ParticleSystem* sys_;
  std::vector<CoefficientSet::Component> comps_;
  std::size_t d_, n_, n_pilots_, n_frozen_ = 0, n_ufrozen_ = 0, w_ = 0, step_ = 0;
  std::vector<Probe> probes_;
  TangentOptions opts_;
  std::vector<std::size_t> col_;
  std::vector<std::vector<Copy>> copies_;
  std::vector<std::uint64_t> fstream_;

  // Frozen paths: pilots first, then copies.
  std::vector<double> fx_, fj_, fu_, fj2_, fk_, fuy_, fu2_;
  // Particles.
  std::vector<double> pu_, puy_, pu2_;
};

struct FirstOrderTangents {
  std::size_t dim = 1, steps = 0;
  std::vector<std::size_t> widths;           // per probe
  std::vector<double> pilot_path;            // (K+1) x d
  std::vector<double> dx_pilot;              // (K+1) x d x d
  std::vector<std::vector<double>> u_pilot;  // per probe, (K+1) x d x width
  std::vector<std::size_t> recorded;         // particle indices
  std::vector<std::vector<std::vector<double>>> u_particles;  // [recorded][probe] (K+1) x d x w
  bool per_particle = false;
  double sup_dx = 0.0, sup_u = 0.0;

  std::span<const double> u_at(std::size_t q, std::size_t k) const {
    const std::size_t blk = dim * widths[q];
    return std::span<const double>(u_pilot[q]).subspan(k * blk, blk);
  }
};

FirstOrderTangents integrate_first_order(const CoefficientSet& coeffs,
                                         const ParticleSystem& system, const PilotPath& pilot,
                                         const std::vector<Probe>& probes,
                                         std::span<const std::size_t> record_particles = {});

struct SecondOrderTangents {
  FirstOrderTangents first;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> dxx_pilot;               // K+1
  std::vector<std::vector<double>> dmu_dx;     // per probe, K+1
  std::vector<std::vector<double>> dy_dmu;     // per probe, K+1
  std::vector<std::vector<double>> u2;         // per pair, K+1
  double sup_second = 0.0;
};

/// d = 1 only.
SecondOrderTangents integrate_second_order(const CoefficientSet& coeffs,
                                           const ParticleSystem& system, const PilotPath& pilot,
                                           const std::vector<Probe>& probes,
                                           std::vector<std::pair<std::size_t, std::size_t>> pairs);

/// (1/N) sum_j U_pilot(xi_j) eta_j at step k; t1 must come from
/// per_particle_probes(). eta is N x d in the caller's sample order.
std::vector<double> frechet_directional(const FirstOrderTangents& t1, const ParticleSystem& system,
                                        std::span<const double> eta, std::size_t step);

/// Pilot sensitivity to init -> init + h eta by re-simulation with common
/// noise. Returns (K+1) x d; `central` uses +-h.
std::vector<double> fd_directional_oracle(const CoefficientSet& coeffs,
                                          const EmpiricalMeasure& init, const SimConfig& cfg,
                                          std::span<const double> x, std::span<const double> eta,
                                          double h, bool central = true);

/// Pilots started at xi_l on particle l's stream must carry particle l's
/// tangent: max |U_pilot - U_particle| over the grid, the probes and the given
/// particles (pilot states are compared too).
double tangent_consistency_check(const CoefficientSet& coeffs, const ParticleSystem& system,
                                 const std::vector<Probe>& probes,
                                 std::span<const std::size_t> particles);

struct SymmetryReport {
  double discrepancy = 0.0;  // max |d_mu d_x X - FD_x d_mu X|
  double scale = 0.0;        // max |d_mu d_x X|
  double relative() const { return discrepancy / std::max(scale, 1e-300); }
};

/// d = 1: compares K(q) from the tangent recursion with the central FD in
/// the pilot start of U(q), over the whole grid and all probes. The pilot
/// runs on system.pilot_stream(0).
SymmetryReport mixed_symmetry_check(const CoefficientSet& coeffs, const ParticleSystem& system,
                                    std::span<const double> x, const std::vector<Probe>& probes,
                                    double h = 1e-3);

}  // namespace mfcalc
