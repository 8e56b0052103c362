#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfcalc/cylinder.hpp"
#include "mfcalc/engine.hpp"
#include "mfcalc/value.hpp"

namespace mfcalc {

/// Derivative bundle of F at (t, x, law), with measure derivatives given at
/// every sample of the law.
struct GeneratorInput {
  std::vector<double> x;
  EmpiricalMeasure law;
  std::vector<double> dx;     // d
  std::vector<double> dxx;    // d*d
  std::vector<double> dmu;    // N x d: d_mu F(., xi_l)
  std::vector<double> dydmu;  // N x d x d: [l][i][j] = d_{y_i} (d_mu F)_j(., xi_l)
};

/// sum_i dF/dx_i b_i + 1/2 sum_ij d2F/dx_i dx_j (sigma sigma^T)_ij
///   + (1/N) sum_l [ d_mu F(xi_l) . b(xi_l) + 1/2 tr(d_y d_mu F(xi_l) sigma sigma^T(xi_l)) ]
double apply_generator(const CoefficientSet& coeffs, const GeneratorInput& g);

struct ResidualComponents {
  double dt = 0.0, dx_drift = 0.0, dxx_diff = 0.0, mu_drift = 0.0, ymu_diff = 0.0;
};

struct ResidualPoint {
  double t = 0.0;
  std::vector<double> x;
  double residual = 0.0;
  double std_error = 0.0;
  ResidualComponents components;
};

struct ResidualReport {
  std::vector<ResidualPoint> points;
  double max_abs = 0.0;
};

/// d_t V + (generator V) at each (t, x), d = 1. The measure blocks use
/// weighted probes with weights b(xi_l) and sigma^2(xi_l), so the cost stays
/// linear in N.
ResidualReport pde_residual(const CoefficientSet& coeffs, const CylinderFunctional& phi,
                            const EmpiricalMeasure& init,
                            std::span<const std::pair<double, double>> points,
                            const SimConfig& cfg, std::size_t M);

/// F(t, x, mu) with closed-form partials through order two and dF/dt.
class TimeFunctional {
 public:
  virtual ~TimeFunctional() = default;
  virtual std::size_t dim() const = 0;
  virtual const std::vector<Kernel>& kernels() const = 0;
  virtual void eval(double t, std::span<const double> x, std::span<const double> z,
                    OuterDerivatives& out, double& dt) const = 0;
  virtual std::string describe() const = 0;
};

/// sum_i phi_i(t) f_i(x, mu), phi(t) = a + c exp(lambda (T - t)) + e (T - t).
class PhiSumFunctional final : public TimeFunctional {
 public:
  struct Term {
    double a = 1.0, c = 0.0, lambda = 0.0, e = 0.0;
    CylinderFunctional f;
  };
  PhiSumFunctional(double horizon, std::vector<Term> terms);

  std::size_t dim() const override { return dim_; }
  const std::vector<Kernel>& kernels() const override { return kernels_; }
  void eval(double t, std::span<const double> x, std::span<const double> z, OuterDerivatives& out,
            double& dt) const override;
  std::string describe() const override;

 private:
  double horizon_;
  std::vector<Term> terms_;
  std::vector<Kernel> kernels_;
  std::vector<std::size_t> offset_;
  std::size_t dim_;
};

/// x_0 / (1 - a <mu, id_0> (T - t)).
class MeanRatioFunctional final : public TimeFunctional {
 public:
  MeanRatioFunctional(std::size_t dim, double horizon, double a);

  std::size_t dim() const override { return dim_; }
  const std::vector<Kernel>& kernels() const override { return kernels_; }
  void eval(double t, std::span<const double> x, std::span<const double> z, OuterDerivatives& out,
            double& dt) const override;
  std::string describe() const override;

 private:
  std::size_t dim_;
  double horizon_, a_;
  std::vector<Kernel> kernels_;
};

/// Closed-form derivatives of F at (t, x, mu), with measure derivatives at
/// the points ys. The second-order block (d = 1) follows ValueReport.
struct ClosedFormDerivatives {
  double value = 0.0, dt = 0.0;
  std::vector<double> dx;                  // d
  std::vector<double> dxx;                 // d*d
  std::vector<std::vector<double>> dmu;    // per y, d
  std::vector<std::vector<double>> dx_dmu; // per y, d*d: [i*d + k] = d/dx_i (d_mu F)_k
  std::vector<std::vector<double>> dy_dmu; // per y, d*d
  std::vector<double> d2mu;                // per pair, d = 1
};

ClosedFormDerivatives closed_form_derivatives(
    const TimeFunctional& F, double t, std::span<const double> x, const EmpiricalMeasure& mu,
    const std::vector<std::vector<double>>& ys,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs = {});

struct ItoRecord {
  double mean_gap = 0.0;          // |E[Delta]| at the end of the grid
  double martingale_drift = 0.0;  // max_k |E[F(t_k, X_k, mu_k)] - F(t_0, x, mu_0)|
  // Error budget of each statistic: pilot standard error, the standard
  // deviation of the shared particle-noise integral, and a Richardson
  // estimate |r(K) - r(K/2)| of the time-discretization bias.
  double gap_pilot_se = 0.0, gap_particle_sd = 0.0, gap_discretization = 0.0;
  double gap_error = 0.0;
  double drift_error = 0.0;  // budget at the step attaining the worst ratio
  double gap_ratio = 0.0;    // mean_gap / gap_error
  double drift_ratio = 0.0;  // max_k |drift_k| / error_k
};

/// Ito-formula and martingale residuals of F along (pilot, particle system)
/// on the grid of cfg, with M pilots.
ItoRecord ito_residual(const CoefficientSet& coeffs, const TimeFunctional& F,
                       const EmpiricalMeasure& init, const SimConfig& cfg,
                       std::span<const double> x, std::size_t M);

}  // namespace mfcalc
