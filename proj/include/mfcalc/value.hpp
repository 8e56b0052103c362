#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mfcalc/cylinder.hpp"
#include "mfcalc/engine.hpp"
#include "mfcalc/tangents.hpp"

namespace mfcalc {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error of the mean.
Estimate summarize(std::span<const double> samples);

struct ValueQuery {
  double t = 0.0;
  double T = 1.0;
  std::vector<double> x;
  EmpiricalMeasure init;
  CylinderFunctional phi;
  std::size_t M = 1024;  // pilot replicas
};

struct ValueOptions {
  std::vector<Probe> probes;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // for d^2_mu V
  bool second_order = false;                               // d = 1
};

/// V(t, x, P_xi) and its derivatives. Measure derivatives are indexed by
/// probe; a probe of width w contributes w entries per d_mu V row.
struct ValueReport {
  Estimate v;
  std::vector<Estimate> dv_dx;                // d
  Estimate dv_dt;                             // minus E[L Phi] on the shifted system
  std::vector<std::vector<Estimate>> dmu_v;   // per probe, width entries
  // d = 1, second order only:
  Estimate d2v_dx2;
  std::vector<Estimate> dx_dmu_v;             // per probe
  std::vector<Estimate> dy_dmu_v;             // per probe
  std::vector<Estimate> d2mu_v;               // per pair

  // Per-replica values (replica-major), kept so callers can propagate errors
  // of linear combinations.
  std::vector<double> rep_v, rep_dt, rep_dx, rep_dxx;
  std::vector<double> rep_dmu;    // M x total width
  std::vector<double> rep_dydmu;  // M x probes (second order)
  std::size_t width = 0;
  std::vector<std::size_t> column;  // per probe
};

/// Simulates the particle system on [t, T] (K = cfg.n_steps steps, the time
/// fields of cfg are overridden by the query) with M pilots on streams N+m,
/// integrates the tangents and assembles every derivative from the closed
/// forms of Phi. At t = T the state is the initial one and the report is
/// exact in Phi.
ValueReport evaluate_value(const CoefficientSet& coeffs, const ValueQuery& q,
                           const SimConfig& cfg, const ValueOptions& opt = {});

Estimate estimate_V(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg);
std::vector<Estimate> grad_x_V(const CoefficientSet& coeffs, const ValueQuery& q,
                               const SimConfig& cfg);
std::vector<std::vector<Estimate>> lions_grad_V(const CoefficientSet& coeffs, const ValueQuery& q,
                                                const SimConfig& cfg,
                                                const std::vector<Probe>& probes);
/// d = 1. Fills the second-order fields (and everything else).
ValueReport second_derivatives_V(const CoefficientSet& coeffs, const ValueQuery& q,
                                 const SimConfig& cfg, const std::vector<Probe>& probes,
                                 std::vector<std::pair<std::size_t, std::size_t>> pairs);
Estimate dt_V(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg);

/// Weighted probe for (1/N) sum_j d_mu V(xi_j) eta_j, eta in the caller's
/// sample order of q.init. `independent` selects independent copies.
Probe direction_probe(const ValueQuery& q, const SimConfig& cfg, std::span<const double> eta,
                      bool independent = false);

// Finite-difference oracles (common noise, pairing of samples preserved).

/// (V(init + h eta) - V(init - h eta)) / 2h.
double fd_value_direction(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                          std::span<const double> eta, double h);
/// (V(init + h eta) - 2 V + V(init - h eta)) / h^2.
double fd_value_direction2(const CoefficientSet& coeffs, const ValueQuery& q,
                           const SimConfig& cfg, std::span<const double> eta, double h);
/// Central FD in x_0 of dV/dx_0 / V.
double fd_value_x(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg, double h);
double fd_value_xx(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                   double h);
/// (V(t + delta) - V(t - delta)) / 2 delta, K steps on each horizon.
double fd_value_t(const CoefficientSet& coeffs, const ValueQuery& q, const SimConfig& cfg,
                  double delta);
/// Second estimator of d_x d_mu V: central FD in x_0 of d_mu V(probe) (first
/// entry of each probe), d = 1.
std::vector<double> fd_dx_dmu_V(const CoefficientSet& coeffs, const ValueQuery& q,
                                const SimConfig& cfg, const std::vector<Probe>& probes, double h);

struct HolderReport {
  double v = 0.0;
  double dv_dx = 0.0;
  double dmu_v = 0.0;
};

/// max over time pairs of |F(t) - F(t')| / |t - t'|^{1/2} for F = V, d_x V
/// and d_mu V at the given probes.
HolderReport time_regularity_probe(const CoefficientSet& coeffs, const ValueQuery& q,
                                   const SimConfig& cfg, std::span<const double> times,
                                   const std::vector<Probe>& probes);

}  // namespace mfcalc
