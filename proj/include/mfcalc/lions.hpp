#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mfcalc/cylinder.hpp"
#include "mfcalc/measure.hpp"

namespace mfcalc {

/// Closed-form second-order objects of a cylinder functional at (x, mu, y, z).
struct LionsDerivativeValue {
  std::vector<double> first;       // d_mu f(mu, y), d entries
  std::vector<double> y_jacobian;  // d_y d_mu f(mu, y), d*d row-major
  std::vector<double> second;      // d^2_mu f(mu, y, z), d*d row-major
};

/// N times the central-difference gradient of x_i -> f(x, empirical(samples)),
/// step 1e-4 (1 + |x_ik|) per coordinate.
std::vector<double> lions_derivative_fd(const CylinderFunctional& f, std::span<const double> x,
                                        const EmpiricalMeasure& samples, std::size_t index);

LionsDerivativeValue second_lions_derivatives(const CylinderFunctional& f,
                                              std::span<const double> x,
                                              const EmpiricalMeasure& mu,
                                              std::span<const double> y,
                                              std::span<const double> z);

/// d_x d_mu f(x, mu, y) as a d*d matrix: [i*d + k] = d/dx_i (d_mu f)_k.
std::vector<double> mixed_x_mu(const CylinderFunctional& f, std::span<const double> x,
                               const EmpiricalMeasure& mu, std::span<const double> y);

struct TaylorRecord {
  double lhs = 0.0;
  double expansion = 0.0;
  double remainder = 0.0;
  double bound_ratio = 0.0;
};

/// Second-order expansion of mu -> f(mu) along base + direction, with the
/// independent-copy expectation realized as the full N x N double average.
TaylorRecord taylor_expansion_check(const CylinderFunctional& f, const PairedSample& p,
                                    std::span<const double> x = {});

/// Compares the closed-form d_x d_mu f against FD-in-x of d_mu f and against
/// the lifted FD of d_x f, at every x in xs and every sample of mu as y.
/// Returns the largest |difference| / (1 + |closed form|).
double coefficient_symmetry_check(const CylinderFunctional& f, const EmpiricalMeasure& mu,
                                  std::span<const std::vector<double>> xs);

/// E[|eta|^3 ^ |eta|^2] / E[|eta|^2] for eta = c * 1_A with P(A) = count/N,
/// on the index space {0..N-1}.
double indicator_expansion_ratio(std::size_t n, std::size_t count, double c);

}  // namespace mfcalc
