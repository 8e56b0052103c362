#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfcalc/error.hpp"
#include "mfcalc/pde.hpp"

using namespace mfcalc;

namespace {

const double kBeta = std::log(2.0);
const Kernel kId{KernelType::identity, 0, 1.0};
const Kernel kSq{KernelType::square_half, 0, 1.0};

CoefficientSet mean_drift() {
  return CoefficientSet(1, {CylinderFunctional::zero(1)},
                        {CylinderFunctional(1, {kId}, PolynomialOuter::linear(1, {kBeta}, 0.0))});
}

CoefficientSet still() { return CoefficientSet(1, {CylinderFunctional::zero(1)}, {CylinderFunctional::zero(1)}); }

CoefficientSet brownian(double s0) {
  return CoefficientSet(1, {CylinderFunctional::constant(1, s0)}, {CylinderFunctional::zero(1)});
}

CoefficientSet interacting() {
  auto sig = CylinderFunctional(1, {kSq}, PolynomialOuter::linear(1, {0.1}, 0.2));
  auto inner = PolynomialOuter::linear(1, {1.0}, 0.0, {-1.0});
  auto b = CylinderFunctional(1, {kId}, std::make_shared<ComposedOuter>(ScalarFn::sin, 0.5, inner, 1, 1));
  return CoefficientSet(1, {sig}, {b});
}

CylinderFunctional mean_fn() { return CylinderFunctional(1, {kId}, PolynomialOuter::linear(1, {1.0}, 0.0)); }
CylinderFunctional x_fn() { return CylinderFunctional(1, {}, PolynomialOuter::linear(1, {}, 0.0, {1.0})); }
CylinderFunctional x_plus_mean() { return CylinderFunctional(1, {kId}, PolynomialOuter::linear(1, {1.0}, 0.0, {1.0})); }
CylinderFunctional mean_sq() {
  return CylinderFunctional(1, {kId}, std::make_shared<PolynomialOuter>(1, 1, std::vector<PolynomialOuter::Term>{{1.0, {0}, {2}}}));
}
CylinderFunctional smooth_phi() {
  auto inner = std::make_shared<PolynomialOuter>(1, 1, std::vector<PolynomialOuter::Term>{{1.0, {1}, {0}}, {0.5, {0}, {2}}});
  return CylinderFunctional(1, {kId}, std::make_shared<ComposedOuter>(ScalarFn::tanh, 1.0, inner, 1, 1));
}

// V(t, x, mu) = x - <mu, id> + 2 <mu, id> e^{beta (1 - t)} for the mean drift.
PhiSumFunctional closed_form_v() {
  return PhiSumFunctional(1.0, {{1.0, 0.0, 0.0, 0.0, x_fn()}, {-1.0, 2.0, kBeta, 0.0, mean_fn()}});
}

SimConfig config(std::size_t k, std::uint64_t seed = 3) {
  SimConfig c;
  c.n_steps = k;
  c.seed = seed;
  return c;
}

EmpiricalMeasure ones(std::size_t n) { return EmpiricalMeasure::from_scalars(std::vector<double>(n, 1.0)); }

EmpiricalMeasure gauss(std::size_t n) {
  const std::vector<double> m{0.3}, s{0.5};
  return sample_gaussian(m, s, n, 8);
}

GeneratorInput bundle(const EmpiricalMeasure& law, double x, double dx, double dxx, double dmu, double dydmu) {
  const std::size_t n = law.size();
  return GeneratorInput{{x}, law, {dx}, {dxx}, std::vector<double>(n, dmu), std::vector<double>(n, dydmu)};
}

}  // namespace

TEST(ApplyGenerator, SpecExamples) {
  EXPECT_NEAR(apply_generator(mean_drift(), bundle(ones(4), 0.7, 1.0, 0.0, 3.0, 0.0)), 4.0 * kBeta, 1e-15);
  EXPECT_EQ(apply_generator(interacting(), bundle(gauss(8), 0.7, 0.0, 0.0, 0.0, 0.0)), 0.0);
  EXPECT_EQ(apply_generator(still(), bundle(gauss(8), 0.7, 1.3, -2.0, 0.4, 5.0)), 0.0);
}

TEST(ApplyGenerator, DiffusionTerms) {
  // sigma = 0.5: 1/2 * 0.25 * (dxx + dydmu averaged).
  EXPECT_NEAR(apply_generator(brownian(0.5), bundle(gauss(8), 0.0, 9.0, 2.0, 7.0, 4.0)), 0.125 * 2.0 + 0.125 * 4.0, 1e-15);
}

TEST(ApplyGenerator, RejectsMalformedBundle) {
  auto g = bundle(gauss(8), 0.0, 1.0, 0.0, 1.0, 0.0);
  g.dmu.pop_back();
  EXPECT_THROW(apply_generator(interacting(), g), InvalidInput);
}

TEST(PdeResidual, ClosedFormDrift) {
  const std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {0.5, -1.0}, {0.9, 2.0}};
  const auto r = pde_residual(mean_drift(), x_plus_mean(), ones(64), pts, config(1000), 8);
  ASSERT_EQ(r.points.size(), 3u);
  EXPECT_LE(r.max_abs, 5e-3);
  for (const auto& p : r.points) EXPECT_EQ(p.std_error, 0.0);
}

TEST(PdeResidual, NoDynamicsIsExact) {
  const std::vector<std::pair<double, double>> pts{{0.0, 0.3}, {0.5, -0.2}};
  const auto r = pde_residual(still(), smooth_phi(), gauss(32), pts, config(20), 8);
  EXPECT_EQ(r.max_abs, 0.0);
}

TEST(PdeResidual, SquaredMeanUnderBrownianNoise) {
  const std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {0.5, 0.0}};
  const auto r = pde_residual(brownian(0.4), mean_sq(), gauss(512), pts, config(50), 256);
  for (const auto& p : r.points) EXPECT_LE(std::abs(p.residual), 4 * p.std_error + 1e-3);
}

TEST(PdeResidual, TerminalCompatibility) {
  const std::vector<std::pair<double, double>> pts{{1.0, 0.4}};
  const auto r = pde_residual(interacting(), smooth_phi(), gauss(64), pts, config(20), 16);
  EXPECT_LE(r.max_abs, 1e-12);
}

TEST(PdeResidual, ComponentsSumToResidual) {
  const std::vector<std::pair<double, double>> pts{{0.2, 0.4}};
  const auto r = pde_residual(interacting(), smooth_phi(), gauss(128), pts, config(40), 64);
  const auto& c = r.points[0].components;
  EXPECT_NEAR(r.points[0].residual, c.dt + c.dx_drift + c.dxx_diff + c.mu_drift + c.ymu_diff, 1e-12);
  EXPECT_TRUE(std::isfinite(r.points[0].std_error));
}

TEST(PdeResidual, RejectsHigherDimension) {
  const CoefficientSet c(2, std::vector<CylinderFunctional>(4, CylinderFunctional::zero(2)),
                         std::vector<CylinderFunctional>(2, CylinderFunctional::zero(2)));
  const std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  EXPECT_THROW(pde_residual(c, CylinderFunctional::zero(2), EmpiricalMeasure({0, 0, 1, 1}, 2), pts, config(4), 2),
               UnsupportedConfiguration);
}

TEST(ClosedFormDerivatives, PhiSumMatchesFiniteDifferences) {
  const auto F = closed_form_v();
  const auto mu = gauss(16);
  const std::vector<double> x{0.4};
  const auto cf = closed_form_derivatives(F, 0.3, x, mu, {{0.0}, {1.5}}, {{0, 1}});
  double m = 0;
  for (double v : mu.samples()) m += v / 16.0;
  EXPECT_NEAR(cf.value, 0.4 - m + 2 * m * std::exp(kBeta * 0.7), 1e-14);
  EXPECT_NEAR(cf.dt, -2 * kBeta * m * std::exp(kBeta * 0.7), 1e-14);
  EXPECT_EQ(cf.dx[0], 1.0);
  for (const auto& d : cf.dmu) EXPECT_NEAR(d[0], 2 * std::exp(kBeta * 0.7) - 1, 1e-14);
  EXPECT_EQ(cf.d2mu[0], 0.0);
}

TEST(ClosedFormDerivatives, MeanRatio) {
  const MeanRatioFunctional F(1, 1.0, 0.5);
  const auto mu = EmpiricalMeasure::from_scalars({0.2, 0.6});
  const std::vector<double> x{0.8};
  const auto cf = closed_form_derivatives(F, 0.0, x, mu, {{0.0}}, {{0, 0}});
  const double den = 1 - 0.5 * 0.4;
  EXPECT_NEAR(cf.value, 0.8 / den, 1e-15);
  EXPECT_NEAR(cf.dx[0], 1 / den, 1e-15);
  EXPECT_NEAR(cf.dmu[0][0], 0.8 * 0.5 / (den * den), 1e-15);
  EXPECT_NEAR(cf.dx_dmu[0][0], 0.5 / (den * den), 1e-15);
  EXPECT_NEAR(cf.d2mu[0], 2 * 0.8 * 0.25 / (den * den * den), 1e-14);
  EXPECT_NEAR(cf.dt, -0.8 * 0.5 * 0.4 / (den * den), 1e-15);
}

TEST(ItoResidual, NoDynamicsVanishes) {
  const PhiSumFunctional F(1.0, {{1.0, 0.0, 0.0, 0.0, smooth_phi()}});
  const std::vector<double> x{0.3};
  const auto r = ito_residual(still(), F, gauss(32), config(20), x, 16);
  EXPECT_EQ(r.mean_gap, 0.0);
  EXPECT_EQ(r.martingale_drift, 0.0);
}

TEST(ItoResidual, ClosedFormValueIsMartingale) {
  const std::vector<double> x{0.0};
  const auto r = ito_residual(mean_drift(), closed_form_v(), ones(64), config(1000), x, 8);
  EXPECT_LE(r.martingale_drift, 5e-3);
  EXPECT_LE(r.mean_gap, 5e-3);
}

TEST(ItoResidual, MeanUnderBrownianNoiseIsPureMartingale) {
  const PhiSumFunctional F(1.0, {{1.0, 0.0, 0.0, 0.0, mean_fn()}});
  const std::vector<double> x{0.0};
  const auto r = ito_residual(brownian(0.3), F, gauss(256), config(64), x, 256);
  EXPECT_LE(r.gap_ratio, 3.0);
  EXPECT_LE(r.drift_ratio, 3.0);
  EXPECT_TRUE(std::isfinite(r.gap_error));
}
