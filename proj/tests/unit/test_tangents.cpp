#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfcalc/engine.hpp"
#include "mfcalc/error.hpp"
#include "mfcalc/tangents.hpp"

using namespace mfcalc;

namespace {

const double kBeta = std::log(2.0);
const Kernel kId{KernelType::identity, 0, 1.0};
const Kernel kSq{KernelType::square_half, 0, 1.0};

CoefficientSet mean_drift() {
  return CoefficientSet(1, {CylinderFunctional::zero(1)},
                        {CylinderFunctional(1, {kId}, PolynomialOuter::linear(1, {kBeta}, 0.0))});
}

// sigma = 0.2 + 0.1 <mu, |.|^2/2>, b = sin(<mu, id> - x) / 2.
CoefficientSet interacting() {
  auto sig = CylinderFunctional(1, {kSq}, PolynomialOuter::linear(1, {0.1}, 0.2));
  auto inner = PolynomialOuter::linear(1, {1.0}, 0.0, {-1.0});
  auto b = CylinderFunctional(1, {kId}, std::make_shared<ComposedOuter>(ScalarFn::sin, 0.5, inner, 1, 1));
  return CoefficientSet(1, {sig}, {b});
}

// sigma = 0.3, b = -x: no measure dependence.
CoefficientSet free_ou() {
  return CoefficientSet(1, {CylinderFunctional::constant(1, 0.3)},
                        {CylinderFunctional(1, {}, PolynomialOuter::linear(1, {}, 0.0, {-1.0}))});
}

SimConfig config(std::size_t n, std::size_t k, std::uint64_t seed = 5) {
  SimConfig c;
  c.n_particles = n;
  c.n_steps = k;
  c.seed = seed;
  return c;
}

EmpiricalMeasure ones(std::size_t n) { return EmpiricalMeasure::from_scalars(std::vector<double>(n, 1.0)); }

EmpiricalMeasure gauss(std::size_t n) {
  const std::vector<double> m{0.2}, s{0.5};
  return sample_gaussian(m, s, n, 17);
}

// Discrete closed form of d_mu X(1) for the mean drift: (1 + beta dt)^K - 1.
double discrete_growth(std::size_t k) { return std::pow(1.0 + kBeta / static_cast<double>(k), static_cast<double>(k)) - 1.0; }

}  // namespace

TEST(FirstOrder, MeanDriftClosedForm) {
  const auto sys = simulate_particles(mean_drift(), ones(16), config(16, 1000));
  for (double x : {0.5, -2.0}) {
    const auto pilot = simulate_pilot(mean_drift(), std::vector<double>{x}, sys, sys.pilot_stream(0));
    const std::vector<Probe> probes{Probe::at({0.0}), Probe::at({3.0}), Probe::particle(4)};
    const auto t = integrate_first_order(mean_drift(), sys, pilot, probes);
    for (std::size_t q = 0; q < probes.size(); ++q) {
      EXPECT_NEAR(t.u_at(q, 1000)[0], 1.0, 2e-3);
      EXPECT_NEAR(t.u_at(q, 1000)[0], discrete_growth(1000), 1e-12);
      EXPECT_EQ(t.u_at(q, 0)[0], 0.0);
    }
    for (double j : t.dx_pilot) EXPECT_EQ(j, 1.0);
  }
}

TEST(FirstOrder, MeasureFreeCoefficientsGiveZeroU) {
  const auto sys = simulate_particles(free_ou(), gauss(32), config(32, 50));
  const auto pilot = simulate_pilot(free_ou(), std::vector<double>{0.4}, sys, sys.pilot_stream(0));
  const auto t = integrate_first_order(free_ou(), sys, pilot, per_particle_probes(sys));
  EXPECT_EQ(t.sup_u, 0.0);
  // b = -x: d_x X_k = (1 - dt)^k
  EXPECT_NEAR(t.dx_pilot[50], std::pow(1.0 - 1.0 / 50, 50), 1e-14);

  const CoefficientSet additive(1, {CylinderFunctional::constant(1, 0.7)}, {CylinderFunctional::zero(1)});
  const auto sys2 = simulate_particles(additive, gauss(8), config(8, 20));
  const auto t2 = integrate_first_order(additive, sys2, simulate_pilot(additive, std::vector<double>{0.0}, sys2, 8),
                                        {Probe::at({1.0})});
  for (double j : t2.dx_pilot) EXPECT_EQ(j, 1.0);
  for (double u : t2.u_pilot[0]) EXPECT_EQ(u, 0.0);
}

TEST(FirstOrder, SupNormsFinite) {
  const auto sys = simulate_particles(interacting(), gauss(64), config(64, 64));
  const auto pilot = simulate_pilot(interacting(), std::vector<double>{0.1}, sys, sys.pilot_stream(0));
  const auto t = integrate_first_order(interacting(), sys, pilot, {Probe::at({0.5}), Probe::particle(3)});
  EXPECT_TRUE(std::isfinite(t.sup_dx));
  EXPECT_TRUE(std::isfinite(t.sup_u));
  EXPECT_GT(t.sup_u, 0.0);
}

TEST(FrechetDirectional, SpecExamples) {
  const std::size_t n = 16, k = 1000;
  const auto sys = simulate_particles(mean_drift(), ones(n), config(n, k));
  const auto pilot = simulate_pilot(mean_drift(), std::vector<double>{0.5}, sys, sys.pilot_stream(0));
  const auto t = integrate_first_order(mean_drift(), sys, pilot, per_particle_probes(sys));
  EXPECT_EQ(frechet_directional(t, sys, std::vector<double>(n, 0.0), k)[0], 0.0);
  EXPECT_NEAR(frechet_directional(t, sys, std::vector<double>(n, 1.0), k)[0], 1.0, 2e-3);

  const auto free_sys = simulate_particles(free_ou(), gauss(n), config(n, 30));
  const auto tf = integrate_first_order(free_ou(), free_sys, simulate_pilot(free_ou(), std::vector<double>{0.0}, free_sys, n),
                                        per_particle_probes(free_sys));
  std::vector<double> eta(n);
  for (std::size_t i = 0; i < n; ++i) eta[i] = std::sin(1.0 + i);
  EXPECT_EQ(frechet_directional(tf, free_sys, eta, 30)[0], 0.0);
}

TEST(FrechetDirectional, RequiresPerParticleTangents) {
  const auto sys = simulate_particles(mean_drift(), ones(4), config(4, 4));
  const auto t = integrate_first_order(mean_drift(), sys, simulate_pilot(mean_drift(), std::vector<double>{0.0}, sys, 4),
                                       {Probe::at({0.0})});
  EXPECT_THROW(frechet_directional(t, sys, std::vector<double>(4, 1.0), 4), InvalidInput);
}

TEST(FdOracle, SpecExamples) {
  const std::size_t n = 16, k = 1000;
  const std::vector<double> x{0.5};
  const auto d = fd_directional_oracle(mean_drift(), ones(n), config(n, k), x, std::vector<double>(n, 1.0), 1e-4);
  EXPECT_NEAR(d[k], discrete_growth(k), 1e-6);
  EXPECT_NEAR(d[k], 1.0, 2e-3);
  const auto z = fd_directional_oracle(interacting(), gauss(n), config(n, 20), x, std::vector<double>(n, 0.0), 1e-4);
  for (double v : z) EXPECT_EQ(v, 0.0);
  std::vector<double> eta(n, 0.3);
  const auto f = fd_directional_oracle(free_ou(), gauss(n), config(n, 20), x, eta, 1e-4);
  for (double v : f) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(fd_directional_oracle(free_ou(), gauss(n), config(n, 20), x, eta, 0.0), InvalidInput);
}

TEST(FdOracle, MatchesFrechetUnderCommonNoise) {
  const std::size_t n = 64, k = 100;
  const auto init = gauss(n);
  const std::vector<double> x{0.3};
  const auto sys = simulate_particles(interacting(), init, config(n, k));
  const auto t = integrate_first_order(interacting(), sys, simulate_pilot(interacting(), x, sys, sys.pilot_stream(0)),
                                       per_particle_probes(sys));
  std::vector<double> eta(n);
  for (std::size_t i = 0; i < n; ++i) eta[i] = std::cos(0.7 * i);
  const auto fd = fd_directional_oracle(interacting(), init, config(n, k), x, eta, 1e-4);
  double scale = 0;
  for (std::size_t s = 0; s <= k; ++s) scale = std::max(scale, std::abs(fd[s]));
  ASSERT_GT(scale, 0.0);
  for (std::size_t s = 0; s <= k; s += 10) {
    EXPECT_NEAR(frechet_directional(t, sys, eta, s)[0], fd[s], 1e-6 * scale);
  }
}

TEST(TangentConsistency, PilotReproducesParticleTangent) {
  const auto sys = simulate_particles(interacting(), gauss(48), config(48, 64));
  const std::vector<std::size_t> idx{0, 20, 47};
  const std::vector<Probe> probes{Probe::at({0.4}), Probe::particle(7),
                                  Probe::weighted(std::vector<double>(48, 1.0))};
  EXPECT_LE(tangent_consistency_check(interacting(), sys, probes, idx), 1e-12);
}

TEST(WeightedProbe, ParticleCopiesMatchPerParticleSum) {
  const std::size_t n = 32;
  const auto sys = simulate_particles(interacting(), gauss(n), config(n, 40));
  const auto pilot = simulate_pilot(interacting(), std::vector<double>{-0.2}, sys, sys.pilot_stream(0));
  std::vector<double> eta(n);
  for (std::size_t i = 0; i < n; ++i) eta[i] = 1.0 + 0.1 * i;
  const auto per = integrate_first_order(interacting(), sys, pilot, per_particle_probes(sys));
  const auto w = integrate_first_order(interacting(), sys, pilot, {Probe::weighted(to_particle_order(sys, eta))});
  EXPECT_NEAR(w.u_at(0, 40)[0], frechet_directional(per, sys, eta, 40)[0], 1e-13);
  const auto ind = integrate_first_order(interacting(), sys, pilot, {Probe::weighted(to_particle_order(sys, eta), true)});
  EXPECT_TRUE(std::isfinite(ind.u_at(0, 40)[0]));
}

TEST(SecondOrder, MeanDriftVanishes) {
  const auto sys = simulate_particles(mean_drift(), ones(8), config(8, 100));
  const auto pilot = simulate_pilot(mean_drift(), std::vector<double>{0.5}, sys, sys.pilot_stream(0));
  const auto t = integrate_second_order(mean_drift(), sys, pilot, {Probe::at({0.0}), Probe::particle(2)}, {{0, 1}, {1, 1}});
  for (double v : t.dxx_pilot) EXPECT_EQ(v, 0.0);
  for (const auto& v : t.dmu_dx) for (double e : v) EXPECT_EQ(e, 0.0);
  for (const auto& v : t.dy_dmu) for (double e : v) EXPECT_EQ(e, 0.0);
  for (const auto& v : t.u2) for (double e : v) EXPECT_EQ(e, 0.0);
}

TEST(SecondOrder, MeasureFreeCoefficientsVanish) {
  const auto sys = simulate_particles(free_ou(), gauss(8), config(8, 30));
  const auto t = integrate_second_order(free_ou(), sys, simulate_pilot(free_ou(), std::vector<double>{0.5}, sys, 8),
                                        {Probe::at({0.3}), Probe::particle(1)}, {{0, 1}});
  for (const auto& v : t.dmu_dx) for (double e : v) EXPECT_EQ(e, 0.0);
  for (const auto& v : t.dy_dmu) for (double e : v) EXPECT_EQ(e, 0.0);
  for (const auto& v : t.u2) for (double e : v) EXPECT_EQ(e, 0.0);
}

TEST(SecondOrder, SquareHalfDriftDyDmu) {
  // b = beta <mu, |.|^2/2>: d_y d_mu X solves v' = beta (1 + E[X_r] v), the
  // second term being the feedback of the law on itself.
  const CoefficientSet c(1, {CylinderFunctional::zero(1)},
                         {CylinderFunctional(1, {kSq}, PolynomialOuter::linear(1, {kBeta}, 0.0))});
  const std::size_t k = 200;
  const double dt = 1.0 / k;
  const auto sys = simulate_particles(c, gauss(16), config(16, k));
  const auto t = integrate_second_order(c, sys, simulate_pilot(c, std::vector<double>{0.1}, sys, 16),
                                        {Probe::at({0.7}), Probe::at({-1.5})}, {});
  double v = 0.0;
  for (std::size_t s = 0; s <= k; ++s) {
    for (std::size_t q = 0; q < 2; ++q) EXPECT_NEAR(t.dy_dmu[q][s], v, 1e-12);
    double mean = 0.0;
    for (double x : sys.states(s)) mean += x / 16.0;
    v += kBeta * dt * (1.0 + mean * v);
  }
}

TEST(SecondOrder, DyDmuMatchesFdInProbePoint) {
  const auto sys = simulate_particles(interacting(), gauss(64), config(64, 50));
  const auto pilot = simulate_pilot(interacting(), std::vector<double>{0.2}, sys, sys.pilot_stream(0));
  const double y = 0.6, h = 1e-4;
  const auto t = integrate_second_order(interacting(), sys, pilot, {Probe::at({y})}, {});
  const auto up = integrate_first_order(interacting(), sys, pilot, {Probe::at({y + h})});
  const auto dn = integrate_first_order(interacting(), sys, pilot, {Probe::at({y - h})});
  for (std::size_t s = 0; s <= 50; s += 10) {
    EXPECT_NEAR(t.dy_dmu[0][s], (up.u_at(0, s)[0] - dn.u_at(0, s)[0]) / (2 * h), 1e-7);
  }
}

TEST(SecondOrder, RejectsHigherDimension) {
  const CoefficientSet c(2, std::vector<CylinderFunctional>(4, CylinderFunctional::zero(2)),
                         std::vector<CylinderFunctional>(2, CylinderFunctional::zero(2)));
  const auto sys = simulate_particles(c, EmpiricalMeasure({0, 0, 1, 1}, 2), config(2, 4));
  const auto pilot = simulate_pilot(c, std::vector<double>{0.0, 0.0}, sys, 2);
  EXPECT_THROW(integrate_second_order(c, sys, pilot, {Probe::at({0.0, 0.0})}, {}), UnsupportedConfiguration);
}

TEST(MixedSymmetry, SpecExamples) {
  const auto sys = simulate_particles(mean_drift(), ones(8), config(8, 100));
  const auto r = mixed_symmetry_check(mean_drift(), sys, std::vector<double>{0.5}, {Probe::at({0.0})});
  EXPECT_LE(r.discrepancy, 1e-12);
  const auto sys2 = simulate_particles(interacting(), gauss(64), config(64, 50));
  const auto r2 = mixed_symmetry_check(interacting(), sys2, std::vector<double>{0.2},
                                       {Probe::at({0.6}), Probe::particle(5)}, 1e-4);
  EXPECT_LE(r2.relative(), 1e-6);
}
