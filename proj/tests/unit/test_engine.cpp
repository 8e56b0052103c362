#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <sstream>
#include <vector>

#include "mfcalc/engine.hpp"
#include "mfcalc/error.hpp"
#include "mfcalc/parallel.hpp"

using namespace mfcalc;

namespace {

const double kBeta = std::log(2.0);
const Kernel kId{KernelType::identity, 0, 1.0};

CylinderFunctional beta_mean() { return CylinderFunctional(1, {kId}, PolynomialOuter::linear(1, {kBeta}, 0.0)); }

CoefficientSet mean_drift() { return CoefficientSet(1, {CylinderFunctional::zero(1)}, {beta_mean()}); }

CoefficientSet still() { return CoefficientSet(1, {CylinderFunctional::zero(1)}, {CylinderFunctional::zero(1)}); }

// sigma = 0.2 + 0.1 <mu, id>, b = sin(<mu, id> - x) / 2.
CoefficientSet interacting() {
  auto sig = CylinderFunctional(1, {kId}, PolynomialOuter::linear(1, {0.1}, 0.2));
  auto inner = PolynomialOuter::linear(1, {1.0}, 0.0, {-1.0});
  auto b = CylinderFunctional(1, {kId}, std::make_shared<ComposedOuter>(ScalarFn::sin, 0.5, inner, 1, 1));
  return CoefficientSet(1, {sig}, {b});
}

SimConfig config(std::size_t n, std::size_t k, std::uint64_t seed = 7) {
  SimConfig c;
  c.n_particles = n;
  c.n_steps = k;
  c.seed = seed;
  return c;
}

EmpiricalMeasure gauss(std::size_t n, std::uint64_t seed = 3) {
  const std::vector<double> m{0.3}, s{0.6};
  return sample_gaussian(m, s, n, seed);
}

}  // namespace

TEST(SimConfig, Validation) {
  EXPECT_NO_THROW(config(2, 1).validate());
  EXPECT_THROW(config(1, 10).validate(), InvalidInput);
  EXPECT_THROW(config(10, 0).validate(), InvalidInput);
  auto c = config(10, 10);
  c.t_end = c.t_start;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(SimulateParticles, ZeroDynamicsIsConstant) {
  const auto sys = simulate_particles(still(), EmpiricalMeasure::from_scalars({1, 3}), config(2, 16));
  for (std::size_t k = 0; k <= 16; ++k) {
    auto s = sys.states(k);
    std::vector<double> v(s.begin(), s.end());
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, (std::vector<double>{1, 3}));
  }
}

TEST(SimulateParticles, MeanDriftFollowsOde) {
  const auto sys = simulate_particles(mean_drift(), EmpiricalMeasure::from_scalars(std::vector<double>(8, 1.0)), config(8, 1000));
  for (double v : sys.states(1000)) EXPECT_NEAR(v, 2.0, 2e-3);
  // Euler error is first order: halving the step halves it.
  const auto coarse = simulate_particles(mean_drift(), EmpiricalMeasure::from_scalars(std::vector<double>(8, 1.0)), config(8, 500));
  const double ratio = (2.0 - coarse.states(500)[0]) / (2.0 - sys.states(1000)[0]);
  EXPECT_NEAR(ratio, 2.0, 0.01);
}

TEST(SimulateParticles, ConstantNoiseVariance) {
  const double s0 = 0.7;
  const CoefficientSet c(1, {CylinderFunctional::constant(1, s0)}, {CylinderFunctional::zero(1)});
  const std::size_t n = 10000;
  const auto sys = simulate_particles(c, EmpiricalMeasure::from_scalars(std::vector<double>(n, 0.0)), config(n, 50));
  double m = 0, q = 0;
  for (double v : sys.states(50)) {
    m += v;
    q += v * v;
  }
  m /= n;
  const double var = q / n - m * m;
  const double se = s0 * s0 * std::sqrt(2.0 / (n - 1));
  EXPECT_NEAR(var, s0 * s0, 5 * se);
}

TEST(SimulateParticles, BlowUpRaisesNumericError) {
  auto cube = CylinderFunctional(1, {}, std::make_shared<PolynomialOuter>(1, 0, std::vector<PolynomialOuter::Term>{{10.0, {3}, {}}}));
  const CoefficientSet c(1, {CylinderFunctional::zero(1)}, {cube});
  EXPECT_THROW(simulate_particles(c, EmpiricalMeasure::from_scalars({5.0, 1.0}), config(2, 10)), NumericError);
}

TEST(SimulateParticles, DeterministicAcrossThreadCounts) {
  const auto init = gauss(512);
  worker_limit() = 1;
  const auto a = simulate_particles(interacting(), init, config(512, 64));
  worker_limit() = 0;
  const auto b = simulate_particles(interacting(), init, config(512, 64));
  const auto sa = a.states(64), sb = b.states(64);
  EXPECT_TRUE(std::equal(sa.begin(), sa.end(), sb.begin()));
}

TEST(SimulateParticles, DimensionMismatchRejected) {
  const CoefficientSet c(1, {CylinderFunctional::zero(1)}, {CylinderFunctional::zero(1)});
  EXPECT_THROW(simulate_particles(c, EmpiricalMeasure({0, 1, 2, 3}, 2), config(2, 4)), std::exception);
  EXPECT_THROW(simulate_particles(c, gauss(8), config(16, 4)), std::exception);
}

TEST(SimulatePilot, MeanDriftClosedForm) {
  const auto sys = simulate_particles(mean_drift(), EmpiricalMeasure::from_scalars(std::vector<double>(8, 1.0)), config(8, 1000));
  const std::vector<double> x{0.5};
  const auto p = simulate_pilot(mean_drift(), x, sys, sys.pilot_stream(0));
  EXPECT_NEAR(p.at(1000)[0], 1.5, 2e-3);
}

TEST(SimulatePilot, ZeroDynamicsIsConstant) {
  const auto sys = simulate_particles(still(), gauss(4), config(4, 8));
  const std::vector<double> x{-2.5};
  const auto p = simulate_pilot(still(), x, sys, sys.pilot_stream(0));
  for (double v : p.path) EXPECT_EQ(v, -2.5);
}

TEST(SimulatePilot, ReproducesParticleBitForBit) {
  const auto sys = simulate_particles(interacting(), gauss(64), config(64, 100));
  for (std::size_t i : {0u, 17u, 63u}) {
    const auto p = simulate_pilot(interacting(), sys.state(0, i), sys, sys.particle_stream(i));
    for (std::size_t k = 0; k <= 100; ++k) EXPECT_EQ(p.at(k)[0], sys.state(k, i)[0]);
  }
  const std::vector<std::size_t> idx{0, 31, 63};
  EXPECT_EQ(consistency_check(interacting(), sys, idx), 0.0);
}

TEST(FlowCheck, RestartIdentity) {
  const std::vector<double> x{0.25};
  for (std::size_t split : {1u, 32u, 64u, 127u}) {
    EXPECT_LE(flow_check(interacting(), gauss(256), config(256, 128), x, split), 1e-12);
  }
  EXPECT_EQ(flow_check(still(), gauss(16), config(16, 8), x, 4), 0.0);
  EXPECT_LE(flow_check(mean_drift(), EmpiricalMeasure::from_scalars(std::vector<double>(16, 1.0)), config(16, 100), x, 50), 1e-12);
}

TEST(FlowCheck, CoarseSubstepsSeeTheFinePath) {
  // With sigma constant and b = 0 the endpoint is x + sigma * (sum of increments).
  const CoefficientSet c(1, {CylinderFunctional::constant(1, 1.0)}, {CylinderFunctional::zero(1)});
  const auto init = gauss(8);
  const auto fine = simulate_particles(c, init, config(8, 64));
  auto cc = config(8, 32);
  cc.noise_substeps = 2;
  const auto coarse = simulate_particles(c, init, cc);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(fine.state(64, i)[0], coarse.state(32, i)[0], 1e-12);
}

TEST(PermutationCheck, OrderDoesNotMatter) {
  const auto init = gauss(128);
  std::vector<std::size_t> order(128);
  std::iota(order.rbegin(), order.rend(), 0);
  const std::vector<double> x{0.1};
  EXPECT_LE(permutation_check(interacting(), init, config(128, 64), x, order), 1e-12);
}

TEST(LipschitzProbe, SpecExamples) {
  const auto init = gauss(64);
  const std::vector<LipschitzPair> same{{{0.3}, init, {0.3}, init}};
  EXPECT_EQ(lipschitz_probe(interacting(), config(64, 32), same), 0.0);
  const std::vector<LipschitzPair> shift{{{0.3}, init, {1.3}, init}};
  EXPECT_NEAR(lipschitz_probe(mean_drift(), config(64, 32), shift), 1.0, 1e-12);
}

TEST(W2Stability, MeanDriftGrowth) {
  // Translating the initial law by c translates the whole mean-drift flow by c e^{beta T} in law.
  const auto a = gauss(256);
  const auto b = shift(PairedSample(a, EmpiricalMeasure::from_scalars(std::vector<double>(256, 1.0))), 0.5);
  EXPECT_NEAR(w2_stability(mean_drift(), config(256, 1000), a, b), 2.0, 2e-3);
  const double c = w2_stability(interacting(), config(256, 64), a, b);
  EXPECT_TRUE(std::isfinite(c));
  EXPECT_GT(c, 0.0);
}

TEST(Samplers, DiracAndUniform) {
  const std::vector<double> at{1.5, -2.0};
  const auto d = sample_dirac(at, 5);
  EXPECT_EQ(d.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(d.point(i)[0], 1.5);
    EXPECT_EQ(d.point(i)[1], -2.0);
  }
  const std::vector<double> lo{-1.0}, hi{2.0};
  const auto u = sample_uniform(lo, hi, 1000, 5);
  for (std::size_t i = 0; i < 1000; ++i) {
    EXPECT_GE(u.point(i)[0], -1.0);
    EXPECT_LT(u.point(i)[0], 2.0);
  }
  const auto g1 = gauss(100, 9), g2 = gauss(100, 9);
  EXPECT_TRUE(std::equal(g1.samples().begin(), g1.samples().end(), g2.samples().begin()));
}

TEST(WritePathsCsv, HeaderAndRows) {
  const auto sys = simulate_particles(still(), EmpiricalMeasure::from_scalars({1, 3}), config(2, 4));
  std::ostringstream os;
  write_paths_csv(os, sys, 2);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,time,particle_id,x0");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3u * 2u);
}
