#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mfcalc/error.hpp"
#include "mfcalc/measure.hpp"
#include "mfcalc/rng.hpp"

using namespace mfcalc;

namespace {

EmpiricalMeasure m1(std::vector<double> v) { return EmpiricalMeasure::from_scalars(std::move(v)); }

// Brute force over all permutations (small N).
double brute_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  const std::size_t n = a.size(), d = a.dim();
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = INFINITY;
  do {
    double c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) c += std::pow(a.point(i)[k] - b.point(p[i])[k], 2);
    }
    best = std::min(best, c / static_cast<double>(n));
  } while (std::next_permutation(p.begin(), p.end()));
  return std::sqrt(best);
}

EmpiricalMeasure random_measure(const NoiseSource& ns, std::uint64_t stream, std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ns.normal(stream, i, 0);
  return EmpiricalMeasure(v, d);
}

}  // namespace

TEST(EmpiricalMeasure, RejectsBadInput) {
  EXPECT_THROW(EmpiricalMeasure({}, 1), InvalidInput);
  EXPECT_THROW(EmpiricalMeasure({1.0, 2.0, 3.0}, 2), InvalidInput);
  EXPECT_THROW(EmpiricalMeasure({1.0, NAN}, 1), std::exception);
  EXPECT_THROW(EmpiricalMeasure({1.0}, 0), InvalidInput);
}

TEST(W2, SpecExamples) {
  EXPECT_DOUBLE_EQ(w2_distance(m1({0, 1}), m1({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(w2_distance(m1({0, 2}), m1({1, 3})), 1.0);
  EXPECT_DOUBLE_EQ(w2_distance(m1({0}), m1({3})), 3.0);
}

TEST(W2, Errors) {
  EXPECT_THROW(w2_distance(m1({0, 1}), EmpiricalMeasure({0, 1}, 2)), InvalidInput);
  EXPECT_THROW(w2_distance(EmpiricalMeasure({0, 1, 2, 3}, 2), EmpiricalMeasure({0, 1}, 2)),
               UnsupportedConfiguration);
}

TEST(W2, SymmetryAndIdentity) {
  const NoiseSource ns(3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = random_measure(ns, 2 * s, 6, 2), b = random_measure(ns, 2 * s + 1, 6, 2);
    EXPECT_NEAR(w2_distance(a, b), w2_distance(b, a), 1e-12);
    EXPECT_DOUBLE_EQ(w2_distance(a, a), 0.0);
  }
}

TEST(W2, MatchesBruteForceAndTriangle) {
  const NoiseSource ns(11);
  for (std::uint64_t s = 0; s < 8; ++s) {
    const std::size_t d = 1 + s % 3;
    const auto a = random_measure(ns, 3 * s, 6, d), b = random_measure(ns, 3 * s + 1, 6, d),
               c = random_measure(ns, 3 * s + 2, 6, d);
    const double ab = w2_distance(a, b), bc = w2_distance(b, c), ac = w2_distance(a, c);
    EXPECT_NEAR(ab, brute_w2(a, b), 1e-12);
    EXPECT_NEAR(ac, brute_w2(a, c), 1e-12);
    EXPECT_LE(ac, ab + bc + 1e-12);
  }
}

TEST(W2, PermutationOfSamplesIsInvisible) {
  const auto a = m1({3, -1, 2, 0.5});
  const auto b = m1({0.5, 2, 3, -1});
  EXPECT_DOUBLE_EQ(w2_distance(a, b), 0.0);
}

TEST(W2, CouplingBoundAndTranslation) {
  const NoiseSource ns(19);
  const auto a = random_measure(ns, 0, 50, 1), b = random_measure(ns, 1, 50, 1);
  double pair = 0;
  for (std::size_t i = 0; i < 50; ++i) pair += std::pow(a.point(i)[0] - b.point(i)[0], 2);
  EXPECT_LE(std::pow(w2_distance(a, b), 2), pair / 50 + 1e-12);

  const PairedSample p(a, m1(std::vector<double>(50, 1.0)));
  EXPECT_NEAR(w2_distance(a, shift(p, 0.7)), 0.7, 1e-12);
  const auto a2 = random_measure(ns, 2, 8, 2);
  std::vector<double> moved(a2.samples().begin(), a2.samples().end());
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += (i % 2 == 0 ? 0.3 : -0.4);
  EXPECT_NEAR(w2_distance(a2, EmpiricalMeasure(moved, 2)), 0.5, 1e-12);
}

TEST(W2, UnequalSizesInOneDimension) {
  // {0, 1} against {0.5}: every sample moves by 0.5.
  EXPECT_NEAR(w2_distance(m1({0, 1}), m1({0.5})), 0.5, 1e-12);
}

TEST(Moment, SpecExamples) {
  EXPECT_DOUBLE_EQ(moment(m1({1, 3}), [](auto x) { return x[0]; }), 2.0);
  EXPECT_DOUBLE_EQ(moment(m1({1, 3}), [](auto x) { return x[0] * x[0]; }), 5.0);
  EXPECT_DOUBLE_EQ(moment(m1({0}), [](auto x) { return std::cos(x[0]) + 4.0; }), 5.0);
}

TEST(Moment, NonFiniteKernelReportsIndex) {
  try {
    moment(m1({1, 0, 2}), [](auto x) { return 1.0 / x[0]; });
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(Shift, SpecExamples) {
  const PairedSample p(m1({0, 2}), m1({1, 1}));
  const auto s0 = shift(p, 0.0), s1 = shift(p, 0.1);
  EXPECT_EQ(std::vector<double>(s0.samples().begin(), s0.samples().end()), (std::vector<double>{0, 2}));
  EXPECT_NEAR(s1.point(0)[0], 0.1, 1e-15);
  EXPECT_NEAR(s1.point(1)[0], 2.1, 1e-15);
  EXPECT_DOUBLE_EQ(shift(PairedSample(m1({0}), m1({5})), -1.0).point(0)[0], -5.0);
  EXPECT_THROW(PairedSample(m1({0, 1}), m1({1})), InvalidInput);
}

TEST(Canonical, SortsLexicographically) {
  const EmpiricalMeasure mu({2, 1, 0, 5, 2, 0}, 2);
  const auto c = mu.canonical();
  EXPECT_EQ(std::vector<double>(c.samples().begin(), c.samples().end()),
            (std::vector<double>{0, 5, 2, 0, 2, 1}));
  const auto order = canonical_permutation(mu);
  EXPECT_EQ(order, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Assignment, SolvesSmallProblem) {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto a = solve_assignment(cost, 3);
  double total = 0;
  for (std::size_t i = 0; i < 3; ++i) total += cost[i * 3 + a[i]];
  EXPECT_DOUBLE_EQ(total, 5.0);
}

TEST(Csv, RoundTrip) {
  const EmpiricalMeasure mu({0.125, -3.5, 1e-7, 2.0}, 2);
  std::stringstream ss;
  write_csv(ss, mu);
  EXPECT_EQ(ss.str().substr(0, 6), "x0,x1\n");
  const auto back = read_csv(ss);
  EXPECT_EQ(back.dim(), 2u);
  EXPECT_EQ(std::vector<double>(back.samples().begin(), back.samples().end()),
            std::vector<double>(mu.samples().begin(), mu.samples().end()));
}
