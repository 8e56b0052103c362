#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mfcalc/parallel.hpp"
#include "mfcalc/rng.hpp"

using namespace mfcalc;

TEST(Philox, KnownAnswerVectors) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
            (A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
            (A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(NoiseSource, PureFunctionOfCoordinates) {
  const NoiseSource a(42), b(42), c(43);
  EXPECT_EQ(a.normal(3, 17, 1), b.normal(3, 17, 1));
  EXPECT_NE(a.normal(3, 17, 1), c.normal(3, 17, 1));
  EXPECT_NE(a.normal(3, 17, 1), a.normal(4, 17, 1));
  EXPECT_NE(a.normal(3, 17, 1), a.normal(3, 18, 1));
  // Reading out of order gives the same values.
  const double late = a.normal(9, 1000, 0);
  const double early = a.normal(9, 0, 0);
  EXPECT_EQ(late, b.normal(9, 1000, 0));
  EXPECT_EQ(early, b.normal(9, 0, 0));
}

TEST(NoiseSource, NormalMoments) {
  const NoiseSource ns(7);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = ns.normal(static_cast<std::uint64_t>(i % 97), static_cast<std::uint64_t>(i / 97), i % 3);
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(NoiseSource, UniformInOpenUnitInterval) {
  const NoiseSource ns(1);
  double s = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = ns.uniform(0, static_cast<std::uint64_t>(i), i % 4);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
  }
  EXPECT_NEAR(s / 100000, 0.5, 0.005);
}

TEST(NoiseSource, NormalsFillsComponents) {
  const NoiseSource ns(5);
  std::vector<double> v(5);
  ns.normals(2, 3, v);
  for (std::size_t c = 0; c < v.size(); ++c) EXPECT_EQ(v[c], ns.normal(2, 3, static_cast<std::uint32_t>(c)));
}

TEST(Parallel, ResultIndependentOfWorkerCount) {
  std::vector<double> a(1000), b(1000);
  worker_limit() = 1;
  parallel_for(0, a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); }, 1);
  worker_limit() = 4;
  parallel_for(0, b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); }, 1);
  worker_limit() = 0;
  EXPECT_EQ(a, b);
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(0, 100, [](std::size_t i) {
                 if (i == 57) throw std::runtime_error("boom");
               }, 1),
               std::runtime_error);
}
