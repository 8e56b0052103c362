#include "mfcalc/rng.hpp"

#include <cmath>
#include <numbers>

namespace mfcalc {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

// 53-bit uniform in the open interval (0, 1).
inline double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM0, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::array<std::uint32_t, 4> NoiseSource::block(std::uint64_t stream, std::uint64_t step,
                                                std::uint32_t lane) const {
  // step is truncated to 32 bits; simulations never take 2^32 steps.
  const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(step), lane,
                                         static_cast<std::uint32_t>(stream),
                                         static_cast<std::uint32_t>(stream >> 32)};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                         static_cast<std::uint32_t>(seed_ >> 32)};
  return philox4x32_10(ctr, key);
}

double NoiseSource::uniform(std::uint64_t stream, std::uint64_t step,
                            std::uint32_t component) const {
  // lanes above 2^31 are kept apart from the normal lanes
  const auto r = block(stream, step, 0x8000'0000u | (component / 2));
  return component % 2 == 0 ? to_open_unit(r[0], r[1]) : to_open_unit(r[2], r[3]);
}

double NoiseSource::normal(std::uint64_t stream, std::uint64_t step,
                           std::uint32_t component) const {
  const auto r = block(stream, step, component / 2);
  const double u1 = to_open_unit(r[0], r[1]);
  const double u2 = to_open_unit(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return component % 2 == 0 ? radius * std::cos(angle) : radius * std::sin(angle);
}

void NoiseSource::normals(std::uint64_t stream, std::uint64_t step, std::span<double> out) const {
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = normal(stream, step, static_cast<std::uint32_t>(c));
  }
}

}  // namespace mfcalc
