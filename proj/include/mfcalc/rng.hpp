#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mfcalc {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Stream ids reserved outside the particle/pilot ranges.
inline constexpr std::uint64_t kInitSamplerStream = 0xFFFF'FFFF'FFFF'FF00ULL;
/// Independent copies of particle l run on kIndependentCopyStream + l.
inline constexpr std::uint64_t kIndependentCopyStream = 1ULL << 62;

/// Counter-based normal source. Every draw is a pure function of
/// (seed, stream, step, component): no hidden state, so any path can be
/// regenerated in any order from any thread.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Standard normal draw.
  double normal(std::uint64_t stream, std::uint64_t step, std::uint32_t component) const;

  /// Uniform draw in (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t step, std::uint32_t component) const;

  /// Fills `out` with independent standard normals for (stream, step).
  void normals(std::uint64_t stream, std::uint64_t step, std::span<double> out) const;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t stream, std::uint64_t step,
                                     std::uint32_t lane) const;

  std::uint64_t seed_;
};

}  // namespace mfcalc
