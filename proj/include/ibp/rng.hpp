#pragma once

#include <array>
#include <cmath>
#include <cstdint>

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC 2011).
// Every variate is a pure function of (seed, counter), so any path, step and
// noise component can be regenerated bit-exactly regardless of how work is
// scheduled across threads.

namespace ibp::rng {

namespace detail {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

}  // namespace detail

// One 128-bit Philox block. key = (lo32(seed), hi32(seed)).
inline std::array<std::uint32_t, 4> philox4x32(std::uint64_t seed, std::uint32_t c0,
                                               std::uint32_t c1, std::uint32_t c2,
                                               std::uint32_t c3) {
  using namespace detail;
  std::uint32_t k0 = static_cast<std::uint32_t>(seed);
  std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
  std::uint32_t x0 = c0, x1 = c1, x2 = c2, x3 = c3;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mul_hi_lo(kPhiloxM0, x0, lo0, hi0);
    mul_hi_lo(kPhiloxM1, x2, lo1, hi1);
    x0 = hi1 ^ x1 ^ k0;
    x1 = lo1;
    x2 = hi0 ^ x3 ^ k1;
    x3 = lo0;
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return {x0, x1, x2, x3};
}

// (0,1) from 52 random bits; never returns 0 or 1, safe under log().
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// One standard normal per block via Box-Muller.
inline double normal_from_block(const std::array<std::uint32_t, 4>& w) {
  const double u1 = to_unit(w[0], w[1]);
  const double u2 = to_unit(w[2], w[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Counter layout: c0 = step, c1 = (stream tag << 24) | component, c2/c3 = path.
enum Stream : std::uint32_t {
  kStreamPathNoise = 0,
  kStreamValidation = 1,
  kStreamCoefficients = 2,
};

inline std::array<std::uint32_t, 4> block_for(std::uint64_t seed, Stream stream,
                                              std::uint64_t path, std::uint32_t step,
                                              std::uint32_t component) {
  return philox4x32(seed, step, (static_cast<std::uint32_t>(stream) << 24) | component,
                    static_cast<std::uint32_t>(path),
                    static_cast<std::uint32_t>(path >> 32));
}

// N(0,1) increment driver for path simulation.
inline double gauss(std::uint64_t seed, std::uint64_t path, std::uint32_t step,
                    std::uint32_t component) {
  return normal_from_block(block_for(seed, kStreamPathNoise, path, step, component));
}

// Uniform(0,1) on a named auxiliary stream.
inline double uniform01(std::uint64_t seed, Stream stream, std::uint64_t index,
                        std::uint32_t step, std::uint32_t component) {
  const auto w = block_for(seed, stream, index, step, component);
  return to_unit(w[0], w[1]);
}

inline double uniform(std::uint64_t seed, Stream stream, std::uint64_t index,
                      std::uint32_t step, std::uint32_t component, double lo, double hi) {
  return lo + (hi - lo) * uniform01(seed, stream, index, step, component);
}

inline double normal(std::uint64_t seed, Stream stream, std::uint64_t index,
                     std::uint32_t step, std::uint32_t component) {
  return normal_from_block(block_for(seed, stream, index, step, component));
}

// Decorrelated secondary seed (used e.g. for the independent RHS run).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace ibp::rng
