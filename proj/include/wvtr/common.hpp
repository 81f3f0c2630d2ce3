#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace wvtr {

class InvalidEnvironment : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// mt19937_64 output is fully specified by the standard; the helpers below
// avoid std::*_distribution so that draws are identical across standard
// library implementations.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw from a probability vector. Falls back to the last
/// index with positive mass when rounding leaves the cumulative sum short.
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

/// Box-Muller normal draw from two uniforms.
inline double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace wvtr
