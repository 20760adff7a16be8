#pragma once

#include <cmath>
#include <cstdint>

#include "tenar/types.hpp"

namespace tenar {

/// Counter-based pseudo-random generator built on the splitmix64 output
/// mix (Vigna, public domain).  The state is a plain 64-bit counter
/// advanced by a fixed odd increment, so draw n of stream s is a pure
/// function of (seed, s, n) and reproduces bit-for-bit on any platform.
///
/// Normal deviates use Box-Muller on two fresh uniforms per draw.  That
/// costs one extra uniform compared with the usual cached variant but
/// keeps the draw count independent of call history, which is what
/// makes seeded runs repeatable across compilers and standard
/// libraries (std::normal_distribution is not pinned down that way).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  /// Uniform on (0, 1), endpoints excluded.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  /// Standard normal deviate.
  double normal() {
    const double u = uniform();
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) *
           std::cos(2.0 * 3.14159265358979323846 * v);
  }

  /// Independent substream.  The child seed mixes the parent seed with
  /// the stream id, so streams derived from one seed do not overlap in
  /// practice and the mapping is stable across runs.
  [[nodiscard]] Rng stream(std::uint64_t id) const {
    return Rng(mix(seed_state() ^ mix(id + 0x9E3779B97F4A7C15ull)));
  }

  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_state() const { return state_; }

  std::uint64_t state_;
};

}  // namespace tenar
