#ifndef PLAYPRUNE_RANDOM_HPP
#define PLAYPRUNE_RANDOM_HPP

#include "error.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace playprune {

/// Seeded generator whose derived draws (uniform, normal, shuffles) are
/// computed here rather than by std distributions, so streams are identical
/// across standard library implementations. The full engine state
/// round-trips through a string for checkpoints.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached second value, so the stream
  /// depends only on the engine state).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    PLAYPRUNE_CHECK(n > 0, "Rng::below requires n > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit)
      x = engine_();
    return x % n;
  }

  template <typename T> void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string &s) {
    std::istringstream is(s);
    is >> engine_;
    PLAYPRUNE_CHECK(!is.fail(), "invalid RNG state string");
  }

  bool operator==(const Rng &o) const { return engine_ == o.engine_; }

private:
  std::mt19937_64 engine_;
};

} // namespace playprune

#endif // PLAYPRUNE_RANDOM_HPP
