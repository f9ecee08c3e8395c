#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace sggmix {

/// Seedable random stream backed by mt19937_64. All variates are derived
/// from the raw 64-bit engine output, so a given seed produces the same
/// sequence of draws on every platform. One stream per chain; a stream is
/// not safe to share across threads.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform on the open interval (0,1) with 53-bit resolution.
  double uniform() {
    double u;
    do {
      u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    } while (u == 0.0);
    return u;
  }

  /// Uniform on (a,b); endpoints are never returned.
  double uniform(double a, double b) {
    if (!(a < b)) throw std::domain_error("RngStream::uniform: empty interval");
    return a + (b - a) * uniform();
  }

  /// Standard normal via Box-Muller. The second variate of the pair is
  /// dropped so the stream state is just the engine.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double exponential(double rate = 1.0) {
    if (!(rate > 0.0)) throw std::domain_error("RngStream::exponential: rate must be positive");
    return -std::log(uniform()) / rate;
  }

  std::uint64_t raw() { return engine_(); }

private:
  std::mt19937_64 engine_;
};

} // namespace sggmix
