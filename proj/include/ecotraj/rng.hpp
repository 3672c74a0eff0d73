#ifndef ECOTRAJ_RNG_HPP
#define ECOTRAJ_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "ecotraj/errors.hpp"

namespace ecotraj {

// Random number source for all samplers. Distributions are implemented on
// top of the raw 64-bit stream so that draws do not depend on the standard
// library's (implementation-defined) distribution algorithms; identical
// seeds give identical output on any build of this code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Decorrelated substream, e.g. one per chain or per simulated dataset.
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0,1); never returns an endpoint.
  double unif() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53; }

  double unif(double a, double b) { return a + (b - a) * unif(); }

  // Standard normal via Marsaglia's polar method, caching the spare.
  double norm() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * unif() - 1.0;
      v = 2.0 * unif() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double norm(double mean, double sd) { return mean + sd * norm(); }

  // Exponential with rate 1.
  double expon() { return -std::log(unif()); }

  // Gamma(shape, scale 1) via Marsaglia-Tsang.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw_domain("gamma_shape", "gamma shape must be positive");
    if (shape < 1.0) {
      const double u = unif();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = norm();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = unif();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Inverse-Gamma(shape, scale): density ∝ x^{-shape-1} exp(-scale/x).
  double inv_gamma(double shape, double scale) {
    if (!(scale > 0.0)) throw_domain("inv_gamma_scale", "inverse-gamma scale must be positive");
    return scale / gamma(shape);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ecotraj

#endif  // ECOTRAJ_RNG_HPP
