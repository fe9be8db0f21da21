#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "recal/errors.hpp"

namespace recal {

// Deterministic random source. All variates are derived from raw mt19937_64
// output with fixed arithmetic, so a seed pins the entire stream; none of the
// implementation-defined <random> distributions are used.
class seeded_rng {
public:
  explicit seeded_rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on (0, 1), never exactly 0 or 1 (safe under log()).
  double uniform01() {
    const std::uint64_t x = engine_();
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform on [lo, hi]; degenerate lo == hi returns lo exactly.
  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  // Uniform index in {0, ..., n-1}.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  }

  // Standard normal via Box-Muller (cosine branch only; one variate per
  // two engine calls, no cached state).
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw contract_error("gamma shape must be positive");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet(alpha) over k classes.
  std::vector<double> dirichlet(double alpha, std::size_t k) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (auto& v : p) {
      v = gamma(alpha);
      sum += v;
    }
    if (sum <= 0.0) {
      for (auto& v : p) v = 1.0 / static_cast<double>(k);
      return p;
    }
    for (auto& v : p) v /= sum;
    return p;
  }

  // Class index drawn from probability vector p (walks the cumulative sum).
  std::size_t categorical(const std::vector<double>& p) {
    const double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.empty() ? 0 : p.size() - 1;
  }

  void discard(std::uint64_t n) { engine_.discard(n); }

private:
  std::mt19937_64 engine_;
};

}  // namespace recal
