#pragma once

// Seeded random number generation. Substreams are derived from a master
// seed by hashing (seed, stream id) through SplitMix64 into a fully
// seeded mt19937_64, so chains and replications get independent,
// reproducible streams.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "dirt/core.hpp"

namespace dirt {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (0xD1B54A32D192ED03ull * (stream + 1));
    std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s)),
                      static_cast<std::uint32_t>(splitmix64(s))};
    gen_.seed(seq);
  }

  double uniform() { return unif_(gen_); }

  double normal() { return norm_(gen_); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  /// Draw from a categorical distribution given probabilities p[0..m-1].
  int categorical(std::span<const double> p) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
      acc += p[j];
      if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(p.size()) - 1;
  }

  /// Bivariate normal draw via Cholesky of [[s1^2, r s1 s2], [r s1 s2,
  /// s2^2]]. Degenerate cases (zero SDs, |rho| = 1) reduce to the rank-1
  /// factor.
  std::pair<double, double> bivariate_normal(double mean1, double mean2,
                                             double sd1, double sd2,
                                             double rho) {
    double z1 = normal();
    double z2 = normal();
    double x1 = mean1 + sd1 * z1;
    double res = 1.0 - rho * rho;
    double x2 = mean2 + sd2 * (rho * z1 + std::sqrt(std::max(res, 0.0)) * z2);
    return {x1, x2};
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace dirt
