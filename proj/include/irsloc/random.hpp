#pragma once

#include "irsloc/linalg.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace irsloc {

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of a seed with a list of stream labels.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> labels) {
  std::uint64_t s = mix_seed(base);
  for (auto l : labels) s = mix_seed(s ^ mix_seed(l + 0x632be59bd9b4e019ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
  cd complex_normal(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
  }

  CMatrix complex_normal_matrix(Eigen::Index rows, Eigen::Index cols, double variance = 1.0) {
    CMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = complex_normal(variance);
    return m;
  }

  CVector complex_normal_vector(Eigen::Index n, double variance = 1.0) {
    return complex_normal_matrix(n, 1, variance);
  }

  CVector unit_modulus_vector(Eigen::Index n) {
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = std::polar(1.0, 2.0 * kPi * uniform());
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace irsloc
