#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"

namespace mjslqr {

/// SplitMix64 finalizer. Used for every seed derivation in the library so
/// that derived streams are reproducible across platforms.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Pure seed derivation: h0 = splitmix64(base), h_{k+1} = splitmix64(h_k ^ index_k).
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> indices) noexcept {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t index : indices) h = splitmix64(h ^ index);
  return h;
}

/// Thin wrapper over a 64-bit Mersenne twister with the draws the library needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double normal() { return normal_(engine_); }

  Eigen::VectorXd normal_vector(Eigen::Index size) {
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = normal_(engine_);
    return v;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal_(engine_);
    return m;
  }

  /// Draw from Dir(alpha) by normalizing independent Gamma(alpha_k, 1) draws.
  Eigen::VectorXd dirichlet(const Eigen::VectorXd& alpha) {
    detail::require(alpha.size() > 0 && (alpha.array() > 0.0).all(),
                    "dirichlet: concentration parameters must be positive");
    Eigen::VectorXd g(alpha.size());
    for (Eigen::Index k = 0; k < alpha.size(); ++k)
      g(k) = std::gamma_distribution<double>(alpha(k), 1.0)(engine_);
    return g / g.sum();
  }

  /// Index drawn from a probability vector by inverse-CDF lookup.
  int categorical(const Eigen::Ref<const Eigen::VectorXd>& probs) {
    const double u = uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
      if (probs(k) <= 0.0) continue;
      last_positive = static_cast<int>(k);
      acc += probs(k);
      if (u < acc) return static_cast<int>(k);
    }
    return last_positive;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mjslqr
