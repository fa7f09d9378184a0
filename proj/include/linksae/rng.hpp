#pragma once

#include "linksae/types.hpp"

#include <cstdint>
#include <random>
#include <span>

namespace linksae {

/// Seeded pseudo-random source shared by every sampler in the library.
/// Streams are reproducible for a fixed seed on a fixed toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  // Open interval (0,1); safe for logs.
  double uniform_pos();
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  double gamma(double shape, double scale);
  double beta(double a, double b);
  // Inverse-Gamma(shape, scale) with density proportional to x^{-shape-1} exp(-scale/x).
  double inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, 1.0 / scale); }
  Vector dirichlet(const Vector& alpha);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  // Draw from an unnormalized discrete distribution.
  std::size_t categorical(std::span<const double> weights);
  Vector mvnormal(const Vector& mean, const Matrix& chol_lower);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; derives independent child seeds from a parent seed.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

}  // namespace linksae
