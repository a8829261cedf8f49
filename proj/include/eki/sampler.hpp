#pragma once

#include <cstdint>
#include <random>

#include "eki/types.hpp"

namespace eki {

/// Seedable Gaussian stream used for every random draw in the project.
/// mt19937_64 drives a polar Box-Muller transform; the uniform-to-double
/// conversion and the rejection loop are fixed here, so a given seed yields
/// the same sample sequence on every run. Vectors fill top to bottom,
/// matrices column by column.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed);

  double normal();
  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  /// Derive an independent stream; used to give parallel or per-iteration
  /// consumers their own reproducible sequence.
  GaussianSampler split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  double uniform_open();  // (-1, 1)

  std::uint64_t seed_;
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 finalizer; also used to derive per-iteration seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace eki
