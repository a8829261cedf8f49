#include "eki/sampler.hpp"

#include <cmath>

namespace eki {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

GaussianSampler::GaussianSampler(std::uint64_t seed)
    : seed_(seed), rng_(seed) {}

double GaussianSampler::uniform_open() {
  // 53-bit mantissa in [0,1), mapped to (-1,1); zero is admissible here and
  // handled by the rejection loop in normal().
  const std::uint64_t bits = rng_() >> 11;
  return 2.0 * (static_cast<double>(bits) * 0x1.0p-53) - 1.0;
}

double GaussianSampler::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = uniform_open();
    v = uniform_open();
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Vector GaussianSampler::normal_vector(Index n) {
  Vector out(n);
  for (Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

Matrix GaussianSampler::normal_matrix(Index rows, Index cols) {
  Matrix out(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) out(r, c) = normal();
  return out;
}

GaussianSampler GaussianSampler::split(std::uint64_t stream) const {
  return GaussianSampler(mix_seed(seed_, stream));
}

}  // namespace eki
