#pragma once

#include <optional>

#include "eki/operators.hpp"
#include "eki/sampler.hpp"
#include "eki/types.hpp"

namespace eki {

/// d x d grayscale image with values in [0, 1].
struct PhantomImage {
  int d = 0;
  Matrix pixels;  // row i, column j; row 0 is the top of the image

  Vector flatten() const;  // row-major
};

/// Ten-ellipse modified Shepp-Logan phantom rasterized at pixel centers on
/// [-1, 1]^2, ellipse intensities summed. Requires d >= 8.
PhantomImage shepp_logan(int d);

/// Parallel-beam geometry: n_angles uniform in [0, pi), n_detectors bins
/// spanning the image diagonal.
struct RadonGeometry {
  int d = 0;
  int n_angles = 0;
  int n_detectors = 0;

  Index domain_dim() const { return static_cast<Index>(d) * d; }
  Index range_dim() const {
    return static_cast<Index>(n_angles) * n_detectors;
  }

  /// Default bench geometry: n_angles = d and n_detectors ~ 1.42 d, keeping
  /// the measurement/parameter ratio m/n ~ 1.42.
  static RadonGeometry standard(int d);
};

/// Discrete Radon transform: line integrals by fixed-step sampling with
/// bilinear interpolation (2d samples per ray over the diagonal). The
/// adjoint is the exact algebraic transpose of this discretization.
LinearMap radon_operator(const RadonGeometry& geom);

/// Ornstein-Uhlenbeck covariance on the pixel grid:
/// (C0)_{ij} = exp(-|q_i - q_j| / h^2), q_i the pixel position normalized to
/// [0,1]^2. Note the division by h^2 (not h): with h = 0.01 the correlation
/// length is extremely short and the matrix is numerically the identity.
Matrix ou_matrix(int d, double h);

/// Dense-backed SpdOperator over ou_matrix with clamped spectral square
/// root; desk scale (d <= 64).
SpdOperator ou_covariance(int d, double h);

struct NoisyData {
  Vector y_hat;  // rescaled noisy measurement
  double delta;  // exactly 1 after rescaling
  double scale;  // |xi|; rescale the operator and exact data by 1/scale
};

/// Noise protocol: xi = (|y| / (snr |xi_s|)) xi_s with xi_s standard normal,
/// then measurement and (by the returned scale) operator are rescaled by
/// |xi| so that delta = |y_hat - y| = 1.
NoisyData make_noisy_data(const Vector& y, double snr, GaussianSampler& rng);

struct ErrorMetrics {
  double e_rel = 0.0;
  std::optional<double> e_app;
};

/// e_rel = |x - x_star| / |x_star| and, when a Tikhonov reference is given,
/// e_app = |x - x_tik| / |x_star|.
ErrorMetrics metrics(const Vector& x, const Vector& x_star,
                     const Vector* x_tik = nullptr);

}  // namespace eki
