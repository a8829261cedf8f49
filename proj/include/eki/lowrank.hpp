#pragma once

#include <string>

#include "eki/operators.hpp"
#include "eki/sampler.hpp"
#include "eki/types.hpp"

namespace eki {

/// Tall factor A with J columns in parameter space; A A^T approximates the
/// prior covariance. `capped` records that a requested rank exceeded the
/// dimension and was reduced to it.
struct LowRankFactor {
  Matrix columns;
  bool capped = false;

  Index n() const { return columns.rows(); }
  Index rank() const { return columns.cols(); }
};

/// Centered, scaled anomaly of a given ensemble (columns are members):
/// column j is (U_j - mean) / sqrt(J) with the 1/J sample mean, so that
/// E[A A^T] = ((J-1)/J) * Cov(U) for i.i.d. members. Throws for J < 2.
LowRankFactor anomaly_of(const Matrix& ensemble);

/// Ensemble anomaly of J i.i.d. draws U_j = C0^{1/2} z_j, z_j standard normal.
LowRankFactor anomaly_factor(const SpdOperator& c0, Index j,
                             GaussianSampler& rng);

/// J-truncated eigendecomposition factor: A = V_J diag(sqrt(lambda_1..J)).
/// Requests above the dimension are capped (capped flag set).
LowRankFactor svd_factor(const SpdOperator& c0, Index j);
LowRankFactor svd_factor(const Matrix& c0_dense, Index j);

/// Nystrom sketch with the orthonormal range basis kept for residual checks.
struct NystroemSketch {
  LowRankFactor factor;
  Matrix range_basis;  // Q
};

/// Projection-based Nystrom approximation: sample W ~ N(0, I), U = C0 W,
/// reduced QR of U, then A = (C0 Q) (Q^T C0 Q)^{-1/2}.
NystroemSketch nystroem_sketch(const SpdOperator& c0, Index j,
                               GaussianSampler& rng);
LowRankFactor nystroem_factor(const SpdOperator& c0, Index j,
                              GaussianSampler& rng);

/// Spectral-norm error |A A^T - C0|_2 via symmetric eigensolve of the
/// difference. Dense, test-scale only.
double approx_error(const LowRankFactor& factor, const Matrix& c0_dense);
double approx_error(const LowRankFactor& factor, const SpdOperator& c0);

/// Factors serialize through the binary matrix container; the capped flag
/// is recovered from the stored column count versus the requested rank.
void save_factor(const std::string& path, const LowRankFactor& factor);
LowRankFactor load_factor(const std::string& path, Index requested_rank);

}  // namespace eki
