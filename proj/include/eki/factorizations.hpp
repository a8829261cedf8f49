#pragma once

#include "eki/types.hpp"

namespace eki {

inline constexpr double kDefaultClampTol = 1e-12;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
struct SymEig {
  Vector eigenvalues;
  Matrix eigenvectors;  // orthonormal columns, matching eigenvalue order
};

/// Symmetric eigendecomposition. Input must be symmetric to 1e-12 relative
/// Frobenius defect. Ties keep the backend's (reversed ascending) order so
/// identical input bits give identical output bits.
SymEig sym_eig(const Matrix& m);

/// Pseudoinverse-consistent inverse square root of a symmetric PSD matrix.
/// Eigenvalues below clamp_tol * lambda_max are treated as exactly zero;
/// an eigenvalue below -clamp_tol * lambda_max raises a "not PSD" error.
Matrix inv_sqrt_psd(const Matrix& m, double clamp_tol = kDefaultClampTol);

/// Square root via the same clamping convention (used by dense factories).
Matrix sqrt_psd(const Matrix& m, double clamp_tol = kDefaultClampTol);

struct QrResult {
  Matrix q;  // n x J, orthonormal columns
  Matrix r;  // J x J, upper triangular, nonnegative diagonal
};

/// Reduced (thin) QR of a tall n x J factor, n >= J. Diagonal of R is
/// normalized to be nonnegative; rank-deficient input is permitted and the
/// corresponding Q columns are completed deterministically by the
/// Householder backend.
QrResult reduced_qr(const Matrix& columns);

/// Spectral norm of a symmetric matrix via eigensolve.
double spectral_norm_sym(const Matrix& m);

}  // namespace eki
