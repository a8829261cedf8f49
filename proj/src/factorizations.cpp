#include "eki/factorizations.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace eki {

SymEig sym_eig(const Matrix& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("sym_eig: matrix must be square");
  const double scale = m.cwiseAbs().maxCoeff();
  const double defect = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (defect > 1e-12 * scale + 1e-300)
    throw std::invalid_argument("sym_eig: input not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("sym_eig: eigensolver failed");

  // Backend returns ascending order; reverse for descending. Ties keep the
  // reversed backend order, which is deterministic in the input bits.
  const Index n = m.rows();
  SymEig out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors.resize(n, n);
  for (Index i = 0; i < n; ++i)
    out.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  return out;
}

namespace {

Matrix psd_power(const Matrix& m, double clamp_tol, bool inverse) {
  const SymEig eig = sym_eig(m);
  const double lambda_max = eig.eigenvalues.size() > 0
                                ? std::max(eig.eigenvalues[0], 0.0)
                                : 0.0;
  const double clamp = clamp_tol * lambda_max;
  Vector d(eig.eigenvalues.size());
  for (Index i = 0; i < d.size(); ++i) {
    const double lambda = eig.eigenvalues[i];
    if (lambda < -clamp)
      throw std::invalid_argument("not PSD");
    if (lambda <= clamp) {
      d[i] = 0.0;  // pseudoinverse branch
    } else {
      d[i] = inverse ? 1.0 / std::sqrt(lambda) : std::sqrt(lambda);
    }
  }
  return eig.eigenvectors * d.asDiagonal() * eig.eigenvectors.transpose();
}

}  // namespace

Matrix inv_sqrt_psd(const Matrix& m, double clamp_tol) {
  return psd_power(m, clamp_tol, true);
}

Matrix sqrt_psd(const Matrix& m, double clamp_tol) {
  return psd_power(m, clamp_tol, false);
}

QrResult reduced_qr(const Matrix& columns) {
  const Index n = columns.rows();
  const Index j = columns.cols();
  if (n < j)
    throw std::invalid_argument("reduced_qr: input must be tall (n >= J)");

  Eigen::HouseholderQR<Matrix> qr(columns);
  QrResult out;
  out.q = qr.householderQ() * Matrix::Identity(n, j);
  out.r = qr.matrixQR().topRows(j).triangularView<Eigen::Upper>();
  // Normalize to a nonnegative diagonal of R.
  for (Index c = 0; c < j; ++c) {
    if (out.r(c, c) < 0.0) {
      out.r.row(c) = -out.r.row(c);
      out.q.col(c) = -out.q.col(c);
    }
  }
  return out;
}

double spectral_norm_sym(const Matrix& m) {
  const SymEig eig = sym_eig(m);
  double best = 0.0;
  for (Index i = 0; i < eig.eigenvalues.size(); ++i)
    best = std::max(best, std::abs(eig.eigenvalues[i]));
  return best;
}

}  // namespace eki
