#include "eki/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "eki/factorizations.hpp"
#include "eki/io.hpp"

namespace eki {

namespace {

// Batched C0 applied to the columns of a matrix, using the dense payload
// when available.
Matrix apply_cols(const SpdOperator& c0, const Matrix& z) {
  if (c0.dense) return (*c0.dense) * z;
  Matrix out(c0.dim, z.cols());
  for (Index c = 0; c < z.cols(); ++c) out.col(c) = c0.apply(z.col(c));
  return out;
}

Matrix apply_sqrt_cols(const SpdOperator& c0, const Matrix& z) {
  if (c0.sqrt_dense) return (*c0.sqrt_dense) * z;
  Matrix out(c0.dim, z.cols());
  for (Index c = 0; c < z.cols(); ++c) out.col(c) = c0.apply_sqrt(z.col(c));
  return out;
}

Index cap_rank(Index j, Index n, bool& capped) {
  if (j > n) {
    capped = true;
    return n;
  }
  return j;
}

}  // namespace

LowRankFactor anomaly_of(const Matrix& ensemble) {
  const Index j = ensemble.cols();
  if (j < 2)
    throw std::invalid_argument("anomaly_of: need at least two members");
  const Vector mean = ensemble.rowwise().mean();
  LowRankFactor out;
  out.columns = (ensemble.colwise() - mean) / std::sqrt(static_cast<double>(j));
  return out;
}

LowRankFactor anomaly_factor(const SpdOperator& c0, Index j,
                             GaussianSampler& rng) {
  if (j < 2)
    throw std::invalid_argument("anomaly_factor: need at least two members");
  if (!c0.has_sqrt())
    throw std::invalid_argument("anomaly_factor: prior lacks apply_sqrt");
  const Matrix z = rng.normal_matrix(c0.dim, j);
  LowRankFactor out = anomaly_of(apply_sqrt_cols(c0, z));
  if (j > c0.dim) {
    // The sample size stays J (that is what the Monte Carlo error depends
    // on), but the stored factor is compressed to n columns with the same
    // outer product.
    Matrix outer = out.columns * out.columns.transpose();
    outer = 0.5 * (outer + outer.transpose());
    const SymEig eig = sym_eig(outer);
    out.columns.resize(c0.dim, c0.dim);
    for (Index c = 0; c < c0.dim; ++c)
      out.columns.col(c) =
          eig.eigenvectors.col(c) * std::sqrt(std::max(eig.eigenvalues[c], 0.0));
    out.capped = true;
  }
  return out;
}

LowRankFactor svd_factor(const Matrix& c0_dense, Index j) {
  bool capped = false;
  j = cap_rank(j, c0_dense.rows(), capped);
  const SymEig eig = sym_eig(c0_dense);
  LowRankFactor out;
  out.capped = capped;
  out.columns.resize(c0_dense.rows(), j);
  for (Index c = 0; c < j; ++c) {
    const double lambda = std::max(eig.eigenvalues[c], 0.0);
    out.columns.col(c) = eig.eigenvectors.col(c) * std::sqrt(lambda);
  }
  return out;
}

LowRankFactor svd_factor(const SpdOperator& c0, Index j) {
  bool capped = false;
  j = cap_rank(j, c0.dim, capped);

  if (c0.diagonal) {
    // Analytic eigenpairs: coordinate directions sorted by entry, ties by
    // index, so the truncation is deterministic.
    const Vector& d = *c0.diagonal;
    std::vector<Index> order(static_cast<std::size_t>(d.size()));
    for (Index i = 0; i < d.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&d](Index a, Index b) { return d[a] > d[b]; });
    LowRankFactor out;
    out.capped = capped;
    out.columns = Matrix::Zero(d.size(), j);
    for (Index c = 0; c < j; ++c)
      out.columns(order[static_cast<std::size_t>(c)], c) =
          std::sqrt(std::max(d[order[static_cast<std::size_t>(c)]], 0.0));
    return out;
  }

  if (c0.eig) {
    LowRankFactor out;
    out.capped = capped;
    out.columns.resize(c0.dim, j);
    for (Index c = 0; c < j; ++c) {
      const double lambda = std::max(c0.eig->eigenvalues[c], 0.0);
      out.columns.col(c) = c0.eig->eigenvectors.col(c) * std::sqrt(lambda);
    }
    return out;
  }

  LowRankFactor out = svd_factor(to_dense(c0), j);
  out.capped = capped;
  return out;
}

NystroemSketch nystroem_sketch(const SpdOperator& c0, Index j,
                               GaussianSampler& rng) {
  if (j < 1) throw std::invalid_argument("nystroem_sketch: rank must be >= 1");
  bool capped = false;
  j = cap_rank(j, c0.dim, capped);

  const Matrix w = rng.normal_matrix(c0.dim, j);
  const Matrix u = apply_cols(c0, w);
  const QrResult qr = reduced_qr(u);
  const Matrix c0q = apply_cols(c0, qr.q);
  Matrix gram = qr.q.transpose() * c0q;
  gram = 0.5 * (gram + gram.transpose());  // kill rounding asymmetry
  const Matrix gram_inv_sqrt = inv_sqrt_psd(gram);

  NystroemSketch out;
  out.range_basis = qr.q;
  out.factor.columns = c0q * gram_inv_sqrt;
  out.factor.capped = capped;
  return out;
}

LowRankFactor nystroem_factor(const SpdOperator& c0, Index j,
                              GaussianSampler& rng) {
  return nystroem_sketch(c0, j, rng).factor;
}

double approx_error(const LowRankFactor& factor, const Matrix& c0_dense) {
  if (factor.n() != c0_dense.rows() || c0_dense.rows() != c0_dense.cols())
    throw std::invalid_argument("approx_error: dimension mismatch");
  const Matrix diff =
      factor.columns * factor.columns.transpose() - c0_dense;
  return spectral_norm_sym(0.5 * (diff + diff.transpose()));
}

double approx_error(const LowRankFactor& factor, const SpdOperator& c0) {
  return approx_error(factor, to_dense(c0));
}

void save_factor(const std::string& path, const LowRankFactor& factor) {
  write_matrix_bin(path, factor.columns);
}

LowRankFactor load_factor(const std::string& path, Index requested_rank) {
  LowRankFactor out;
  out.columns = read_matrix_bin(path);
  out.capped = out.columns.cols() < requested_rank;
  return out;
}

}  // namespace eki
