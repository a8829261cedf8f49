#include "eki/operators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "eki/factorizations.hpp"
#include "eki/sampler.hpp"

namespace eki {

Vector LinearMap::apply(const Vector& x) const {
  if (x.size() != domain_dim)
    throw std::invalid_argument("LinearMap: domain dimension mismatch");
  return forward(x);
}

Vector LinearMap::apply_adjoint(const Vector& y) const {
  if (!has_adjoint()) throw std::invalid_argument("adjoint unavailable");
  if (y.size() != range_dim)
    throw std::invalid_argument("LinearMap: range dimension mismatch");
  return adjoint(y);
}

double WeightedNorm::operator()(const Vector& x) const {
  if (!weight.has_inv_sqrt())
    throw std::invalid_argument("WeightedNorm: weight lacks apply_inv_sqrt");
  return weight.apply_inv_sqrt(x).norm();
}

LinearMap dense_map(const Matrix& a) {
  auto m = std::make_shared<const Matrix>(a);
  LinearMap op;
  op.domain_dim = a.cols();
  op.range_dim = a.rows();
  op.forward = [m](const Vector& x) -> Vector { return (*m) * x; };
  op.adjoint = [m](const Vector& y) -> Vector {
    return m->transpose() * y;
  };
  return op;
}

LinearMap diagonal_map(const Vector& diag) {
  auto d = std::make_shared<const Vector>(diag);
  LinearMap op;
  op.domain_dim = diag.size();
  op.range_dim = diag.size();
  op.forward = [d](const Vector& x) -> Vector { return d->cwiseProduct(x); };
  op.adjoint = op.forward;
  return op;
}

LinearMap zero_map(Index range_dim, Index domain_dim) {
  LinearMap op;
  op.domain_dim = domain_dim;
  op.range_dim = range_dim;
  op.forward = [range_dim](const Vector&) -> Vector {
    return Vector::Zero(range_dim);
  };
  op.adjoint = [domain_dim](const Vector&) -> Vector {
    return Vector::Zero(domain_dim);
  };
  return op;
}

LinearMap identity_map(Index dim) {
  LinearMap op;
  op.domain_dim = dim;
  op.range_dim = dim;
  op.forward = [](const Vector& x) -> Vector { return x; };
  op.adjoint = op.forward;
  return op;
}

LinearMap scaled_map(const LinearMap& base, double factor) {
  LinearMap op;
  op.domain_dim = base.domain_dim;
  op.range_dim = base.range_dim;
  auto fwd = base.forward;
  op.forward = [fwd, factor](const Vector& x) -> Vector {
    return factor * fwd(x);
  };
  if (base.has_adjoint()) {
    auto adj = base.adjoint;
    op.adjoint = [adj, factor](const Vector& y) -> Vector {
      return factor * adj(y);
    };
  }
  return op;
}

SpdOperator spd_identity(Index dim) {
  SpdOperator op;
  op.dim = dim;
  auto id = [](const Vector& v) -> Vector { return v; };
  op.apply = id;
  op.apply_sqrt = id;
  op.apply_inv_sqrt = id;
  return op;
}

SpdOperator spd_diagonal(const Vector& diag) {
  for (Index i = 0; i < diag.size(); ++i)
    if (diag[i] < 0.0)
      throw std::invalid_argument("spd_diagonal: negative entry");
  auto d = std::make_shared<const Vector>(diag);
  SpdOperator op;
  op.dim = diag.size();
  op.diagonal = d;
  op.apply = [d](const Vector& v) -> Vector { return d->cwiseProduct(v); };
  op.apply_sqrt = [d](const Vector& v) -> Vector {
    return d->cwiseSqrt().cwiseProduct(v);
  };
  op.apply_inv_sqrt = [d](const Vector& v) -> Vector {
    Vector out(v.size());
    for (Index i = 0; i < v.size(); ++i)
      out[i] = (*d)[i] > 0.0 ? v[i] / std::sqrt((*d)[i]) : 0.0;
    return out;
  };
  return op;
}

SpdOperator spd_dense(const Matrix& p, double clamp_tol) {
  if (p.rows() != p.cols())
    throw std::invalid_argument("spd_dense: matrix must be square");
  auto m = std::make_shared<const Matrix>(p);
  auto eig = std::make_shared<const SymEig>(sym_eig(p));

  const double lambda_max =
      eig->eigenvalues.size() > 0 ? std::max(eig->eigenvalues[0], 0.0) : 0.0;
  const double clamp = clamp_tol * lambda_max;
  Vector sq(eig->eigenvalues.size());
  Vector isq(eig->eigenvalues.size());
  for (Index i = 0; i < sq.size(); ++i) {
    const double lambda = eig->eigenvalues[i];
    if (lambda < -clamp) throw std::invalid_argument("spd_dense: not PSD");
    sq[i] = lambda > clamp ? std::sqrt(lambda) : 0.0;
    isq[i] = lambda > clamp ? 1.0 / std::sqrt(lambda) : 0.0;
  }
  auto sqrt_m = std::make_shared<const Matrix>(
      eig->eigenvectors * sq.asDiagonal() * eig->eigenvectors.transpose());
  auto inv_sqrt_m = std::make_shared<const Matrix>(
      eig->eigenvectors * isq.asDiagonal() * eig->eigenvectors.transpose());

  SpdOperator op;
  op.dim = p.rows();
  op.dense = m;
  op.sqrt_dense = sqrt_m;
  op.eig = eig;
  op.apply = [m](const Vector& v) -> Vector { return (*m) * v; };
  op.apply_sqrt = [sqrt_m](const Vector& v) -> Vector {
    return (*sqrt_m) * v;
  };
  op.apply_inv_sqrt = [inv_sqrt_m](const Vector& v) -> Vector {
    return (*inv_sqrt_m) * v;
  };
  return op;
}

Matrix to_dense(const LinearMap& op) {
  Matrix out(op.range_dim, op.domain_dim);
  Vector e = Vector::Zero(op.domain_dim);
  for (Index c = 0; c < op.domain_dim; ++c) {
    e[c] = 1.0;
    out.col(c) = op.forward(e);
    e[c] = 0.0;
  }
  return out;
}

Matrix to_dense(const SpdOperator& op) {
  if (op.dense) return *op.dense;
  if (op.diagonal) return Matrix(op.diagonal->asDiagonal());
  Matrix out(op.dim, op.dim);
  Vector e = Vector::Zero(op.dim);
  for (Index c = 0; c < op.dim; ++c) {
    e[c] = 1.0;
    out.col(c) = op.apply(e);
    e[c] = 0.0;
  }
  return out;
}

double adjoint_test(const LinearMap& op, int trials, std::uint64_t seed) {
  if (!op.has_adjoint()) throw std::invalid_argument("adjoint unavailable");
  if (trials < 1) throw std::invalid_argument("adjoint_test: trials >= 1");

  GaussianSampler rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Vector x = rng.normal_vector(op.domain_dim);
    const Vector y = rng.normal_vector(op.range_dim);
    const Vector lx = op.forward(x);
    const Vector lty = op.adjoint(y);
    const double lhs = lx.dot(y);
    const double rhs = x.dot(lty);
    const double denom =
        lx.norm() * y.norm() + std::numeric_limits<double>::epsilon();
    worst = std::max(worst, std::abs(lhs - rhs) / denom);
  }
  return worst;
}

}  // namespace eki
