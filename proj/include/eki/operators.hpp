#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include "eki/types.hpp"

namespace eki {

struct SymEig;  // factorizations.hpp

/// Matrix-free linear operator between finite-dimensional Euclidean spaces.
/// `forward` must be linear; `adjoint`, when set, must satisfy
/// <forward(x), y> = <x, adjoint(y)>.
struct LinearMap {
  Index domain_dim = 0;
  Index range_dim = 0;
  std::function<Vector(const Vector&)> forward;
  std::function<Vector(const Vector&)> adjoint;  // empty when unavailable

  bool has_adjoint() const { return static_cast<bool>(adjoint); }
  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& y) const;
};

/// Symmetric positive (semi-)definite operator. `apply_sqrt` and
/// `apply_inv_sqrt` are optional capabilities; the inverse square root is
/// pseudoinverse-consistent on rank-deficient operators.
struct SpdOperator {
  Index dim = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_sqrt;      // empty when unavailable
  std::function<Vector(const Vector&)> apply_inv_sqrt;  // empty when unavailable

  // Payloads set by the dense/diagonal factories so that downstream code can
  // batch column applications or reuse a cached eigendecomposition.
  std::shared_ptr<const Matrix> dense;
  std::shared_ptr<const Matrix> sqrt_dense;
  std::shared_ptr<const Vector> diagonal;
  std::shared_ptr<const SymEig> eig;

  bool has_sqrt() const { return static_cast<bool>(apply_sqrt); }
  bool has_inv_sqrt() const { return static_cast<bool>(apply_inv_sqrt); }
};

struct WeightedNorm {
  SpdOperator weight;
  double operator()(const Vector& x) const;
};

// Factories. Dense payloads keep shared read-only state so applies are safe
// to call concurrently on distinct vectors.
LinearMap dense_map(const Matrix& a);
LinearMap diagonal_map(const Vector& diag);
LinearMap zero_map(Index range_dim, Index domain_dim);
LinearMap identity_map(Index dim);
LinearMap scaled_map(const LinearMap& op, double factor);

SpdOperator spd_identity(Index dim);
SpdOperator spd_diagonal(const Vector& diag);
SpdOperator spd_dense(const Matrix& p, double clamp_tol = 1e-12);

/// Materialize an operator column-by-column (test/desk scale only).
Matrix to_dense(const LinearMap& op);
Matrix to_dense(const SpdOperator& op);

/// Max over `trials` random pairs of |<Lx,y> - <x,L*y>| / (|Lx||y| + eps).
/// Throws std::invalid_argument("adjoint unavailable") when op has no adjoint.
double adjoint_test(const LinearMap& op, int trials, std::uint64_t seed);

}  // namespace eki
