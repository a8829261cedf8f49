#include "eki/solvers.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "eki/factorizations.hpp"

namespace eki {

void InverseProblem::validate() const {
  if (forward.domain_dim != x0.size())
    throw std::invalid_argument("InverseProblem: x0/domain mismatch");
  if (forward.range_dim != y_hat.size())
    throw std::invalid_argument("InverseProblem: y_hat/range mismatch");
  if (noise_weight.dim != forward.range_dim)
    throw std::invalid_argument("InverseProblem: noise weight dim mismatch");
  if (prior_cov.dim != forward.domain_dim)
    throw std::invalid_argument("InverseProblem: prior dim mismatch");
  if (!noise_weight.has_inv_sqrt())
    throw std::invalid_argument("InverseProblem: R lacks apply_inv_sqrt");
  if (delta < 0.0)
    throw std::invalid_argument("InverseProblem: delta must be >= 0");
}

double weighted_residual_norm(const InverseProblem& p, const Vector& x) {
  return p.noise_weight.apply_inv_sqrt(p.y_hat - p.forward.apply(x)).norm();
}

namespace {

// SPD solve with one step of iterative refinement; verifies the relative
// residual the callers promise.
Vector spd_solve(const Matrix& a, const Vector& b, const char* who) {
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error(std::string(who) + ": factorization failed");
  Vector x = ldlt.solve(b);
  x += ldlt.solve(b - a * x);
  const double denom = b.norm();
  if (denom > 0.0) {
    const double rel = (a * x - b).norm() / denom;
    if (!(rel <= 1e-10))
      throw std::runtime_error(std::string(who) +
                               ": inner solve residual above tolerance");
  }
  return x;
}

// R^{-1/2} applied columnwise.
Matrix weight_cols(const SpdOperator& r, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index c = 0; c < m.cols(); ++c)
    out.col(c) = r.apply_inv_sqrt(m.col(c));
  return out;
}

}  // namespace

Vector tikhonov_solve(const InverseProblem& p, double alpha) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("tikhonov_solve: alpha must be > 0");
  p.validate();
  const Index n = p.domain_dim();
  const Index m = p.range_dim();
  const Vector innovation = p.y_hat - p.forward.apply(p.x0);

  // Both branches evaluate the same minimizer; pick the smaller space.
  if (m <= n || !p.prior_cov.has_sqrt()) {
    // Range space: x0 + C0 L^T (L C0 L^T + alpha R)^{-1} innovation.
    const Matrix l = to_dense(p.forward);
    const Matrix c0lt = [&] {
      Matrix out(n, m);
      if (p.prior_cov.dense) {
        out = (*p.prior_cov.dense) * l.transpose();
      } else {
        for (Index c = 0; c < m; ++c)
          out.col(c) = p.prior_cov.apply(l.transpose().col(c));
      }
      return out;
    }();
    const Matrix r = to_dense(p.noise_weight);
    Matrix sys = l * c0lt + alpha * r;
    sys = 0.5 * (sys + sys.transpose());
    const Vector s = spd_solve(sys, innovation, "tikhonov_solve");
    return p.x0 + c0lt * s;
  }

  // Parameter space via the prior square root:
  // x0 + S (S L^T R^{-1} L S + alpha I)^{-1} S L^T R^{-1} innovation,
  // S = C0^{1/2}.
  const Matrix l = to_dense(p.forward);
  Matrix sqrt_c0;
  if (p.prior_cov.sqrt_dense) {
    sqrt_c0 = *p.prior_cov.sqrt_dense;
  } else {
    sqrt_c0.resize(n, n);
    Vector e = Vector::Zero(n);
    for (Index c = 0; c < n; ++c) {
      e[c] = 1.0;
      sqrt_c0.col(c) = p.prior_cov.apply_sqrt(e);
      e[c] = 0.0;
    }
  }
  const Matrix ls = weight_cols(p.noise_weight, l * sqrt_c0);  // R^{-1/2} L S
  Matrix sys = ls.transpose() * ls;
  sys.diagonal().array() += alpha;
  sys = 0.5 * (sys + sys.transpose());
  const Vector rhs =
      ls.transpose() * p.noise_weight.apply_inv_sqrt(innovation);
  const Vector w = spd_solve(sys, rhs, "tikhonov_solve");
  return p.x0 + sqrt_c0 * w;
}

Vector direct_eki(const InverseProblem& p, const LowRankFactor& factor,
                  double alpha) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("direct_eki: alpha must be > 0");
  p.validate();
  if (factor.n() != p.domain_dim())
    throw std::invalid_argument("direct_eki: factor dimension mismatch");

  const Index j = factor.rank();
  Matrix b(p.range_dim(), j);
  for (Index c = 0; c < j; ++c)
    b.col(c) =
        p.noise_weight.apply_inv_sqrt(p.forward.apply(factor.columns.col(c)));

  Matrix gram = b.transpose() * b;
  gram.diagonal().array() += alpha;
  gram = 0.5 * (gram + gram.transpose());
  const Vector rhs = b.transpose() * p.noise_weight.apply_inv_sqrt(
                                         p.y_hat - p.forward.apply(p.x0));
  const Vector w = spd_solve(gram, rhs, "direct_eki");
  return p.x0 + factor.columns * w;
}

EkiState eki_step_sqrt(const InverseProblem& p, const EkiState& state) {
  p.validate();
  if (state.factor.n() != p.domain_dim() ||
      state.x_hat.size() != p.domain_dim())
    throw std::invalid_argument("eki_step_sqrt: state dimension mismatch");

  const Index j = state.factor.rank();
  Matrix b(p.range_dim(), j);
  for (Index c = 0; c < j; ++c)
    b.col(c) = p.noise_weight.apply_inv_sqrt(
        p.forward.apply(state.factor.columns.col(c)));

  Matrix gram = b.transpose() * b;
  gram.diagonal().array() += 1.0;
  gram = 0.5 * (gram + gram.transpose());

  const Vector rhs = b.transpose() * p.noise_weight.apply_inv_sqrt(
                                         p.y_hat - p.forward.apply(state.x_hat));
  const Vector w = spd_solve(gram, rhs, "eki_step_sqrt");

  EkiState next;
  next.k = state.k + 1;
  next.x_hat = state.x_hat + state.factor.columns * w;
  next.factor.columns = state.factor.columns * inv_sqrt_psd(gram);
  next.factor.capped = state.factor.capped;
  return next;
}

CovState eki_step_cov(const InverseProblem& p, const CovState& state) {
  p.validate();
  if (state.cov.rows() != p.domain_dim() ||
      state.cov.cols() != p.domain_dim() ||
      state.x.size() != p.domain_dim())
    throw std::invalid_argument("eki_step_cov: state dimension mismatch");

  const Matrix l = to_dense(p.forward);
  const Matrix r = to_dense(p.noise_weight);
  const Matrix clt = state.cov * l.transpose();
  Matrix sys = l * clt + r;
  sys = 0.5 * (sys + sys.transpose());

  Eigen::LDLT<Matrix> ldlt(sys);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("eki_step_cov: inner solve failed");

  CovState next;
  const Vector innovation = p.y_hat - l * state.x;
  next.x = state.x + clt * ldlt.solve(innovation);
  next.cov = state.cov - clt * ldlt.solve(clt.transpose());
  next.cov = 0.5 * (next.cov + next.cov.transpose());
  return next;
}

StochasticEnsemble stochastic_eki_steps(const InverseProblem& p,
                                        Matrix members, int steps,
                                        GaussianSampler& rng) {
  p.validate();
  if (members.cols() < 2)
    throw std::invalid_argument("stochastic EKI: need at least two members");
  if (members.rows() != p.domain_dim())
    throw std::invalid_argument("stochastic EKI: member dimension mismatch");
  if (!p.noise_weight.has_sqrt())
    throw std::invalid_argument("stochastic EKI: R lacks apply_sqrt");

  const Index j = members.cols();
  const Matrix l = to_dense(p.forward);
  const Matrix r = to_dense(p.noise_weight);

  for (int step = 0; step < steps; ++step) {
    // Sample covariance (1/J normalization, conventional mean).
    const Vector mean = members.rowwise().mean();
    const Matrix centered = members.colwise() - mean;
    const Matrix cov =
        (centered * centered.transpose()) / static_cast<double>(j);

    const Matrix clt = cov * l.transpose();
    Matrix sys = l * clt + r;
    sys = 0.5 * (sys + sys.transpose());
    Eigen::LDLT<Matrix> ldlt(sys);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("stochastic EKI: inner solve failed");

    Matrix innovations(p.range_dim(), j);
    for (Index c = 0; c < j; ++c) {
      const Vector xi =
          p.noise_weight.apply_sqrt(rng.normal_vector(p.range_dim()));
      innovations.col(c) = p.y_hat + xi - l * members.col(c);
    }
    members += clt * ldlt.solve(innovations);
  }
  return StochasticEnsemble{std::move(members)};
}

StochasticEnsemble stochastic_eki_run(const InverseProblem& p,
                                      Index ensemble_size, int steps,
                                      GaussianSampler& rng) {
  if (ensemble_size < 2)
    throw std::invalid_argument("stochastic EKI: need at least two members");
  if (!p.prior_cov.has_sqrt())
    throw std::invalid_argument("stochastic EKI: C0 lacks apply_sqrt");
  Matrix members(p.domain_dim(), ensemble_size);
  for (Index c = 0; c < ensemble_size; ++c)
    members.col(c) =
        p.x0 + p.prior_cov.apply_sqrt(rng.normal_vector(p.domain_dim()));
  return stochastic_eki_steps(p, std::move(members), steps, rng);
}

TikhonovReference::TikhonovReference(const InverseProblem& p) {
  p.validate();
  x0_ = p.x0;
  innovation_ = p.y_hat - p.forward.apply(p.x0);
  const Matrix l = to_dense(p.forward);
  if (p.prior_cov.dense) {
    c0lt_ = (*p.prior_cov.dense) * l.transpose();
  } else {
    c0lt_.resize(p.domain_dim(), p.range_dim());
    for (Index c = 0; c < p.range_dim(); ++c)
      c0lt_.col(c) = p.prior_cov.apply(l.row(c).transpose());
  }
  lc0lt_ = l * c0lt_;
  lc0lt_ = 0.5 * (lc0lt_ + lc0lt_.transpose());
  r_dense_ = to_dense(p.noise_weight);
}

Vector TikhonovReference::operator()(double alpha) const {
  if (!(alpha > 0.0))
    throw std::invalid_argument("TikhonovReference: alpha must be > 0");
  Matrix sys = lc0lt_ + alpha * r_dense_;
  const Vector s = spd_solve(sys, innovation_, "TikhonovReference");
  return x0_ + c0lt_ * s;
}

double estimate_rl_bound(const InverseProblem& p, int max_iter,
                         double rel_tol) {
  if (!p.forward.has_adjoint())
    throw std::invalid_argument("estimate_rl_bound: adjoint unavailable");
  GaussianSampler rng(0x524c64ULL);
  Vector v = rng.normal_vector(p.domain_dim());
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // v <- (R^{-1/2}L)^T (R^{-1/2}L) v; R^{-1/2} is self-adjoint.
    const Vector w = p.noise_weight.apply_inv_sqrt(p.forward.apply(v));
    Vector next = p.forward.apply_adjoint(p.noise_weight.apply_inv_sqrt(w));
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double estimate = std::sqrt(norm);
    if (it > 0 && std::abs(estimate - sigma) <= rel_tol * estimate) {
      return estimate;
    }
    sigma = estimate;
    v = next;
  }
  return sigma;
}

}  // namespace eki
