#pragma once

#include <optional>

#include "eki/lowrank.hpp"
#include "eki/operators.hpp"
#include "eki/sampler.hpp"
#include "eki/types.hpp"

namespace eki {

/// A linear inverse problem y_hat ~= L x with noise weighting R, prior
/// covariance C0, initial guess x0 and deterministic noise level delta:
/// |R^{-1/2}(y_hat - y)| <= delta for the (unknown) exact data y.
struct InverseProblem {
  LinearMap forward;        // L
  SpdOperator noise_weight; // R, must expose apply_inv_sqrt
  SpdOperator prior_cov;    // C0
  Vector x0;
  Vector y_hat;
  double delta = 0.0;
  std::optional<double> rl_bound;  // |R^{-1/2} L|, estimated when absent

  Index domain_dim() const { return forward.domain_dim; }
  Index range_dim() const { return forward.range_dim; }
  void validate() const;  // dimension consistency, delta >= 0
};

/// |R^{-1/2}(y_hat - L x)|.
double weighted_residual_norm(const InverseProblem& p, const Vector& x);

/// Tikhonov-regularized solution: minimizer of
/// |y_hat - L x|_R^2 + alpha |x - x0|_{C0}^2. Solved densely in whichever
/// of the domain/range spaces is smaller (they are algebraically identical);
/// the inner solve is verified to 1e-10 relative residual.
Vector tikhonov_solve(const InverseProblem& p, double alpha);

/// Single-shot low-rank update at regularization parameter alpha:
/// x0 + A (B^T B + alpha I_J)^{-1} B^T R^{-1/2} (y_hat - L x0),
/// with B = R^{-1/2} L A. One forward apply per factor column plus one for
/// the residual.
Vector direct_eki(const InverseProblem& p, const LowRankFactor& factor,
                  double alpha);

/// State of the square-root iteration.
struct EkiState {
  int k = 0;
  Vector x_hat;
  LowRankFactor factor;
};

/// One square-root step: x <- x + A (B^T B + I)^{-1} B^T R^{-1/2}(y_hat - Lx)
/// and A <- A (B^T B + I)^{-1/2}. k steps from (x0, A) equal
/// direct_eki(A, 1/k).
EkiState eki_step_sqrt(const InverseProblem& p, const EkiState& state);

/// Covariance-form state; dense covariance at desk scale.
struct CovState {
  Vector x;
  Matrix cov;
};

/// One covariance-form step:
/// x <- x + C L^T (L C L^T + R)^{-1} (y_hat - L x),
/// C <- C - C L^T (L C L^T + R)^{-1} L C.
/// Agrees with the square-root step in (x, A A^T).
CovState eki_step_cov(const InverseProblem& p, const CovState& state);

struct StochasticEnsemble {
  Matrix members;  // n x J
  Vector mean() const { return members.rowwise().mean(); }
};

/// Perturbed-observation iteration on a given ensemble: each member is
/// updated with the Kalman gain built from the ensemble sample covariance
/// and an independent data perturbation xi ~ N(0, R) per member and step.
StochasticEnsemble stochastic_eki_steps(const InverseProblem& p,
                                        Matrix members, int steps,
                                        GaussianSampler& rng);

/// Draw J members from N(x0, C0), then iterate. Throws for J < 2.
StochasticEnsemble stochastic_eki_run(const InverseProblem& p,
                                      Index ensemble_size, int steps,
                                      GaussianSampler& rng);

/// Power-iteration estimate of |R^{-1/2} L| (used for diagnostics only).
double estimate_rl_bound(const InverseProblem& p, int max_iter = 50,
                         double rel_tol = 1e-6);

/// Tikhonov solutions for many alphas on one problem: the dense pieces
/// (L C0 L^T, R, innovation) are materialized once, each call is one
/// range-space solve.
class TikhonovReference {
 public:
  explicit TikhonovReference(const InverseProblem& p);
  Vector operator()(double alpha) const;

 private:
  Vector x0_;
  Vector innovation_;
  Matrix c0lt_;    // C0 L^T
  Matrix lc0lt_;   // L C0 L^T
  Matrix r_dense_;
};

}  // namespace eki
