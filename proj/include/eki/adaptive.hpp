#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eki/solvers.hpp"

namespace eki {

enum class Backend { anomaly, nystroem, svd };

const char* to_string(Backend b);
std::optional<Backend> backend_from_string(const std::string& name);
bool backend_is_stochastic(Backend b);

/// Parameters of the adaptive iteration: alpha_k = b^k alpha0 and
/// J_k = ceil(b^{-(k-index_offset)/gamma} J0). index_offset 0 follows the
/// plain schedule; 1 anchors the sample size at k=1 (J_1 = J0), matching the
/// reported experiment protocol.
///
/// The product alpha0 * J0^gamma is invariant along the schedule and sets
/// the sampling-error budget relative to the noise level: if stochastic
/// runs stall above tau * delta, raise J0 (or alpha0) rather than max_iter.
struct AdaptiveConfig {
  double alpha0 = 1.0;
  int j0 = 50;
  double b = 0.8;          // in (0, 1)
  double gamma = 1.0;      // order of the low-rank backend
  double tau = 1.2;        // > 1
  double radius = std::numeric_limits<double>::infinity();
  Backend backend = Backend::nystroem;
  int max_iter = 100;
  std::uint64_t seed = 0;
  int index_offset = 0;

  void validate() const;
};

struct IterationRecord {
  int k = 0;
  double alpha = 0.0;
  int j = 0;
  double residual = 0.0;
  std::optional<double> e_rel;
  std::optional<double> e_app;
  bool projected = false;
  double wall_time = 0.0;  // seconds
};

enum class StopReason { discrepancy, sample_cap, max_iter };
const char* to_string(StopReason r);

/// (alpha_k, J_k) for iteration k; k = 0 returns (alpha0, J0) by convention.
std::pair<double, int> schedule(const AdaptiveConfig& config, int k);

/// Orthogonal projection onto the closed ball of radius r around x0.
/// Returns the projected point and whether the projection moved x.
std::pair<Vector, bool> project_ball(const Vector& x, const Vector& x0,
                                     double r);

/// Discrepancy principle: stop once residual <= tau * delta (boundary
/// included).
bool discrepancy_stop(double residual, double tau, double delta);

/// Generates the rank-J factor for one adaptive iteration; `seed` carries
/// the fresh per-iteration randomness (ignored by deterministic backends).
using FactorGenerator =
    std::function<LowRankFactor(Index j, std::uint64_t seed)>;

/// Default generator for a backend over the problem's prior covariance.
FactorGenerator make_factor_generator(Backend backend, const SpdOperator& c0);

/// Optional per-iteration diagnostics: e_rel against x_star and e_app
/// against a Tikhonov reference at the running alpha_k.
struct RunReferences {
  std::optional<Vector> x_star;
  std::function<Vector(double alpha)> tikhonov_ref;
};

struct AdaptiveResult {
  Vector solution;
  std::vector<IterationRecord> records;
  StopReason stopped_by = StopReason::max_iter;
};

std::uint64_t iteration_seed(std::uint64_t seed, int k);

/// The adaptive driver: for k = 1, 2, ... compute (alpha_k, J_k), draw a
/// fresh factor, take the direct low-rank step from x0, project stochastic
/// estimates onto the ball, log, and stop on the discrepancy principle, on
/// J_k exceeding the parameter dimension, or at max_iter.
AdaptiveResult adaptive_run(const InverseProblem& problem,
                            const AdaptiveConfig& config);
AdaptiveResult adaptive_run(const InverseProblem& problem,
                            const AdaptiveConfig& config,
                            const FactorGenerator& generator,
                            const RunReferences* refs = nullptr);

// CSV header shared by every iteration log.
inline constexpr const char* kRecordCsvHeader =
    "k,alpha,J,residual,e_rel,e_app,projected,wall_time";

std::string record_csv_row(const IterationRecord& rec);
void write_records_csv(const std::string& path,
                       const std::vector<IterationRecord>& records);

}  // namespace eki
