#include "eki/adaptive.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "eki/io.hpp"

namespace eki {

const char* to_string(Backend b) {
  switch (b) {
    case Backend::anomaly: return "anomaly";
    case Backend::nystroem: return "nystroem";
    case Backend::svd: return "svd";
  }
  return "?";
}

std::optional<Backend> backend_from_string(const std::string& name) {
  if (name == "anomaly" || name == "standard") return Backend::anomaly;
  if (name == "nystroem" || name == "nystrom") return Backend::nystroem;
  if (name == "svd") return Backend::svd;
  return std::nullopt;
}

bool backend_is_stochastic(Backend b) { return b != Backend::svd; }

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::discrepancy: return "discrepancy";
    case StopReason::sample_cap: return "sample_cap";
    case StopReason::max_iter: return "max_iter";
  }
  return "?";
}

void AdaptiveConfig::validate() const {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("config: alpha0 must be > 0");
  if (j0 < 1) throw std::invalid_argument("config: J0 must be >= 1");
  if (!(b > 0.0 && b < 1.0))
    throw std::invalid_argument("config: b must lie in (0,1)");
  if (!(gamma > 0.0)) throw std::invalid_argument("config: gamma must be > 0");
  if (!(tau > 1.0)) throw std::invalid_argument("config: tau must be > 1");
  if (!(radius > 0.0)) throw std::invalid_argument("config: radius must be > 0");
  if (max_iter < 1) throw std::invalid_argument("config: max_iter must be >= 1");
}

std::pair<double, int> schedule(const AdaptiveConfig& config, int k) {
  if (k < 0) throw std::invalid_argument("schedule: k must be >= 0");
  const double alpha = std::pow(config.b, k) * config.alpha0;
  const double exponent =
      -static_cast<double>(k - config.index_offset) / config.gamma;
  const double j_real = std::pow(config.b, exponent) * config.j0;
  constexpr double kMaxJ = 2147483647.0;
  const int j = j_real >= kMaxJ ? std::numeric_limits<int>::max()
                                : static_cast<int>(std::ceil(j_real));
  return {alpha, j};
}

std::pair<Vector, bool> project_ball(const Vector& x, const Vector& x0,
                                     double r) {
  if (!(r > 0.0)) throw std::invalid_argument("project_ball: r must be > 0");
  const double dist = (x - x0).norm();
  if (dist <= r) return {x, false};
  return {x0 + (r / dist) * (x - x0), true};
}

bool discrepancy_stop(double residual, double tau, double delta) {
  return residual <= tau * delta;
}

std::uint64_t iteration_seed(std::uint64_t seed, int k) {
  return mix_seed(seed, static_cast<std::uint64_t>(k));
}

FactorGenerator make_factor_generator(Backend backend,
                                      const SpdOperator& c0) {
  switch (backend) {
    case Backend::anomaly:
      return [c0](Index j, std::uint64_t seed) {
        GaussianSampler rng(seed);
        return anomaly_factor(c0, j, rng);
      };
    case Backend::nystroem:
      return [c0](Index j, std::uint64_t seed) {
        GaussianSampler rng(seed);
        return nystroem_factor(c0, j, rng);
      };
    case Backend::svd:
      return [c0](Index j, std::uint64_t) { return svd_factor(c0, j); };
  }
  throw std::logic_error("unknown backend");
}

AdaptiveResult adaptive_run(const InverseProblem& problem,
                            const AdaptiveConfig& config) {
  return adaptive_run(problem, config,
                      make_factor_generator(config.backend, problem.prior_cov));
}

AdaptiveResult adaptive_run(const InverseProblem& problem,
                            const AdaptiveConfig& config,
                            const FactorGenerator& generator,
                            const RunReferences* refs) {
  problem.validate();
  config.validate();

  const bool stochastic = backend_is_stochastic(config.backend);
  const Index n = problem.domain_dim();

  AdaptiveResult result;
  result.solution = problem.x0;
  result.stopped_by = StopReason::max_iter;

  for (int k = 1; k <= config.max_iter; ++k) {
    const auto [alpha_k, j_k] = schedule(config, k);
    if (static_cast<Index>(j_k) > n) {
      result.stopped_by = StopReason::sample_cap;
      break;
    }

    const auto start = std::chrono::steady_clock::now();
    LowRankFactor factor;
    Vector estimate;
    try {
      factor = generator(j_k, iteration_seed(config.seed, k));
      estimate = direct_eki(problem, factor, alpha_k);
    } catch (const std::exception& e) {
      throw std::runtime_error("adaptive iteration " + std::to_string(k) +
                               ": " + e.what());
    }

    bool projected = false;
    if (stochastic && std::isfinite(config.radius)) {
      auto [proj, moved] = project_ball(estimate, problem.x0, config.radius);
      estimate = std::move(proj);
      projected = moved;
    }

    const double residual = weighted_residual_norm(problem, estimate);
    const auto stop = std::chrono::steady_clock::now();

    IterationRecord rec;
    rec.k = k;
    rec.alpha = alpha_k;
    rec.j = j_k;
    rec.residual = residual;
    rec.projected = projected;
    rec.wall_time = std::chrono::duration<double>(stop - start).count();
    if (refs && refs->x_star) {
      const double star_norm = refs->x_star->norm();
      if (star_norm > 0.0) {
        rec.e_rel = (estimate - *refs->x_star).norm() / star_norm;
        if (refs->tikhonov_ref)
          rec.e_app =
              (estimate - refs->tikhonov_ref(alpha_k)).norm() / star_norm;
      }
    }
    result.records.push_back(std::move(rec));
    result.solution = std::move(estimate);

    if (discrepancy_stop(residual, config.tau, problem.delta)) {
      result.stopped_by = StopReason::discrepancy;
      break;
    }
  }
  return result;
}

std::string record_csv_row(const IterationRecord& rec) {
  std::ostringstream out;
  out << rec.k << ',' << format_double(rec.alpha) << ',' << rec.j << ','
      << format_double(rec.residual) << ','
      << (rec.e_rel ? format_double(*rec.e_rel) : std::string()) << ','
      << (rec.e_app ? format_double(*rec.e_app) : std::string()) << ','
      << (rec.projected ? 1 : 0) << ',' << format_double(rec.wall_time);
  return out.str();
}

void write_records_csv(const std::string& path,
                       const std::vector<IterationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << kRecordCsvHeader << '\n';
  for (const auto& rec : records) out << record_csv_row(rec) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace eki
