#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "eki/adaptive.hpp"
#include "eki/solvers.hpp"
#include "eki/tomo.hpp"

namespace eki {

/// Invalid user input (bad flags, bad config, empty grids). Mapped to exit
/// code 1 by the CLI; everything else is a runtime failure (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProblemKind { radon, synthetic_diagonal, dense_random };
enum class SweepKind {
  adaptive,            // iteration logs per backend/seed
  fixed_alpha_vary_j,  // J vs e_app at fixed alpha
  fixed_j_vary_alpha,  // alpha vs e_app at fixed J
  rate_vs_delta        // reconstruction error vs noise level
};

const char* to_string(ProblemKind p);
const char* to_string(SweepKind s);

struct ExperimentSpec {
  ProblemKind problem = ProblemKind::radon;
  SweepKind sweep = SweepKind::adaptive;
  std::vector<Backend> backends{Backend::anomaly, Backend::nystroem,
                                Backend::svd};
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out";

  // Data generation draws from its own stream so that backend seeds vary
  // only the sampling, never the data.
  std::uint64_t noise_seed = 2026;

  // Problem parameters.
  int d = 32;                      // radon image side
  int n_angles = 0;                // 0: derive the standard geometry from d
  int n_detectors = 0;
  double h = 0.3;                  // OU correlation parameter
  double snr = 10.0;               // radon noise protocol
  int n_synth = 200;               // synthetic-diagonal dimension
  double spectrum_exponent = 2.0;  // lambda_i = i^{-exponent}
  double noise_rel = 0.1;          // synthetic delta = noise_rel * |y|
  int n_dense = 16;                // dense-random dims
  int m_dense = 24;

  // Adaptive schedule (nystroem/svd); the anomaly backend derives
  // b' = b^{1/(2 gamma)}, gamma' = 1/2 so all sample-size sequences match.
  double alpha0 = 1.0;
  int j0 = 50;
  double b = 0.8;
  double gamma = 1.0;
  double tau = 1.2;
  int index_offset = 1;
  int max_iter = 100;
  double radius = std::numeric_limits<double>::infinity();
  bool with_tikhonov_ref = false;  // e_app column for adaptive radon runs

  // Sweep grids.
  std::vector<int> j_grid;
  std::vector<double> alpha_grid;
  double fixed_alpha = 0.03;
  int fixed_j = 0;  // 0 means ceil(n/5)
  std::vector<double> delta_grid{1e-1, 1e-2, 1e-3, 1e-4};
  double mu = 0.5;  // source-condition smoothness for rate sweeps

  // Cache generated factors under <out>/factors via the binary container.
  bool cache_factors = false;

  void validate() const;
};

/// A fully assembled test problem plus the references the sweeps log
/// against.
struct BuiltProblem {
  InverseProblem problem;
  Vector x_star;
};

BuiltProblem build_radon_problem(int d, double h, double snr,
                                 std::uint64_t noise_seed,
                                 int n_angles = 0, int n_detectors = 0);
BuiltProblem build_synthetic_diagonal(int n, double spectrum_exponent,
                                      double noise_rel,
                                      std::uint64_t noise_seed);
BuiltProblem build_dense_random(int n, int m, std::uint64_t noise_seed);

/// Diagonal problem engineered to satisfy the source condition
/// x_dagger - x0 = C0^{1/2} (B^T B)^mu v with |v| = rho: C0 = diag(i^{-2}),
/// L = I, R = I, noise of exact norm delta in a fixed direction.
struct SourceConditionProblem {
  InverseProblem problem;
  Vector x_dagger;
  double rho = 0.0;
};

SourceConditionProblem build_source_condition_problem(int n, double mu,
                                                      double delta,
                                                      std::uint64_t noise_seed);

/// Schedule parameters a backend uses inside an experiment.
AdaptiveConfig backend_config(const ExperimentSpec& spec, Backend backend,
                              std::uint64_t seed);

struct RunArtifacts {
  std::vector<std::string> csv_files;
  std::string manifest_file;
  std::string plot_script;
};

/// Execute the sweep, write one CSV per (backend, seed), a manifest with
/// every consumed seed, and a plot script over the CSVs.
RunArtifacts run_experiment(const ExperimentSpec& spec);

/// Rebuild the spec recorded in a manifest (for bit-identical re-runs).
ExperimentSpec spec_from_manifest(const std::string& manifest_path);

struct RateResult {
  double fitted_slope = 0.0;
  double theoretical_slope = 0.0;  // 2 mu / (2 mu + 1)
  std::string csv_file;
  int excluded_runs = 0;  // runs that did not reach the discrepancy stop
};

/// Convergence-rate experiment: run the adaptive iteration per delta on the
/// source-condition problem and fit the log-log slope of |X_K - x_dagger|
/// against delta.
RateResult rate_experiment(double mu, const std::vector<double>& deltas,
                           Backend backend,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir);

/// Plain key=value config file (# comments); keys mirror the CLI flags.
std::map<std::string, std::string> parse_config_file(const std::string& path);
void apply_config(ExperimentSpec& spec,
                  const std::map<std::string, std::string>& kv);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace eki
