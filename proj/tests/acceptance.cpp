// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "eki/adaptive.hpp"
#include "eki/experiment.hpp"
#include "eki/factorizations.hpp"
#include "eki/io.hpp"
#include "eki/lowrank.hpp"
#include "eki/solvers.hpp"
#include "eki/tomo.hpp"

using namespace eki;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& label, bool ok,
            const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id,
              label.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

InverseProblem dense_instance(std::uint64_t seed, Index* j_out) {
  GaussianSampler dims(seed);
  const Index n = 3 + static_cast<Index>(std::floor(
                          std::abs(dims.normal()) * 6.0)) % 18;
  const Index m = 3 + static_cast<Index>(std::floor(
                          std::abs(dims.normal()) * 6.0)) % 18;
  if (j_out) *j_out = 1 + static_cast<Index>(seed % 6);
  return build_dense_random(static_cast<int>(n), static_cast<int>(m), seed)
      .problem;
}

Matrix normalized_spd(Index n, std::uint64_t seed) {
  GaussianSampler rng(seed);
  const Matrix g = rng.normal_matrix(n, n);
  Matrix m = g * g.transpose() / static_cast<double>(n);
  return m / sym_eig(m).eigenvalues[0];
}

void criterion_1_and_2() {
  const auto t0 = clock_type::now();
  double worst_equiv = 0.0;
  double worst_tik = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Index j = 0;
    const InverseProblem p = dense_instance(seed, &j);
    GaussianSampler rng(seed * 31 + 7);
    LowRankFactor a;
    a.columns = rng.normal_matrix(p.domain_dim(), j);

    EkiState st;
    st.x_hat = p.x0;
    st.factor = a;
    for (int k = 1; k <= 8; ++k) {
      st = eki_step_sqrt(p, st);
      const Vector direct = direct_eki(p, a, 1.0 / k);
      worst_equiv = std::max(
          worst_equiv, (st.x_hat - direct).norm() / (direct.norm() + 1e-300));
    }

    LowRankFactor sqrt_prior;
    sqrt_prior.columns = *p.prior_cov.sqrt_dense;
    for (double alpha : {1.0, 0.2}) {
      const Vector eki = direct_eki(p, sqrt_prior, alpha);
      const Vector tik = tikhonov_solve(p, alpha);
      worst_tik =
          std::max(worst_tik, (eki - tik).norm() / (tik.norm() + 1e-300));
    }
  }
  const double elapsed = seconds_since(t0);
  report(1, "k-step square-root iteration equals direct update at alpha=1/k",
         worst_equiv <= 1e-8 && elapsed < 5.0,
         "worst rel err " + format_double(worst_equiv) + ", " +
             std::to_string(elapsed) + " s");
  report(2, "full-rank factor reproduces the Tikhonov solution",
         worst_tik <= 1e-8 && elapsed < 5.0,
         "worst rel err " + format_double(worst_tik));
}

void criterion_3() {
  double worst = 0.0;
  for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
    const InverseProblem p = dense_instance(seed, nullptr);
    GaussianSampler rng(seed + 100);
    EkiState st;
    st.x_hat = p.x0;
    st.factor.columns = rng.normal_matrix(p.domain_dim(), 3);
    CovState cov{p.x0,
                 st.factor.columns * st.factor.columns.transpose()};
    for (int k = 0; k < 5; ++k) {
      st = eki_step_sqrt(p, st);
      cov = eki_step_cov(p, cov);
      const Matrix outer =
          st.factor.columns * st.factor.columns.transpose();
      worst = std::max(worst, (st.x_hat - cov.x).norm() /
                                  (cov.x.norm() + 1e-300));
      worst = std::max(worst,
                       (outer - cov.cov).norm() / (cov.cov.norm() + 1e-300));
    }
  }
  report(3, "square-root and covariance forms agree over 5 steps",
         worst <= 1e-8, "worst rel defect " + format_double(worst));
}

void criterion_4() {
  std::vector<Matrix> instances;
  instances.push_back(normalized_spd(8, 41));
  instances.push_back(normalized_spd(16, 43));
  instances.push_back(normalized_spd(32, 47));
  instances.push_back(ou_matrix(4, 0.5));
  {
    Vector lam(24);
    for (int i = 0; i < 24; ++i)
      lam[i] = std::pow(static_cast<double>(i + 1), -2.0);
    instances.push_back(Matrix(lam.asDiagonal()));
  }

  double worst_gap = 0.0;     // svd error vs lambda_{J+1}
  double worst_excess = 0.0;  // svd error minus best competing error
  for (std::size_t inst = 0; inst < instances.size(); ++inst) {
    const Matrix& c0 = instances[inst];
    const SpdOperator op = spd_dense(c0);
    const Vector lambda = sym_eig(c0).eigenvalues;
    const Index n = c0.rows();
    for (Index j = 1; j <= n; ++j) {
      const double svd_err = approx_error(svd_factor(c0, j), c0);
      const double next = j < n ? std::max(lambda[j], 0.0) : 0.0;
      worst_gap = std::max(worst_gap, std::abs(svd_err - next));

      GaussianSampler rng(1000 * inst + j);
      const double nys_err = approx_error(nystroem_factor(op, j, rng), c0);
      worst_excess = std::max(worst_excess, svd_err - nys_err);
      if (j >= 2) {
        GaussianSampler rng2(2000 * inst + j);
        const double ano_err = approx_error(anomaly_factor(op, j, rng2), c0);
        worst_excess = std::max(worst_excess, svd_err - ano_err);
      }
    }
  }
  report(4, "SVD truncation error equals lambda_{J+1} and is optimal",
         worst_gap <= 1e-10 && worst_excess <= 1e-10,
         "max |err - lambda| " + format_double(worst_gap) +
             ", max excess over competitors " + format_double(worst_excess));
}

void criterion_5() {
  const auto t0 = clock_type::now();
  const int n = 512;
  Vector lam(n);
  for (int i = 0; i < n; ++i)
    lam[i] = std::pow(static_cast<double>(i + 1), -2.0);
  const SpdOperator c0 = spd_diagonal(lam);
  const Matrix c0_dense = Matrix(lam.asDiagonal());

  const std::vector<double> ranks{8, 16, 32, 64};
  double slope_anomaly = 0.0, slope_nystroem = 0.0;
  for (int which = 0; which < 2; ++which) {
    std::vector<double> mean_errors;
    for (double jd : ranks) {
      const Index j = static_cast<Index>(jd);
      double sum = 0.0;
      for (int s = 0; s < 20; ++s) {
        GaussianSampler rng(7000 + 977 * s + j);
        const LowRankFactor f = which == 0
                                    ? anomaly_factor(c0, j, rng)
                                    : nystroem_factor(c0, j, rng);
        sum += approx_error(f, c0_dense);
      }
      mean_errors.push_back(sum / 20.0);
    }
    (which == 0 ? slope_anomaly : slope_nystroem) =
        loglog_slope(ranks, mean_errors);
  }
  const double elapsed = seconds_since(t0);
  const bool ok = slope_anomaly >= -0.75 && slope_anomaly <= -0.30 &&
                  slope_nystroem >= -2.6 && slope_nystroem <= -1.4 &&
                  elapsed < 60.0;
  report(5, "empirical low-rank orders on the n^{-2} spectrum", ok,
         "anomaly slope " + std::to_string(slope_anomaly) +
             " in [-0.75,-0.30], nystroem slope " +
             std::to_string(slope_nystroem) + " in [-2.6,-1.4], " +
             std::to_string(elapsed) + " s");
}

void criterion_6() {
  double worst = -1e300;
  for (std::uint64_t seed : {51ULL, 53ULL, 59ULL}) {
    const Matrix c0 = seed == 59 ? ou_matrix(4, 0.5) : normalized_spd(12, seed);
    const SpdOperator op = spd_dense(c0);
    for (Index j : {1, 2, 4, 8}) {
      GaussianSampler rng(seed * 7 + j);
      const NystroemSketch sk = nystroem_sketch(op, j, rng);
      const Matrix qqc = sk.range_basis * (sk.range_basis.transpose() * c0);
      const double proj_err =
          spectral_norm_sym(0.5 * ((qqc - c0) + (qqc - c0).transpose()));
      worst = std::max(worst, approx_error(sk.factor, c0) - proj_err);
    }
  }
  report(6, "Nystroem error is dominated by the range-projection residual",
         worst <= 1e-8, "max(err - projection residual) = " +
                            format_double(worst));
}

void criterion_7() {
  int discrepancy_runs = 0;
  bool sound = true;

  const auto check_run = [&](const InverseProblem& problem,
                             const AdaptiveConfig& config) {
    const AdaptiveResult res = adaptive_run(problem, config);
    if (res.stopped_by != StopReason::discrepancy) return;
    ++discrepancy_runs;
    const double bound = config.tau * problem.delta;
    if (!(res.records.back().residual <= bound)) sound = false;
    for (std::size_t i = 0; i + 1 < res.records.size(); ++i)
      if (!(res.records[i].residual > bound)) sound = false;
  };

  {
    const BuiltProblem bp = build_synthetic_diagonal(30, 2.0, 0.1, 2026);
    AdaptiveConfig c;
    c.backend = Backend::svd;
    c.j0 = 2;
    c.gamma = 2.0;
    c.b = 0.6;
    c.tau = 1.2;
    c.max_iter = 60;
    check_run(bp.problem, c);
  }
  {
    const BuiltProblem bp = build_synthetic_diagonal(40, 2.0, 0.1, 2027);
    AdaptiveConfig c;
    c.backend = Backend::nystroem;
    c.j0 = 3;
    c.gamma = 2.0;
    c.b = 0.7;
    c.tau = 1.5;
    c.seed = 2;
    c.max_iter = 60;
    check_run(bp.problem, c);
  }
  {
    const BuiltProblem bp = build_synthetic_diagonal(30, 2.0, 0.25, 2028);
    AdaptiveConfig c;
    c.backend = Backend::anomaly;
    c.j0 = 6;
    c.gamma = 0.5;
    c.b = std::sqrt(0.8);
    c.tau = 3.0;
    c.seed = 3;
    c.max_iter = 40;
    check_run(bp.problem, c);
  }

  report(7, "discrepancy stops satisfy both logged inequalities",
         sound && discrepancy_runs >= 3,
         std::to_string(discrepancy_runs) + " discrepancy-stopped runs, all " +
             (sound ? "sound" : "UNSOUND"));
}

void criterion_8() {
  const auto t0 = clock_type::now();
  bool ok = true;
  std::string detail;
  for (double mu : {0.25, 0.5}) {
    const RateResult rr =
        rate_experiment(mu, {1e-1, 1e-2, 1e-3, 1e-4}, Backend::svd, {1},
                        "acceptance_out/rate");
    const bool in_window =
        std::abs(rr.fitted_slope - rr.theoretical_slope) <= 0.15 &&
        rr.excluded_runs == 0;
    ok = ok && in_window;
    detail += "mu=" + std::to_string(mu) + ": fitted " +
              std::to_string(rr.fitted_slope) + " vs " +
              std::to_string(rr.theoretical_slope) + "; ";
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 120.0;
  report(8, "discrepancy-stopped error follows the source-condition rate", ok,
         detail + std::to_string(elapsed) + " s");
}

void criterion_9() {
  const auto t0 = clock_type::now();
  const BuiltProblem bp = build_radon_problem(32, 0.3, 10.0, 2026);
  ExperimentSpec spec;  // schedule defaults: alpha0=1, J1=50, b=0.8, tau=1.2

  const FactorGenerator svd_gen =
      make_factor_generator(Backend::svd, bp.problem.prior_cov);
  const AdaptiveResult svd_run =
      adaptive_run(bp.problem, backend_config(spec, Backend::svd, 0), svd_gen);

  const FactorGenerator nys_gen =
      make_factor_generator(Backend::nystroem, bp.problem.prior_cov);
  const FactorGenerator ano_gen =
      make_factor_generator(Backend::anomaly, bp.problem.prior_cov);

  int good = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const AdaptiveResult nys = adaptive_run(
        bp.problem, backend_config(spec, Backend::nystroem, seed), nys_gen);
    const AdaptiveResult ano = adaptive_run(
        bp.problem, backend_config(spec, Backend::anomaly, seed), ano_gen);
    const bool nys_ok = nys.stopped_by == StopReason::discrepancy;
    const bool svd_ok = svd_run.stopped_by == StopReason::discrepancy;
    const bool ano_late =
        ano.stopped_by == StopReason::sample_cap ||
        (ano.stopped_by == StopReason::discrepancy &&
         ano.records.back().j > nys.records.back().j);
    if (nys_ok && svd_ok && ano_late) ++good;
  }
  report(9, "desk-scale tomography: sketched backends stop first", good >= 8,
         std::to_string(good) + "/10 seeds, " +
             std::to_string(seconds_since(t0)) + " s");
}

void criterion_10() {
  // Monotone error in J at fixed alpha.
  ExperimentSpec fig5;
  fig5.problem = ProblemKind::synthetic_diagonal;
  fig5.sweep = SweepKind::fixed_alpha_vary_j;
  fig5.n_synth = 200;
  fig5.fixed_alpha = 0.03;
  fig5.j_grid = {8, 32, 128};
  fig5.seeds = {1, 2, 3};
  fig5.out_dir = "acceptance_out/fig5";
  run_experiment(fig5);

  bool mono_ok = true;
  std::string mono_note;
  for (Backend backend : fig5.backends) {
    for (std::uint64_t seed : fig5.seeds) {
      const std::string path = fig5.out_dir + "/sweepJ_" +
                               to_string(backend) + "_seed" +
                               std::to_string(seed) + ".csv";
      const Matrix rows = read_matrix_csv(path, true);
      int violations = 0;
      for (Index r = 0; r + 1 < rows.rows(); ++r)
        if (rows(r + 1, 2) > rows(r, 2)) ++violations;
      const int allowed = backend == Backend::svd ? 0 : 1;
      if (violations > allowed) {
        mono_ok = false;
        mono_note += std::string(to_string(backend)) + " seed " +
                     std::to_string(seed) + " has " +
                     std::to_string(violations) + " violations; ";
      }
    }
  }

  // Error explosion in alpha at fixed J = ceil(n/5).
  ExperimentSpec fig6;
  fig6.problem = ProblemKind::synthetic_diagonal;
  fig6.sweep = SweepKind::fixed_j_vary_alpha;
  fig6.n_synth = 200;
  fig6.alpha_grid = {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
  fig6.backends = {Backend::anomaly};
  fig6.seeds = {1, 2, 3};
  fig6.out_dir = "acceptance_out/fig6";
  run_experiment(fig6);

  double min_ratio = 1e300;
  for (std::uint64_t seed : fig6.seeds) {
    const std::string path = fig6.out_dir + "/sweepAlpha_anomaly_seed" +
                             std::to_string(seed) + ".csv";
    const Matrix rows = read_matrix_csv(path, true);
    min_ratio = std::min(min_ratio, rows(rows.rows() - 1, 2) / rows(0, 2));
  }

  report(10, "fixed-alpha error is monotone in J; small-alpha error explodes",
         mono_ok && min_ratio >= 10.0,
         (mono_note.empty() ? std::string("monotone; ") : mono_note) +
             "min explosion ratio " + std::to_string(min_ratio));
}

void criterion_11() {
  double worst_delta = 0.0;
  double worst_snr = 0.0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    GaussianSampler data(seed);
    const Vector y = data.normal_vector(500) * 2.5;
    GaussianSampler noise(seed + 50);
    const NoisyData nd = make_noisy_data(y, 10.0, noise);
    worst_delta = std::max(worst_delta, std::abs(nd.delta - 1.0));
    const Vector y_scaled = y / nd.scale;
    worst_snr = std::max(
        worst_snr,
        std::abs(y_scaled.norm() / (nd.y_hat - y_scaled).norm() - 10.0));
  }
  report(11, "noise protocol: delta = 1 and SNR preserved after rescaling",
         worst_delta <= 1e-12 && worst_snr <= 1e-10,
         "max |delta-1| " + format_double(worst_delta) + ", max SNR defect " +
             format_double(worst_snr));
}

void criterion_12() {
  const BuiltProblem bp = build_dense_random(3, 4, 139);
  EkiState st;
  st.x_hat = bp.problem.x0;
  st.factor.columns = *bp.problem.prior_cov.sqrt_dense;
  const EkiState det = eki_step_sqrt(bp.problem, st);

  double sum = 0.0;
  for (int s = 0; s < 10; ++s) {
    GaussianSampler rng(500 + s);
    const StochasticEnsemble ens =
        stochastic_eki_run(bp.problem, 4096, 1, rng);
    sum += (ens.mean() - det.x_hat).norm() / det.x_hat.norm();
  }
  const double mean_dev = sum / 10.0;
  report(12, "perturbed-observation ensemble mean matches the direct step",
         mean_dev <= 0.1,
         "mean relative deviation " + std::to_string(mean_dev) +
             " over 10 seeds at J=4096");
}

}  // namespace

int main() {
  const auto t0 = clock_type::now();
  criterion_1_and_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  criterion_12();
  std::printf("%d of 12 criteria passed in %.0f s\n", 12 - g_failures,
              seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
