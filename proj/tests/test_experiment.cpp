#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eki/experiment.hpp"
#include "eki/io.hpp"

using namespace eki;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Iteration logs carry a wall_time column; equality of the mathematical
// content means equality with that final column removed.
std::string strip_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    out << (comma == std::string::npos ? line : line.substr(0, comma))
        << '\n';
  }
  return out.str();
}

ExperimentSpec small_sweep_spec(SweepKind sweep, const fs::path& out) {
  ExperimentSpec spec;
  spec.problem = ProblemKind::synthetic_diagonal;
  spec.sweep = sweep;
  spec.n_synth = 60;
  spec.seeds = {1};
  spec.j_grid = {4, 8, 16, 32};
  spec.alpha_grid = {1.0, 0.1, 0.01, 0.001, 0.0001};
  spec.fixed_alpha = 0.03;
  spec.out_dir = out.string();
  return spec;
}

}  // namespace

TEST_CASE("loglog_slope recovers a power law") {
  CHECK(loglog_slope({1.0, 2.0, 4.0, 8.0}, {1.0, 4.0, 16.0, 64.0}) ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("spec validation: empty grids and duplicate seeds are usage errors") {
  ExperimentSpec spec;
  spec.sweep = SweepKind::fixed_alpha_vary_j;
  spec.j_grid.clear();
  CHECK_THROWS_AS(spec.validate(), UsageError);

  spec = ExperimentSpec{};
  spec.seeds = {3, 3};
  CHECK_THROWS_AS(spec.validate(), UsageError);

  spec = ExperimentSpec{};
  spec.sweep = SweepKind::rate_vs_delta;
  spec.mu = 0.75;
  CHECK_THROWS_AS(spec.validate(), UsageError);
}

TEST_CASE("config parsing: round trip through a key=value file") {
  const fs::path dir = fresh_dir("eki_test_config");
  const std::string path = (dir / "run.conf").string();
  {
    std::ofstream out(path);
    out << "# comment line\n"
        << "problem=synthetic-diagonal\n"
        << "sweep=fixed-alpha-vary-J\n"
        << "backends=svd,nystroem\n"
        << "seeds=4,5\n"
        << "j_grid=2,4,8\n"
        << "fixed_alpha=0.25\n"
        << "n_synth=40\n"
        << "radius=inf\n";
  }
  ExperimentSpec spec;
  apply_config(spec, parse_config_file(path));
  CHECK(spec.problem == ProblemKind::synthetic_diagonal);
  CHECK(spec.sweep == SweepKind::fixed_alpha_vary_j);
  REQUIRE(spec.backends.size() == 2);
  CHECK(spec.backends[0] == Backend::svd);
  CHECK(spec.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(spec.j_grid == std::vector<int>{2, 4, 8});
  CHECK(spec.fixed_alpha == 0.25);
  CHECK(spec.n_synth == 40);
  CHECK(std::isinf(spec.radius));

  CHECK_THROWS_AS(apply_config(spec, {{"no_such_key", "1"}}), UsageError);
  fs::remove_all(dir);
}

TEST_CASE("fixed-alpha sweep: SVD error is monotone in J") {
  const fs::path dir = fresh_dir("eki_test_fig5");
  ExperimentSpec spec = small_sweep_spec(SweepKind::fixed_alpha_vary_j, dir);
  spec.backends = {Backend::svd};
  run_experiment(spec);
  const Matrix rows =
      read_matrix_csv((dir / "sweepJ_svd_seed1.csv").string(), true);
  REQUIRE(rows.rows() == 4);
  for (Index r = 0; r + 1 < rows.rows(); ++r)
    CHECK(rows(r + 1, 2) <= rows(r, 2) + 1e-15);
  fs::remove_all(dir);
}

TEST_CASE("fixed-J sweep: the approximation error grows as alpha shrinks") {
  const fs::path dir = fresh_dir("eki_test_fig6");
  ExperimentSpec spec = small_sweep_spec(SweepKind::fixed_j_vary_alpha, dir);
  run_experiment(spec);
  for (const char* backend : {"anomaly", "nystroem", "svd"}) {
    const Matrix rows = read_matrix_csv(
        (dir / (std::string("sweepAlpha_") + backend + "_seed1.csv"))
            .string(),
        true);
    REQUIRE(rows.rows() == 5);
    // grid is descending in alpha; e_app at the smallest alpha dominates
    CHECK(rows(rows.rows() - 1, 2) > rows(0, 2));
  }
  fs::remove_all(dir);
}

TEST_CASE("adaptive sweep: manifest lists every consumed seed and re-runs "
          "identically") {
  const fs::path dir1 = fresh_dir("eki_test_manifest1");
  ExperimentSpec spec;
  spec.problem = ProblemKind::synthetic_diagonal;
  spec.sweep = SweepKind::adaptive;
  spec.n_synth = 40;
  spec.backends = {Backend::nystroem};
  spec.seeds = {11};
  spec.j0 = 2;
  spec.gamma = 2.0;
  spec.b = 0.6;
  spec.index_offset = 0;
  spec.with_tikhonov_ref = true;
  spec.out_dir = dir1.string();
  const RunArtifacts first = run_experiment(spec);

  nlohmann::json manifest;
  std::ifstream(first.manifest_file) >> manifest;
  REQUIRE(manifest["runs"].size() == 1);
  const auto& run = manifest["runs"][0];
  const auto consumed =
      run["consumed_seeds"].get<std::vector<std::uint64_t>>();
  CHECK(consumed.size() == run["iterations"].get<std::size_t>());
  for (std::size_t k = 1; k <= consumed.size(); ++k)
    CHECK(consumed[k - 1] == iteration_seed(11, static_cast<int>(k)));

  // Re-running from the manifest reproduces the CSV byte for byte.
  const fs::path dir2 = fresh_dir("eki_test_manifest2");
  ExperimentSpec again = spec_from_manifest(first.manifest_file);
  again.out_dir = dir2.string();
  const RunArtifacts second = run_experiment(again);
  REQUIRE(first.csv_files.size() == second.csv_files.size());
  CHECK(strip_last_column(slurp(first.csv_files[0])) ==
        strip_last_column(slurp(second.csv_files[0])));
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST_CASE("emitted CSVs re-parse and round-trip bit-identically") {
  const fs::path dir = fresh_dir("eki_test_roundtrip");
  ExperimentSpec spec = small_sweep_spec(SweepKind::fixed_alpha_vary_j, dir);
  spec.backends = {Backend::nystroem};
  const RunArtifacts artifacts = run_experiment(spec);
  REQUIRE(artifacts.csv_files.size() == 1);

  const Matrix parsed = read_matrix_csv(artifacts.csv_files[0], true);
  const std::string rewritten = (dir / "rewritten.csv").string();
  write_matrix_csv(rewritten, parsed, {"J", "e_rel", "e_app"});
  CHECK(slurp(artifacts.csv_files[0]) == slurp(rewritten));
  fs::remove_all(dir);
}

TEST_CASE("factor cache: second run reads factors back bit-identically") {
  const fs::path dir = fresh_dir("eki_test_cache");
  ExperimentSpec spec = small_sweep_spec(SweepKind::fixed_alpha_vary_j, dir);
  spec.backends = {Backend::nystroem};
  spec.cache_factors = true;
  const RunArtifacts first = run_experiment(spec);
  REQUIRE(fs::exists(dir / "factors"));
  std::size_t cached = 0;
  for (const auto& entry : fs::directory_iterator(dir / "factors"))
    if (entry.path().extension() == ".bin") ++cached;
  CHECK(cached == spec.j_grid.size());

  // Re-run in place: every factor comes from the cache, results unchanged.
  const std::string before = slurp(first.csv_files[0]);
  const RunArtifacts second = run_experiment(spec);
  CHECK(slurp(second.csv_files[0]) == before);
  fs::remove_all(dir);
}

TEST_CASE("rate_experiment: deterministic backend ignores the seed") {
  const fs::path dir = fresh_dir("eki_test_rate");
  const RateResult rate = rate_experiment(0.5, {1e-1, 1e-2}, Backend::svd,
                                          {1, 2}, dir.string());
  std::ifstream in(rate.csv_file);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::string> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 4);  // two deltas x two seeds

  // error is the third column; both seeds print the same value
  const auto error_cell = [](const std::string& row) {
    std::stringstream ss(row);
    std::string cell;
    for (int i = 0; i < 3; ++i) std::getline(ss, cell, ',');
    return cell;
  };
  CHECK(error_cell(rows[0]) == error_cell(rows[1]));
  CHECK(error_cell(rows[2]) == error_cell(rows[3]));
  CHECK(rate.excluded_runs == 0);
  fs::remove_all(dir);
}

TEST_CASE("rate_experiment: rejects an empty grid") {
  CHECK_THROWS_AS(static_cast<void>(rate_experiment(
                      0.5, {}, Backend::svd, {1}, "/tmp/unused")),
                  UsageError);
}

TEST_CASE("source-condition problem satisfies its own contract") {
  const SourceConditionProblem scp =
      build_source_condition_problem(64, 0.5, 1e-2, 7);
  scp.problem.validate();
  // |y_hat - L x_dagger| = delta exactly by construction.
  const Vector y = scp.problem.forward.apply(scp.x_dagger);
  CHECK(std::abs((scp.problem.y_hat - y).norm() - scp.problem.delta) <=
        1e-14);
  // x_dagger - x0 = C0^{1/2} (B^T B)^mu v with |v| = rho = 1.
  // Reconstruct v componentwise and check its norm.
  double v_norm_sq = 0.0;
  for (Index i = 0; i < 64; ++i) {
    const double idx = static_cast<double>(i + 1);
    const double sqrt_c = i < 32 ? 1.0 : 32.0 / idx;
    const double b2 = 1.0 / (idx * idx);
    const double denom = sqrt_c * std::pow(b2, 0.5);
    if (denom > 0.0) {
      const double vi = (scp.x_dagger[i] - scp.problem.x0[i]) / denom;
      v_norm_sq += vi * vi;
    }
  }
  CHECK(std::sqrt(v_norm_sq) == doctest::Approx(scp.rho).epsilon(1e-10));
}

TEST_CASE("builders produce valid problems") {
  build_synthetic_diagonal(30, 2.0, 0.1, 1).problem.validate();
  build_dense_random(6, 9, 2).problem.validate();
  const BuiltProblem radon = build_radon_problem(8, 0.3, 10.0, 3);
  radon.problem.validate();
  CHECK(radon.problem.delta == 1.0);
}
