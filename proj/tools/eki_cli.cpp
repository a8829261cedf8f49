// Experiment runner for the low-rank inversion toolkit.
//
// Verbs:
//   run      execute a sweep described by flags and/or a config file
//   rate     convergence-rate experiment against the noise level
//   phantom  write the test image as CSV and binary container
//   check    run the operator/noise invariant suite
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eki/adaptive.hpp"
#include "eki/experiment.hpp"
#include "eki/factorizations.hpp"
#include "eki/io.hpp"
#include "eki/tomo.hpp"

namespace {

using namespace eki;

int cmd_run(const std::map<std::string, std::string>& file_config,
            const std::map<std::string, std::string>& flag_config) {
  ExperimentSpec spec;
  apply_config(spec, file_config);
  apply_config(spec, flag_config);  // flags override the file
  const RunArtifacts artifacts = run_experiment(spec);
  std::cout << "wrote " << artifacts.csv_files.size() << " CSV file(s), "
            << artifacts.manifest_file << ", " << artifacts.plot_script
            << "\n";
  return 0;
}

int cmd_rate(double mu, const std::vector<double>& deltas,
             const std::string& backend_name,
             const std::vector<std::uint64_t>& seeds,
             const std::string& out_dir) {
  const auto backend = backend_from_string(backend_name);
  if (!backend) throw UsageError("backend: unknown name " + backend_name);
  const RateResult result =
      rate_experiment(mu, deltas, *backend, seeds, out_dir);
  std::cout << "fitted slope " << result.fitted_slope << " (theory "
            << result.theoretical_slope << "), excluded "
            << result.excluded_runs << " run(s), " << result.csv_file << "\n";
  return 0;
}

int cmd_phantom(int d, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const PhantomImage img = shepp_logan(d);
  const std::string base =
      (std::filesystem::path(out_dir) / ("phantom_d" + std::to_string(d)))
          .string();
  write_matrix_csv(base + ".csv", img.pixels);
  write_matrix_bin(base + ".bin", img.pixels);

  // Matching sinogram under the standard geometry, one row per angle.
  const RadonGeometry geom = RadonGeometry::standard(d);
  const Vector sino = radon_operator(geom).apply(img.flatten());
  Matrix sinogram(geom.n_angles, geom.n_detectors);
  for (int a = 0; a < geom.n_angles; ++a)
    for (int t = 0; t < geom.n_detectors; ++t)
      sinogram(a, t) = sino[static_cast<Index>(a) * geom.n_detectors + t];
  const std::string sbase =
      (std::filesystem::path(out_dir) / ("sinogram_d" + std::to_string(d)))
          .string();
  write_matrix_csv(sbase + ".csv", sinogram);
  write_matrix_bin(sbase + ".bin", sinogram);
  std::cout << "wrote " << base << ".{csv,bin} and " << sbase
            << ".{csv,bin}\n";
  return 0;
}

bool report(const char* name, bool ok, double value, double bound) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << " (" << value
            << (ok ? " <= " : " > ") << bound << ")\n";
  return ok;
}

int cmd_check() {
  bool all_ok = true;

  {
    GaussianSampler rng(11);
    const Matrix a = rng.normal_matrix(7, 5);
    all_ok &= report("dense operator adjoint defect",
                     adjoint_test(dense_map(a), 100, 1) <= 1e-8,
                     adjoint_test(dense_map(a), 100, 1), 1e-8);
    const Vector diag = rng.normal_vector(6).cwiseAbs();
    all_ok &= report("diagonal operator adjoint defect",
                     adjoint_test(diagonal_map(diag), 100, 2) <= 1e-8,
                     adjoint_test(diagonal_map(diag), 100, 2), 1e-8);
  }
  {
    const LinearMap radon = radon_operator(RadonGeometry::standard(16));
    const double defect = adjoint_test(radon, 100, 3);
    all_ok &= report("radon operator adjoint defect", defect <= 1e-8, defect,
                     1e-8);
  }
  {
    const Matrix c0 = ou_matrix(8, 0.3);
    const double sym = (c0 - c0.transpose()).cwiseAbs().maxCoeff();
    all_ok &= report("OU covariance symmetry defect", sym <= 1e-12, sym,
                     1e-12);
    const SymEig eig = sym_eig(c0);
    const double min_eig = eig.eigenvalues.minCoeff();
    const double floor = -1e-10 * eig.eigenvalues.maxCoeff();
    all_ok &= report("OU covariance minimum eigenvalue", min_eig >= floor,
                     min_eig, floor);
  }
  {
    GaussianSampler rng(21);
    const LinearMap radon = radon_operator(RadonGeometry::standard(16));
    const Vector y = radon.apply(shepp_logan(16).flatten());
    const NoisyData noisy = make_noisy_data(y, 10.0, rng);
    const double defect = std::abs(noisy.delta - 1.0);
    all_ok &= report("noise protocol delta defect", defect <= 1e-12, defect,
                     1e-12);
  }
  {
    const SpdOperator c0 = ou_covariance(8, 0.3);
    GaussianSampler rng(31);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Vector z = c0.apply_sqrt(rng.normal_vector(c0.dim));
      const Vector back = c0.apply(c0.apply_inv_sqrt(c0.apply_inv_sqrt(z)));
      worst = std::max(worst, (back - z).norm() / (z.norm() + 1e-300));
    }
    all_ok &= report("inverse square-root consistency", worst <= 1e-8, worst,
                     1e-8);
  }
  std::cout << (all_ok ? "all checks passed\n" : "checks FAILED\n");
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank ensemble Kalman inversion experiment runner"};
  app.set_help_flag("--help", "print help");  // frees -h/--h for the OU length
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute an experiment sweep");
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::string opt_str;
  run->add_option("--config", config_path, "key=value config file");
  // Individual flags mirror the config keys; stored as strings so the file
  // and the command line share one parser.
  std::vector<std::pair<std::string, std::string>> run_opts;
  static const char* keys[] = {
      "problem", "sweep",  "backend",     "seeds",     "out",
      "d",       "h",      "snr",         "tau",       "b",
      "gamma",   "j0",     "alpha0",      "index-offset",
      "max_iter", "radius", "n_synth",    "noise_rel", "fixed_alpha",
      "fixed_j", "j_grid", "alpha_grid",  "delta_grid", "mu",
      "noise_seed", "with_tikhonov_ref", "spectrum_exponent",
      "n_angles", "n_detectors", "cache_factors"};
  static std::map<std::string, std::string> values;
  for (const char* key : keys) {
    const std::string flag = std::string("--") + key;
    run->add_option(flag, values[key]);
  }
  run->add_option("--seed", values["seeds"]);  // singular spelling

  // rate
  auto* rate = app.add_subcommand("rate", "rate-vs-delta experiment");
  double mu = 0.5;
  std::vector<double> deltas{1e-1, 1e-2, 1e-3, 1e-4};
  std::string rate_backend = "svd";
  std::vector<std::uint64_t> rate_seeds{1};
  std::string rate_out = "out";
  rate->add_option("--mu", mu, "source-condition smoothness in (0, 1/2]");
  rate->add_option("--deltas", deltas, "noise levels")->delimiter(',');
  rate->add_option("--backend", rate_backend, "anomaly|nystroem|svd");
  rate->add_option("--seed,--seeds", rate_seeds, "seeds")->delimiter(',');
  rate->add_option("--out", rate_out, "output directory");

  // phantom
  auto* phantom = app.add_subcommand("phantom", "write the test image");
  int phantom_d = 64;
  std::string phantom_out = "out";
  phantom->add_option("--d", phantom_d, "image side length");
  phantom->add_option("--out", phantom_out, "output directory");

  // check
  app.add_subcommand("check", "run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      std::map<std::string, std::string> file_config;
      if (!config_path.empty()) file_config = parse_config_file(config_path);
      std::map<std::string, std::string> flag_config;
      for (const auto& [key, value] : values) {
        if (value.empty()) continue;
        // normalize flag spelling to config-key spelling
        std::string k = key;
        if (k == "index-offset") k = "index_offset";
        flag_config[k] = value;
      }
      return cmd_run(file_config, flag_config);
    }
    if (rate->parsed())
      return cmd_rate(mu, deltas, rate_backend, rate_seeds, rate_out);
    if (phantom->parsed()) return cmd_phantom(phantom_d, phantom_out);
    return cmd_check();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
