#include "eki/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eki/io.hpp"

namespace eki {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(ProblemKind p) {
  switch (p) {
    case ProblemKind::radon: return "radon";
    case ProblemKind::synthetic_diagonal: return "synthetic-diagonal";
    case ProblemKind::dense_random: return "dense-random";
  }
  return "?";
}

const char* to_string(SweepKind s) {
  switch (s) {
    case SweepKind::adaptive: return "adaptive";
    case SweepKind::fixed_alpha_vary_j: return "fixed-alpha-vary-J";
    case SweepKind::fixed_j_vary_alpha: return "fixed-J-vary-alpha";
    case SweepKind::rate_vs_delta: return "rate-vs-delta";
  }
  return "?";
}

namespace {

std::optional<ProblemKind> problem_from_string(const std::string& s) {
  if (s == "radon") return ProblemKind::radon;
  if (s == "synthetic-diagonal") return ProblemKind::synthetic_diagonal;
  if (s == "dense-random") return ProblemKind::dense_random;
  return std::nullopt;
}

std::optional<SweepKind> sweep_from_string(const std::string& s) {
  if (s == "adaptive") return SweepKind::adaptive;
  if (s == "fixed-alpha-vary-J") return SweepKind::fixed_alpha_vary_j;
  if (s == "fixed-J-vary-alpha") return SweepKind::fixed_j_vary_alpha;
  if (s == "rate-vs-delta") return SweepKind::rate_vs_delta;
  return std::nullopt;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity")
    return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("invalid value for " + key + ": " + v);
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw UsageError("invalid value for " + key + ": " + v);
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  if (backends.empty()) throw UsageError("backends: list must be nonempty");
  if (seeds.empty()) throw UsageError("seeds: list must be nonempty");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size())
    throw UsageError("seeds: entries must be distinct");
  if (out_dir.empty()) throw UsageError("out: output directory required");

  switch (sweep) {
    case SweepKind::fixed_alpha_vary_j:
      if (j_grid.empty()) throw UsageError("j_grid: grid must be nonempty");
      for (int j : j_grid)
        if (j < 1) throw UsageError("j_grid: entries must be >= 1");
      if (!(fixed_alpha > 0.0))
        throw UsageError("fixed_alpha: must be > 0");
      break;
    case SweepKind::fixed_j_vary_alpha:
      if (alpha_grid.empty())
        throw UsageError("alpha_grid: grid must be nonempty");
      for (double a : alpha_grid)
        if (!(a > 0.0)) throw UsageError("alpha_grid: entries must be > 0");
      if (fixed_j < 0) throw UsageError("fixed_j: must be >= 0");
      break;
    case SweepKind::rate_vs_delta:
      if (delta_grid.empty())
        throw UsageError("delta_grid: grid must be nonempty");
      for (double d : delta_grid)
        if (!(d > 0.0)) throw UsageError("delta_grid: entries must be > 0");
      if (!(mu > 0.0 && mu <= 0.5))
        throw UsageError("mu: must lie in (0, 1/2]");
      break;
    case SweepKind::adaptive:
      break;
  }
  if (problem == ProblemKind::radon && d < 8)
    throw UsageError("d: must be >= 8");
  if (problem == ProblemKind::synthetic_diagonal && n_synth < 2)
    throw UsageError("n_synth: must be >= 2");
}

BuiltProblem build_radon_problem(int d, double h, double snr,
                                 std::uint64_t noise_seed, int n_angles,
                                 int n_detectors) {
  const PhantomImage phantom = shepp_logan(d);
  const Vector x_star = phantom.flatten();
  RadonGeometry geom = RadonGeometry::standard(d);
  if (n_angles > 0) geom.n_angles = n_angles;
  if (n_detectors > 0) geom.n_detectors = n_detectors;
  const LinearMap radon = radon_operator(geom);
  const Vector y = radon.apply(x_star);

  GaussianSampler rng(noise_seed);
  const NoisyData noisy = make_noisy_data(y, snr, rng);

  BuiltProblem out;
  out.problem.forward = scaled_map(radon, 1.0 / noisy.scale);
  out.problem.noise_weight = spd_identity(geom.range_dim());
  out.problem.prior_cov = ou_covariance(d, h);
  out.problem.x0 = Vector::Zero(geom.domain_dim());
  out.problem.y_hat = noisy.y_hat;
  out.problem.delta = 1.0;
  out.x_star = x_star;
  return out;
}

BuiltProblem build_synthetic_diagonal(int n, double spectrum_exponent,
                                      double noise_rel,
                                      std::uint64_t noise_seed) {
  Vector lambda(n);
  Vector l_diag(n);
  for (int i = 0; i < n; ++i) {
    const double idx = static_cast<double>(i + 1);
    lambda[i] = std::pow(idx, -spectrum_exponent);
    l_diag[i] = 1.0 / idx;  // genuinely ill-posed forward
  }
  const SpdOperator c0 = spd_diagonal(lambda);

  GaussianSampler rng(noise_seed);
  Vector v = rng.normal_vector(n);
  v.normalize();
  const Vector x_star = c0.apply_sqrt(v);
  const Vector y = l_diag.cwiseProduct(x_star);

  Vector u = rng.normal_vector(n);
  u.normalize();
  const double delta = noise_rel * y.norm();

  BuiltProblem out;
  out.problem.forward = diagonal_map(l_diag);
  out.problem.noise_weight = spd_identity(n);
  out.problem.prior_cov = c0;
  out.problem.x0 = Vector::Zero(n);
  out.problem.y_hat = y + delta * u;
  out.problem.delta = delta;
  out.x_star = x_star;
  return out;
}

BuiltProblem build_dense_random(int n, int m, std::uint64_t noise_seed) {
  GaussianSampler rng(noise_seed);
  const Matrix l = rng.normal_matrix(m, n) / std::sqrt(static_cast<double>(m));
  const Matrix g = rng.normal_matrix(n, n);
  Matrix c0m = g * g.transpose() / static_cast<double>(n);
  c0m.diagonal().array() += 0.1;

  BuiltProblem out;
  out.problem.forward = dense_map(l);
  out.problem.noise_weight = spd_identity(m);
  out.problem.prior_cov = spd_dense(c0m);
  out.x_star = out.problem.prior_cov.apply_sqrt(rng.normal_vector(n));
  const Vector y = out.problem.forward.apply(out.x_star);
  Vector u = rng.normal_vector(m);
  u.normalize();
  const double delta = 0.05 * y.norm();
  out.problem.x0 = Vector::Zero(n);
  out.problem.y_hat = y + delta * u;
  out.problem.delta = delta;
  return out;
}

SourceConditionProblem build_source_condition_problem(
    int n, double mu, double delta, std::uint64_t noise_seed) {
  if (!(mu > 0.0 && mu <= 0.5))
    throw UsageError("mu: must lie in (0, 1/2]");
  // B = R^{-1/2} L C0^{1/2} = diag(i^{-1}) throughout. The prior is flat over
  // the head indices and decays like i^{-2} beyond, so the plain norm agrees
  // with the prior-weighted norm on the band the iteration actually touches;
  // there the discrepancy-principle rate is sharp rather than only an upper
  // bound.
  const int head = n / 2;
  Vector lambda(n);
  Vector l_diag(n);
  for (int i = 0; i < n; ++i) {
    const double idx = static_cast<double>(i + 1);
    if (i < head) {
      lambda[i] = 1.0;
      l_diag[i] = 1.0 / idx;
    } else {
      const double ratio = static_cast<double>(head) / idx;
      lambda[i] = ratio * ratio;
      l_diag[i] = 1.0 / static_cast<double>(head);
    }
  }

  // Barely square-summable source element keeps the condition sharp; it is
  // supported on the flat head so the source constant is exact.
  Vector v = Vector::Zero(n);
  for (int i = 0; i < head; ++i)
    v[i] = std::pow(static_cast<double>(i + 1), -0.51);
  v.normalize();

  Vector x_dagger(n);
  for (int i = 0; i < n; ++i) {
    const double idx = static_cast<double>(i + 1);
    // C0^{1/2} (B^T B)^mu v, componentwise: sqrt(lambda_i) * i^{-2 mu} * v_i.
    x_dagger[i] = std::sqrt(lambda[i]) * std::pow(idx, -2.0 * mu) * v[i];
  }

  GaussianSampler rng(noise_seed);
  Vector u = rng.normal_vector(n);
  u.normalize();

  SourceConditionProblem out;
  out.problem.forward = diagonal_map(l_diag);
  out.problem.noise_weight = spd_identity(n);
  out.problem.prior_cov = spd_diagonal(lambda);
  out.problem.x0 = Vector::Zero(n);
  const Vector y = l_diag.cwiseProduct(x_dagger);
  out.problem.y_hat = y + delta * u;
  out.problem.delta = delta;
  out.x_dagger = x_dagger;
  out.rho = 1.0;
  return out;
}

AdaptiveConfig backend_config(const ExperimentSpec& spec, Backend backend,
                              std::uint64_t seed) {
  AdaptiveConfig config;
  config.alpha0 = spec.alpha0;
  config.j0 = spec.j0;
  config.tau = spec.tau;
  config.index_offset = spec.index_offset;
  config.max_iter = spec.max_iter;
  config.radius = spec.radius;
  config.backend = backend;
  config.seed = seed;
  if (backend == Backend::anomaly) {
    // Monte Carlo order 1/2; slow the alpha decay so the sample-size
    // sequence matches the order-gamma backends.
    config.gamma = 0.5;
    config.b = std::pow(spec.b, 1.0 / (2.0 * spec.gamma));
  } else {
    config.gamma = spec.gamma;
    config.b = spec.b;
  }
  return config;
}

namespace {

BuiltProblem build_problem(const ExperimentSpec& spec) {
  switch (spec.problem) {
    case ProblemKind::radon:
      return build_radon_problem(spec.d, spec.h, spec.snr, spec.noise_seed,
                                 spec.n_angles, spec.n_detectors);
    case ProblemKind::synthetic_diagonal:
      return build_synthetic_diagonal(spec.n_synth, spec.spectrum_exponent,
                                      spec.noise_rel, spec.noise_seed);
    case ProblemKind::dense_random:
      return build_dense_random(spec.n_dense, spec.m_dense, spec.noise_seed);
  }
  throw std::logic_error("unknown problem kind");
}

std::map<std::string, std::string> config_map(const ExperimentSpec& spec) {
  std::map<std::string, std::string> kv;
  kv["problem"] = to_string(spec.problem);
  kv["sweep"] = to_string(spec.sweep);
  {
    std::string s;
    for (std::size_t i = 0; i < spec.backends.size(); ++i) {
      if (i) s += ',';
      s += to_string(spec.backends[i]);
    }
    kv["backends"] = s;
  }
  {
    std::string s;
    for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(spec.seeds[i]);
    }
    kv["seeds"] = s;
  }
  kv["out"] = spec.out_dir;
  kv["noise_seed"] = std::to_string(spec.noise_seed);
  kv["d"] = std::to_string(spec.d);
  kv["n_angles"] = std::to_string(spec.n_angles);
  kv["n_detectors"] = std::to_string(spec.n_detectors);
  kv["h"] = format_double(spec.h);
  kv["snr"] = format_double(spec.snr);
  kv["n_synth"] = std::to_string(spec.n_synth);
  kv["spectrum_exponent"] = format_double(spec.spectrum_exponent);
  kv["noise_rel"] = format_double(spec.noise_rel);
  kv["n_dense"] = std::to_string(spec.n_dense);
  kv["m_dense"] = std::to_string(spec.m_dense);
  kv["alpha0"] = format_double(spec.alpha0);
  kv["j0"] = std::to_string(spec.j0);
  kv["b"] = format_double(spec.b);
  kv["gamma"] = format_double(spec.gamma);
  kv["tau"] = format_double(spec.tau);
  kv["index_offset"] = std::to_string(spec.index_offset);
  kv["max_iter"] = std::to_string(spec.max_iter);
  kv["radius"] = std::isfinite(spec.radius) ? format_double(spec.radius)
                                            : std::string("inf");
  kv["with_tikhonov_ref"] = spec.with_tikhonov_ref ? "1" : "0";
  {
    std::string s;
    for (std::size_t i = 0; i < spec.j_grid.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(spec.j_grid[i]);
    }
    if (!s.empty()) kv["j_grid"] = s;
  }
  {
    std::string s;
    for (std::size_t i = 0; i < spec.alpha_grid.size(); ++i) {
      if (i) s += ',';
      s += format_double(spec.alpha_grid[i]);
    }
    if (!s.empty()) kv["alpha_grid"] = s;
  }
  kv["fixed_alpha"] = format_double(spec.fixed_alpha);
  kv["fixed_j"] = std::to_string(spec.fixed_j);
  {
    std::string s;
    for (std::size_t i = 0; i < spec.delta_grid.size(); ++i) {
      if (i) s += ',';
      s += format_double(spec.delta_grid[i]);
    }
    if (!s.empty()) kv["delta_grid"] = s;
  }
  kv["mu"] = format_double(spec.mu);
  kv["cache_factors"] = spec.cache_factors ? "1" : "0";
  return kv;
}

std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

FactorGenerator with_cache(FactorGenerator inner, const std::string& dir,
                           Backend backend) {
  return [inner, dir, backend](Index j, std::uint64_t seed) -> LowRankFactor {
    std::ostringstream name;
    name << "factor_" << to_string(backend) << "_J" << j << "_seed" << seed
         << ".bin";
    const std::string path = (fs::path(dir) / name.str()).string();
    if (fs::exists(path)) return load_factor(path, j);
    LowRankFactor factor = inner(j, seed);
    fs::create_directories(dir);
    save_factor(path, factor);
    return factor;
  };
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string plot_script_for(const ExperimentSpec& spec,
                            const std::vector<std::string>& csvs) {
  std::ostringstream py;
  py << "#!/usr/bin/env python3\n"
     << "# Renders the sweep CSVs in this directory.\n"
     << "import csv, math\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "files = [\n";
  for (const auto& f : csvs)
    py << "    \"" << fs::path(f).filename().string() << "\",\n";
  py << "]\n\n"
     << "def load(name):\n"
     << "    with open(name) as fh:\n"
     << "        rows = list(csv.DictReader(fh))\n"
     << "    return rows\n\n"
     << "fig, ax = plt.subplots(figsize=(7, 5))\n";
  switch (spec.sweep) {
    case SweepKind::adaptive:
      py << "for name in files:\n"
         << "    rows = load(name)\n"
         << "    ax.plot([int(r['k']) for r in rows],\n"
         << "            [float(r['e_rel']) for r in rows if r['e_rel']],\n"
         << "            marker='o', label=name)\n"
         << "ax.set_xlabel('iteration k')\n"
         << "ax.set_ylabel('relative reconstruction error')\n";
      break;
    case SweepKind::fixed_alpha_vary_j:
      py << "for name in files:\n"
         << "    rows = load(name)\n"
         << "    ax.loglog([int(r['J']) for r in rows],\n"
         << "              [float(r['e_app']) for r in rows],\n"
         << "              marker='o', label=name)\n"
         << "ax.set_xlabel('sample size J')\n"
         << "ax.set_ylabel('approximation error')\n";
      break;
    case SweepKind::fixed_j_vary_alpha:
      py << "for name in files:\n"
         << "    rows = load(name)\n"
         << "    ax.loglog([float(r['alpha']) for r in rows],\n"
         << "              [float(r['e_app']) for r in rows],\n"
         << "              marker='o', label=name)\n"
         << "ax.set_xlabel('regularization parameter alpha')\n"
         << "ax.set_ylabel('approximation error')\n";
      break;
    case SweepKind::rate_vs_delta:
      py << "for name in files:\n"
         << "    rows = load(name)\n"
         << "    ax.loglog([float(r['delta']) for r in rows],\n"
         << "              [float(r['error']) for r in rows],\n"
         << "              marker='o', linestyle='', label=name)\n"
         << "ax.set_xlabel('noise level delta')\n"
         << "ax.set_ylabel('reconstruction error')\n";
      break;
  }
  py << "ax.grid(True, which='both', alpha=0.3)\n"
     << "ax.legend(fontsize=8)\n"
     << "fig.tight_layout()\n"
     << "fig.savefig('figure.png', dpi=150)\n"
     << "print('wrote figure.png')\n";
  return py.str();
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line is not key=value: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto kl = key.find_last_not_of(" \t");
    key = key.substr(0, kl + 1);
    const auto vf = value.find_first_not_of(" \t");
    value = vf == std::string::npos ? "" : value.substr(vf);
    kv[key] = value;
  }
  return kv;
}

void apply_config(ExperimentSpec& spec,
                  const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "problem") {
      const auto p = problem_from_string(value);
      if (!p) throw UsageError("problem: unknown kind " + value);
      spec.problem = *p;
    } else if (key == "sweep") {
      const auto s = sweep_from_string(value);
      if (!s) throw UsageError("sweep: unknown kind " + value);
      spec.sweep = *s;
    } else if (key == "backends" || key == "backend") {
      spec.backends.clear();
      for (const auto& name : split_list(value)) {
        const auto b = backend_from_string(name);
        if (!b) throw UsageError("backend: unknown name " + name);
        spec.backends.push_back(*b);
      }
    } else if (key == "seeds" || key == "seed") {
      spec.seeds.clear();
      for (const auto& s : split_list(value))
        spec.seeds.push_back(
            static_cast<std::uint64_t>(parse_int("seeds", s)));
    } else if (key == "out") {
      spec.out_dir = value;
    } else if (key == "noise_seed") {
      spec.noise_seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "d") {
      spec.d = static_cast<int>(parse_int(key, value));
    } else if (key == "n_angles") {
      spec.n_angles = static_cast<int>(parse_int(key, value));
    } else if (key == "n_detectors") {
      spec.n_detectors = static_cast<int>(parse_int(key, value));
    } else if (key == "h") {
      spec.h = parse_double(key, value);
    } else if (key == "snr") {
      spec.snr = parse_double(key, value);
    } else if (key == "n_synth") {
      spec.n_synth = static_cast<int>(parse_int(key, value));
    } else if (key == "spectrum_exponent") {
      spec.spectrum_exponent = parse_double(key, value);
    } else if (key == "noise_rel") {
      spec.noise_rel = parse_double(key, value);
    } else if (key == "n_dense") {
      spec.n_dense = static_cast<int>(parse_int(key, value));
    } else if (key == "m_dense") {
      spec.m_dense = static_cast<int>(parse_int(key, value));
    } else if (key == "alpha0") {
      spec.alpha0 = parse_double(key, value);
    } else if (key == "j0") {
      spec.j0 = static_cast<int>(parse_int(key, value));
    } else if (key == "b") {
      spec.b = parse_double(key, value);
    } else if (key == "gamma") {
      spec.gamma = parse_double(key, value);
    } else if (key == "tau") {
      spec.tau = parse_double(key, value);
    } else if (key == "index_offset") {
      spec.index_offset = static_cast<int>(parse_int(key, value));
    } else if (key == "max_iter") {
      spec.max_iter = static_cast<int>(parse_int(key, value));
    } else if (key == "radius") {
      spec.radius = parse_double(key, value);
    } else if (key == "with_tikhonov_ref") {
      spec.with_tikhonov_ref = parse_int(key, value) != 0;
    } else if (key == "j_grid") {
      spec.j_grid.clear();
      for (const auto& s : split_list(value))
        spec.j_grid.push_back(static_cast<int>(parse_int("j_grid", s)));
    } else if (key == "alpha_grid") {
      spec.alpha_grid.clear();
      for (const auto& s : split_list(value))
        spec.alpha_grid.push_back(parse_double("alpha_grid", s));
    } else if (key == "fixed_alpha") {
      spec.fixed_alpha = parse_double(key, value);
    } else if (key == "fixed_j") {
      spec.fixed_j = static_cast<int>(parse_int(key, value));
    } else if (key == "delta_grid") {
      spec.delta_grid.clear();
      for (const auto& s : split_list(value))
        spec.delta_grid.push_back(parse_double("delta_grid", s));
    } else if (key == "mu") {
      spec.mu = parse_double(key, value);
    } else if (key == "cache_factors") {
      spec.cache_factors = parse_int(key, value) != 0;
    } else {
      throw UsageError("unknown config key: " + key);
    }
  }
}

double loglog_slope(const std::vector<double>& x,
                    const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope: need >= 2 paired points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

RunArtifacts run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  fs::create_directories(spec.out_dir);

  RunArtifacts artifacts;
  json manifest;
  manifest["tool"] = "eki";
  manifest["version"] = "0.1.0";
  manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  manifest["config"] = config_map(spec);
  manifest["runs"] = json::array();

  if (spec.sweep == SweepKind::rate_vs_delta) {
    for (Backend backend : spec.backends) {
      const RateResult rate = rate_experiment(spec.mu, spec.delta_grid,
                                              backend, spec.seeds,
                                              spec.out_dir);
      artifacts.csv_files.push_back(rate.csv_file);
      json entry;
      entry["backend"] = to_string(backend);
      entry["csv"] = fs::path(rate.csv_file).filename().string();
      entry["fitted_slope"] = rate.fitted_slope;
      entry["theoretical_slope"] = rate.theoretical_slope;
      entry["excluded_runs"] = rate.excluded_runs;
      manifest["runs"].push_back(entry);
    }
  } else {
    const BuiltProblem built = build_problem(spec);
    const Index n = built.problem.domain_dim();

    std::shared_ptr<TikhonovReference> tikhonov;
    const bool want_tik = spec.sweep != SweepKind::adaptive ||
                          spec.with_tikhonov_ref;
    if (want_tik)
      tikhonov = std::make_shared<TikhonovReference>(built.problem);

    for (Backend backend : spec.backends) {
      FactorGenerator generator =
          make_factor_generator(backend, built.problem.prior_cov);
      if (spec.cache_factors)
        generator = with_cache(generator,
                               (fs::path(spec.out_dir) / "factors").string(),
                               backend);

      for (std::uint64_t seed : spec.seeds) {
        json entry;
        entry["backend"] = to_string(backend);
        entry["seed"] = seed;
        entry["noise_seed"] = spec.noise_seed;
        std::vector<std::uint64_t> consumed;
        std::string csv_path;

        if (spec.sweep == SweepKind::adaptive) {
          const AdaptiveConfig config = backend_config(spec, backend, seed);
          RunReferences refs;
          refs.x_star = built.x_star;
          if (tikhonov) {
            auto tik = tikhonov;
            refs.tikhonov_ref = [tik](double alpha) { return (*tik)(alpha); };
          }
          const AdaptiveResult result =
              adaptive_run(built.problem, config, generator, &refs);
          csv_path = (fs::path(spec.out_dir) /
                      ("adaptive_" + std::string(to_string(backend)) + "_" +
                       seed_tag(seed) + ".csv"))
                         .string();
          write_records_csv(csv_path, result.records);
          for (const auto& rec : result.records)
            consumed.push_back(iteration_seed(config.seed, rec.k));
          entry["stopped_by"] = to_string(result.stopped_by);
          entry["iterations"] = result.records.size();
          entry["final_j"] =
              result.records.empty() ? 0 : result.records.back().j;
          entry["final_residual"] =
              result.records.empty() ? -1.0 : result.records.back().residual;
        } else if (spec.sweep == SweepKind::fixed_alpha_vary_j) {
          const Vector x_tik = (*tikhonov)(spec.fixed_alpha);
          std::ostringstream csv;
          csv << "J,e_rel,e_app\n";
          for (int j : spec.j_grid) {
            const std::uint64_t fseed =
                mix_seed(seed, static_cast<std::uint64_t>(j));
            consumed.push_back(fseed);
            const LowRankFactor factor = generator(j, fseed);
            const Vector x =
                direct_eki(built.problem, factor, spec.fixed_alpha);
            const ErrorMetrics em = metrics(x, built.x_star, &x_tik);
            csv << j << ',' << format_double(em.e_rel) << ','
                << format_double(*em.e_app) << '\n';
          }
          csv_path = (fs::path(spec.out_dir) /
                      ("sweepJ_" + std::string(to_string(backend)) + "_" +
                       seed_tag(seed) + ".csv"))
                         .string();
          write_text_file(csv_path, csv.str());
        } else {  // fixed_j_vary_alpha
          const int j = spec.fixed_j > 0
                            ? spec.fixed_j
                            : static_cast<int>((n + 4) / 5);  // ceil(n/5)
          consumed.push_back(seed);
          const LowRankFactor factor = generator(j, seed);
          std::ostringstream csv;
          csv << "alpha,e_rel,e_app\n";
          for (double alpha : spec.alpha_grid) {
            const Vector x = direct_eki(built.problem, factor, alpha);
            const Vector x_tik = (*tikhonov)(alpha);
            const ErrorMetrics em = metrics(x, built.x_star, &x_tik);
            csv << format_double(alpha) << ',' << format_double(em.e_rel)
                << ',' << format_double(*em.e_app) << '\n';
          }
          csv_path = (fs::path(spec.out_dir) /
                      ("sweepAlpha_" + std::string(to_string(backend)) + "_" +
                       seed_tag(seed) + ".csv"))
                         .string();
          write_text_file(csv_path, csv.str());
        }

        entry["csv"] = fs::path(csv_path).filename().string();
        entry["consumed_seeds"] = consumed;
        manifest["runs"].push_back(entry);
        artifacts.csv_files.push_back(csv_path);
      }
    }
  }

  artifacts.manifest_file =
      (fs::path(spec.out_dir) / "manifest.json").string();
  write_text_file(artifacts.manifest_file, manifest.dump(2) + "\n");

  artifacts.plot_script = (fs::path(spec.out_dir) / "plot.py").string();
  write_text_file(artifacts.plot_script,
                  plot_script_for(spec, artifacts.csv_files));
  return artifacts;
}

ExperimentSpec spec_from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw UsageError("cannot open manifest: " + manifest_path);
  json manifest;
  in >> manifest;
  if (!manifest.contains("config"))
    throw UsageError("manifest lacks a config block: " + manifest_path);
  std::map<std::string, std::string> kv;
  for (const auto& [key, value] : manifest["config"].items())
    kv[key] = value.get<std::string>();
  ExperimentSpec spec;
  apply_config(spec, kv);
  return spec;
}

RateResult rate_experiment(double mu, const std::vector<double>& deltas,
                           Backend backend,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir) {
  if (!(mu > 0.0 && mu <= 0.5)) throw UsageError("mu: must lie in (0, 1/2]");
  if (deltas.empty()) throw UsageError("delta_grid: grid must be nonempty");
  if (seeds.empty()) throw UsageError("seeds: list must be nonempty");
  fs::create_directories(out_dir);

  constexpr int kRateDim = 1600;
  constexpr std::uint64_t kRateNoiseSeed = 777;

  RateResult result;
  result.theoretical_slope = 2.0 * mu / (2.0 * mu + 1.0);

  std::ostringstream csv;
  csv << "delta,seed,error,stopped_by,iterations,final_j\n";

  std::vector<double> fit_deltas;
  std::vector<double> fit_errors;

  for (double delta : deltas) {
    const SourceConditionProblem scp =
        build_source_condition_problem(kRateDim, mu, delta, kRateNoiseSeed);
    const FactorGenerator generator =
        make_factor_generator(backend, scp.problem.prior_cov);

    double error_sum = 0.0;
    int included = 0;
    for (std::uint64_t seed : seeds) {
      AdaptiveConfig config;
      config.alpha0 = 1.0;
      config.j0 = 2;
      config.tau = 1.5;
      config.max_iter = 60;
      config.index_offset = 0;
      config.backend = backend;
      config.seed = seed;
      if (backend == Backend::anomaly) {
        config.gamma = 0.5;
        config.b = std::pow(0.5, 0.25);
      } else {
        config.gamma = 2.0;  // spectrum decays like i^{-2}
        config.b = 0.5;
      }

      const AdaptiveResult run =
          adaptive_run(scp.problem, config, generator);
      const double error = (run.solution - scp.x_dagger).norm();
      csv << format_double(delta) << ',' << seed << ','
          << format_double(error) << ',' << to_string(run.stopped_by) << ','
          << run.records.size() << ','
          << (run.records.empty() ? 0 : run.records.back().j) << '\n';
      if (run.stopped_by == StopReason::discrepancy) {
        error_sum += error;
        ++included;
      } else {
        ++result.excluded_runs;
      }
    }
    if (included > 0) {
      fit_deltas.push_back(delta);
      fit_errors.push_back(error_sum / included);
    }
  }

  if (fit_deltas.size() >= 2)
    result.fitted_slope = loglog_slope(fit_deltas, fit_errors);

  std::ostringstream name;
  name << "rate_" << to_string(backend) << "_mu" << format_double(mu)
       << ".csv";
  result.csv_file = (fs::path(out_dir) / name.str()).string();
  write_text_file(result.csv_file, csv.str());

  json manifest;
  manifest["tool"] = "eki";
  manifest["command"] = "rate";
  manifest["mu"] = mu;
  manifest["backend"] = to_string(backend);
  manifest["deltas"] = deltas;
  manifest["seeds"] = seeds;
  manifest["noise_seed"] = kRateNoiseSeed;
  manifest["dimension"] = kRateDim;
  manifest["fitted_slope"] = result.fitted_slope;
  manifest["theoretical_slope"] = result.theoretical_slope;
  manifest["excluded_runs"] = result.excluded_runs;
  std::ostringstream mname;
  mname << "rate_" << to_string(backend) << "_mu" << format_double(mu)
        << "_manifest.json";
  write_text_file((fs::path(out_dir) / mname.str()).string(),
                  manifest.dump(2) + "\n");
  return result;
}

}  // namespace eki
