// Command-line front end. Exit codes: 0 success, 1 runtime or model failure,
// 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fblr/fblr.hpp"
#include "fblr/io.hpp"
#include "fblr/parallel.hpp"
#include "fblr/simulate.hpp"

using namespace fblr;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_lambda_grid(const std::string& spec) {
  if (spec.empty()) return default_lambda_grid();
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      parts.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw UsageError("--lambda-grid expects 'lo,hi,count', got '" + spec + "'");
    }
  }
  if (parts.size() != 3 || parts[0] <= 0.0 || parts[1] < parts[0] || parts[2] < 1 ||
      parts[2] != static_cast<int>(parts[2]))
    throw UsageError("--lambda-grid expects 'lo,hi,count' with 0 < lo <= hi and integer count >= 1");
  return log_grid(parts[0], parts[1], static_cast<int>(parts[2]));
}

KernelSpec kernel_flag(const std::string& name) {
  try {
    return parse_kernel_spec(name);
  } catch (const Error&) {
    throw UsageError("unknown kernel '" + name + "' (sim-bernoulli, periodic-bernoulli, second-deriv)");
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SeparableCov cov_from_files(const std::string& ca, const std::string& cb) {
  SeparableCov cov;
  cov.c_alpha = read_matrix_csv(ca);
  cov.c_beta = read_matrix_csv(cb);
  require(cov.c_alpha.rows() == cov.c_alpha.cols() && cov.c_beta.rows() == cov.c_beta.cols(), ErrorKind::data,
          "covariance files must hold square matrices");
  cov.s_grid = make_uniform_grid(static_cast<int>(cov.c_alpha.rows()));
  cov.t_grid = make_uniform_grid(static_cast<int>(cov.c_beta.rows()));
  return cov;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::vector<int> settings{1};
  std::vector<double> rcs{1.0};
  std::vector<int> ns{32, 64, 128, 256};
  std::vector<std::string> methods{"fblr"};
  int reps = 20;
  std::uint64_t seed = 42;
  int grid_len = 100;
  double sigma = 0.5;
  std::string lambda_grid;
  std::string out_dir = ".";
  bool dataset_only = false;
};

int run_simulate(const SimulateArgs& a) {
  for (int s : a.settings)
    if (s < 1 || s > 5) throw UsageError("unsupported setting " + std::to_string(s) + " (supported: 1-5)");
  for (const auto& m : a.methods)
    if (std::find(benchmark_methods().begin(), benchmark_methods().end(), m) == benchmark_methods().end())
      throw UsageError("unknown method '" + m + "' (known: " + join(benchmark_methods()) + ")");
  if (a.reps < 1) throw UsageError("--reps must be positive");
  if (a.grid_len < 3) throw UsageError("--grid-len must be at least 3");
  const fs::path out = a.out_dir;

  if (a.dataset_only) {
    SettingSpec spec = setting_spec(a.settings.front(), a.rcs.front(), a.ns.front(), a.seed);
    spec.grid_len = a.grid_len;
    spec.sigma = a.sigma;
    const SimData sim = simulate_setting(spec);
    std::vector<Mat> raw = sim.data.x;
    for (Mat& xi : raw) xi += sim.data.x_mean;
    Vec y = sim.data.y.array() + sim.data.y_mean;
    write_covariates(out / "x.csv", raw);
    {
      std::ofstream yf(out / "y.csv");
      for (Eigen::Index i = 0; i < y.size(); ++i) yf << format_double(y[i]) << '\n';
    }
    Manifest m;
    m.n = spec.n;
    m.p = m.q = spec.grid_len;
    m.x_path = "x.csv";
    m.y_path = "y.csv";
    write_manifest(out / "manifest.txt", m);
    write_matrix_csv(out / "truth_field.csv", sim.truth.field);
    write_matrix_csv(out / "cov_alpha.csv", sim.true_cov.c_alpha);
    write_matrix_csv(out / "cov_beta.csv", sim.true_cov.c_beta);
    std::cout << "wrote dataset n=" << spec.n << " p=q=" << spec.grid_len << " to " << out.string() << '\n';
    return 0;
  }

  BenchmarkConfig bc;
  bc.settings = a.settings;
  bc.r_cs = a.rcs;
  bc.ns = a.ns;
  bc.methods = a.methods;
  bc.reps = a.reps;
  bc.base_seed = a.seed;
  bc.grid_len = a.grid_len;
  bc.sigma = a.sigma;
  bc.lambda_grid = parse_lambda_grid(a.lambda_grid);

  const auto t0 = std::chrono::steady_clock::now();
  const BenchmarkResult r = run_benchmark(bc);
  write_benchmark_rows(out / "benchmark_rows.csv", r);
  write_benchmark_timing(out / "benchmark_timing.csv", r);
  write_benchmark_aggregates(out / "benchmark_aggregates.csv", r);
  write_benchmark_slopes(out / "benchmark_slopes.csv", r);

  int failures = 0;
  for (const auto& row : r.rows)
    if (!row.ok) {
      ++failures;
      std::cerr << "cell failed: " << row.method << " setting=" << row.setting << " r_c=" << row.r_c
                << " n=" << row.n << " rep=" << row.rep << ": " << row.error << '\n';
    }
  KeyValues kv{{"command", "simulate"},
               {"settings", std::to_string(a.settings.size())},
               {"methods", join(a.methods)},
               {"reps", std::to_string(a.reps)},
               {"seed", std::to_string(a.seed)},
               {"rows", std::to_string(r.rows.size())},
               {"failed_rows", std::to_string(failures)},
               {"seconds", format_double(seconds_since(t0))},
               {"outputs", "benchmark_rows.csv,benchmark_timing.csv,benchmark_aggregates.csv,benchmark_slopes.csv"}};
  write_key_values(out / "summary.txt", kv);
  for (const auto& s : r.slopes)
    std::cout << s.method << " setting " << s.setting << " r_c " << s.r_c << ": slope " << s.slope << " (se "
              << s.stderr_ << ")\n";
  return failures == static_cast<int>(r.rows.size()) ? 1 : 0;
}

// ---- fit / predict --------------------------------------------------------

struct FitArgs {
  std::string manifest;
  std::string kernel = "sim-bernoulli";
  std::string penalty = "candidate3";
  std::optional<double> lambda_alpha, lambda_beta;
  std::string lambda_grid;
  std::string cov_alpha, cov_beta;
  int rank = 1;
  int max_iter = 50;
  std::string out_dir = ".";
};

int run_fit(const FitArgs& a) {
  if (a.cov_alpha.empty() != a.cov_beta.empty()) throw UsageError("--cov-alpha and --cov-beta go together");
  if (a.rank < 1) throw UsageError("--rank must be positive");
  FblrConfig cfg;
  cfg.kernel_s = cfg.kernel_t = kernel_flag(a.kernel);
  try {
    cfg.penalty_mode = parse_penalty_mode(a.penalty);
  } catch (const Error&) {
    throw UsageError("unknown penalty '" + a.penalty + "' (candidate1, candidate2, candidate3)");
  }
  cfg.lambda_alpha = a.lambda_alpha;
  cfg.lambda_beta = a.lambda_beta;
  cfg.lambda_grid = parse_lambda_grid(a.lambda_grid);
  cfg.max_outer_iter = a.max_iter;

  const auto t0 = std::chrono::steady_clock::now();
  const Manifest m = read_manifest(a.manifest);
  const GridPtr s = make_uniform_grid(m.p), t = make_uniform_grid(m.q);
  const TwoWayDataset data = center_dataset(s, t, read_covariates(m), read_responses(m));
  if (!a.cov_alpha.empty()) {
    SeparableCov cov = cov_from_files(a.cov_alpha, a.cov_beta);
    require(cov.c_alpha.rows() == m.p && cov.c_beta.rows() == m.q, ErrorKind::data,
            "covariance files do not match the manifest grid sizes");
    cov.s_grid = s;
    cov.t_grid = t;
    cfg.covariance = cov;
  }

  const RankRFit r = rank_r_fit(data, a.rank, cfg);
  const FblrFit& first = r.stages.front();
  const fs::path out = a.out_dir;
  write_function_csv(out / "alpha.csv", first.alpha_hat);
  write_function_csv(out / "beta.csv", first.beta_hat);
  write_matrix_csv(out / "field.csv", r.field);
  write_matrix_csv(out / "x_mean.csv", r.x_mean);
  Vec fitted = Vec::Zero(data.n());
  for (const auto& st : r.stages) fitted += st.fitted;
  write_vector_csv(out / "fitted.csv", "fitted", fitted.array() + r.mu_hat);

  std::string lam_a, lam_b, iters, conv;
  bool all_converged = true;
  for (std::size_t k = 0; k < r.stages.size(); ++k) {
    const auto& st = r.stages[k];
    lam_a += (k ? "," : "") + format_double(st.lambda_alpha);
    lam_b += (k ? "," : "") + format_double(st.lambda_beta);
    iters += (k ? "," : "") + std::to_string(st.n_iter);
    all_converged = all_converged && st.converged;
  }
  KeyValues kv{{"command", "fit"},
               {"manifest", a.manifest},
               {"kernel", a.kernel},
               {"penalty", a.penalty},
               {"tuning", cfg.tuning() ? "igcv" : "fixed"},
               {"covariance", a.cov_alpha.empty() ? "estimate" : "files"},
               {"rank", std::to_string(a.rank)},
               {"lambda_alpha", lam_a},
               {"lambda_beta", lam_b},
               {"iterations", iters},
               {"converged", all_converged ? "true" : "false"},
               {"objective", format_double(r.stages.back().objective)},
               {"mu_hat", format_double(r.mu_hat)},
               {"seconds", format_double(seconds_since(t0))},
               {"outputs", "alpha.csv,beta.csv,field.csv,x_mean.csv,fitted.csv"}};
  write_key_values(out / "summary.txt", kv);
  std::cout << "lambda_alpha=" << lam_a << " lambda_beta=" << lam_b << " iterations=" << iters
            << " converged=" << (all_converged ? "true" : "false") << '\n';
  return 0;
}

struct PredictArgs {
  std::string fit_dir;
  std::string manifest;
  std::string out_dir = ".";
};

int run_predict(const PredictArgs& a) {
  const fs::path dir = a.fit_dir;
  const KeyValues kv = read_key_values(dir / "summary.txt");
  const double mu = std::stod(lookup(kv, "mu_hat"));
  const Mat field = read_matrix_csv(dir / "field.csv");
  const Mat x_mean = read_matrix_csv(dir / "x_mean.csv");
  const Manifest m = read_manifest(a.manifest);
  require(m.p == field.rows() && m.q == field.cols(), ErrorKind::data, "covariate grid does not match the fit");
  const GridPtr s = make_uniform_grid(m.p), t = make_uniform_grid(m.q);
  const Mat d = s->weights().asDiagonal() * field * t->weights().asDiagonal();
  const std::vector<Mat> x = read_covariates(m);
  Vec yhat(m.n);
  for (int i = 0; i < m.n; ++i) yhat[i] = mu + (x[i] - x_mean).cwiseProduct(d).sum();
  write_vector_csv(fs::path(a.out_dir) / "predictions.csv", "prediction", yhat);
  std::cout << "wrote " << m.n << " predictions\n";
  return 0;
}

// ---- risk -----------------------------------------------------------------

struct RiskArgs {
  std::string estimate, truth, cov_alpha, cov_beta;
  std::string out_dir;
};

int run_risk(const RiskArgs& a) {
  const Mat est = read_matrix_csv(a.estimate);
  const Mat truth = read_matrix_csv(a.truth);
  const SeparableCov cov = cov_from_files(a.cov_alpha, a.cov_beta);
  require(est.rows() == truth.rows() && est.cols() == truth.cols(), ErrorKind::dimension,
          "estimate and truth fields differ in shape");
  const double risk = excess_risk_oracle(est - truth, cov);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", risk);
  std::cout << buf << '\n';
  if (!a.out_dir.empty()) write_key_values(fs::path(a.out_dir) / "risk.txt", {{"risk", format_double(risk)}});
  return 0;
}

// ---- diag-gamma -----------------------------------------------------------

struct GammaArgs {
  std::string kernel = "sim-bernoulli";
  double rc = 1.0;
  int m = 201;
  int terms = 200;
  int k = 30;
  std::string cov;
  std::string m0_file, mk_file;
  std::string out_dir = ".";
};

int run_diag_gamma(const GammaArgs& a) {
  if (a.k < 1) throw UsageError("--k must be positive");
  QuadForm m0, mk;
  if (!a.m0_file.empty() || !a.mk_file.empty()) {
    if (a.m0_file.empty() || a.mk_file.empty()) throw UsageError("--m0 and --mk go together");
    const Mat a0 = read_matrix_csv(a.m0_file), ak = read_matrix_csv(a.mk_file);
    require(a0.rows() == a0.cols() && ak.rows() == ak.cols() && a0.rows() == ak.rows(), ErrorKind::data,
            "custom forms must be square and of equal size");
    const GridPtr g = make_uniform_grid(static_cast<int>(a0.rows()));
    m0 = QuadForm(g, a0);
    mk = QuadForm(g, ak);
  } else {
    Mat c;
    GridPtr g;
    if (!a.cov.empty()) {
      c = read_matrix_csv(a.cov);
      g = make_uniform_grid(static_cast<int>(c.rows()));
    } else {
      if (a.m < 3) throw UsageError("--m must be at least 3");
      g = make_uniform_grid(a.m);
      c = cosine_covariance(a.rc, a.terms, g).matrix;
    }
    m0 = seminorm0_quadform(c, g);
    mk = rkhs_quadform(kernel_flag(a.kernel), g);
  }
  const GammaSequence gs = gamma_sequence(m0, mk, a.k);
  const int kept = static_cast<int>(gs.gammas.size());
  const bool has_fit = std::isfinite(gs.fitted_r);
  const double slope = has_fit ? -2.0 * gs.fitted_r : 0.0;
  double intercept = 0.0;
  if (has_fit) {
    double sx = 0.0, sy = 0.0;
    for (int j = gs.fit_lo; j <= gs.fit_hi; ++j) {
      sx += std::log(static_cast<double>(j));
      sy += std::log(gs.gammas[j - 1]);
    }
    const int cnt = gs.fit_hi - gs.fit_lo + 1;
    intercept = (sy - slope * sx) / cnt;
  }
  std::ofstream out = [&] {
    fs::create_directories(a.out_dir);
    return std::ofstream(fs::path(a.out_dir) / "gamma.csv");
  }();
  out << "k,gamma,loglog_residual\n";
  for (int j = 1; j <= kept; ++j) {
    const double resid = has_fit ? std::log(gs.gammas[j - 1]) - intercept - slope * std::log(double(j)) : 0.0;
    out << j << ',' << format_double(gs.gammas[j - 1]) << ',' << format_double(resid) << '\n';
  }
  if (kept < a.k)
    std::cout << "note: only " << kept << " finite gamma values available (requested " << a.k << ")\n";
  if (gs.unpenalized > 0) std::cout << "unpenalized directions: " << gs.unpenalized << '\n';
  std::cout << "fitted_r = " << format_double(gs.fitted_r) << '\n';
  write_key_values(fs::path(a.out_dir) / "gamma_summary.txt",
                   {{"command", "diag-gamma"},
                    {"kernel", a.kernel},
                    {"k", std::to_string(kept)},
                    {"fit_lo", std::to_string(gs.fit_lo)},
                    {"fit_hi", std::to_string(gs.fit_hi)},
                    {"unpenalized", std::to_string(gs.unpenalized)},
                    {"fitted_r", format_double(gs.fitted_r)}});
  return 0;
}

// ---- estimate-cov ---------------------------------------------------------

struct CovArgs {
  std::string manifest;
  double ridge_eps = 1e-8;
  int max_iter = 50;
  double tol = 1e-6;
  std::string out_dir = ".";
};

int run_estimate_cov(const CovArgs& a) {
  const Manifest m = read_manifest(a.manifest);
  const GridPtr s = make_uniform_grid(m.p), t = make_uniform_grid(m.q);
  const Vec y = m.y_path.empty() ? Vec(Vec::Zero(m.n)) : read_responses(m);
  const TwoWayDataset data = center_dataset(s, t, read_covariates(m), y);
  const SeparableCov cov = flipflop_estimate(data, {a.ridge_eps, a.max_iter, a.tol});
  const fs::path out = a.out_dir;
  write_matrix_csv(out / "c_alpha.csv", cov.c_alpha);
  write_matrix_csv(out / "c_beta.csv", cov.c_beta);
  write_key_values(out / "summary.txt", {{"command", "estimate-cov"},
                                         {"manifest", a.manifest},
                                         {"scale_convention", cov.scale_convention},
                                         {"iterations", std::to_string(cov.iterations)},
                                         {"converged", cov.converged ? "true" : "false"},
                                         {"outputs", "c_alpha.csv,c_beta.csv"}});
  std::cout << "flip-flop iterations=" << cov.iterations << " converged=" << (cov.converged ? "true" : "false")
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalized functional bilinear regression"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file; flags take precedence");
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 keeps the default)")->check(CLI::NonNegativeNumber);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run the seeded simulation benchmark");
  c_sim->add_option("--setting", sim.settings, "Settings (1-5), comma separated")->delimiter(',');
  c_sim->add_option("--rc", sim.rcs, "Covariance smoothness values")->delimiter(',');
  c_sim->add_option("--n", sim.ns, "Sample sizes")->delimiter(',');
  c_sim->add_option("--methods", sim.methods, "Methods: " + join(benchmark_methods()))->delimiter(',');
  c_sim->add_option("--reps", sim.reps, "Replications per cell");
  c_sim->add_option("--seed", sim.seed, "Base seed");
  c_sim->add_option("--grid-len", sim.grid_len, "Grid points per axis");
  c_sim->add_option("--sigma", sim.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  c_sim->add_option("--lambda-grid", sim.lambda_grid, "lo,hi,count");
  c_sim->add_option("--out-dir", sim.out_dir, "Output directory");
  c_sim->add_flag("--dataset-only", sim.dataset_only, "Write one dataset (first setting, r_c and n) and stop");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit FBLR to a dataset");
  c_fit->add_option("--manifest", fit.manifest, "Dataset manifest")->required();
  c_fit->add_option("--kernel", fit.kernel, "sim-bernoulli | periodic-bernoulli | second-deriv");
  c_fit->add_option("--penalty", fit.penalty, "candidate1 | candidate2 | candidate3");
  c_fit->add_option("--lambda-alpha", fit.lambda_alpha, "Fixed lambda_alpha (tuned when omitted)");
  c_fit->add_option("--lambda-beta", fit.lambda_beta, "Fixed lambda_beta (tuned when omitted)");
  c_fit->add_option("--lambda-grid", fit.lambda_grid, "lo,hi,count");
  c_fit->add_option("--cov-alpha", fit.cov_alpha, "Known C_alpha (CSV); flip-flop estimate when omitted");
  c_fit->add_option("--cov-beta", fit.cov_beta, "Known C_beta (CSV)");
  c_fit->add_option("--rank", fit.rank, "Number of residual refits");
  c_fit->add_option("--max-iter", fit.max_iter, "Maximum outer iterations");
  c_fit->add_option("--out-dir", fit.out_dir, "Output directory");

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Predict responses from a fit directory");
  c_pred->add_option("--fit-dir", pred.fit_dir, "Directory written by fit")->required();
  c_pred->add_option("--manifest", pred.manifest, "Manifest of the covariates")->required();
  c_pred->add_option("--out-dir", pred.out_dir, "Output directory");

  RiskArgs risk;
  auto* c_risk = app.add_subcommand("risk", "Excess prediction risk of an estimated field");
  c_risk->add_option("--estimate", risk.estimate, "Estimated p x q field (CSV)")->required();
  c_risk->add_option("--truth", risk.truth, "True p x q field (CSV)")->required();
  c_risk->add_option("--cov-alpha", risk.cov_alpha, "C_alpha (CSV)")->required();
  c_risk->add_option("--cov-beta", risk.cov_beta, "C_beta (CSV)")->required();
  c_risk->add_option("--out-dir", risk.out_dir, "Also write risk.txt here");

  GammaArgs gam;
  auto* c_gam = app.add_subcommand("diag-gamma", "Generalized eigenvalues of the (M0, MK) pencil");
  c_gam->add_option("--kernel", gam.kernel, "sim-bernoulli | periodic-bernoulli | second-deriv");
  c_gam->add_option("--rc", gam.rc, "Cosine covariance smoothness");
  c_gam->add_option("--m", gam.m, "Grid length");
  c_gam->add_option("--terms", gam.terms, "Cosine covariance terms");
  c_gam->add_option("--k", gam.k, "Number of gamma values");
  c_gam->add_option("--cov", gam.cov, "Covariance matrix (CSV) instead of the cosine model");
  c_gam->add_option("--m0", gam.m0_file, "Custom M0 form (CSV)");
  c_gam->add_option("--mk", gam.mk_file, "Custom MK form (CSV)");
  c_gam->add_option("--out-dir", gam.out_dir, "Output directory");

  CovArgs cov;
  auto* c_cov = app.add_subcommand("estimate-cov", "Flip-flop separable covariance estimate");
  c_cov->add_option("--manifest", cov.manifest, "Dataset manifest")->required();
  c_cov->add_option("--ridge-eps", cov.ridge_eps, "Relative ridge added before inversion");
  c_cov->add_option("--max-iter", cov.max_iter, "Maximum sweeps");
  c_cov->add_option("--tol", cov.tol, "Relative Frobenius tolerance");
  c_cov->add_option("--out-dir", cov.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (threads > 0) set_threads(threads);

  try {
    if (*c_sim) return run_simulate(sim);
    if (*c_fit) return run_fit(fit);
    if (*c_pred) return run_predict(pred);
    if (*c_risk) return run_risk(risk);
    if (*c_gam) return run_diag_gamma(gam);
    if (*c_cov) return run_estimate_cov(cov);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
