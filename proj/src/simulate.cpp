#include "fblr/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

#include "fblr/parallel.hpp"

namespace fblr {

SettingSpec setting_spec(int id, double r_c, int n, std::uint64_t seed) {
  SettingSpec s;
  s.id = id;
  s.r_c = r_c;
  s.n = n;
  s.seed = seed;
  switch (id) {
    case 1: s.n_eig = 4, s.k_mis = 0; break;
    case 2: s.n_eig = 200, s.k_mis = 0; break;
    case 3: s.n_eig = 4, s.k_mis = 4; break;
    case 4: s.n_eig = 200, s.k_mis = 4; break;
    case 5: s.n_eig = 4, s.k_mis = 0; break;
    case 6:
      throw Error(ErrorKind::unsupported_setting, "setting 6 needs an external coefficient surface");
    default:
      throw Error(ErrorKind::unsupported_setting, "unknown setting " + std::to_string(id));
  }
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

Vec setting_coefficient(int n_eig, int k_mis, const Grid1D& grid) {
  Vec out = Vec::Zero(grid.size());
  for (int i = 1; i <= n_eig; ++i) {
    const double c = (i % 2 == 0 ? 1.0 : -1.0) / (static_cast<double>(i) * i);
    for (int k = 0; k < grid.size(); ++k) out[k] += c * std::cos((i + k_mis) * std::numbers::pi * grid.point(k));
  }
  return 4.0 * std::numbers::sqrt2 * out;
}

Truth coefficients_for_setting(const SettingSpec& spec, const GridPtr& s_grid, const GridPtr& t_grid) {
  Truth t;
  if (spec.id >= 1 && spec.id <= 4) {
    t.alpha0 = setting_coefficient(spec.n_eig, spec.k_mis, *s_grid);
    t.beta0 = setting_coefficient(spec.n_eig, spec.k_mis, *t_grid);
    t.field = t.alpha0 * t.beta0.transpose();
    return t;
  }
  if (spec.id == 5) {
    t.rank_one = false;
    const Vec a1 = setting_coefficient(4, 0, *s_grid), b1 = setting_coefficient(4, 0, *t_grid);
    const Vec a2 = setting_coefficient(4, 4, *s_grid), b2 = setting_coefficient(4, 4, *t_grid);
    t.field = a1 * b1.transpose() + 0.4 * a2 * b2.transpose();
    return t;
  }
  throw Error(ErrorKind::unsupported_setting, "no coefficient for setting " + std::to_string(spec.id));
}

std::vector<Mat> sample_gp_separable(const SpectralModel& s_model, const SpectralModel& t_model, int n,
                                     std::uint64_t seed) {
  require(n >= 0, ErrorKind::invalid_argument, "negative sample count");
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = derive_seed(seed, {static_cast<std::uint64_t>(i)});
  return sample_kl_batch(s_model.factor(), t_model.factor(), seeds);
}

Vec generate_response(const std::vector<Mat>& x, const Mat& field, const Grid1D& s_grid, const Grid1D& t_grid,
                      double sigma, std::uint64_t seed) {
  require(sigma >= 0.0, ErrorKind::invalid_argument, "sigma must be nonnegative");
  require(field.rows() == s_grid.size() && field.cols() == t_grid.size(), ErrorKind::dimension,
          "coefficient field does not match grids");
  const Mat d = s_grid.weights().asDiagonal() * field * t_grid.weights().asDiagonal();
  Vec y = frobenius_batch(x, d);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += sigma * normal(gen);
  return y;
}

SimData simulate_setting(const SettingSpec& spec) {
  require(spec.n >= 2, ErrorKind::invalid_argument, "simulation needs n >= 2");
  const GridPtr grid = make_uniform_grid(spec.grid_len);
  const CosineCovariance cov = cosine_covariance(spec.r_c, spec.cov_terms, grid);
  SimData out;
  out.truth = coefficients_for_setting(spec, grid, grid);
  std::vector<Mat> x = sample_gp_separable(cov.spectral, cov.spectral, spec.n, derive_seed(spec.seed, {1}));
  Vec y = generate_response(x, out.truth.field, *grid, *grid, spec.sigma, derive_seed(spec.seed, {2}));
  out.data = center_dataset(grid, grid, std::move(x), std::move(y));
  out.true_cov.s_grid = grid;
  out.true_cov.t_grid = grid;
  out.true_cov.c_alpha = cov.matrix;
  out.true_cov.c_beta = cov.matrix;
  return out;
}

VecMode parse_vec_mode(const std::string& name) {
  if (name == "vec") return VecMode::vec;
  if (name == "vecT") return VecMode::vecT;
  if (name == "vecStar") return VecMode::vecStar;
  if (name == "vecStarT") return VecMode::vecStarT;
  throw Error(ErrorKind::invalid_argument, "unknown vectorization '" + name + "'");
}

std::string vec_mode_name(VecMode mode) {
  switch (mode) {
    case VecMode::vec: return "vec";
    case VecMode::vecT: return "vecT";
    case VecMode::vecStar: return "vecStar";
    case VecMode::vecStarT: return "vecStarT";
  }
  return "unknown";
}

std::vector<int> vectorize_index(int p, int q, VecMode mode) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(p) * q);
  const bool transpose = mode == VecMode::vecT || mode == VecMode::vecStarT;
  const bool flip = mode == VecMode::vecStar || mode == VecMode::vecStarT;
  // Walk the columns of x (or of x' when transposed); odd 0-based = even 1-based.
  const int outer = transpose ? p : q, inner = transpose ? q : p;
  for (int c = 0; c < outer; ++c) {
    for (int r0 = 0; r0 < inner; ++r0) {
      const int r = (flip && c % 2 == 1) ? inner - 1 - r0 : r0;
      const int row = transpose ? c : r, col = transpose ? r : c;
      idx.push_back(col * p + row);
    }
  }
  return idx;
}

Vec vectorize(const Mat& x, VecMode mode) {
  const std::vector<int> idx = vectorize_index(static_cast<int>(x.rows()), static_cast<int>(x.cols()), mode);
  Vec v(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t u = 0; u < idx.size(); ++u) v[u] = x.data()[idx[u]];
  return v;
}

Mat unvectorize(const Vec& v, int p, int q, VecMode mode) {
  require(v.size() == static_cast<Eigen::Index>(p) * q, ErrorKind::dimension, "vector length is not p*q");
  const std::vector<int> idx = vectorize_index(p, q, mode);
  Mat x(p, q);
  for (std::size_t u = 0; u < idx.size(); ++u) x.data()[idx[u]] = v[u];
  return x;
}

Mat ridge_vec_fit(const TwoWayDataset& data, const std::vector<double>& lambda_grid) {
  return ridge_vec_field(data, lambda_grid);
}

FblrFit blr_fit(const TwoWayDataset& data, FblrConfig config) {
  config.unpenalized = true;
  config.lambda_alpha = 0.0;
  config.lambda_beta = 0.0;
  return fblr_fit(data, config);
}

FlrVecFit flr_vec_fit(const TwoWayDataset& data, VecMode mode, const KernelSpec& kernel,
                      const std::vector<double>& lambda_grid) {
  require(data.centered, ErrorKind::precondition, "FLR after vectorization needs centered data");
  const int p = data.p(), q = data.q(), n = data.n();
  const GridPtr grid = make_uniform_grid(p * q);
  const std::vector<int> idx = vectorize_index(p, q, mode);
  Mat x(n, p * q);
  parallel_for(n, [&](int i) {
    const double* src = data.x[i].data();
    for (int u = 0; u < p * q; ++u) x(i, u) = src[idx[u]];
  });
  FlrVecFit out;
  out.selection = select_lambda_representer(grid, x, data.y, kernel, lambda_grid, true);

  const Vec& wu = grid->weights();
  const Vec& ws = data.s_grid->weights();
  const Vec& wt = data.t_grid->weights();
  out.field.resize(p, q);
  for (int u = 0; u < p * q; ++u) {
    const int j = idx[u] % p, k = idx[u] / p;
    out.field(j, k) = wu[u] * out.selection.fit.coef.values[u] / (ws[j] * wt[k]);
  }
  return out;
}

namespace {

TwoWayDataset subset(const TwoWayDataset& data, const std::vector<int>& rows) {
  std::vector<Mat> x;
  Vec y(static_cast<Eigen::Index>(rows.size()));
  x.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    x.push_back(data.x[rows[k]]);
    y[k] = data.y[rows[k]];
  }
  return center_dataset(data.s_grid, data.t_grid, std::move(x), std::move(y));
}

}  // namespace

FblrFit cv_fit(const TwoWayDataset& data, const FblrConfig& config, const CvOptions& opts) {
  require(opts.folds >= 2 && opts.folds <= data.n(), ErrorKind::invalid_argument, "bad fold count");
  require(opts.grid_stride >= 1, ErrorKind::invalid_argument, "grid stride must be positive");
  std::vector<double> lams;
  for (std::size_t k = 0; k < config.lambda_grid.size(); k += opts.grid_stride) lams.push_back(config.lambda_grid[k]);
  const int nl = static_cast<int>(lams.size());
  const int n = data.n();

  // Fold assignment from a seeded hash order.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return derive_seed(opts.seed, {static_cast<std::uint64_t>(a)}) <
           derive_seed(opts.seed, {static_cast<std::uint64_t>(b)});
  });
  std::vector<int> fold(n);
  for (int k = 0; k < n; ++k) fold[order[k]] = k % opts.folds;

  Mat sse = Mat::Zero(nl, nl);
  for (int f = 0; f < opts.folds; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (fold[i] == f ? test : train).push_back(i);
    const TwoWayDataset tr = subset(data, train);
    FblrConfig cfg = config;
    if (!cfg.covariance) cfg.covariance = flipflop_estimate(tr, cfg.flipflop);
    if (!cfg.init_alpha) cfg.init_alpha = init_ridge_svd(tr, cfg.lambda_grid).alpha.values;

    Mat fold_sse(nl, nl);
    parallel_for(nl * nl, [&](int cell) {
      const int a = cell / nl, b = cell % nl;
      FblrConfig c = cfg;
      c.lambda_alpha = lams[a];
      c.lambda_beta = lams[b];
      try {
        const FblrFit fit = fblr_fit(tr, c);
        double s = 0.0;
        // Training folds were centered inside the centered coordinates of data.
        for (int i : test) {
          const double r = data.y[i] - predict(fit, data.x[i]);
          s += r * r;
        }
        fold_sse(a, b) = s;
      } catch (const Error&) {
        fold_sse(a, b) = std::numeric_limits<double>::infinity();
      }
    });
    sse += fold_sse;
  }

  int best_a = -1, best_b = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < nl; ++a)
    for (int b = 0; b < nl; ++b)
      if (sse(a, b) <= best && std::isfinite(sse(a, b))) {
        best = sse(a, b);
        best_a = a;
        best_b = b;
      }
  require(best_a >= 0, ErrorKind::no_valid_lambda, "cross validation found no valid lambda pair");

  FblrConfig final_cfg = config;
  final_cfg.lambda_alpha = lams[best_a];
  final_cfg.lambda_beta = lams[best_b];
  return fblr_fit(data, final_cfg);
}

const std::vector<std::string>& benchmark_methods() {
  static const std::vector<std::string> names{"fblr",    "fblr-est", "fblr-cv",    "fblr-r2",     "ridge",
                                              "blr",     "flr-vec",  "flr-vecT",   "flr-vecStar", "flr-vecStarT"};
  return names;
}

const BenchmarkAggregate* BenchmarkResult::find(const std::string& method, int setting, double r_c, int n) const {
  for (const auto& a : aggregates)
    if (a.method == method && a.setting == setting && a.r_c == r_c && a.n == n) return &a;
  return nullptr;
}

namespace {

double max_relative_increase(const std::vector<double>& trace) {
  double worst = 0.0;
  for (std::size_t k = 1; k < trace.size(); ++k)
    worst = std::max(worst, (trace[k] - trace[k - 1]) / std::max(std::abs(trace[k - 1]), 1e-300));
  return worst;
}

void run_method(const std::string& method, const SimData& sim, const BenchmarkConfig& bc, std::uint64_t seed,
                BenchmarkRow& row) {
  FblrConfig cfg;
  cfg.lambda_grid = bc.lambda_grid;
  cfg.covariance = sim.true_cov;
  Mat field;
  const auto take = [&](const FblrFit& f) {
    field = f.coefficient_field();
    row.iterations = f.n_iter;
    row.converged = f.converged;
    row.lambda_alpha = f.lambda_alpha;
    row.lambda_beta = f.lambda_beta;
    row.max_trace_increase = max_relative_increase(f.objective_trace);
  };

  if (method == "fblr") {
    take(igcv_fit(sim.data, cfg));
  } else if (method == "fblr-est") {
    cfg.covariance.reset();
    take(igcv_fit(sim.data, cfg));
  } else if (method == "fblr-cv") {
    take(cv_fit(sim.data, cfg, CvOptions{5, 3, derive_seed(seed, {7})}));
  } else if (method == "fblr-r2") {
    const RankRFit r = rank_r_fit(sim.data, 2, cfg);
    field = r.field;
    row.converged = true;
    for (const auto& s : r.stages) {
      row.iterations += s.n_iter;
      row.converged = row.converged && s.converged;
      row.max_trace_increase = std::max(row.max_trace_increase, max_relative_increase(s.objective_trace));
    }
  } else if (method == "ridge") {
    field = ridge_vec_fit(sim.data, bc.lambda_grid);
    row.converged = true;
  } else if (method == "blr") {
    take(blr_fit(sim.data, cfg));
  } else if (method.rfind("flr-", 0) == 0) {
    const FlrVecFit f = flr_vec_fit(sim.data, parse_vec_mode(method.substr(4)), KernelSpec::sim_bernoulli(),
                                    bc.lambda_grid);
    field = f.field;
    row.converged = true;
    row.lambda_alpha = f.selection.lambda;
  } else {
    throw Error(ErrorKind::invalid_argument, "unknown method '" + method + "'");
  }
  row.risk = excess_risk_oracle(field - sim.truth.field, sim.true_cov);
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& bc) {
  require(!bc.settings.empty() && !bc.r_cs.empty() && !bc.ns.empty() && !bc.methods.empty(),
          ErrorKind::invalid_argument, "benchmark lists must be nonempty");
  require(bc.reps >= 1, ErrorKind::invalid_argument, "reps must be positive");
  for (const auto& m : bc.methods)
    require(std::find(benchmark_methods().begin(), benchmark_methods().end(), m) != benchmark_methods().end(),
            ErrorKind::invalid_argument, "unknown method '" + m + "'");
  for (int s : bc.settings) setting_spec(s);

  struct Task {
    int setting;
    double r_c;
    int n;
    int rep;
  };
  std::vector<Task> tasks;
  for (int s : bc.settings)
    for (double rc : bc.r_cs)
      for (int n : bc.ns)
        for (int rep = 0; rep < bc.reps; ++rep) tasks.push_back({s, rc, n, rep});

  const std::size_t nm = bc.methods.size();
  std::vector<BenchmarkRow> rows(tasks.size() * nm);
  parallel_for(static_cast<int>(tasks.size()), [&](int ti) {
    const Task& t = tasks[ti];
    const std::uint64_t seed =
        derive_seed(bc.base_seed, {static_cast<std::uint64_t>(t.setting),
                                   static_cast<std::uint64_t>(std::llround(t.r_c * 1000.0)),
                                   static_cast<std::uint64_t>(t.n), static_cast<std::uint64_t>(t.rep)});
    SettingSpec spec = setting_spec(t.setting, t.r_c, t.n, seed);
    spec.grid_len = bc.grid_len;
    spec.sigma = bc.sigma;
    const SimData sim = simulate_setting(spec);
    for (std::size_t k = 0; k < nm; ++k) {
      BenchmarkRow& row = rows[ti * nm + k];
      row.method = bc.methods[k];
      row.setting = t.setting;
      row.r_c = t.r_c;
      row.n = t.n;
      row.rep = t.rep;
      row.seed = seed;
      const auto start = std::chrono::steady_clock::now();
      try {
        run_method(row.method, sim, bc, seed, row);
        row.ok = std::isfinite(row.risk);
        if (!row.ok) row.error = "non-finite risk";
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  });

  BenchmarkResult result;
  result.rows = std::move(rows);
  aggregate_benchmark(result);
  return result;
}

void aggregate_benchmark(BenchmarkResult& result) {
  using Key = std::tuple<std::string, int, double, int>;
  std::map<Key, std::vector<const BenchmarkRow*>> cells;
  std::vector<Key> order;
  for (const auto& r : result.rows) {
    Key k{r.method, r.setting, r.r_c, r.n};
    if (!cells.count(k)) order.push_back(k);
    cells[k].push_back(&r);
  }
  result.aggregates.clear();
  result.slopes.clear();
  for (const auto& k : order) {
    BenchmarkAggregate a;
    std::tie(a.method, a.setting, a.r_c, a.n) = k;
    std::vector<double> risks;
    double secs = 0.0;
    for (const BenchmarkRow* r : cells[k]) {
      secs += r->seconds;
      if (r->ok)
        risks.push_back(r->risk);
      else
        ++a.failures;
    }
    a.count = static_cast<int>(risks.size());
    a.mean_seconds = secs / static_cast<double>(cells[k].size());
    if (a.count > 0) {
      double sum = 0.0;
      for (double v : risks) sum += v;
      a.mean_risk = sum / a.count;
      double ss = 0.0;
      for (double v : risks) ss += (v - a.mean_risk) * (v - a.mean_risk);
      a.se_risk = a.count > 1 ? std::sqrt(ss / (a.count - 1) / a.count) : 0.0;
    } else {
      a.mean_risk = std::numeric_limits<double>::quiet_NaN();
    }
    result.aggregates.push_back(a);
  }

  // One slope per (method, setting, r_c) curve with at least three sizes.
  using Curve = std::tuple<std::string, int, double>;
  std::map<Curve, std::pair<std::vector<int>, std::vector<double>>> curves;
  std::vector<Curve> corder;
  for (const auto& a : result.aggregates) {
    Curve c{a.method, a.setting, a.r_c};
    if (!curves.count(c)) corder.push_back(c);
    if (a.count > 0 && a.mean_risk > 0.0) {
      curves[c].first.push_back(a.n);
      curves[c].second.push_back(a.mean_risk);
    }
  }
  for (const auto& c : corder) {
    const auto& [ns, risks] = curves[c];
    if (ns.size() < 3) continue;
    const RateSlope rs = fit_rate_slope(ns, risks);
    BenchmarkSlope s;
    std::tie(s.method, s.setting, s.r_c) = c;
    s.slope = rs.slope;
    s.stderr_ = rs.stderr_;
    result.slopes.push_back(s);
  }
}

RateSlope fit_rate_slope(const std::vector<int>& ns, const std::vector<double>& risks) {
  require(ns.size() == risks.size(), ErrorKind::dimension, "sizes and risks differ in length");
  require(ns.size() >= 3, ErrorKind::invalid_argument, "rate slope needs at least three sample sizes");
  const int k = static_cast<int>(ns.size());
  Vec x(k), y(k);
  for (int i = 0; i < k; ++i) {
    require(ns[i] > 0 && risks[i] > 0.0, ErrorKind::invalid_argument, "rate slope needs positive n and risk");
    x[i] = std::log2(static_cast<double>(ns[i]));
    y[i] = std::log2(risks[i]);
  }
  const double mx = x.mean(), my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  require(sxx > 0.0, ErrorKind::invalid_argument, "rate slope needs distinct sample sizes");
  RateSlope out;
  out.slope = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
  const double intercept = my - out.slope * mx;
  const double rss = (y.array() - intercept - out.slope * x.array()).square().sum();
  out.stderr_ = k > 2 ? std::sqrt(rss / (k - 2) / sxx) : 0.0;
  return out;
}

}  // namespace fblr
