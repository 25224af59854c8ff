#pragma once

// Simulation settings, Karhunen-Loeve data generation, comparator estimators
// and the seeded benchmark loop.

#include <cstdint>
#include <string>
#include <vector>

#include "fblr/fblr.hpp"

namespace fblr {

struct SettingSpec {
  int id = 1;
  double r_c = 1.0;
  int n_eig = 4;
  int k_mis = 0;
  double sigma = 0.5;
  int grid_len = 100;
  int n = 32;
  std::uint64_t seed = 0;
  int cov_terms = 200;
};

// Settings 1-5 with their (n_eig, k_mis); 6 is rejected as unsupported.
SettingSpec setting_spec(int id, double r_c = 1.0, int n = 32, std::uint64_t seed = 0);

// splitmix64 finalizer and the seed schedule built on it.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

// 4 sqrt(2) sum_{i=1}^{n_eig} (-1)^i i^-2 cos((i + k_mis) pi t).
Vec setting_coefficient(int n_eig, int k_mis, const Grid1D& grid);

struct Truth {
  bool rank_one = true;
  Vec alpha0, beta0;  // rank-one settings
  Mat field;          // alpha0 beta0' or the two-term sum
};

Truth coefficients_for_setting(const SettingSpec& spec, const GridPtr& s_grid, const GridPtr& t_grid);

// x_i = sum_{jk} sqrt(s_j^a s_k^b) z_jk phi_j^a (phi_k^b)'; sample i draws its
// scores from a generator seeded with derive_seed(seed, {i}).
std::vector<Mat> sample_gp_separable(const SpectralModel& s_model, const SpectralModel& t_model, int n,
                                     std::uint64_t seed);

// y_i = <field, W_s x_i W_t> + sigma eps_i.
Vec generate_response(const std::vector<Mat>& x, const Mat& field, const Grid1D& s_grid, const Grid1D& t_grid,
                      double sigma, std::uint64_t seed);

struct SimData {
  TwoWayDataset data;  // centered
  Truth truth;
  SeparableCov true_cov;
};

SimData simulate_setting(const SettingSpec& spec);

enum class VecMode { vec, vecT, vecStar, vecStarT };

VecMode parse_vec_mode(const std::string& name);
std::string vec_mode_name(VecMode mode);
// position u of the vectorized entry -> column-major flat index of x.
std::vector<int> vectorize_index(int p, int q, VecMode mode);
Vec vectorize(const Mat& x, VecMode mode);
Mat unvectorize(const Vec& v, int p, int q, VecMode mode);

Mat ridge_vec_fit(const TwoWayDataset& data, const std::vector<double>& lambda_grid);

// Unpenalized alternating least squares.
FblrFit blr_fit(const TwoWayDataset& data, FblrConfig config);

struct FlrVecFit {
  LambdaSelection selection;
  Mat field;  // p x q field acting like alpha beta' under the quadrature
};

FlrVecFit flr_vec_fit(const TwoWayDataset& data, VecMode mode, const KernelSpec& kernel,
                      const std::vector<double>& lambda_grid);

struct CvOptions {
  int folds = 5;
  int grid_stride = 3;  // every stride-th value of the lambda grid per axis
  std::uint64_t seed = 0;
};

// Exhaustive 2D-grid K-fold CV over fixed-lambda fits, then a refit on all
// data at the chosen pair.
FblrFit cv_fit(const TwoWayDataset& data, const FblrConfig& config, const CvOptions& opts);

struct BenchmarkConfig {
  std::vector<int> settings{1};
  std::vector<double> r_cs{1.0};
  std::vector<int> ns{32, 64, 128, 256};
  std::vector<std::string> methods{"fblr"};
  int reps = 20;
  std::uint64_t base_seed = 42;
  int grid_len = 100;
  double sigma = 0.5;
  std::vector<double> lambda_grid = default_lambda_grid();
};

// Method names accepted by run_benchmark.
const std::vector<std::string>& benchmark_methods();

struct BenchmarkRow {
  std::string method;
  int setting = 0;
  double r_c = 0.0;
  int n = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double risk = 0.0;
  double seconds = 0.0;
  bool ok = false;
  std::string error;
  int iterations = 0;
  bool converged = false;
  double lambda_alpha = 0.0;
  double lambda_beta = 0.0;
  // Largest relative increase between consecutive objective_trace entries.
  double max_trace_increase = 0.0;
};

struct BenchmarkAggregate {
  std::string method;
  int setting = 0;
  double r_c = 0.0;
  int n = 0;
  int count = 0;
  int failures = 0;
  double mean_risk = 0.0;
  double se_risk = 0.0;
  double mean_seconds = 0.0;
};

struct BenchmarkSlope {
  std::string method;
  int setting = 0;
  double r_c = 0.0;
  double slope = 0.0;
  double stderr_ = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<BenchmarkAggregate> aggregates;
  std::vector<BenchmarkSlope> slopes;

  const BenchmarkAggregate* find(const std::string& method, int setting, double r_c, int n) const;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& config);
// Recomputes aggregates and slopes from rows.
void aggregate_benchmark(BenchmarkResult& result);

struct RateSlope {
  double slope = 0.0;
  double stderr_ = 0.0;
};

// Least squares of log2(mean risk) on log2(n).
RateSlope fit_rate_slope(const std::vector<int>& ns, const std::vector<double>& risks);

}  // namespace fblr
