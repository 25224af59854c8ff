#pragma once

// Functional bilinear regression y = mu + int int alpha(s) x(s,t) beta(t):
// the three-term penalty, block coordinate descent, iterative GCV tuning,
// rank-R residual refitting and prediction.

#include <optional>
#include <string>
#include <vector>

#include "fblr/covariance.hpp"
#include "fblr/flr.hpp"
#include "fblr/kernels.hpp"

namespace fblr {

enum class PenaltyMode {
  candidate1,  // la lb |a|_K^2 |b|_K^2
  candidate2,  // la |a|_K^2 |b|_0^2 + lb |a|_0^2 |b|_K^2
  candidate3,  // sum of all three
};

PenaltyMode parse_penalty_mode(const std::string& name);
std::string penalty_mode_name(PenaltyMode mode);

struct FblrForms {
  QuadForm m0s, mks, m0t, mkt;
};

struct FblrConfig {
  // nullopt means tune by iterative GCV over lambda_grid.
  std::optional<double> lambda_alpha;
  std::optional<double> lambda_beta;
  std::vector<double> lambda_grid = default_lambda_grid();
  PenaltyMode penalty_mode = PenaltyMode::candidate3;
  int max_outer_iter = 50;
  double obj_tol = 1e-6;
  double coef_tol = 1e-4;
  KernelSpec kernel_s;
  KernelSpec kernel_t;
  // nullopt means run the flip-flop estimator once on the training data.
  std::optional<SeparableCov> covariance;
  FlipFlopOptions flipflop;
  FlrOptions solver;
  // Unpenalized alternating least squares: zero penalties are allowed and a
  // 1e-10 relative jitter is added for numerical rank only.
  bool unpenalized = false;
  std::optional<Vec> init_alpha;

  bool tuning() const { return !lambda_alpha || !lambda_beta; }
};

struct FblrFit {
  Func1D alpha_hat;
  Func1D beta_hat;  // carries the scale of alpha beta'
  double mu_hat = 0.0;
  Mat x_mean;
  double lambda_alpha = 0.0;
  double lambda_beta = 0.0;
  // Objective after each half-step at the final lambda pair. Under iGCV the
  // trace restarts whenever the selected pair changes, since objectives at
  // different lambdas are not comparable.
  std::vector<double> objective_trace;
  double objective = 0.0;
  Vec fitted;  // training predictions
  int n_iter = 0;
  bool converged = false;
  bool init_fallback = false;
  SeparableCov cov_used;

  Mat coefficient_field() const { return alpha_hat.values * beta_hat.values.transpose(); }
};

FblrForms make_forms(const SeparableCov& cov, const KernelSpec& kernel_s, const KernelSpec& kernel_t);

double penalty_j(const Vec& alpha, const Vec& beta, double la, double lb, const FblrForms& forms,
                 PenaltyMode mode);
// Same, with the four squared norms already evaluated.
double penalty_j_norms(double a0, double ak, double b0, double bk, double la, double lb, PenaltyMode mode);

// (1/n) sum (y_i - alpha' W_s x_i W_t beta)^2 + J on centered data.
double objective(const Vec& alpha, const Vec& beta, const TwoWayDataset& data, double la, double lb,
                 const FblrForms& forms, PenaltyMode mode);

// Penalty on the free block once the other block is fixed. For the beta-step
// the fixed block is alpha, lam_fixed = lambda_alpha and lam_free = lambda_beta.
QuadForm step_penalty_quadform(const Vec& fixed, double lam_fixed, double lam_free, const QuadForm& m0_fixed,
                               const QuadForm& mk_fixed, const QuadForm& m0_free, const QuadForm& mk_free,
                               PenaltyMode mode);

// Rows are x_i' W_s alpha, functions on the t grid (n x q).
Mat tilde_x(const Vec& alpha, const TwoWayDataset& data);

// GCV-tuned ridge on the vectorized design vec(W_s x_i W_t), reshaped to a
// p x q field B with y ~ <W_s x W_t, B>, i.e. B plays the role of alpha beta'.
// The lambda grid is scaled by the mean diagonal of the n x n Gram.
Mat ridge_vec_field(const TwoWayDataset& data, const std::vector<double>& lambda_grid,
                    double* selected_lambda = nullptr);

struct InitResult {
  Func1D alpha;
  bool fallback = false;
};

// Leading left singular function of the ridge field, unit L2 and sign-fixed.
InitResult init_ridge_svd(const TwoWayDataset& data, const std::vector<double>& lambda_grid);

// Unit quadrature L2 norm for alpha with its largest-magnitude entry positive;
// beta absorbs the scalar.
std::pair<Func1D, Func1D> normalize_pair(const Func1D& alpha, const Func1D& beta);

// One exact beta update for fixed alpha (penalty mode, solver options and the
// unpenalized flag come from config).
Vec beta_step(const TwoWayDataset& data, const Vec& alpha, double la, double lb, const FblrForms& forms,
              const FblrConfig& config);

FblrFit fblr_fit(const TwoWayDataset& data, const FblrConfig& config);
FblrFit igcv_fit(const TwoWayDataset& data, const FblrConfig& config);
// Fixed lambdas go to fblr_fit, anything else to igcv_fit.
FblrFit fit(const TwoWayDataset& data, const FblrConfig& config);

struct RankRFit {
  std::vector<FblrFit> stages;
  Mat field;  // sum of alpha beta' over stages
  double mu_hat = 0.0;
  Mat x_mean;
  std::vector<double> train_rss;  // after each stage
};

RankRFit rank_r_fit(const TwoWayDataset& data, int rank, const FblrConfig& config);

double predict(const FblrFit& fit, const Mat& x_new);
Vec predict(const FblrFit& fit, const std::vector<Mat>& x_new);
double predict(const RankRFit& fit, const Mat& x_new);

}  // namespace fblr
