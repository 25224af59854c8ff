#pragma once

// Covariance-induced semi-norms, flip-flop separable covariance estimation,
// the closed-form excess prediction risk, and the gamma_k spectral diagnostic.

#include <optional>
#include <string>

#include "fblr/grid.hpp"

namespace fblr {

inline constexpr const char* kUnitBetaTrace = "unit-beta-trace";

// Cov(x(s1,t1), x(s2,t2)) = c_alpha(s1,s2) c_beta(t1,t2) on the grids.
struct SeparableCov {
  GridPtr s_grid;
  GridPtr t_grid;
  Mat c_alpha;
  Mat c_beta;
  std::string scale_convention = "as-given";
  int iterations = 0;
  bool converged = true;

  QuadForm m0_alpha() const;
  QuadForm m0_beta() const;
};

// M0 = W C W so that f' M0 f discretizes the covariance semi-norm ||f||_0^2.
QuadForm seminorm0_quadform(const Mat& c, const GridPtr& grid);

struct FlipFlopOptions {
  double ridge_eps = 1e-8;
  int max_iter = 50;
  double tol = 1e-6;
};

// Alternating estimator of (C_alpha, C_beta). Starts from C_beta = I / h_t
// unless init_c_beta is given, and rescales after each sweep so that
// trace(C_beta) * h_t = 1.
SeparableCov flipflop_estimate(const TwoWayDataset& data, const FlipFlopOptions& opts = {},
                               const std::optional<Mat>& init_c_beta = std::nullopt);

// trace((W_s C_a W_s) D (W_t C_b W_t) D') for a p x q coefficient difference D.
double excess_risk_oracle(const Mat& delta, const SeparableCov& cov);
double excess_risk_oracle(const Vec& alpha_hat, const Vec& beta_hat, const Vec& alpha0, const Vec& beta0,
                          const SeparableCov& cov);

struct GammaOptions {
  int k_min = 3;
  int fit_k_max = 30;
  double rank_tol = 1e-10;
};

struct GammaSequence {
  Vec gammas;        // descending, finite
  double fitted_r = 0.0;
  Mat basis;         // columns omega_k with ||omega_k||_0 = 1, ||omega_k||_K^2 = 1/gamma_k
  int unpenalized = 0;   // directions with ||f||_K = 0 and ||f||_0 > 0
  Mat unpenalized_basis;
  int fit_lo = 0, fit_hi = 0;  // 1-based k range used for fitted_r
};

// Generalized eigenvalues of the pencil (M0, MK): ||f||_0^2 = sum f_k^2 and
// ||f||_K^2 = sum f_k^2 / gamma_k. Computed on the range of R = M0 + MK as
// gamma = s / (1 - s) where s are the eigenvalues of M0 in the R-metric.
GammaSequence gamma_sequence(const QuadForm& m0, const QuadForm& mk, int k_max, const GammaOptions& opts = {});

// Least-squares slope of log(values) on log(k), k = lo..hi (1-based).
double loglog_slope(const Vec& values, int lo, int hi);

}  // namespace fblr
