#pragma once

// One-way penalized functional linear regression: ridge form, representer
// form, and GCV tuning. Covariates are the rows of an n x m matrix of function
// values on a common grid.

#include <functional>
#include <vector>

#include "fblr/grid.hpp"
#include "fblr/kernels.hpp"

namespace fblr {

struct FlrFit {
  Func1D coef;
  Vec fitted;
  double hat_trace = 0.0;
  double gcv = 0.0;
  double lambda = 0.0;  // meaningless when merged
  bool merged = true;   // tuning factor lives inside the penalty form
  double rcond = 1.0;   // reciprocal condition estimate of the normal matrix
};

struct FlrOptions {
  double max_condition = 1e10;
  // Reported kind when the normal matrix is too ill-conditioned.
  ErrorKind singular_kind = ErrorKind::ill_posed;
};

// Default tuning grid: 25 log-spaced values in [1e-10, 1].
std::vector<double> default_lambda_grid();
std::vector<double> log_grid(double lo, double hi, int count);

double gcv_score(double hat_trace, const Vec& residuals, int n);

// Normal equations of min (1/n)|y - A b|^2 + b' M b with A = X W, kept so
// repeated solves over a penalty family reuse A'A/n and A'y/n.
class RidgeSystem {
 public:
  RidgeSystem(GridPtr grid, Mat x, Vec y);

  int n() const { return static_cast<int>(y_.size()); }
  int m() const { return grid_->size(); }
  const GridPtr& grid() const { return grid_; }
  const Mat& design() const { return a_; }
  const Mat& gram() const { return g_; }
  const Vec& y() const { return y_; }

  FlrFit solve(const Mat& penalty, const FlrOptions& opts = {}) const;

 private:
  GridPtr grid_;
  Mat a_;
  Vec y_;
  Mat g_;
  Vec b_;
};

// beta = (A'A/n + M)^{-1} A'y/n with A_ik = w_k x_i(t_k).
FlrFit flr_fit_ridge_form(const GridPtr& grid, const Mat& x, const Vec& y, const QuadForm& penalty,
                          const FlrOptions& opts = {});

// Sigma = X W G W X', c = (Sigma + n lambda I)^{-1} y, beta = G W X' c.
FlrFit flr_fit_representer(const GridPtr& grid, const Mat& x, const Vec& y, const Mat& kernel_gram,
                           double lambda);

struct LambdaSelection {
  double lambda = 0.0;
  int index = -1;
  FlrFit fit;
  std::vector<double> scores;  // gcv per grid point, +inf where the fit failed
};

// Fits every penalty family member and keeps the GCV minimizer, ties going to
// the larger lambda. Grid points are fitted in parallel; the reduction runs in
// index order.
LambdaSelection select_lambda(const RidgeSystem& sys, const std::function<Mat(double)>& penalty_family,
                              const std::vector<double>& lambdas, const FlrOptions& opts = {});
LambdaSelection select_lambda(const GridPtr& grid, const Mat& x, const Vec& y,
                              const std::function<Mat(double)>& penalty_family,
                              const std::vector<double>& lambdas, const FlrOptions& opts = {});

// Representer-form lambda path for long grids: the n x n Gram is built once
// through kernel_apply and eigendecomposed, so each lambda costs O(n^2).
// With relative_grid the lambdas are multiplied by tr(Gram)/n first; the
// selection then reports the scaled values.
LambdaSelection select_lambda_representer(const GridPtr& grid, const Mat& x, const Vec& y,
                                          const KernelSpec& kernel, const std::vector<double>& lambdas,
                                          bool relative_grid = false);

}  // namespace fblr
