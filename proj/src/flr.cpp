#include "fblr/flr.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fblr/parallel.hpp"

namespace fblr {

namespace {

Mat weighted_rows(const Grid1D& grid, const Mat& x) {
  require(x.cols() == grid.size(), ErrorKind::dimension, "covariate length does not match grid");
  return x * grid.weights().asDiagonal();
}

Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

std::vector<double> log_grid(double lo, double hi, int count) {
  require(lo > 0.0 && hi >= lo && count >= 1, ErrorKind::invalid_argument, "lambda grid needs 0 < lo <= hi, count >= 1");
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (int k = 0; k < count; ++k) out[k] = std::pow(10.0, a + (b - a) * k / (count - 1));
  return out;
}

std::vector<double> default_lambda_grid() { return log_grid(1e-10, 1.0, 25); }

double gcv_score(double hat_trace, const Vec& residuals, int n) {
  require(n >= 1, ErrorKind::invalid_argument, "gcv needs n >= 1");
  require(hat_trace < n, ErrorKind::degenerate_gcv, "hat trace reaches n");
  const double denom = 1.0 - hat_trace / n;
  return (residuals.squaredNorm() / n) / (denom * denom);
}

RidgeSystem::RidgeSystem(GridPtr grid, Mat x, Vec y) : grid_(std::move(grid)), y_(std::move(y)) {
  require(x.rows() == y_.size(), ErrorKind::dimension, "number of covariates and responses differ");
  require(y_.size() >= 1, ErrorKind::invalid_argument, "empty regression");
  a_ = weighted_rows(*grid_, x);
  const double n = static_cast<double>(y_.size());
  g_ = symmetrize(a_.transpose() * a_) / n;
  b_ = a_.transpose() * y_ / n;
}

FlrFit RidgeSystem::solve(const Mat& penalty, const FlrOptions& opts) const {
  require(penalty.rows() == m() && penalty.cols() == m(), ErrorKind::dimension, "penalty does not match grid");
  const Mat s = symmetrize(g_ + penalty);
  Eigen::LDLT<Mat> ldlt(s);
  const double rc = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (!(rc * opts.max_condition >= 1.0)) {
    std::ostringstream msg;
    msg << "normal matrix condition estimate " << (rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity())
        << " exceeds " << opts.max_condition;
    throw Error(opts.singular_kind, msg.str());
  }
  FlrFit fit;
  fit.coef = Func1D(grid_, ldlt.solve(b_));
  fit.fitted = a_ * fit.coef.values;
  fit.hat_trace = ldlt.solve(g_).trace();
  fit.rcond = rc;
  fit.gcv = gcv_score(fit.hat_trace, y_ - fit.fitted, n());
  return fit;
}

FlrFit flr_fit_ridge_form(const GridPtr& grid, const Mat& x, const Vec& y, const QuadForm& penalty,
                          const FlrOptions& opts) {
  return RidgeSystem(grid, x, y).solve(penalty.m, opts);
}

FlrFit flr_fit_representer(const GridPtr& grid, const Mat& x, const Vec& y, const Mat& kernel_gram,
                           double lambda) {
  require(lambda > 0.0, ErrorKind::invalid_argument, "representer form needs lambda > 0");
  require(x.rows() == y.size(), ErrorKind::dimension, "number of covariates and responses differ");
  require(kernel_gram.rows() == grid->size() && kernel_gram.cols() == grid->size(), ErrorKind::dimension,
          "kernel Gram does not match grid");
  const int n = static_cast<int>(y.size());
  const Mat a = weighted_rows(*grid, x);
  const Mat ka = kernel_gram * a.transpose();  // m x n
  const Mat sigma = symmetrize(a * ka);
  Mat s = sigma;
  s.diagonal().array() += n * lambda;
  Eigen::LDLT<Mat> ldlt(s);
  require(ldlt.info() == Eigen::Success, ErrorKind::numeric, "representer system factorization failed");
  const Vec c = ldlt.solve(y);

  FlrFit fit;
  fit.coef = Func1D(grid, ka * c);
  fit.fitted = sigma * c;
  fit.hat_trace = ldlt.solve(sigma).trace();
  fit.gcv = gcv_score(fit.hat_trace, y - fit.fitted, n);
  fit.lambda = lambda;
  fit.merged = false;
  fit.rcond = ldlt.rcond();
  return fit;
}

namespace {

LambdaSelection reduce_scores(std::vector<double> scores, const std::vector<double>& lambdas) {
  LambdaSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!std::isfinite(scores[k])) continue;
    const bool better = scores[k] < best;
    const bool tie_larger = scores[k] == best && lambdas[k] > sel.lambda;
    if (better || tie_larger) {
      best = scores[k];
      sel.index = static_cast<int>(k);
      sel.lambda = lambdas[k];
    }
  }
  sel.scores = std::move(scores);
  require(sel.index >= 0, ErrorKind::no_valid_lambda, "no lambda on the grid gave a valid fit");
  return sel;
}

}  // namespace

LambdaSelection select_lambda(const RidgeSystem& sys, const std::function<Mat(double)>& penalty_family,
                              const std::vector<double>& lambdas, const FlrOptions& opts) {
  require(!lambdas.empty(), ErrorKind::invalid_argument, "empty lambda grid");
  const int count = static_cast<int>(lambdas.size());
  std::vector<FlrFit> fits(count);
  std::vector<double> scores(count, std::numeric_limits<double>::infinity());
  parallel_for(count, [&](int k) {
    try {
      fits[k] = sys.solve(penalty_family(lambdas[k]), opts);
      fits[k].lambda = lambdas[k];
      scores[k] = fits[k].gcv;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ill_posed && e.kind() != ErrorKind::degenerate_gcv &&
          e.kind() != opts.singular_kind)
        throw;
    }
  });
  LambdaSelection sel = reduce_scores(std::move(scores), lambdas);
  sel.fit = std::move(fits[sel.index]);
  return sel;
}

LambdaSelection select_lambda(const GridPtr& grid, const Mat& x, const Vec& y,
                              const std::function<Mat(double)>& penalty_family,
                              const std::vector<double>& lambdas, const FlrOptions& opts) {
  return select_lambda(RidgeSystem(grid, x, y), penalty_family, lambdas, opts);
}

LambdaSelection select_lambda_representer(const GridPtr& grid, const Mat& x, const Vec& y,
                                          const KernelSpec& kernel, const std::vector<double>& lambda_grid,
                                          bool relative_grid) {
  require(!lambda_grid.empty(), ErrorKind::invalid_argument, "empty lambda grid");
  require(x.rows() == y.size(), ErrorKind::dimension, "number of covariates and responses differ");
  const int n = static_cast<int>(y.size());
  const Mat a = weighted_rows(*grid, x);
  Mat ka(grid->size(), n);
  parallel_for(n, [&](int i) { ka.col(i) = kernel_apply(kernel, *grid, a.row(i).transpose()); });
  const Mat sigma = symmetrize(a * ka);
  std::vector<double> lambdas = lambda_grid;
  if (relative_grid) {
    const double scale = sigma.trace() / n;
    require(scale > 0.0, ErrorKind::numeric, "representer Gram has zero trace");
    for (double& l : lambdas) l *= scale;
  }

  Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
  const Vec ev = es.eigenvalues().cwiseMax(0.0);
  const Mat& u = es.eigenvectors();
  const Vec uy = u.transpose() * y;

  std::vector<double> scores(lambdas.size(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0)) continue;
    const Vec shrink = ev.array() / (ev.array() + n * lambdas[k]);
    const double tr = shrink.sum();
    if (tr >= n) continue;
    const Vec resid = u * ((1.0 - shrink.array()) * uy.array()).matrix();
    scores[k] = gcv_score(tr, resid, n);
  }
  LambdaSelection sel = reduce_scores(std::move(scores), lambdas);

  const Vec shrink = ev.array() / (ev.array() + n * sel.lambda);
  const Vec c = u * (uy.array() / (ev.array() + n * sel.lambda)).matrix();
  sel.fit.coef = Func1D(grid, ka * c);
  sel.fit.fitted = u * (shrink.array() * uy.array()).matrix();
  sel.fit.hat_trace = shrink.sum();
  sel.fit.gcv = sel.scores[sel.index];
  sel.fit.lambda = sel.lambda;
  sel.fit.merged = false;
  return sel;
}

}  // namespace fblr
