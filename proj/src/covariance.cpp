#include "fblr/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace fblr {

namespace {

Mat ridge_inverse(const Mat& c, double ridge_eps) {
  const Eigen::Index d = c.rows();
  const double eps = ridge_eps * c.trace() / static_cast<double>(d);
  Mat a = 0.5 * (c + c.transpose());
  a.diagonal().array() += eps;
  Eigen::LLT<Mat> llt(a);
  require(llt.info() == Eigen::Success, ErrorKind::numeric, "flip-flop: covariance factor not positive definite");
  return llt.solve(Mat::Identity(d, d));
}

double rel_change(const Mat& now, const Mat& before) {
  const double denom = std::max(before.norm(), 1e-300);
  return (now - before).norm() / denom;
}

}  // namespace

QuadForm seminorm0_quadform(const Mat& c, const GridPtr& grid) {
  require(c.rows() == grid->size() && c.cols() == grid->size(), ErrorKind::dimension,
          "covariance does not match grid");
  const Vec& w = grid->weights();
  Mat m = w.asDiagonal() * c * w.asDiagonal();
  return QuadForm(grid, 0.5 * (m + m.transpose()));
}

QuadForm SeparableCov::m0_alpha() const { return seminorm0_quadform(c_alpha, s_grid); }
QuadForm SeparableCov::m0_beta() const { return seminorm0_quadform(c_beta, t_grid); }

SeparableCov flipflop_estimate(const TwoWayDataset& data, const FlipFlopOptions& opts,
                               const std::optional<Mat>& init_c_beta) {
  require(data.centered, ErrorKind::precondition, "flip-flop requires centered data");
  require(data.n() >= 2, ErrorKind::precondition, "flip-flop requires n >= 2");
  const int n = data.n(), p = data.p(), q = data.q();
  const double ht = data.t_grid->spacing();

  // Horizontal stack [x_1 ... x_n] (p x nq) and vertical stack (np x q).
  Mat hstack(p, static_cast<Eigen::Index>(n) * q);
  Mat vstack(static_cast<Eigen::Index>(n) * p, q);
  for (int i = 0; i < n; ++i) {
    hstack.middleCols(static_cast<Eigen::Index>(i) * q, q) = data.x[i];
    vstack.middleRows(static_cast<Eigen::Index>(i) * p, p) = data.x[i];
  }

  SeparableCov cov;
  cov.s_grid = data.s_grid;
  cov.t_grid = data.t_grid;
  cov.scale_convention = kUnitBetaTrace;
  cov.c_beta = init_c_beta ? *init_c_beta : Mat(Mat::Identity(q, q) / ht);
  require(cov.c_beta.rows() == q && cov.c_beta.cols() == q, ErrorKind::dimension,
          "flip-flop: initial C_beta has wrong shape");
  cov.c_alpha = Mat::Zero(p, p);
  cov.converged = false;

  Mat work_h(p, static_cast<Eigen::Index>(n) * q);
  Mat work_v(static_cast<Eigen::Index>(n) * p, q);
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Mat prev_a = cov.c_alpha;
    const Mat prev_b = cov.c_beta;

    const Mat inv_b = ridge_inverse(cov.c_beta, opts.ridge_eps);
    for (int i = 0; i < n; ++i)
      work_h.middleCols(static_cast<Eigen::Index>(i) * q, q).noalias() = data.x[i] * inv_b;
    Mat ca = work_h * hstack.transpose() / (static_cast<double>(n) * q);
    cov.c_alpha = 0.5 * (ca + ca.transpose());

    const Mat inv_a = ridge_inverse(cov.c_alpha, opts.ridge_eps);
    for (int i = 0; i < n; ++i)
      work_v.middleRows(static_cast<Eigen::Index>(i) * p, p).noalias() = inv_a * data.x[i];
    Mat cb = work_v.transpose() * vstack / (static_cast<double>(n) * p);
    cov.c_beta = 0.5 * (cb + cb.transpose());

    const double scale = cov.c_beta.trace() * ht;
    require(std::isfinite(scale) && scale > 0.0, ErrorKind::numeric, "flip-flop: degenerate C_beta");
    cov.c_beta /= scale;
    cov.c_alpha *= scale;
    require(cov.c_alpha.allFinite() && cov.c_beta.allFinite(), ErrorKind::numeric,
            "flip-flop: non-finite iterate");

    cov.iterations = it;
    if (it > 1 && rel_change(cov.c_alpha, prev_a) < opts.tol && rel_change(cov.c_beta, prev_b) < opts.tol) {
      cov.converged = true;
      break;
    }
  }
  return cov;
}

double excess_risk_oracle(const Mat& delta, const SeparableCov& cov) {
  require(delta.rows() == cov.c_alpha.rows() && delta.cols() == cov.c_beta.rows(), ErrorKind::dimension,
          "excess risk: coefficient field does not match covariance");
  const QuadForm ma = cov.m0_alpha();
  const QuadForm mb = cov.m0_beta();
  const Mat left = ma.m * delta;
  const Mat right = delta * mb.m;
  return left.cwiseProduct(right).sum();
}

double excess_risk_oracle(const Vec& alpha_hat, const Vec& beta_hat, const Vec& alpha0, const Vec& beta0,
                          const SeparableCov& cov) {
  require(alpha_hat.size() == alpha0.size() && beta_hat.size() == beta0.size(), ErrorKind::dimension,
          "excess risk: estimate and truth differ in length");
  const Mat delta = alpha_hat * beta_hat.transpose() - alpha0 * beta0.transpose();
  return excess_risk_oracle(delta, cov);
}

double loglog_slope(const Vec& values, int lo, int hi) {
  require(lo >= 1 && hi <= values.size() && hi - lo + 1 >= 2, ErrorKind::invalid_argument,
          "log-log fit needs at least two points");
  const int cnt = hi - lo + 1;
  Vec x(cnt), y(cnt);
  for (int k = lo; k <= hi; ++k) {
    x[k - lo] = std::log(static_cast<double>(k));
    y[k - lo] = std::log(values[k - 1]);
  }
  const double mx = x.mean(), my = y.mean();
  return ((x.array() - mx) * (y.array() - my)).sum() / (x.array() - mx).square().sum();
}

GammaSequence gamma_sequence(const QuadForm& m0, const QuadForm& mk, int k_max, const GammaOptions& opts) {
  require(m0.size() == mk.size(), ErrorKind::dimension, "gamma: forms on different grids");
  require(mk.m.cwiseAbs().maxCoeff() > 0.0, ErrorKind::degenerate_form, "gamma: K-form is zero");
  const Eigen::Index m = m0.size();

  // R-metric on the joint range of M0 + MK.
  const Mat r = 0.5 * ((m0.m + mk.m) + (m0.m + mk.m).transpose());
  Eigen::SelfAdjointEigenSolver<Mat> rs(r);
  const double rmax = rs.eigenvalues().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < m; ++k)
    if (rs.eigenvalues()[k] > opts.rank_tol * rmax) keep.push_back(k);
  Mat t(m, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    t.col(j) = rs.eigenvectors().col(keep[j]) / std::sqrt(rs.eigenvalues()[keep[j]]);

  Mat s0 = t.transpose() * m0.m * t;
  Mat sk = t.transpose() * mk.m * t;
  s0 = 0.5 * (s0 + s0.transpose());
  sk = 0.5 * (sk + sk.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s0);

  struct Dir {
    double gamma;
    Vec omega;
  };
  std::vector<Dir> finite;
  std::vector<Vec> unpen;
  for (Eigen::Index j = es.eigenvalues().size() - 1; j >= 0; --j) {
    const Vec v = es.eigenvectors().col(j);
    const double a = std::max(v.dot(s0 * v), 0.0);
    const double b = std::max(v.dot(sk * v), 0.0);
    if (a <= 1e-14 * (a + b)) continue;  // invisible to ||.||_0
    const Vec u = t * v;
    if (b <= 1e-12 * (a + b)) {
      unpen.push_back(u / std::sqrt(a));
      continue;
    }
    finite.push_back({a / b, u / std::sqrt(a)});
  }
  std::stable_sort(finite.begin(), finite.end(), [](const Dir& x, const Dir& y) { return x.gamma > y.gamma; });

  const int kept = std::min<int>(k_max, static_cast<int>(finite.size()));
  GammaSequence out;
  out.gammas.resize(kept);
  out.basis.resize(m, kept);
  for (int k = 0; k < kept; ++k) {
    out.gammas[k] = finite[k].gamma;
    out.basis.col(k) = finite[k].omega;
  }
  out.unpenalized = static_cast<int>(unpen.size());
  out.unpenalized_basis.resize(m, out.unpenalized);
  for (int j = 0; j < out.unpenalized; ++j) out.unpenalized_basis.col(j) = unpen[j];

  out.fit_lo = opts.k_min;
  out.fit_hi = std::min(kept, opts.fit_k_max);
  out.fitted_r = (out.fit_hi - out.fit_lo + 1 >= 2) ? -0.5 * loglog_slope(out.gammas, out.fit_lo, out.fit_hi)
                                                    : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace fblr
