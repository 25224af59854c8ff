#include "fblr/parallel.hpp"

#include <exception>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fblr {

namespace {

Mat draw_standard_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = normal(gen);
  return z;
}

void check_batch(const std::vector<Mat>& x, Eigen::Index p, Eigen::Index q) {
  for (const auto& xi : x)
    require(xi.rows() == p && xi.cols() == q, ErrorKind::dimension, "batch kernel: covariate shape mismatch");
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void parallel_for(int count, const std::function<void(int)>& body) {
  // Exceptions may not cross the OpenMP region; keep the lowest-index one.
  std::exception_ptr first;
  int first_index = count;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(fblr_parallel_for)
      if (i < first_index) {
        first_index = i;
        first = std::current_exception();
      }
    }
  }
  if (first) std::rethrow_exception(first);
}

Mat contract_s(const std::vector<Mat>& x, const Vec& ws_alpha) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return Mat(0, 0);
  check_batch(x, ws_alpha.size(), x[0].cols());
  Mat out(n, x[0].cols());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.row(i).noalias() = ws_alpha.transpose() * x[i];
  return out;
}

Mat contract_t(const std::vector<Mat>& x, const Vec& wt_beta) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return Mat(0, 0);
  check_batch(x, x[0].rows(), wt_beta.size());
  Mat out(n, x[0].rows());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.row(i).noalias() = (x[i] * wt_beta).transpose();
  return out;
}

Vec bilinear_batch(const std::vector<Mat>& x, const Vec& ws_f, const Vec& wt_g) {
  const int n = static_cast<int>(x.size());
  check_batch(x, ws_f.size(), wt_g.size());
  Vec out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[i] = ws_f.dot(x[i] * wt_g);
  return out;
}

Vec frobenius_batch(const std::vector<Mat>& x, const Mat& d) {
  const int n = static_cast<int>(x.size());
  check_batch(x, d.rows(), d.cols());
  Vec out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[i] = x[i].cwiseProduct(d).sum();
  return out;
}

Mat weighted_design_gram(const std::vector<Mat>& x, const Vec& ws, const Vec& wt) {
  const int n = static_cast<int>(x.size());
  check_batch(x, ws.size(), wt.size());
  const Mat w2 = ws.cwiseAbs2() * wt.cwiseAbs2().transpose();
  std::vector<Mat> scaled(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) scaled[i] = x[i].cwiseProduct(w2);
  Mat g(n, n);
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = scaled[i].cwiseProduct(x[j]).sum();
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

std::vector<Mat> sample_kl_batch(const Mat& l_s, const Mat& l_t, const std::vector<std::uint64_t>& seeds) {
  const int n = static_cast<int>(seeds.size());
  std::vector<Mat> out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const Mat z = draw_standard_normal(l_s.cols(), l_t.cols(), seeds[i]);
    out[i].noalias() = (l_s * z) * l_t.transpose();
  }
  return out;
}

namespace serial {

Mat contract_s(const std::vector<Mat>& x, const Vec& ws_alpha) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return Mat(0, 0);
  Mat out = Mat::Zero(n, x[0].cols());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < x[i].cols(); ++k)
      for (Eigen::Index j = 0; j < x[i].rows(); ++j) out(i, k) += ws_alpha[j] * x[i](j, k);
  return out;
}

Mat contract_t(const std::vector<Mat>& x, const Vec& wt_beta) {
  const int n = static_cast<int>(x.size());
  if (n == 0) return Mat(0, 0);
  Mat out = Mat::Zero(n, x[0].rows());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < x[i].rows(); ++j)
      for (Eigen::Index k = 0; k < x[i].cols(); ++k) out(i, j) += x[i](j, k) * wt_beta[k];
  return out;
}

Vec bilinear_batch(const std::vector<Mat>& x, const Vec& ws_f, const Vec& wt_g) {
  const int n = static_cast<int>(x.size());
  Vec out = Vec::Zero(n);
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < x[i].rows(); ++j)
      for (Eigen::Index k = 0; k < x[i].cols(); ++k) out[i] += ws_f[j] * x[i](j, k) * wt_g[k];
  return out;
}

Mat weighted_design_gram(const std::vector<Mat>& x, const Vec& ws, const Vec& wt) {
  const int n = static_cast<int>(x.size());
  Mat g = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < n; ++l)
      for (Eigen::Index j = 0; j < x[i].rows(); ++j)
        for (Eigen::Index k = 0; k < x[i].cols(); ++k)
          g(i, l) += ws[j] * ws[j] * wt[k] * wt[k] * x[i](j, k) * x[l](j, k);
  return g;
}

std::vector<Mat> sample_kl_batch(const Mat& l_s, const Mat& l_t, const std::vector<std::uint64_t>& seeds) {
  std::vector<Mat> out;
  out.reserve(seeds.size());
  for (auto seed : seeds) {
    const Mat z = draw_standard_normal(l_s.cols(), l_t.cols(), seed);
    Mat xi = Mat::Zero(l_s.rows(), l_t.rows());
    for (Eigen::Index a = 0; a < z.rows(); ++a)
      for (Eigen::Index b = 0; b < z.cols(); ++b) {
        const double zab = z(a, b);
        for (Eigen::Index k = 0; k < l_t.rows(); ++k) {
          const double c = zab * l_t(k, b);
          for (Eigen::Index j = 0; j < l_s.rows(); ++j) xi(j, k) += l_s(j, a) * c;
        }
      }
    out.push_back(std::move(xi));
  }
  return out;
}

}  // namespace serial

}  // namespace fblr
