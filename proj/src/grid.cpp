#include "fblr/grid.hpp"

#include <cmath>
#include <string>

namespace fblr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::dimension: return "dimension-error";
    case ErrorKind::numeric: return "numeric-error";
    case ErrorKind::precondition: return "precondition-error";
    case ErrorKind::unsupported_spec: return "unsupported-spec";
    case ErrorKind::ill_posed: return "ill-posed-error";
    case ErrorKind::degenerate_gcv: return "degenerate-gcv";
    case ErrorKind::no_valid_lambda: return "no-valid-lambda";
    case ErrorKind::degenerate_form: return "degenerate-form";
    case ErrorKind::degenerate_step_norm: return "degenerate-step-norm";
    case ErrorKind::degenerate_iterate: return "degenerate-iterate";
    case ErrorKind::insufficient_sample: return "insufficient-sample";
    case ErrorKind::unsupported_setting: return "unsupported-setting";
    case ErrorKind::internal: return "internal-error";
    case ErrorKind::io: return "io-error";
    case ErrorKind::data: return "data-error";
  }
  return "error";
}

Grid1D::Grid1D(int m) {
  require(m >= 2, ErrorKind::invalid_argument, "grid needs at least 2 points, got " + std::to_string(m));
  h_ = 1.0 / (m - 1);
  points_.resize(m);
  weights_.setConstant(m, h_);
  for (int k = 0; k < m; ++k) points_[k] = k * h_;
  points_[m - 1] = 1.0;
  weights_[0] = weights_[m - 1] = 0.5 * h_;
}

GridPtr make_uniform_grid(int m) { return std::make_shared<const Grid1D>(m); }

Func1D::Func1D(GridPtr g, Vec v) : grid(std::move(g)), values(std::move(v)) {
  require(grid != nullptr, ErrorKind::invalid_argument, "function without grid");
  require_same_size(values.size(), grid->size(), "function length does not match grid");
}

double quad_inner(const Grid1D& grid, const Vec& f, const Vec& g) {
  require(f.size() == grid.size() && g.size() == grid.size(), ErrorKind::dimension,
          "quad_inner: length mismatch");
  double acc = 0.0;
  for (int k = 0; k < grid.size(); ++k) acc += grid.weight(k) * f[k] * g[k];
  return acc;
}

double quad_inner(const Func1D& f, const Func1D& g) {
  require(*f.grid == *g.grid, ErrorKind::dimension, "quad_inner: grid mismatch");
  return quad_inner(*f.grid, f.values, g.values);
}

double bilinear_functional(const Grid1D& s_grid, const Vec& f, const Mat& x,
                           const Grid1D& t_grid, const Vec& g) {
  require(f.size() == s_grid.size() && x.rows() == s_grid.size(), ErrorKind::dimension,
          "bilinear_functional: s-dimension mismatch");
  require(g.size() == t_grid.size() && x.cols() == t_grid.size(), ErrorKind::dimension,
          "bilinear_functional: t-dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    double row = 0.0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) row += x(j, k) * t_grid.weight(k) * g[k];
    acc += s_grid.weight(j) * f[j] * row;
  }
  return acc;
}

double bilinear_functional(const Func1D& f, const Mat& x, const Func1D& g) {
  return bilinear_functional(*f.grid, f.values, x, *g.grid, g.values);
}

void TwoWayDataset::validate() const {
  require(s_grid && t_grid, ErrorKind::invalid_argument, "dataset without grids");
  require_same_size(static_cast<Eigen::Index>(x.size()), y.size(),
                    "dataset: number of covariates differs from number of responses");
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i].rows() == p() && x[i].cols() == q(), ErrorKind::dimension,
            "dataset: covariate " + std::to_string(i) + " has wrong shape");
    require(x[i].allFinite(), ErrorKind::numeric, "dataset: non-finite covariate entry");
  }
  require(y.allFinite(), ErrorKind::numeric, "dataset: non-finite response");
}

TwoWayDataset center_dataset(GridPtr s_grid, GridPtr t_grid, std::vector<Mat> x, Vec y) {
  const int n = static_cast<int>(x.size());
  require(n >= 2, ErrorKind::invalid_argument, "centering needs n >= 2");
  TwoWayDataset d;
  d.s_grid = std::move(s_grid);
  d.t_grid = std::move(t_grid);
  d.x = std::move(x);
  d.y = std::move(y);
  d.validate();

  Mat mean = Mat::Zero(d.p(), d.q());
  for (const auto& xi : d.x) mean += xi;
  mean /= n;
  for (auto& xi : d.x) xi -= mean;
  const double ym = d.y.mean();
  d.y.array() -= ym;

  // Recentering an already-centered dataset keeps the original offsets.
  d.x_mean = mean;
  d.y_mean = ym;
  d.centered = true;
  return d;
}

TwoWayDataset center_dataset(const TwoWayDataset& data) {
  TwoWayDataset out = center_dataset(data.s_grid, data.t_grid, data.x, data.y);
  if (data.centered) {
    out.x_mean += data.x_mean;
    out.y_mean += data.y_mean;
  }
  return out;
}

QuadForm::QuadForm(GridPtr g, Mat mat) : grid(std::move(g)), m(std::move(mat)) {
  require(grid != nullptr, ErrorKind::invalid_argument, "quadratic form without grid");
  require(m.rows() == grid->size() && m.cols() == grid->size(), ErrorKind::dimension,
          "quadratic form size does not match grid");
}

void QuadForm::validate() const {
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()), ErrorKind::numeric,
          "quadratic form is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  require(lmin >= -1e-8 * std::max(lmax, 0.0), ErrorKind::numeric,
          "quadratic form is not positive semidefinite");
}

void QuadForm::factorize() {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor = es.eigenvectors() * root.asDiagonal();
}

}  // namespace fblr
