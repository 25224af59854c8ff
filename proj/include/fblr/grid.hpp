#pragma once

// Grids on [0,1], grid functions, two-way datasets and the quadrature
// primitives (inner products, bilinear functionals) everything else uses.

#include <Eigen/Dense>

#include <memory>
#include <vector>

#include "fblr/error.hpp"

namespace fblr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Uniform grid on [0,1] with trapezoid weights (h/2, h, ..., h, h/2).
class Grid1D {
 public:
  explicit Grid1D(int m);

  int size() const { return static_cast<int>(points_.size()); }
  double spacing() const { return h_; }
  const Vec& points() const { return points_; }
  const Vec& weights() const { return weights_; }
  double point(int k) const { return points_[k]; }
  double weight(int k) const { return weights_[k]; }

  friend bool operator==(const Grid1D& a, const Grid1D& b) { return a.size() == b.size(); }

 private:
  double h_;
  Vec points_;
  Vec weights_;
};

using GridPtr = std::shared_ptr<const Grid1D>;

GridPtr make_uniform_grid(int m);

// A real function stored as its values on a grid.
struct Func1D {
  GridPtr grid;
  Vec values;

  Func1D() = default;
  Func1D(GridPtr g, Vec v);

  int size() const { return static_cast<int>(values.size()); }
};

template <class F>
Func1D sample_func(const GridPtr& grid, F&& f) {
  Vec v(grid->size());
  for (int k = 0; k < grid->size(); ++k) v[k] = f(grid->point(k));
  return Func1D(grid, std::move(v));
}

// Sum_k w_k f_k g_k, accumulated in ascending index order.
double quad_inner(const Func1D& f, const Func1D& g);
double quad_inner(const Grid1D& grid, const Vec& f, const Vec& g);

// f' W_s x W_t g, the discrete double integral of f(s) x(s,t) g(t).
double bilinear_functional(const Func1D& f, const Mat& x, const Func1D& g);
double bilinear_functional(const Grid1D& s_grid, const Vec& f, const Mat& x,
                           const Grid1D& t_grid, const Vec& g);

// n matrix covariates of shape p x q on (s_grid, t_grid) plus scalar responses.
struct TwoWayDataset {
  GridPtr s_grid;
  GridPtr t_grid;
  std::vector<Mat> x;
  Vec y;
  bool centered = false;
  Mat x_mean;
  double y_mean = 0.0;

  int n() const { return static_cast<int>(x.size()); }
  int p() const { return s_grid->size(); }
  int q() const { return t_grid->size(); }

  // Validates shapes and finiteness; throws dimension / numeric errors.
  void validate() const;
};

TwoWayDataset center_dataset(GridPtr s_grid, GridPtr t_grid, std::vector<Mat> x, Vec y);
TwoWayDataset center_dataset(const TwoWayDataset& data);

// Symmetric PSD matrix defining f' M f on a grid.
struct QuadForm {
  GridPtr grid;
  Mat m;
  // Optional F with m = F F'. Norms then come out as |F'f|^2, which avoids
  // cancellation when m has large entries of both signs.
  Mat factor;

  QuadForm() = default;
  QuadForm(GridPtr g, Mat mat);

  double operator()(const Vec& f) const {
    if (factor.size()) return (factor.transpose() * f).squaredNorm();
    return f.dot(m * f);
  }
  double operator()(const Func1D& f) const { return (*this)(f.values); }
  int size() const { return static_cast<int>(m.rows()); }

  // Checks symmetry (1e-10) and PSD (min eig >= -1e-8 * max eig).
  void validate() const;
  // Fills factor from a symmetric eigendecomposition, clipping negative
  // eigenvalues to zero.
  void factorize();
};

// Shape check shared by several modules.
inline void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  require(a == b, ErrorKind::dimension, what);
}

}  // namespace fblr
