#pragma once

// Reproducing kernels on [0,1], their Gram matrices and RKHS-norm quadratic
// forms, and the cosine-series covariance used by the simulations.

#include <string>

#include "fblr/grid.hpp"

namespace fblr {

enum class KernelKind {
  sim_bernoulli,           // -B4(|s-t|/2)/3 - B4((s+t)/2)/3, norm = int (f'')^2 on cosine series
  periodic_bernoulli,      // 1 - B4(|s-t|)/24
  second_deriv_roughness,  // int (f'')^2 through second differences, no Gram
  custom_gram,             // user supplied m x m Gram
};

struct KernelSpec {
  KernelKind kind = KernelKind::sim_bernoulli;
  Mat gram;  // custom_gram only

  static KernelSpec sim_bernoulli() { return {KernelKind::sim_bernoulli, {}}; }
  static KernelSpec periodic_bernoulli() { return {KernelKind::periodic_bernoulli, {}}; }
  static KernelSpec second_deriv() { return {KernelKind::second_deriv_roughness, {}}; }
  static KernelSpec custom(Mat g) { return {KernelKind::custom_gram, std::move(g)}; }
};

// Parses "sim-bernoulli", "periodic-bernoulli", "second-deriv".
KernelSpec parse_kernel_spec(const std::string& name);
std::string kernel_name(const KernelSpec& spec);

// Eigenpairs (descending) of an operator on a grid; eigenfunctions are the
// columns of `functions` and are orthonormal under the grid quadrature.
struct SpectralModel {
  GridPtr grid;
  Vec eigenvalues;
  Mat functions;

  int terms() const { return static_cast<int>(eigenvalues.size()); }
  Func1D eigenfunction(int k) const { return Func1D(grid, functions.col(k)); }
  // functions * diag(sqrt(eigenvalues)); x = factor * z has covariance C.
  Mat factor() const;
};

double bernoulli_b4(double x);

Mat kernel_gram(const KernelSpec& spec, const Grid1D& grid);

// Gram-vector product sum_j K(t_i, t_j) v_j. The Bernoulli kernels are
// piecewise polynomial in (s,t) and run in O(m) via prefix moments; custom
// Grams fall back to a dense product.
Vec kernel_apply(const KernelSpec& spec, const Grid1D& grid, const Vec& v);

// Discrete squared RKHS norm. Second-derivative roughness: D2' C D2 / h^3 with
// C = diag(1.5, 1, ..., 1, 1.5) so the end cells are counted. Kernel
// specs: W (W G W)^-1 W with eigenvalues of W G W floored at 1e-10 * max, so
// that f = G c gives f' M f = c' G c whenever G is well conditioned.
QuadForm rkhs_quadform(const KernelSpec& spec, const GridPtr& grid);

struct CosineCovariance {
  Mat matrix;
  SpectralModel spectral;
};

// C(s,t) = sum_{i=1}^{n_terms} 2 i^{-2 r_c} cos(i pi s) cos(i pi t).
CosineCovariance cosine_covariance(double r_c, int n_terms, const GridPtr& grid);

}  // namespace fblr
