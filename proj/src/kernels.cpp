#include "fblr/kernels.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace fblr {

namespace {

constexpr std::array<std::array<double, 5>, 5> kBinom{{
    {1, 0, 0, 0, 0},
    {1, 1, 0, 0, 0},
    {1, 2, 1, 0, 0},
    {1, 3, 3, 1, 0},
    {1, 4, 6, 4, 1},
}};

double sim_bernoulli_entry(double s, double t) {
  return -bernoulli_b4(std::abs(s - t) / 2.0) / 3.0 - bernoulli_b4((s + t) / 2.0) / 3.0;
}

double periodic_bernoulli_entry(double s, double t) { return 1.0 - bernoulli_b4(std::abs(s - t)) / 24.0; }

// For every grid point t_i: sum_j (t_i - t_j)^p v_j for p = 0..4, the signed
// |t_i - t_j|^3 sum, and sum_j ((t_i + t_j)/2)^p v_j for p = 0..4.
struct Moments {
  Mat diff;      // m x 5
  Vec abs_cube;  // m
  Mat mid;       // m x 5
};

Moments grid_moments(const Grid1D& grid, const Vec& v) {
  const int m = grid.size();
  const Vec& t = grid.points();
  std::array<double, 5> total{};
  for (int j = 0; j < m; ++j) {
    double tp = 1.0;
    for (int b = 0; b < 5; ++b) {
      total[b] += tp * v[j];
      tp *= t[j];
    }
  }
  Moments out{Mat::Zero(m, 5), Vec::Zero(m), Mat::Zero(m, 5)};
  std::array<double, 4> prefix{};
  for (int i = 0; i < m; ++i) {
    double tp = 1.0;
    for (int b = 0; b < 4; ++b) {
      prefix[b] += tp * v[i];
      tp *= t[i];
    }
    std::array<double, 5> ti_pow{};
    ti_pow[0] = 1.0;
    for (int a = 1; a < 5; ++a) ti_pow[a] = ti_pow[a - 1] * t[i];
    for (int p = 0; p < 5; ++p) {
      double dsum = 0.0, msum = 0.0;
      for (int a = 0; a <= p; ++a) {
        const double sign = ((p - a) % 2 == 0) ? 1.0 : -1.0;
        dsum += kBinom[p][a] * ti_pow[a] * sign * total[p - a];
        msum += kBinom[p][a] * ti_pow[a] * total[p - a];
      }
      out.diff(i, p) = dsum;
      out.mid(i, p) = msum / std::pow(2.0, p);
    }
    // sum_{j<=i} (t_i - t_j)^3 v_j - sum_{j>i} (t_i - t_j)^3 v_j
    double cube = 0.0;
    for (int a = 0; a <= 3; ++a) {
      const double sign = ((3 - a) % 2 == 0) ? 1.0 : -1.0;
      cube += kBinom[3][a] * ti_pow[a] * sign * (2.0 * prefix[3 - a] - total[3 - a]);
    }
    out.abs_cube[i] = cube;
  }
  return out;
}

}  // namespace

KernelSpec parse_kernel_spec(const std::string& name) {
  if (name == "sim-bernoulli") return KernelSpec::sim_bernoulli();
  if (name == "periodic-bernoulli") return KernelSpec::periodic_bernoulli();
  if (name == "second-deriv") return KernelSpec::second_deriv();
  throw Error(ErrorKind::unsupported_spec, "unknown kernel '" + name + "'");
}

std::string kernel_name(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::sim_bernoulli: return "sim-bernoulli";
    case KernelKind::periodic_bernoulli: return "periodic-bernoulli";
    case KernelKind::second_deriv_roughness: return "second-deriv";
    case KernelKind::custom_gram: return "custom";
  }
  return "unknown";
}

Mat SpectralModel::factor() const { return functions * eigenvalues.cwiseSqrt().asDiagonal(); }

double bernoulli_b4(double x) { return ((x - 2.0) * x + 1.0) * x * x - 1.0 / 30.0; }

Mat kernel_gram(const KernelSpec& spec, const Grid1D& grid) {
  const int m = grid.size();
  Mat g(m, m);
  switch (spec.kind) {
    case KernelKind::sim_bernoulli:
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) g(i, j) = sim_bernoulli_entry(grid.point(i), grid.point(j));
      return g;
    case KernelKind::periodic_bernoulli:
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) g(i, j) = periodic_bernoulli_entry(grid.point(i), grid.point(j));
      return g;
    case KernelKind::custom_gram:
      require(spec.gram.rows() == m && spec.gram.cols() == m, ErrorKind::dimension,
              "custom Gram does not match grid");
      return spec.gram;
    case KernelKind::second_deriv_roughness:
      break;
  }
  throw Error(ErrorKind::unsupported_spec, "second-derivative roughness has no closed-form Gram");
}

Vec kernel_apply(const KernelSpec& spec, const Grid1D& grid, const Vec& v) {
  require_same_size(v.size(), grid.size(), "kernel_apply: vector length does not match grid");
  if (spec.kind == KernelKind::custom_gram) return kernel_gram(spec, grid) * v;
  require(spec.kind != KernelKind::second_deriv_roughness, ErrorKind::unsupported_spec,
          "second-derivative roughness has no closed-form Gram");

  const Moments mo = grid_moments(grid, v);
  const double c0 = 1.0 / 30.0;
  Vec out(grid.size());
  if (spec.kind == KernelKind::sim_bernoulli) {
    // B4(|d|/2) = d^4/16 - |d|^3/4 + d^2/4 - 1/30
    for (int i = 0; i < grid.size(); ++i) {
      const double half = mo.diff(i, 4) / 16.0 - mo.abs_cube[i] / 4.0 + mo.diff(i, 2) / 4.0 - c0 * mo.diff(i, 0);
      const double mid = mo.mid(i, 4) - 2.0 * mo.mid(i, 3) + mo.mid(i, 2) - c0 * mo.mid(i, 0);
      out[i] = -(half + mid) / 3.0;
    }
  } else {
    for (int i = 0; i < grid.size(); ++i) {
      const double b4 = mo.diff(i, 4) - 2.0 * mo.abs_cube[i] + mo.diff(i, 2) - c0 * mo.diff(i, 0);
      out[i] = mo.diff(i, 0) - b4 / 24.0;
    }
  }
  return out;
}

QuadForm rkhs_quadform(const KernelSpec& spec, const GridPtr& grid) {
  const int m = grid->size();
  if (spec.kind == KernelKind::second_deriv_roughness) {
    require(m >= 3, ErrorKind::invalid_argument, "second differences need at least 3 grid points");
    Mat d2 = Mat::Zero(m - 2, m);
    for (int j = 0; j < m - 2; ++j) {
      d2(j, j) = 1.0;
      d2(j, j + 1) = -2.0;
      d2(j, j + 2) = 1.0;
    }
    // Row j approximates f'' on a cell of width h around t_{j+1}; the two end
    // rows also cover the half cells next to the boundary.
    const double h = grid->spacing();
    Vec cell = Vec::Ones(m - 2);
    cell[0] = cell[m - 3] = (m == 3) ? 2.0 : 1.5;
    const Mat f = d2.transpose() * (cell.cwiseSqrt() / std::sqrt(h * h * h)).asDiagonal();
    QuadForm q(grid, f * f.transpose());
    q.factor = f;
    return q;
  }

  const Mat g = kernel_gram(spec, *grid);
  const Vec& w = grid->weights();
  Mat p = w.asDiagonal() * g * w.asDiagonal();
  p = 0.5 * (p + p.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(p);
  const Vec& ev = es.eigenvalues();
  const double lmax = ev.maxCoeff();
  require(lmax > 0.0, ErrorKind::numeric, "kernel Gram has no positive eigenvalue");
  require(ev.minCoeff() >= -1e-8 * lmax, ErrorKind::numeric, "kernel Gram is indefinite beyond tolerance");
  // Directions the Gram cannot represent lie outside the RKHS. Flooring their
  // eigenvalues gives them a large penalty; a plain pseudo-inverse would zero
  // it and leave them free.
  const Vec inv = ev.cwiseMax(1e-10 * lmax).cwiseInverse();
  const Mat& v = es.eigenvectors();
  Mat pinv = v * inv.asDiagonal() * v.transpose();
  Mat mk = w.asDiagonal() * pinv * w.asDiagonal();
  return QuadForm(grid, 0.5 * (mk + mk.transpose()));
}

CosineCovariance cosine_covariance(double r_c, int n_terms, const GridPtr& grid) {
  require(r_c > 0.0, ErrorKind::invalid_argument, "cosine covariance needs r_c > 0");
  require(n_terms >= 1, ErrorKind::invalid_argument, "cosine covariance needs at least one term");
  const int m = grid->size();
  SpectralModel sm;
  sm.grid = grid;
  sm.eigenvalues.resize(n_terms);
  sm.functions.resize(m, n_terms);
  for (int i = 1; i <= n_terms; ++i) {
    sm.eigenvalues[i - 1] = std::pow(static_cast<double>(i), -2.0 * r_c);
    for (int k = 0; k < m; ++k)
      sm.functions(k, i - 1) = std::numbers::sqrt2 * std::cos(i * std::numbers::pi * grid->point(k));
  }
  Mat c = sm.functions * sm.eigenvalues.asDiagonal() * sm.functions.transpose();
  return {0.5 * (c + c.transpose()), std::move(sm)};
}

}  // namespace fblr
