#include "helpers.hpp"

#include "fblr/flr.hpp"
#include "fblr/kernels.hpp"

using namespace fblr;
using namespace fblr::testing;

namespace {

struct Instance {
  GridPtr grid;
  Mat x;
  Vec y;
};

// Smooth-ish random covariates from the cosine covariance.
Instance make_instance(int n, int m, std::mt19937_64& rng) {
  Instance in;
  in.grid = make_uniform_grid(m);
  const Mat l = cosine_covariance(1.0, 40, in.grid).spectral.factor();
  in.x = random_mat(n, 40, rng) * l.transpose();
  in.y = random_vec(n, rng);
  return in;
}

Mat design(const Instance& in) { return in.x * in.grid->weights().asDiagonal(); }

}  // namespace

TEST(FlrRidge, ZeroResponseGivesZero) {
  std::mt19937_64 rng(51);
  Instance in = make_instance(6, 9, rng);
  in.y.setZero();
  const FlrFit f = flr_fit_ridge_form(in.grid, in.x, in.y, QuadForm(in.grid, Mat::Identity(9, 9)));
  EXPECT_EQ(f.coef.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FlrRidge, HeavyPenaltyShrinks) {
  std::mt19937_64 rng(52);
  const Instance in = make_instance(8, 11, rng);
  const FlrFit f = flr_fit_ridge_form(in.grid, in.x, in.y, QuadForm(in.grid, 1e8 * Mat::Identity(11, 11)));
  const double scale = in.y.cwiseAbs().maxCoeff() / std::max(in.x.cwiseAbs().maxCoeff(), 1e-300);
  EXPECT_LT(f.coef.values.cwiseAbs().maxCoeff(), 1e-6 * scale);
}

TEST(FlrRidge, MatchesRepresenterForm) {
  std::mt19937_64 rng(53);
  std::uniform_int_distribution<int> nd(2, 10), md(4, 20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Instance in = rep == 0 ? make_instance(5, 9, rng) : rep == 1 ? make_instance(6, 10, rng)
                                                                       : make_instance(nd(rng), md(rng), rng);
    const double lam = std::pow(10.0, -4.0 + 3.0 * u(rng));
    const KernelSpec k = rep % 2 ? KernelSpec::sim_bernoulli() : KernelSpec::periodic_bernoulli();
    const Mat gram = kernel_gram(k, *in.grid);
    const FlrFit ridge =
        flr_fit_ridge_form(in.grid, in.x, in.y, QuadForm(in.grid, lam * rkhs_quadform(k, in.grid).m));
    const FlrFit rep_form = flr_fit_representer(in.grid, in.x, in.y, gram, lam);
    EXPECT_LE(rel_err(ridge.coef.values, rep_form.coef.values), 1e-6) << rep;
    EXPECT_LE(rel_err(ridge.fitted, rep_form.fitted), 1e-6) << rep;
    EXPECT_NEAR(ridge.hat_trace, rep_form.hat_trace, 1e-6 * in.y.size());
  }
}

TEST(FlrRidge, HatTraceAndFittedMatchBruteForce) {
  std::mt19937_64 rng(54);
  const Instance in = make_instance(7, 12, rng);
  const Mat m = random_spd(12, rng);
  const FlrFit f = flr_fit_ridge_form(in.grid, in.x, in.y, QuadForm(in.grid, m));
  const Mat a = design(in);
  const int n = 7;
  const Mat s = a.transpose() * a / n + m;
  const Mat h = a * s.inverse() * a.transpose() / n;
  EXPECT_NEAR(f.hat_trace, h.trace(), 1e-8);
  EXPECT_LE((f.fitted - a * f.coef.values).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((f.fitted - h * in.y).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_GE(f.hat_trace, 0.0);
  EXPECT_LE(f.hat_trace, n);
}

TEST(FlrRidge, OptimalAgainstPerturbations) {
  std::mt19937_64 rng(55);
  const Instance in = make_instance(9, 10, rng);
  const Mat m = 1e-3 * random_spd(10, rng);
  const FlrFit f = flr_fit_ridge_form(in.grid, in.x, in.y, QuadForm(in.grid, m));
  const Mat a = design(in);
  const auto obj = [&](const Vec& b) { return (in.y - a * b).squaredNorm() / 9 + b.dot(m * b); };
  const double best = obj(f.coef.values);
  for (int k = 0; k < 100; ++k) {
    const Vec delta = 1e-3 * random_vec(10, rng);
    EXPECT_GE(obj(f.coef.values + delta) - best, -1e-10);
  }
}

TEST(FlrRidge, SingularSystemIsIllPosed) {
  std::mt19937_64 rng(56);
  const Instance in = make_instance(3, 12, rng);
  EXPECT_FBLR_ERROR(flr_fit_ridge_form(in.grid, in.x, in.y, QuadForm(in.grid, Mat::Zero(12, 12))),
                    ErrorKind::ill_posed);
}

TEST(FlrRepresenter, ScalarCase) {
  const GridPtr g = make_uniform_grid(5);
  const Mat gram = kernel_gram(KernelSpec::periodic_bernoulli(), *g);
  Mat x(1, 5);
  x << 0.3, -1.0, 0.5, 2.0, 0.1;
  const Vec a = g->weights().cwiseProduct(x.row(0).transpose());
  const double sigma2 = a.dot(gram * a), lam = 0.7;
  const FlrFit f = flr_fit_representer(g, x, Vec::Ones(1), gram, lam);
  const Vec expect = gram * a / (sigma2 + lam);
  EXPECT_LE(rel_err(f.coef.values, expect), 1e-12);
}

TEST(FlrRepresenter, LargeLambdaShrinks) {
  std::mt19937_64 rng(57);
  const Instance in = make_instance(6, 10, rng);
  const Mat gram = kernel_gram(KernelSpec::sim_bernoulli(), *in.grid);
  const double base = flr_fit_representer(in.grid, in.x, in.y, gram, 1e-3).coef.values.cwiseAbs().maxCoeff();
  const double big = flr_fit_representer(in.grid, in.x, in.y, gram, 1e8).coef.values.cwiseAbs().maxCoeff();
  EXPECT_LT(big, 1e-5 * base);
  EXPECT_FBLR_ERROR(flr_fit_representer(in.grid, in.x, in.y, gram, 0.0), ErrorKind::invalid_argument);
}

TEST(Gcv, HandValues) {
  const Vec y = (Vec(3) << 1.0, -2.0, 0.5).finished();
  EXPECT_DOUBLE_EQ(gcv_score(0.0, y, 3), y.squaredNorm() / 3);
  EXPECT_EQ(gcv_score(1.0, Vec::Zero(3), 3), 0.0);
  EXPECT_DOUBLE_EQ(gcv_score(2.0, Vec::Ones(4), 4), 4.0);
  EXPECT_FBLR_ERROR(gcv_score(4.0, Vec::Ones(4), 4), ErrorKind::degenerate_gcv);
}

TEST(SelectLambda, SingleAndDuplicateGrid) {
  std::mt19937_64 rng(58);
  const Instance in = make_instance(10, 8, rng);
  const Mat base = rkhs_quadform(KernelSpec::sim_bernoulli(), in.grid).m;
  const auto family = [&](double l) { return Mat(l * base); };
  EXPECT_EQ(select_lambda(in.grid, in.x, in.y, family, {0.01}).lambda, 0.01);
  const std::vector<double> dup{1e-4, 1e-3, 1e-3, 1e-2};
  const LambdaSelection a = select_lambda(in.grid, in.x, in.y, family, dup);
  const LambdaSelection b = select_lambda(in.grid, in.x, in.y, family, dup);
  EXPECT_EQ(a.index, b.index);
  EXPECT_EQ(a.lambda, b.lambda);
}

TEST(SelectLambda, NoiseIsNotFitToTheLimit) {
  std::mt19937_64 rng(59);
  const Instance in = make_instance(40, 15, rng);  // y is independent of x
  const auto family = [&](double l) { return Mat(l * Mat::Identity(15, 15)); };
  const std::vector<double> grid = log_grid(1e-8, 1e2, 21);
  const LambdaSelection sel = select_lambda(in.grid, in.x, in.y, family, grid);
  EXPECT_GT(sel.index, 0);
  EXPECT_EQ(sel.scores.size(), grid.size());
}

TEST(SelectLambda, AllFailuresReported) {
  std::mt19937_64 rng(60);
  const Instance in = make_instance(3, 12, rng);
  const auto family = [&](double) { return Mat(Mat::Zero(12, 12)); };
  EXPECT_FBLR_ERROR(select_lambda(in.grid, in.x, in.y, family, {1.0, 2.0}), ErrorKind::no_valid_lambda);
  EXPECT_FBLR_ERROR(select_lambda(in.grid, in.x, in.y, family, {}), ErrorKind::invalid_argument);
}

TEST(SelectLambda, ArgminInvariantToResponseScale) {
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 5; ++rep) {
    Instance in = make_instance(25, 12, rng);
    in.y += in.x * in.grid->weights().asDiagonal() * Vec::LinSpaced(12, -1.0, 2.0);
    const Mat base = rkhs_quadform(KernelSpec::sim_bernoulli(), in.grid).m;
    const auto family = [&](double l) { return Mat(l * base); };
    const std::vector<double> grid = default_lambda_grid();
    const LambdaSelection a = select_lambda(in.grid, in.x, in.y, family, grid);
    const LambdaSelection b = select_lambda(in.grid, in.x, Vec(3.0 * in.y), family, grid);
    EXPECT_EQ(a.index, b.index);
    EXPECT_LE(rel_err(b.fit.gcv, 9.0 * a.fit.gcv), 1e-8);
  }
}

TEST(SelectLambda, RepresenterPathMatchesDirectFits) {
  std::mt19937_64 rng(62);
  const Instance in = make_instance(12, 14, rng);
  const KernelSpec k = KernelSpec::sim_bernoulli();
  const std::vector<double> grid = log_grid(1e-6, 1e-1, 6);
  const LambdaSelection sel = select_lambda_representer(in.grid, in.x, in.y, k, grid);
  const Mat gram = kernel_gram(k, *in.grid);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const FlrFit f = flr_fit_representer(in.grid, in.x, in.y, gram, grid[j]);
    EXPECT_LE(rel_err(sel.scores[j], f.gcv), 1e-8) << j;
  }
  const FlrFit best = flr_fit_representer(in.grid, in.x, in.y, gram, sel.lambda);
  EXPECT_LE(rel_err(sel.fit.coef.values, best.coef.values), 1e-8);
}

TEST(LambdaGrid, Defaults) {
  const std::vector<double> g = default_lambda_grid();
  ASSERT_EQ(g.size(), 25u);
  EXPECT_DOUBLE_EQ(g.front(), 1e-10);
  EXPECT_DOUBLE_EQ(g.back(), 1.0);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_NEAR(std::log10(g[k] / g[k - 1]), 10.0 / 24.0, 1e-12);
}
