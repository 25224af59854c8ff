#include "helpers.hpp"

#include "fblr/kernels.hpp"

using namespace fblr;
using namespace fblr::testing;

TEST(Bernoulli, HandValues) {
  EXPECT_DOUBLE_EQ(bernoulli_b4(0.0), -1.0 / 30.0);
  EXPECT_NEAR(bernoulli_b4(1.0), -1.0 / 30.0, 1e-15);
  // direct evaluation of x^4 - 2x^3 + x^2 - 1/30 at 1/2
  EXPECT_NEAR(bernoulli_b4(0.5), 0.0625 - 0.25 + 0.25 - 1.0 / 30.0, 1e-15);
  EXPECT_NEAR(bernoulli_b4(0.5), 7.0 / 240.0, 1e-15);
}

TEST(KernelGram, CornerValues) {
  const Grid1D g(11);
  EXPECT_NEAR(kernel_gram(KernelSpec::sim_bernoulli(), g)(0, 0), 1.0 / 45.0, 1e-15);
  const Mat p = kernel_gram(KernelSpec::periodic_bernoulli(), g);
  for (int k = 0; k < 11; ++k) EXPECT_NEAR(p(k, k), 1.0 + 1.0 / 720.0, 1e-15);
}

TEST(KernelGram, SymmetricPsd) {
  for (int m : {50, 100, 200}) {
    const Grid1D g(m);
    for (const KernelSpec& spec : {KernelSpec::sim_bernoulli(), KernelSpec::periodic_bernoulli()}) {
      const Mat k = kernel_gram(spec, g);
      EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      Eigen::SelfAdjointEigenSolver<Mat> es(k, Eigen::EigenvaluesOnly);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * es.eigenvalues().maxCoeff()) << kernel_name(spec) << m;
    }
  }
}

TEST(KernelGram, SecondDerivHasNoGram) {
  EXPECT_FBLR_ERROR(kernel_gram(KernelSpec::second_deriv(), Grid1D(5)), ErrorKind::unsupported_spec);
}

TEST(KernelGram, ApplyMatchesDenseProduct) {
  std::mt19937_64 rng(11);
  for (int m : {2, 7, 64, 151}) {
    const Grid1D g(m);
    const Vec v = random_vec(m, rng);
    for (const KernelSpec& spec : {KernelSpec::sim_bernoulli(), KernelSpec::periodic_bernoulli()}) {
      const Vec dense = kernel_gram(spec, g) * v;
      EXPECT_LE(rel_err(kernel_apply(spec, g, v), dense), 1e-12) << kernel_name(spec) << m;
    }
  }
}

TEST(KernelSpecNames, RoundTrip) {
  for (const std::string name : {"sim-bernoulli", "periodic-bernoulli", "second-deriv"})
    EXPECT_EQ(kernel_name(parse_kernel_spec(name)), name);
  EXPECT_FBLR_ERROR(parse_kernel_spec("gaussian"), ErrorKind::unsupported_spec);
}

TEST(RkhsQuadForm, SecondDerivNullSpace) {
  const GridPtr g = make_uniform_grid(41);
  const QuadForm m = rkhs_quadform(KernelSpec::second_deriv(), g);
  const Vec one = Vec::Ones(41);
  EXPECT_EQ(m(one), 0.0);
  const double scale = m.m.cwiseAbs().maxCoeff();
  EXPECT_LE(std::abs(m(g->points())), 1e-12 * scale);
  EXPECT_LE(std::abs(m(2.0 * one - 3.0 * g->points())), 1e-12 * scale);
  for (int k = 1; k <= 6; ++k) {
    const Func1D c = sample_func(g, [k](double t) { return std::cos(k * M_PI * t); });
    EXPECT_GT(m(c), 0.0);
  }
}

TEST(RkhsQuadForm, SecondDerivCosine) {
  const GridPtr g = make_uniform_grid(101);
  const Func1D c = sample_func(g, [](double t) { return std::cos(M_PI * t); });
  const double expect = std::pow(M_PI, 4) / 2.0;
  EXPECT_LE(rel_err(rkhs_quadform(KernelSpec::second_deriv(), g)(c), expect), 1e-2);
}

TEST(RkhsQuadForm, RepresenterNormOracle) {
  // f = G c~ with c~ = W v and v in the top eigenspace of W G W gives f'Mf = c~' G c~.
  std::mt19937_64 rng(12);
  for (const KernelSpec& spec : {KernelSpec::sim_bernoulli(), KernelSpec::periodic_bernoulli()}) {
    const GridPtr g = make_uniform_grid(60);
    const Mat gram = kernel_gram(spec, *g);
    const Vec& w = g->weights();
    const Mat wgw = w.asDiagonal() * gram * w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (wgw + wgw.transpose()));
    const Mat top = es.eigenvectors().rightCols(8);
    const QuadForm m = rkhs_quadform(spec, g);
    for (int rep = 0; rep < 5; ++rep) {
      const Vec c = w.asDiagonal() * (top * random_vec(8, rng));
      const Vec f = gram * c;
      EXPECT_LE(rel_err(m(f), c.dot(gram * c)), 1e-6) << kernel_name(spec);
    }
  }
}

TEST(RkhsQuadForm, CustomIndefiniteRejected) {
  const GridPtr g = make_uniform_grid(3);
  Mat k = Mat::Identity(3, 3);
  k(1, 1) = -1.0;
  EXPECT_FBLR_ERROR(rkhs_quadform(KernelSpec::custom(k), g), ErrorKind::numeric);
}

TEST(CosineCovariance, CornerValue) {
  const GridPtr g = make_uniform_grid(21);
  const CosineCovariance c = cosine_covariance(1.0, 200, g);
  double partial = 0.0;
  for (int i = 1; i <= 200; ++i) partial += 2.0 / (double(i) * i);
  EXPECT_NEAR(c.matrix(0, 0), partial, 1e-12);
  EXPECT_NEAR(c.matrix(0, 0), 3.2799, 1e-4);
}

TEST(CosineCovariance, SymmetricPsdAndReconstruction) {
  const GridPtr g = make_uniform_grid(30);
  for (double rc : {1.0, 1.5, 2.0, 2.5}) {
    const CosineCovariance c = cosine_covariance(rc, 200, g);
    EXPECT_LE((c.matrix - c.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat> es(c.matrix, Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * es.eigenvalues().maxCoeff());
    // brute-force sum over terms
    Mat brute = Mat::Zero(30, 30);
    for (int i = 1; i <= 200; ++i)
      for (int a = 0; a < 30; ++a)
        for (int b = 0; b < 30; ++b)
          brute(a, b) += 2.0 * std::pow(i, -2.0 * rc) * std::cos(i * M_PI * g->point(a)) *
                         std::cos(i * M_PI * g->point(b));
    EXPECT_LE((c.matrix - brute).cwiseAbs().maxCoeff(), 1e-10) << rc;
    EXPECT_DOUBLE_EQ(c.spectral.eigenvalues[0], 1.0);
    for (int k = 1; k < c.spectral.terms(); ++k) EXPECT_GE(c.spectral.eigenvalues[k - 1], c.spectral.eigenvalues[k]);
  }
}

TEST(CosineCovariance, EigenfunctionsOrthonormal) {
  const GridPtr g = make_uniform_grid(101);
  const CosineCovariance c = cosine_covariance(1.0, 5, g);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      EXPECT_NEAR(quad_inner(c.spectral.eigenfunction(i), c.spectral.eigenfunction(j)), i == j ? 1.0 : 0.0, 1e-3);
}

TEST(CosineCovariance, RejectsBadArguments) {
  const GridPtr g = make_uniform_grid(5);
  EXPECT_FBLR_ERROR(cosine_covariance(0.0, 10, g), ErrorKind::invalid_argument);
  EXPECT_FBLR_ERROR(cosine_covariance(1.0, 0, g), ErrorKind::invalid_argument);
}
