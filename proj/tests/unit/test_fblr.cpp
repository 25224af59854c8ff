#include "helpers.hpp"

#include "fblr/fblr.hpp"
#include "fblr/simulate.hpp"

using namespace fblr;
using namespace fblr::testing;

namespace {

SimData small_sim(int n, int grid_len, std::uint64_t seed, double sigma = 0.5) {
  SettingSpec spec = setting_spec(1, 1.0, n, seed);
  spec.grid_len = grid_len;
  spec.sigma = sigma;
  return simulate_setting(spec);
}

FblrForms forms_for(const SimData& sim) {
  return make_forms(sim.true_cov, KernelSpec::sim_bernoulli(), KernelSpec::sim_bernoulli());
}

FblrConfig fixed_config(const SimData& sim, double la, double lb) {
  FblrConfig cfg;
  cfg.lambda_alpha = la;
  cfg.lambda_beta = lb;
  cfg.covariance = sim.true_cov;
  return cfg;
}

}  // namespace

TEST(Penalty, ModesAndIdentities) {
  std::mt19937_64 rng(71);
  const SimData sim = small_sim(10, 12, 1);
  const FblrForms f = forms_for(sim);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec a = random_vec(12, rng), b = random_vec(12, rng);
    const double la = 0.3, lb = 0.02;
    const double a0 = f.m0s(a), ak = f.mks(a), b0 = f.m0t(b), bk = f.mkt(b);
    const double j1 = penalty_j(a, b, la, lb, f, PenaltyMode::candidate1);
    const double j2 = penalty_j(a, b, la, lb, f, PenaltyMode::candidate2);
    const double j3 = penalty_j(a, b, la, lb, f, PenaltyMode::candidate3);
    EXPECT_NEAR(j3, j1 + j2, 1e-12 * j3);
    // Decoupled form: (la |a|_K^2 + |a|_0^2)(lb |b|_K^2 + |b|_0^2) - |a|_0^2 |b|_0^2.
    EXPECT_LE(rel_err(j3, (la * ak + a0) * (lb * bk + b0) - a0 * b0), 1e-10);
    // Only the product alpha beta' matters.
    EXPECT_LE(rel_err(penalty_j(7.0 * a, b / 7.0, la, lb, f, PenaltyMode::candidate3), j3), 1e-12);
    EXPECT_EQ(penalty_j(a, b, 0.0, 0.0, f, PenaltyMode::candidate3), 0.0);
  }
}

TEST(Penalty, ModeNames) {
  for (PenaltyMode m : {PenaltyMode::candidate1, PenaltyMode::candidate2, PenaltyMode::candidate3})
    EXPECT_EQ(parse_penalty_mode(penalty_mode_name(m)), m);
  EXPECT_FBLR_ERROR(parse_penalty_mode("candidate4"), ErrorKind::invalid_argument);
}

TEST(StepPenalty, EqualsJointPenaltyOnFreeBlock) {
  std::mt19937_64 rng(72);
  const SimData sim = small_sim(10, 9, 2);
  const FblrForms f = forms_for(sim);
  const double la = 0.05, lb = 0.4;
  for (PenaltyMode mode : {PenaltyMode::candidate1, PenaltyMode::candidate2, PenaltyMode::candidate3}) {
    const Vec a = random_vec(9, rng);
    const QuadForm pb = step_penalty_quadform(a, la, lb, f.m0s, f.mks, f.m0t, f.mkt, mode);
    const QuadForm pa = step_penalty_quadform(a, lb, la, f.m0t, f.mkt, f.m0s, f.mks, mode);
    for (int k = 0; k < 5; ++k) {
      const Vec b = random_vec(9, rng);
      const double j = penalty_j(a, b, la, lb, f, mode);
      const double jt = penalty_j(b, a, la, lb, f, mode);  // alpha-step: a plays beta
      EXPECT_LE(rel_err(b.dot(pb.m * b), j), 1e-10);
      EXPECT_LE(rel_err(b.dot(pa.m * b), jt), 1e-10);
    }
  }
}

TEST(StepPenalty, HandAssembly) {
  const GridPtr g = make_uniform_grid(3);
  const QuadForm m0(g, Mat::Identity(3, 3)), mk(g, 2.0 * Mat::Identity(3, 3));
  const Vec fixed = Vec::Ones(3);  // |.|_0^2 = 3, |.|_K^2 = 6
  const QuadForm p = step_penalty_quadform(fixed, 0.5, 0.1, m0, mk, m0, mk, PenaltyMode::candidate3);
  // c0 = 0.5 * 6 = 3, cK = 0.1 * 3 + 0.05 * 6 = 0.6
  EXPECT_LE(rel_err(p.m, Mat((3.0 + 2.0 * 0.6) * Mat::Identity(3, 3))), 1e-14);
  EXPECT_FBLR_ERROR(step_penalty_quadform(fixed, 0.0, 0.0, m0, mk, m0, mk, PenaltyMode::candidate3),
                    ErrorKind::degenerate_step_norm);
  EXPECT_FBLR_ERROR(step_penalty_quadform(Vec::Zero(3), 1.0, 1.0, m0, mk, m0, mk, PenaltyMode::candidate3),
                    ErrorKind::degenerate_step_norm);
}

TEST(TildeX, MatchesLoop) {
  std::mt19937_64 rng(73);
  const SimData sim = small_sim(7, 10, 3);
  const Vec a = random_vec(10, rng);
  const Mat tx = tilde_x(a, sim.data);
  const Vec& w = sim.data.s_grid->weights();
  for (int i = 0; i < 7; ++i)
    for (int k = 0; k < 10; ++k) {
      double acc = 0.0;
      for (int j = 0; j < 10; ++j) acc += w[j] * a[j] * sim.data.x[i](j, k);
      EXPECT_NEAR(tx(i, k), acc, 1e-12);
    }
}

TEST(BetaStep, MinimizesObjective) {
  std::mt19937_64 rng(74);
  const SimData sim = small_sim(6, 8, 4);
  const FblrForms f = forms_for(sim);
  const Vec a = random_vec(8, rng);
  const double la = 1e-2, lb = 1e-3;
  const Vec b = beta_step(sim.data, a, la, lb, f, FblrConfig{});
  const auto obj = [&](const Vec& v) { return objective(a, v, sim.data, la, lb, f, PenaltyMode::candidate3); };
  const double best = obj(b);
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vec d = 1e-4 * scale * random_vec(8, rng);
    EXPECT_GE(obj(b + d) - best, -1e-12 * std::abs(best)) << k;
  }
  // Central-difference gradient vanishes.
  for (int j = 0; j < 8; ++j) {
    const double e = 1e-5 * scale;
    const double grad = (obj(b + e * Vec::Unit(8, j)) - obj(b - e * Vec::Unit(8, j))) / (2 * e);
    EXPECT_NEAR(grad, 0.0, 1e-6 * std::max(1.0, best / scale));
  }
}

TEST(Normalize, UnitNormAndSign) {
  const GridPtr g = make_uniform_grid(11);
  Vec a = -Vec::LinSpaced(11, 0.0, 2.0);
  const Vec b = Vec::LinSpaced(11, 1.0, 3.0);
  const auto [na, nb] = normalize_pair(Func1D(g, a), Func1D(g, b));
  EXPECT_NEAR(quad_inner(na, na), 1.0, 1e-14);
  Eigen::Index imax;
  na.values.cwiseAbs().maxCoeff(&imax);
  EXPECT_GT(na.values[imax], 0.0);
  EXPECT_LE(rel_err(Mat(na.values * nb.values.transpose()), Mat(a * b.transpose())), 1e-14);
  EXPECT_FBLR_ERROR(normalize_pair(Func1D(g, Vec::Zero(11)), Func1D(g, b)), ErrorKind::degenerate_iterate);
}

TEST(Init, InvariantToResponseAndCovariateScale) {
  const SimData sim = small_sim(30, 10, 5);
  const std::vector<double> grid = default_lambda_grid();
  const InitResult base = init_ridge_svd(sim.data, grid);
  ASSERT_FALSE(base.fallback);
  EXPECT_NEAR(quad_inner(base.alpha, base.alpha), 1.0, 1e-12);
  TwoWayDataset scaled_y = sim.data;
  scaled_y.y *= 5.0;
  EXPECT_LE(rel_err(init_ridge_svd(scaled_y, grid).alpha.values, base.alpha.values), 1e-8);
  TwoWayDataset scaled_x = sim.data;
  for (Mat& x : scaled_x.x) x *= 3.0;
  EXPECT_LE(rel_err(init_ridge_svd(scaled_x, grid).alpha.values, base.alpha.values), 1e-8);
}

TEST(Init, ZeroResponseFallsBack) {
  SimData sim = small_sim(12, 8, 6);
  sim.data.y.setZero();
  const InitResult init = init_ridge_svd(sim.data, default_lambda_grid());
  EXPECT_TRUE(init.fallback);
  EXPECT_NEAR(quad_inner(init.alpha, init.alpha), 1.0, 1e-12);
}

TEST(FblrFit, TraceNonincreasingAndNormalized) {
  const SimData sim = small_sim(40, 15, 7);
  const FblrFit f = fblr_fit(sim.data, fixed_config(sim, 1e-4, 1e-4));
  ASSERT_FALSE(f.objective_trace.empty());
  for (std::size_t k = 1; k < f.objective_trace.size(); ++k)
    EXPECT_LE(f.objective_trace[k], f.objective_trace[k - 1] * (1 + 1e-9) + 1e-12);
  EXPECT_NEAR(quad_inner(f.alpha_hat, f.alpha_hat), 1.0, 1e-12);
  const FblrForms forms = forms_for(sim);
  EXPECT_LE(rel_err(objective(f.alpha_hat.values, f.beta_hat.values, sim.data, 1e-4, 1e-4, forms,
                              PenaltyMode::candidate3),
                    f.objective),
            1e-8);
  EXPECT_TRUE(f.converged);
  // Training predictions agree with the fitted values.
  EXPECT_LE((predict(f, [&] {
               std::vector<Mat> raw = sim.data.x;
               for (Mat& x : raw) x += sim.data.x_mean;
               return raw;
             }()) - (f.fitted.array() + f.mu_hat).matrix())
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
}

TEST(FblrFit, Errors) {
  const SimData sim = small_sim(20, 8, 8);
  EXPECT_FBLR_ERROR(fblr_fit(sim.data, fixed_config(sim, 0.0, 0.0)), ErrorKind::degenerate_step_norm);
  EXPECT_FBLR_ERROR(fblr_fit(sim.data, fixed_config(sim, -1.0, 1.0)), ErrorKind::invalid_argument);
  TwoWayDataset raw = sim.data;
  raw.centered = false;
  EXPECT_FBLR_ERROR(fblr_fit(raw, fixed_config(sim, 1e-3, 1e-3)), ErrorKind::precondition);
}

TEST(Igcv, CollapsedGridMatchesFixedFit) {
  const SimData sim = small_sim(40, 12, 9);
  FblrConfig tuned;
  tuned.covariance = sim.true_cov;
  tuned.lambda_grid = {3e-4};
  tuned.coef_tol = 1e-8;
  tuned.obj_tol = 1e-12;
  tuned.max_outer_iter = 200;
  FblrConfig fixed = fixed_config(sim, 3e-4, 3e-4);
  fixed.coef_tol = 1e-8;
  fixed.obj_tol = 1e-12;
  fixed.max_outer_iter = 200;
  const FblrFit a = igcv_fit(sim.data, tuned);
  const FblrFit b = fblr_fit(sim.data, fixed);
  EXPECT_EQ(a.lambda_alpha, 3e-4);
  EXPECT_EQ(a.lambda_beta, 3e-4);
  EXPECT_LE(rel_err(a.coefficient_field(), b.coefficient_field()), 1e-5);
}

TEST(Igcv, TunedFitIsMonotoneAndUsesGrid) {
  const SimData sim = small_sim(64, 20, 10);
  FblrConfig cfg;
  cfg.covariance = sim.true_cov;
  const FblrFit f = fit(sim.data, cfg);
  const std::vector<double> grid = default_lambda_grid();
  EXPECT_NE(std::find(grid.begin(), grid.end(), f.lambda_alpha), grid.end());
  EXPECT_NE(std::find(grid.begin(), grid.end(), f.lambda_beta), grid.end());
  for (std::size_t k = 1; k < f.objective_trace.size(); ++k)
    EXPECT_LE(f.objective_trace[k], f.objective_trace[k - 1] * (1 + 1e-9) + 1e-12);
  const double risk = excess_risk_oracle(f.coefficient_field() - sim.truth.field, sim.true_cov);
  EXPECT_LT(risk, excess_risk_oracle(sim.truth.field, sim.true_cov));
}

TEST(Blr, InsufficientSample) {
  const SimData sim = small_sim(4, 100, 11);
  FblrConfig cfg;
  cfg.covariance = sim.true_cov;
  EXPECT_FBLR_ERROR(blr_fit(sim.data, cfg), ErrorKind::insufficient_sample);
}

TEST(Blr, NoiselessRecovery) {
  const SimData sim = small_sim(120, 8, 12, 0.0);
  FblrConfig cfg;
  cfg.covariance = sim.true_cov;
  const FblrFit f = blr_fit(sim.data, cfg);
  EXPECT_LE(rel_err(f.coefficient_field(), sim.truth.field), 1e-5);
}

TEST(RankR, StagesReduceResidualAndPredict) {
  const SimData sim = small_sim(50, 10, 13);
  FblrConfig cfg = fixed_config(sim, 1e-4, 1e-4);
  const RankRFit r = rank_r_fit(sim.data, 2, cfg);
  ASSERT_EQ(r.stages.size(), 2u);
  EXPECT_LE(r.train_rss[1], r.train_rss[0] * (1 + 1e-9));
  EXPECT_LE(r.train_rss[0], sim.data.y.squaredNorm());
  const RankRFit one = rank_r_fit(sim.data, 1, cfg);
  const Mat x = sim.data.x[3] + sim.data.x_mean;
  EXPECT_NEAR(predict(one, x), predict(one.stages[0], x), 1e-10);
  EXPECT_FBLR_ERROR(rank_r_fit(sim.data, 0, cfg), ErrorKind::invalid_argument);
  EXPECT_FBLR_ERROR(predict(one.stages[0], Mat::Zero(3, 3)), ErrorKind::dimension);
}
