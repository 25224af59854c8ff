#include "fblr/fblr.hpp"

#include <cmath>
#include <limits>

#include "fblr/parallel.hpp"

namespace fblr {

PenaltyMode parse_penalty_mode(const std::string& name) {
  if (name == "candidate1" || name == "1") return PenaltyMode::candidate1;
  if (name == "candidate2" || name == "2") return PenaltyMode::candidate2;
  if (name == "candidate3" || name == "3") return PenaltyMode::candidate3;
  throw Error(ErrorKind::invalid_argument, "unknown penalty mode '" + name + "'");
}

std::string penalty_mode_name(PenaltyMode mode) {
  switch (mode) {
    case PenaltyMode::candidate1: return "candidate1";
    case PenaltyMode::candidate2: return "candidate2";
    case PenaltyMode::candidate3: return "candidate3";
  }
  return "unknown";
}

FblrForms make_forms(const SeparableCov& cov, const KernelSpec& kernel_s, const KernelSpec& kernel_t) {
  FblrForms f{cov.m0_alpha(), rkhs_quadform(kernel_s, cov.s_grid), cov.m0_beta(),
              rkhs_quadform(kernel_t, cov.t_grid)};
  for (QuadForm* q : {&f.m0s, &f.mks, &f.m0t, &f.mkt})
    if (q->factor.size() == 0) q->factorize();
  return f;
}

double penalty_j_norms(double a0, double ak, double b0, double bk, double la, double lb, PenaltyMode mode) {
  const double first = la * ak * b0;
  const double second = lb * a0 * bk;
  const double third = la * lb * ak * bk;
  switch (mode) {
    case PenaltyMode::candidate1: return third;
    case PenaltyMode::candidate2: return first + second;
    case PenaltyMode::candidate3: return first + second + third;
  }
  return 0.0;
}

double penalty_j(const Vec& alpha, const Vec& beta, double la, double lb, const FblrForms& forms,
                 PenaltyMode mode) {
  require_same_size(alpha.size(), forms.m0s.size(), "penalty: alpha does not match s forms");
  require_same_size(beta.size(), forms.m0t.size(), "penalty: beta does not match t forms");
  return penalty_j_norms(forms.m0s(alpha), forms.mks(alpha), forms.m0t(beta), forms.mkt(beta), la, lb, mode);
}

double objective(const Vec& alpha, const Vec& beta, const TwoWayDataset& data, double la, double lb,
                 const FblrForms& forms, PenaltyMode mode) {
  require(data.centered, ErrorKind::precondition, "objective needs centered data");
  require_same_size(alpha.size(), data.p(), "objective: alpha does not match s grid");
  require_same_size(beta.size(), data.q(), "objective: beta does not match t grid");
  const Vec ws_a = data.s_grid->weights().cwiseProduct(alpha);
  const Vec wt_b = data.t_grid->weights().cwiseProduct(beta);
  const Vec yhat = bilinear_batch(data.x, ws_a, wt_b);
  return (data.y - yhat).squaredNorm() / data.n() + penalty_j(alpha, beta, la, lb, forms, mode);
}

QuadForm step_penalty_quadform(const Vec& fixed, double lam_fixed, double lam_free, const QuadForm& m0_fixed,
                               const QuadForm& mk_fixed, const QuadForm& m0_free, const QuadForm& mk_free,
                               PenaltyMode mode) {
  require_same_size(fixed.size(), m0_fixed.size(), "step penalty: fixed block does not match its forms");
  require_same_size(m0_free.size(), mk_free.size(), "step penalty: free forms differ in size");
  const double f0 = m0_fixed(fixed);
  const double fk = mk_fixed(fixed);
  double c0 = lam_fixed * fk;
  double ck = lam_free * f0 + lam_fixed * lam_free * fk;
  if (mode == PenaltyMode::candidate1) {
    c0 = 0.0;
    ck = lam_fixed * lam_free * fk;
  } else if (mode == PenaltyMode::candidate2) {
    ck = lam_free * f0;
  }
  require(std::isfinite(c0) && std::isfinite(ck), ErrorKind::numeric, "step penalty: non-finite coefficient");
  require(c0 > 0.0 || ck > 0.0, ErrorKind::degenerate_step_norm, "step penalty vanishes for the fixed block");
  return QuadForm(m0_free.grid, c0 * m0_free.m + ck * mk_free.m);
}

Mat tilde_x(const Vec& alpha, const TwoWayDataset& data) {
  require_same_size(alpha.size(), data.p(), "tilde_x: alpha does not match s grid");
  return contract_s(data.x, data.s_grid->weights().cwiseProduct(alpha));
}

Mat ridge_vec_field(const TwoWayDataset& data, const std::vector<double>& lambda_grid, double* selected_lambda) {
  require(data.centered, ErrorKind::precondition, "ridge needs centered data");
  require(!lambda_grid.empty(), ErrorKind::invalid_argument, "empty ridge lambda grid");
  const int n = data.n();
  const Vec& ws = data.s_grid->weights();
  const Vec& wt = data.t_grid->weights();
  const Mat gram = weighted_design_gram(data.x, ws, wt);
  const double scale = gram.trace() / n;
  if (!(scale > 0.0) || !std::isfinite(scale)) return Mat::Zero(data.p(), data.q());

  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (gram + gram.transpose()));
  const Vec ev = es.eigenvalues().cwiseMax(0.0);
  const Mat& u = es.eigenvectors();
  const Vec uy = u.transpose() * data.y;

  double best = std::numeric_limits<double>::infinity();
  double lam = lambda_grid.front() * scale;
  for (double l : lambda_grid) {
    const double nl = n * l * scale;
    const Vec shrink = ev.array() / (ev.array() + nl);
    const double tr = shrink.sum();
    if (tr >= n) continue;
    const Vec resid = u * ((1.0 - shrink.array()) * uy.array()).matrix();
    const double g = gcv_score(tr, resid, n);
    if (g < best || (g == best && l * scale > lam)) {
      best = g;
      lam = l * scale;
    }
  }
  require(std::isfinite(best), ErrorKind::no_valid_lambda, "ridge: no lambda gave a valid fit");
  if (selected_lambda) *selected_lambda = lam;

  const Vec c = u * (uy.array() / (ev.array() + n * lam)).matrix();
  Mat field = Mat::Zero(data.p(), data.q());
  for (int i = 0; i < n; ++i) field += c[i] * data.x[i];
  return ws.asDiagonal() * field * wt.asDiagonal();
}

std::pair<Func1D, Func1D> normalize_pair(const Func1D& alpha, const Func1D& beta) {
  const double na = std::sqrt(std::max(quad_inner(alpha, alpha), 0.0));
  const double nb = std::sqrt(std::max(quad_inner(beta, beta), 0.0));
  require(na > 1e-12 && nb > 1e-12 && std::isfinite(na) && std::isfinite(nb), ErrorKind::degenerate_iterate,
          "coefficient block has (near) zero norm");
  Eigen::Index imax = 0;
  alpha.values.cwiseAbs().maxCoeff(&imax);
  const double sign = alpha.values[imax] < 0.0 ? -1.0 : 1.0;
  const double c = sign / na;
  return {Func1D(alpha.grid, alpha.values * c), Func1D(beta.grid, beta.values / c)};
}

InitResult init_ridge_svd(const TwoWayDataset& data, const std::vector<double>& lambda_grid) {
  const Mat field = ridge_vec_field(data, lambda_grid);
  const Vec& ws = data.s_grid->weights();
  const Vec& wt = data.t_grid->weights();
  InitResult out;
  if (field.allFinite() && field.cwiseAbs().maxCoeff() > 0.0) {
    const Mat scaled = ws.cwiseSqrt().asDiagonal() * field * wt.cwiseSqrt().asDiagonal();
    Eigen::BDCSVD<Mat> svd(scaled, Eigen::ComputeThinU);
    if (svd.singularValues()[0] > 0.0) {
      const Vec a = svd.matrixU().col(0).cwiseQuotient(ws.cwiseSqrt());
      const auto [alpha, unused] = normalize_pair(Func1D(data.s_grid, a), Func1D(data.t_grid, Vec::Ones(data.q())));
      out.alpha = alpha;
      return out;
    }
  }
  out.fallback = true;
  const auto [alpha, unused] =
      normalize_pair(Func1D(data.s_grid, Vec::Ones(data.p())), Func1D(data.t_grid, Vec::Ones(data.q())));
  out.alpha = alpha;
  return out;
}

namespace {

// Everything one fit needs besides the iterate.
struct Context {
  const TwoWayDataset& data;
  const FblrConfig& config;
  SeparableCov cov;
  FblrForms forms;
  FlrOptions solver;
  double obj_floor = 0.0;  // absolute slack of the monotonicity guard
};

struct HalfStep {
  Vec coef;
  Vec fitted;
  double lambda = 0.0;
};

Context make_context(const TwoWayDataset& data, const FblrConfig& config) {
  require(data.centered, ErrorKind::precondition, "FBLR needs centered data");
  data.validate();
  Context ctx{data, config, {}, {}, config.solver, 0.0};
  ctx.cov = config.covariance ? *config.covariance : flipflop_estimate(data, config.flipflop);
  require(ctx.cov.c_alpha.rows() == data.p() && ctx.cov.c_beta.rows() == data.q(), ErrorKind::dimension,
          "covariance does not match data grids");
  ctx.forms = make_forms(ctx.cov, config.kernel_s, config.kernel_t);
  if (config.unpenalized) {
    require(data.n() > data.p() + data.q(), ErrorKind::insufficient_sample,
            "unpenalized fit needs n > p + q");
    ctx.solver.max_condition = std::max(ctx.solver.max_condition, 1e14);
    ctx.solver.singular_kind = ErrorKind::insufficient_sample;
  }
  ctx.obj_floor = 1e-13 * data.y.squaredNorm() / data.n();
  return ctx;
}

Vec initial_alpha(const Context& ctx, bool* fallback) {
  *fallback = false;
  if (ctx.config.init_alpha) {
    require_same_size(ctx.config.init_alpha->size(), ctx.data.p(), "initial alpha does not match s grid");
    return *ctx.config.init_alpha;
  }
  InitResult init = init_ridge_svd(ctx.data, ctx.config.lambda_grid);
  *fallback = init.fallback;
  return init.alpha.values;
}

// One block update. beta_step: fixed block alpha, free beta on the t grid.
struct Side {
  bool beta_step;
  const QuadForm* m0_fixed;
  const QuadForm* mk_fixed;
  const QuadForm* m0_free;
  const QuadForm* mk_free;
  GridPtr free_grid;
};

Side side_for(const Context& ctx, bool beta_step) {
  const FblrForms& f = ctx.forms;
  if (beta_step) return {true, &f.m0s, &f.mks, &f.m0t, &f.mkt, ctx.data.t_grid};
  return {false, &f.m0t, &f.mkt, &f.m0s, &f.mks, ctx.data.s_grid};
}

Mat step_design(const Context& ctx, const Side& side, const Vec& fixed) {
  if (side.beta_step) return contract_s(ctx.data.x, ctx.data.s_grid->weights().cwiseProduct(fixed));
  return contract_t(ctx.data.x, ctx.data.t_grid->weights().cwiseProduct(fixed));
}

Mat step_penalty(const Context& ctx, const Side& side, const Vec& fixed, double lam_fixed, double lam_free,
                 const RidgeSystem& sys) {
  if (ctx.config.unpenalized) {
    const int m = sys.m();
    return Mat::Identity(m, m) * (1e-10 * sys.gram().trace() / m);
  }
  return step_penalty_quadform(fixed, lam_fixed, lam_free, *side.m0_fixed, *side.mk_fixed, *side.m0_free,
                               *side.mk_free, ctx.config.penalty_mode)
      .m;
}

HalfStep solve_step(const Context& ctx, const Side& side, const Vec& fixed, double lam_fixed, double lam_free) {
  const RidgeSystem sys(side.free_grid, step_design(ctx, side, fixed), ctx.data.y);
  const FlrFit f = sys.solve(step_penalty(ctx, side, fixed, lam_fixed, lam_free, sys), ctx.solver);
  return {f.coef.values, f.fitted, lam_free};
}

HalfStep tune_step(const Context& ctx, const Side& side, const Vec& fixed, double lam_fixed) {
  const RidgeSystem sys(side.free_grid, step_design(ctx, side, fixed), ctx.data.y);
  const auto family = [&](double lam) { return step_penalty(ctx, side, fixed, lam_fixed, lam, sys); };
  LambdaSelection sel = select_lambda(sys, family, ctx.config.lambda_grid, ctx.solver);
  return {sel.fit.coef.values, sel.fit.fitted, sel.lambda};
}

double eval_objective(const Context& ctx, const Vec& alpha, const Vec& beta, const Vec& fitted, double la,
                      double lb) {
  const double loss = (ctx.data.y - fitted).squaredNorm() / ctx.data.n();
  if (ctx.config.unpenalized) return loss;
  const FblrForms& f = ctx.forms;
  return loss + penalty_j_norms(f.m0s(alpha), f.mks(alpha), f.m0t(beta), f.mkt(beta), la, lb,
                                ctx.config.penalty_mode);
}

void check_iterate(const Vec& v, const Grid1D& grid) {
  require(v.allFinite(), ErrorKind::numeric, "non-finite coefficient iterate");
  require(std::sqrt(quad_inner(grid, v, v)) > 1e-12, ErrorKind::degenerate_iterate, "coefficient iterate vanished");
}

// Appends to the trace and enforces the exact-minimization guard.
void record(const Context& ctx, std::vector<double>& trace, double value) {
  if (!trace.empty()) {
    const double before = trace.back();
    require(value <= before + 1e-9 * std::abs(before) + ctx.obj_floor, ErrorKind::internal,
            "objective increased across a block update");
  }
  trace.push_back(value);
}

double sup_change(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

FblrFit finish(const Context& ctx, const Vec& alpha, const Vec& beta, const Vec& fitted) {
  FblrFit fit;
  auto [a, b] = normalize_pair(Func1D(ctx.data.s_grid, alpha), Func1D(ctx.data.t_grid, beta));
  fit.alpha_hat = std::move(a);
  fit.beta_hat = std::move(b);
  fit.mu_hat = ctx.data.y_mean;
  fit.x_mean = ctx.data.x_mean.size() ? ctx.data.x_mean : Mat(Mat::Zero(ctx.data.p(), ctx.data.q()));
  fit.fitted = fitted;
  fit.cov_used = ctx.cov;
  return fit;
}

}  // namespace

Vec beta_step(const TwoWayDataset& data, const Vec& alpha, double la, double lb, const FblrForms& forms,
              const FblrConfig& config) {
  require(data.centered, ErrorKind::precondition, "FBLR needs centered data");
  require_same_size(alpha.size(), data.p(), "beta_step: alpha does not match s grid");
  require_same_size(forms.m0t.size(), data.q(), "beta_step: forms do not match t grid");
  const Context ctx{data, config, {}, forms, config.solver, 0.0};
  return solve_step(ctx, side_for(ctx, true), alpha, la, lb).coef;
}

FblrFit fblr_fit(const TwoWayDataset& data, const FblrConfig& config) {
  require(config.lambda_alpha && config.lambda_beta, ErrorKind::invalid_argument, "fblr_fit needs fixed lambdas");
  const double la = *config.lambda_alpha, lb = *config.lambda_beta;
  require(la >= 0.0 && lb >= 0.0, ErrorKind::invalid_argument, "lambdas must be nonnegative");
  require(config.max_outer_iter >= 1, ErrorKind::invalid_argument, "max_outer_iter must be positive");
  const Context ctx = make_context(data, config);

  bool fallback = false;
  Vec alpha = initial_alpha(ctx, &fallback);
  Vec beta = Vec::Zero(data.q());
  Vec fitted;
  std::vector<double> trace;
  bool converged = false;
  int it = 0;
  double last_sweep = std::numeric_limits<double>::quiet_NaN();
  const Side bside = side_for(ctx, true), aside = side_for(ctx, false);

  for (it = 1; it <= config.max_outer_iter; ++it) {
    const Vec prev_a = alpha, prev_b = beta;
    HalfStep hb = solve_step(ctx, bside, alpha, la, lb);
    beta = hb.coef;
    check_iterate(beta, *data.t_grid);
    record(ctx, trace, eval_objective(ctx, alpha, beta, hb.fitted, la, lb));

    HalfStep ha = solve_step(ctx, aside, beta, lb, la);
    alpha = ha.coef;
    fitted = ha.fitted;
    check_iterate(alpha, *data.s_grid);
    const double obj = eval_objective(ctx, alpha, beta, fitted, la, lb);
    record(ctx, trace, obj);

    auto [na, nb] = normalize_pair(Func1D(data.s_grid, alpha), Func1D(data.t_grid, beta));
    alpha = na.values;
    beta = nb.values;
    if (it > 1) {
      const bool obj_ok = std::abs(last_sweep - obj) <= config.obj_tol * std::abs(last_sweep);
      const bool coef_ok = std::max(sup_change(alpha, prev_a), sup_change(beta, prev_b)) < config.coef_tol;
      if (obj_ok && coef_ok) {
        converged = true;
        break;
      }
    }
    last_sweep = obj;
  }

  FblrFit out = finish(ctx, alpha, beta, fitted);
  out.lambda_alpha = la;
  out.lambda_beta = lb;
  out.objective_trace = std::move(trace);
  out.objective = out.objective_trace.back();
  out.n_iter = std::min(it, config.max_outer_iter);
  out.converged = converged;
  out.init_fallback = fallback;
  return out;
}

FblrFit igcv_fit(const TwoWayDataset& data, const FblrConfig& config) {
  require(!config.lambda_grid.empty(), ErrorKind::invalid_argument, "iGCV needs a nonempty lambda grid");
  require(config.max_outer_iter >= 1, ErrorKind::invalid_argument, "max_outer_iter must be positive");
  const Context ctx = make_context(data, config);
  const auto& grid = config.lambda_grid;

  bool fallback = false;
  Vec alpha = initial_alpha(ctx, &fallback);
  Vec beta = Vec::Zero(data.q());
  Vec fitted;
  // A fixed lambda in the config pins that side. Otherwise lambda_alpha starts
  // at the smallest grid value: the ridge initializer is rough, and a large
  // alpha penalty in the first beta-step shrinks beta toward zero.
  double la = config.lambda_alpha.value_or(grid.front());
  double lb = config.lambda_beta.value_or(grid[grid.size() / 2]);
  double prev_la = std::numeric_limits<double>::quiet_NaN(), prev_lb = prev_la;
  double trace_la = prev_la, trace_lb = prev_la;
  std::vector<double> trace;
  const Side bside = side_for(ctx, true), aside = side_for(ctx, false);

  struct Snapshot {
    Vec alpha, beta, fitted;
    double la, lb, obj;
    std::vector<double> trace;
  };
  std::optional<Snapshot> best;
  bool converged = false;
  int round = 0;

  const auto push = [&](double value) {
    if (la != trace_la || lb != trace_lb) {
      trace.clear();
      trace_la = la;
      trace_lb = lb;
    }
    record(ctx, trace, value);
  };

  for (round = 1; round <= config.max_outer_iter; ++round) {
    const Vec prev_a = alpha, prev_b = beta;
    HalfStep hb = config.lambda_beta ? solve_step(ctx, bside, alpha, la, lb) : tune_step(ctx, bside, alpha, la);
    beta = hb.coef;
    lb = hb.lambda;
    check_iterate(beta, *data.t_grid);
    push(eval_objective(ctx, alpha, beta, hb.fitted, la, lb));

    HalfStep ha = config.lambda_alpha ? solve_step(ctx, aside, beta, lb, la) : tune_step(ctx, aside, beta, lb);
    alpha = ha.coef;
    la = ha.lambda;
    fitted = ha.fitted;
    check_iterate(alpha, *data.s_grid);
    const double obj = eval_objective(ctx, alpha, beta, fitted, la, lb);
    push(obj);

    auto [na, nb] = normalize_pair(Func1D(data.s_grid, alpha), Func1D(data.t_grid, beta));
    alpha = na.values;
    beta = nb.values;
    if (!best || obj < best->obj) best = Snapshot{alpha, beta, fitted, la, lb, obj, trace};

    const bool same_lambda = la == prev_la && lb == prev_lb;
    const bool coef_ok =
        round > 1 && std::max(sup_change(alpha, prev_a), sup_change(beta, prev_b)) < config.coef_tol;
    prev_la = la;
    prev_lb = lb;
    if (same_lambda && coef_ok) {
      converged = true;
      break;
    }
  }

  FblrFit out;
  if (converged) {
    out = finish(ctx, alpha, beta, fitted);
    out.lambda_alpha = la;
    out.lambda_beta = lb;
    out.objective_trace = std::move(trace);
  } else {
    out = finish(ctx, best->alpha, best->beta, best->fitted);
    out.lambda_alpha = best->la;
    out.lambda_beta = best->lb;
    out.objective_trace = best->trace;
  }
  out.objective = out.objective_trace.back();
  out.n_iter = std::min(round, config.max_outer_iter);
  out.converged = converged;
  out.init_fallback = fallback;
  return out;
}

FblrFit fit(const TwoWayDataset& data, const FblrConfig& config) {
  return config.tuning() ? igcv_fit(data, config) : fblr_fit(data, config);
}

RankRFit rank_r_fit(const TwoWayDataset& data, int rank, const FblrConfig& config) {
  require(rank >= 1, ErrorKind::invalid_argument, "rank must be at least 1");
  require(data.centered, ErrorKind::precondition, "rank-R fit needs centered data");
  RankRFit out;
  out.field = Mat::Zero(data.p(), data.q());
  out.mu_hat = data.y_mean;
  out.x_mean = data.x_mean.size() ? data.x_mean : Mat(Mat::Zero(data.p(), data.q()));

  TwoWayDataset stage = data;
  FblrConfig cfg = config;
  for (int r = 0; r < rank; ++r) {
    FblrFit f = fit(stage, cfg);
    // Later stages reuse the covariance of the first instead of re-estimating.
    if (!cfg.covariance) cfg.covariance = f.cov_used;
    out.field += f.coefficient_field();
    stage.y = stage.y - f.fitted;
    out.train_rss.push_back(stage.y.squaredNorm());
    out.stages.push_back(std::move(f));
  }
  return out;
}

double predict(const FblrFit& fit, const Mat& x_new) {
  require(x_new.rows() == fit.alpha_hat.size() && x_new.cols() == fit.beta_hat.size(), ErrorKind::dimension,
          "predict: covariate shape does not match the fit");
  const Mat centered = fit.x_mean.size() ? Mat(x_new - fit.x_mean) : x_new;
  return fit.mu_hat + bilinear_functional(fit.alpha_hat, centered, fit.beta_hat);
}

Vec predict(const FblrFit& fit, const std::vector<Mat>& x_new) {
  Vec out(static_cast<Eigen::Index>(x_new.size()));
  for (std::size_t i = 0; i < x_new.size(); ++i) out[static_cast<Eigen::Index>(i)] = predict(fit, x_new[i]);
  return out;
}

double predict(const RankRFit& fit, const Mat& x_new) {
  require(x_new.rows() == fit.field.rows() && x_new.cols() == fit.field.cols(), ErrorKind::dimension,
          "predict: covariate shape does not match the fit");
  require(!fit.stages.empty(), ErrorKind::invalid_argument, "empty rank-R fit");
  const GridPtr& s = fit.stages.front().alpha_hat.grid;
  const GridPtr& t = fit.stages.front().beta_hat.grid;
  const Mat d = s->weights().asDiagonal() * (x_new - fit.x_mean) * t->weights().asDiagonal();
  return fit.mu_hat + d.cwiseProduct(fit.field).sum();
}

}  // namespace fblr
