#include "helpers.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fblr/covariance.hpp"
#include "fblr/io.hpp"

using namespace fblr;
using namespace fblr::testing;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const std::string cmd = std::string(FBLR_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fblr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
  const std::string data_ = FBLR_DATA_DIR;
};

}  // namespace

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--help").code, 0);
  EXPECT_EQ(run_cli("").code, 2);
  EXPECT_EQ(run_cli("fit").code, 2);  // missing --manifest
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  const CliRun r = run_cli("simulate --setting 6 --out-dir " + path("s"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("unsupported setting"), std::string::npos) << r.out;
  EXPECT_EQ(run_cli("fit --manifest " + path("missing.txt")).code, 1);
}

TEST_F(Cli, SimulateRowsAndDeterminism) {
  const std::string args = "simulate --setting 1 --n 16,24 --reps 2 --grid-len 10 --methods ridge --seed 5 --out-dir ";
  ASSERT_EQ(run_cli(args + path("a")).code, 0);
  ASSERT_EQ(run_cli(args + path("b")).code, 0);
  const std::string rows = slurp(dir_ / "a" / "benchmark_rows.csv");
  int lines = 0;
  for (char c : rows) lines += c == '\n';
  EXPECT_EQ(lines, 1 + 4);  // header plus n x reps
  EXPECT_EQ(rows, slurp(dir_ / "b" / "benchmark_rows.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "benchmark_aggregates.csv"), slurp(dir_ / "b" / "benchmark_aggregates.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "benchmark_timing.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "summary.txt"));
}

TEST_F(Cli, FitPredictRoundTrip) {
  const std::string manifest = data_ + "/manifest.txt";
  const std::string covs = " --cov-alpha " + data_ + "/cov_alpha.csv --cov-beta " + data_ + "/cov_beta.csv";
  const auto t0 = std::chrono::steady_clock::now();
  const CliRun fit = run_cli("fit --manifest " + manifest + covs + " --lambda-alpha 1e-4 --lambda-beta 1e-4 --out-dir " +
                          path("fit"));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(fit.code, 0) << fit.out;
  EXPECT_LT(secs, 5.0);
  for (const char* f : {"alpha.csv", "beta.csv", "field.csv", "x_mean.csv", "fitted.csv", "summary.txt"})
    EXPECT_TRUE(fs::exists(dir_ / "fit" / f)) << f;
  const CliRun pred = run_cli("predict --fit-dir " + path("fit") + " --manifest " + manifest + " --out-dir " +
                           path("pred"));
  ASSERT_EQ(pred.code, 0) << pred.out;
  const Vec fitted = read_vector_csv(dir_ / "fit" / "fitted.csv");
  const Vec predicted = read_vector_csv(dir_ / "pred" / "predictions.csv");
  ASSERT_EQ(fitted.size(), 8);
  EXPECT_LE((fitted - predicted).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, fitted.cwiseAbs().maxCoeff()));

  // Tuned fit with the flip-flop estimate also runs on the tiny data.
  EXPECT_EQ(run_cli("fit --manifest " + manifest + " --out-dir " + path("tuned")).code, 0);
}

TEST_F(Cli, ZeroLambdaFailsCleanly) {
  const CliRun r = run_cli("fit --manifest " + data_ + "/manifest.txt --lambda-alpha 0 --lambda-beta 0 --out-dir " +
                        path("z"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("error"), std::string::npos);
}

TEST_F(Cli, RiskMatchesLibrary) {
  const std::string covs = " --cov-alpha " + data_ + "/cov_alpha.csv --cov-beta " + data_ + "/cov_beta.csv";
  const std::string truth = data_ + "/truth_field.csv";
  CliRun r = run_cli("risk --estimate " + truth + " --truth " + truth + covs);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(std::stod(r.out), 0.0);

  const Mat t = read_matrix_csv(truth);
  write_matrix_csv(dir_ / "half.csv", Mat(0.5 * t));
  r = run_cli("risk --estimate " + path("half.csv") + " --truth " + truth + covs + " --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.out;
  SeparableCov cov;
  cov.c_alpha = read_matrix_csv(data_ + "/cov_alpha.csv");
  cov.c_beta = read_matrix_csv(data_ + "/cov_beta.csv");
  cov.s_grid = make_uniform_grid(static_cast<int>(cov.c_alpha.rows()));
  cov.t_grid = make_uniform_grid(static_cast<int>(cov.c_beta.rows()));
  const double expect = excess_risk_oracle(Mat(-0.5 * t), cov);
  const double got = std::stod(lookup(read_key_values(dir_ / "risk.txt"), "risk"));
  EXPECT_LE(rel_err(got, expect), 1e-12);
}

TEST_F(Cli, DiagGamma) {
  CliRun r = run_cli("diag-gamma --m 41 --terms 40 --k 200 --out-dir " + path("g"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("note: only"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "g" / "gamma.csv"));

  std::mt19937_64 rng(7);
  const Mat m = random_spd(6, rng);
  write_matrix_csv(dir_ / "m.csv", m);
  r = run_cli("diag-gamma --m0 " + path("m.csv") + " --mk " + path("m.csv") + " --k 6 --out-dir " + path("h"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Mat g = read_matrix_csv(dir_ / "h" / "gamma.csv", true);
  ASSERT_EQ(g.rows(), 6);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(g(k, 1), 1.0, 1e-8);
  EXPECT_EQ(run_cli("diag-gamma --m0 " + path("m.csv") + " --out-dir " + path("h")).code, 2);
}

TEST_F(Cli, EstimateCov) {
  const CliRun r = run_cli("estimate-cov --manifest " + data_ + "/manifest.txt --out-dir " + path("c"));
  ASSERT_EQ(r.code, 0) << r.out;
  const Mat cb = read_matrix_csv(dir_ / "c" / "c_beta.csv");
  EXPECT_NEAR(cb.trace() / (cb.rows() - 1), 1.0, 1e-8);  // unit-beta-trace with h_t = 1/(q-1)
}
