// Serial reference kernels against the OpenMP versions, plus one FBLR fit.
#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "fblr/fblr.hpp"
#include "fblr/parallel.hpp"
#include "fblr/simulate.hpp"

using namespace fblr;

namespace {

struct Batch {
  std::vector<Mat> x;
  Vec a, b;
};

const Batch& batch(int n, int m) {
  static std::map<std::pair<int, int>, Batch> cache;
  auto it = cache.find({n, m});
  if (it != cache.end()) return it->second;
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z;
  Batch bt;
  for (int i = 0; i < n; ++i) bt.x.push_back(Mat::NullaryExpr(m, m, [&] { return z(gen); }));
  bt.a = Vec::NullaryExpr(m, [&] { return z(gen); });
  bt.b = Vec::NullaryExpr(m, [&] { return z(gen); });
  return cache.emplace(std::make_pair(n, m), std::move(bt)).first->second;
}

template <bool Parallel>
void BM_ContractS(benchmark::State& st) {
  const Batch& bt = batch(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) {
    Mat out = Parallel ? contract_s(bt.x, bt.a) : serial::contract_s(bt.x, bt.a);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_DesignGram(benchmark::State& st) {
  const Batch& bt = batch(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) {
    Mat out = Parallel ? weighted_design_gram(bt.x, bt.a, bt.b) : serial::weighted_design_gram(bt.x, bt.a, bt.b);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_SampleKL(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0)), m = static_cast<int>(st.range(1));
  const SpectralModel sm = cosine_covariance(1.0, 200, make_uniform_grid(m)).spectral;
  const Mat l = sm.factor();
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = derive_seed(3, {static_cast<std::uint64_t>(i)});
  for (auto _ : st) {
    auto out = Parallel ? sample_kl_batch(l, l, seeds) : serial::sample_kl_batch(l, l, seeds);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_FblrFit(benchmark::State& st) {
  SettingSpec spec = setting_spec(1, 1.0, static_cast<int>(st.range(0)), 11);
  const SimData sim = simulate_setting(spec);
  FblrConfig cfg;
  cfg.covariance = sim.true_cov;
  for (auto _ : st) {
    FblrFit f = fit(sim.data, cfg);
    benchmark::DoNotOptimize(f.objective);
  }
}

}  // namespace

BENCHMARK(BM_ContractS<false>)->Args({256, 100});
BENCHMARK(BM_ContractS<true>)->Args({256, 100});
BENCHMARK(BM_DesignGram<false>)->Args({128, 100});
BENCHMARK(BM_DesignGram<true>)->Args({128, 100});
BENCHMARK(BM_SampleKL<false>)->Args({64, 100});
BENCHMARK(BM_SampleKL<true>)->Args({64, 100});
BENCHMARK(BM_FblrFit)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
