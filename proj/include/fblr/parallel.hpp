#pragma once

// Data-parallel batch kernels over the n covariate matrices.
//
// Every kernel writes each output slot from exactly one task, so results are
// bitwise identical for any thread count. The fblr::serial namespace keeps
// plain-loop reference versions that the tests and the benchmark compare
// against.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "fblr/grid.hpp"

namespace fblr {

int max_threads();
void set_threads(int n);

// Runs body(i) for i in [0, count), in parallel when OpenMP is enabled. If
// bodies throw, the exception from the lowest index is rethrown.
void parallel_for(int count, const std::function<void(int)>& body);

// Row i holds x_i' (w_s .* alpha): the s-contraction of every covariate (n x q).
Mat contract_s(const std::vector<Mat>& x, const Vec& ws_alpha);
// Row i holds x_i (w_t .* beta) (n x p).
Mat contract_t(const std::vector<Mat>& x, const Vec& wt_beta);
// f' W_s x_i W_t g for every i.
Vec bilinear_batch(const std::vector<Mat>& x, const Vec& ws_f, const Vec& wt_g);
// sum_{jk} D(j,k) x_i(j,k) for every i (D already carries the weights).
Vec frobenius_batch(const std::vector<Mat>& x, const Mat& d);
// n x n Gram of vec(W_s x_i W_t), the vectorized ridge design.
Mat weighted_design_gram(const std::vector<Mat>& x, const Vec& ws, const Vec& wt);
// Karhunen-Loeve draws x_i = L_s Z_i L_t' with Z_i standard normal; sample i
// uses its own generator seeded by seeds[i].
std::vector<Mat> sample_kl_batch(const Mat& l_s, const Mat& l_t,
                                 const std::vector<std::uint64_t>& seeds);

namespace serial {

Mat contract_s(const std::vector<Mat>& x, const Vec& ws_alpha);
Mat contract_t(const std::vector<Mat>& x, const Vec& wt_beta);
Vec bilinear_batch(const std::vector<Mat>& x, const Vec& ws_f, const Vec& wt_g);
Mat weighted_design_gram(const std::vector<Mat>& x, const Vec& ws, const Vec& wt);
std::vector<Mat> sample_kl_batch(const Mat& l_s, const Mat& l_t,
                                 const std::vector<std::uint64_t>& seeds);

}  // namespace serial

}  // namespace fblr
