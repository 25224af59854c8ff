#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fblr/grid.hpp"

namespace fblr::testing {

inline Vec random_vec(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Vec v(m);
  for (int k = 0; k < m; ++k) v[k] = z(rng);
  return v;
}

inline Mat random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Mat a(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) a(i, j) = z(rng);
  return a;
}

inline Mat random_spd(int m, std::mt19937_64& rng, double ridge = 1e-2) {
  const Mat a = random_mat(m, m, rng);
  return a * a.transpose() + ridge * Mat::Identity(m, m);
}

inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

#define EXPECT_FBLR_ERROR(stmt, expected_kind)                        \
  do {                                                                \
    try {                                                             \
      stmt;                                                           \
      ADD_FAILURE() << "expected " << ::fblr::to_string(expected_kind); \
    } catch (const ::fblr::Error& e) {                                \
      EXPECT_EQ(e.kind(), expected_kind) << e.what();                 \
    }                                                                 \
  } while (0)

}  // namespace fblr::testing
