#pragma once

// Plain-text dataset manifests, CSV tables and key = value summaries.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fblr/grid.hpp"
#include "fblr/simulate.hpp"

namespace fblr {

namespace fs = std::filesystem;

struct Manifest {
  int n = 0, p = 0, q = 0;
  std::string layout = "row-major";
  fs::path x_path;
  fs::path y_path;  // may be empty for prediction inputs
  char delimiter = ',';
};

// key = value lines, '#' comments. Relative paths resolve against the
// manifest's directory.
Manifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const Manifest& m);

// x file: n rows of p*q values, s index outer. y file: n lines.
std::vector<Mat> read_covariates(const Manifest& m);
Vec read_responses(const Manifest& m);
void write_covariates(const fs::path& path, const std::vector<Mat>& x, char delimiter = ',');

// 17 significant digits, enough to re-read every double exactly.
std::string format_double(double v);

Mat read_matrix_csv(const fs::path& path, bool header = false);
void write_matrix_csv(const fs::path& path, const Mat& m);
void write_vector_csv(const fs::path& path, const std::string& column, const Vec& v);
Vec read_vector_csv(const fs::path& path, bool header = true);
// Two columns: grid point, value.
void write_function_csv(const fs::path& path, const Func1D& f);
Func1D read_function_csv(const fs::path& path);

using KeyValues = std::vector<std::pair<std::string, std::string>>;
void write_key_values(const fs::path& path, const KeyValues& kv);
KeyValues read_key_values(const fs::path& path);
std::string lookup(const KeyValues& kv, const std::string& key);

// Risk rows, aggregates and slopes are pure functions of the benchmark
// configuration. Wall-clock times go to their own table so the others stay
// byte-identical across runs.
void write_benchmark_rows(const fs::path& path, const BenchmarkResult& r);
void write_benchmark_timing(const fs::path& path, const BenchmarkResult& r);
void write_benchmark_aggregates(const fs::path& path, const BenchmarkResult& r);
void write_benchmark_slopes(const fs::path& path, const BenchmarkResult& r);
// Reads rows (and timing when the file exists) and recomputes aggregates.
BenchmarkResult read_benchmark(const fs::path& rows_path, const fs::path& timing_path);

}  // namespace fblr
