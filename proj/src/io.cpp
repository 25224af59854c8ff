#include "fblr/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fblr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  return out;
}

[[noreturn]] void data_error(const fs::path& path, int line, const std::string& what) {
  throw Error(ErrorKind::data, path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& tok, const fs::path& path, int line) {
  const std::string t = trim(tok);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) data_error(path, line, "not a number: '" + t + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& key) {
  int v = 0;
  const std::string t = trim(s);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw Error(ErrorKind::data, "manifest key '" + key + "' is not an integer");
  return v;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, delim)) out.push_back(cur);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Manifest read_manifest(const fs::path& path) {
  const KeyValues kv = read_key_values(path);
  Manifest m;
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  for (const auto& [k, v] : kv) {
    if (k == "n") m.n = parse_int(v, k);
    else if (k == "p") m.p = parse_int(v, k);
    else if (k == "q") m.q = parse_int(v, k);
    else if (k == "layout") m.layout = v;
    else if (k == "x_path") m.x_path = fs::path(v).is_absolute() ? fs::path(v) : base / v;
    else if (k == "y_path") m.y_path = fs::path(v).is_absolute() ? fs::path(v) : base / v;
    else if (k == "delimiter") {
      if (v == "tab" || v == "\\t") m.delimiter = '\t';
      else if (v.size() == 1) m.delimiter = v[0];
      else throw Error(ErrorKind::data, "manifest delimiter must be one character");
    } else {
      throw Error(ErrorKind::data, "unknown manifest key '" + k + "'");
    }
  }
  if (m.n < 1 || m.p < 2 || m.q < 2) throw Error(ErrorKind::data, "manifest needs n >= 1 and p, q >= 2");
  if (m.layout != "row-major") throw Error(ErrorKind::data, "only row-major layout is supported");
  if (m.x_path.empty()) throw Error(ErrorKind::data, "manifest has no x_path");
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  KeyValues kv{{"n", std::to_string(m.n)},
               {"p", std::to_string(m.p)},
               {"q", std::to_string(m.q)},
               {"layout", m.layout},
               {"x_path", m.x_path.string()}};
  if (!m.y_path.empty()) kv.emplace_back("y_path", m.y_path.string());
  kv.emplace_back("delimiter", m.delimiter == '\t' ? std::string("tab") : std::string(1, m.delimiter));
  write_key_values(path, kv);
}

std::vector<Mat> read_covariates(const Manifest& m) {
  std::ifstream in = open_in(m.x_path);
  std::vector<Mat> x;
  x.reserve(m.n);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto toks = split(line, m.delimiter);
    if (static_cast<int>(toks.size()) != m.p * m.q)
      data_error(m.x_path, lineno,
                 "expected " + std::to_string(m.p * m.q) + " values, found " + std::to_string(toks.size()));
    if (static_cast<int>(x.size()) == m.n) data_error(m.x_path, lineno, "more rows than n = " + std::to_string(m.n));
    Mat xi(m.p, m.q);
    for (int j = 0; j < m.p; ++j)
      for (int k = 0; k < m.q; ++k) xi(j, k) = parse_double(toks[j * m.q + k], m.x_path, lineno);
    x.push_back(std::move(xi));
  }
  if (static_cast<int>(x.size()) != m.n)
    data_error(m.x_path, lineno, "found " + std::to_string(x.size()) + " rows, manifest says n = " + std::to_string(m.n));
  return x;
}

Vec read_responses(const Manifest& m) {
  if (m.y_path.empty()) throw Error(ErrorKind::data, "manifest has no y_path");
  std::ifstream in = open_in(m.y_path);
  std::vector<double> v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (static_cast<int>(v.size()) == m.n) data_error(m.y_path, lineno, "more values than n = " + std::to_string(m.n));
    v.push_back(parse_double(line, m.y_path, lineno));
  }
  if (static_cast<int>(v.size()) != m.n)
    data_error(m.y_path, lineno, "found " + std::to_string(v.size()) + " values, manifest says n = " + std::to_string(m.n));
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_covariates(const fs::path& path, const std::vector<Mat>& x, char delimiter) {
  std::ofstream out = open_out(path);
  for (const Mat& xi : x) {
    for (Eigen::Index j = 0; j < xi.rows(); ++j)
      for (Eigen::Index k = 0; k < xi.cols(); ++k) {
        if (j || k) out << delimiter;
        out << format_double(xi(j, k));
      }
    out << '\n';
  }
}

Mat read_matrix_csv(const fs::path& path, bool header) {
  std::ifstream in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (header && lineno == 1) continue;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const auto& t : split(line, ',')) row.push_back(parse_double(t, path, lineno));
    if (!rows.empty() && row.size() != rows.front().size()) data_error(path, lineno, "ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::data, "'" + path.string() + "' holds no numbers");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

void write_matrix_csv(const fs::path& path, const Mat& m) {
  std::ofstream out = open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

void write_vector_csv(const fs::path& path, const std::string& column, const Vec& v) {
  std::ofstream out = open_out(path);
  out << column << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

Vec read_vector_csv(const fs::path& path, bool header) {
  const Mat m = read_matrix_csv(path, header);
  if (m.cols() != 1) throw Error(ErrorKind::data, "'" + path.string() + "' is not a single column");
  return m.col(0);
}

void write_function_csv(const fs::path& path, const Func1D& f) {
  std::ofstream out = open_out(path);
  out << "t,value\n";
  for (int k = 0; k < f.size(); ++k) out << format_double(f.grid->point(k)) << ',' << format_double(f.values[k]) << '\n';
}

Func1D read_function_csv(const fs::path& path) {
  const Mat m = read_matrix_csv(path, true);
  if (m.cols() != 2) throw Error(ErrorKind::data, "'" + path.string() + "' needs two columns");
  return Func1D(make_uniform_grid(static_cast<int>(m.rows())), m.col(1));
}

void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::ofstream out = open_out(path);
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in = open_in(path);
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) data_error(path, lineno, "expected 'key = value'");
    kv.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return kv;
}

std::string lookup(const KeyValues& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw Error(ErrorKind::data, "missing key '" + key + "'");
}

void write_benchmark_rows(const fs::path& path, const BenchmarkResult& r) {
  std::ofstream out = open_out(path);
  out << "method,setting,r_c,n,rep,seed,ok,risk,iterations,converged,lambda_alpha,lambda_beta,max_trace_increase,"
         "error\n";
  for (const auto& row : r.rows) {
    out << row.method << ',' << row.setting << ',' << format_double(row.r_c) << ',' << row.n << ',' << row.rep << ','
        << row.seed << ',' << (row.ok ? 1 : 0) << ',' << format_double(row.risk) << ',' << row.iterations << ','
        << (row.converged ? 1 : 0) << ',' << format_double(row.lambda_alpha) << ','
        << format_double(row.lambda_beta) << ',' << format_double(row.max_trace_increase) << ','
        << csv_safe(row.error) << '\n';
  }
}

void write_benchmark_timing(const fs::path& path, const BenchmarkResult& r) {
  std::ofstream out = open_out(path);
  out << "method,setting,r_c,n,rep,seconds\n";
  for (const auto& row : r.rows)
    out << row.method << ',' << row.setting << ',' << format_double(row.r_c) << ',' << row.n << ',' << row.rep << ','
        << format_double(row.seconds) << '\n';
}

void write_benchmark_aggregates(const fs::path& path, const BenchmarkResult& r) {
  std::ofstream out = open_out(path);
  out << "method,setting,r_c,n,count,failures,mean_risk,se_risk\n";
  for (const auto& a : r.aggregates)
    out << a.method << ',' << a.setting << ',' << format_double(a.r_c) << ',' << a.n << ',' << a.count << ','
        << a.failures << ',' << format_double(a.mean_risk) << ',' << format_double(a.se_risk) << '\n';
}

void write_benchmark_slopes(const fs::path& path, const BenchmarkResult& r) {
  std::ofstream out = open_out(path);
  out << "method,setting,r_c,slope,stderr\n";
  for (const auto& s : r.slopes)
    out << s.method << ',' << s.setting << ',' << format_double(s.r_c) << ',' << format_double(s.slope) << ','
        << format_double(s.stderr_) << '\n';
}

BenchmarkResult read_benchmark(const fs::path& rows_path, const fs::path& timing_path) {
  BenchmarkResult r;
  {
    std::ifstream in = open_in(rows_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      if (++lineno == 1 || trim(line).empty()) continue;
      const auto t = split(line, ',');
      if (t.size() != 14) data_error(rows_path, lineno, "expected 14 fields");
      BenchmarkRow row;
      row.method = t[0];
      row.setting = std::stoi(t[1]);
      row.r_c = parse_double(t[2], rows_path, lineno);
      row.n = std::stoi(t[3]);
      row.rep = std::stoi(t[4]);
      row.seed = std::stoull(t[5]);
      row.ok = t[6] == "1";
      row.risk = parse_double(t[7], rows_path, lineno);
      row.iterations = std::stoi(t[8]);
      row.converged = t[9] == "1";
      row.lambda_alpha = parse_double(t[10], rows_path, lineno);
      row.lambda_beta = parse_double(t[11], rows_path, lineno);
      row.max_trace_increase = parse_double(t[12], rows_path, lineno);
      row.error = t[13];
      r.rows.push_back(std::move(row));
    }
  }
  if (fs::exists(timing_path)) {
    std::ifstream in = open_in(timing_path);
    std::string line;
    int lineno = 0;
    std::size_t k = 0;
    while (std::getline(in, line)) {
      if (++lineno == 1 || trim(line).empty()) continue;
      const auto t = split(line, ',');
      if (t.size() != 6 || k >= r.rows.size()) data_error(timing_path, lineno, "timing table does not match rows");
      r.rows[k++].seconds = parse_double(t[5], timing_path, lineno);
    }
  }
  aggregate_benchmark(r);
  return r;
}

}  // namespace fblr
