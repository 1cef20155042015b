#pragma once

// Dataset container with mean-imputation transforms, train/test splitting,
// CSV ingestion and the synthetic generators used by the simulation studies.
// Datasets are immutable values after construction; every transform returns
// a fresh copy.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lazyvi/core.hpp"
#include "lazyvi/stats.hpp"

namespace lazyvi {

struct Dataset {
  Matrix X;                // n x p feature matrix
  Vec Y;                   // response, length n
  Vec column_means;        // imputation means, length p (see split())
  std::vector<std::string> feature_names;  // empty when unnamed

  std::size_t n() const { return X.rows(); }
  std::size_t p() const { return X.cols(); }
};

/// Build a dataset and record its own column means as imputation means.
inline Dataset make_dataset(Matrix x, Vec y,
                            std::vector<std::string> names = {}) {
  if (x.rows() != y.size())
    throw DimensionMismatch("make_dataset: X rows != Y length");
  if (!names.empty() && names.size() != x.cols())
    throw DimensionMismatch("make_dataset: feature name count != p");
  Dataset d;
  d.column_means.assign(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto row = x.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) d.column_means[j] += row[j];
  }
  if (x.rows() > 0)
    for (double& m : d.column_means) m /= static_cast<double>(x.rows());
  d.X = std::move(x);
  d.Y = std::move(y);
  d.feature_names = std::move(names);
  return d;
}

/// Replace column j with the dataset's imputation mean for that column.
/// Y, the other columns and the recorded means are untouched, so applying
/// the transform twice equals applying it once.
inline Dataset dropout_transform(const Dataset& d, std::size_t j) {
  if (j >= d.p())
    throw IndexOutOfRange("dropout_transform: feature index " +
                          std::to_string(j) + " out of range");
  Dataset out = d;
  const double m = d.column_means[j];
  for (std::size_t i = 0; i < out.n(); ++i) out.X(i, j) = m;
  return out;
}

/// Impute every listed feature to its mean (one pass; equivalent to applying
/// dropout_transform for each index in turn).
inline Dataset impute_features(const Dataset& d,
                               const std::vector<std::size_t>& js) {
  Dataset out = d;
  for (std::size_t j : js) {
    if (j >= d.p())
      throw IndexOutOfRange("impute_features: feature index out of range");
    const double m = d.column_means[j];
    for (std::size_t i = 0; i < out.n(); ++i) out.X(i, j) = m;
  }
  return out;
}

struct Split {
  Dataset train;  // n1 rows
  Dataset test;   // n - n1 rows; imputation means taken from train
};

/// Uniformly random partition into n1 training rows and n - n1 test rows.
/// Both parts carry the training-split column means, so mean imputation at
/// test time uses training statistics.
inline Split split(const Dataset& d, std::size_t n1, RngSeed seed) {
  const std::size_t n = d.n();
  if (!(n1 > 0 && n1 < n))
    throw BadSize("split: need 0 < n1 < n, got n1 = " + std::to_string(n1) +
                  ", n = " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t k = rng.uniform_below(i + 1);
    std::swap(idx[i], idx[k]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n1));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n1), idx.end());

  const std::size_t p = d.p();
  auto take = [&](std::size_t lo, std::size_t hi) {
    Matrix x(hi - lo, p);
    Vec y(hi - lo);
    for (std::size_t r = lo; r < hi; ++r) {
      const auto src = d.X.row(idx[r]);
      std::copy(src.begin(), src.end(), x.row(r - lo).begin());
      y[r - lo] = d.Y[idx[r]];
    }
    return make_dataset(std::move(x), std::move(y), d.feature_names);
  };

  Split s;
  s.train = take(0, n1);
  s.test = take(n1, n);
  s.test.column_means = s.train.column_means;
  return s;
}

/// Linear model with two correlated features: p = 6 standard normal
/// features, Corr(X1, X2) = rho, response 1.5*X1 + 1.2*X2 + X3 + noise.
inline Dataset gen_linear_corr(std::size_t n, double rho, RngSeed seed,
                               double noise_sd = 0.1) {
  if (!(std::abs(rho) < 1.0))
    throw OutOfRange("gen_linear_corr: |rho| must be < 1");
  const std::size_t p = 6;
  Matrix sigma = Matrix::identity(p);
  sigma(0, 1) = rho;
  sigma(1, 0) = rho;
  const Vec mu(p, 0.0);
  Matrix x = mvn_sample(mu, sigma, n, seed);
  Rng rng(derive_seed(seed, 0x6e6f697365ULL));
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = x.row(i);
    y[i] = 1.5 * r[0] + 1.2 * r[1] + r[2] + noise_sd * rng.normal();
  }
  return make_dataset(std::move(x), std::move(y),
                      {"x1", "x2", "x3", "x4", "x5", "x6"});
}

/// Binary outcome through a probit link: p = 4 independent standard normal
/// features, P(Y=1 | X) = Phi(2.5*X1 + 3.5*X2).
inline Dataset gen_binary_probit(std::size_t n, RngSeed seed) {
  const std::size_t p = 4;
  const Vec beta = {2.5, 3.5, 0.0, 0.0};
  Matrix x = mvn_sample(Vec(p, 0.0), Matrix::identity(p), n, seed);
  Rng rng(derive_seed(seed, 0x6c6162656cULL));
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double eta = dot(x.row(i), beta);
    y[i] = rng.uniform01() < normal_cdf(eta) ? 1.0 : 0.0;
  }
  return make_dataset(std::move(x), std::move(y), {"x1", "x2", "x3", "x4"});
}

struct TeacherOptions {
  std::size_t p = 100;     // feature count
  std::size_t width = 50;  // teacher hidden width m
  double noise_sd = 0.1;
};

/// Nonlinear high-dimensional regression: features are standard normal with
/// Corr(X1, X2) = 0.5; the response comes from a one-hidden-layer ReLU
/// teacher whose first-layer columns are centered at (5,4,3,2,1,0,...) with
/// spread sigma_w. The teacher is sampled once per call from the seed.
inline Dataset gen_highdim_teacher(std::size_t n, double sigma_w, RngSeed seed,
                                   TeacherOptions opts = {}) {
  const std::size_t p = opts.p, m = opts.width;
  if (p == 0 || m == 0) throw BadSize("gen_highdim_teacher: p, width >= 1");
  Matrix sigma = Matrix::identity(p);
  sigma(0, 1) = 0.5;
  sigma(1, 0) = 0.5;
  Matrix x = mvn_sample(Vec(p, 0.0), sigma, n, seed);

  Vec beta(p, 0.0);
  for (std::size_t j = 0; j < std::min<std::size_t>(5, p); ++j)
    beta[j] = static_cast<double>(5 - j);

  Rng rng(derive_seed(seed, 0x74656163686572ULL));
  Matrix w(m, p);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < p; ++j)
      w(r, j) = beta[j] + sigma_w * rng.normal();
  Vec v(m);
  for (std::size_t r = 0; r < m; ++r) v[r] = rng.normal();

  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const double pre = dot(w.row(r), xi);
      if (pre > 0.0) s += v[r] * pre;
    }
    y[i] = s + opts.noise_sd * rng.normal();
  }
  std::vector<std::string> names(p);
  for (std::size_t j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
  return make_dataset(std::move(x), std::move(y), std::move(names));
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t data_row,
                         const std::string& column) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' ||
                          last[-1] == '\r'))
    --last;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ParseError("load_csv: row " + std::to_string(data_row) +
                     " column " + column + ": not a number: '" + cell + "'");
  return value;
}

}  // namespace detail

/// Load a rectangular numeric CSV with a header row. The named response
/// column becomes Y; the remaining columns, in file order, become features.
inline Dataset load_csv(const std::string& path,
                        const std::string& response_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("load_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  std::size_t response_idx = header.size();
  std::vector<std::string> names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == response_column)
      response_idx = j;
    else
      names.push_back(header[j]);
  }
  if (response_idx == header.size())
    throw MissingColumn("load_csv: no column named '" + response_column +
                        "' in " + path);

  std::vector<Vec> rows;
  Vec y;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data_row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("load_csv: row " + std::to_string(data_row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    Vec row;
    row.reserve(header.size() - 1);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double v = detail::parse_cell(cells[j], data_row, header[j]);
      if (j == response_idx)
        y.push_back(v);
      else
        row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  Matrix x(rows.size(), header.size() - 1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), x.row(i).begin());
  return make_dataset(std::move(x), std::move(y), std::move(names));
}

/// Write the dataset as CSV (features in order, then a final "y" column when
/// the response has no recorded name). Values carry 17 significant digits so
/// a write/load round trip is lossless.
inline void save_csv(const Dataset& d, const std::string& path,
                     const std::string& response_name = "y") {
  std::ofstream out(path);
  if (!out) throw ParseError("save_csv: cannot open " + path);
  for (std::size_t j = 0; j < d.p(); ++j) {
    const std::string name =
        d.feature_names.empty() ? "x" + std::to_string(j + 1)
                                : d.feature_names[j];
    out << name << ',';
  }
  out << response_name << '\n';
  char buf[32];
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto row = d.X.row(i);
    for (std::size_t j = 0; j < d.p(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", row[j]);
      out << buf << ',';
    }
    std::snprintf(buf, sizeof buf, "%.17g", d.Y[i]);
    out << buf << '\n';
  }
}

inline nlohmann::json dataset_to_json(const Dataset& d) {
  nlohmann::json j;
  j["n"] = d.n();
  j["p"] = d.p();
  j["feature_names"] = d.feature_names;
  j["column_means"] = d.column_means;
  j["Y"] = d.Y;
  auto& rows = j["X"] = nlohmann::json::array();
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto r = d.X.row(i);
    rows.push_back(Vec(r.begin(), r.end()));
  }
  return j;
}

}  // namespace lazyvi
