#include "direct/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "direct/errors.hpp"
#include "direct/random.hpp"

namespace direct::features {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

double median(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double population_variance(const Eigen::VectorXd& y) {
  const double mean = y.mean();
  return (y.array() - mean).square().mean();
}

}  // namespace

Table load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");

  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!trim(line).empty()) lines.push_back(std::move(line));
  }
  if (lines.empty()) throw DataError("dataset '" + path + "' is empty");

  const auto first = split(lines.front());
  const std::size_t cols = first.size();
  bool header = false;
  for (auto cell : first) {
    double v = 0.0;
    if (!parse_double(cell, v)) header = true;
  }
  Table t;
  for (std::size_t c = 0; c < cols; ++c) t.names.push_back(header ? std::string(first[c]) : "x" + std::to_string(c));

  const std::size_t start = header ? 1 : 0;
  const std::size_t n = lines.size() - start;
  if (n == 0) throw DataError("dataset '" + path + "' has a header but no rows");
  t.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  std::ostringstream problems;
  std::size_t bad = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto cells = split(lines[start + r]);
    const std::size_t line_no = start + r + 1;
    if (cells.size() != cols) {
      problems << "\n  line " << line_no << ": expected " << cols << " cells, found " << cells.size();
      ++bad;
      continue;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        problems << "\n  line " << line_no << ", column '" << t.names[c] << "': cannot parse '" << cells[c] << "'";
        ++bad;
        break;
      }
      t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  if (bad > 0) {
    throw DataError("dataset '" + path + "' has " + std::to_string(bad) + " malformed row(s):" + problems.str());
  }
  return t;
}

Dataset load_csv(const std::string& path, const std::string& target) {
  Table t = load_table(path);
  const std::size_t cols = t.names.size();
  if (cols < 2) throw DataError("dataset '" + path + "' needs at least one feature and a target column");
  std::size_t target_col = cols - 1;
  if (!target.empty()) {
    const auto it = std::find(t.names.begin(), t.names.end(), target);
    if (it != t.names.end()) {
      target_col = static_cast<std::size_t>(it - t.names.begin());
    } else {
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(target.data(), target.data() + target.size(), idx);
      if (ec != std::errc() || ptr != target.data() + target.size() || idx >= cols) {
        throw DataError("target column '" + target + "' not found in '" + path + "'");
      }
      target_col = idx;
    }
  }
  Dataset data;
  data.target_name = t.names[target_col];
  data.y = t.values.col(static_cast<Eigen::Index>(target_col));
  data.x.resize(t.values.rows(), static_cast<Eigen::Index>(cols - 1));
  Eigen::Index fc = 0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (c == target_col) continue;
    data.x.col(fc++) = t.values.col(static_cast<Eigen::Index>(c));
    data.feature_names.push_back(t.names[c]);
  }
  return data;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.precision(17);
  for (std::size_t c = 0; c < data.d(); ++c) {
    out << (c < data.feature_names.size() ? data.feature_names[c] : "x" + std::to_string(c)) << ',';
  }
  out << (data.target_name.empty() ? "y" : data.target_name) << '\n';
  for (Eigen::Index r = 0; r < data.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.x.cols(); ++c) out << data.x(r, c) << ',';
    out << data.y(r) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.feature_names = data.feature_names;
  out.target_name = data.target_name;
  out.x.resize(static_cast<Eigen::Index>(idx.size()), data.x.cols());
  out.y.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = static_cast<Eigen::Index>(idx[i]);
    if (idx[i] >= data.n()) throw InvalidInput("subset: row index out of range");
    out.x.row(static_cast<Eigen::Index>(i)) = data.x.row(src);
    out.y(static_cast<Eigen::Index>(i)) = data.y(src);
  }
  return out;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw InvalidInput("Standardizer: column count mismatch");
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

std::pair<Standardizer, Dataset> standardize(const Dataset& train) {
  if (train.n() < 2) throw InvalidInput("standardize: need at least two rows");
  Standardizer s;
  s.mean = train.x.colwise().mean().transpose();
  s.scale.resize(train.x.cols());
  for (Eigen::Index c = 0; c < train.x.cols(); ++c) {
    const double var = population_variance(train.x.col(c));
    s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  Dataset out = train;
  out.x = s.apply(train.x);
  return {s, out};
}

Eigen::VectorXd TargetTransform::forward(const Eigen::VectorXd& y) const {
  return (y.array() - mean) / scale;
}

TargetTransform fit_target(const Eigen::VectorXd& y) {
  if (y.size() == 0) return {};
  const double var = population_variance(y);
  return TargetTransform{y.mean(), var > 0.0 ? std::sqrt(var) : 1.0};
}

RffMap make_rff(const Eigen::VectorXd& lengthscales, double signal_sd, std::size_t b, std::uint64_t seed) {
  if (b == 0 || b % 2 != 0) throw InvalidInput("make_rff: feature count must be even and positive");
  if ((lengthscales.array() <= 0.0).any() || !lengthscales.allFinite()) {
    throw InvalidInput("make_rff: lengthscales must be positive");
  }
  if (!(signal_sd > 0.0)) throw InvalidInput("make_rff: signal sd must be positive");
  RffMap map;
  map.lengthscales = lengthscales;
  map.signal_sd = signal_sd;
  map.b = b;
  map.seed = seed;
  map.frequencies.resize(static_cast<Eigen::Index>(b / 2), lengthscales.size());
  Rng rng(seed);
  std::normal_distribution<double> normal;
  for (Eigen::Index k = 0; k < map.frequencies.rows(); ++k) {
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i) map.frequencies(k, i) = normal(rng) / lengthscales(i);
  }
  return map;
}

Eigen::MatrixXd rff_features(const RffMap& map, const Eigen::MatrixXd& x) {
  if (x.cols() != map.frequencies.cols()) {
    throw InvalidInput("rff_features: input has " + std::to_string(x.cols()) + " columns, map expects " +
                       std::to_string(map.frequencies.cols()));
  }
  const Eigen::MatrixXd proj = x * map.frequencies.transpose();
  const double amp = map.signal_sd * std::sqrt(2.0 / static_cast<double>(map.b));
  Eigen::MatrixXd phi(x.rows(), static_cast<Eigen::Index>(map.b));
  for (Eigen::Index k = 0; k < proj.cols(); ++k) {
    phi.col(2 * k) = amp * proj.col(k).array().cos();
    phi.col(2 * k + 1) = amp * proj.col(k).array().sin();
  }
  return phi;
}

double se_ard_kernel(const Eigen::VectorXd& lengthscales, double signal_sd, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& z) {
  const double r2 = ((x - z).array() / lengthscales.array()).square().sum();
  return signal_sd * signal_sd * std::exp(-0.5 * r2);
}

Hyperparams init_hyperparams(const Dataset& train, std::uint64_t seed) {
  if (train.n() < 10) throw ConfigError("init_hyperparams: need at least 10 training rows");
  const double var_y = population_variance(train.y);
  if (!(var_y > 0.0)) throw ConfigError("init_hyperparams: target has zero variance");

  std::vector<std::size_t> rows(train.n());
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > kHeuristicSubsample) {
    Rng rng(seed);
    for (std::size_t i = 0; i < kHeuristicSubsample; ++i) {
      std::swap(rows[i], rows[i + uniform_index(rng, rows.size() - i)]);
    }
    rows.resize(kHeuristicSubsample);
  }

  Hyperparams h;
  h.lengthscales.resize(train.x.cols());
  std::vector<double> diffs;
  diffs.reserve(rows.size() * (rows.size() - 1) / 2);
  for (Eigen::Index c = 0; c < train.x.cols(); ++c) {
    diffs.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double xi = train.x(static_cast<Eigen::Index>(rows[i]), c);
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        diffs.push_back(std::abs(xi - train.x(static_cast<Eigen::Index>(rows[j]), c)));
      }
    }
    const double med = median(diffs);
    h.lengthscales(c) = med > 0.0 ? med : 1.0;
  }
  h.signal_sd = std::sqrt(var_y);
  h.noise_var = 0.1 * var_y;
  return h;
}

SupportGrid make_support(double signal_sd, std::size_t mbar, std::size_t b) {
  if (mbar < 2) throw InvalidInput("make_support: need at least two levels");
  if (!(signal_sd > 0.0)) throw InvalidInput("make_support: signal sd must be positive");
  std::vector<double> row(mbar);
  const double denom = static_cast<double>(mbar - 1);
  for (std::size_t k = 0; k < mbar; ++k) {
    row[k] = 3.0 * signal_sd * (2.0 * static_cast<double>(k) - denom) / denom;
  }
  return SupportGrid::uniform_rows(row, b);
}

MeanFieldDist discretized_gaussian_prior(const SupportGrid& grid, double signal_sd) {
  if (!(signal_sd > 0.0)) throw InvalidInput("discretized_gaussian_prior: signal sd must be positive");
  RowMatrix logits = -grid.values().array().square() / (2.0 * signal_sd * signal_sd);
  return MeanFieldDist(std::move(logits));
}

std::vector<Fold> kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be at least 2");
  if (n < k) throw DataError("kfold: " + std::to_string(n) + " rows cannot form " + std::to_string(k) + " folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  fisher_yates(perm, rng);
  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t lo = f * n / k;
    const std::size_t hi = (f + 1) * n / k;
    for (std::size_t i = 0; i < n; ++i) {
      (i >= lo && i < hi ? folds[f].test : folds[f].train).push_back(perm[i]);
    }
    std::sort(folds[f].test.begin(), folds[f].test.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

}  // namespace direct::features
