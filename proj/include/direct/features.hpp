#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "direct/variational.hpp"

namespace direct::features {

struct Dataset {
  Eigen::MatrixXd x;  // n x d
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name;

  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(x.rows()); }
  [[nodiscard]] std::size_t d() const { return static_cast<std::size_t>(x.cols()); }
};

/// Reads a comma-separated file. A first line with any non-numeric cell is treated as a header.
/// `target` is a column name, a zero-based index, or empty for the last column.
/// Throws DataError listing every malformed row.
Dataset load_csv(const std::string& path, const std::string& target = "");

/// Every column of a numeric CSV, with header names (generated when absent).
struct Table {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};
Table load_table(const std::string& path);

/// Writes features then target, with a header. Values are printed with round-trip precision.
void write_csv(const std::string& path, const Dataset& data);

/// Rows `idx` of `data`.
Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx);

/// Per-column affine map x -> (x - mean) / scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Fits on the training features (population variance; constant columns get scale 1).
std::pair<Standardizer, Dataset> standardize(const Dataset& train);

/// y -> (y - mean) / scale, inverted for predictions.
struct TargetTransform {
  double mean = 0.0;
  double scale = 1.0;

  [[nodiscard]] double forward(double y) const { return (y - mean) / scale; }
  [[nodiscard]] double inverse(double z) const { return z * scale + mean; }
  [[nodiscard]] Eigen::VectorXd forward(const Eigen::VectorXd& y) const;
};

TargetTransform fit_target(const Eigen::VectorXd& y);

/// Random Fourier features of a squared-exponential ARD kernel.
struct RffMap {
  Eigen::MatrixXd frequencies;  // (b/2) x d
  Eigen::VectorXd lengthscales;
  double signal_sd = 1.0;
  std::size_t b = 0;
  std::uint64_t seed = 0;
};

/// omega_k ~ N(0, diag(1 / lengthscale^2)).
RffMap make_rff(const Eigen::VectorXd& lengthscales, double signal_sd, std::size_t b, std::uint64_t seed);

/// Phi(i, 2k) = sd sqrt(2/b) cos(omega_k . x_i), Phi(i, 2k+1) = the matching sine.
Eigen::MatrixXd rff_features(const RffMap& map, const Eigen::MatrixXd& x);

/// sd^2 exp(-1/2 sum_i ((x_i - z_i) / l_i)^2)
double se_ard_kernel(const Eigen::VectorXd& lengthscales, double signal_sd, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& z);

struct Hyperparams {
  Eigen::VectorXd lengthscales;
  double signal_sd = 1.0;
  double noise_var = 0.1;
};

inline constexpr std::size_t kHeuristicSubsample = 1000;

/// Per-dimension median of pairwise |dx| over a seeded subsample of at most 1000 rows,
/// sd^2 = Var(y), noise = 0.1 Var(y).
Hyperparams init_hyperparams(const Dataset& train, std::uint64_t seed = 0);

/// mbar evenly spaced values on [-3 sd, 3 sd] for each of b variables.
SupportGrid make_support(double signal_sd, std::size_t mbar, std::size_t b);

/// Row j proportional to exp(-wbar_j^2 / (2 sd^2)).
MeanFieldDist discretized_gaussian_prior(const SupportGrid& grid, double signal_sd);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle cut into k nearly equal test blocks.
std::vector<Fold> kfold(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace direct::features
