#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "direct/config.hpp"
#include "direct/features.hpp"
#include "direct/glm.hpp"
#include "direct/model.hpp"
#include "direct/train.hpp"

namespace direct::pipeline {

struct TrainOutcome {
  model::ModelArtifact artifact;
  train::Trace trace;
  double seconds = 0.0;
};

/// Standardizes, builds features, initializes q to the prior and optimizes per the config.
TrainOutcome fit(const config::RunConfig& config, const features::Dataset& data);

/// A GLM over the artifact's grid and distributions with empty data statistics.
glm::GlmModel glm_model(const model::ModelArtifact& a);

/// Feature rows for raw inputs: standardized, then mapped through the random features (glm, logistic).
Eigen::MatrixXd feature_rows(const model::ModelArtifact& a, const Eigen::MatrixXd& x);

struct Moments {
  std::vector<double> mean;
  /// Predictive variance of y* (glm, bnn); empty for logistic.
  std::vector<double> variance;
};

inline constexpr std::size_t kClassProbSamples = 10000;

/// Exact predictive moments in the target's original units. For logistic models `mean` holds a
/// seeded Monte Carlo estimate of Pr(y* = 0).
Moments predict_moments(const model::ModelArtifact& a, const Eigen::MatrixXd& x, std::uint64_t seed = 0);

/// n x count matrix of predictions under posterior draws (glm draws use the integer path).
Eigen::MatrixXd predict_samples(const model::ModelArtifact& a, const Eigen::MatrixXd& x, std::size_t count,
                                std::uint64_t seed);

double expected_sparsity(const model::ModelArtifact& a);

struct FoldResult {
  std::size_t fold = 0;
  double rmse = 0.0;
  double seconds = 0.0;
  double sparsity = 0.0;
};

struct CrossValReport {
  std::vector<FoldResult> folds;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  double seconds_mean = 0.0;
  double sparsity_mean = 0.0;
};

/// k-fold cross validation for regression models; rows are shuffled with the config seed.
CrossValReport crossval(const config::RunConfig& config, const features::Dataset& data, std::size_t k);

}  // namespace direct::pipeline
