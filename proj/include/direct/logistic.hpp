#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "direct/random.hpp"
#include "direct/variational.hpp"

namespace direct::logistic {

/// Binary classifier with Pr(y_i = 0 | w) = 1 / (1 + exp(-phi_i w)).
struct LogisticModel {
  SupportGrid grid;
  MeanFieldDist q;
  MeanFieldDist prior;
  Eigen::MatrixXd features;  // n x b
  std::vector<int> labels;   // 0 or 1
};

/// Throws InvalidInput for non-binary labels or shape mismatches.
void validate(const LogisticModel& model);

/// Lower bound on q^T log l from first-order expansions of log(1 + exp(-/+z)) chosen per label.
/// Per-row products over variables are evaluated as exp(sum_j logsumexp(log q_j -/+ phi_ij wbar_j)).
double likelihood_lower_bound(const LogisticModel& model);

/// likelihood_lower_bound + exact prior and entropy terms.
double elbo_lower_bound(const LogisticModel& model);

struct BoundGrad {
  double value = 0.0;
  RowMatrix q_logits;
};

/// Value and exact gradient of elbo_lower_bound w.r.t. the q logits.
BoundGrad elbo_lower_bound_grad(const LogisticModel& model);

/// Unbiased minibatch estimate: the likelihood part over `rows` is rescaled by n / |rows|.
BoundGrad elbo_lower_bound_grad(const LogisticModel& model, std::span<const std::size_t> rows);

inline constexpr std::size_t kDefaultBatchSize = 256;

/// Monte Carlo estimate of E_q[Pr(y* = 0 | w)] = E_q[(1 + exp(-phi* w))^-1].
double predict_class_prob(const LogisticModel& model, const Eigen::VectorXd& test_features,
                          std::size_t samples, Rng& rng);

}  // namespace direct::logistic
