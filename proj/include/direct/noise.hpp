#pragma once

#include <Eigen/Dense>
#include <cstddef>

#include "direct/numeric.hpp"

namespace direct {

/// Discrete prior and variational distributions over the Gaussian noise variance.
class NoiseModel {
 public:
  NoiseModel() = default;
  /// sigma2_values strictly positive and increasing; p_sigma a probability vector.
  NoiseModel(Eigen::VectorXd sigma2_values, Eigen::VectorXd p_sigma, Eigen::VectorXd q_sigma_logits);

  /// `count` values log-uniformly spaced over [center/100, center*100]; uniform prior, q = prior.
  static NoiseModel log_uniform(double center, std::size_t count);

  [[nodiscard]] NoiseModel with_logits(Eigen::VectorXd q_sigma_logits) const;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(sigma2_.size()); }
  [[nodiscard]] const Eigen::VectorXd& sigma2() const { return sigma2_; }
  [[nodiscard]] const Eigen::VectorXd& log_sigma2() const { return log_sigma2_; }
  [[nodiscard]] const Eigen::VectorXd& inv_sigma2() const { return inv_sigma2_; }
  [[nodiscard]] const Eigen::VectorXd& p_sigma() const { return p_sigma_; }
  [[nodiscard]] const Eigen::VectorXd& log_p_sigma() const { return log_p_sigma_; }
  [[nodiscard]] const Eigen::VectorXd& q_sigma_logits() const { return q_logits_; }
  [[nodiscard]] const Eigen::VectorXd& q_sigma() const { return q_; }
  [[nodiscard]] const Eigen::VectorXd& log_q_sigma() const { return log_q_; }

  [[nodiscard]] double expected_sigma2() const { return q_.dot(sigma2_); }
  [[nodiscard]] double expected_log_sigma2() const { return q_.dot(log_sigma2_); }
  [[nodiscard]] double expected_inv_sigma2() const { return q_.dot(inv_sigma2_); }
  /// q_sigma^T log p_sigma - q_sigma^T log q_sigma
  [[nodiscard]] double prior_minus_entropy_term() const;

 private:
  Eigen::VectorXd sigma2_;
  Eigen::VectorXd log_sigma2_;
  Eigen::VectorXd inv_sigma2_;
  Eigen::VectorXd p_sigma_;
  Eigen::VectorXd log_p_sigma_;
  Eigen::VectorXd q_logits_;
  Eigen::VectorXd q_;
  Eigen::VectorXd log_q_;
};

/// Value and logit gradients of a mean-field objective with a noise-variance factor.
struct ElboGrad {
  double value = 0.0;
  RowMatrix q_logits;
  Eigen::VectorXd sigma_logits;
};

/// Gaussian expected log-likelihood from an expected residual sum of squares R:
///   -(n/2) q_s^T log s2 - (1/2) (q_s^T s2^-1) R
struct GaussianTerm {
  double value = 0.0;
  double d_residual = 0.0;          // dValue / dR
  Eigen::VectorXd d_sigma_probs;    // dValue / dq_sigma
};
GaussianTerm gaussian_expected_log_likelihood(const NoiseModel& noise, double n, double residual);

}  // namespace direct
