#include "direct/noise.hpp"

#include <cmath>

#include "direct/errors.hpp"

namespace direct {

NoiseModel::NoiseModel(Eigen::VectorXd sigma2_values, Eigen::VectorXd p_sigma, Eigen::VectorXd q_sigma_logits)
    : sigma2_(std::move(sigma2_values)), p_sigma_(std::move(p_sigma)), q_logits_(std::move(q_sigma_logits)) {
  if (sigma2_.size() < 1) throw InvalidInput("NoiseModel: empty variance grid");
  if (p_sigma_.size() != sigma2_.size() || q_logits_.size() != sigma2_.size()) {
    throw InvalidInput("NoiseModel: size mismatch between variance grid and distributions");
  }
  for (Eigen::Index k = 0; k < sigma2_.size(); ++k) {
    if (!(sigma2_(k) > 0.0) || !std::isfinite(sigma2_(k))) {
      throw InvalidInput("NoiseModel: variances must be positive and finite");
    }
    if (k > 0 && !(sigma2_(k) > sigma2_(k - 1))) throw InvalidInput("NoiseModel: variances must increase");
    if (!(p_sigma_(k) > 0.0)) throw InvalidInput("NoiseModel: prior probabilities must be positive");
  }
  if (std::abs(p_sigma_.sum() - 1.0) > 1e-9) throw InvalidInput("NoiseModel: prior does not sum to 1");
  if (!q_logits_.allFinite()) throw InvalidInput("NoiseModel: non-finite logits");
  log_sigma2_ = sigma2_.array().log();
  inv_sigma2_ = sigma2_.array().inverse();
  log_p_sigma_ = p_sigma_.array().log();
  log_q_ = q_logits_.array() - log_sum_exp(q_logits_);
  q_ = log_q_.array().exp();
}

NoiseModel NoiseModel::log_uniform(double center, std::size_t count) {
  if (!(center > 0.0) || count < 1) throw InvalidInput("NoiseModel::log_uniform: bad arguments");
  Eigen::VectorXd s2(count);
  const double lo = std::log(center / 100.0);
  const double hi = std::log(center * 100.0);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(count - 1);
    s2(k) = std::exp(lo + t * (hi - lo));
  }
  Eigen::VectorXd p = Eigen::VectorXd::Constant(count, 1.0 / static_cast<double>(count));
  return NoiseModel(std::move(s2), std::move(p), Eigen::VectorXd::Zero(count));
}

NoiseModel NoiseModel::with_logits(Eigen::VectorXd q_sigma_logits) const {
  return NoiseModel(sigma2_, p_sigma_, std::move(q_sigma_logits));
}

double NoiseModel::prior_minus_entropy_term() const {
  return q_.dot(log_p_sigma_) - q_.dot(log_q_);
}

GaussianTerm gaussian_expected_log_likelihood(const NoiseModel& noise, double n, double residual) {
  GaussianTerm t;
  const double e_inv = noise.expected_inv_sigma2();
  t.value = -0.5 * n * noise.expected_log_sigma2() - 0.5 * e_inv * residual;
  t.d_residual = -0.5 * e_inv;
  t.d_sigma_probs = -0.5 * n * noise.log_sigma2().array() - 0.5 * residual * noise.inv_sigma2().array();
  return t;
}

}  // namespace direct
