#include "direct/numeric.hpp"

namespace direct {

RowMatrix softmax_rows(const RowMatrix& logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

RowMatrix log_softmax_rows(const RowMatrix& logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out.row(r) = logits.row(r).array() - log_sum_exp(logits.row(r));
  }
  return out;
}

RowMatrix softmax_rows_backward(const RowMatrix& probs, const RowMatrix& grad_probs) {
  RowMatrix out(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double inner = probs.row(r).dot(grad_probs.row(r));
    out.row(r) = probs.row(r).array() * (grad_probs.row(r).array() - inner);
  }
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd out = (logits.array() - logits.maxCoeff()).exp();
  return out / out.sum();
}

Eigen::VectorXd softmax_backward(const Eigen::VectorXd& probs, const Eigen::VectorXd& grad_probs) {
  const double inner = probs.dot(grad_probs);
  return probs.array() * (grad_probs.array() - inner);
}

void StableProduct::enter_log_mode() {
  if (log_mode_) return;
  log_mode_ = true;
  if (linear_ == 0.0) {
    log_abs_ = -std::numeric_limits<double>::infinity();
  } else {
    sign_ = linear_ < 0 ? -1 : 1;
    log_abs_ = std::log(std::abs(linear_));
  }
}

void StableProduct::multiply(double v) {
  if (!log_mode_) {
    const double a = std::abs(v);
    if (a != 0.0 && (a < kLow || a > kHigh)) {
      enter_log_mode();
    } else {
      linear_ *= v;
      const double p = std::abs(linear_);
      if (p != 0.0 && (p < kLow || p > kHigh)) enter_log_mode();
      return;
    }
  }
  if (v == 0.0) {
    log_abs_ = -std::numeric_limits<double>::infinity();
    return;
  }
  if (v < 0) sign_ = -sign_;
  log_abs_ += std::log(std::abs(v));
}

double StableProduct::value() const {
  if (!log_mode_) return linear_;
  return sign_ * std::exp(log_abs_);
}

double StableProduct::log_abs() const {
  if (!log_mode_) return std::log(std::abs(linear_));
  return log_abs_;
}

}  // namespace direct
