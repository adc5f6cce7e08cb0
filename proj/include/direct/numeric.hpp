#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>

namespace direct {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// log(sum(exp(x))) with max subtraction. Empty input gives -inf.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& x) {
  if (x.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.derived().array() - m).exp().sum());
}

/// Row-wise softmax of a logit matrix.
RowMatrix softmax_rows(const RowMatrix& logits);

/// Row-wise log-softmax of a logit matrix.
RowMatrix log_softmax_rows(const RowMatrix& logits);

/// Chain rule through a row softmax: given dF/dprobs, returns dF/dlogits.
RowMatrix softmax_rows_backward(const RowMatrix& probs, const RowMatrix& grad_probs);

/// Softmax of a vector.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Chain rule through a vector softmax.
Eigen::VectorXd softmax_backward(const Eigen::VectorXd& probs, const Eigen::VectorXd& grad_probs);

/// Product of many reals. Switches to sign + log-magnitude accumulation when a factor
/// or the running product leaves [1e-300, 1e300], or when `force_log` is set.
class StableProduct {
 public:
  explicit StableProduct(bool force_log = false) : log_mode_(force_log) {}

  void multiply(double v);

  /// Final value; may be 0 or +-inf if the true value is not representable.
  [[nodiscard]] double value() const;
  /// log|product|; -inf for an exact zero.
  [[nodiscard]] double log_abs() const;
  [[nodiscard]] int sign() const { return sign_; }

 private:
  static constexpr double kLow = 1e-300;
  static constexpr double kHigh = 1e300;

  void enter_log_mode();

  bool log_mode_;
  double linear_ = 1.0;
  double log_abs_ = 0.0;
  int sign_ = 1;
};

}  // namespace direct
