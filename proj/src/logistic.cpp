#include "direct/logistic.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "direct/errors.hpp"

namespace direct::logistic {

void validate(const LogisticModel& model) {
  const auto b = static_cast<Eigen::Index>(model.grid.b());
  if (model.features.cols() != b) throw InvalidInput("logistic: feature count does not match grid b");
  if (static_cast<std::size_t>(model.features.rows()) != model.labels.size()) {
    throw InvalidInput("logistic: feature rows and label count differ");
  }
  for (std::size_t i = 0; i < model.labels.size(); ++i) {
    if (model.labels[i] != 0 && model.labels[i] != 1) {
      throw InvalidInput("logistic: label at row " + std::to_string(i) + " is not 0 or 1");
    }
  }
  if (model.q.b() != model.grid.b() || model.q.mbar() != model.grid.mbar() || model.prior.b() != model.grid.b() ||
      model.prior.mbar() != model.grid.mbar()) {
    throw InvalidInput("logistic: distribution shape does not match grid");
  }
}

namespace {

// Contribution of the rows in `rows` (all rows when empty) to the likelihood bound, scaled by
// `scale`, optionally accumulating d/dprobs.
double bound_rows(const LogisticModel& m, std::span<const std::size_t> rows, double scale, RowMatrix* d_probs) {
  const auto& w = m.grid.values();
  const auto& lq = m.q.log_probs();
  const auto& probs = m.q.probs();
  const Eigen::Index b = w.rows();
  const Eigen::Index mbar = w.cols();
  const Eigen::VectorXd s = (probs.array() * w.array()).rowwise().sum();

  // The -s^T (Phi^T y) term and the linear part of the y = 1 branch.
  Eigen::VectorXd linear = Eigen::VectorXd::Zero(b);
  double total = 0.0;
  RowMatrix lse_terms(b, mbar);
  Eigen::VectorXd lse(b);

  const std::size_t count = rows.empty() ? m.labels.size() : rows.size();
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = rows.empty() ? r : rows[r];
    const int y = m.labels[i];
    const auto phi = m.features.row(static_cast<Eigen::Index>(i));
    if (y == 1) linear -= phi.transpose();  // from -s^T Phi^T y
    const double sign = y == 0 ? -1.0 : 1.0;
    // log(q_j^T exp(sign * phi_ij wbar_j)) per variable, max subtracted per (i, j) row.
    for (Eigen::Index j = 0; j < b; ++j) {
      lse_terms.row(j) = lq.row(j).array() + sign * phi(j) * w.row(j).array();
      lse(j) = log_sum_exp(lse_terms.row(j));
    }
    const double log_prod = lse.sum();
    const double prod = std::exp(log_prod);
    total -= prod;
    if (y == 1) linear += phi.transpose();  // + sum_j phi_ij s_j
    if (d_probs != nullptr) {
      // d prod / d q_jc = prod * exp(sign phi_ij wbar_jc - lse_j)
      for (Eigen::Index j = 0; j < b; ++j) {
        d_probs->row(j).array() -=
            scale * (log_prod - lse(j) + sign * phi(j) * w.row(j).array()).exp();
      }
    }
  }
  total += linear.dot(s);
  if (d_probs != nullptr) d_probs->array() += scale * (w.array().colwise() * linear.array());
  return scale * total;
}

}  // namespace

double likelihood_lower_bound(const LogisticModel& model) {
  validate(model);
  return bound_rows(model, {}, 1.0, nullptr);
}

double elbo_lower_bound(const LogisticModel& model) {
  return likelihood_lower_bound(model) + cross_entropy_factorized(model.q, model.prior) +
         mean_field_entropy(model.q);
}

namespace {

BoundGrad finish(const LogisticModel& model, double lik, RowMatrix d_probs) {
  BoundGrad g;
  g.value = lik + cross_entropy_factorized(model.q, model.prior) + mean_field_entropy(model.q);
  d_probs += model.prior.log_probs() - model.q.log_probs();
  d_probs.array() -= 1.0;
  g.q_logits = softmax_rows_backward(model.q.probs(), d_probs);
  return g;
}

}  // namespace

BoundGrad elbo_lower_bound_grad(const LogisticModel& model) {
  validate(model);
  RowMatrix d = RowMatrix::Zero(model.grid.b(), model.grid.mbar());
  const double lik = bound_rows(model, {}, 1.0, &d);
  return finish(model, lik, std::move(d));
}

BoundGrad elbo_lower_bound_grad(const LogisticModel& model, std::span<const std::size_t> rows) {
  validate(model);
  if (rows.empty()) throw InvalidInput("logistic: empty minibatch");
  for (auto i : rows) {
    if (i >= model.labels.size()) throw InvalidInput("logistic: minibatch row out of range");
  }
  const double scale = static_cast<double>(model.labels.size()) / static_cast<double>(rows.size());
  RowMatrix d = RowMatrix::Zero(model.grid.b(), model.grid.mbar());
  const double lik = bound_rows(model, rows, scale, &d);
  return finish(model, lik, std::move(d));
}

double predict_class_prob(const LogisticModel& model, const Eigen::VectorXd& test_features,
                          std::size_t samples, Rng& rng) {
  if (static_cast<std::size_t>(test_features.size()) != model.grid.b()) {
    throw InvalidInput("predict_class_prob: feature count does not match b");
  }
  if (samples < 1) throw InvalidInput("predict_class_prob: samples must be >= 1");
  double total = 0.0;
  for (const auto& s : sample(model.q, samples, rng)) {
    double z = 0.0;
    for (std::size_t j = 0; j < s.indices.size(); ++j) z += test_features(j) * model.grid.value(j, s.indices[j]);
    total += 1.0 / (1.0 + std::exp(-z));
  }
  return total / static_cast<double>(samples);
}

}  // namespace direct::logistic
