#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <variant>

#include "direct/noise.hpp"
#include "direct/random.hpp"
#include "direct/variational.hpp"

namespace direct::glm {

/// Data-dependent terms of the regression ELBO. After these are built, ELBO evaluation costs
/// O(b mbar + b^2) regardless of the number of rows.
struct GlmSuffStats {
  double yty = 0.0;
  Eigen::VectorXd phity;    // b
  Eigen::MatrixXd phitphi;  // b x b
  Eigen::MatrixXd h_mat;    // mbar x b, column j = wbar_j^2 * phitphi(j, j)
  std::size_t n = 0;

  [[nodiscard]] std::size_t b() const { return static_cast<std::size_t>(phity.size()); }
};

/// Statistics for zero rows.
GlmSuffStats empty_stats(const SupportGrid& grid);

/// Statistics of features (n x b) and targets. Only the lower triangle of the Gram matrix is
/// accumulated and then mirrored.
GlmSuffStats precompute(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                        const SupportGrid& grid);

/// Adds rows to existing statistics (online update).
void accumulate(GlmSuffStats& stats, const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                const SupportGrid& grid);

using Prior = std::variant<MeanFieldDist, MixtureDist>;

struct GlmModel {
  SupportGrid grid;
  VariationalDist q;
  Prior prior;
  NoiseModel noise;
  GlmSuffStats stats;
};

/// Throws InvalidInput when shapes disagree.
void validate(const GlmModel& model);

/// E_q[log-likelihood] for a mean-field q, with its gradient w.r.t. q's probabilities and q_sigma.
struct LikelihoodTerm {
  double value = 0.0;
  RowMatrix d_probs;
  Eigen::VectorXd d_sigma_probs;
};
LikelihoodTerm expected_log_likelihood(const GlmSuffStats& stats, const SupportGrid& grid,
                                       const MeanFieldDist& q, const NoiseModel& noise);

/// sum_k beta_k log p^(k): the per-entry weights of the (bounded, for mixture priors) prior term.
RowMatrix prior_log_weights(const Prior& prior);

/// Exact ELBO for a mean-field q (a lower bound when the prior is a mixture).
/// Throws UnsupportedError for a mixture q; see mixture_elbo_bound.
double elbo(const GlmModel& model);

/// Exact gradient of elbo() w.r.t. the q logits and q_sigma logits.
ElboGrad elbo_grad(const GlmModel& model);

/// ELBO bound for a mixture q: exact likelihood and prior terms, entropy bounded about `anchor`.
double mixture_elbo_bound(const GlmModel& model, const EntropyAnchor& anchor);

/// Phi* s, s_j = q_j^T wbar_j.
double predict_mean(const GlmModel& model, const Eigen::VectorXd& test_features);

/// E[sigma2] + Var_q(phi* w); mixtures combine component moments.
double predict_variance(const GlmModel& model, const Eigen::VectorXd& test_features);

// ---------------------------------------------------------------------------
// Flat-parameter views used by the optimizers.

/// How the entropy of q enters the objective.
enum class EntropyMode {
  exact,      // mean-field q
  bound,      // mixture q, first-order entropy bound with a learned anchor
  surrogate,  // mixture q, unbiased score-function entropy gradient
};

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// The GLM ELBO as a function of one flat vector holding every logit.
/// Layout: exact     -> [q (b*mbar), q_sigma]
///         bound     -> [alpha (r), components (r*b*mbar), anchor (b*mbar), q_sigma]
///         surrogate -> [alpha (r), components (r*b*mbar), q_sigma]
class ElboObjective {
 public:
  ElboObjective(GlmModel model, EntropyMode mode, std::optional<EntropyAnchor> anchor = std::nullopt);

  [[nodiscard]] EntropyMode mode() const { return mode_; }
  [[nodiscard]] std::size_t dimension() const;
  [[nodiscard]] Eigen::VectorXd initial() const { return initial_; }

  /// Deterministic objective (exact or bound modes).
  [[nodiscard]] Evaluation evaluate(const Eigen::VectorXd& theta) const;
  /// Stochastic estimate whose gradient is unbiased for the true ELBO gradient (surrogate mode;
  /// the value is a Monte Carlo ELBO estimate).
  [[nodiscard]] Evaluation sample(const Eigen::VectorXd& theta, std::size_t t, Rng& rng) const;

  [[nodiscard]] GlmModel model_at(const Eigen::VectorXd& theta) const;
  [[nodiscard]] std::optional<EntropyAnchor> anchor_at(const Eigen::VectorXd& theta) const;

 private:
  GlmModel model_;
  EntropyMode mode_;
  std::size_t r_ = 1;
  Eigen::VectorXd initial_;
  RowMatrix log_prior_;
};

}  // namespace direct::glm
