#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "direct/kron.hpp"
#include "direct/noise.hpp"
#include "direct/variational.hpp"

namespace direct::bnn {

/// Fully connected regression network with quadratic hidden activations and no biases.
/// Weight (layer, neuron, input) maps to latent variable offset(layer) + neuron * fan_in + input.
struct BnnArch {
  std::size_t input_dim = 1;
  std::vector<std::size_t> layer_widths;  // last entry must be 1

  [[nodiscard]] std::size_t layers() const { return layer_widths.size(); }
  [[nodiscard]] std::size_t fan_in(std::size_t layer) const;
  [[nodiscard]] std::size_t num_variables() const;
  [[nodiscard]] std::size_t variable(std::size_t layer, std::size_t neuron, std::size_t input) const;
};

/// Throws ConfigError unless the architecture is well formed and uses exactly grid.b() variables.
void validate(const BnnArch& arch, const SupportGrid& grid);

/// State of one neuron over every hypothesis and training row:
///   u_l = sum_j C(j, l) kron_k g_jk
/// with g_jk stored sparsely (absent factors are all-ones).
class BnnState {
 public:
  BnnState() = default;
  BnnState(std::vector<std::size_t> dims, Eigen::MatrixXd coeffs, std::vector<FactorList> terms,
           std::vector<bool> consumed);

  /// One all-ones term whose coefficients are a data column.
  static BnnState input(const std::vector<std::size_t>& dims, const Eigen::VectorXd& column);
  /// No terms.
  static BnnState zero(const std::vector<std::size_t>& dims, std::size_t n);

  [[nodiscard]] std::size_t h() const { return terms_.size(); }
  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(coeffs_.cols()); }
  [[nodiscard]] const std::vector<std::size_t>& dims() const { return dims_; }
  [[nodiscard]] const Eigen::MatrixXd& coeffs() const { return coeffs_; }
  [[nodiscard]] const std::vector<FactorList>& terms() const { return terms_; }
  [[nodiscard]] const std::vector<bool>& consumed() const { return consumed_; }

  /// The state for training row l as a KronSumVec.
  [[nodiscard]] KronSumVec column(std::size_t l) const;

 private:
  std::vector<std::size_t> dims_;
  Eigen::MatrixXd coeffs_;  // h x n
  std::vector<FactorList> terms_;
  std::vector<bool> consumed_;
};

/// Multiplies the state by every value of latent variable p.
BnnState mult_var(const BnnState& state, std::size_t p, const SupportGrid& grid);

/// Sum of neuron inputs, compacted.
BnnState neuron_sum(const std::vector<BnnState>& states);

/// Elementwise square; h terms become h(h+1)/2 (not compacted).
BnnState quad_activation(const BnnState& state);

/// Merges terms with proportional factors, folding scales into the coefficient rows.
BnnState compact(const BnnState& state);

/// Network output at every hypothesis for every row of x (n x d).
BnnState forward_pass(const BnnArch& arch, const Eigen::MatrixXd& x, const SupportGrid& grid);

/// y^T y, p = C y, V = C C^T.
struct BnnSuffStats {
  double yty = 0.0;
  Eigen::VectorXd p_vec;
  Eigen::MatrixXd v;
  std::size_t n = 0;
};

BnnSuffStats bnn_precompute(const BnnState& state, const Eigen::VectorXd& y);

/// The expected residual sum of squares as q^T r with r = y^T y - 2 sum_j p_j G_j + sum_jk V_jk G_j*G_k,
/// stored as a compacted KronSumVec (the constant y^T y is kept separately).
struct ResidualForm {
  double constant = 0.0;
  KronSumVec terms;
  double n = 0.0;
};

ResidualForm residual_form(const BnnState& state, const BnnSuffStats& stats);

struct ElboOptions {
  /// Accumulate term products as sign + log magnitude.
  bool log_domain = false;
};

/// Options used for an architecture: log-domain products for three or more layers.
ElboOptions default_options(const BnnArch& arch);

double bnn_elbo(const ResidualForm& form, const MeanFieldDist& q, const MeanFieldDist& prior,
                const NoiseModel& noise, ElboOptions options = {});
double bnn_elbo(const BnnState& state, const BnnSuffStats& stats, const MeanFieldDist& q,
                const MeanFieldDist& prior, const NoiseModel& noise, ElboOptions options = {});

/// Value and exact logit gradients of bnn_elbo.
ElboGrad bnn_elbo_grad(const ResidualForm& form, const MeanFieldDist& q, const MeanFieldDist& prior,
                       const NoiseModel& noise, ElboOptions options = {});

struct PredictiveMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Output of the network for one weight vector (indexed by BnnArch::variable).
double network_output(const BnnArch& arch, const Eigen::VectorXd& weights, const Eigen::VectorXd& x);

/// Exact predictive mean and variance (including noise) at one input.
PredictiveMoments predict(const BnnArch& arch, const SupportGrid& grid, const MeanFieldDist& q,
                          const NoiseModel& noise, const Eigen::VectorXd& x);

}  // namespace direct::bnn
