#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "direct/kron.hpp"
#include "direct/numeric.hpp"
#include "direct/random.hpp"

namespace direct {

/// The discrete hypothesis lattice: row j holds the values variable j may take.
class SupportGrid {
 public:
  SupportGrid() = default;
  /// Rows must be strictly increasing and share one length.
  explicit SupportGrid(RowMatrix values);
  /// b identical rows.
  static SupportGrid uniform_rows(std::span<const double> row, std::size_t b);

  [[nodiscard]] const RowMatrix& values() const { return values_; }
  [[nodiscard]] std::size_t b() const { return static_cast<std::size_t>(values_.rows()); }
  [[nodiscard]] std::size_t mbar() const { return static_cast<std::size_t>(values_.cols()); }
  [[nodiscard]] double value(std::size_t var, std::size_t level) const {
    return values_(static_cast<Eigen::Index>(var), static_cast<Eigen::Index>(level));
  }
  [[nodiscard]] std::vector<std::size_t> dims() const { return std::vector<std::size_t>(b(), mbar()); }

 private:
  RowMatrix values_;
};

/// Fully factorized categorical distribution over a b x mbar lattice, parameterized by logits.
class MeanFieldDist {
 public:
  MeanFieldDist() = default;
  explicit MeanFieldDist(RowMatrix logits);
  static MeanFieldDist uniform(std::size_t b, std::size_t mbar);
  /// Logits = log(probs); rows are renormalized.
  static MeanFieldDist from_probs(const RowMatrix& probs);

  [[nodiscard]] const RowMatrix& logits() const { return logits_; }
  [[nodiscard]] const RowMatrix& probs() const { return probs_; }
  [[nodiscard]] const RowMatrix& log_probs() const { return log_probs_; }
  [[nodiscard]] std::size_t b() const { return static_cast<std::size_t>(logits_.rows()); }
  [[nodiscard]] std::size_t mbar() const { return static_cast<std::size_t>(logits_.cols()); }

  /// The joint pmf as a single Kronecker term.
  [[nodiscard]] KronSumVec prob_vector() const;

 private:
  RowMatrix logits_;
  RowMatrix probs_;
  RowMatrix log_probs_;
};

/// Finite mixture of mean-field components sharing one lattice shape.
class MixtureDist {
 public:
  MixtureDist() = default;
  MixtureDist(Eigen::VectorXd mixture_logits, std::vector<MeanFieldDist> components);

  [[nodiscard]] const Eigen::VectorXd& mixture_logits() const { return mixture_logits_; }
  [[nodiscard]] const Eigen::VectorXd& weights() const { return weights_; }
  [[nodiscard]] const std::vector<MeanFieldDist>& components() const { return components_; }
  [[nodiscard]] std::size_t r() const { return components_.size(); }
  [[nodiscard]] std::size_t b() const { return components_.front().b(); }
  [[nodiscard]] std::size_t mbar() const { return components_.front().mbar(); }

 private:
  Eigen::VectorXd mixture_logits_;
  Eigen::VectorXd weights_;
  std::vector<MeanFieldDist> components_;
};

/// Taylor-expansion center of the mixture entropy bound.
struct EntropyAnchor {
  MeanFieldDist dist;
};

/// A posterior draw stored as level indices into the support grid.
struct QuantizedSample {
  std::vector<std::uint16_t> indices;
  std::uint16_t mbar = 0;

  /// ceil(log2(mbar)) bits per entry.
  [[nodiscard]] unsigned bit_width() const;
  /// Exact grid values for each index.
  [[nodiscard]] std::vector<double> dequantize(const SupportGrid& grid) const;

  friend bool operator==(const QuantizedSample&, const QuantizedSample&) = default;
};

/// "DQSW" | version u8 | b u32 LE | mbar u16 LE | indices bit-packed LSB first.
std::vector<std::uint8_t> serialize(const QuantizedSample& sample);
QuantizedSample deserialize_sample(std::span<const std::uint8_t> bytes);
inline constexpr std::uint8_t kSampleFormatVersion = 1;
inline constexpr std::size_t kSampleHeaderBytes = 11;

using VariationalDist = std::variant<MeanFieldDist, MixtureDist>;

/// -sum_i q_i^T log q_i.
double mean_field_entropy(const MeanFieldDist& q);

/// sum_i q_i^T log p_i.
double cross_entropy_factorized(const MeanFieldDist& q, const MeanFieldDist& p);

/// r terms, term i = alpha_i * kron_j q_j^(i).
KronSumVec mixture_prob_vector(const MixtureDist& q);

/// Lower bound on the entropy of a mixture from a first-order expansion of log q about the
/// factorized anchor a. Exact when r = 1 and a == q.
double mixture_entropy_lower_bound(const MixtureDist& q, const EntropyAnchor& a);

struct MixtureEntropyBoundGrad {
  double value = 0.0;
  Eigen::VectorXd mixture_logits;
  std::vector<RowMatrix> component_logits;
  RowMatrix anchor_logits;
};

/// Value and gradient (w.r.t. all logits) of mixture_entropy_lower_bound.
MixtureEntropyBoundGrad mixture_entropy_lower_bound_grad(const MixtureDist& q, const EntropyAnchor& a);

/// sum_i alpha_i sum_j q_j^T log p_j^(i); a Jensen lower bound on q^T log p.
double mixture_prior_lower_bound(const MeanFieldDist& q, const MixtureDist& p);
/// Same bound for a mixture q (the bound is linear in q).
double mixture_prior_lower_bound(const MixtureDist& q, const MixtureDist& p);

/// log q(s) evaluated with log-sum-exp over components.
double log_pmf(const MixtureDist& q, const QuantizedSample& s);
double log_pmf(const MeanFieldDist& q, const QuantizedSample& s);

struct MixtureGrad {
  Eigen::VectorXd mixture_logits;
  std::vector<RowMatrix> component_logits;
};

/// Score function d log q(s) / d logits.
MixtureGrad log_pmf_grad(const MixtureDist& q, const QuantizedSample& s);

struct EntropySurrogate {
  /// (1/2t) sum_i (log q(s_i) + 1)^2
  double value = 0.0;
  /// Gradient of the surrogate with samples held fixed; unbiased for d(q^T log q)/d logits.
  MixtureGrad grad;
  /// -(1/t) sum_i log q(s_i): Monte Carlo entropy estimate from the same draws.
  double entropy_estimate = 0.0;
};

EntropySurrogate entropy_surrogate_loss(const MixtureDist& q, std::size_t t, Rng& rng);

std::vector<QuantizedSample> sample(const MeanFieldDist& q, std::size_t count, Rng& rng);
std::vector<QuantizedSample> sample(const MixtureDist& q, std::size_t count, Rng& rng);

/// Smallest index whose cumulative probability strictly exceeds a uniform draw.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

/// Average over variables of the probability mass on exact-zero grid levels.
double expected_sparsity(const MeanFieldDist& q, const SupportGrid& grid);
double expected_sparsity(const MixtureDist& q, const SupportGrid& grid);

/// q^T f for a mean-field q: per term, coeff * prod_j q_j^T f_j.
double expectation(const MeanFieldDist& q, const KronSumVec& f, bool force_log = false);

struct ExpectationGrad {
  double value = 0.0;
  RowMatrix d_probs;
};

/// q^T f and its gradient w.r.t. q's probabilities.
ExpectationGrad expectation_grad(const MeanFieldDist& q, const KronSumVec& f, bool force_log = false);

/// s_j = q_j^T wbar_j (alpha-weighted for mixtures).
Eigen::VectorXd expected_weights(const MeanFieldDist& q, const SupportGrid& grid);
Eigen::VectorXd expected_weights(const MixtureDist& q, const SupportGrid& grid);

}  // namespace direct
