#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "direct/glm.hpp"
#include "direct/random.hpp"
#include "direct/variational.hpp"

namespace direct::qinfer {

/// x ~= scale * (q - zero_point), q in [qmin, qmax].
struct AffineQuantizer {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  unsigned bit_width = 8;

  [[nodiscard]] std::int32_t qmin() const { return -qmax(); }
  [[nodiscard]] std::int32_t qmax() const { return (std::int32_t{1} << (bit_width - 1)) - 1; }
  /// Round half to even, then clamp.
  [[nodiscard]] std::int32_t quantize(double x) const;
  [[nodiscard]] double dequantize(std::int32_t q) const { return scale * static_cast<double>(q - zero_point); }
};

struct QuantizedFeatures {
  std::vector<std::int32_t> values;
  AffineQuantizer quantizer;
};

inline constexpr unsigned kDefaultFeatureBits = 8;

/// Symmetric range quantization: zero_point 0, scale = max|x| / qmax (1 for an all-zero input).
QuantizedFeatures quantize_features(const Eigen::VectorXd& phi, unsigned bit_width = kDefaultFeatureBits);

/// Integer levels of an evenly spaced grid shared by all variables: wbar_k = scale * level(k).
struct WeightLevels {
  double scale = 1.0;
  std::vector<std::int32_t> levels;  // one per grid index
};

/// Throws UnsupportedError when rows differ, spacing is uneven, or the grid is not a multiple of
/// half its spacing.
WeightLevels weight_levels(const SupportGrid& grid);

struct PredictCounters {
  std::size_t multiplies = 0;
  bool widened = false;
};

/// sum_j qphi_j * level(s_j) in an int32 accumulator (int64 on overflow), skipping zero levels,
/// scaled back to a real once at the end.
double integer_predict(const QuantizedFeatures& features, const QuantizedSample& sample, const WeightLevels& weights,
                       PredictCounters* counters = nullptr);

/// Worst-case |integer_predict - phi . w| for this feature vector and sample, covering feature
/// rounding, weight level representation, and floating-point rounding of both paths.
double quantization_error_bound(const Eigen::VectorXd& phi, const QuantizedFeatures& features,
                                const QuantizedSample& sample, const SupportGrid& grid, const WeightLevels& weights);

struct PredictiveSamples {
  double mean = 0.0;
  /// Sample variance of phi* w over the draws.
  double variance = 0.0;
  /// E_q[sigma2], to be added for the variance of y*.
  double noise_variance = 0.0;
  std::vector<double> draws;
  std::size_t multiplies = 0;
};

/// Draws `count` posterior samples and evaluates each through integer_predict.
PredictiveSamples posterior_predictive_samples(const glm::GlmModel& model, const Eigen::VectorXd& test_features,
                                               std::size_t count, Rng& rng,
                                               unsigned bit_width = kDefaultFeatureBits);

}  // namespace direct::qinfer
