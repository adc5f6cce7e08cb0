#include "direct/qinfer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "direct/errors.hpp"

namespace direct::qinfer {

namespace {

constexpr double kUnitRoundoff = std::numeric_limits<double>::epsilon() / 2.0;

double gamma(std::size_t k) {
  const double ku = static_cast<double>(k) * kUnitRoundoff;
  return ku / (1.0 - ku);
}

template <typename Acc>
bool accumulate(const QuantizedFeatures& f, const QuantizedSample& s, const WeightLevels& w, Acc& acc,
                std::size_t& multiplies) {
  acc = 0;
  multiplies = 0;
  for (std::size_t j = 0; j < s.indices.size(); ++j) {
    const std::int32_t level = w.levels[s.indices[j]];
    if (level == 0) continue;
    Acc prod = 0;
    ++multiplies;
    if (__builtin_mul_overflow(static_cast<Acc>(f.values[j]), static_cast<Acc>(level), &prod)) return false;
    if (__builtin_add_overflow(acc, prod, &acc)) return false;
  }
  return true;
}

}  // namespace

std::int32_t AffineQuantizer::quantize(double x) const {
  const double r = std::nearbyint(x / scale) + static_cast<double>(zero_point);
  const double clamped = std::min(std::max(r, static_cast<double>(qmin())), static_cast<double>(qmax()));
  return static_cast<std::int32_t>(clamped);
}

QuantizedFeatures quantize_features(const Eigen::VectorXd& phi, unsigned bit_width) {
  if (bit_width != 8 && bit_width != 16) throw InvalidInput("quantize_features: bit width must be 8 or 16");
  if (!phi.allFinite()) throw InvalidInput("quantize_features: non-finite input");
  QuantizedFeatures out;
  out.quantizer.bit_width = bit_width;
  const double max_abs = phi.size() == 0 ? 0.0 : phi.cwiseAbs().maxCoeff();
  out.quantizer.scale = max_abs > 0.0 ? max_abs / static_cast<double>(out.quantizer.qmax()) : 1.0;
  out.values.resize(static_cast<std::size_t>(phi.size()));
  for (Eigen::Index j = 0; j < phi.size(); ++j) out.values[static_cast<std::size_t>(j)] = out.quantizer.quantize(phi(j));
  return out;
}

WeightLevels weight_levels(const SupportGrid& grid) {
  const auto& v = grid.values();
  if (grid.b() == 0) throw InvalidInput("weight_levels: empty grid");
  for (Eigen::Index j = 1; j < v.rows(); ++j) {
    if (v.row(j) != v.row(0)) throw UnsupportedError("weight_levels: grid rows differ between variables");
  }
  WeightLevels out;
  const std::size_t mbar = grid.mbar();
  if (mbar == 1) {
    if (v(0, 0) != 0.0) throw UnsupportedError("weight_levels: single-level grid must be {0}");
    out.levels = {0};
    return out;
  }
  const double step = (v(0, v.cols() - 1) - v(0, 0)) / static_cast<double>(mbar - 1);
  for (Eigen::Index k = 1; k < v.cols(); ++k) {
    if (std::abs(v(0, k) - v(0, k - 1) - step) > 1e-9 * std::abs(step)) {
      throw UnsupportedError("weight_levels: grid is not evenly spaced");
    }
  }
  const double offset = v(0, 0) / step;
  const double twice = 2.0 * offset;
  std::int32_t mult = 0;
  std::int32_t base = 0;
  if (std::abs(offset - std::round(offset)) < 1e-9) {
    mult = 1;
    base = static_cast<std::int32_t>(std::llround(offset));
    out.scale = step;
  } else if (std::abs(twice - std::round(twice)) < 1e-9) {
    mult = 2;
    base = static_cast<std::int32_t>(std::llround(twice));
    out.scale = step / 2.0;
  } else {
    throw UnsupportedError("weight_levels: grid values are not integer multiples of half the spacing");
  }
  out.levels.resize(mbar);
  for (std::size_t k = 0; k < mbar; ++k) out.levels[k] = mult * static_cast<std::int32_t>(k) + base;
  return out;
}

double integer_predict(const QuantizedFeatures& features, const QuantizedSample& sample, const WeightLevels& weights,
                       PredictCounters* counters) {
  if (features.values.size() != sample.indices.size()) {
    throw InvalidInput("integer_predict: " + std::to_string(features.values.size()) + " features but " +
                       std::to_string(sample.indices.size()) + " weights");
  }
  if (sample.mbar != weights.levels.size()) throw InvalidInput("integer_predict: sample and grid level counts differ");
  for (auto idx : sample.indices) {
    if (idx >= weights.levels.size()) throw InvalidInput("integer_predict: level index out of range");
  }
  if (features.quantizer.zero_point != 0) throw UnsupportedError("integer_predict: features need zero point 0");

  const double scale = features.quantizer.scale * weights.scale;
  std::size_t multiplies = 0;
  double result = 0.0;
  std::int32_t acc32 = 0;
  bool widened = false;
  if (accumulate(features, sample, weights, acc32, multiplies)) {
    result = static_cast<double>(acc32) * scale;
  } else {
    std::int64_t acc64 = 0;
    widened = true;
    if (!accumulate(features, sample, weights, acc64, multiplies)) {
      throw NumericError("integer_predict: accumulator overflow in 64 bits");
    }
    result = static_cast<double>(acc64) * scale;
  }
  if (counters != nullptr) {
    counters->multiplies += multiplies;
    counters->widened = counters->widened || widened;
  }
  return result;
}

double quantization_error_bound(const Eigen::VectorXd& phi, const QuantizedFeatures& features,
                                const QuantizedSample& sample, const SupportGrid& grid, const WeightLevels& weights) {
  const std::size_t b = sample.indices.size();
  if (static_cast<std::size_t>(phi.size()) != b || features.values.size() != b) {
    throw InvalidInput("quantization_error_bound: size mismatch");
  }
  const double half = features.quantizer.scale / 2.0;
  double feature_part = 0.0;
  double level_part = 0.0;
  double float_mag = 0.0;
  double int_mag = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    const double w = grid.value(j, sample.indices[j]);
    const double w_hat = weights.scale * static_cast<double>(weights.levels[sample.indices[j]]);
    const double phi_hat = features.quantizer.dequantize(features.values[j]);
    const double phi_j = phi(static_cast<Eigen::Index>(j));
    feature_part += std::abs(w_hat) * std::max(half, std::abs(phi_j - phi_hat));
    level_part += std::abs(phi_j) * std::abs(w - w_hat);
    float_mag += std::abs(phi_j * w);
    int_mag += std::abs(phi_hat * w_hat);
  }
  return feature_part + level_part + gamma(b + 3) * (float_mag + int_mag);
}

PredictiveSamples posterior_predictive_samples(const glm::GlmModel& model, const Eigen::VectorXd& test_features,
                                               std::size_t count, Rng& rng, unsigned bit_width) {
  if (count == 0) throw InvalidInput("posterior_predictive_samples: count must be positive");
  if (static_cast<std::size_t>(test_features.size()) != model.grid.b()) {
    throw InvalidInput("posterior_predictive_samples: expected " + std::to_string(model.grid.b()) +
                       " features, got " + std::to_string(test_features.size()));
  }
  const WeightLevels levels = weight_levels(model.grid);
  const QuantizedFeatures qf = quantize_features(test_features, bit_width);
  const auto samples = std::visit([&](const auto& q) { return sample(q, count, rng); }, model.q);

  PredictiveSamples out;
  PredictCounters counters;
  out.draws.reserve(count);
  for (const auto& s : samples) out.draws.push_back(integer_predict(qf, s, levels, &counters));
  const Eigen::Map<const Eigen::VectorXd> d(out.draws.data(), static_cast<Eigen::Index>(count));
  out.mean = d.mean();
  out.variance = count > 1 ? (d.array() - out.mean).square().sum() / static_cast<double>(count - 1) : 0.0;
  out.noise_variance = model.noise.expected_sigma2();
  out.multiplies = counters.multiplies;
  return out;
}

}  // namespace direct::qinfer
