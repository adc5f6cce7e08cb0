#include <gtest/gtest.h>

#include <cmath>

#include "direct/errors.hpp"
#include "direct/qinfer.hpp"
#include "support/instances.hpp"

using namespace direct;
using namespace direct::qinfer;

namespace {

SupportGrid even_grid(std::size_t mbar, std::size_t b, double step) {
  std::vector<double> row(mbar);
  for (std::size_t k = 0; k < mbar; ++k) row[k] = step * (static_cast<double>(k) - static_cast<double>(mbar - 1) / 2.0);
  return SupportGrid::uniform_rows(row, b);
}

QuantizedSample random_sample(std::size_t b, std::size_t mbar, Rng& rng) {
  QuantizedSample s;
  s.mbar = static_cast<std::uint16_t>(mbar);
  for (std::size_t j = 0; j < b; ++j) s.indices.push_back(static_cast<std::uint16_t>(uniform_index(rng, mbar)));
  return s;
}

}  // namespace

TEST(Quantizer, RoundHalfToEvenAndClamp) {
  const AffineQuantizer q{1.0, 0, 8};
  EXPECT_EQ(q.qmax(), 127);
  EXPECT_EQ(q.qmin(), -127);
  EXPECT_EQ(q.quantize(2.5), 2);
  EXPECT_EQ(q.quantize(3.5), 4);
  EXPECT_EQ(q.quantize(-2.5), -2);
  EXPECT_EQ(q.quantize(-0.4), 0);
  EXPECT_EQ(q.quantize(1000.0), 127);
  EXPECT_EQ(q.quantize(-1000.0), -127);
  EXPECT_DOUBLE_EQ(q.dequantize(-5), -5.0);
}

TEST(Quantizer, FeaturesSymmetricFrozen) {
  Eigen::VectorXd phi(3);
  phi << 0.5, -1.27, 0.3;
  const auto qf = quantize_features(phi);
  EXPECT_EQ(qf.quantizer.zero_point, 0);
  EXPECT_NEAR(qf.quantizer.scale, 0.01, 1e-17);
  EXPECT_EQ(qf.values, (std::vector<std::int32_t>{50, -127, 30}));
  const auto q16 = quantize_features(phi, 16);
  EXPECT_EQ(q16.quantizer.qmax(), 32767);
  EXPECT_EQ(q16.values[1], -32767);
  EXPECT_EQ(quantize_features(Eigen::VectorXd::Zero(2)).quantizer.scale, 1.0);
  EXPECT_ANY_THROW(quantize_features(phi, 12));
}

TEST(Levels, IntegerAndHalfStepGrids) {
  const auto a = weight_levels(even_grid(3, 2, 1.0));
  EXPECT_DOUBLE_EQ(a.scale, 1.0);
  EXPECT_EQ(a.levels, (std::vector<std::int32_t>{-1, 0, 1}));
  const auto b = weight_levels(even_grid(4, 2, 1.0));
  EXPECT_DOUBLE_EQ(b.scale, 0.5);
  EXPECT_EQ(b.levels, (std::vector<std::int32_t>{-3, -1, 1, 3}));
  // make_support grids (3 sd spacing) are evenly spaced and symmetric.
  const std::vector<double> row{-3.0, -1.0, 1.0, 3.0};
  EXPECT_EQ(weight_levels(SupportGrid::uniform_rows(row, 3)).levels, (std::vector<std::int32_t>{-3, -1, 1, 3}));
  const std::vector<double> single{0.0};
  EXPECT_EQ(weight_levels(SupportGrid::uniform_rows(single, 2)).levels, (std::vector<std::int32_t>{0}));
}

TEST(Levels, RejectsUnsupportedGrids) {
  const std::vector<double> uneven{-1.0, 0.0, 2.0};
  EXPECT_THROW(weight_levels(SupportGrid::uniform_rows(uneven, 2)), UnsupportedError);
  const std::vector<double> shifted{0.3, 1.3, 2.3};
  EXPECT_THROW(weight_levels(SupportGrid::uniform_rows(shifted, 2)), UnsupportedError);
  RowMatrix rows(2, 3);
  rows << -1.0, 0.0, 1.0, -2.0, 0.0, 2.0;
  EXPECT_THROW(weight_levels(SupportGrid(rows)), UnsupportedError);
}

TEST(IntegerPredict, ExactForRepresentableInputs) {
  Eigen::VectorXd phi(4);
  phi << 2.0, -3.0, 0.0, 127.0;
  const auto qf = quantize_features(phi);
  EXPECT_DOUBLE_EQ(qf.quantizer.scale, 1.0);
  const auto grid = even_grid(3, 4, 1.0);
  const QuantizedSample s{{2, 0, 2, 1}, 3};
  PredictCounters c;
  EXPECT_DOUBLE_EQ(integer_predict(qf, s, weight_levels(grid), &c), 2.0 + 3.0);
  // Only the zero weight level is skipped.
  EXPECT_EQ(c.multiplies, 3u);
  EXPECT_FALSE(c.widened);
}

TEST(IntegerPredict, WidensOnOverflow) {
  const std::size_t b = 300;
  const Eigen::VectorXd phi = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(b), 1.0);
  const auto qf = quantize_features(phi, 16);
  const auto grid = even_grid(1001, b, 1.0);
  QuantizedSample s;
  s.mbar = 1001;
  s.indices.assign(b, 1000);
  PredictCounters c;
  const double v = integer_predict(qf, s, weight_levels(grid), &c);
  EXPECT_TRUE(c.widened);
  EXPECT_NEAR(v, 500.0 * b, 1e-9);
}

TEST(IntegerPredict, ErrorWithinRigorousBound) {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t b = 1 + uniform_index(rng, 300);
    const std::size_t mbar = 2 + uniform_index(rng, 14);
    const auto grid = even_grid(mbar, b, 0.1 + uniform01(rng));
    const Eigen::VectorXd phi = direct::testing::random_vector(static_cast<Eigen::Index>(b), rng, 0.3);
    const unsigned bits = rep % 2 == 0 ? 8 : 16;
    const auto qf = quantize_features(phi, bits);
    const auto levels = weight_levels(grid);
    const auto s = random_sample(b, mbar, rng);
    double exact = 0.0;
    for (std::size_t j = 0; j < b; ++j) exact += phi(static_cast<Eigen::Index>(j)) * grid.value(j, s.indices[j]);
    const double err = std::abs(integer_predict(qf, s, levels) - exact);
    const double bound = quantization_error_bound(phi, qf, s, grid, levels);
    EXPECT_LE(err, bound) << "rep " << rep;
    // Feature rounding is at most scale/2 per term.
    double crude = 0.0;
    for (std::size_t j = 0; j < b; ++j) crude += std::abs(grid.value(j, s.indices[j]));
    EXPECT_LE(bound, (0.5 * qf.quantizer.scale + 1e-12) * crude * 1.001 + 1e-9);
  }
}

TEST(PosteriorSamples, MomentsAndDeterminism) {
  Rng rng(2);
  auto inst = direct::testing::random_glm(6, 5, 2, 4, rng);
  inst.model.grid = even_grid(5, 6, 0.5);
  const Eigen::VectorXd s = direct::testing::random_vector(6, rng);
  Rng a(7);
  Rng b(7);
  const auto r = posterior_predictive_samples(inst.model, s, 20000, a);
  const auto r2 = posterior_predictive_samples(inst.model, s, 20000, b);
  EXPECT_EQ(r.draws, r2.draws);
  EXPECT_EQ(r.draws.size(), 20000u);
  const double mean = glm::predict_mean(inst.model, s);
  const double var = glm::predict_variance(inst.model, s) - inst.model.noise.expected_sigma2();
  EXPECT_NEAR(r.mean, mean, 4.0 * std::sqrt(var / 20000.0) + 0.01 * s.cwiseAbs().sum());
  EXPECT_NEAR(r.variance, var, 0.05 * var + 0.01);
  EXPECT_DOUBLE_EQ(r.noise_variance, inst.model.noise.expected_sigma2());
  EXPECT_GT(r.multiplies, 0u);
  EXPECT_LE(r.multiplies, 20000u * 6u);
}
