#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "direct/config.hpp"
#include "direct/errors.hpp"
#include "direct/model.hpp"
#include "direct/pipeline.hpp"
#include "support/instances.hpp"
#include "support/tempdir.hpp"

using namespace direct;
using config::Json;
using config::RunConfig;
using direct::testing::TempDir;

namespace {

features::Dataset sine_data(std::size_t n, std::uint64_t seed, double noise = 0.1) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> nd(0.0, noise);
  features::Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 1);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    d.x(i, 0) = u(rng);
    d.y(i) = 3.0 + 2.0 * std::sin(2.0 * d.x(i, 0)) + nd(rng);
  }
  d.feature_names = {"x"};
  d.target_name = "y";
  return d;
}

RunConfig small_config() {
  RunConfig c;
  c.b = 100;
  c.mbar = 9;
  c.mbar_sigma = 5;
  c.optimizer.max_iterations = 200;
  c.paths.train = "unused.csv";
  return c;
}

double rmse(const std::vector<double>& pred, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::pow(pred[i] - y(static_cast<Eigen::Index>(i)), 2);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

}  // namespace

TEST(ConfigJson, DefaultsRoundTrip) {
  RunConfig c = small_config();
  c.features.lengthscales = std::vector<double>{0.5};
  const auto j = config::to_json(c);
  EXPECT_EQ(config::to_json(config::from_json(j)), j);
}

TEST(ConfigJson, CollectsEveryProblem) {
  const Json j = Json::parse(R"({"model": "svm", "mbar": "many", "optimizer": {"speed": 3}, "extra": 1})");
  try {
    config::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* key : {"model", "mbar", "optimizer.speed", "extra"}) {
      EXPECT_NE(msg.find(key), std::string::npos) << key << " missing from: " << msg;
    }
  }
}

TEST(ConfigJson, ValidateRejectsInconsistentSettings) {
  RunConfig c = small_config();
  c.paths.train.clear();
  EXPECT_THROW(config::validate(c), ConfigError);
  c = small_config();
  c.model = config::ModelKind::logistic;
  c.variational.kind = config::VariationalKind::mixture;
  EXPECT_THROW(config::validate(c), ConfigError);
  c = small_config();
  c.model = config::ModelKind::bnn;
  c.bnn_layers = {3, 2};
  EXPECT_THROW(config::validate(c), ConfigError);
  c = small_config();
  c.b = 101;
  EXPECT_THROW(config::validate(c), ConfigError);
  EXPECT_NO_THROW(config::validate(small_config()));
}

TEST(ConfigEnv, OverridesNestedKeys) {
  Json j = config::to_json(RunConfig{});
  config::apply_env_overrides(j, {{"DIRECT_MBAR", "7"},
                                  {"DIRECT_OPTIMIZER__KIND", "sgd"},
                                  {"DIRECT_PATHS__TRAIN", "data.csv"},
                                  {"DIRECT_FEATURES__LENGTHSCALES", "[1.5, 2]"},
                                  {"OTHER_THING", "1"}});
  const auto c = config::from_json(j);
  EXPECT_EQ(c.mbar, 7u);
  EXPECT_EQ(c.optimizer.optimizer, train::OptimizerKind::sgd);
  EXPECT_EQ(c.paths.train, "data.csv");
  EXPECT_EQ(*c.features.lengthscales, (std::vector<double>{1.5, 2.0}));
}

TEST(ConfigLoad, LayersFileThenEnvAndResolvesPaths) {
  TempDir dir;
  const auto path = dir.write("c.json", R"({"b": 100, "mbar": 3, "paths": {"train": "d.csv"}})");
  const auto c = config::load(path, {{"DIRECT_MBAR", "9"}});
  EXPECT_EQ(c.b, 100u);
  EXPECT_EQ(c.mbar, 9u);
  EXPECT_EQ(c.paths.train, dir.file("d.csv"));
  EXPECT_THROW(config::load(dir.write("bad.json", "{not json"), {}), ConfigError);
  EXPECT_THROW(config::load(dir.file("missing.json"), {}), ConfigError);
}

TEST(Pipeline, GlmFitsAndPredictsInOriginalUnits) {
  const auto train = sine_data(300, 1);
  const auto test = sine_data(100, 2);
  const auto out = pipeline::fit(small_config(), train);
  EXPECT_EQ(out.artifact.kind, config::ModelKind::glm);
  EXPECT_FALSE(out.trace.empty());
  const auto m = pipeline::predict_moments(out.artifact, test.x);
  EXPECT_LT(rmse(m.mean, test.y), 0.2);
  for (double v : m.variance) EXPECT_GT(v, 0.0);
  const double sp = pipeline::expected_sparsity(out.artifact);
  EXPECT_GE(sp, 0.0);
  EXPECT_LE(sp, 1.0);
}

TEST(Pipeline, FitIsDeterministic) {
  const auto train = sine_data(120, 3);
  const auto a = pipeline::fit(small_config(), train);
  const auto b = pipeline::fit(small_config(), train);
  EXPECT_EQ(model::to_json(a.artifact).dump(), model::to_json(b.artifact).dump());
}

TEST(Pipeline, MixtureVariantsTrain) {
  const auto train = sine_data(150, 4);
  for (auto entropy : {config::MixtureEntropy::bound, config::MixtureEntropy::sgd}) {
    auto c = small_config();
    c.variational.kind = config::VariationalKind::mixture;
    c.variational.r = 3;
    c.variational.entropy = entropy;
    c.optimizer.mc_samples = 50;
    if (entropy == config::MixtureEntropy::sgd) {
      c.optimizer.optimizer = train::OptimizerKind::sgd;
      c.optimizer.max_iterations = 400;
      c.optimizer.learning_rate = 0.05;
    }
    const auto out = pipeline::fit(c, train);
    const auto m = pipeline::predict_moments(out.artifact, train.x.topRows(20));
    EXPECT_LT(rmse(m.mean, train.y.head(20)), 0.3) << config::to_string(entropy);
  }
}

TEST(Pipeline, SamplesCenterOnMean) {
  const auto train = sine_data(200, 5);
  const auto out = pipeline::fit(small_config(), train);
  const Eigen::MatrixXd x = train.x.topRows(3);
  const auto s = pipeline::predict_samples(out.artifact, x, 4000, 11);
  const auto m = pipeline::predict_moments(out.artifact, x);
  ASSERT_EQ(s.rows(), 3);
  ASSERT_EQ(s.cols(), 4000);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double sd = std::sqrt(m.variance[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(s.row(i).mean(), m.mean[static_cast<std::size_t>(i)], 5.0 * sd / std::sqrt(4000.0) + 0.05);
  }
  EXPECT_EQ(pipeline::predict_samples(out.artifact, x, 10, 11), pipeline::predict_samples(out.artifact, x, 10, 11));
}

TEST(Pipeline, LogisticClassifies) {
  Rng rng(6);
  features::Dataset d;
  d.x = direct::testing::random_matrix(300, 2, rng);
  d.y.resize(300);
  for (Eigen::Index i = 0; i < 300; ++i) d.y(i) = d.x(i, 0) + d.x(i, 1) > 0 ? 0.0 : 1.0;
  d.feature_names = {"a", "b"};
  auto c = small_config();
  c.model = config::ModelKind::logistic;
  c.b = 40;
  c.optimizer.max_iterations = 100;
  const auto out = pipeline::fit(c, d);
  const auto m = pipeline::predict_moments(out.artifact, d.x, 1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < m.mean.size(); ++i) {
    EXPECT_GE(m.mean[i], 0.0);
    EXPECT_LE(m.mean[i], 1.0);
    correct += (m.mean[i] > 0.5) == (d.y(static_cast<Eigen::Index>(i)) == 0.0);
  }
  EXPECT_GT(correct, 240u);
  EXPECT_TRUE(m.variance.empty());
  d.y(0) = 0.5;
  EXPECT_THROW(pipeline::fit(c, d), DataError);
}

TEST(Pipeline, BnnTrains) {
  const auto train = sine_data(60, 7);
  auto c = small_config();
  c.model = config::ModelKind::bnn;
  c.bnn_layers = {2, 1};
  c.mbar = 3;
  c.optimizer.max_iterations = 50;
  const auto out = pipeline::fit(c, train);
  ASSERT_TRUE(out.artifact.arch.has_value());
  const auto m = pipeline::predict_moments(out.artifact, train.x.topRows(5));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_TRUE(std::isfinite(m.mean[i]));
    EXPECT_GT(m.variance[i], 0.0);
  }
}

TEST(Pipeline, CrossValidationSummaries) {
  const auto data = sine_data(150, 8);
  const auto r = pipeline::crossval(small_config(), data, 3);
  ASSERT_EQ(r.folds.size(), 3u);
  double mean = 0.0;
  for (const auto& f : r.folds) mean += f.rmse / 3.0;
  EXPECT_NEAR(r.rmse_mean, mean, 1e-12);
  EXPECT_LT(r.rmse_mean, 0.2);
  EXPECT_GE(r.rmse_std, 0.0);
  auto c = small_config();
  c.model = config::ModelKind::logistic;
  EXPECT_THROW(pipeline::crossval(c, data, 3), ConfigError);
}

TEST(Artifact, RoundTripsThroughDisk) {
  TempDir dir;
  const auto out = pipeline::fit(small_config(), sine_data(80, 9));
  model::save(dir.file("m.json"), out.artifact);
  const auto back = model::load(dir.file("m.json"));
  EXPECT_EQ(model::to_json(back).dump(), model::to_json(out.artifact).dump());
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 1, 0.3);
  EXPECT_EQ(pipeline::predict_moments(back, x).mean, pipeline::predict_moments(out.artifact, x).mean);
}

TEST(Artifact, RejectsCorruptDocuments) {
  TempDir dir;
  EXPECT_THROW(model::load(dir.write("a.json", "[]")), DataError);
  EXPECT_THROW(model::load(dir.write("b.json", R"({"format": "direct-model", "version": 99})")), DataError);
  EXPECT_THROW(model::load(dir.write("c.json", "{")), DataError);
  EXPECT_THROW(model::load(dir.file("none.json")), DataError);
}

TEST(Artifact, FeatureDimensionMismatch) {
  const auto out = pipeline::fit(small_config(), sine_data(60, 10));
  EXPECT_THROW(pipeline::feature_rows(out.artifact, Eigen::MatrixXd::Zero(2, 3)), DataError);
}
