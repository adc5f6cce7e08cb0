#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "direct/train.hpp"
#include "json.hpp"

namespace direct::config {

enum class ModelKind { glm, logistic, bnn };
enum class VariationalKind { mean_field, mixture };
enum class MixtureEntropy { bound, sgd };

struct VariationalConfig {
  VariationalKind kind = VariationalKind::mean_field;
  std::size_t r = 5;
  MixtureEntropy entropy = MixtureEntropy::bound;
  /// Standard deviation of the logit noise used to spread mixture components apart.
  double perturbation = 0.5;
};

struct FeatureConfig {
  bool standardize = true;
  std::optional<std::vector<double>> lengthscales;
  std::optional<double> signal_sd;
  std::optional<double> noise_var;
  unsigned quantize_bits = 8;
  /// Rows per block when generating features.
  std::size_t chunk_rows = 4096;
};

struct PathConfig {
  std::string train;
  std::string target;
  std::string artifact = "model.json";
  std::string trace = "trace.csv";
};

struct RunConfig {
  ModelKind model = ModelKind::glm;
  VariationalConfig variational;
  std::size_t mbar = 15;
  std::size_t mbar_sigma = 15;
  std::size_t b = 2000;
  std::uint64_t seed = 0;
  train::TrainConfig optimizer;
  FeatureConfig features;
  std::vector<std::size_t> bnn_layers{1};
  PathConfig paths;
};

using Json = nlohmann::ordered_json;

Json to_json(const RunConfig& config);

/// Reads every key, collecting all problems (unknown keys, bad types, bad values) into one ConfigError.
RunConfig from_json(const Json& j);

/// Throws ConfigError listing every invalid field.
void validate(const RunConfig& config);

/// Applies DIRECT_<KEY> variables: nested keys joined by "__", names case-insensitive,
/// values parsed as JSON when possible and as strings otherwise.
void apply_env_overrides(Json& j, const std::map<std::string, std::string>& env);

/// Environment variables starting with DIRECT_.
std::map<std::string, std::string> direct_environment();

/// Defaults <- file (if non-empty) <- environment. Relative paths resolve against the file's directory.
RunConfig load(const std::string& path, const std::map<std::string, std::string>& env);

std::string to_string(ModelKind k);
std::string to_string(VariationalKind k);
std::string to_string(MixtureEntropy k);

}  // namespace direct::config
