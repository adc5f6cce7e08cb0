#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "direct/bnn.hpp"
#include "direct/config.hpp"
#include "direct/features.hpp"
#include "direct/glm.hpp"
#include "direct/noise.hpp"
#include "direct/variational.hpp"

namespace direct::model {

inline constexpr const char* kFormatName = "direct-model";
inline constexpr int kFormatVersion = 1;

/// Everything needed to predict from raw input rows.
struct ModelArtifact {
  config::ModelKind kind = config::ModelKind::glm;
  std::vector<std::string> feature_names;
  features::Standardizer input;
  features::TargetTransform target;
  std::optional<features::RffMap> rff;  // glm and logistic
  std::optional<bnn::BnnArch> arch;     // bnn
  SupportGrid grid;
  VariationalDist q;
  glm::Prior prior;
  std::optional<NoiseModel> noise;  // absent for logistic
  std::optional<EntropyAnchor> anchor;
  unsigned quantize_bits = 8;
  double objective = 0.0;
  std::size_t iterations = 0;

  [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(input.mean.size()); }
};

config::Json to_json(const ModelArtifact& a);
/// Throws DataError for malformed or incompatible documents.
ModelArtifact from_json(const config::Json& j);

void save(const std::string& path, const ModelArtifact& a);
ModelArtifact load(const std::string& path);

}  // namespace direct::model
