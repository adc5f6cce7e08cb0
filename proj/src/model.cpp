#include "direct/model.hpp"

#include <fstream>

#include "direct/errors.hpp"

namespace direct::model {

using config::Json;

namespace {

Json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <typename M>
Json mat(const M& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd read_vec(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

RowMatrix read_mat(const Json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw DataError("artifact: ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

Json dist_json(const MeanFieldDist& d) { return {{"kind", "mean_field"}, {"logits", mat(d.logits())}}; }

Json dist_json(const MixtureDist& d) {
  Json comps = Json::array();
  for (const auto& c : d.components()) comps.push_back(mat(c.logits()));
  return {{"kind", "mixture"}, {"mixture_logits", vec(d.mixture_logits())}, {"components", comps}};
}

VariationalDist read_dist(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "mean_field") return MeanFieldDist(read_mat(j.at("logits")));
  if (kind != "mixture") throw DataError("artifact: unknown distribution kind '" + kind + "'");
  std::vector<MeanFieldDist> comps;
  for (const auto& c : j.at("components")) comps.emplace_back(read_mat(c));
  return MixtureDist(read_vec(j.at("mixture_logits")), std::move(comps));
}

config::ModelKind read_kind(const std::string& s) {
  for (auto k : {config::ModelKind::glm, config::ModelKind::logistic, config::ModelKind::bnn}) {
    if (config::to_string(k) == s) return k;
  }
  throw DataError("artifact: unknown model_type '" + s + "'");
}

}  // namespace

Json to_json(const ModelArtifact& a) {
  Json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["model_type"] = config::to_string(a.kind);
  j["feature_names"] = a.feature_names;
  j["input"] = {{"mean", vec(a.input.mean)}, {"scale", vec(a.input.scale)}};
  j["target"] = {{"mean", a.target.mean}, {"scale", a.target.scale}};
  if (a.rff) {
    j["rff"] = {{"b", a.rff->b},
                {"seed", a.rff->seed},
                {"signal_sd", a.rff->signal_sd},
                {"lengthscales", vec(a.rff->lengthscales)},
                {"frequencies", mat(a.rff->frequencies)}};
  }
  if (a.arch) j["bnn"] = {{"input_dim", a.arch->input_dim}, {"layers", a.arch->layer_widths}};
  j["grid"] = mat(a.grid.values());
  j["q"] = std::visit([](const auto& d) { return dist_json(d); }, a.q);
  j["prior"] = std::visit([](const auto& d) { return dist_json(d); }, a.prior);
  if (a.noise) {
    j["noise"] = {{"sigma2", vec(a.noise->sigma2())},
                  {"p_sigma", vec(a.noise->p_sigma())},
                  {"q_logits", vec(a.noise->q_sigma_logits())}};
  }
  if (a.anchor) j["anchor"] = mat(a.anchor->dist.logits());
  j["quantize_bits"] = a.quantize_bits;
  j["training"] = {{"objective", a.objective}, {"iterations", a.iterations}};
  return j;
}

ModelArtifact from_json(const Json& j) {
  try {
    if (j.value("format", std::string()) != kFormatName) throw DataError("artifact: not a direct-model document");
    if (j.at("version").get<int>() != kFormatVersion) {
      throw DataError("artifact: unsupported version " + std::to_string(j.at("version").get<int>()));
    }
    ModelArtifact a;
    a.kind = read_kind(j.at("model_type").get<std::string>());
    a.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    a.input.mean = read_vec(j.at("input").at("mean"));
    a.input.scale = read_vec(j.at("input").at("scale"));
    a.target.mean = j.at("target").at("mean").get<double>();
    a.target.scale = j.at("target").at("scale").get<double>();
    if (j.contains("rff")) {
      const auto& r = j.at("rff");
      features::RffMap m;
      m.b = r.at("b").get<std::size_t>();
      m.seed = r.at("seed").get<std::uint64_t>();
      m.signal_sd = r.at("signal_sd").get<double>();
      m.lengthscales = read_vec(r.at("lengthscales"));
      m.frequencies = read_mat(r.at("frequencies"));
      a.rff = std::move(m);
    }
    if (j.contains("bnn")) {
      bnn::BnnArch arch;
      arch.input_dim = j.at("bnn").at("input_dim").get<std::size_t>();
      arch.layer_widths = j.at("bnn").at("layers").get<std::vector<std::size_t>>();
      a.arch = std::move(arch);
    }
    a.grid = SupportGrid(read_mat(j.at("grid")));
    a.q = read_dist(j.at("q"));
    const auto prior = read_dist(j.at("prior"));
    if (const auto* p = std::get_if<MeanFieldDist>(&prior)) {
      a.prior = *p;
    } else {
      a.prior = std::get<MixtureDist>(prior);
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      a.noise = NoiseModel(read_vec(n.at("sigma2")), read_vec(n.at("p_sigma")), read_vec(n.at("q_logits")));
    }
    if (j.contains("anchor")) a.anchor = EntropyAnchor{MeanFieldDist(read_mat(j.at("anchor")))};
    a.quantize_bits = j.value("quantize_bits", 8U);
    a.objective = j.at("training").at("objective").get<double>();
    a.iterations = j.at("training").at("iterations").get<std::size_t>();
    if (a.kind != config::ModelKind::bnn && !a.rff) throw DataError("artifact: missing feature map");
    if (a.kind == config::ModelKind::bnn && !a.arch) throw DataError("artifact: missing network architecture");
    if (a.kind != config::ModelKind::logistic && !a.noise) throw DataError("artifact: missing noise model");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("artifact: malformed document: ") + e.what());
  } catch (const InvalidInput& e) {
    throw DataError(std::string("artifact: inconsistent contents: ") + e.what());
  }
}

void save(const std::string& path, const ModelArtifact& a) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write artifact '" + path + "'");
  out << to_json(a).dump(1) << '\n';
  if (!out) throw DataError("failed writing artifact '" + path + "'");
}

ModelArtifact load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open artifact '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("artifact '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace direct::model
