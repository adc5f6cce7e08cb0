#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "direct/config.hpp"
#include "direct/errors.hpp"
#include "direct/features.hpp"
#include "direct/glm.hpp"
#include "direct/model.hpp"
#include "direct/pipeline.hpp"
#include "direct/train.hpp"
#include "direct/variational.hpp"

namespace py = pybind11;
using namespace direct;

namespace {

features::Dataset as_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DataError("x and y have different row counts");
  features::Dataset d;
  d.x = x;
  d.y = y;
  for (Eigen::Index c = 0; c < x.cols(); ++c) d.feature_names.push_back("x" + std::to_string(c));
  d.target_name = "y";
  return d;
}

config::RunConfig config_from(const std::string& json_text) {
  auto j = config::to_json(config::RunConfig{});
  try {
    j.merge_patch(config::Json::parse(json_text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config::from_json(j);
}

py::dict trace_dict(const train::Trace& t) {
  std::vector<std::size_t> it;
  std::vector<double> sec;
  std::vector<double> obj;
  std::vector<double> gn;
  for (const auto& r : t) {
    it.push_back(r.iteration);
    sec.push_back(r.seconds);
    obj.push_back(r.objective);
    gn.push_back(r.grad_norm);
  }
  py::dict d;
  d["iteration"] = it;
  d["seconds"] = sec;
  d["objective"] = obj;
  d["grad_norm"] = gn;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact discrete variational inference over Kronecker-structured hypothesis spaces";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("default_config", [] { return config::to_json(config::RunConfig{}).dump(2); },
        "Default configuration as JSON text.");
  m.def("load_config", [](const std::string& path) {
    return config::to_json(config::load(path, config::direct_environment())).dump(2);
  }, py::arg("path"), "Resolved configuration (file, then DIRECT_ environment overrides) as JSON text.");

  py::class_<model::ModelArtifact>(m, "Model")
      .def_static("load", &model::load, py::arg("path"))
      .def("save", [](const model::ModelArtifact& a, const std::string& path) { model::save(path, a); }, py::arg("path"))
      .def("to_json", [](const model::ModelArtifact& a) { return model::to_json(a).dump(); })
      .def_property_readonly("kind", [](const model::ModelArtifact& a) { return config::to_string(a.kind); })
      .def_property_readonly("input_dim", &model::ModelArtifact::input_dim)
      .def_property_readonly("feature_names", [](const model::ModelArtifact& a) { return a.feature_names; })
      .def_property_readonly("iterations", [](const model::ModelArtifact& a) { return a.iterations; })
      .def_property_readonly("objective", [](const model::ModelArtifact& a) { return a.objective; })
      .def_property_readonly("expected_sparsity", &pipeline::expected_sparsity)
      .def(
          "predict",
          [](const model::ModelArtifact& a, const Eigen::MatrixXd& x, std::uint64_t seed) {
            const auto mo = pipeline::predict_moments(a, x, seed);
            return py::make_tuple(mo.mean, mo.variance);
          },
          py::arg("x"), py::arg("seed") = 0,
          "(mean, variance) per row; for logistic models mean is Pr(y = 0) and variance is empty.")
      .def("sample", &pipeline::predict_samples, py::arg("x"), py::arg("count"), py::arg("seed") = 0,
           "n x count predictions under posterior draws.");

  m.def(
      "train",
      [](const std::string& config_json, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
        auto cfg = config_from(config_json);
        if (cfg.paths.train.empty()) cfg.paths.train = "<memory>";
        config::validate(cfg);
        py::gil_scoped_release release;
        auto out = pipeline::fit(cfg, as_dataset(x, y));
        py::gil_scoped_acquire acquire;
        return py::make_tuple(std::move(out.artifact), trace_dict(out.trace), out.seconds);
      },
      py::arg("config_json"), py::arg("x"), py::arg("y"),
      "Fits a model to in-memory data; returns (Model, trace dict, seconds).");

  m.def(
      "crossval",
      [](const std::string& config_json, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t k) {
        auto cfg = config_from(config_json);
        if (cfg.paths.train.empty()) cfg.paths.train = "<memory>";
        config::validate(cfg);
        const auto r = pipeline::crossval(cfg, as_dataset(x, y), k);
        std::vector<double> rmse;
        std::vector<double> secs;
        std::vector<double> sparsity;
        for (const auto& f : r.folds) {
          rmse.push_back(f.rmse);
          secs.push_back(f.seconds);
          sparsity.push_back(f.sparsity);
        }
        py::dict d;
        d["rmse"] = rmse;
        d["seconds"] = secs;
        d["sparsity"] = sparsity;
        d["rmse_mean"] = r.rmse_mean;
        d["rmse_std"] = r.rmse_std;
        return d;
      },
      py::arg("config_json"), py::arg("x"), py::arg("y"), py::arg("k"));

  m.def(
      "glm_elbo",
      [](const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const RowMatrix& grid, const RowMatrix& q_logits,
         const RowMatrix& prior_logits, const Eigen::VectorXd& sigma2, const Eigen::VectorXd& p_sigma,
         const Eigen::VectorXd& q_sigma_logits) {
        const SupportGrid g(grid);
        glm::GlmModel model{g, MeanFieldDist(q_logits), MeanFieldDist(prior_logits),
                            NoiseModel(sigma2, p_sigma, q_sigma_logits), glm::precompute(phi, y, g)};
        const auto r = glm::elbo_grad(model);
        return py::make_tuple(r.value, r.q_logits, r.sigma_logits);
      },
      py::arg("phi"), py::arg("y"), py::arg("grid"), py::arg("q_logits"), py::arg("prior_logits"), py::arg("sigma2"),
      py::arg("p_sigma"), py::arg("q_sigma_logits"),
      "Exact mean-field ELBO and its logit gradients: (value, d q_logits, d q_sigma_logits).");

  m.def(
      "benchmark",
      [](std::size_t b, std::size_t mbar, std::size_t n, std::uint64_t seed, double budget) {
        train::SyntheticSpec spec;
        spec.b = b;
        spec.mbar = mbar;
        spec.n = n;
        spec.seed = seed;
        train::BenchmarkOptions opt;
        opt.time_budget = budget;
        py::gil_scoped_release release;
        const auto r = train::benchmark_direct_vs_reinforce(spec, opt);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["initial_elbo"] = r.initial_elbo;
        d["direct"] = r.direct.final_elbo;
        py::dict rf;
        for (const auto& run : r.reinforce) rf[py::float_(run.learning_rate)] = run.final_elbo;
        d["reinforce"] = rf;
        return d;
      },
      py::arg("b") = 20, py::arg("mbar") = 3, py::arg("n") = 1000, py::arg("seed") = 0, py::arg("budget") = 60.0,
      "DIRECT against REINFORCE on a synthetic problem; final exact ELBO of each method.");

  m.def(
      "pack_sample",
      [](const std::vector<std::uint16_t>& indices, std::uint16_t mbar) {
        const auto bytes = serialize(QuantizedSample{indices, mbar});
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      },
      py::arg("indices"), py::arg("mbar"));
  m.def(
      "unpack_sample",
      [](const py::bytes& data) {
        const std::string s = data;
        const auto q = deserialize_sample(
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        return py::make_tuple(q.indices, q.mbar);
      },
      py::arg("data"));
}
