#include "direct/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "direct/bnn.hpp"
#include "direct/errors.hpp"
#include "direct/logistic.hpp"
#include "direct/qinfer.hpp"

namespace direct::pipeline {

namespace {

using config::ModelKind;
using Clock = std::chrono::steady_clock;

constexpr double kNoiseWarmLogit = 4.0;

struct Prepared {
  features::Standardizer input;
  features::TargetTransform target;
  Eigen::MatrixXd x;  // standardized
  Eigen::VectorXd y;  // standardized for regression
};

Prepared prepare(const config::RunConfig& c, const features::Dataset& data, bool regression) {
  if (data.n() == 0) throw DataError("training set is empty");
  Prepared p;
  if (c.features.standardize) {
    if (data.n() < 2) throw DataError("standardization needs at least two rows");
    auto [s, out] = features::standardize(data);
    p.input = std::move(s);
    p.x = std::move(out.x);
  } else {
    p.input.mean = Eigen::VectorXd::Zero(data.x.cols());
    p.input.scale = Eigen::VectorXd::Ones(data.x.cols());
    p.x = data.x;
  }
  if (regression) {
    p.target = features::fit_target(data.y);
    p.y = p.target.forward(data.y);
  } else {
    p.y = data.y;
  }
  return p;
}

features::Hyperparams hyperparams(const config::RunConfig& c, const Prepared& p, double default_sd,
                                  double default_noise) {
  const auto& f = c.features;
  features::Hyperparams h;
  const bool need_heuristic = (!f.lengthscales && c.model != ModelKind::bnn) || (!f.signal_sd && default_sd <= 0.0) ||
                              (!f.noise_var && default_noise <= 0.0);
  if (need_heuristic) {
    features::Dataset d;
    d.x = p.x;
    d.y = p.y;
    h = features::init_hyperparams(d, c.seed);
  }
  if (default_sd > 0.0) h.signal_sd = default_sd;
  if (default_noise > 0.0) h.noise_var = default_noise;
  if (f.lengthscales) {
    if (f.lengthscales->size() != static_cast<std::size_t>(p.x.cols())) {
      throw ConfigError("features.lengthscales: expected " + std::to_string(p.x.cols()) + " entries");
    }
    h.lengthscales = Eigen::Map<const Eigen::VectorXd>(f.lengthscales->data(),
                                                       static_cast<Eigen::Index>(f.lengthscales->size()));
  }
  if (f.signal_sd) h.signal_sd = *f.signal_sd;
  if (f.noise_var) h.noise_var = *f.noise_var;
  return h;
}

void append_trace(train::Trace& into, const train::Trace& more) {
  const std::size_t offset = into.empty() ? 0 : into.back().iteration;
  const double t0 = into.empty() ? 0.0 : into.back().seconds;
  for (auto r : more) {
    if (!into.empty() && r.iteration == 0) continue;
    r.iteration += offset;
    r.seconds += t0;
    into.push_back(r);
  }
}

train::FitResult optimize(const config::RunConfig& c, const train::Objective& f, Eigen::VectorXd theta0) {
  if (c.optimizer.optimizer == train::OptimizerKind::quasi_newton) {
    return train::fit_deterministic(f, std::move(theta0), c.optimizer);
  }
  auto sampler = [&](const Eigen::VectorXd& theta, Rng&) { return f(theta); };
  return train::fit_stochastic(sampler, std::move(theta0), c.optimizer);
}

RowMatrix perturbed(const RowMatrix& logits, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  RowMatrix out = logits;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += normal(rng);
  return out;
}

void fit_glm(const config::RunConfig& c, const Prepared& p, TrainOutcome& out) {
  const auto h = hyperparams(c, p, -1.0, -1.0);
  auto& a = out.artifact;
  a.rff = features::make_rff(h.lengthscales, h.signal_sd, c.b, c.seed);
  a.grid = features::make_support(h.signal_sd, c.mbar, c.b);
  const MeanFieldDist prior = features::discretized_gaussian_prior(a.grid, h.signal_sd);

  glm::GlmModel model;
  model.grid = a.grid;
  model.prior = prior;
  model.q = prior;
  model.noise = NoiseModel::log_uniform(h.noise_var, c.mbar_sigma);
  model.stats = glm::empty_stats(a.grid);
  const auto n = p.x.rows();
  const auto chunk = static_cast<Eigen::Index>(c.features.chunk_rows);
  for (Eigen::Index r0 = 0; r0 < n; r0 += chunk) {
    const Eigen::Index rows = std::min(chunk, n - r0);
    const Eigen::MatrixXd phi = features::rff_features(*a.rff, p.x.middleRows(r0, rows));
    glm::accumulate(model.stats, phi, p.y.segment(r0, rows), a.grid);
  }

  std::size_t warm_iterations = 0;
  if (c.mbar_sigma > 1) {
    // Weights first, with the noise variance pinned at its initial estimate.
    glm::GlmModel pinned = model;
    pinned.noise = NoiseModel(Eigen::VectorXd::Constant(1, h.noise_var), Eigen::VectorXd::Ones(1),
                              Eigen::VectorXd::Zero(1));
    const glm::ElboObjective warm(pinned, glm::EntropyMode::exact);
    auto wfit = optimize(c, [&](const Eigen::VectorXd& th) { return warm.evaluate(th); }, warm.initial());
    model.q = warm.model_at(wfit.theta).q;
    Eigen::VectorXd logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.mbar_sigma));
    logits(static_cast<Eigen::Index>(c.mbar_sigma / 2)) = kNoiseWarmLogit;
    model.noise = model.noise.with_logits(logits);
    out.trace = wfit.trace;
    warm_iterations = wfit.iterations;
  }

  const glm::ElboObjective mf(model, glm::EntropyMode::exact);
  auto fit = optimize(c, [&](const Eigen::VectorXd& th) { return mf.evaluate(th); }, mf.initial());
  glm::GlmModel fitted = mf.model_at(fit.theta);
  append_trace(out.trace, fit.trace);
  a.objective = fit.value;
  a.iterations = warm_iterations + fit.iterations;

  if (c.variational.kind == config::VariationalKind::mixture) {
    const auto& base = std::get<MeanFieldDist>(fitted.q);
    Rng rng(c.seed + 1);
    std::vector<MeanFieldDist> comps;
    for (std::size_t i = 0; i < c.variational.r; ++i) {
      comps.emplace_back(perturbed(base.logits(), c.variational.perturbation, rng));
    }
    glm::GlmModel mix_model = fitted;
    mix_model.q = MixtureDist(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.variational.r)), std::move(comps));
    if (c.variational.entropy == config::MixtureEntropy::bound) {
      const glm::ElboObjective obj(mix_model, glm::EntropyMode::bound, EntropyAnchor{base});
      auto mfit = train::fit_deterministic([&](const Eigen::VectorXd& th) { return obj.evaluate(th); }, obj.initial(),
                                           c.optimizer);
      fitted = obj.model_at(mfit.theta);
      a.anchor = obj.anchor_at(mfit.theta);
      a.objective = mfit.value;
      a.iterations += mfit.iterations;
      append_trace(out.trace, mfit.trace);
    } else {
      const glm::ElboObjective obj(mix_model, glm::EntropyMode::surrogate);
      auto sampler = [&](const Eigen::VectorXd& th, Rng& r) { return obj.sample(th, c.optimizer.mc_samples, r); };
      train::TrainConfig sgd = c.optimizer;
      sgd.optimizer = train::OptimizerKind::sgd;
      auto mfit = train::fit_stochastic(sampler, obj.initial(), sgd);
      fitted = obj.model_at(mfit.theta);
      a.objective = mfit.value;
      a.iterations += mfit.iterations;
      append_trace(out.trace, mfit.trace);
    }
  }
  a.q = fitted.q;
  a.prior = fitted.prior;
  a.noise = fitted.noise;
}

void fit_logistic(const config::RunConfig& c, const Prepared& p, TrainOutcome& out) {
  std::vector<int> labels(static_cast<std::size_t>(p.y.size()));
  for (Eigen::Index i = 0; i < p.y.size(); ++i) {
    if (p.y(i) != 0.0 && p.y(i) != 1.0) {
      throw DataError("logistic labels must be 0 or 1; row " + std::to_string(i + 1) + " has " +
                      std::to_string(p.y(i)));
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(p.y(i));
  }
  const auto h = hyperparams(c, p, 1.0, 1.0);
  auto& a = out.artifact;
  a.rff = features::make_rff(h.lengthscales, h.signal_sd, c.b, c.seed);
  a.grid = features::make_support(h.signal_sd, c.mbar, c.b);
  logistic::LogisticModel model;
  model.grid = a.grid;
  model.prior = features::discretized_gaussian_prior(a.grid, h.signal_sd);
  model.q = model.prior;
  model.features = features::rff_features(*a.rff, p.x);
  model.labels = std::move(labels);
  logistic::validate(model);

  const auto b = static_cast<Eigen::Index>(c.b);
  const auto mbar = static_cast<Eigen::Index>(c.mbar);
  auto at = [&](const Eigen::VectorXd& th) {
    logistic::LogisticModel m = model;
    m.q = MeanFieldDist(Eigen::Map<const RowMatrix>(th.data(), b, mbar));
    return m;
  };
  auto pack = [](const logistic::BoundGrad& g) {
    train::Evaluation e;
    e.value = g.value;
    e.grad = Eigen::Map<const Eigen::VectorXd>(g.q_logits.data(), g.q_logits.size());
    return e;
  };
  const Eigen::VectorXd theta0 = Eigen::Map<const Eigen::VectorXd>(model.q.logits().data(), model.q.logits().size());
  train::FitResult fit;
  if (c.optimizer.optimizer == train::OptimizerKind::quasi_newton) {
    fit = train::fit_deterministic([&](const Eigen::VectorXd& th) { return pack(logistic::elbo_lower_bound_grad(at(th))); },
                                   theta0, c.optimizer);
  } else {
    const std::size_t n = model.labels.size();
    const std::size_t batch = std::min(c.optimizer.batch_size, n);
    std::vector<std::size_t> rows(batch);
    auto sampler = [&](const Eigen::VectorXd& th, Rng& rng) {
      for (auto& r : rows) r = uniform_index(rng, n);
      return pack(logistic::elbo_lower_bound_grad(at(th), rows));
    };
    fit = train::fit_stochastic(sampler, theta0, c.optimizer);
    fit.value = logistic::elbo_lower_bound(at(fit.theta));
  }
  out.trace = fit.trace;
  a.q = at(fit.theta).q;
  a.prior = model.prior;
  a.objective = fit.value;
  a.iterations = fit.iterations;
}

void fit_bnn(const config::RunConfig& c, const Prepared& p, TrainOutcome& out) {
  bnn::BnnArch arch;
  arch.input_dim = static_cast<std::size_t>(p.x.cols());
  arch.layer_widths = c.bnn_layers;
  const auto h = hyperparams(c, p, 1.0, 0.1);
  auto& a = out.artifact;
  a.arch = arch;
  a.grid = features::make_support(h.signal_sd, c.mbar, arch.num_variables());
  bnn::validate(arch, a.grid);
  const MeanFieldDist prior = features::discretized_gaussian_prior(a.grid, h.signal_sd);
  const NoiseModel noise0 = NoiseModel::log_uniform(h.noise_var, c.mbar_sigma);

  const bnn::BnnState state = bnn::forward_pass(arch, p.x, a.grid);
  const bnn::ResidualForm form = bnn::residual_form(state, bnn::bnn_precompute(state, p.y));
  const auto options = bnn::default_options(arch);
  const auto b = static_cast<Eigen::Index>(a.grid.b());
  const auto mbar = static_cast<Eigen::Index>(a.grid.mbar());
  const auto ns = static_cast<Eigen::Index>(noise0.size());
  auto objective = [&](const Eigen::VectorXd& th) {
    const MeanFieldDist q(Eigen::Map<const RowMatrix>(th.data(), b, mbar));
    const auto g = bnn::bnn_elbo_grad(form, q, prior, noise0.with_logits(th.tail(ns)), options);
    train::Evaluation e;
    e.value = g.value;
    e.grad.resize(th.size());
    e.grad << Eigen::Map<const Eigen::VectorXd>(g.q_logits.data(), g.q_logits.size()), g.sigma_logits;
    return e;
  };
  Eigen::VectorXd theta0(b * mbar + ns);
  theta0 << Eigen::Map<const Eigen::VectorXd>(prior.logits().data(), b * mbar), noise0.q_sigma_logits();
  auto fit = optimize(c, objective, theta0);
  out.trace = fit.trace;
  a.q = MeanFieldDist(Eigen::Map<const RowMatrix>(fit.theta.data(), b, mbar));
  a.prior = prior;
  a.noise = noise0.with_logits(fit.theta.tail(ns));
  a.objective = fit.value;
  a.iterations = fit.iterations;
}

Eigen::MatrixXd standardized(const model::ModelArtifact& a, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != a.input_dim()) {
    throw DataError("input has " + std::to_string(x.cols()) + " feature columns, model expects " +
                    std::to_string(a.input_dim()));
  }
  return a.input.apply(x);
}

logistic::LogisticModel logistic_model(const model::ModelArtifact& a) {
  logistic::LogisticModel m;
  m.grid = a.grid;
  m.q = std::get<MeanFieldDist>(a.q);
  m.prior = std::get<MeanFieldDist>(a.prior);
  return m;
}

}  // namespace

TrainOutcome fit(const config::RunConfig& c, const features::Dataset& data) {
  config::validate(c);
  const auto start = Clock::now();
  TrainOutcome out;
  const bool regression = c.model != ModelKind::logistic;
  const Prepared p = prepare(c, data, regression);
  auto& a = out.artifact;
  a.kind = c.model;
  a.feature_names = data.feature_names;
  a.input = p.input;
  a.target = p.target;
  a.quantize_bits = c.features.quantize_bits;
  switch (c.model) {
    case ModelKind::glm:
      fit_glm(c, p, out);
      break;
    case ModelKind::logistic:
      fit_logistic(c, p, out);
      break;
    case ModelKind::bnn:
      fit_bnn(c, p, out);
      break;
  }
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

glm::GlmModel glm_model(const model::ModelArtifact& a) {
  if (!a.noise) throw InvalidInput("glm_model: artifact has no noise model");
  glm::GlmModel m;
  m.grid = a.grid;
  m.q = a.q;
  m.prior = a.prior;
  m.noise = *a.noise;
  m.stats = glm::empty_stats(a.grid);
  return m;
}

Eigen::MatrixXd feature_rows(const model::ModelArtifact& a, const Eigen::MatrixXd& x) {
  if (!a.rff) throw InvalidInput("feature_rows: model has no feature map");
  return features::rff_features(*a.rff, standardized(a, x));
}

Moments predict_moments(const model::ModelArtifact& a, const Eigen::MatrixXd& x, std::uint64_t seed) {
  Moments out;
  const auto n = static_cast<std::size_t>(x.rows());
  out.mean.resize(n);
  switch (a.kind) {
    case ModelKind::glm: {
      const auto model = glm_model(a);
      const Eigen::MatrixXd phi = feature_rows(a, x);
      out.variance.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd row = phi.row(static_cast<Eigen::Index>(i)).transpose();
        out.mean[i] = a.target.inverse(glm::predict_mean(model, row));
        out.variance[i] = glm::predict_variance(model, row) * a.target.scale * a.target.scale;
      }
      break;
    }
    case ModelKind::logistic: {
      const auto model = logistic_model(a);
      const Eigen::MatrixXd phi = feature_rows(a, x);
      Rng rng(seed);
      for (std::size_t i = 0; i < n; ++i) {
        out.mean[i] = logistic::predict_class_prob(model, phi.row(static_cast<Eigen::Index>(i)).transpose(),
                                                   kClassProbSamples, rng);
      }
      break;
    }
    case ModelKind::bnn: {
      const Eigen::MatrixXd xs = standardized(a, x);
      const auto& q = std::get<MeanFieldDist>(a.q);
      out.variance.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto m = bnn::predict(*a.arch, a.grid, q, *a.noise, xs.row(static_cast<Eigen::Index>(i)).transpose());
        out.mean[i] = a.target.inverse(m.mean);
        out.variance[i] = m.variance * a.target.scale * a.target.scale;
      }
      break;
    }
  }
  return out;
}

Eigen::MatrixXd predict_samples(const model::ModelArtifact& a, const Eigen::MatrixXd& x, std::size_t count,
                                std::uint64_t seed) {
  if (count == 0) throw InvalidInput("predict_samples: count must be positive");
  Rng rng(seed);
  const auto n = x.rows();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(count));
  if (a.kind == ModelKind::glm) {
    const auto model = glm_model(a);
    const Eigen::MatrixXd phi = feature_rows(a, x);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto s = qinfer::posterior_predictive_samples(model, phi.row(i).transpose(), count, rng, a.quantize_bits);
      for (std::size_t k = 0; k < count; ++k) out(i, static_cast<Eigen::Index>(k)) = a.target.inverse(s.draws[k]);
    }
    return out;
  }
  const auto& q = std::get<MeanFieldDist>(a.q);
  if (a.kind == ModelKind::logistic) {
    const Eigen::MatrixXd phi = feature_rows(a, x);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto draws = sample(q, count, rng);
      for (std::size_t k = 0; k < count; ++k) {
        const auto w = draws[k].dequantize(a.grid);
        const double z = phi.row(i).dot(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())));
        out(i, static_cast<Eigen::Index>(k)) = 1.0 / (1.0 + std::exp(-z));
      }
    }
    return out;
  }
  const Eigen::MatrixXd xs = standardized(a, x);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto draws = sample(q, count, rng);
    for (std::size_t k = 0; k < count; ++k) {
      const auto w = draws[k].dequantize(a.grid);
      const double f = bnn::network_output(
          *a.arch, Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())), xs.row(i).transpose());
      out(i, static_cast<Eigen::Index>(k)) = a.target.inverse(f);
    }
  }
  return out;
}

double expected_sparsity(const model::ModelArtifact& a) {
  return std::visit([&](const auto& q) { return direct::expected_sparsity(q, a.grid); }, a.q);
}

CrossValReport crossval(const config::RunConfig& c, const features::Dataset& data, std::size_t k) {
  if (c.model == ModelKind::logistic) throw ConfigError("crossval: regression models only (model is logistic)");
  const auto folds = features::kfold(data.n(), k, c.seed);
  CrossValReport report;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto train_set = features::subset(data, folds[f].train);
    const auto test_set = features::subset(data, folds[f].test);
    const auto outcome = fit(c, train_set);
    const auto pred = predict_moments(outcome.artifact, test_set.x, c.seed);
    double sse = 0.0;
    for (std::size_t i = 0; i < pred.mean.size(); ++i) {
      const double e = pred.mean[i] - test_set.y(static_cast<Eigen::Index>(i));
      sse += e * e;
    }
    FoldResult r;
    r.fold = f;
    r.rmse = std::sqrt(sse / static_cast<double>(pred.mean.size()));
    r.seconds = outcome.seconds;
    r.sparsity = expected_sparsity(outcome.artifact);
    report.folds.push_back(r);
  }
  const double kf = static_cast<double>(report.folds.size());
  for (const auto& r : report.folds) {
    report.rmse_mean += r.rmse / kf;
    report.seconds_mean += r.seconds / kf;
    report.sparsity_mean += r.sparsity / kf;
  }
  double ss = 0.0;
  for (const auto& r : report.folds) ss += (r.rmse - report.rmse_mean) * (r.rmse - report.rmse_mean);
  report.rmse_std = report.folds.size() > 1 ? std::sqrt(ss / (kf - 1.0)) : 0.0;
  return report;
}

}  // namespace direct::pipeline
