#include "direct/glm.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "direct/errors.hpp"

namespace direct::glm {

namespace {

void refresh_h(GlmSuffStats& stats, const SupportGrid& grid) {
  const auto& w = grid.values();
  stats.h_mat.resize(w.cols(), w.rows());
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    stats.h_mat.col(j) = w.row(j).transpose().array().square() * stats.phitphi(j, j);
  }
}

std::size_t b_of(const VariationalDist& q) {
  return std::visit([](const auto& d) { return d.b(); }, q);
}
std::size_t mbar_of(const VariationalDist& q) {
  return std::visit([](const auto& d) { return d.mbar(); }, q);
}

}  // namespace

GlmSuffStats empty_stats(const SupportGrid& grid) {
  GlmSuffStats s;
  const auto b = static_cast<Eigen::Index>(grid.b());
  s.phity = Eigen::VectorXd::Zero(b);
  s.phitphi = Eigen::MatrixXd::Zero(b, b);
  refresh_h(s, grid);
  return s;
}

void accumulate(GlmSuffStats& stats, const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                const SupportGrid& grid) {
  if (features.rows() != targets.size()) throw InvalidInput("precompute: feature/target row counts differ");
  if (static_cast<std::size_t>(features.cols()) != grid.b() || stats.b() != grid.b()) {
    throw InvalidInput("precompute: feature count " + std::to_string(features.cols()) +
                       " does not match grid b " + std::to_string(grid.b()));
  }
  stats.yty += targets.squaredNorm();
  stats.phity.noalias() += features.transpose() * targets;
  stats.phitphi.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose());
  stats.phitphi.triangularView<Eigen::StrictlyUpper>() = stats.phitphi.transpose();
  stats.n += static_cast<std::size_t>(features.rows());
  refresh_h(stats, grid);
}

GlmSuffStats precompute(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                        const SupportGrid& grid) {
  if (features.rows() < 1) throw InvalidInput("precompute: need at least one row");
  GlmSuffStats s = empty_stats(grid);
  accumulate(s, features, targets, grid);
  return s;
}

void validate(const GlmModel& model) {
  const std::size_t b = model.grid.b();
  const std::size_t mbar = model.grid.mbar();
  if (b_of(model.q) != b || mbar_of(model.q) != mbar) throw InvalidInput("GlmModel: q shape does not match grid");
  if (b_of(model.prior) != b || mbar_of(model.prior) != mbar) {
    throw InvalidInput("GlmModel: prior shape does not match grid");
  }
  if (model.stats.b() != b || static_cast<std::size_t>(model.stats.h_mat.rows()) != mbar) {
    throw InvalidInput("GlmModel: statistics do not match grid");
  }
}

LikelihoodTerm expected_log_likelihood(const GlmSuffStats& stats, const SupportGrid& grid,
                                       const MeanFieldDist& q, const NoiseModel& noise) {
  const auto& w = grid.values();
  const auto& probs = q.probs();
  const Eigen::VectorXd s = (probs.array() * w.array()).rowwise().sum();
  const Eigen::VectorXd as = stats.phitphi * s;
  const Eigen::VectorXd diag = stats.phitphi.diagonal();
  // sum_j q_j^T h_j, with h_mat stored mbar x b.
  const double qh = (probs.array() * stats.h_mat.transpose().array()).sum();
  const double residual =
      stats.yty - 2.0 * s.dot(stats.phity) + s.dot(as) - diag.dot(s.cwiseProduct(s)) + qh;

  const GaussianTerm g = gaussian_expected_log_likelihood(noise, static_cast<double>(stats.n), residual);
  const Eigen::VectorXd d_s = -2.0 * stats.phity + 2.0 * as - 2.0 * diag.cwiseProduct(s);

  LikelihoodTerm out;
  out.value = g.value;
  out.d_probs = g.d_residual * ((w.array().colwise() * d_s.array()) + stats.h_mat.transpose().array()).matrix();
  out.d_sigma_probs = g.d_sigma_probs;
  return out;
}

RowMatrix prior_log_weights(const Prior& prior) {
  if (const auto* p = std::get_if<MeanFieldDist>(&prior)) return p->log_probs();
  const auto& mix = std::get<MixtureDist>(prior);
  RowMatrix out = RowMatrix::Zero(mix.b(), mix.mbar());
  for (std::size_t k = 0; k < mix.r(); ++k) out += mix.weights()(k) * mix.components()[k].log_probs();
  return out;
}

namespace {

const MeanFieldDist& mean_field_q(const GlmModel& model) {
  const auto* q = std::get_if<MeanFieldDist>(&model.q);
  if (q == nullptr) throw UnsupportedError("glm: operation requires a mean-field q");
  return *q;
}

Eigen::VectorXd sigma_logit_grad(const NoiseModel& noise, const Eigen::VectorXd& d_sigma_probs) {
  const Eigen::VectorXd total =
      d_sigma_probs.array() + noise.log_p_sigma().array() - noise.log_q_sigma().array() - 1.0;
  return softmax_backward(noise.q_sigma(), total);
}

}  // namespace

double elbo(const GlmModel& model) {
  validate(model);
  const auto& q = mean_field_q(model);
  const auto lik = expected_log_likelihood(model.stats, model.grid, q, model.noise);
  const RowMatrix log_prior = prior_log_weights(model.prior);
  return lik.value + (q.probs().array() * log_prior.array()).sum() + mean_field_entropy(q) +
         model.noise.prior_minus_entropy_term();
}

ElboGrad elbo_grad(const GlmModel& model) {
  validate(model);
  const auto& q = mean_field_q(model);
  const auto lik = expected_log_likelihood(model.stats, model.grid, q, model.noise);
  const RowMatrix log_prior = prior_log_weights(model.prior);
  ElboGrad g;
  g.value = lik.value + (q.probs().array() * log_prior.array()).sum() + mean_field_entropy(q) +
            model.noise.prior_minus_entropy_term();
  const RowMatrix d_probs = lik.d_probs + log_prior - q.log_probs() - RowMatrix::Ones(q.b(), q.mbar());
  g.q_logits = softmax_rows_backward(q.probs(), d_probs);
  g.sigma_logits = sigma_logit_grad(model.noise, lik.d_sigma_probs);
  return g;
}

double mixture_elbo_bound(const GlmModel& model, const EntropyAnchor& anchor) {
  validate(model);
  const auto* q = std::get_if<MixtureDist>(&model.q);
  if (q == nullptr) throw UnsupportedError("mixture_elbo_bound: q must be a mixture");
  const RowMatrix log_prior = prior_log_weights(model.prior);
  double value = model.noise.prior_minus_entropy_term() + mixture_entropy_lower_bound(*q, anchor);
  for (std::size_t i = 0; i < q->r(); ++i) {
    const auto& c = q->components()[i];
    const auto lik = expected_log_likelihood(model.stats, model.grid, c, model.noise);
    value += q->weights()(i) * (lik.value + (c.probs().array() * log_prior.array()).sum());
  }
  return value;
}

double predict_mean(const GlmModel& model, const Eigen::VectorXd& test_features) {
  if (static_cast<std::size_t>(test_features.size()) != model.grid.b()) {
    throw InvalidInput("predict_mean: expected " + std::to_string(model.grid.b()) + " features, got " +
                       std::to_string(test_features.size()));
  }
  const Eigen::VectorXd s = std::visit([&](const auto& d) { return expected_weights(d, model.grid); }, model.q);
  return test_features.dot(s);
}

namespace {

// Mean and variance of phi* w under one mean-field q.
std::pair<double, double> component_moments(const MeanFieldDist& q, const SupportGrid& grid,
                                             const Eigen::VectorXd& phi) {
  const auto& w = grid.values();
  const Eigen::VectorXd s = (q.probs().array() * w.array()).rowwise().sum();
  const Eigen::VectorXd s2 = (q.probs().array() * w.array().square()).rowwise().sum();
  const Eigen::VectorXd var = (s2.array() - s.array().square()).max(0.0);
  return {phi.dot(s), phi.array().square().matrix().dot(var)};
}

}  // namespace

double predict_variance(const GlmModel& model, const Eigen::VectorXd& test_features) {
  if (static_cast<std::size_t>(test_features.size()) != model.grid.b()) {
    throw InvalidInput("predict_variance: feature count does not match b");
  }
  const double noise = model.noise.expected_sigma2();
  if (const auto* q = std::get_if<MeanFieldDist>(&model.q)) {
    return noise + component_moments(*q, model.grid, test_features).second;
  }
  const auto& mix = std::get<MixtureDist>(model.q);
  double mean = 0.0;
  double second = 0.0;
  for (std::size_t i = 0; i < mix.r(); ++i) {
    const auto [m, v] = component_moments(mix.components()[i], model.grid, test_features);
    const double a = mix.weights()(static_cast<Eigen::Index>(i));
    mean += a * m;
    second += a * (v + m * m);
  }
  return noise + std::max(second - mean * mean, 0.0);
}

// ---------------------------------------------------------------------------
// ElboObjective

namespace {

Eigen::VectorXd flatten(const RowMatrix& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

RowMatrix unflatten(const Eigen::VectorXd& theta, Eigen::Index offset, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const RowMatrix>(theta.data() + offset, static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
}

}  // namespace

ElboObjective::ElboObjective(GlmModel model, EntropyMode mode, std::optional<EntropyAnchor> anchor)
    : model_(std::move(model)), mode_(mode) {
  validate(model_);
  log_prior_ = prior_log_weights(model_.prior);
  const std::size_t bm = model_.grid.b() * model_.grid.mbar();
  const auto sigma = model_.noise.q_sigma_logits();
  if (mode_ == EntropyMode::exact) {
    const auto& q = mean_field_q(model_);
    initial_.resize(static_cast<Eigen::Index>(bm) + sigma.size());
    initial_ << flatten(q.logits()), sigma;
    return;
  }
  const auto* mix = std::get_if<MixtureDist>(&model_.q);
  if (mix == nullptr) throw UnsupportedError("ElboObjective: bound/surrogate modes need a mixture q");
  r_ = mix->r();
  std::vector<double> flat(mix->mixture_logits().data(), mix->mixture_logits().data() + r_);
  for (const auto& c : mix->components()) flat.insert(flat.end(), c.logits().data(), c.logits().data() + bm);
  if (mode_ == EntropyMode::bound) {
    if (!anchor) throw InvalidInput("ElboObjective: bound mode needs an entropy anchor");
    if (anchor->dist.b() != model_.grid.b() || anchor->dist.mbar() != model_.grid.mbar()) {
      throw InvalidInput("ElboObjective: anchor shape mismatch");
    }
    flat.insert(flat.end(), anchor->dist.logits().data(), anchor->dist.logits().data() + bm);
  }
  flat.insert(flat.end(), sigma.data(), sigma.data() + sigma.size());
  initial_ = Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

std::size_t ElboObjective::dimension() const { return static_cast<std::size_t>(initial_.size()); }

GlmModel ElboObjective::model_at(const Eigen::VectorXd& theta) const {
  if (theta.size() != initial_.size()) throw InvalidInput("ElboObjective: parameter length mismatch");
  const std::size_t b = model_.grid.b();
  const std::size_t mbar = model_.grid.mbar();
  const auto bm = static_cast<Eigen::Index>(b * mbar);
  GlmModel m = model_;
  const auto ns = static_cast<Eigen::Index>(model_.noise.size());
  m.noise = model_.noise.with_logits(theta.tail(ns));
  if (mode_ == EntropyMode::exact) {
    m.q = MeanFieldDist(unflatten(theta, 0, b, mbar));
    return m;
  }
  const auto r = static_cast<Eigen::Index>(r_);
  std::vector<MeanFieldDist> comps;
  comps.reserve(r_);
  for (Eigen::Index i = 0; i < r; ++i) comps.emplace_back(unflatten(theta, r + i * bm, b, mbar));
  m.q = MixtureDist(theta.head(r), std::move(comps));
  return m;
}

std::optional<EntropyAnchor> ElboObjective::anchor_at(const Eigen::VectorXd& theta) const {
  if (mode_ != EntropyMode::bound) return std::nullopt;
  const auto bm = static_cast<Eigen::Index>(model_.grid.b() * model_.grid.mbar());
  const auto r = static_cast<Eigen::Index>(r_);
  return EntropyAnchor{MeanFieldDist(unflatten(theta, r + r * bm, model_.grid.b(), model_.grid.mbar()))};
}

namespace {

// Likelihood and prior terms of a mixture q, written into a flat gradient
// [alpha, components..., (anchor), sigma].
double mixture_common_terms(const GlmModel& m, const MixtureDist& q, const RowMatrix& log_prior,
                            Eigen::VectorXd& grad) {
  const auto r = static_cast<Eigen::Index>(q.r());
  const auto bm = static_cast<Eigen::Index>(m.grid.b() * m.grid.mbar());
  const auto ns = static_cast<Eigen::Index>(m.noise.size());
  Eigen::VectorXd g_alpha(r);
  Eigen::VectorXd d_sigma = Eigen::VectorXd::Zero(ns);
  double value = m.noise.prior_minus_entropy_term();
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& c = q.components()[static_cast<std::size_t>(i)];
    const double a = q.weights()(i);
    const auto lik = expected_log_likelihood(m.stats, m.grid, c, m.noise);
    const double term = lik.value + (c.probs().array() * log_prior.array()).sum();
    value += a * term;
    g_alpha(i) = term;
    d_sigma += a * lik.d_sigma_probs;
    const RowMatrix gc = softmax_rows_backward(c.probs(), a * (lik.d_probs + log_prior));
    grad.segment(r + i * bm, bm) += Eigen::Map<const Eigen::VectorXd>(gc.data(), bm);
  }
  grad.head(r) += softmax_backward(q.weights(), g_alpha);
  grad.tail(ns) += sigma_logit_grad(m.noise, d_sigma);
  return value;
}

}  // namespace

Evaluation ElboObjective::evaluate(const Eigen::VectorXd& theta) const {
  const GlmModel m = model_at(theta);
  Evaluation out;
  if (mode_ == EntropyMode::exact) {
    const ElboGrad g = elbo_grad(m);
    out.value = g.value;
    out.grad.resize(theta.size());
    out.grad << flatten(g.q_logits), g.sigma_logits;
    return out;
  }
  if (mode_ != EntropyMode::bound) throw UnsupportedError("ElboObjective::evaluate: surrogate mode is stochastic");
  const auto& q = std::get<MixtureDist>(m.q);
  out.grad = Eigen::VectorXd::Zero(theta.size());
  out.value = mixture_common_terms(m, q, log_prior_, out.grad);
  const auto anchor = anchor_at(theta);
  const auto eg = mixture_entropy_lower_bound_grad(q, *anchor);
  out.value += eg.value;
  const auto r = static_cast<Eigen::Index>(r_);
  const auto bm = static_cast<Eigen::Index>(model_.grid.b() * model_.grid.mbar());
  out.grad.head(r) += eg.mixture_logits;
  for (Eigen::Index i = 0; i < r; ++i) {
    out.grad.segment(r + i * bm, bm) +=
        Eigen::Map<const Eigen::VectorXd>(eg.component_logits[static_cast<std::size_t>(i)].data(), bm);
  }
  out.grad.segment(r + r * bm, bm) += Eigen::Map<const Eigen::VectorXd>(eg.anchor_logits.data(), bm);
  return out;
}

Evaluation ElboObjective::sample(const Eigen::VectorXd& theta, std::size_t t, Rng& rng) const {
  if (mode_ != EntropyMode::surrogate) return evaluate(theta);
  const GlmModel m = model_at(theta);
  const auto& q = std::get<MixtureDist>(m.q);
  Evaluation out;
  out.grad = Eigen::VectorXd::Zero(theta.size());
  out.value = mixture_common_terms(m, q, log_prior_, out.grad);
  const auto sur = entropy_surrogate_loss(q, t, rng);
  out.value += sur.entropy_estimate;
  const auto r = static_cast<Eigen::Index>(r_);
  const auto bm = static_cast<Eigen::Index>(model_.grid.b() * model_.grid.mbar());
  // The ELBO contains -q^T log q, whose gradient the surrogate estimates with the opposite sign.
  out.grad.head(r) -= sur.grad.mixture_logits;
  for (Eigen::Index i = 0; i < r; ++i) {
    out.grad.segment(r + i * bm, bm) -=
        Eigen::Map<const Eigen::VectorXd>(sur.grad.component_logits[static_cast<std::size_t>(i)].data(), bm);
  }
  return out;
}

}  // namespace direct::glm
