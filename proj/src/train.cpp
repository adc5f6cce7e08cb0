#include "direct/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <random>

#include "direct/features.hpp"

namespace direct::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool finite(const Evaluation& e) { return std::isfinite(e.value) && e.grad.allFinite(); }

double inf_norm(const Eigen::VectorXd& g) { return g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff(); }

class TraceWriter {
 public:
  TraceWriter(Trace& trace, std::size_t stride) : trace_(trace), stride_(std::max<std::size_t>(stride, 1)) {}

  void record(const TraceRecord& r, bool force = false) {
    if (force || r.iteration % stride_ == 0) {
      if (trace_.empty() || trace_.back().iteration != r.iteration) trace_.push_back(r);
    }
  }

 private:
  Trace& trace_;
  std::size_t stride_;
};

// One point on the search line. phi is the value being minimized (the negated objective).
struct LinePoint {
  double step = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
  Eigen::VectorXd x;
  Evaluation eval;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& dir, double c1, double c2)
      : f_(f), x0_(x0), dir_(dir), c1_(c1), c2_(c2) {}

  LinePoint at(double step) const {
    LinePoint p;
    p.step = step;
    p.x = x0_ + step * dir_;
    p.eval = f_(p.x);
    if (finite(p.eval)) {
      p.phi = -p.eval.value;
      p.dphi = -p.eval.grad.dot(dir_);
    } else {
      p.phi = std::numeric_limits<double>::infinity();
      p.dphi = std::numeric_limits<double>::quiet_NaN();
    }
    return p;
  }

  // Strong Wolfe search. Returns false if no acceptable step was found; `out` then holds the best
  // point with sufficient decrease, if any.
  bool run(const LinePoint& start, double step, LinePoint& out, bool& improved) const {
    constexpr int kMaxExpand = 40;
    LinePoint prev = start;
    improved = false;
    for (int i = 0; i < kMaxExpand; ++i) {
      LinePoint cur = at(step);
      if (!armijo(start, cur) || (i > 0 && cur.phi >= prev.phi)) return zoom(start, prev, cur, out, improved);
      if (std::abs(cur.dphi) <= -c2_ * start.dphi) {
        out = std::move(cur);
        improved = true;
        return true;
      }
      if (cur.dphi >= 0.0) return zoom(start, cur, prev, out, improved);
      prev = std::move(cur);
      step *= 2.0;
    }
    out = std::move(prev);
    improved = out.step > 0.0;
    return false;
  }

 private:
  bool armijo(const LinePoint& start, const LinePoint& p) const {
    return std::isfinite(p.phi) && p.phi <= start.phi + c1_ * p.step * start.dphi;
  }

  static double interpolate(const LinePoint& lo, const LinePoint& hi) {
    const double a = lo.step;
    const double b = hi.step;
    const double width = b - a;
    double t = 0.5 * (a + b);
    if (std::isfinite(hi.phi) && std::isfinite(hi.dphi)) {
      const double d1 = lo.dphi + hi.dphi - 3.0 * (lo.phi - hi.phi) / (a - b);
      const double disc = d1 * d1 - lo.dphi * hi.dphi;
      if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double cubic = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
        if (std::isfinite(cubic)) t = cubic;
      }
    }
    const double lo_edge = std::min(a, b) + 0.1 * std::abs(width);
    const double hi_edge = std::max(a, b) - 0.1 * std::abs(width);
    if (!(t >= lo_edge && t <= hi_edge)) t = 0.5 * (a + b);
    return t;
  }

  bool zoom(const LinePoint& start, LinePoint lo, LinePoint hi, LinePoint& out, bool& improved) const {
    constexpr int kMaxZoom = 40;
    for (int i = 0; i < kMaxZoom; ++i) {
      if (std::abs(hi.step - lo.step) <= 1e-16 * std::max(1.0, std::abs(lo.step))) break;
      LinePoint mid = at(interpolate(lo, hi));
      if (!armijo(start, mid) || mid.phi >= lo.phi) {
        hi = std::move(mid);
        continue;
      }
      if (std::abs(mid.dphi) <= -c2_ * start.dphi) {
        out = std::move(mid);
        improved = true;
        return true;
      }
      if (mid.dphi * (hi.step - lo.step) >= 0.0) hi = lo;
      lo = std::move(mid);
    }
    improved = lo.step > 0.0;
    out = std::move(lo);
    return false;
  }

  const Objective& f_;
  const Eigen::VectorXd& x0_;
  const Eigen::VectorXd& dir_;
  double c1_;
  double c2_;
};

// Two-loop recursion: approximate inverse Hessian of -f applied to the ascent gradient.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& grad, const std::deque<Eigen::VectorXd>& s,
                                const std::deque<Eigen::VectorXd>& y) {
  Eigen::VectorXd q = grad;
  const std::size_t m = s.size();
  std::vector<double> alpha(m);
  std::vector<double> rho(m);
  for (std::size_t i = m; i-- > 0;) {
    rho[i] = 1.0 / y[i].dot(s[i]);
    alpha[i] = rho[i] * s[i].dot(q);
    q -= alpha[i] * y[i];
  }
  if (m > 0) q *= s.back().dot(y.back()) / y.back().squaredNorm();
  for (std::size_t i = 0; i < m; ++i) {
    const double beta = rho[i] * y[i].dot(q);
    q += (alpha[i] - beta) * s[i];
  }
  return q;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.max_iterations == 0) throw ConfigError("optimizer.max_iterations must be positive");
  if (!(c.grad_tol > 0.0)) throw ConfigError("optimizer.grad_tol must be positive");
  if (c.memory == 0) throw ConfigError("optimizer.memory must be positive");
  if (!(c.wolfe_c1 > 0.0 && c.wolfe_c1 < c.wolfe_c2 && c.wolfe_c2 < 1.0)) {
    throw ConfigError("optimizer Wolfe constants need 0 < c1 < c2 < 1");
  }
  if (!(c.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  if (!(c.lr_decay >= 0.0)) throw ConfigError("optimizer.lr_decay must be non-negative");
  if (c.batch_size == 0) throw ConfigError("optimizer.batch_size must be positive");
  if (c.mc_samples < 2) throw ConfigError("optimizer.mc_samples must be at least 2");
  if (!(c.time_budget >= 0.0)) throw ConfigError("optimizer.time_budget must be non-negative");
}

void write_trace_csv(const std::string& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace '" + path + "'");
  out.precision(17);
  out << "iteration,seconds,objective,grad_norm\n";
  for (const auto& r : trace) out << r.iteration << ',' << r.seconds << ',' << r.objective << ',' << r.grad_norm << '\n';
}

FitResult fit_deterministic(const Objective& objective, Eigen::VectorXd theta0, const TrainConfig& config) {
  validate(config);
  const auto start = Clock::now();
  FitResult result;
  TraceWriter writer(result.trace, config.trace_stride);

  LinePoint cur;
  cur.x = std::move(theta0);
  cur.eval = objective(cur.x);
  if (!finite(cur.eval)) {
    throw OptimizationError("fit_deterministic: non-finite objective or gradient at the initial point",
                            result.trace);
  }
  auto record = [&](std::size_t k, bool force) {
    writer.record(TraceRecord{k, seconds_since(start), cur.eval.value, inf_norm(cur.eval.grad)}, force);
  };
  record(0, true);

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::size_t k = 0;
  result.reason = StopReason::max_iterations;
  while (true) {
    if (inf_norm(cur.eval.grad) < config.grad_tol) {
      result.reason = StopReason::converged;
      break;
    }
    if (k >= config.max_iterations) break;
    if (config.time_budget > 0.0 && seconds_since(start) >= config.time_budget) {
      result.reason = StopReason::time_budget;
      break;
    }

    Eigen::VectorXd dir = lbfgs_direction(cur.eval.grad, s_hist, y_hist);
    if (!(dir.dot(cur.eval.grad) > 0.0) || !dir.allFinite()) {
      s_hist.clear();
      y_hist.clear();
      dir = cur.eval.grad;
    }
    const double step0 = s_hist.empty() ? std::min(1.0, 1.0 / cur.eval.grad.norm()) : 1.0;

    LinePoint start_pt;
    start_pt.phi = -cur.eval.value;
    start_pt.dphi = -cur.eval.grad.dot(dir);
    LineSearch search(objective, cur.x, dir, config.wolfe_c1, config.wolfe_c2);
    LinePoint next;
    bool improved = false;
    const bool wolfe = search.run(start_pt, step0, next, improved);
    if (!improved) {
      if (!s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        continue;
      }
      result.reason = StopReason::line_search;
      break;
    }

    ++k;
    Eigen::VectorXd s = next.x - cur.x;
    Eigen::VectorXd y = cur.eval.grad - next.eval.grad;  // gradient change of -f
    cur = std::move(next);
    if (wolfe && s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (s_hist.size() > config.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    record(k, false);
  }
  record(k, true);
  result.iterations = k;
  result.value = cur.eval.value;
  result.theta = std::move(cur.x);
  return result;
}

FitResult fit_stochastic(const Sampler& sampler, Eigen::VectorXd theta0, const TrainConfig& config,
                         const Monitor& monitor) {
  validate(config);
  Rng rng(config.seed);
  FitResult result;
  result.theta = std::move(theta0);
  TraceWriter writer(result.trace, config.trace_stride);
  double paused = 0.0;
  const auto start = Clock::now();
  auto elapsed = [&] { return seconds_since(start) - paused; };
  auto score = [&](const Eigen::VectorXd& theta, double fallback) {
    if (!monitor) return fallback;
    const auto t0 = Clock::now();
    const double v = monitor(theta);
    paused += seconds_since(t0);
    return v;
  };

  result.reason = StopReason::max_iterations;
  Evaluation ev;
  std::size_t k = 0;
  for (; k < config.max_iterations; ++k) {
    if (config.time_budget > 0.0 && elapsed() >= config.time_budget) {
      result.reason = StopReason::time_budget;
      break;
    }
    ev = sampler(result.theta, rng);
    if (!finite(ev)) {
      throw OptimizationError("fit_stochastic: non-finite estimate at iteration " + std::to_string(k), result.trace);
    }
    if (k % std::max<std::size_t>(config.trace_stride, 1) == 0) {
      const double t = elapsed();
      writer.record(TraceRecord{k, t, score(result.theta, ev.value), inf_norm(ev.grad)}, true);
    }
    const double lr = config.learning_rate / (1.0 + config.lr_decay * static_cast<double>(k));
    result.theta += lr * ev.grad;
  }
  const double t = elapsed();
  const double final_value = score(result.theta, ev.value);
  writer.record(TraceRecord{k, t, final_value, inf_norm(ev.grad)}, true);
  result.iterations = k;
  result.value = final_value;
  return result;
}

Eigen::VectorXd flatten_mean_field(const glm::GlmModel& model) {
  const auto* q = std::get_if<MeanFieldDist>(&model.q);
  if (q == nullptr) throw UnsupportedError("flatten_mean_field: q is a mixture");
  const auto& sig = model.noise.q_sigma_logits();
  Eigen::VectorXd theta(q->logits().size() + sig.size());
  theta << Eigen::Map<const Eigen::VectorXd>(q->logits().data(), q->logits().size()), sig;
  return theta;
}

glm::GlmModel with_mean_field(const glm::GlmModel& model, const Eigen::VectorXd& theta) {
  const auto b = static_cast<Eigen::Index>(model.grid.b());
  const auto mbar = static_cast<Eigen::Index>(model.grid.mbar());
  const auto ns = static_cast<Eigen::Index>(model.noise.size());
  if (theta.size() != b * mbar + ns) throw InvalidInput("with_mean_field: parameter length mismatch");
  glm::GlmModel m = model;
  m.q = MeanFieldDist(Eigen::Map<const RowMatrix>(theta.data(), b, mbar));
  m.noise = model.noise.with_logits(theta.tail(ns));
  return m;
}

Evaluation reinforce_elbo_grad(const glm::GlmModel& model, std::size_t t, Rng& rng, ReinforceBaseline& baseline) {
  if (t < 2) throw InvalidInput("reinforce_elbo_grad: need at least two samples");
  glm::validate(model);
  const auto* q = std::get_if<MeanFieldDist>(&model.q);
  if (q == nullptr) throw UnsupportedError("reinforce_elbo_grad: mean-field q only");
  const std::size_t b = model.grid.b();
  const auto mbar = static_cast<Eigen::Index>(model.grid.mbar());
  const auto& noise = model.noise;
  const auto& stats = model.stats;
  const double n = static_cast<double>(stats.n);

  const auto* mf_prior = std::get_if<MeanFieldDist>(&model.prior);
  const auto* mix_prior = std::get_if<MixtureDist>(&model.prior);

  const double b_used = baseline.enabled && baseline.initialized ? baseline.value : 0.0;
  RowMatrix weighted = RowMatrix::Zero(static_cast<Eigen::Index>(b), mbar);
  Eigen::VectorXd weighted_sigma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(noise.size()));
  double coeff_sum = 0.0;
  double reward_sum = 0.0;

  QuantizedSample s;
  s.indices.resize(b);
  s.mbar = static_cast<std::uint16_t>(mbar);
  Eigen::VectorXd w(static_cast<Eigen::Index>(b));
  const auto& probs = q->probs();
  for (std::size_t i = 0; i < t; ++i) {
    double log_q = 0.0;
    double log_p = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      const auto row = probs.row(static_cast<Eigen::Index>(j));
      const std::size_t k = sample_categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), rng);
      s.indices[j] = static_cast<std::uint16_t>(k);
      w(static_cast<Eigen::Index>(j)) = model.grid.value(j, k);
      log_q += q->log_probs()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
      if (mf_prior != nullptr) log_p += mf_prior->log_probs()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    }
    if (mix_prior != nullptr) log_p = log_pmf(*mix_prior, s);
    const auto& qs = noise.q_sigma();
    const auto ks = static_cast<Eigen::Index>(
        sample_categorical(std::span<const double>(qs.data(), static_cast<std::size_t>(qs.size())), rng));
    log_q += noise.log_q_sigma()(ks);
    log_p += noise.log_p_sigma()(ks);
    const double rss = stats.yty - 2.0 * w.dot(stats.phity) + w.dot(stats.phitphi * w);
    const double log_lik = -0.5 * n * noise.log_sigma2()(ks) - 0.5 * noise.inv_sigma2()(ks) * rss;
    const double reward = log_lik + log_p - log_q;
    reward_sum += reward;
    const double c = reward - b_used;
    coeff_sum += c;
    for (std::size_t j = 0; j < b; ++j) weighted(static_cast<Eigen::Index>(j), s.indices[j]) += c;
    weighted_sigma(ks) += c;
  }
  const double inv_t = 1.0 / static_cast<double>(t);
  RowMatrix g_q = (weighted - coeff_sum * probs) * inv_t;
  Eigen::VectorXd g_sigma = (weighted_sigma - coeff_sum * noise.q_sigma()) * inv_t;

  Evaluation out;
  out.value = reward_sum * inv_t;
  out.grad.resize(g_q.size() + g_sigma.size());
  out.grad << Eigen::Map<const Eigen::VectorXd>(g_q.data(), g_q.size()), g_sigma;

  if (baseline.enabled) {
    if (!baseline.initialized) {
      baseline.value = out.value;
      baseline.initialized = true;
    } else {
      baseline.value = baseline.decay * baseline.value + (1.0 - baseline.decay) * out.value;
    }
  }
  return out;
}

SyntheticProblem make_synthetic(const SyntheticSpec& spec) {
  if (spec.b == 0 || spec.b % 2 != 0) throw ConfigError("synthetic: b must be even and positive");
  if (spec.mbar < 2) throw ConfigError("synthetic: mbar must be at least 2");
  if (spec.mbar_sigma < 1) throw ConfigError("synthetic: mbar_sigma must be positive");
  if (spec.n < 2) throw ConfigError("synthetic: n must be at least 2");
  if (spec.input_dim == 0) throw ConfigError("synthetic: input_dim must be positive");
  Rng rng(spec.seed);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  std::normal_distribution<double> normal;

  SyntheticProblem p;
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto d = static_cast<Eigen::Index>(spec.input_dim);
  p.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) p.x(i, c) = unif(rng);
  }
  const auto map = features::make_rff(Eigen::VectorXd::Ones(d), 1.0, spec.b, rng());
  p.phi = features::rff_features(map, p.x);
  const SupportGrid grid = features::make_support(1.0, spec.mbar, spec.b);
  p.true_weights.resize(static_cast<Eigen::Index>(spec.b));
  for (std::size_t j = 0; j < spec.b; ++j) {
    p.true_weights(static_cast<Eigen::Index>(j)) = grid.value(j, uniform_index(rng, spec.mbar));
  }
  p.y = p.phi * p.true_weights;
  for (Eigen::Index i = 0; i < n; ++i) p.y(i) += spec.noise_sd * normal(rng);

  const double var_y = (p.y.array() - p.y.mean()).square().mean();
  p.model.grid = grid;
  p.model.q = MeanFieldDist::uniform(spec.b, spec.mbar);
  p.model.prior = MeanFieldDist::uniform(spec.b, spec.mbar);
  p.model.noise = NoiseModel::log_uniform(0.1 * var_y, spec.mbar_sigma);
  p.model.stats = glm::precompute(p.phi, p.y, grid);
  return p;
}

const MethodRun& BenchmarkReport::best_reinforce() const {
  if (reinforce.empty()) throw InvalidInput("benchmark: no REINFORCE runs");
  return *std::max_element(reinforce.begin(), reinforce.end(),
                           [](const MethodRun& a, const MethodRun& b) { return a.final_elbo < b.final_elbo; });
}

BenchmarkReport benchmark_direct_vs_reinforce(const SyntheticSpec& spec, const BenchmarkOptions& options) {
  if (options.learning_rates.empty()) throw ConfigError("benchmark: at least one learning rate is required");
  const SyntheticProblem problem = make_synthetic(spec);
  const glm::GlmModel& model = problem.model;
  const Eigen::VectorXd theta0 = flatten_mean_field(model);
  auto exact = [&](const Eigen::VectorXd& theta) { return glm::elbo(with_mean_field(model, theta)); };

  BenchmarkReport report;
  report.seed = spec.seed;
  report.initial_elbo = glm::elbo(model);

  {
    const glm::ElboObjective objective(model, glm::EntropyMode::exact);
    TrainConfig cfg;
    cfg.time_budget = options.time_budget;
    cfg.seed = spec.seed;
    const auto start = Clock::now();
    auto fit = fit_deterministic([&](const Eigen::VectorXd& th) { return objective.evaluate(th); }, theta0, cfg);
    report.direct.method = "direct";
    report.direct.seconds = seconds_since(start);
    report.direct.iterations = fit.iterations;
    report.direct.final_elbo = exact(fit.theta);
    report.direct.trace = std::move(fit.trace);
  }

  for (double lr : options.learning_rates) {
    TrainConfig cfg;
    cfg.optimizer = OptimizerKind::sgd;
    cfg.learning_rate = lr;
    cfg.mc_samples = options.reinforce_samples;
    cfg.max_iterations = std::numeric_limits<std::size_t>::max();
    cfg.time_budget = options.time_budget;
    cfg.seed = spec.seed;
    cfg.trace_stride = options.trace_stride;
    ReinforceBaseline baseline;
    baseline.enabled = options.baseline;
    auto sampler = [&](const Eigen::VectorXd& theta, Rng& rng) {
      return reinforce_elbo_grad(with_mean_field(model, theta), options.reinforce_samples, rng, baseline);
    };
    MethodRun run;
    run.method = "reinforce";
    run.learning_rate = lr;
    try {
      auto fit = fit_stochastic(sampler, theta0, cfg, exact);
      run.iterations = fit.iterations;
      run.final_elbo = fit.value;
      run.seconds = fit.trace.empty() ? 0.0 : fit.trace.back().seconds;
      run.trace = std::move(fit.trace);
    } catch (const OptimizationError& e) {
      // A diverged run scores -inf.
      run.trace = e.trace();
      run.final_elbo = -std::numeric_limits<double>::infinity();
      run.iterations = run.trace.empty() ? 0 : run.trace.back().iteration;
      run.seconds = run.trace.empty() ? 0.0 : run.trace.back().seconds;
    }
    report.reinforce.push_back(std::move(run));
  }
  return report;
}

}  // namespace direct::train
