#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "direct/errors.hpp"
#include "direct/glm.hpp"
#include "direct/random.hpp"

namespace direct::train {

using glm::Evaluation;

enum class OptimizerKind { quasi_newton, sgd };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::quasi_newton;
  std::size_t max_iterations = 1000;
  double grad_tol = 1e-7;
  std::size_t memory = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double learning_rate = 1e-2;
  /// lr_k = learning_rate / (1 + lr_decay * k)
  double lr_decay = 0.0;
  std::size_t batch_size = 256;
  /// Monte Carlo draws per stochastic step.
  std::size_t mc_samples = 3000;
  std::uint64_t seed = 0;
  /// Stop once this many seconds have elapsed; 0 disables the limit.
  double time_budget = 0.0;
  /// Record every k-th iteration (the first and last are always kept).
  std::size_t trace_stride = 1;
};

/// Throws ConfigError naming the offending field.
void validate(const TrainConfig& config);

struct TraceRecord {
  std::size_t iteration = 0;
  double seconds = 0.0;
  double objective = 0.0;
  double grad_norm = 0.0;
};
using Trace = std::vector<TraceRecord>;

/// Columns iteration,seconds,objective,grad_norm.
void write_trace_csv(const std::string& path, const Trace& trace);

enum class StopReason { converged, max_iterations, time_budget, line_search };

struct FitResult {
  Eigen::VectorXd theta;
  Trace trace;
  StopReason reason = StopReason::max_iterations;
  std::size_t iterations = 0;
  double value = 0.0;
};

/// Raised on a non-finite objective or gradient; carries the trace so far.
class OptimizationError : public NumericError {
 public:
  OptimizationError(const std::string& what, Trace trace) : NumericError(what), trace_(std::move(trace)) {}
  [[nodiscard]] const Trace& trace() const { return trace_; }

 private:
  Trace trace_;
};

using Objective = std::function<Evaluation(const Eigen::VectorXd&)>;
using Sampler = std::function<Evaluation(const Eigen::VectorXd&, Rng&)>;
/// Scores an iterate for the trace; time spent here is not counted.
using Monitor = std::function<double(const Eigen::VectorXd&)>;

/// Limited-memory BFGS ascent with a strong Wolfe line search.
FitResult fit_deterministic(const Objective& objective, Eigen::VectorXd theta0, const TrainConfig& config);

/// Stochastic gradient ascent. The trace objective is the sampler's value unless a monitor is given.
FitResult fit_stochastic(const Sampler& sampler, Eigen::VectorXd theta0, const TrainConfig& config,
                         const Monitor& monitor = {});

/// Running reward average subtracted from REINFORCE rewards.
struct ReinforceBaseline {
  bool enabled = true;
  double decay = 0.9;
  double value = 0.0;
  bool initialized = false;
};

/// Score-function estimate of the ELBO gradient for a mean-field GLM in the [q, q_sigma] logit layout:
///   (1/t) sum_i (log l(s_i) + log p(s_i) - log q(s_i) - baseline) grad log q(s_i)
/// The baseline used is the one from before this call; it is then updated with the batch mean reward.
/// The value is the batch mean reward (a Monte Carlo ELBO estimate).
Evaluation reinforce_elbo_grad(const glm::GlmModel& model, std::size_t t, Rng& rng, ReinforceBaseline& baseline);

/// Flat [q logits, q_sigma logits] for a mean-field GLM.
Eigen::VectorXd flatten_mean_field(const glm::GlmModel& model);
glm::GlmModel with_mean_field(const glm::GlmModel& model, const Eigen::VectorXd& theta);

struct SyntheticSpec {
  std::size_t b = 20;
  std::size_t mbar = 3;
  std::size_t mbar_sigma = 3;
  std::size_t n = 1000;
  std::size_t input_dim = 1;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticProblem {
  Eigen::MatrixXd x;
  Eigen::MatrixXd phi;
  Eigen::VectorXd y;
  Eigen::VectorXd true_weights;
  /// Uniform prior and q = prior.
  glm::GlmModel model;
};

/// Data from a random weighting of b random Fourier features of a unit SE kernel.
SyntheticProblem make_synthetic(const SyntheticSpec& spec);

struct BenchmarkOptions {
  double time_budget = 60.0;
  std::vector<double> learning_rates{1e-3, 1e-2, 1e-1};
  std::size_t reinforce_samples = 100;
  bool baseline = true;
  std::size_t trace_stride = 100;
};

struct MethodRun {
  std::string method;
  double learning_rate = 0.0;
  Trace trace;
  double final_elbo = 0.0;
  std::size_t iterations = 0;
  double seconds = 0.0;
};

struct BenchmarkReport {
  std::uint64_t seed = 0;
  double initial_elbo = 0.0;
  MethodRun direct;
  std::vector<MethodRun> reinforce;

  [[nodiscard]] const MethodRun& best_reinforce() const;
};

/// DIRECT (quasi-Newton on the exact ELBO) against REINFORCE SGD at each learning rate, all from
/// q = prior and with the same wall-time budget. REINFORCE traces hold the exact ELBO of each iterate.
BenchmarkReport benchmark_direct_vs_reinforce(const SyntheticSpec& spec, const BenchmarkOptions& options);

}  // namespace direct::train
