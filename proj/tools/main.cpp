// direct: train, predict, benchmark and cross-validate discretely relaxed Bayesian models.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "direct/config.hpp"
#include "direct/errors.hpp"
#include "direct/features.hpp"
#include "direct/model.hpp"
#include "direct/pipeline.hpp"
#include "direct/train.hpp"

namespace {

using namespace direct;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

// stdout unless a path is given
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw DataError("cannot write '" + path + "'");
    }
    stream().precision(17);
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

int cmd_train(const std::string& config_path, const std::string& artifact, const std::string& trace) {
  auto cfg = config::load(config_path, config::direct_environment());
  if (!artifact.empty()) cfg.paths.artifact = artifact;
  if (!trace.empty()) cfg.paths.trace = trace;
  config::validate(cfg);
  const auto data = features::load_csv(cfg.paths.train, cfg.paths.target);
  const auto out = pipeline::fit(cfg, data);
  model::save(cfg.paths.artifact, out.artifact);
  train::write_trace_csv(cfg.paths.trace, out.trace);
  std::cerr << "trained " << config::to_string(cfg.model) << " on " << data.n() << " rows: objective "
            << std::setprecision(10) << out.artifact.objective << " after " << out.artifact.iterations
            << " iterations (" << std::setprecision(3) << out.seconds << " s)\n"
            << "artifact: " << cfg.paths.artifact << "\ntrace: " << cfg.paths.trace << '\n';
  return kOk;
}

Eigen::MatrixXd input_columns(const model::ModelArtifact& a, const features::Table& t) {
  const std::size_t d = a.input_dim();
  bool named = !a.feature_names.empty();
  std::vector<Eigen::Index> cols;
  for (const auto& name : a.feature_names) {
    const auto it = std::find(t.names.begin(), t.names.end(), name);
    if (it == t.names.end()) {
      named = false;
      break;
    }
    cols.push_back(static_cast<Eigen::Index>(it - t.names.begin()));
  }
  if (named && cols.size() == d) {
    Eigen::MatrixXd x(t.values.rows(), static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < d; ++c) x.col(static_cast<Eigen::Index>(c)) = t.values.col(cols[c]);
    return x;
  }
  if (static_cast<std::size_t>(t.values.cols()) != d) {
    throw DataError("test data has " + std::to_string(t.values.cols()) + " columns, model expects " +
                    std::to_string(d) + " features");
  }
  return t.values;
}

int cmd_predict(const std::string& artifact, const std::string& csv, std::optional<std::size_t> samples,
                std::uint64_t seed, const std::string& out_path) {
  const auto a = model::load(artifact);
  const auto table = features::load_table(csv);
  const Eigen::MatrixXd x = input_columns(a, table);
  Output out(out_path);
  auto& os = out.stream();
  if (samples) {
    const Eigen::MatrixXd draws = pipeline::predict_samples(a, x, *samples, seed);
    for (Eigen::Index k = 0; k < draws.cols(); ++k) os << (k ? "," : "") << "sample_" << k;
    os << '\n';
    for (Eigen::Index i = 0; i < draws.rows(); ++i) {
      for (Eigen::Index k = 0; k < draws.cols(); ++k) os << (k ? "," : "") << draws(i, k);
      os << '\n';
    }
    return kOk;
  }
  const auto m = pipeline::predict_moments(a, x, seed);
  if (m.variance.empty()) {
    os << "p_class0\n";
    for (double v : m.mean) os << v << '\n';
  } else {
    os << "mean,variance\n";
    for (std::size_t i = 0; i < m.mean.size(); ++i) os << m.mean[i] << ',' << m.variance[i] << '\n';
  }
  return kOk;
}

int cmd_benchmark(train::SyntheticSpec spec, std::size_t seeds, const train::BenchmarkOptions& opts,
                  const std::string& out_path) {
  Output out(out_path);
  auto& os = out.stream();
  os << "seed,method,learning_rate,iteration,seconds,objective,grad_norm\n";
  std::ostringstream summary;
  summary << std::left << std::setw(6) << "seed" << std::setw(11) << "method" << std::setw(8) << "lr" << std::setw(16)
          << "final_elbo" << std::setw(12) << "iterations" << "seconds\n";
  std::size_t wins = 0;
  const std::uint64_t first = spec.seed;
  for (std::size_t s = 0; s < seeds; ++s) {
    spec.seed = first + s;
    const auto report = train::benchmark_direct_vs_reinforce(spec, opts);
    auto emit = [&](const train::MethodRun& run) {
      for (const auto& r : run.trace) {
        os << spec.seed << ',' << run.method << ',' << run.learning_rate << ',' << r.iteration << ',' << r.seconds
           << ',' << r.objective << ',' << r.grad_norm << '\n';
      }
      summary << std::setw(6) << spec.seed << std::setw(11) << run.method << std::setw(8) << run.learning_rate
              << std::setw(16) << std::setprecision(8) << run.final_elbo << std::setw(12) << run.iterations
              << std::setprecision(3) << run.seconds << '\n';
    };
    emit(report.direct);
    for (const auto& run : report.reinforce) emit(run);
    if (report.direct.final_elbo > report.best_reinforce().final_elbo) ++wins;
  }
  std::cerr << summary.str() << "direct ahead of best reinforce on " << wins << "/" << seeds << " seeds\n";
  return kOk;
}

int cmd_crossval(const std::string& config_path, std::size_t k, const std::string& out_path) {
  auto cfg = config::load(config_path, config::direct_environment());
  config::validate(cfg);
  const auto data = features::load_csv(cfg.paths.train, cfg.paths.target);
  const auto report = pipeline::crossval(cfg, data, k);
  Output out(out_path);
  auto& os = out.stream();
  os << "fold,rmse,seconds,sparsity\n";
  for (const auto& f : report.folds) os << f.fold << ',' << f.rmse << ',' << f.seconds << ',' << f.sparsity << '\n';
  std::cerr << std::setprecision(4) << "RMSE " << report.rmse_mean << " +/- " << report.rmse_std << ", train "
            << report.seconds_mean << " s/fold, expected sparsity " << 100.0 * report.sparsity_mean << "%\n";
  return kOk;
}

int cmd_config_dump(const std::string& config_path) {
  const auto cfg = config::load(config_path, config::direct_environment());
  std::cout << config::to_json(cfg).dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discretely relaxed Bayesian regression and classification with exact ELBO evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string artifact_out;
  std::string trace_out;
  auto* train_cmd = app.add_subcommand("train", "Fit a model described by a run config");
  train_cmd->add_option("-c,--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--artifact", artifact_out, "Override paths.artifact");
  train_cmd->add_option("--trace", trace_out, "Override paths.trace");

  std::string model_path;
  std::string data_path;
  std::string out_path;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  auto* predict_cmd = app.add_subcommand("predict", "Predict from a trained model artifact");
  predict_cmd->add_option("-m,--model", model_path, "Model artifact")->required();
  predict_cmd->add_option("-d,--data", data_path, "CSV of input rows (extra columns are ignored when named)")
      ->required();
  auto* moments_flag = predict_cmd->add_flag("--moments", "Exact predictive mean and variance (default)");
  auto* samples_opt =
      predict_cmd->add_option("--samples", samples, "Posterior predictive draws per row")->check(CLI::PositiveNumber);
  moments_flag->excludes(samples_opt);
  predict_cmd->add_option("--seed", seed, "Seed for sampling");
  predict_cmd->add_option("-o,--output", out_path, "Write predictions here instead of stdout");

  train::SyntheticSpec spec;
  train::BenchmarkOptions bench;
  std::size_t seeds = 5;
  bool no_baseline = false;
  std::string bench_out;
  auto* bench_cmd = app.add_subcommand("benchmark", "DIRECT vs REINFORCE on a synthetic random-feature GLM");
  bench_cmd->add_option("--b", spec.b, "Number of random features (even)")->capture_default_str();
  bench_cmd->add_option("--mbar", spec.mbar, "Support points per weight")->capture_default_str();
  bench_cmd->add_option("--mbar-sigma", spec.mbar_sigma, "Support points for the noise variance")
      ->capture_default_str();
  bench_cmd->add_option("--n", spec.n, "Training rows")->capture_default_str();
  bench_cmd->add_option("--noise", spec.noise_sd, "Noise standard deviation")->capture_default_str();
  bench_cmd->add_option("--seeds", seeds, "Number of seeds, starting at --first-seed")->capture_default_str();
  bench_cmd->add_option("--first-seed", spec.seed, "First seed")->capture_default_str();
  bench_cmd->add_option("--budget", bench.time_budget, "Wall-time budget per run (s)")->capture_default_str();
  bench_cmd->add_option("--lr", bench.learning_rates, "REINFORCE learning rates")->capture_default_str();
  bench_cmd->add_option("--samples", bench.reinforce_samples, "REINFORCE Monte Carlo samples per step")
      ->capture_default_str();
  bench_cmd->add_option("--stride", bench.trace_stride, "Record every k-th REINFORCE iteration")
      ->capture_default_str();
  bench_cmd->add_flag("--no-baseline", no_baseline, "Disable the REINFORCE running-mean baseline");
  bench_cmd->add_option("-o,--output", bench_out, "Trace report CSV (default stdout)");

  std::string cv_config;
  std::size_t k = 10;
  std::string cv_out;
  auto* cv_cmd = app.add_subcommand("crossval", "k-fold cross validation: RMSE, train time, sparsity");
  cv_cmd->add_option("-c,--config", cv_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  cv_cmd->add_option("-k,--folds", k, "Number of folds")->capture_default_str();
  cv_cmd->add_option("-o,--output", cv_out, "Per-fold CSV (default stdout)");

  std::string dump_config;
  auto* config_cmd = app.add_subcommand("config", "Configuration utilities");
  config_cmd->require_subcommand(1);
  auto* dump_cmd = config_cmd->add_subcommand("dump", "Print the effective config (defaults, file, DIRECT_ env)");
  dump_cmd->add_option("-c,--config", dump_config, "Run config (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, artifact_out, trace_out);
    if (*predict_cmd) {
      return cmd_predict(model_path, data_path, samples_opt->count() ? std::optional<std::size_t>(samples) : std::nullopt,
                         seed, out_path);
    }
    if (*bench_cmd) {
      bench.baseline = !no_baseline;
      return cmd_benchmark(spec, seeds, bench, bench_out);
    }
    if (*cv_cmd) return cmd_crossval(cv_config, k, cv_out);
    if (*dump_cmd) return cmd_config_dump(dump_config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
