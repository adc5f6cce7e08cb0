#include "direct/bnn.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "direct/errors.hpp"

namespace direct::bnn {

std::size_t BnnArch::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : layer_widths.at(layer - 1);
}

std::size_t BnnArch::num_variables() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers(); ++l) total += layer_widths[l] * fan_in(l);
  return total;
}

std::size_t BnnArch::variable(std::size_t layer, std::size_t neuron, std::size_t input) const {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) offset += layer_widths[l] * fan_in(l);
  return offset + neuron * fan_in(layer) + input;
}

void validate(const BnnArch& arch, const SupportGrid& grid) {
  if (arch.input_dim == 0) throw ConfigError("bnn: input dimension must be positive");
  if (arch.layer_widths.empty()) throw ConfigError("bnn: at least one layer is required");
  for (auto w : arch.layer_widths) {
    if (w == 0) throw ConfigError("bnn: layer widths must be positive");
  }
  if (arch.layer_widths.back() != 1) throw ConfigError("bnn: the output layer must have width 1");
  if (arch.num_variables() != grid.b()) {
    throw AssignmentError("bnn: architecture uses " + std::to_string(arch.num_variables()) +
                          " weights but the grid has " + std::to_string(grid.b()) + " variables");
  }
}

BnnState::BnnState(std::vector<std::size_t> dims, Eigen::MatrixXd coeffs, std::vector<FactorList> terms,
                   std::vector<bool> consumed)
    : dims_(std::move(dims)), coeffs_(std::move(coeffs)), terms_(std::move(terms)), consumed_(std::move(consumed)) {
  if (static_cast<std::size_t>(coeffs_.rows()) != terms_.size()) {
    throw InvalidInput("BnnState: coefficient rows and term count differ");
  }
  if (consumed_.size() != dims_.size()) throw InvalidInput("BnnState: consumed mask has the wrong length");
}

BnnState BnnState::input(const std::vector<std::size_t>& dims, const Eigen::VectorXd& column) {
  return BnnState(dims, column.transpose(), {FactorList{}}, std::vector<bool>(dims.size(), false));
}

BnnState BnnState::zero(const std::vector<std::size_t>& dims, std::size_t n) {
  return BnnState(dims, Eigen::MatrixXd(0, static_cast<Eigen::Index>(n)), {}, std::vector<bool>(dims.size(), false));
}

KronSumVec BnnState::column(std::size_t l) const {
  KronSumVec out(dims_);
  for (std::size_t j = 0; j < terms_.size(); ++j) {
    out.add_term(KronTerm{coeffs_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)), terms_[j]});
  }
  return out;
}

BnnState mult_var(const BnnState& state, std::size_t p, const SupportGrid& grid) {
  if (p >= state.dims().size()) throw AssignmentError("mult_var: variable " + std::to_string(p) + " out of range");
  if (state.consumed()[p]) {
    throw AssignmentError("mult_var: variable " + std::to_string(p) + " already consumed on this path");
  }
  const auto row = grid.values().row(static_cast<Eigen::Index>(p));
  const std::vector<double> wbar(row.data(), row.data() + row.size());
  std::vector<FactorList> terms = state.terms();
  for (auto& list : terms) {
    auto it = std::lower_bound(list.begin(), list.end(), p, [](const Factor& f, std::size_t v) { return f.var < v; });
    if (it != list.end() && it->var == p) {
      for (std::size_t c = 0; c < wbar.size(); ++c) it->values[c] *= wbar[c];
    } else {
      list.insert(it, Factor{p, wbar});
    }
  }
  std::vector<bool> consumed = state.consumed();
  consumed[p] = true;
  return BnnState(state.dims(), state.coeffs(), std::move(terms), std::move(consumed));
}

BnnState neuron_sum(const std::vector<BnnState>& states) {
  if (states.empty()) throw InvalidInput("neuron_sum: no inputs");
  const auto& first = states.front();
  Eigen::Index rows = 0;
  for (const auto& s : states) {
    if (s.dims() != first.dims() || s.n() != first.n()) throw InvalidInput("neuron_sum: incompatible states");
    rows += static_cast<Eigen::Index>(s.h());
  }
  Eigen::MatrixXd coeffs(rows, static_cast<Eigen::Index>(first.n()));
  std::vector<FactorList> terms;
  terms.reserve(static_cast<std::size_t>(rows));
  std::vector<bool> consumed(first.dims().size(), false);
  Eigen::Index r = 0;
  for (const auto& s : states) {
    coeffs.middleRows(r, static_cast<Eigen::Index>(s.h())) = s.coeffs();
    r += static_cast<Eigen::Index>(s.h());
    terms.insert(terms.end(), s.terms().begin(), s.terms().end());
    for (std::size_t j = 0; j < consumed.size(); ++j) consumed[j] = consumed[j] || s.consumed()[j];
  }
  return compact(BnnState(first.dims(), std::move(coeffs), std::move(terms), std::move(consumed)));
}

BnnState quad_activation(const BnnState& state) {
  const std::size_t h = state.h();
  const auto& c = state.coeffs();
  const std::size_t out_h = h * (h + 1) / 2;
  Eigen::MatrixXd coeffs(static_cast<Eigen::Index>(out_h), c.cols());
  std::vector<FactorList> terms;
  terms.reserve(out_h);
  Eigen::Index r = 0;
  for (std::size_t j = 0; j < h; ++j) {
    const auto cj = c.row(static_cast<Eigen::Index>(j));
    coeffs.row(r++) = cj.array().square();
    terms.push_back(factors::hadamard(state.terms()[j], state.terms()[j]));
    for (std::size_t p = 0; p < j; ++p) {
      coeffs.row(r++) = 2.0 * cj.array() * c.row(static_cast<Eigen::Index>(p)).array();
      terms.push_back(factors::hadamard(state.terms()[j], state.terms()[p]));
    }
  }
  return BnnState(state.dims(), std::move(coeffs), std::move(terms), state.consumed());
}

namespace {

struct FactorListLess {
  bool operator()(const FactorList& a, const FactorList& b) const {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](const Factor& x, const Factor& y) {
      if (x.var != y.var) return x.var < y.var;
      return x.values < y.values;
    });
  }
};

}  // namespace

BnnState compact(const BnnState& state) {
  std::map<FactorList, std::size_t, FactorListLess> slot;
  std::vector<FactorList> terms;
  std::vector<Eigen::RowVectorXd> rows;
  for (std::size_t j = 0; j < state.h(); ++j) {
    FactorList f = state.terms()[j];
    const double scale = factors::normalize(f);
    if (scale == 0.0) continue;
    Eigen::RowVectorXd row = scale * state.coeffs().row(static_cast<Eigen::Index>(j));
    auto [it, inserted] = slot.try_emplace(f, terms.size());
    if (inserted) {
      terms.push_back(std::move(f));
      rows.push_back(std::move(row));
    } else {
      rows[it->second] += row;
    }
  }
  std::vector<FactorList> kept;
  std::vector<Eigen::Index> keep_rows;
  for (std::size_t j = 0; j < terms.size(); ++j) {
    if (!rows[j].isZero(0.0)) {
      kept.push_back(std::move(terms[j]));
      keep_rows.push_back(static_cast<Eigen::Index>(j));
    }
  }
  Eigen::MatrixXd coeffs(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(state.n()));
  for (std::size_t j = 0; j < keep_rows.size(); ++j) {
    coeffs.row(static_cast<Eigen::Index>(j)) = rows[static_cast<std::size_t>(keep_rows[j])];
  }
  return BnnState(state.dims(), std::move(coeffs), std::move(kept), state.consumed());
}

BnnState forward_pass(const BnnArch& arch, const Eigen::MatrixXd& x, const SupportGrid& grid) {
  validate(arch, grid);
  if (static_cast<std::size_t>(x.cols()) != arch.input_dim) {
    throw InvalidInput("forward_pass: input has " + std::to_string(x.cols()) + " columns, architecture expects " +
                       std::to_string(arch.input_dim));
  }
  const auto dims = grid.dims();
  std::vector<BnnState> inputs;
  inputs.reserve(arch.input_dim);
  for (Eigen::Index i = 0; i < x.cols(); ++i) inputs.push_back(BnnState::input(dims, x.col(i)));

  for (std::size_t layer = 0; layer < arch.layers(); ++layer) {
    const bool last = layer + 1 == arch.layers();
    std::vector<BnnState> outputs;
    outputs.reserve(arch.layer_widths[layer]);
    for (std::size_t neuron = 0; neuron < arch.layer_widths[layer]; ++neuron) {
      std::vector<BnnState> parts;
      parts.reserve(inputs.size());
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        parts.push_back(mult_var(inputs[i], arch.variable(layer, neuron, i), grid));
      }
      BnnState s = neuron_sum(parts);
      if (!last) s = compact(quad_activation(s));
      outputs.push_back(std::move(s));
    }
    inputs = std::move(outputs);
  }
  return std::move(inputs.front());
}

BnnSuffStats bnn_precompute(const BnnState& state, const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != state.n()) throw InvalidInput("bnn_precompute: target length mismatch");
  BnnSuffStats s;
  s.yty = y.squaredNorm();
  s.p_vec = state.coeffs() * y;
  s.v = state.coeffs() * state.coeffs().transpose();
  s.n = state.n();
  return s;
}

ResidualForm residual_form(const BnnState& state, const BnnSuffStats& stats) {
  const std::size_t h = state.h();
  if (static_cast<std::size_t>(stats.p_vec.size()) != h || static_cast<std::size_t>(stats.v.rows()) != h) {
    throw InvalidInput("residual_form: statistics do not match state");
  }
  KronSumVec terms(state.dims());
  for (std::size_t j = 0; j < h; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    terms.add_term(KronTerm{-2.0 * stats.p_vec(jj), state.terms()[j]});
    terms.add_term(KronTerm{stats.v(jj, jj), factors::hadamard(state.terms()[j], state.terms()[j])});
    for (std::size_t k = j + 1; k < h; ++k) {
      terms.add_term(KronTerm{2.0 * stats.v(jj, static_cast<Eigen::Index>(k)),
                              factors::hadamard(state.terms()[j], state.terms()[k])});
    }
  }
  return ResidualForm{stats.yty, kron_compact(terms), static_cast<double>(stats.n)};
}

ElboOptions default_options(const BnnArch& arch) { return ElboOptions{arch.layers() >= 3}; }

namespace {

void check_shapes(const ResidualForm& form, const MeanFieldDist& q, const MeanFieldDist& prior) {
  if (form.terms.num_vars() != q.b() || prior.b() != q.b() || prior.mbar() != q.mbar()) {
    throw InvalidInput("bnn_elbo: distribution shape does not match the network state");
  }
}

}  // namespace

double bnn_elbo(const ResidualForm& form, const MeanFieldDist& q, const MeanFieldDist& prior,
                const NoiseModel& noise, ElboOptions options) {
  check_shapes(form, q, prior);
  const double residual = form.constant + expectation(q, form.terms, options.log_domain);
  return gaussian_expected_log_likelihood(noise, form.n, residual).value + cross_entropy_factorized(q, prior) +
         mean_field_entropy(q) + noise.prior_minus_entropy_term();
}

double bnn_elbo(const BnnState& state, const BnnSuffStats& stats, const MeanFieldDist& q,
                const MeanFieldDist& prior, const NoiseModel& noise, ElboOptions options) {
  return bnn_elbo(residual_form(state, stats), q, prior, noise, options);
}

ElboGrad bnn_elbo_grad(const ResidualForm& form, const MeanFieldDist& q, const MeanFieldDist& prior,
                       const NoiseModel& noise, ElboOptions options) {
  check_shapes(form, q, prior);
  const auto e = expectation_grad(q, form.terms, options.log_domain);
  const auto g = gaussian_expected_log_likelihood(noise, form.n, form.constant + e.value);
  ElboGrad out;
  out.value = g.value + cross_entropy_factorized(q, prior) + mean_field_entropy(q) + noise.prior_minus_entropy_term();
  RowMatrix d_probs = g.d_residual * e.d_probs + prior.log_probs() - q.log_probs();
  d_probs.array() -= 1.0;
  out.q_logits = softmax_rows_backward(q.probs(), d_probs);
  const Eigen::VectorXd d_sigma =
      g.d_sigma_probs.array() + noise.log_p_sigma().array() - noise.log_q_sigma().array() - 1.0;
  out.sigma_logits = softmax_backward(noise.q_sigma(), d_sigma);
  return out;
}

double network_output(const BnnArch& arch, const Eigen::VectorXd& weights, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(weights.size()) != arch.num_variables()) {
    throw InvalidInput("network_output: weight count does not match the architecture");
  }
  if (static_cast<std::size_t>(x.size()) != arch.input_dim) throw InvalidInput("network_output: input size mismatch");
  Eigen::VectorXd act = x;
  for (std::size_t layer = 0; layer < arch.layers(); ++layer) {
    const bool last = layer + 1 == arch.layers();
    Eigen::VectorXd next(static_cast<Eigen::Index>(arch.layer_widths[layer]));
    for (std::size_t j = 0; j < arch.layer_widths[layer]; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < arch.fan_in(layer); ++i) {
        z += weights(static_cast<Eigen::Index>(arch.variable(layer, j, i))) * act(static_cast<Eigen::Index>(i));
      }
      next(static_cast<Eigen::Index>(j)) = last ? z : z * z;
    }
    act = std::move(next);
  }
  return act(0);
}

PredictiveMoments predict(const BnnArch& arch, const SupportGrid& grid, const MeanFieldDist& q,
                          const NoiseModel& noise, const Eigen::VectorXd& x) {
  const BnnState state = forward_pass(arch, x.transpose(), grid);
  const KronSumVec out = state.column(0);
  const bool log_domain = default_options(arch).log_domain;
  PredictiveMoments m;
  m.mean = expectation(q, out, log_domain);
  const double second = expectation(q, kron_compact(kron_hadamard(out, out)), log_domain);
  m.variance = std::max(second - m.mean * m.mean, 0.0) + noise.expected_sigma2();
  return m;
}

}  // namespace direct::bnn
