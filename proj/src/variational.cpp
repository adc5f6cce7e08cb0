#include "direct/variational.hpp"

#include <cmath>
#include <string>

#include "direct/errors.hpp"

namespace direct {

// ---------------------------------------------------------------------------
// Types

SupportGrid::SupportGrid(RowMatrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) throw InvalidInput("SupportGrid: empty grid");
  for (Eigen::Index j = 0; j < values_.rows(); ++j) {
    for (Eigen::Index k = 0; k < values_.cols(); ++k) {
      if (!std::isfinite(values_(j, k))) throw InvalidInput("SupportGrid: non-finite value");
      if (k > 0 && !(values_(j, k) > values_(j, k - 1))) {
        throw InvalidInput("SupportGrid: row " + std::to_string(j) + " is not strictly increasing");
      }
    }
  }
}

SupportGrid SupportGrid::uniform_rows(std::span<const double> row, std::size_t b) {
  RowMatrix values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(row.size()));
  for (Eigen::Index j = 0; j < values.rows(); ++j) {
    for (Eigen::Index k = 0; k < values.cols(); ++k) values(j, k) = row[static_cast<std::size_t>(k)];
  }
  return SupportGrid(std::move(values));
}

MeanFieldDist::MeanFieldDist(RowMatrix logits) : logits_(std::move(logits)) {
  if (logits_.rows() < 1 || logits_.cols() < 1) throw InvalidInput("MeanFieldDist: empty logits");
  if (!logits_.allFinite()) throw InvalidInput("MeanFieldDist: non-finite logits");
  log_probs_ = log_softmax_rows(logits_);
  probs_ = log_probs_.array().exp();
}

MeanFieldDist MeanFieldDist::uniform(std::size_t b, std::size_t mbar) {
  return MeanFieldDist(RowMatrix::Zero(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(mbar)));
}

MeanFieldDist MeanFieldDist::from_probs(const RowMatrix& probs) {
  if ((probs.array() <= 0.0).any()) throw DomainError("MeanFieldDist: probabilities must be positive");
  return MeanFieldDist(probs.array().log().matrix());
}

KronSumVec MeanFieldDist::prob_vector() const {
  KronTerm term;
  for (std::size_t j = 0; j < b(); ++j) {
    const auto row = probs_.row(static_cast<Eigen::Index>(j));
    term.factors.push_back(Factor{j, std::vector<double>(row.data(), row.data() + row.size())});
  }
  return KronSumVec(std::vector<std::size_t>(b(), mbar()), {std::move(term)});
}

MixtureDist::MixtureDist(Eigen::VectorXd mixture_logits, std::vector<MeanFieldDist> components)
    : mixture_logits_(std::move(mixture_logits)), components_(std::move(components)) {
  if (components_.empty()) throw InvalidInput("MixtureDist: no components");
  if (static_cast<std::size_t>(mixture_logits_.size()) != components_.size()) {
    throw InvalidInput("MixtureDist: mixture logits and components differ in count");
  }
  if (!mixture_logits_.allFinite()) throw InvalidInput("MixtureDist: non-finite mixture logits");
  for (const auto& c : components_) {
    if (c.b() != components_.front().b() || c.mbar() != components_.front().mbar()) {
      throw InvalidInput("MixtureDist: components differ in shape");
    }
  }
  weights_ = softmax(mixture_logits_);
}

unsigned QuantizedSample::bit_width() const {
  unsigned bits = 0;
  while ((1u << bits) < mbar) ++bits;
  return bits;
}

std::vector<double> QuantizedSample::dequantize(const SupportGrid& grid) const {
  if (indices.size() != grid.b() || mbar != grid.mbar()) {
    throw InvalidInput("QuantizedSample: shape does not match grid");
  }
  std::vector<double> w(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) w[j] = grid.value(j, indices[j]);
  return w;
}

std::vector<std::uint8_t> serialize(const QuantizedSample& sample) {
  const unsigned bits = sample.bit_width();
  const std::size_t b = sample.indices.size();
  std::vector<std::uint8_t> out(kSampleHeaderBytes + (b * bits + 7) / 8, 0);
  out[0] = 'D';
  out[1] = 'Q';
  out[2] = 'S';
  out[3] = 'W';
  out[4] = kSampleFormatVersion;
  const auto b32 = static_cast<std::uint32_t>(b);
  for (int i = 0; i < 4; ++i) out[5 + i] = static_cast<std::uint8_t>(b32 >> (8 * i));
  out[9] = static_cast<std::uint8_t>(sample.mbar & 0xff);
  out[10] = static_cast<std::uint8_t>(sample.mbar >> 8);
  std::size_t bitpos = 0;
  for (auto idx : sample.indices) {
    if (idx >= sample.mbar) throw InvalidInput("serialize: index out of range");
    for (unsigned k = 0; k < bits; ++k, ++bitpos) {
      if ((idx >> k) & 1u) out[kSampleHeaderBytes + bitpos / 8] |= static_cast<std::uint8_t>(1u << (bitpos % 8));
    }
  }
  return out;
}

QuantizedSample deserialize_sample(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSampleHeaderBytes || bytes[0] != 'D' || bytes[1] != 'Q' || bytes[2] != 'S' ||
      bytes[3] != 'W') {
    throw InvalidInput("deserialize_sample: bad magic");
  }
  if (bytes[4] != kSampleFormatVersion) {
    throw InvalidInput("deserialize_sample: unsupported version " + std::to_string(bytes[4]));
  }
  std::uint32_t b = 0;
  for (int i = 0; i < 4; ++i) b |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
  QuantizedSample s;
  s.mbar = static_cast<std::uint16_t>(bytes[9] | (bytes[10] << 8));
  const unsigned bits = s.bit_width();
  if (bytes.size() != kSampleHeaderBytes + (static_cast<std::size_t>(b) * bits + 7) / 8) {
    throw InvalidInput("deserialize_sample: payload length mismatch");
  }
  s.indices.resize(b);
  std::size_t bitpos = 0;
  for (auto& idx : s.indices) {
    unsigned v = 0;
    for (unsigned k = 0; k < bits; ++k, ++bitpos) {
      v |= ((bytes[kSampleHeaderBytes + bitpos / 8] >> (bitpos % 8)) & 1u) << k;
    }
    if (v >= s.mbar) throw InvalidInput("deserialize_sample: index out of range");
    idx = static_cast<std::uint16_t>(v);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Entropy and cross terms

double mean_field_entropy(const MeanFieldDist& q) {
  return -(q.probs().array() * q.log_probs().array()).sum();
}

double cross_entropy_factorized(const MeanFieldDist& q, const MeanFieldDist& p) {
  if (q.b() != p.b() || q.mbar() != p.mbar()) throw InvalidInput("cross_entropy_factorized: shape mismatch");
  return (q.probs().array() * p.log_probs().array()).sum();
}

KronSumVec mixture_prob_vector(const MixtureDist& q) {
  KronSumVec out(std::vector<std::size_t>(q.b(), q.mbar()));
  for (std::size_t i = 0; i < q.r(); ++i) {
    auto term = q.components()[i].prob_vector().terms().front();
    term.coeff = q.weights()(static_cast<Eigen::Index>(i));
    out.add_term(std::move(term));
  }
  return out;
}

namespace {

void check_anchor(const MixtureDist& q, const EntropyAnchor& a) {
  if (a.dist.b() != q.b() || a.dist.mbar() != q.mbar()) {
    throw InvalidInput("mixture entropy bound: anchor shape mismatch");
  }
}

// log D_i^(jk) = log sum_c q^(j)_ic q^(k)_ic / a_ic, stored [j][k] -> length-b vector.
std::vector<std::vector<Eigen::VectorXd>> log_overlaps(const MixtureDist& q, const RowMatrix& a) {
  const std::size_t r = q.r();
  std::vector<std::vector<Eigen::VectorXd>> out(r, std::vector<Eigen::VectorXd>(r));
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t k = j; k < r; ++k) {
      const auto& pj = q.components()[j].probs();
      const auto& pk = q.components()[k].probs();
      Eigen::VectorXd d = (pj.array() * pk.array() / a.array()).rowwise().sum().log();
      out[j][k] = d;
      out[k][j] = std::move(d);
    }
  }
  return out;
}

}  // namespace

double mixture_entropy_lower_bound(const MixtureDist& q, const EntropyAnchor& a) {
  check_anchor(q, a);
  const auto& alpha = q.weights();
  const auto overlaps = log_overlaps(q, a.dist.probs());
  double bound = 1.0;
  for (std::size_t j = 0; j < q.r(); ++j) {
    const double aj = alpha(static_cast<Eigen::Index>(j));
    const double lin = (q.components()[j].probs().array() * a.dist.log_probs().array()).sum();
    double quad = 0.0;
    for (std::size_t k = 0; k < q.r(); ++k) {
      quad += alpha(static_cast<Eigen::Index>(k)) * std::exp(overlaps[j][k].sum());
    }
    bound -= aj * (lin + quad);
  }
  return bound;
}

MixtureEntropyBoundGrad mixture_entropy_lower_bound_grad(const MixtureDist& q, const EntropyAnchor& a) {
  check_anchor(q, a);
  const std::size_t r = q.r();
  const auto& alpha = q.weights();
  const RowMatrix& ap = a.dist.probs();
  const RowMatrix& loga = a.dist.log_probs();
  const auto overlaps = log_overlaps(q, ap);

  Eigen::MatrixXd log_p(r, r);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t k = 0; k < r; ++k) log_p(j, k) = overlaps[j][k].sum();
  }

  MixtureEntropyBoundGrad out;
  Eigen::VectorXd g_alpha(r);
  std::vector<RowMatrix> g_comp(r);
  RowMatrix g_anchor = RowMatrix::Zero(ap.rows(), ap.cols());
  double bound = 1.0;
  for (std::size_t j = 0; j < r; ++j) {
    const auto& qj = q.components()[j].probs();
    const double aj = alpha(j);
    const double lin = (qj.array() * loga.array()).sum();
    double quad = 0.0;
    for (std::size_t k = 0; k < r; ++k) quad += alpha(k) * std::exp(log_p(j, k));
    bound -= aj * (lin + quad);
    g_alpha(j) = -lin - 2.0 * quad;

    RowMatrix gq = -aj * loga;
    g_anchor.array() -= aj * qj.array() / ap.array();
    for (std::size_t k = 0; k < r; ++k) {
      const auto& qk = q.components()[k].probs();
      // P_jk / D_i^(jk) per variable i.
      Eigen::VectorXd partial = (log_p(j, k) - overlaps[j][k].array()).exp();
      const double ak = alpha(k);
      const Eigen::ArrayXXd ratio = qk.array() / ap.array();
      gq.array() -= (2.0 * aj * ak) * (ratio.colwise() * partial.array());
      const Eigen::ArrayXXd cross = qj.array() * ratio / ap.array();
      g_anchor.array() += (aj * ak) * (cross.colwise() * partial.array());
    }
    g_comp[j] = std::move(gq);
  }
  out.value = bound;
  out.mixture_logits = softmax_backward(alpha, g_alpha);
  out.component_logits.resize(r);
  for (std::size_t j = 0; j < r; ++j) {
    out.component_logits[j] = softmax_rows_backward(q.components()[j].probs(), g_comp[j]);
  }
  out.anchor_logits = softmax_rows_backward(ap, g_anchor);
  return out;
}

double mixture_prior_lower_bound(const MeanFieldDist& q, const MixtureDist& p) {
  if (q.b() != p.b() || q.mbar() != p.mbar()) throw InvalidInput("mixture_prior_lower_bound: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.r(); ++i) {
    total += p.weights()(static_cast<Eigen::Index>(i)) * cross_entropy_factorized(q, p.components()[i]);
  }
  return total;
}

double mixture_prior_lower_bound(const MixtureDist& q, const MixtureDist& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.r(); ++i) {
    total += q.weights()(static_cast<Eigen::Index>(i)) * mixture_prior_lower_bound(q.components()[i], p);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Point evaluations and sampling

namespace {

void check_sample(const QuantizedSample& s, std::size_t b, std::size_t mbar) {
  if (s.indices.size() != b) throw InvalidInput("log_pmf: sample length does not match b");
  for (auto idx : s.indices) {
    if (idx >= mbar) throw InvalidInput("log_pmf: index " + std::to_string(idx) + " out of range");
  }
}

double component_log_prob(const MeanFieldDist& c, const QuantizedSample& s) {
  double lp = 0.0;
  const auto& lq = c.log_probs();
  for (std::size_t j = 0; j < s.indices.size(); ++j) lp += lq(static_cast<Eigen::Index>(j), s.indices[j]);
  return lp;
}

// log alpha_i + log q^(i)(s) for every component.
Eigen::VectorXd component_log_joint(const MixtureDist& q, const QuantizedSample& s) {
  Eigen::VectorXd lc(q.r());
  for (std::size_t i = 0; i < q.r(); ++i) {
    lc(i) = std::log(q.weights()(i)) + component_log_prob(q.components()[i], s);
  }
  return lc;
}

}  // namespace

double log_pmf(const MeanFieldDist& q, const QuantizedSample& s) {
  check_sample(s, q.b(), q.mbar());
  return component_log_prob(q, s);
}

double log_pmf(const MixtureDist& q, const QuantizedSample& s) {
  check_sample(s, q.b(), q.mbar());
  return log_sum_exp(component_log_joint(q, s));
}

MixtureGrad log_pmf_grad(const MixtureDist& q, const QuantizedSample& s) {
  check_sample(s, q.b(), q.mbar());
  const Eigen::VectorXd lc = component_log_joint(q, s);
  const Eigen::VectorXd resp = (lc.array() - log_sum_exp(lc)).exp();
  MixtureGrad g;
  g.mixture_logits = resp - q.weights();
  g.component_logits.reserve(q.r());
  for (std::size_t i = 0; i < q.r(); ++i) {
    RowMatrix gi = -resp(i) * q.components()[i].probs();
    for (std::size_t j = 0; j < s.indices.size(); ++j) gi(j, s.indices[j]) += resp(i);
    g.component_logits.push_back(std::move(gi));
  }
  return g;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cumulative += probs[k];
    if (cumulative > u) return k;
  }
  // Rounding left the total just below u: fall back to the last level with mass.
  for (std::size_t k = probs.size(); k-- > 0;) {
    if (probs[k] > 0.0) return k;
  }
  return probs.size() - 1;
}

namespace {

QuantizedSample draw_one(const MeanFieldDist& q, Rng& rng) {
  QuantizedSample s;
  s.mbar = static_cast<std::uint16_t>(q.mbar());
  s.indices.resize(q.b());
  const auto& p = q.probs();
  for (std::size_t j = 0; j < q.b(); ++j) {
    const double* row = p.data() + j * q.mbar();
    s.indices[j] = static_cast<std::uint16_t>(sample_categorical({row, q.mbar()}, rng));
  }
  return s;
}

}  // namespace

std::vector<QuantizedSample> sample(const MeanFieldDist& q, std::size_t count, Rng& rng) {
  if (count < 1) throw InvalidInput("sample: count must be >= 1");
  std::vector<QuantizedSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(draw_one(q, rng));
  return out;
}

std::vector<QuantizedSample> sample(const MixtureDist& q, std::size_t count, Rng& rng) {
  if (count < 1) throw InvalidInput("sample: count must be >= 1");
  std::vector<QuantizedSample> out;
  out.reserve(count);
  const auto& w = q.weights();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = sample_categorical({w.data(), static_cast<std::size_t>(w.size())}, rng);
    out.push_back(draw_one(q.components()[c], rng));
  }
  return out;
}

EntropySurrogate entropy_surrogate_loss(const MixtureDist& q, std::size_t t, Rng& rng) {
  if (t < 1) throw InvalidInput("entropy_surrogate_loss: t must be >= 1");
  const std::size_t r = q.r();
  const auto draws = sample(q, t, rng);
  EntropySurrogate out;
  Eigen::VectorXd g_alpha = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(r);
  std::vector<RowMatrix> g_comp(r, RowMatrix::Zero(q.b(), q.mbar()));
  const double inv_t = 1.0 / static_cast<double>(t);
  for (const auto& s : draws) {
    const Eigen::VectorXd lc = component_log_joint(q, s);
    const double lq = log_sum_exp(lc);
    const Eigen::VectorXd resp = (lc.array() - lq).exp();
    const double weight = (lq + 1.0) * inv_t;
    out.value += 0.5 * (lq + 1.0) * (lq + 1.0) * inv_t;
    out.entropy_estimate -= lq * inv_t;
    g_alpha += weight * (resp - q.weights());
    for (std::size_t i = 0; i < r; ++i) {
      const double wr = weight * resp(i);
      mass(i) += wr;
      for (std::size_t j = 0; j < s.indices.size(); ++j) g_comp[i](j, s.indices[j]) += wr;
    }
  }
  for (std::size_t i = 0; i < r; ++i) g_comp[i] -= mass(i) * q.components()[i].probs();
  out.grad.mixture_logits = std::move(g_alpha);
  out.grad.component_logits = std::move(g_comp);
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

double expected_sparsity(const MeanFieldDist& q, const SupportGrid& grid) {
  if (q.b() != grid.b() || q.mbar() != grid.mbar()) throw InvalidInput("expected_sparsity: shape mismatch");
  double total = 0.0;
  for (std::size_t j = 0; j < grid.b(); ++j) {
    for (std::size_t k = 0; k < grid.mbar(); ++k) {
      if (grid.value(j, k) == 0.0) total += q.probs()(j, k);
    }
  }
  return total / static_cast<double>(grid.b());
}

double expected_sparsity(const MixtureDist& q, const SupportGrid& grid) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.r(); ++i) total += q.weights()(i) * expected_sparsity(q.components()[i], grid);
  return total;
}

Eigen::VectorXd expected_weights(const MeanFieldDist& q, const SupportGrid& grid) {
  if (q.b() != grid.b() || q.mbar() != grid.mbar()) throw InvalidInput("expected_weights: shape mismatch");
  return (q.probs().array() * grid.values().array()).rowwise().sum();
}

Eigen::VectorXd expected_weights(const MixtureDist& q, const SupportGrid& grid) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(grid.b());
  for (std::size_t i = 0; i < q.r(); ++i) s += q.weights()(i) * expected_weights(q.components()[i], grid);
  return s;
}

}  // namespace direct

namespace direct {

namespace {

void check_expectation_shape(const MeanFieldDist& q, const KronSumVec& f) {
  if (f.num_vars() != q.b()) throw InvalidInput("expectation: variable count mismatch");
  for (auto d : f.dims()) {
    if (d != q.mbar()) throw InvalidInput("expectation: factor length does not match mbar");
  }
}

double row_dot(const MeanFieldDist& q, const Factor& f) {
  const double* row = q.probs().data() + f.var * q.mbar();
  long double s = 0;
  for (std::size_t c = 0; c < f.values.size(); ++c) s += static_cast<long double>(row[c]) * f.values[c];
  return static_cast<double>(s);
}

}  // namespace

double expectation(const MeanFieldDist& q, const KronSumVec& f, bool force_log) {
  check_expectation_shape(q, f);
  long double total = 0;
  for (const auto& t : f.terms()) {
    StableProduct prod(force_log);
    prod.multiply(t.coeff);
    for (const auto& fac : t.factors) prod.multiply(row_dot(q, fac));
    total += prod.value();
  }
  return static_cast<double>(total);
}

ExpectationGrad expectation_grad(const MeanFieldDist& q, const KronSumVec& f, bool force_log) {
  check_expectation_shape(q, f);
  ExpectationGrad out;
  out.d_probs = RowMatrix::Zero(q.b(), q.mbar());
  long double total = 0;
  std::vector<double> dots;
  std::vector<double> suffix;
  for (const auto& t : f.terms()) {
    const std::size_t k = t.factors.size();
    dots.resize(k);
    StableProduct prod(force_log);
    prod.multiply(t.coeff);
    for (std::size_t i = 0; i < k; ++i) {
      dots[i] = row_dot(q, t.factors[i]);
      prod.multiply(dots[i]);
    }
    total += prod.value();
    // d/dq_{v,c} = coeff * f_v[c] * prod_{others} dots, via prefix/suffix products.
    suffix.assign(k + 1, 1.0);
    for (std::size_t i = k; i-- > 0;) suffix[i] = suffix[i + 1] * dots[i];
    double prefix = t.coeff;
    for (std::size_t i = 0; i < k; ++i) {
      const double others = prefix * suffix[i + 1];
      const auto& fac = t.factors[i];
      double* row = out.d_probs.data() + fac.var * q.mbar();
      for (std::size_t c = 0; c < fac.values.size(); ++c) row[c] += others * fac.values[c];
      prefix *= dots[i];
    }
  }
  out.value = static_cast<double>(total);
  return out;
}

}  // namespace direct
