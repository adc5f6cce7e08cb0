#include <gtest/gtest.h>

#include <cmath>

#include "direct/errors.hpp"
#include "direct/glm.hpp"
#include "support/instances.hpp"

using namespace direct;
using direct::testing::random_glm;
using direct::testing::random_mixture;
using direct::testing::rel_err;

namespace {

struct Fixed {
  oracle::GlmProblem problem;
  glm::GlmModel model;
};

Fixed fixed_problem() {
  Fixed f;
  auto& p = f.problem;
  p.phi.resize(3, 2);
  p.phi << 0.5, -1.0, 1.5, 0.2, -0.3, 0.8;
  p.y.resize(3);
  p.y << 0.7, -0.2, 1.1;
  const std::vector<double> row{-1.0, 0.0, 1.0};
  p.grid = SupportGrid::uniform_rows(row, 2);
  RowMatrix l(2, 3);
  l << 0.2, -0.1, 0.4, -0.3, 0.5, 0.0;
  p.q = MeanFieldDist(l);
  p.prior = MeanFieldDist::uniform(2, 3);
  p.sigma2.resize(2);
  p.sigma2 << 0.5, 2.0;
  p.p_sigma = Eigen::VectorXd::Constant(2, 0.5);
  Eigen::VectorXd ql(2);
  ql << 0.3, -0.3;
  p.q_sigma = softmax(ql);
  f.model = {p.grid, p.q, p.q, NoiseModel(p.sigma2, p.p_sigma, ql), glm::precompute(p.phi, p.y, p.grid)};
  f.model.prior = p.prior;
  return f;
}

// Exact ELBO of a mixture q by enumeration.
double enumerated_mixture_elbo(const oracle::GlmProblem& p, const MixtureDist& q) {
  double total = 0.0;
  oracle::for_each_index(p.grid.dims(), [&](const oracle::Index& idx) {
    const double qw = oracle::pmf(q, idx);
    Eigen::VectorXd w(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) w(static_cast<Eigen::Index>(j)) = p.grid.value(j, idx[j]);
    double ll = 0.0;
    for (Eigen::Index k = 0; k < p.sigma2.size(); ++k) {
      ll += p.q_sigma(k) * oracle::gaussian_log_likelihood(p.phi, p.y, w, p.sigma2(k));
    }
    total += qw * (ll + std::log(oracle::pmf(p.prior, idx)) - std::log(qw));
  });
  return total + p.q_sigma.dot((p.p_sigma.array().log() - p.q_sigma.array().log()).matrix());
}

}  // namespace

TEST(GlmElbo, FrozenValue) {
  const auto f = fixed_problem();
  EXPECT_NEAR(glm::elbo(f.model), -3.1643571338583523, 1e-12);
  EXPECT_NEAR(oracle::glm_elbo(f.problem), -3.1643571338583523, 1e-12);
  EXPECT_NEAR(oracle::glm_log_evidence(f.problem), -2.240212340853278, 1e-12);
}

TEST(GlmElbo, FrozenPredictive) {
  const auto f = fixed_problem();
  Eigen::VectorXd s(2);
  s << 0.4, -0.6;
  EXPECT_NEAR(glm::predict_mean(f.model, s), -0.015982254550842345, 1e-13);
  EXPECT_NEAR(glm::predict_variance(f.model, s), 1.333393389063186, 1e-12);
}

TEST(GlmElbo, MatchesEnumerationOnRandomInstances) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_glm(1 + uniform_index(rng, 4), 2 + uniform_index(rng, 3), 1 + uniform_index(rng, 3),
                                 1 + uniform_index(rng, 8), rng);
    EXPECT_LT(rel_err(glm::elbo(inst.model), oracle::glm_elbo(inst.problem)), 1e-10) << "rep " << rep;
  }
}

TEST(GlmElbo, IndependentOfEnumerationOrder) {
  Rng rng(2);
  const auto inst = random_glm(4, 3, 3, 6, rng);
  EXPECT_LT(rel_err(oracle::glm_elbo(inst.problem), oracle::glm_elbo_reordered(inst.problem)), 1e-12);
  EXPECT_LT(rel_err(glm::elbo(inst.model), oracle::glm_elbo_reordered(inst.problem)), 1e-10);
}

TEST(GlmElbo, BelowLogEvidence) {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_glm(3, 3, 2, 5, rng);
    EXPECT_LE(glm::elbo(inst.model), oracle::glm_log_evidence(inst.problem) + 1e-10);
  }
}

TEST(GlmElbo, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  const auto inst = random_glm(3, 3, 3, 7, rng);
  const glm::ElboObjective obj(inst.model, glm::EntropyMode::exact);
  const auto th = obj.initial();
  const auto ev = obj.evaluate(th);
  EXPECT_NEAR(ev.value, glm::elbo(inst.model), 1e-10);
  const auto fd = oracle::finite_diff_grad([&](const Eigen::VectorXd& t) { return obj.evaluate(t).value; }, th, 1e-6);
  for (Eigen::Index i = 0; i < th.size(); ++i) EXPECT_NEAR(ev.grad(i), fd(i), 1e-6 * (1 + std::abs(fd(i))));
}

TEST(GlmStats, AccumulateEqualsPrecompute) {
  Rng rng(5);
  const auto inst = random_glm(5, 3, 1, 12, rng);
  const auto& p = inst.problem;
  auto stats = glm::empty_stats(p.grid);
  glm::accumulate(stats, p.phi.topRows(5), p.y.head(5), p.grid);
  glm::accumulate(stats, p.phi.bottomRows(7), p.y.tail(7), p.grid);
  const auto& ref = inst.model.stats;
  EXPECT_EQ(stats.n, 12u);
  EXPECT_NEAR(stats.yty, ref.yty, 1e-12);
  EXPECT_LT((stats.phity - ref.phity).norm(), 1e-12);
  EXPECT_LT((stats.phitphi - ref.phitphi).norm(), 1e-12);
  EXPECT_LT((stats.h_mat - ref.h_mat).norm(), 1e-12);
  EXPECT_LT((stats.phitphi - stats.phitphi.transpose()).norm(), 0.0 + 1e-300);
}

TEST(GlmStats, ShapeErrors) {
  Rng rng(6);
  const auto inst = random_glm(3, 3, 1, 4, rng);
  EXPECT_THROW(glm::precompute(inst.problem.phi, Eigen::VectorXd::Zero(3), inst.problem.grid), InvalidInput);
  auto m = inst.model;
  m.q = MeanFieldDist::uniform(2, 3);
  EXPECT_THROW(glm::validate(m), InvalidInput);
}

TEST(GlmPredict, MatchesEnumeration) {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const auto inst = random_glm(3, 4, 2, 5, rng);
    const Eigen::VectorXd s = direct::testing::random_vector(3, rng);
    const auto ref = oracle::glm_predictive(inst.problem, s);
    EXPECT_NEAR(glm::predict_mean(inst.model, s), ref.mean, 1e-12);
    EXPECT_NEAR(glm::predict_variance(inst.model, s), ref.variance, 1e-11);
  }
}

TEST(GlmPredict, MixtureMomentsMatchEnumeration) {
  Rng rng(8);
  auto inst = random_glm(3, 3, 2, 5, rng);
  const auto q = random_mixture(3, 3, 3, rng);
  inst.model.q = q;
  const Eigen::VectorXd s = direct::testing::random_vector(3, rng);
  EXPECT_NEAR(glm::predict_mean(inst.model, s), oracle::glm_predictive_mean(q, inst.problem.grid, s), 1e-12);
  double m2 = 0.0;
  oracle::for_each_index(inst.problem.grid.dims(), [&](const oracle::Index& idx) {
    double f = 0.0;
    for (std::size_t j = 0; j < 3; ++j) f += s(static_cast<Eigen::Index>(j)) * inst.problem.grid.value(j, idx[j]);
    m2 += oracle::pmf(q, idx) * f * f;
  });
  const double mean = glm::predict_mean(inst.model, s);
  EXPECT_NEAR(glm::predict_variance(inst.model, s), m2 - mean * mean + inst.model.noise.expected_sigma2(), 1e-11);
}

TEST(GlmMixture, BoundBelowExactMixtureElbo) {
  Rng rng(9);
  for (int rep = 0; rep < 10; ++rep) {
    auto inst = random_glm(3, 3, 2, 4, rng);
    const auto q = random_mixture(2 + uniform_index(rng, 2), 3, 3, rng);
    inst.model.q = q;
    const EntropyAnchor a{direct::testing::random_mean_field(3, 3, rng)};
    EXPECT_LE(glm::mixture_elbo_bound(inst.model, a), enumerated_mixture_elbo(inst.problem, q) + 1e-10);
  }
}

TEST(GlmMixture, SingleComponentBoundIsExact) {
  Rng rng(10);
  auto inst = random_glm(3, 3, 2, 4, rng);
  const MixtureDist q(Eigen::VectorXd::Zero(1), {inst.problem.q});
  inst.model.q = q;
  EXPECT_NEAR(glm::mixture_elbo_bound(inst.model, EntropyAnchor{inst.problem.q}), oracle::glm_elbo(inst.problem),
              1e-10);
}

TEST(GlmMixture, MeanFieldElboRejectsMixture) {
  Rng rng(11);
  auto inst = random_glm(2, 2, 1, 3, rng);
  inst.model.q = random_mixture(2, 2, 2, rng);
  EXPECT_THROW(glm::elbo(inst.model), UnsupportedError);
}

TEST(GlmMixture, BoundObjectiveGradient) {
  Rng rng(12);
  auto inst = random_glm(2, 3, 2, 5, rng);
  inst.model.q = random_mixture(3, 2, 3, rng);
  const glm::ElboObjective obj(inst.model, glm::EntropyMode::bound,
                               EntropyAnchor{direct::testing::random_mean_field(2, 3, rng)});
  EXPECT_EQ(obj.dimension(), 3u + 3 * 6 + 6 + 2);
  const auto th = obj.initial();
  const auto ev = obj.evaluate(th);
  EXPECT_NEAR(ev.value, glm::mixture_elbo_bound(obj.model_at(th), *obj.anchor_at(th)), 1e-12);
  const auto fd = oracle::finite_diff_grad([&](const Eigen::VectorXd& t) { return obj.evaluate(t).value; }, th, 1e-6);
  for (Eigen::Index i = 0; i < th.size(); ++i) EXPECT_NEAR(ev.grad(i), fd(i), 1e-6 * (1 + std::abs(fd(i)))) << i;
}

TEST(GlmMixture, SurrogateGradientIsUnbiased) {
  Rng rng(13);
  auto inst = random_glm(2, 2, 2, 4, rng);
  const auto q = random_mixture(2, 2, 2, rng);
  inst.model.q = q;
  const glm::ElboObjective obj(inst.model, glm::EntropyMode::surrogate);
  const auto th = obj.initial();
  auto problem_at = [&](const Eigen::VectorXd& t) {
    const auto m = obj.model_at(t);
    auto p = inst.problem;
    p.q_sigma = m.noise.q_sigma();
    return std::pair{p, std::get<MixtureDist>(m.q)};
  };
  const auto exact = oracle::finite_diff_grad(
      [&](const Eigen::VectorXd& t) {
        const auto [p, qq] = problem_at(t);
        return enumerated_mixture_elbo(p, qq);
      },
      th, 1e-6);
  const std::size_t reps = 3000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(th.size());
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(th.size());
  for (std::size_t i = 0; i < reps; ++i) {
    const auto g = obj.sample(th, 50, rng).grad;
    mean += g;
    sq += g.cwiseAbs2();
  }
  mean /= static_cast<double>(reps);
  const Eigen::VectorXd se =
      ((sq / static_cast<double>(reps) - mean.cwiseAbs2()).cwiseMax(0.0) / static_cast<double>(reps)).cwiseSqrt();
  for (Eigen::Index i = 0; i < th.size(); ++i) EXPECT_NEAR(mean(i), exact(i), 4.0 * se(i) + 1e-6) << i;
}

TEST(GlmMixture, MixturePriorBoundIsLower) {
  Rng rng(14);
  auto inst = random_glm(3, 3, 2, 4, rng);
  const auto prior = random_mixture(2, 3, 3, rng);
  inst.model.prior = prior;
  double exact = 0.0;
  oracle::for_each_index(inst.problem.grid.dims(), [&](const oracle::Index& idx) {
    const double qw = oracle::pmf(inst.problem.q, idx);
    Eigen::VectorXd w(3);
    for (std::size_t j = 0; j < 3; ++j) w(static_cast<Eigen::Index>(j)) = inst.problem.grid.value(j, idx[j]);
    double ll = 0.0;
    for (Eigen::Index k = 0; k < inst.problem.sigma2.size(); ++k) {
      ll += inst.problem.q_sigma(k) *
            oracle::gaussian_log_likelihood(inst.problem.phi, inst.problem.y, w, inst.problem.sigma2(k));
    }
    exact += qw * (ll + std::log(oracle::pmf(prior, idx)) - std::log(qw));
  });
  exact += inst.model.noise.prior_minus_entropy_term();
  EXPECT_LE(glm::elbo(inst.model), exact + 1e-10);
}

TEST(GlmScale, LargeProblemEvaluatesWithoutEnumeration) {
  Rng rng(15);
  const std::size_t b = 300;
  const std::vector<double> row{-1.0, -0.5, 0.0, 0.5, 1.0};
  const auto grid = SupportGrid::uniform_rows(row, b);
  const Eigen::MatrixXd phi = direct::testing::random_matrix(200, static_cast<Eigen::Index>(b), rng, 0.1);
  const Eigen::VectorXd y = direct::testing::random_vector(200, rng);
  glm::GlmModel m{grid, MeanFieldDist::uniform(b, 5), MeanFieldDist::uniform(b, 5), NoiseModel::log_uniform(1.0, 5),
                  glm::precompute(phi, y, grid)};
  const double v = glm::elbo(m);
  EXPECT_TRUE(std::isfinite(v));
  // Uniform q equals the prior, so the ELBO is the expected log likelihood alone.
  EXPECT_NEAR(v, glm::expected_log_likelihood(m.stats, grid, MeanFieldDist::uniform(b, 5), m.noise).value, 1e-8);
}
