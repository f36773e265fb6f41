#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "augbin/errors.hpp"
#include "augbin/infer.hpp"
#include "augbin/modelfit.hpp"
#include "augbin/normal.hpp"
#include "augbin/simharness.hpp"
#include "support.hpp"

using namespace augbin;
using augbin::testing::patient;

namespace {

Scenario no_progression(const std::string& name, int n, std::uint64_t seed) {
  Scenario s = preset(name);
  s.n = n;
  s.alpha = -mvn::kInf;
  s.growth_censoring = false;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(FitTumour, SingleVisitEqualsLeastSquares) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> e(0.0, 0.4);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  TrialDataset d;
  d.max_visits = 1;
  const int n = 40;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double z0 = u(rng);
    const double yi = -0.2 + 0.15 * z0 + e(rng);
    d.patients.push_back(patient(z0, {z0 * std::exp(yi)}, {}, std::nullopt, "P" + std::to_string(i)));
    X(i, 0) = 1.0;
    X(i, 1) = z0;
    y[i] = std::log(d.patients.back().sizes[0] / z0);
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  const double rss = (y - X * beta).squaredNorm();
  const auto fit = fit_tumour(d, false);
  EXPECT_NEAR(fit.model.intercepts[0], beta[0], 1e-10);
  EXPECT_NEAR(fit.model.baseline_slope, beta[1], 1e-10);
  EXPECT_NEAR(fit.model.cov(0, 0), rss / n, 1e-10);
}

TEST(FitTumour, RecoversCovarianceOfGeneratingProcess) {
  const Scenario s = no_progression("fixed-T2-a15", 2000, 41);
  const auto fit = fit_tumour(generate(s, 0), false);
  EXPECT_LT((fit.model.cov - s.cov).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((fit.model.intercepts - s.mean_base).cwiseAbs().maxCoeff(), 0.1);
}

TEST(FitTumour, MaximumBeatsGeneratingParameters) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scenario s = augbin::testing::seeded(seed % 2 ? "bor-T4-a15" : "fixed-T3-a25", seed);
    const auto data = generate(s, 0);
    const auto fit = fit_tumour(data, false);
    TumourModel truth;
    truth.intercepts = s.mean_base;
    truth.baseline_slope = 0.0;
    truth.cov = s.cov;
    EXPECT_GE(fit.loglik, tumour_loglik(data, truth) - 1e-9);
    EXPECT_NEAR(fit.loglik, tumour_loglik(data, fit.model), 1e-8);
    Eigen::LLT<Eigen::MatrixXd> llt(fit.model.cov);
    EXPECT_EQ(llt.info(), Eigen::Success);
  }
}

TEST(FitTumour, InsufficientData) {
  TrialDataset d;
  d.max_visits = 2;
  for (int i = 0; i < 10; ++i) d.patients.push_back(patient(1.0 + i, {1.0 + 0.9 * i}, {}, std::nullopt, "P" + std::to_string(i)));
  EXPECT_THROW(fit_tumour(d, false), InsufficientData);
  d.patients.resize(3);
  d.max_visits = 1;
  EXPECT_THROW(fit_tumour(d, false), InsufficientData);
}

TEST(FitLogistic, InterceptOnlyMatchesBinomialInformation) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution b(expit(-1.5));
  const int n = 100000;
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = b(rng);
  const auto f = fit_logistic(X, y);
  EXPECT_TRUE(f.converged);
  EXPECT_NEAR(f.coef[0], -1.5, 0.05);
  const double p = y.mean();
  EXPECT_NEAR(p, 0.18, 0.01);
  EXPECT_NEAR(f.coef[0], logit(p), 1e-8);
  EXPECT_NEAR(f.cov(0, 0), 1.0 / (n * p * (1 - p)), 1e-6 / n);
}

TEST(FitLogistic, SeparationIsFlaggedAndCapped) {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0.1, 1, 0.2, 1, 0.3, 1, 0.4, 1, 0.5, 1, 0.6;
  Eigen::VectorXd none = Eigen::VectorXd::Zero(6);
  const auto f0 = fit_logistic(X, none);
  EXPECT_TRUE(f0.separated);
  EXPECT_LE(f0.coef.cwiseAbs().maxCoeff(), 20.0);
  Eigen::VectorXd split(6);
  split << 0, 0, 0, 1, 1, 1;
  const auto f1 = fit_logistic(X, split);
  EXPECT_TRUE(f1.separated);
  EXPECT_LE(f1.coef.cwiseAbs().maxCoeff(), 20.0 + 1e-12);
}

TEST(FitProgression, RecoversSizeEffect) {
  Scenario s = preset("fixed-T2-a25");
  s.n = 20000;
  s.seed = 77;
  const auto data = generate(s, 0);
  const auto fit = assemble(data, false);
  const auto& L = fit.layout;
  for (int t = 1; t <= 2; ++t) {
    const double se = std::sqrt(fit.theta_cov(L.gamma(t), L.gamma(t)));
    EXPECT_LT(std::abs(fit.theta[L.gamma(t)] - 0.2), 3 * se) << t;
    EXPECT_LT(std::abs(fit.theta[L.alpha(t)] + 2.5), 3 * std::sqrt(fit.theta_cov(L.alpha(t), L.alpha(t)))) << t;
  }
}

TEST(FitProgression, NoEventsGiveSeparationWarning) {
  Scenario s = preset("fixed-T2-a15");
  s.alpha = -mvn::kInf;
  const auto fit = fit_progression(generate(s, 0), false);
  EXPECT_TRUE(fit.model.separated[0]);
  EXPECT_FALSE(fit.warnings.empty());
}

TEST(Assemble, ParameterCountsAndLayout) {
  EXPECT_EQ(augbin::testing::seeded("fixed-T2-a15", 1).visits, 2);
  EXPECT_EQ(assemble(generate(preset("fixed-T2-a15"), 0), false).theta.size(), 10);
  EXPECT_EQ(assemble(generate(preset("fixed-T4-a15"), 0), false).theta.size(), 23);
  EXPECT_EQ(assemble(generate(preset("bor-T4"), 0), true).theta.size(), 4 * 4 / 2 + 11 * 4 / 2 + 1);
  ParameterLayout L{3, false};
  const auto names = L.names();
  EXPECT_EQ(names.size(), static_cast<std::size_t>(L.size()));
  EXPECT_EQ(names[0], "m1");
  EXPECT_EQ(names[3], "b");
}

TEST(Assemble, PackUnpackRoundTrip) {
  std::mt19937_64 rng(8);
  const auto m = augbin::testing::random_model(4, rng, true, true);
  const auto tum = unpack_tumour(m.layout, m.theta);
  const auto prog = unpack_progression(m.layout, m.theta);
  EXPECT_LT((tum.cov - m.tumour.cov).norm(), 1e-12);
  EXPECT_LT((tum.intercepts - m.tumour.intercepts).norm(), 1e-15);
  EXPECT_LT((prog.size_effects - m.progression.size_effects).norm(), 1e-15);
  EXPECT_LT((pack(m.layout, tum, prog) - m.theta).norm(), 1e-12);
}

TEST(Assemble, CovarianceMatchesAnalyticLogisticInformation) {
  Scenario s = preset("fixed-T2-a15");
  s.n = 400;
  const auto data = generate(s, 0);
  const auto fit = assemble(data, false);
  // Rebuild the visit-1 logistic regression and use its analytic information.
  Eigen::MatrixXd X(data.patients.size(), 2);
  Eigen::VectorXd y(data.patients.size());
  Eigen::Index k = 0;
  for (const auto& p : data.patients) {
    if (p.last_observed() < 1) continue;
    X(k, 0) = 1.0;
    X(k, 1) = p.baseline;
    y[k++] = p.new_lesion[0];
  }
  const auto lf = fit_logistic(X.topRows(k), y.head(k));
  const auto& L = fit.layout;
  EXPECT_NEAR(fit.theta[L.alpha(1)], lf.coef[0], 1e-6);
  EXPECT_NEAR(fit.theta_cov(L.alpha(1), L.alpha(1)) / lf.cov(0, 0), 1.0, 0.01);
  EXPECT_NEAR(fit.theta_cov(L.gamma(1), L.gamma(1)) / lf.cov(1, 1), 1.0, 0.01);
  EXPECT_NEAR(fit.theta_cov(L.alpha(1), L.mvn_size() - 1), 0.0, 1e-12);
}

TEST(Assemble, ScoreVanishesAtMaximum) {
  const auto data = generate(augbin::testing::seeded("bor-T4-a25", 9), 0);
  const auto fit = assemble(data, false);
  std::vector<bool> mask(static_cast<std::size_t>(fit.theta.size()), true);
  for (int t = 1; t <= fit.layout.visits; ++t) {
    if (fit.progression.separated[t - 1]) {
      for (int j = fit.layout.alpha(t); j <= fit.layout.gamma(t); ++j) mask[j] = false;
    }
  }
  const auto g = fd_gradient([&](const Eigen::VectorXd& th) { return observed_loglik(data, fit.layout, th); },
                             fit.theta, mask);
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Assemble, SymmetricPositiveSemidefiniteCovariance) {
  const auto fit = assemble(generate(preset("bor-T4"), 3), true);
  EXPECT_LT((fit.theta_cov - fit.theta_cov.transpose()).norm(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.theta_cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(Properties, FitsAreInvariantToPatientOrder) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const bool two = seed % 4 == 0;
    const Scenario s = augbin::testing::seeded(two ? "bor-T4" : (seed % 2 ? "fixed-T3-a25" : "bor-T4-a15"), seed);
    TrialDataset data = generate(s, 0);
    AssembleOptions o;
    o.covariance = false;
    const auto a = assemble(data, two, o);
    std::mt19937_64 rng(seed);
    std::shuffle(data.patients.begin(), data.patients.end(), rng);
    const auto b = assemble(data, two, o);
    ASSERT_LT((a.theta - b.theta).cwiseAbs().maxCoeff(), 1e-10) << seed;
    Eigen::LLT<Eigen::MatrixXd> llt(a.tumour.cov);
    ASSERT_EQ(llt.info(), Eigen::Success);
  }
}

TEST(Report, KeyValueLines) {
  const auto fit = assemble(generate(preset("fixed-T2-a15"), 0), false);
  std::ostringstream out;
  write_report(out, fit);
  const std::string r = out.str();
  EXPECT_NE(r.find("visits=2\n"), std::string::npos);
  EXPECT_NE(r.find("theta.m1="), std::string::npos);
  EXPECT_NE(r.find("se.gamma2="), std::string::npos);
  EXPECT_NE(r.find("sigma.2.2="), std::string::npos);
}
