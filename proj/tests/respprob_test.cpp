#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "augbin/errors.hpp"
#include "augbin/normal.hpp"
#include "augbin/respprob.hpp"
#include "augbin/simharness.hpp"
#include "support.hpp"

using namespace augbin;
using augbin::testing::patient;

namespace {

EndpointSpec endpoint(EndpointKind kind, int T) {
  EndpointSpec e;
  e.kind = kind;
  e.horizon = T;
  return e;
}

/// Simulated cohort truncated to T visits; supplies the trimmed hazards.
TrialDataset cohort(const PatientRecord& p, int T) {
  TrialDataset d = generate(preset("bor-T7-a15"), 0);
  d.max_visits = T;
  for (auto& q : d.patients) {
    if (q.last_observed() > T) {
      q.sizes.resize(T);
      q.new_lesion.resize(T);
    }
  }
  d.patients.front() = p;
  return d;
}

}  // namespace

TEST(ResponseTerms, Shapes) {
  const auto fixed = response_terms(endpoint(EndpointKind::fixed_time, 3));
  ASSERT_EQ(fixed.size(), 1u);
  EXPECT_EQ(fixed[0].survival_visits, 3);
  EXPECT_TRUE(std::isinf(fixed[0].region.upper[0]));
  EXPECT_NEAR(fixed[0].region.upper[2], std::log(0.7), 1e-15);
  const auto bor = response_terms(endpoint(EndpointKind::bor_unconfirmed, 4));
  ASSERT_EQ(bor.size(), 4u);
  EXPECT_EQ(bor[2].survival_visits, 3);
  EXPECT_NEAR(bor[2].region.lower[1], std::log(0.7), 1e-15);
  EXPECT_NEAR(bor[2].region.upper[1], std::log(1.2), 1e-15);
  EXPECT_TRUE(std::isinf(bor[2].region.upper[3]));
  EXPECT_EQ(response_terms(endpoint(EndpointKind::bor_confirmed, 4)).size(), 3u);
  EXPECT_TRUE(response_terms(endpoint(EndpointKind::bor_confirmed, 1)).empty());
}

TEST(Engines, EaugbinSingleVisitIsClosedForm) {
  std::mt19937_64 rng(1);
  auto m = augbin::testing::random_model(1, rng, true);
  const auto p = patient(0.6, {0.5});
  const double mu = m.tumour.mean_for(0.6, 0)[0], sd = std::sqrt(m.tumour.cov(0, 0));
  const double expected = (1 - m.progression.probability(1, 0.6, 0)) * norm_cdf((std::log(0.7) - mu) / sd);
  EXPECT_NEAR(prob_fixed_eaugbin(p, m, endpoint(EndpointKind::fixed_time, 1)), expected, 1e-6);
  EXPECT_NEAR(prob_bor_eaugbin(p, m, endpoint(EndpointKind::bor_unconfirmed, 1)), expected, 1e-6);
  EXPECT_THROW(prob_fixed_eaugbin(p, m, endpoint(EndpointKind::bor_unconfirmed, 1)), InvalidArgument);
}

TEST(Engines, EaugbinMatchesMonteCarloOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int c = 0; c < 4; ++c) {
    const int T = 2 + c % 2;
    const auto m = augbin::testing::random_model(T, rng, true);
    const double z0 = u(rng);
    const auto p = patient(z0, {z0});
    const auto fe = endpoint(EndpointKind::fixed_time, T);
    const auto be = endpoint(EndpointKind::bor_unconfirmed, T);
    const auto mf = augbin::testing::simulate_response(z0, 0, m.tumour, m.progression, fe, false, 200000, 10 + c);
    const auto mb = augbin::testing::simulate_response(z0, 0, m.tumour, m.progression, be, true, 200000, 20 + c);
    EXPECT_NEAR(prob_fixed_eaugbin(p, m, fe), mf.probability, 4 * mf.std_error + 1e-4) << c;
    EXPECT_NEAR(prob_bor_eaugbin(p, m, be), mb.probability, 4 * mb.std_error + 1e-4) << c;
  }
}

TEST(Engines, IndependenceLimitEaugbinEqualsMaug) {
  std::mt19937_64 rng(7);
  for (int c = 0; c < 4; ++c) {
    const int T = 2 + c;
    const auto m = augbin::testing::random_model(T, rng, false);
    const auto p = patient(0.5, {0.4});
    const auto d = cohort(p, T);
    const auto fe = endpoint(EndpointKind::fixed_time, T);
    const auto be = endpoint(EndpointKind::bor_unconfirmed, T);
    EXPECT_NEAR(prob_fixed_maug(p, m, fe, d), prob_fixed_eaugbin(p, m, fe), 2e-4) << T;
    EXPECT_NEAR(prob_bor_maug(p, m, be, d), prob_bor_eaugbin(p, m, be), 2e-4) << T;
  }
}

TEST(Engines, ProbabilitiesAreBoundedAndConfirmedIsSmaller) {
  std::mt19937_64 rng(99);
  for (int c = 0; c < 30; ++c) {
    const int T = 2 + c % 3;
    const auto m = augbin::testing::random_model(T, rng, c % 2 == 0);
    const auto p = patient(0.3 + 0.02 * c, {0.3});
    const auto d = cohort(p, T);
    for (auto kind : {EndpointKind::fixed_time, EndpointKind::bor_unconfirmed}) {
      const auto e = endpoint(kind, T);
      const double v = kind == EndpointKind::fixed_time ? prob_fixed_maug(p, m, e, d) : prob_bor_maug(p, m, e, d);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const double unconfirmed = prob_bor_maug(p, m, endpoint(EndpointKind::bor_unconfirmed, T), d);
    const double confirmed = prob_bor_maug(p, m, endpoint(EndpointKind::bor_confirmed, T), d);
    EXPECT_LE(confirmed, unconfirmed + 1e-6);
  }
}

TEST(Engines, BorAtLeastFixedTimeWhenNoGrowthBound) {
  // Fixed-time response with growth-bounded intermediate visits is one way of
  // responding first at some visit and staying in the window afterwards.
  std::mt19937_64 rng(4);
  const auto m = augbin::testing::random_model(3, rng, false);
  const auto p = patient(0.5, {0.5});
  const auto d = cohort(p, 3);
  auto fe = endpoint(EndpointKind::fixed_time, 3);
  fe.intermediate = IntermediateBound::growth;
  EXPECT_LE(prob_fixed_maug(p, m, fe, d), prob_bor_maug(p, m, endpoint(EndpointKind::bor_unconfirmed, 3), d) + 1e-6);
}

TEST(Evaluator, InterpolatedCurvesMatchDirectEvaluation) {
  // Terms with three or more bounded coordinates go through the shift
  // interpolation; compare with per-patient evaluation of the same terms.
  const auto data = generate(augbin::testing::seeded("bor-T5-a25", 5), 0);
  const auto fit = assemble(data, false);
  const auto spec = preset("bor-T5-a25").endpoint;
  const ResponseEvaluator ev(data, fit, spec, Method::maug);
  const auto pp = ev.per_patient(fit.theta);
  for (std::size_t i = 0; i < data.patients.size(); i += 7) {
    EXPECT_NEAR(pp[i], prob_bor_maug(data.patients[i], fit, spec, data), 2e-5) << i;
  }
  EXPECT_NEAR(ev.mean(fit.theta), mean_response(data, fit, spec, Method::maug), 1e-12);
}

TEST(Evaluator, MeanIsDeterministicAndBinMatchesObservedRate) {
  const auto data = generate(augbin::testing::seeded("fixed-T3-a15", 12), 0);
  const auto fit = assemble(data, false);
  const auto spec = preset("fixed-T3-a15").endpoint;
  const ResponseEvaluator a(data, fit, spec, Method::eaugbin);
  const ResponseEvaluator b(data, fit, spec, Method::eaugbin);
  EXPECT_EQ(a.mean(fit.theta), b.mean(fit.theta));
  const ResponseEvaluator bin(data, fit, spec, Method::bin);
  double rate = 0;
  for (const auto& p : data.patients) rate += observed_response(p, spec);
  EXPECT_DOUBLE_EQ(bin.mean(fit.theta), rate / data.patients.size());
}

TEST(Evaluator, TwoArmDifferenceAndNullSymmetry) {
  const auto data = generate(preset("bor-T4"), 1);
  const auto fit = assemble(data, true);
  const auto spec = preset("bor-T4").endpoint;
  const ResponseEvaluator ev(data, fit, spec, Method::maug);
  EXPECT_NEAR(ev.difference(fit.theta), ev.mean(fit.theta, 1) - ev.mean(fit.theta, 0), 1e-15);
  // With every arm parameter at zero the two arms are indistinguishable.
  Eigen::VectorXd theta = fit.theta;
  for (int t = 1; t <= fit.layout.visits; ++t) {
    theta[fit.layout.arm_effect(t)] = 0.0;
    theta[fit.layout.beta(t)] = 0.0;
  }
  EXPECT_NEAR(ev.difference(theta), 0.0, 1e-12);
}

TEST(Evaluator, RejectsMismatchedModel) {
  const auto data = generate(preset("fixed-T2-a15"), 0);
  const auto fit = assemble(data, false);
  EXPECT_THROW(ResponseEvaluator(data, fit, endpoint(EndpointKind::fixed_time, 3), Method::maug), InvalidArgument);
  EXPECT_THROW(parse_method("best"), InvalidArgument);
  EXPECT_THROW(parse_endpoint_kind("pfs"), InvalidArgument);
}
