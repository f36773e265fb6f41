#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augbin/modelfit.hpp"
#include "augbin/normal.hpp"
#include "augbin/respprob.hpp"
#include "augbin/scenario.hpp"
#include "augbin/simharness.hpp"
#include "augbin/trialdata.hpp"

namespace augbin::testing {

inline PatientRecord patient(double z0, std::vector<double> sizes, std::vector<int> lesions = {},
                             std::optional<int> arm = std::nullopt, std::string id = "P1") {
  PatientRecord p;
  p.id = std::move(id);
  p.arm = arm;
  p.baseline = z0;
  if (lesions.empty()) lesions.assign(sizes.size(), 0);
  p.sizes = std::move(sizes);
  p.new_lesion = std::move(lesions);
  return p;
}

/// Single-arm scenario built on a preset with its seed replaced.
inline Scenario seeded(const std::string& name, std::uint64_t seed) {
  Scenario s = preset(name);
  s.seed = seed;
  return s;
}

struct MonteCarlo {
  double probability = 0.0;
  double std_error = 0.0;
};

/// Brute-force response probability of one patient under fixed parameters:
/// draws complete trajectories, stops them at progression and classifies the
/// resulting record with the observed-data rules.
inline MonteCarlo simulate_response(double z0, int arm, const TumourModel& tumour, const ProgressionModel& prog,
                                    const EndpointSpec& spec, bool growth_stops_follow_up, std::size_t draws,
                                    std::uint64_t seed) {
  const int T = tumour.visits();
  const Eigen::VectorXd mu = tumour.mean_for(z0, arm);
  const Eigen::MatrixXd L = tumour.cov.llt().matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::size_t hits = 0;
  Eigen::VectorXd e(T);
  for (std::size_t k = 0; k < draws; ++k) {
    for (int t = 0; t < T; ++t) e[t] = normal(rng);
    const Eigen::VectorXd y = mu + L * e;
    PatientRecord p;
    p.baseline = z0;
    double previous = z0;
    for (int t = 1; t <= T; ++t) {
      const int d = unif(rng) < prog.probability(t, previous, arm) ? 1 : 0;
      p.sizes.push_back(z0 * std::exp(y[t - 1]));
      p.new_lesion.push_back(d);
      if (d) break;
      if (growth_stops_follow_up && y[t - 1] > spec.growth) break;
      previous = p.sizes.back();
    }
    hits += static_cast<std::size_t>(observed_response(p, spec));
  }
  const double ph = static_cast<double>(hits) / static_cast<double>(draws);
  return {ph, std::sqrt(ph * (1.0 - ph) / static_cast<double>(draws))};
}

/// Random but well-conditioned parameters for T visits.
inline FittedModel random_model(int T, std::mt19937_64& rng, bool with_gamma, bool two_arm = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FittedModel m;
  m.layout = {T, two_arm};
  m.tumour.intercepts.resize(T);
  for (int t = 0; t < T; ++t) m.tumour.intercepts[t] = std::log(0.7) * (t + 1.0) / T + 0.2 * u(rng);
  m.tumour.baseline_slope = 0.3 * u(rng);
  if (two_arm) m.tumour.arm_effects = Eigen::VectorXd::Constant(T, 0.2 * u(rng));
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(T, T) * 0.3;
  m.tumour.cov = Eigen::MatrixXd::Identity(T, T) * 0.3;
  for (int s = 0; s < T; ++s)
    for (int t = 0; t < T; ++t) m.tumour.cov(s, t) += 0.4 * (std::min(s, t) + 1.0) / T;
  m.tumour.cov += A * A.transpose() * 0.2;
  m.progression.intercepts.resize(T);
  m.progression.size_effects.resize(T);
  if (two_arm) m.progression.arm_effects = Eigen::VectorXd::Zero(T);
  m.progression.separated.assign(static_cast<std::size_t>(T), false);
  for (int t = 0; t < T; ++t) {
    m.progression.intercepts[t] = -1.8 + 0.5 * u(rng);
    m.progression.size_effects[t] = with_gamma ? 0.4 + 0.3 * u(rng) : 0.0;
  }
  m.theta = pack(m.layout, m.tumour, m.progression);
  m.theta_cov = Eigen::MatrixXd::Zero(m.theta.size(), m.theta.size());
  return m;
}

}  // namespace augbin::testing
