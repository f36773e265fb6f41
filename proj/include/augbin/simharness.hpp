#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "augbin/infer.hpp"
#include "augbin/scenario.hpp"
#include "augbin/trialdata.hpp"

namespace augbin {

/// Simulated trial for one replicate; a pure function of (scenario, replicate).
TrialDataset generate(const Scenario& scenario, std::uint64_t replicate);

struct TrueProbability {
  double probability = 0.0;
  double std_error = 0.0;
  std::size_t patients = 0;
};

/// Monte-Carlo response rate of the scenario's data-generating process under
/// `endpoint`, classifying simulated patients exactly as observed data are.
/// Two-arm scenarios use the given arm.
TrueProbability true_probability(const Scenario& scenario, const EndpointSpec& endpoint,
                                 std::size_t patients = 10'000'000, int arm = 0, int threads = 1);

struct RunOptions {
  int reps = 500;
  int threads = 1;
  std::vector<Method> methods{Method::bin, Method::maug};
  double alpha = 0.05;
  QuadratureSettings quadrature;
  DeltaOptions delta;
  std::size_t truth_patients = 10'000'000;
  double max_failure_rate = 0.02;
  std::uint64_t replicate_offset = 0;
  std::function<void(int done, int total)> progress;
};

struct MethodSummary {
  Method method = Method::bin;
  double mean_estimate = 0.0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double width_reduction = 0.0;  // mean over replicates of 1 - width / Wilson width
};

struct ReplicateEstimate {
  int replicate = 0;
  Method method = Method::bin;
  double estimate = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

struct OperatingCharacteristics {
  std::string scenario;
  EndpointSpec endpoint;
  TrueProbability truth;
  int replicates = 0;
  int failures = 0;
  std::vector<MethodSummary> methods;
  std::vector<ReplicateEstimate> estimates;
};

/// Replicate loop for a single-arm scenario: generate, fit, estimate with CI
/// for each method, then aggregate against the true probability. Failed
/// replicates are excluded and counted; more than max_failure_rate of them
/// raises TooManyFailures.
OperatingCharacteristics run_single_arm(const Scenario& scenario, const RunOptions& options = {});

struct PowerPoint {
  double tau = 0.0;
  double psi = 0.0;
  Method method = Method::bin;
  double power = 0.0;
  double std_error = 0.0;
  int replicates = 0;
  int failures = 0;
};

/// Rejection rate of the two-sided level-alpha test per grid point and
/// method. Replicate streams are shared across grid points.
std::vector<PowerPoint> run_two_arm_power(const Scenario& scenario, const std::vector<double>& taus,
                                          const std::vector<double>& psis, const RunOptions& options = {});

struct TimingResult {
  Method method = Method::bin;
  double median_seconds = 0.0;
  int replicates = 0;
};

/// Median wall time per replicate of fitting plus estimation for each
/// method on identical simulated datasets.
std::vector<TimingResult> timing_probe(const Scenario& scenario, const std::vector<Method>& methods, int reps = 5,
                                       bool with_interval = true, const QuadratureSettings& quadrature = {});

/// Grid "a:b:step" (inclusive of b up to rounding) or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

}  // namespace augbin
