#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augbin/modelfit.hpp"
#include "augbin/respprob.hpp"

namespace augbin {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Wilson score interval for a binomial proportion.
Interval wilson_ci(int successes, int n, double alpha = 0.05);

struct ResponseEstimate {
  Method method = Method::maug;
  double mean_probability = 0.0;
  double logit_variance = 0.0;
  double std_error = 0.0;  // probability scale
  Interval ci;
  bool wilson_fallback = false;
  std::vector<double> per_patient;
  std::vector<std::string> warnings;
};

struct TestResult {
  std::string method;
  double estimate = 0.0;
  double std_error = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  bool separated = false;
  std::vector<std::string> warnings;
};

struct DeltaOptions {
  double rel_step = 1e-5;  // step rel_step * max(1, |theta_j|)
  int threads = 1;
};

/// Central-difference gradient of f at x. Coordinates with mask[j] false are
/// skipped (left at zero). Coordinates may be evaluated in parallel; the
/// result does not depend on the thread count.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            const std::vector<bool>& mask, const DeltaOptions& options = {});

/// Estimate and confidence interval of the trial-mean response probability.
/// Model-based methods use the delta method on the logit scale; the binary
/// method (and any boundary estimate) uses the Wilson interval.
ResponseEstimate ci_logit_delta(const ResponseEvaluator& evaluator, const Eigen::MatrixXd& theta_cov,
                                double alpha = 0.05, const DeltaOptions& options = {});
ResponseEstimate ci_logit_delta(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec,
                                Method method, double alpha = 0.05, const QuadratureSettings& settings = {},
                                const DeltaOptions& options = {});

/// Wald test of the treatment coefficient in a logistic regression of the
/// observed binary endpoint on arm and baseline size.
TestResult bin_two_arm_test(const TrialDataset& data, const EndpointSpec& spec);

/// Wald test of the difference in mean response probability between arms.
TestResult wald_difference_test(const ResponseEvaluator& evaluator, const Eigen::MatrixXd& theta_cov,
                                const DeltaOptions& options = {});
TestResult wald_difference_test(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec,
                                Method method, const QuadratureSettings& settings = {},
                                const DeltaOptions& options = {});

/// Two-sided p-value of a standard normal statistic.
double wald_p_value(double statistic);

struct PermutationOptions {
  int n_perm = 999;
  std::uint64_t seed = 1;
  int threads = 1;
  double max_failure_rate = 0.05;
  bool wald = false;  // also run the Wald test on every permuted dataset
  double alpha = 0.05;
  QuadratureSettings quadrature;
};

struct PermutationResult {
  double observed = 0.0;
  double p_value = 1.0;
  std::vector<double> statistics;  // NaN where the refit failed
  std::vector<double> wald_p;      // per permutation when requested, NaN on failure
  int failures = 0;
  double wald_rejection_rate = 0.0;
};

/// Shuffles arm labels, refits and recomputes the arm difference. The
/// statistic is the model-based difference in mean response for mAug and
/// eAugbin and the difference in observed response rates for bin.
PermutationResult permutation_test(const TrialDataset& data, const EndpointSpec& spec, Method method,
                                   const PermutationOptions& options = {});

/// Same as permutation_test but reuses a fit of the unpermuted data.
PermutationResult permutation_test(const TrialDataset& data, const FittedModel& fit, const EndpointSpec& spec,
                                   Method method, const PermutationOptions& options = {});

}  // namespace augbin
