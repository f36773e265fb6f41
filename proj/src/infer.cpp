#include "augbin/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "augbin/detail/parallel.hpp"
#include "augbin/errors.hpp"
#include "augbin/normal.hpp"

namespace augbin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kBoundary = 1e-6;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
}

std::vector<bool> nonzero_rows(const Eigen::MatrixXd& cov) {
  std::vector<bool> mask(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index j = 0; j < cov.rows(); ++j) mask[j] = cov.row(j).cwiseAbs().maxCoeff() > 0.0;
  return mask;
}

double quadratic_form(const Eigen::VectorXd& g, const Eigen::MatrixXd& cov) {
  return std::max(0.0, g.dot(cov * g));
}

double observed_difference(const std::vector<int>& outcome, const std::vector<int>& arms) {
  double sum[2] = {0.0, 0.0};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    sum[arms[i]] += outcome[i];
    ++count[arms[i]];
  }
  if (count[0] == 0 || count[1] == 0) throw InvalidArgument("both arms need at least one patient");
  return sum[1] / count[1] - sum[0] / count[0];
}

}  // namespace

double wald_p_value(double statistic) {
  if (std::isnan(statistic)) return kNaN;
  return std::clamp(2.0 * norm_cdf(-std::abs(statistic)), 0.0, 1.0);
}

Interval wilson_ci(int successes, int n, double alpha) {
  if (n < 1 || successes < 0 || successes > n) throw InvalidArgument("Wilson interval needs 0 <= successes <= n, n >= 1");
  check_alpha(alpha);
  const double z = norm_quantile(1.0 - 0.5 * alpha);
  const double nn = n, p = successes / nn, z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (successes == 0) ci.lower = 0.0;
  if (successes == n) ci.upper = 1.0;
  return ci;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                            const std::vector<bool>& mask, const DeltaOptions& options) {
  if (static_cast<Eigen::Index>(mask.size()) != x.size()) throw InvalidArgument("gradient mask has the wrong length");
  std::vector<Eigen::Index> coords;
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (mask[j]) coords.push_back(j);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  detail::parallel_for(coords.size(), options.threads, [&](std::size_t k) {
    const Eigen::Index j = coords[k];
    const double h = options.rel_step * std::max(1.0, std::abs(x[j]));
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (f(xp) - f(xm)) / (2.0 * h);
  });
  return g;
}

ResponseEstimate ci_logit_delta(const ResponseEvaluator& ev, const Eigen::MatrixXd& theta_cov, double alpha,
                                const DeltaOptions& options) {
  check_alpha(alpha);
  const Eigen::VectorXd& theta = ev.theta();
  if (theta_cov.rows() != theta.size() || theta_cov.cols() != theta.size()) {
    throw InvalidArgument("theta covariance does not match theta");
  }
  ResponseEstimate est;
  est.method = ev.method();
  est.per_patient = ev.per_patient(theta);
  est.warnings = ev.warnings();
  double sum = 0.0;
  for (double v : est.per_patient) sum += v;
  const int n = static_cast<int>(est.per_patient.size());
  const double m = sum / n;
  est.mean_probability = m;

  int responders = 0;
  for (int v : ev.observed()) responders += v;
  auto wilson = [&] {
    est.ci = wilson_ci(responders, n, alpha);
    const double p = static_cast<double>(responders) / n;
    est.std_error = std::sqrt(p * (1.0 - p) / n);
    est.logit_variance = (p > 0.0 && p < 1.0) ? 1.0 / (n * p * (1.0 - p)) : 0.0;
  };
  if (ev.method() == Method::bin) {
    wilson();
    return est;
  }
  if (m <= kBoundary || m >= 1.0 - kBoundary) {
    est.wilson_fallback = true;
    est.warnings.push_back("estimated probability at the boundary; Wilson interval of the observed outcome used");
    wilson();
    est.ci.lower = std::min(est.ci.lower, m);
    est.ci.upper = std::max(est.ci.upper, m);
    return est;
  }
  auto logit_mean = [&](const Eigen::VectorXd& th) {
    const double p = std::clamp(ev.mean(th), 1e-300, 1.0 - 1e-16);
    return logit(p);
  };
  const Eigen::VectorXd g = fd_gradient(logit_mean, theta, nonzero_rows(theta_cov), options);
  est.logit_variance = quadratic_form(g, theta_cov);
  const double z = norm_quantile(1.0 - 0.5 * alpha);
  const double l = logit(m), half = z * std::sqrt(est.logit_variance);
  est.ci = {expit(l - half), expit(l + half)};
  est.std_error = m * (1.0 - m) * std::sqrt(est.logit_variance);
  return est;
}

ResponseEstimate ci_logit_delta(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec,
                                Method method, double alpha, const QuadratureSettings& settings,
                                const DeltaOptions& options) {
  const ResponseEvaluator ev(data, model, spec, method, settings);
  return ci_logit_delta(ev, model.theta_cov, alpha, options);
}

TestResult bin_two_arm_test(const TrialDataset& data, const EndpointSpec& spec) {
  if (!data.two_arm()) throw InvalidArgument("two-arm test needs a two-arm dataset");
  const auto n = static_cast<Eigen::Index>(data.patients.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = data.patients[i];
    X(i, 0) = 1.0;
    X(i, 1) = p.arm_or_zero();
    X(i, 2) = p.baseline;
    y[i] = observed_response(p, spec);
  }
  const LogisticFit fit = fit_logistic(X, y);
  TestResult r;
  r.method = "bin";
  r.estimate = fit.coef[1];
  r.std_error = std::sqrt(std::max(0.0, fit.cov(1, 1)));
  r.separated = fit.separated;
  if (fit.separated) r.warnings.push_back("separation in the logistic regression of the binary endpoint");
  r.statistic = r.std_error > 0.0 ? r.estimate / r.std_error : 0.0;
  r.p_value = wald_p_value(r.statistic);
  return r;
}

TestResult wald_difference_test(const ResponseEvaluator& ev, const Eigen::MatrixXd& theta_cov,
                                const DeltaOptions& options) {
  if (ev.method() == Method::bin) throw InvalidArgument("use bin_two_arm_test for the binary method");
  const Eigen::VectorXd& theta = ev.theta();
  TestResult r;
  r.method = to_string(ev.method());
  r.warnings = ev.warnings();
  r.estimate = ev.difference(theta);
  auto diff = [&](const Eigen::VectorXd& th) { return ev.difference(th); };
  const Eigen::VectorXd g = fd_gradient(diff, theta, nonzero_rows(theta_cov), options);
  r.std_error = std::sqrt(quadratic_form(g, theta_cov));
  if (r.estimate == 0.0) {
    r.statistic = 0.0;
  } else if (r.std_error > 0.0) {
    r.statistic = r.estimate / r.std_error;
  } else {
    r.statistic = r.estimate > 0.0 ? HUGE_VAL : -HUGE_VAL;
    r.warnings.push_back("zero standard error for a nonzero difference");
  }
  r.p_value = wald_p_value(r.statistic);
  return r;
}

TestResult wald_difference_test(const TrialDataset& data, const FittedModel& model, const EndpointSpec& spec,
                                Method method, const QuadratureSettings& settings, const DeltaOptions& options) {
  const ResponseEvaluator ev(data, model, spec, method, settings);
  return wald_difference_test(ev, model.theta_cov, options);
}

PermutationResult permutation_test(const TrialDataset& data, const EndpointSpec& spec, Method method,
                                   const PermutationOptions& options) {
  if (method == Method::bin) return permutation_test(data, FittedModel{}, spec, method, options);
  AssembleOptions fit_options;
  fit_options.covariance = options.wald;
  const FittedModel fit = assemble(data, true, fit_options);
  return permutation_test(data, fit, spec, method, options);
}

PermutationResult permutation_test(const TrialDataset& data, const FittedModel& fit, const EndpointSpec& spec,
                                   Method method, const PermutationOptions& options) {
  if (!data.two_arm()) throw InvalidArgument("permutation test needs a two-arm dataset");
  if (options.n_perm < 100) throw InvalidArgument("at least 100 permutations are required");
  check_alpha(options.alpha);
  std::vector<int> arms, outcome;
  for (const auto& p : data.patients) {
    arms.push_back(p.arm_or_zero());
    outcome.push_back(observed_response(p, spec));
  }

  struct Outcome {
    double statistic = kNaN;
    double wald_p = kNaN;
  };
  auto evaluate = [&](const TrialDataset& d, const std::vector<int>& labels, const FittedModel* warm) {
    Outcome o;
    if (method == Method::bin) {
      o.statistic = observed_difference(outcome, labels);
      if (options.wald) o.wald_p = bin_two_arm_test(d, spec).p_value;
      return o;
    }
    AssembleOptions fo;
    fo.covariance = options.wald;
    fo.warm_start = warm;
    const FittedModel f = warm ? assemble(d, true, fo) : fit;
    const ResponseEvaluator ev(d, f, spec, method, options.quadrature);
    o.statistic = ev.difference(f.theta);
    if (options.wald) o.wald_p = wald_difference_test(ev, f.theta_cov).p_value;
    return o;
  };

  PermutationResult result;
  result.observed = evaluate(data, arms, nullptr).statistic;
  const auto B = static_cast<std::size_t>(options.n_perm);
  std::vector<Outcome> outcomes(B);
  detail::parallel_for(B, options.threads, [&](std::size_t b) {
    std::mt19937_64 rng(detail::stream_seed(options.seed, b));
    std::vector<int> labels = arms;
    std::shuffle(labels.begin(), labels.end(), rng);
    TrialDataset perm = data;
    for (std::size_t i = 0; i < labels.size(); ++i) perm.patients[i].arm = labels[i];
    try {
      outcomes[b] = evaluate(perm, labels, &fit);
    } catch (const Error&) {
      outcomes[b] = Outcome{};
    }
  });

  int valid = 0, extreme = 0, rejected = 0, wald_valid = 0;
  for (const auto& o : outcomes) {
    result.statistics.push_back(o.statistic);
    if (options.wald) result.wald_p.push_back(o.wald_p);
    if (std::isnan(o.statistic)) {
      ++result.failures;
      continue;
    }
    ++valid;
    if (std::abs(o.statistic) >= std::abs(result.observed)) ++extreme;
    if (options.wald && !std::isnan(o.wald_p)) {
      ++wald_valid;
      if (o.wald_p < options.alpha) ++rejected;
    }
  }
  if (result.failures > options.max_failure_rate * static_cast<double>(B)) {
    throw TooManyFailures(std::to_string(result.failures) + " of " + std::to_string(B) + " permutation refits failed");
  }
  result.p_value = (1.0 + extreme) / (1.0 + valid);
  result.wald_rejection_rate = wald_valid > 0 ? static_cast<double>(rejected) / wald_valid : kNaN;
  return result;
}

}  // namespace augbin
