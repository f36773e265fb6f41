#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augbin/trialdata.hpp"

namespace augbin {

/// Index map of the flat parameter vector theta.
///
///   [ m_1..m_T | b | a_1..a_T (two-arm) | log-Cholesky of Sigma | per visit t: alpha_t, beta_t (two-arm), gamma_t ]
///
/// The log-Cholesky block lists the lower triangle of L (Sigma = L L^T) row by
/// row, storing log(L_ii) on the diagonal and L_ij below it.
struct ParameterLayout {
  int visits = 0;
  bool two_arm = false;

  int intercept(int t) const { return t - 1; }
  int slope() const { return visits; }
  int arm_effect(int t) const { return visits + t; }
  int chol_begin() const { return visits + 1 + (two_arm ? visits : 0); }
  int chol(int i, int j) const { return chol_begin() + i * (i + 1) / 2 + j; }  // 0-based, j <= i
  int mvn_size() const { return chol_begin() + visits * (visits + 1) / 2; }
  int per_visit() const { return two_arm ? 3 : 2; }
  int alpha(int t) const { return mvn_size() + (t - 1) * per_visit(); }
  int beta(int t) const { return alpha(t) + 1; }
  int gamma(int t) const { return alpha(t) + per_visit() - 1; }
  int size() const { return mvn_size() + visits * per_visit(); }

  std::vector<std::string> names() const;
};

/// Y | z0, R ~ N(m + b z0 + a R, Sigma).
struct TumourModel {
  Eigen::VectorXd intercepts;
  double baseline_slope = 0.0;
  Eigen::VectorXd arm_effects;  // empty for single-arm
  Eigen::MatrixXd cov;

  int visits() const { return static_cast<int>(intercepts.size()); }
  Eigen::VectorXd mean_for(double baseline, int arm) const;
};

/// logit Pr(D_t = 1 | at risk) = alpha_t + beta_t R + gamma_t z_{t-1}.
struct ProgressionModel {
  Eigen::VectorXd intercepts;
  Eigen::VectorXd arm_effects;  // empty for single-arm
  Eigen::VectorXd size_effects;
  std::vector<bool> separated;

  int visits() const { return static_cast<int>(intercepts.size()); }
  double linear_predictor(int t, double previous_size, int arm) const;
  double probability(int t, double previous_size, int arm) const;
};

struct FittedModel {
  TumourModel tumour;
  ProgressionModel progression;
  ParameterLayout layout;
  Eigen::VectorXd theta;
  Eigen::MatrixXd theta_cov;
  double loglik_tumour = 0.0;
  double loglik_progression = 0.0;
  std::vector<std::string> warnings;
};

Eigen::VectorXd pack(const ParameterLayout& layout, const TumourModel& tumour, const ProgressionModel& progression);
TumourModel unpack_tumour(const ParameterLayout& layout, const Eigen::VectorXd& theta);
ProgressionModel unpack_progression(const ParameterLayout& layout, const Eigen::VectorXd& theta);

struct LogisticOptions {
  double score_tol = 1e-8;
  int max_iterations = 50;
  double coefficient_cap = 20.0;
};

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;  // inverse observed information at coef
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separated = false;
};

/// Newton-Raphson maximum likelihood for a logistic regression. Complete or
/// quasi-complete separation is flagged and the coefficients capped.
LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& outcome,
                         const Eigen::VectorXd* start = nullptr, const LogisticOptions& options = {});

struct TumourFit {
  TumourModel model;
  double loglik = 0.0;
};

/// Exact maximum likelihood under monotone missingness. For a fixed common
/// slope b the likelihood factors into sequential regressions of
/// y_t - b z0 on (1, [R], earlier y - b z0); the remaining one-dimensional
/// profile in b is solved from its closed-form score.
TumourFit fit_tumour(const TrialDataset& data, bool two_arm, const TumourModel* warm_start = nullptr);

struct ProgressionFit {
  ProgressionModel model;
  double loglik = 0.0;
  std::vector<std::string> warnings;
};

ProgressionFit fit_progression(const TrialDataset& data, bool two_arm, const ProgressionModel* warm_start = nullptr,
                               const LogisticOptions& options = {});

double tumour_loglik(const TrialDataset& data, const TumourModel& model);
double progression_loglik(const TrialDataset& data, const ProgressionModel& model);
double observed_loglik(const TrialDataset& data, const ParameterLayout& layout, const Eigen::VectorXd& theta);

struct AssembleOptions {
  double hessian_rel_step = 1e-4;
  bool covariance = true;  // false leaves theta_cov at zero
  const FittedModel* warm_start = nullptr;
  LogisticOptions logistic;
};

/// Fits both models, packs theta and estimates its covariance from the
/// numerical observed information.
FittedModel assemble(const TrialDataset& data, bool two_arm, const AssembleOptions& options = {});

/// key=value audit report of a fitted model.
void write_report(std::ostream& out, const FittedModel& model);

}  // namespace augbin
