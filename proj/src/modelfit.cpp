#include "augbin/modelfit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include <boost/math/tools/roots.hpp>

#include "augbin/errors.hpp"
#include "augbin/normal.hpp"

namespace augbin {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

int arm_of(const PatientRecord& p) { return p.arm_or_zero(); }

/// Numerical Hessian by central differences, step rel_step * max(1, |x_j|).
Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                double rel_step) {
  const Eigen::Index p = x.size();
  Eigen::VectorXd h(p);
  for (Eigen::Index j = 0; j < p; ++j) h[j] = rel_step * std::max(1.0, std::abs(x[j]));
  Eigen::MatrixXd H(p, p);
  const double f0 = f(x);
  Eigen::VectorXd xx = x;
  for (Eigen::Index j = 0; j < p; ++j) {
    xx[j] = x[j] + h[j];
    const double fp = f(xx);
    xx[j] = x[j] - h[j];
    const double fm = f(xx);
    xx[j] = x[j];
    H(j, j) = (fp - 2.0 * f0 + fm) / (h[j] * h[j]);
    for (Eigen::Index k = 0; k < j; ++k) {
      double acc = 0.0;
      for (int sj : {1, -1}) {
        for (int sk : {1, -1}) {
          xx[j] = x[j] + sj * h[j];
          xx[k] = x[k] + sk * h[k];
          acc += sj * sk * f(xx);
        }
      }
      xx[j] = x[j];
      xx[k] = x[k];
      H(j, k) = H(k, j) = acc / (4.0 * h[j] * h[k]);
    }
  }
  return H;
}

/// Inverse of a symmetric information matrix; falls back to the
/// pseudo-inverse when it is not positive definite.
Eigen::MatrixXd invert_information(const Eigen::MatrixXd& info, bool& singular) {
  const Eigen::MatrixXd sym = 0.5 * (info + info.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const auto& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * std::max(top, 1e-300);
  singular = ev.minCoeff() <= tol;
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) inv[i] = ev[i] > tol ? 1.0 / ev[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

/// Log ratios and covariates laid out once per dataset.
struct Prepared {
  int visits = 0;
  std::vector<Eigen::VectorXd> y;  // per patient, length F_i
  std::vector<double> z0;
  std::vector<int> arm;
  std::vector<std::vector<int>> observed_at;  // visit t (1-based) -> patients with F >= t

  Prepared(const TrialDataset& data) : visits(data.max_visits) {
    observed_at.assign(visits + 1, {});
    for (std::size_t i = 0; i < data.patients.size(); ++i) {
      const auto& p = data.patients[i];
      const auto lr = log_ratios(p);
      y.emplace_back(Eigen::Map<const Eigen::VectorXd>(lr.data(), static_cast<Eigen::Index>(lr.size())));
      z0.push_back(p.baseline);
      arm.push_back(arm_of(p));
      for (int t = 1; t <= std::min(p.last_observed(), visits); ++t) observed_at[t].push_back(static_cast<int>(i));
    }
  }
};

struct VisitRegression {
  Eigen::VectorXd coef;  // [intercept, (arm), phi_1..phi_{t-1}]
  double rss = 0.0;
  int n = 0;
};

struct ProfilePoint {
  double loglik = 0.0;
  double score = 0.0;
  std::vector<VisitRegression> regs;
};

ProfilePoint profile(const Prepared& P, double b, bool two_arm) {
  ProfilePoint out;
  const int cov_cols = two_arm ? 2 : 1;
  for (int t = 1; t <= P.visits; ++t) {
    const auto& rows = P.observed_at[t];
    const int n = static_cast<int>(rows.size());
    const int k = cov_cols + (t - 1);
    if (n <= k || n < 2) {
      throw InsufficientData("visit " + std::to_string(t) + " is observed for " + std::to_string(n) +
                             " patients; at least " + std::to_string(std::max(k + 1, 2)) + " are needed");
    }
    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd r(n), z(n);
    for (int row = 0; row < n; ++row) {
      const int i = rows[row];
      X(row, 0) = 1.0;
      if (two_arm) X(row, 1) = P.arm[i];
      for (int s = 1; s < t; ++s) X(row, cov_cols + s - 1) = P.y[i][s - 1] - b * P.z0[i];
      r[row] = P.y[i][t - 1] - b * P.z0[i];
      z[row] = P.z0[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < k) throw SingularDesign("collinear regressors at visit " + std::to_string(t));
    VisitRegression reg;
    reg.coef = qr.solve(r);
    const Eigen::VectorXd e = r - X * reg.coef;
    reg.rss = e.squaredNorm();
    reg.n = n;
    if (!(reg.rss > 0.0)) throw SingularDesign("zero residual variance at visit " + std::to_string(t));
    const double phi_sum = reg.coef.tail(t - 1).sum();
    out.loglik += -0.5 * n * (kLog2Pi + std::log(reg.rss / n) + 1.0);
    out.score += n * (1.0 - phi_sum) * e.dot(z) / reg.rss;
    out.regs.push_back(std::move(reg));
  }
  return out;
}

TumourModel recompose(const std::vector<VisitRegression>& regs, double b, bool two_arm) {
  const int T = static_cast<int>(regs.size());
  const int cov_cols = two_arm ? 2 : 1;
  TumourModel m;
  m.intercepts = Eigen::VectorXd::Zero(T);
  if (two_arm) m.arm_effects = Eigen::VectorXd::Zero(T);
  m.baseline_slope = b;
  m.cov = Eigen::MatrixXd::Zero(T, T);
  for (int t = 0; t < T; ++t) {
    const auto& c = regs[t].coef;
    const Eigen::VectorXd phi = c.tail(t);
    m.intercepts[t] = c[0] + (t > 0 ? phi.dot(m.intercepts.head(t)) : 0.0);
    if (two_arm) m.arm_effects[t] = c[1] + (t > 0 ? phi.dot(m.arm_effects.head(t)) : 0.0);
    const double sigma2 = regs[t].rss / regs[t].n;
    if (t == 0) {
      m.cov(0, 0) = sigma2;
      continue;
    }
    const Eigen::MatrixXd prev = m.cov.topLeftCorner(t, t);
    const Eigen::VectorXd cross = prev * phi;
    m.cov.block(t, 0, 1, t) = cross.transpose();
    m.cov.block(0, t, t, 1) = cross;
    m.cov(t, t) = sigma2 + phi.dot(cross);
  }
  (void)cov_cols;
  return m;
}

/// Slope and standard error of the first-visit regression on (1, [R], z0).
std::pair<double, double> initial_slope(const Prepared& P, bool two_arm) {
  const auto& rows = P.observed_at[1];
  const int n = static_cast<int>(rows.size());
  const int k = two_arm ? 3 : 2;
  if (n <= k) throw InsufficientData("too few patients observed at visit 1");
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  for (int row = 0; row < n; ++row) {
    const int i = rows[row];
    X(row, 0) = 1.0;
    if (two_arm) X(row, 1) = P.arm[i];
    X(row, k - 1) = P.z0[i];
    y[row] = P.y[i][0];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k) throw SingularDesign("baseline size is collinear with the other regressors");
  const Eigen::VectorXd coef = qr.solve(y);
  const double s2 = (y - X * coef).squaredNorm() / std::max(1, n - k);
  const Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  return {coef[k - 1], std::sqrt(std::max(s2 * xtx_inv(k - 1, k - 1), 0.0))};
}

/// Exact observed-data log-likelihood of the tumour model, patient by patient.
class TumourLikelihood {
 public:
  TumourLikelihood(const TrialDataset& data) : P_(data) {}

  double operator()(const TumourModel& m) const {
    const int T = P_.visits;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
    std::vector<double> logdet;
    for (int f = 1; f <= T; ++f) {
      chol.emplace_back(m.cov.topLeftCorner(f, f));
      if (chol.back().info() != Eigen::Success) return -HUGE_VAL;
      logdet.push_back(2.0 * chol.back().matrixLLT().diagonal().array().log().sum());
    }
    double ll = 0.0;
    for (std::size_t i = 0; i < P_.y.size(); ++i) {
      const int f = std::min(static_cast<int>(P_.y[i].size()), T);
      if (f == 0) continue;
      Eigen::VectorXd r = P_.y[i].head(f) - m.intercepts.head(f) - Eigen::VectorXd::Constant(f, m.baseline_slope * P_.z0[i]);
      if (m.arm_effects.size() > 0 && P_.arm[i] == 1) r -= m.arm_effects.head(f);
      const Eigen::VectorXd w = chol[f - 1].matrixL().solve(r);
      ll += -0.5 * (f * kLog2Pi + logdet[f - 1] + w.squaredNorm());
    }
    return ll;
  }

 private:
  Prepared P_;
};

struct VisitDesign {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

VisitDesign progression_design(const TrialDataset& data, int t, bool two_arm) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < data.patients.size(); ++i) {
    if (data.patients[i].last_observed() >= t) rows.push_back(static_cast<int>(i));
  }
  const int n = static_cast<int>(rows.size());
  const int k = two_arm ? 3 : 2;
  VisitDesign d{Eigen::MatrixXd(n, k), Eigen::VectorXd(n)};
  for (int row = 0; row < n; ++row) {
    const auto& p = data.patients[rows[row]];
    d.X(row, 0) = 1.0;
    if (two_arm) d.X(row, 1) = arm_of(p);
    d.X(row, k - 1) = p.size_at(t - 1);
    d.y[row] = p.new_lesion[t - 1];
  }
  return d;
}

double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& coef) {
  const Eigen::VectorXd eta = X * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] > 0.5 ? log_expit(eta[i]) : log_expit(-eta[i]);
  return ll;
}

}  // namespace

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out(size());
  for (int t = 1; t <= visits; ++t) out[intercept(t)] = "m" + std::to_string(t);
  out[slope()] = "b";
  if (two_arm) {
    for (int t = 1; t <= visits; ++t) out[arm_effect(t)] = "a" + std::to_string(t);
  }
  for (int i = 0; i < visits; ++i) {
    for (int j = 0; j <= i; ++j) {
      const std::string idx = std::to_string(i + 1) + std::to_string(j + 1);
      out[chol(i, j)] = i == j ? "logL" + idx : "L" + idx;
    }
  }
  for (int t = 1; t <= visits; ++t) {
    out[alpha(t)] = "alpha" + std::to_string(t);
    if (two_arm) out[beta(t)] = "beta" + std::to_string(t);
    out[gamma(t)] = "gamma" + std::to_string(t);
  }
  return out;
}

Eigen::VectorXd TumourModel::mean_for(double baseline, int arm) const {
  Eigen::VectorXd mu = intercepts.array() + baseline_slope * baseline;
  if (arm_effects.size() > 0 && arm == 1) mu += arm_effects;
  return mu;
}

double ProgressionModel::linear_predictor(int t, double previous_size, int arm) const {
  double eta = intercepts[t - 1] + size_effects[t - 1] * previous_size;
  if (arm_effects.size() > 0 && arm == 1) eta += arm_effects[t - 1];
  return eta;
}

double ProgressionModel::probability(int t, double previous_size, int arm) const {
  return expit(linear_predictor(t, previous_size, arm));
}

Eigen::VectorXd pack(const ParameterLayout& layout, const TumourModel& tumour, const ProgressionModel& progression) {
  const int T = layout.visits;
  Eigen::VectorXd theta(layout.size());
  for (int t = 1; t <= T; ++t) theta[layout.intercept(t)] = tumour.intercepts[t - 1];
  theta[layout.slope()] = tumour.baseline_slope;
  if (layout.two_arm) {
    for (int t = 1; t <= T; ++t) theta[layout.arm_effect(t)] = tumour.arm_effects[t - 1];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(tumour.cov);
  if (llt.info() != Eigen::Success) throw NotPositiveSemiDefinite("tumour covariance is not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  for (int i = 0; i < T; ++i)
    for (int j = 0; j <= i; ++j) theta[layout.chol(i, j)] = i == j ? std::log(L(i, i)) : L(i, j);
  for (int t = 1; t <= T; ++t) {
    theta[layout.alpha(t)] = progression.intercepts[t - 1];
    if (layout.two_arm) theta[layout.beta(t)] = progression.arm_effects[t - 1];
    theta[layout.gamma(t)] = progression.size_effects[t - 1];
  }
  return theta;
}

TumourModel unpack_tumour(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  const int T = layout.visits;
  TumourModel m;
  m.intercepts.resize(T);
  for (int t = 1; t <= T; ++t) m.intercepts[t - 1] = theta[layout.intercept(t)];
  m.baseline_slope = theta[layout.slope()];
  if (layout.two_arm) {
    m.arm_effects.resize(T);
    for (int t = 1; t <= T; ++t) m.arm_effects[t - 1] = theta[layout.arm_effect(t)];
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j <= i; ++j) L(i, j) = i == j ? std::exp(theta[layout.chol(i, j)]) : theta[layout.chol(i, j)];
  m.cov = L * L.transpose();
  return m;
}

ProgressionModel unpack_progression(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  const int T = layout.visits;
  ProgressionModel m;
  m.intercepts.resize(T);
  m.size_effects.resize(T);
  if (layout.two_arm) m.arm_effects.resize(T);
  m.separated.assign(T, false);
  for (int t = 1; t <= T; ++t) {
    m.intercepts[t - 1] = theta[layout.alpha(t)];
    if (layout.two_arm) m.arm_effects[t - 1] = theta[layout.beta(t)];
    m.size_effects[t - 1] = theta[layout.gamma(t)];
  }
  return m;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd* start,
                         const LogisticOptions& options) {
  const Eigen::Index n = X.rows(), k = X.cols();
  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(k);
  const double events = y.sum();
  auto information = [&](const Eigen::VectorXd& coef) {
    const Eigen::VectorXd eta = X * coef;
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = expit(eta[i]);
      w[i] = p * (1.0 - p);
    }
    return Eigen::MatrixXd(X.transpose() * w.asDiagonal() * X);
  };
  auto finish = [&]() {
    fit.loglik = logistic_loglik(X, y, fit.coef);
    bool singular = false;
    fit.cov = invert_information(information(fit.coef), singular);
    return fit;
  };
  if (n == 0) throw EmptyRiskSet("logistic regression on an empty data set");
  if (events <= 0.0 || events >= static_cast<double>(n)) {
    // No variation in the outcome: the intercept diverges.
    fit.separated = true;
    fit.coef[0] = events <= 0.0 ? -options.coefficient_cap : options.coefficient_cap;
    return finish();
  }
  if (start && start->size() == k) {
    fit.coef = *start;
  } else {
    const double rate = events / static_cast<double>(n);
    fit.coef[0] = std::log(rate / (1.0 - rate));
  }
  // Newton-Raphson over the coordinates not in `pinned`, holding the rest.
  auto newton = [&](const std::vector<bool>& pinned) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < k; ++j)
      if (!pinned[static_cast<std::size_t>(j)]) free.push_back(j);
    const auto m = static_cast<Eigen::Index>(free.size());
    double ll = logistic_loglik(X, y, fit.coef);
    for (; fit.iterations < options.max_iterations; ++fit.iterations) {
      const Eigen::VectorXd eta = X * fit.coef;
      Eigen::VectorXd resid(n), w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double p = expit(eta[i]);
        resid[i] = y[i] - p;
        w[i] = p * (1.0 - p);
      }
      Eigen::MatrixXd Xf(n, m);
      for (Eigen::Index c = 0; c < m; ++c) Xf.col(c) = X.col(free[c]);
      const Eigen::VectorXd score = Xf.transpose() * resid;
      if (m == 0 || score.cwiseAbs().maxCoeff() < options.score_tol) {
        fit.converged = true;
        return;
      }
      const Eigen::MatrixXd info = Xf.transpose() * w.asDiagonal() * Xf;
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
      if (qr.rank() < m) throw SingularDesign("singular logistic information matrix");
      const Eigen::VectorXd sub = qr.solve(score);
      Eigen::VectorXd step = Eigen::VectorXd::Zero(k);
      for (Eigen::Index c = 0; c < m; ++c) step[free[c]] = sub[c];
      double next_ll = logistic_loglik(X, y, fit.coef + step);
      for (int halving = 0; halving < 30 && !(next_ll >= ll - 1e-12); ++halving) {
        step *= 0.5;
        next_ll = logistic_loglik(X, y, fit.coef + step);
      }
      fit.coef += step;
      ll = next_ll;
      if (fit.coef.cwiseAbs().maxCoeff() > options.coefficient_cap) return;
    }
  };
  std::vector<bool> pinned(static_cast<std::size_t>(k), false);
  newton(pinned);
  // Monotone likelihood: Newton either runs past the cap or stalls at a large
  // coefficient once the score is numerically flat. Pin the diverging
  // coefficients at the cap and refit the others.
  const double divergent = 0.5 * options.coefficient_cap;
  if (fit.coef.cwiseAbs().maxCoeff() > divergent) {
    fit.separated = true;
    fit.converged = false;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (std::abs(fit.coef[j]) > divergent) {
        pinned[static_cast<std::size_t>(j)] = true;
        fit.coef[j] = std::copysign(options.coefficient_cap, fit.coef[j]);
      }
    }
    fit.iterations = 0;
    newton(pinned);
    fit.coef = fit.coef.cwiseMax(-options.coefficient_cap).cwiseMin(options.coefficient_cap);
  }
  return finish();
}

TumourFit fit_tumour(const TrialDataset& data, bool two_arm, const TumourModel* warm_start) {
  const Prepared P(data);
  const int T = data.max_visits;
  int followed = 0;
  for (const auto& p : data.patients) followed += p.last_observed() > 0 ? 1 : 0;
  if (followed < T + 3) {
    throw InsufficientData("need at least " + std::to_string(T + 3) + " patients with a post-baseline visit, have " +
                           std::to_string(followed));
  }
  if (two_arm && (data.arm_count(0) < 2 || data.arm_count(1) < 2)) {
    throw InsufficientData("two-arm fitting needs at least two patients per arm");
  }
  auto [b0, se0] = initial_slope(P, two_arm);
  if (warm_start) b0 = warm_start->baseline_slope;
  auto score = [&](double b) { return profile(P, b, two_arm).score; };

  double b_hat = b0;
  const double s0 = score(b0);
  if (s0 != 0.0) {
    double step = std::max(4.0 * se0, 1e-8 * (1.0 + std::abs(b0)));
    double lo = b0, hi = b0;
    double s_lo = s0, s_hi = s0;
    // The profile is increasing below the maximizer and decreasing above it.
    int expansions = 0;
    if (s0 > 0.0) {
      while (s_hi > 0.0 && expansions++ < 80) {
        lo = hi;
        s_lo = s_hi;
        hi += step;
        s_hi = score(hi);
        step *= 2.0;
      }
    } else {
      while (s_lo < 0.0 && expansions++ < 80) {
        hi = lo;
        s_hi = s_lo;
        lo -= step;
        s_lo = score(lo);
        step *= 2.0;
      }
    }
    if (!(s_lo >= 0.0 && s_hi <= 0.0)) throw SingularDesign("could not bracket the baseline-slope estimate");
    if (s_lo == 0.0) {
      b_hat = lo;
    } else if (s_hi == 0.0) {
      b_hat = hi;
    } else {
      std::uintmax_t iters = 200;
      auto root = boost::math::tools::toms748_solve(score, lo, hi, s_lo, s_hi,
                                                    boost::math::tools::eps_tolerance<double>(50), iters);
      b_hat = 0.5 * (root.first + root.second);
    }
  }
  const auto best = profile(P, b_hat, two_arm);
  return {recompose(best.regs, b_hat, two_arm), best.loglik};
}

ProgressionFit fit_progression(const TrialDataset& data, bool two_arm, const ProgressionModel* warm_start,
                               const LogisticOptions& options) {
  const int T = data.max_visits;
  ProgressionFit out;
  auto& m = out.model;
  m.intercepts.resize(T);
  m.size_effects.resize(T);
  if (two_arm) m.arm_effects.resize(T);
  m.separated.assign(T, false);
  for (int t = 1; t <= T; ++t) {
    const auto d = progression_design(data, t, two_arm);
    if (d.X.rows() == 0) throw EmptyRiskSet("no patient is at risk of new-lesion progression at visit " + std::to_string(t));
    Eigen::VectorXd start;
    const Eigen::VectorXd* start_ptr = nullptr;
    if (warm_start && warm_start->visits() == T) {
      start.resize(d.X.cols());
      start[0] = warm_start->intercepts[t - 1];
      if (two_arm) start[1] = warm_start->arm_effects[t - 1];
      start[d.X.cols() - 1] = warm_start->size_effects[t - 1];
      start_ptr = &start;
    }
    const auto fit = fit_logistic(d.X, d.y, start_ptr, options);
    m.intercepts[t - 1] = fit.coef[0];
    if (two_arm) m.arm_effects[t - 1] = fit.coef[1];
    m.size_effects[t - 1] = fit.coef[d.X.cols() - 1];
    m.separated[t - 1] = fit.separated;
    out.loglik += fit.loglik;
    if (fit.separated) {
      out.warnings.push_back("separation in the new-lesion model at visit " + std::to_string(t) +
                             "; coefficients capped at " + format_double(options.coefficient_cap));
    } else if (!fit.converged) {
      out.warnings.push_back("new-lesion model at visit " + std::to_string(t) + " did not converge");
    }
  }
  return out;
}

double tumour_loglik(const TrialDataset& data, const TumourModel& model) { return TumourLikelihood(data)(model); }

double progression_loglik(const TrialDataset& data, const ProgressionModel& model) {
  const bool two_arm = model.arm_effects.size() > 0;
  double ll = 0.0;
  for (int t = 1; t <= model.visits(); ++t) {
    const auto d = progression_design(data, t, two_arm);
    Eigen::VectorXd coef(d.X.cols());
    coef[0] = model.intercepts[t - 1];
    if (two_arm) coef[1] = model.arm_effects[t - 1];
    coef[d.X.cols() - 1] = model.size_effects[t - 1];
    ll += logistic_loglik(d.X, d.y, coef);
  }
  return ll;
}

double observed_loglik(const TrialDataset& data, const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  return tumour_loglik(data, unpack_tumour(layout, theta)) + progression_loglik(data, unpack_progression(layout, theta));
}

FittedModel assemble(const TrialDataset& data, bool two_arm, const AssembleOptions& options) {
  if (two_arm && !data.two_arm()) throw InvalidArgument("two-arm fit requested for a single-arm dataset");
  FittedModel out;
  out.layout = {data.max_visits, two_arm};
  const auto& layout = out.layout;
  const FittedModel* warm = options.warm_start;
  const bool warm_ok = warm && warm->layout.visits == layout.visits && warm->layout.two_arm == two_arm;
  auto tumour = fit_tumour(data, two_arm, warm_ok ? &warm->tumour : nullptr);
  auto prog = fit_progression(data, two_arm, warm_ok ? &warm->progression : nullptr, options.logistic);
  out.tumour = std::move(tumour.model);
  out.progression = std::move(prog.model);
  out.loglik_tumour = tumour.loglik;
  out.loglik_progression = prog.loglik;
  out.warnings = std::move(prog.warnings);
  out.theta = pack(layout, out.tumour, out.progression);

  const int p = layout.size();
  out.theta_cov = Eigen::MatrixXd::Zero(p, p);
  if (!options.covariance) return out;

  // Tumour block.
  const int q = layout.mvn_size();
  const TumourLikelihood tl(data);
  const Eigen::VectorXd theta = out.theta;
  auto tumour_ll = [&](const Eigen::VectorXd& sub) {
    Eigen::VectorXd full = theta;
    full.head(q) = sub;
    return tl(unpack_tumour(layout, full));
  };
  bool singular = false;
  const Eigen::MatrixXd h_tumour = numeric_hessian(tumour_ll, theta.head(q), options.hessian_rel_step);
  out.theta_cov.topLeftCorner(q, q) = invert_information(-h_tumour, singular);
  if (singular) out.warnings.push_back("singular information in the tumour-size model; pseudo-inverse used");

  // One block per visit of the new-lesion model.
  const int k = layout.per_visit();
  for (int t = 1; t <= layout.visits; ++t) {
    const int at = layout.alpha(t);
    if (out.progression.separated[t - 1]) continue;  // capped coefficients are treated as known
    const auto d = progression_design(data, t, two_arm);
    auto visit_ll = [&](const Eigen::VectorXd& coef) { return logistic_loglik(d.X, d.y, coef); };
    const Eigen::MatrixXd h = numeric_hessian(visit_ll, theta.segment(at, k), options.hessian_rel_step);
    bool sing = false;
    out.theta_cov.block(at, at, k, k) = invert_information(-h, sing);
    if (sing) out.warnings.push_back("singular information in the new-lesion model at visit " + std::to_string(t));
  }
  return out;
}

void write_report(std::ostream& out, const FittedModel& model) {
  const auto names = model.layout.names();
  out << "visits=" << model.layout.visits << '\n';
  out << "two_arm=" << (model.layout.two_arm ? 1 : 0) << '\n';
  out << "parameters=" << model.layout.size() << '\n';
  out << "loglik_tumour=" << format_double(model.loglik_tumour) << '\n';
  out << "loglik_progression=" << format_double(model.loglik_progression) << '\n';
  for (int j = 0; j < model.layout.size(); ++j) {
    out << "theta." << names[j] << '=' << format_double(model.theta[j]) << '\n';
    out << "se." << names[j] << '=' << format_double(std::sqrt(std::max(0.0, model.theta_cov(j, j)))) << '\n';
  }
  const int T = model.layout.visits;
  for (int i = 0; i < T; ++i)
    for (int j = 0; j <= i; ++j)
      out << "sigma." << i + 1 << '.' << j + 1 << '=' << format_double(model.tumour.cov(i, j)) << '\n';
  for (std::size_t w = 0; w < model.warnings.size(); ++w) out << "warning." << w + 1 << '=' << model.warnings[w] << '\n';
}

}  // namespace augbin
