#pragma once

// Multivariate normal rectangle probabilities by the Genz-Bretz separation of
// variables, integrated with a randomized rank-1 lattice rule, plus the
// sequential-conditioning sampler built on the same transformation.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace augbin::mvn {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr std::uint64_t kDefaultSeed = 0x5eed2017u;

struct MvnSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// Box with extended-real bounds; use +/-kInf for open sides.
struct Rectangle {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Rectangle full(Eigen::Index d) {
    return {Eigen::VectorXd::Constant(d, -kInf), Eigen::VectorXd::Constant(d, kInf)};
  }
  Eigen::Index dim() const { return lower.size(); }
};

struct RectProbResult {
  double probability = 0.0;
  /// Three standard errors of the randomized-QMC estimate.
  double error_estimate = 0.0;
  std::size_t samples_used = 0;
  /// False when max_samples ran out before abs_tol was met.
  bool tolerance_reached = true;
};

struct PivotedCholesky {
  /// Lower triangular with factor * factor^T == cov(order, order).
  Eigen::MatrixXd factor;
  std::vector<int> order;
};

/// Cholesky factorization with diagonal pivoting (largest remaining pivot
/// first). Pivots within rel_tol * max(diag) of zero are set to zero, so
/// positive semi-definite input is accepted.
PivotedCholesky chol_pivot(const Eigen::MatrixXd& cov, double rel_tol = 1e-10);

/// Pr(X > h, Y > k) for standard bivariate normal (X, Y) with correlation r,
/// by Gauss-Legendre quadrature of the Plackett/Drezner-Wesolowsky form.
/// Two-dimensional rectangles are evaluated with it instead of the lattice rule.
double bvn_upper(double h, double k, double r);

struct QmcOptions {
  double abs_tol = 1e-5;
  std::size_t max_samples = std::size_t{1} << 20;
  std::uint64_t seed = kDefaultSeed;
  int shifts = 12;
};

/// Frozen integration settings. Evaluating several nearby problems with one
/// plan uses the same variable order and the same lattice points, which keeps
/// finite differences through the integral smooth.
struct IntegrationPlan {
  std::vector<int> order;  // over the bounded coordinates only
  std::size_t points_per_shift = 0;
  int shifts = 12;
  std::uint64_t seed = kDefaultSeed;
};

RectProbResult mvn_rect_prob(const MvnSpec& spec, const Rectangle& rect, const QmcOptions& options = {});

/// Adaptive run that also reports the plan it converged to.
RectProbResult mvn_rect_prob(const MvnSpec& spec, const Rectangle& rect, const QmcOptions& options,
                             IntegrationPlan* plan_out);

/// Fixed-budget evaluation under a previously computed plan.
RectProbResult mvn_rect_prob(const MvnSpec& spec, const Rectangle& rect, const IntegrationPlan& plan);

/// Genz-Bretz variable prioritization: order variables so that the ones with
/// the smallest expected conditional truncation mass are integrated first.
std::vector<int> genz_order(const MvnSpec& spec, const Rectangle& rect);

/// Separation-of-variables map from the unit cube onto the rectangle.
/// Given uniforms w, produces y = mean + L x inside the rectangle together
/// with the weight prod_k (e_k - d_k); E_w[weight * g(y)] equals the integral
/// of g times the normal density over the rectangle.
class SequentialConditioner {
 public:
  SequentialConditioner(const MvnSpec& spec, const Rectangle& rect, std::vector<int> order = {});

  int dim() const { return dim_; }
  const std::vector<int>& order() const { return order_; }

  /// w has dim() entries in [0,1]; y receives dim() entries in the original
  /// variable order. Returns the weight.
  double map(std::span<const double> w, std::span<double> y) const;

 private:
  int dim_ = 0;
  std::vector<int> order_;
  std::vector<double> chol_;  // row-major lower triangle, permuted
  std::vector<double> lower_, upper_, mean_;
  mutable std::vector<double> x_;
};

struct TruncatedSample {
  Eigen::MatrixXd points;   // n x d
  Eigen::VectorXd weights;  // importance weights normalized to mean 1
  double probability = 0.0;
};

/// n draws from the sequential-conditioning construction. Every draw lies in
/// the rectangle; weighted averages converge to truncated-normal moments, and
/// the weights are constant whenever the construction is exact (d = 1 or an
/// unbounded rectangle).
TruncatedSample truncated_mvn_sample(const MvnSpec& spec, const Rectangle& rect, std::size_t n,
                                     std::uint64_t seed);

/// Randomized-lattice estimate of the integral of g(y) * phi(y) over the
/// rectangle. g is called with a span of the d coordinates.
template <class Integrand>
RectProbResult mvn_rect_integral(const SequentialConditioner& conditioner, Integrand&& g,
                                 std::size_t points_per_shift, int shifts, std::uint64_t seed);

}  // namespace augbin::mvn

#include "augbin/detail/mvnquad_impl.hpp"
