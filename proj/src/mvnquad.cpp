#include "augbin/mvnquad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "augbin/errors.hpp"
#include "augbin/normal.hpp"

namespace augbin::mvn {

namespace detail {

std::vector<double> richtmyer_generators(int dim) {
  std::vector<double> gen;
  gen.reserve(dim);
  for (int candidate = 2; static_cast<int>(gen.size()) < dim; ++candidate) {
    bool prime = true;
    for (int f = 2; f * f <= candidate; ++f) {
      if (candidate % f == 0) {
        prime = false;
        break;
      }
    }
    if (!prime) continue;
    const double r = std::sqrt(static_cast<double>(candidate));
    gen.push_back(r - std::floor(r));
  }
  return gen;
}

std::vector<double> lattice_shifts(int dim, int shifts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(dim) * shifts);
  for (auto& v : out) v = unif(rng);
  return out;
}

}  // namespace detail

namespace {

constexpr double kPivotTol = 1e-10;
constexpr double kMaxAbsNormal = 10.0;

double max_diag(const Eigen::MatrixXd& cov) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) m = std::max(m, cov(i, i));
  return m;
}

void check_square_symmetric(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw InvalidArgument("covariance must be square");
  const double scale = std::max(1.0, max_diag(cov));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(cov(i, j) - cov(j, i)) > 1e-10 * scale) throw InvalidArgument("covariance must be symmetric");
    }
  }
}

void check_problem(const MvnSpec& spec, const Rectangle& rect) {
  const auto d = spec.dim();
  if (spec.cov.rows() != d || rect.lower.size() != d || rect.upper.size() != d) {
    throw InvalidArgument("dimension mismatch between mean, covariance and rectangle");
  }
  check_square_symmetric(spec.cov);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!std::isfinite(spec.mean[i])) throw InvalidArgument("mean must be finite");
    if (std::isnan(rect.lower[i]) || std::isnan(rect.upper[i]) || !(rect.lower[i] < rect.upper[i])) {
      throw InvalidArgument("rectangle requires lower < upper in every coordinate");
    }
  }
}

/// Centered, permuted problem ready for the separation-of-variables integrand.
struct Setup {
  int dim = 0;
  std::vector<double> chol;  // row-major dim x dim lower triangle
  std::vector<double> a, b;  // centered bounds in integration order
  std::vector<int> order;    // position -> original index
};

/// Cholesky of cov(order, order); when select is true, the order is chosen
/// on the fly by the Genz-Bretz prioritization and written back.
Setup factorize(const Eigen::MatrixXd& cov, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                std::vector<int> order, bool select) {
  const int d = static_cast<int>(cov.rows());
  Setup s;
  s.dim = d;
  if (order.empty()) {
    order.resize(d);
    std::iota(order.begin(), order.end(), 0);
  }
  if (static_cast<int>(order.size()) != d) throw InvalidArgument("integration order has the wrong length");
  const double tol = kPivotTol * std::max(max_diag(cov), 1e-300);
  // Work on a permuted copy so swaps are cheap.
  Eigen::MatrixXd c(d, d);
  std::vector<double> a(d), b(d);
  for (int i = 0; i < d; ++i) {
    a[i] = lower[order[i]];
    b[i] = upper[order[i]];
    for (int j = 0; j < d; ++j) c(i, j) = cov(order[i], order[j]);
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  std::vector<double> expected(d, 0.0);
  for (int i = 0; i < d; ++i) {
    if (select) {
      int best = i;
      double best_mass = kInf;
      for (int j = i; j < d; ++j) {
        double var = c(j, j);
        double shift = 0.0;
        for (int k = 0; k < i; ++k) {
          var -= L(j, k) * L(j, k);
          shift += L(j, k) * expected[k];
        }
        if (var < -tol) throw NotPositiveSemiDefinite("covariance is not positive semi-definite");
        const double sd = var > tol ? std::sqrt(var) : 0.0;
        double mass;
        if (sd > 0.0) {
          mass = norm_cdf((b[j] - shift) / sd) - norm_cdf((a[j] - shift) / sd);
        } else {
          mass = (a[j] <= shift && shift <= b[j]) ? 1.0 : 0.0;
          mass += 2.0;  // keep degenerate variables last
        }
        if (mass < best_mass) {
          best_mass = mass;
          best = j;
        }
      }
      if (best != i) {
        c.row(i).swap(c.row(best));
        c.col(i).swap(c.col(best));
        L.row(i).swap(L.row(best));
        std::swap(a[i], a[best]);
        std::swap(b[i], b[best]);
        std::swap(order[i], order[best]);
      }
    }
    double var = c(i, i);
    for (int k = 0; k < i; ++k) var -= L(i, k) * L(i, k);
    if (var < -tol) throw NotPositiveSemiDefinite("covariance is not positive semi-definite");
    const double piv = var > tol ? std::sqrt(var) : 0.0;
    L(i, i) = piv;
    for (int j = i + 1; j < d; ++j) {
      double v = c(j, i);
      for (int k = 0; k < i; ++k) v -= L(j, k) * L(i, k);
      L(j, i) = piv > 0.0 ? v / piv : 0.0;
    }
    if (select) {
      double shift = 0.0;
      for (int k = 0; k < i; ++k) shift += L(i, k) * expected[k];
      if (piv > 0.0) {
        const double lo = (a[i] - shift) / piv;
        const double hi = (b[i] - shift) / piv;
        const double mass = norm_cdf(hi) - norm_cdf(lo);
        expected[i] = mass > 1e-300 ? (norm_pdf(lo) - norm_pdf(hi)) / mass
                                    : (std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0));
      }
    }
  }
  s.chol.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) s.chol[i * d + j] = L(i, j);
  s.a = std::move(a);
  s.b = std::move(b);
  s.order = std::move(order);
  return s;
}

/// Interval [d, e] of the conditional uniform for position i given the sum of
/// earlier contributions. Degenerate pivots become an indicator.
inline void conditional_interval(const Setup& s, int i, double partial, double& lo, double& hi) {
  const double piv = s.chol[i * s.dim + i];
  if (piv > 0.0) {
    lo = norm_cdf((s.a[i] - partial) / piv);
    hi = norm_cdf((s.b[i] - partial) / piv);
  } else {
    const bool inside = s.a[i] <= partial && partial <= s.b[i];
    lo = 0.0;
    hi = inside ? 1.0 : 0.0;
  }
}

inline double clamp_normal(double x) { return std::clamp(x, -kMaxAbsNormal, kMaxAbsNormal); }

/// One randomized-lattice pass over d-1 dimensions (the first variable is
/// integrated in closed form).
RectProbResult lattice_pass(const Setup& s, std::size_t n, int shifts, std::uint64_t seed) {
  const int d = s.dim;
  RectProbResult r;
  double lo0, hi0;
  conditional_interval(s, 0, 0.0, lo0, hi0);
  const double first = hi0 - lo0;
  if (d == 1 || first <= 0.0) {
    r.probability = std::max(0.0, first);
    return r;
  }
  const int m = d - 1;
  const auto gen = detail::richtmyer_generators(m);
  const auto shift = detail::lattice_shifts(m, shifts, seed);
  std::vector<double> u(m), x(d);
  double mean = 0.0, sq = 0.0;
  for (int sh = 0; sh < shifts; ++sh) {
    for (int j = 0; j < m; ++j) u[j] = shift[sh * m + j];
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      for (int j = 0; j < m; ++j) {
        u[j] += gen[j];
        u[j] -= std::floor(u[j]);
      }
      double f = first;
      double lo = lo0, hi = hi0;
      for (int i = 1; i < d; ++i) {
        const double w = detail::tent(u[i - 1]);
        const double piv_prev = s.chol[(i - 1) * d + (i - 1)];
        x[i - 1] = piv_prev > 0.0 ? clamp_normal(norm_quantile(lo + w * (hi - lo))) : 0.0;
        double partial = 0.0;
        const double* row = &s.chol[i * d];
        for (int j = 0; j < i; ++j) partial += row[j] * x[j];
        conditional_interval(s, i, partial, lo, hi);
        f *= (hi - lo);
        if (f <= 0.0) break;
      }
      sum += std::max(0.0, f);
    }
    const double est = sum / static_cast<double>(n);
    const double delta = est - mean;
    mean += delta / (sh + 1);
    sq += delta * (est - mean);
  }
  r.probability = std::clamp(mean, 0.0, 1.0);
  r.error_estimate = shifts > 1 ? 3.0 * std::sqrt(sq / (shifts - 1) / shifts) : 0.0;
  r.samples_used = n * static_cast<std::size_t>(shifts);
  return r;
}

struct Reduced {
  Eigen::MatrixXd cov;
  Eigen::VectorXd lower, upper;  // centered
};

/// Drops coordinates unbounded on both sides (marginalization is exact).
Reduced reduce(const MvnSpec& spec, const Rectangle& rect) {
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < spec.dim(); ++i) {
    if (std::isfinite(rect.lower[i]) || std::isfinite(rect.upper[i])) keep.push_back(static_cast<int>(i));
  }
  const int k = static_cast<int>(keep.size());
  Reduced r;
  r.cov.resize(k, k);
  r.lower.resize(k);
  r.upper.resize(k);
  for (int i = 0; i < k; ++i) {
    r.lower[i] = rect.lower[keep[i]] - spec.mean[keep[i]];
    r.upper[i] = rect.upper[keep[i]] - spec.mean[keep[i]];
    for (int j = 0; j < k; ++j) r.cov(i, j) = spec.cov(keep[i], keep[j]);
  }
  return r;
}

/// Exact rectangle probability of a centered bivariate problem.
double bvn_rect(const Eigen::MatrixXd& cov, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const double s1 = std::sqrt(cov(0, 0)), s2 = std::sqrt(cov(1, 1));
  const double r = std::clamp(cov(0, 1) / (s1 * s2), -1.0, 1.0);
  const double a1 = lo[0] / s1, b1 = hi[0] / s1, a2 = lo[1] / s2, b2 = hi[1] / s2;
  const double p = bvn_upper(a1, a2, r) - bvn_upper(a1, b2, r) - bvn_upper(b1, a2, r) + bvn_upper(b1, b2, r);
  return std::clamp(p, 0.0, 1.0);
}

bool bivariate_ok(const Eigen::MatrixXd& cov) {
  if (cov.rows() != 2) return false;
  const double tol = kPivotTol * std::max(max_diag(cov), 1e-300);
  return cov(0, 0) > tol && cov(1, 1) > tol && cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1) > tol * tol;
}

}  // namespace

double bvn_upper(double h, double k, double r) {
  if (h == kInf || k == kInf) return 0.0;
  if (h == -kInf) return k == -kInf ? 1.0 : norm_cdf(-k);
  if (k == -kInf) return norm_cdf(-h);
  static constexpr double w3[] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static constexpr double x3[] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static constexpr double w6[] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                  0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static constexpr double x6[] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                  0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr double w10[] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                   0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                   0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                   0.1527533871307259};
  static constexpr double x10[] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                   0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                   0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                   0.07652652113349733};
  const double* w;
  const double* x;
  int n;
  const double ar = std::abs(r);
  if (ar < 0.3) {
    w = w3, x = x3, n = 3;
  } else if (ar < 0.75) {
    w = w6, x = x6, n = 6;
  } else {
    w = w10, x = x10, n = 10;
  }
  constexpr double two_pi = 6.283185307179586;
  double hk = h * k;
  double bvn = 0.0;
  if (ar < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (int i = 0; i < n; ++i) {
      for (double node : {1.0 - x[i], 1.0 + x[i]}) {
        const double sn = std::sin(asr * node);
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    return bvn * asr / two_pi + norm_cdf(-h) * norm_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (ar < 1.0) {
    const double as = 1.0 - r * r;
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 80.0;
    double asr = -0.5 * (bs / as + hk);
    if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      const double sp = std::sqrt(two_pi) * norm_cdf(-b / a);
      bvn -= std::exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a *= 0.5;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      for (double node : {1.0 - x[i], 1.0 + x[i]}) {
        const double xs = (a * node) * (a * node);
        asr = -0.5 * (bs / xs + hk);
        if (asr <= -100.0) continue;
        const double rs = std::sqrt(1.0 - xs);
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double ep = std::exp(-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        sum += w[i] * std::exp(asr) * (sp - ep);
      }
    }
    bvn = (a * sum - bvn) / two_pi;
  }
  if (r > 0.0) return bvn + norm_cdf(-std::max(h, k));
  if (h >= k) return -bvn;
  const double L = h < 0.0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
  return L - bvn;
}

PivotedCholesky chol_pivot(const Eigen::MatrixXd& cov, double rel_tol) {
  check_square_symmetric(cov);
  const int d = static_cast<int>(cov.rows());
  Eigen::MatrixXd c = cov;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  const double tol = rel_tol * std::max(max_diag(cov), 1e-300);
  for (int i = 0; i < d; ++i) {
    int best = i;
    double best_var = -kInf;
    for (int j = i; j < d; ++j) {
      double var = c(j, j);
      for (int k = 0; k < i; ++k) var -= L(j, k) * L(j, k);
      if (var > best_var + tol) {
        best_var = var;
        best = j;
      }
    }
    if (best_var < -tol) throw NotPositiveSemiDefinite("covariance is not positive semi-definite");
    if (best != i) {
      c.row(i).swap(c.row(best));
      c.col(i).swap(c.col(best));
      L.row(i).swap(L.row(best));
      std::swap(order[i], order[best]);
    }
    const double piv = best_var > tol ? std::sqrt(best_var) : 0.0;
    L(i, i) = piv;
    for (int j = i + 1; j < d; ++j) {
      double v = c(j, i);
      for (int k = 0; k < i; ++k) v -= L(j, k) * L(i, k);
      L(j, i) = piv > 0.0 ? v / piv : 0.0;
    }
  }
  return {L, order};
}

std::vector<int> genz_order(const MvnSpec& spec, const Rectangle& rect) {
  check_problem(spec, rect);
  const Eigen::VectorXd lo = rect.lower - spec.mean;
  const Eigen::VectorXd hi = rect.upper - spec.mean;
  return factorize(spec.cov, lo, hi, {}, true).order;
}

RectProbResult mvn_rect_prob(const MvnSpec& spec, const Rectangle& rect, const QmcOptions& options) {
  return mvn_rect_prob(spec, rect, options, nullptr);
}

RectProbResult mvn_rect_prob(const MvnSpec& spec, const Rectangle& rect, const QmcOptions& options,
                             IntegrationPlan* plan_out) {
  check_problem(spec, rect);
  if (!(options.abs_tol > 0.0)) throw InvalidArgument("abs_tol must be positive");
  if (options.shifts < 2) throw InvalidArgument("at least two lattice shifts are needed for an error estimate");
  const Reduced red = reduce(spec, rect);
  if (bivariate_ok(red.cov)) {
    if (plan_out) *plan_out = {{0, 1}, 1, options.shifts, options.seed};
    return {bvn_rect(red.cov, red.lower, red.upper), 0.0, 0, true};
  }
  const Setup setup = factorize(red.cov, red.lower, red.upper, {}, true);
  if (plan_out) {
    plan_out->order = setup.order;
    plan_out->shifts = options.shifts;
    plan_out->seed = options.seed;
    plan_out->points_per_shift = 0;
  }
  if (setup.dim <= 1) {
    RectProbResult r = setup.dim == 0 ? RectProbResult{1.0, 0.0, 0, true} : lattice_pass(setup, 1, 1, options.seed);
    r.samples_used = 0;
    r.error_estimate = 0.0;
    if (plan_out) plan_out->points_per_shift = 1;
    return r;
  }
  std::size_t n = 32;
  std::size_t used = 0;
  RectProbResult r;
  while (true) {
    r = lattice_pass(setup, n, options.shifts, options.seed);
    used += r.samples_used;
    if (r.error_estimate <= options.abs_tol) {
      r.tolerance_reached = true;
      break;
    }
    if (used + 2 * n * options.shifts > options.max_samples) {
      r.tolerance_reached = false;
      break;
    }
    n *= 2;
  }
  r.samples_used = used;
  if (plan_out) plan_out->points_per_shift = n;
  return r;
}

RectProbResult mvn_rect_prob(const MvnSpec& spec, const Rectangle& rect, const IntegrationPlan& plan) {
  check_problem(spec, rect);
  const Reduced red = reduce(spec, rect);
  if (bivariate_ok(red.cov)) return {bvn_rect(red.cov, red.lower, red.upper), 0.0, 0, true};
  const Setup setup = factorize(red.cov, red.lower, red.upper, plan.order, false);
  if (setup.dim == 0) return {1.0, 0.0, 0, true};
  if (setup.dim == 1) return lattice_pass(setup, 1, 1, plan.seed);
  return lattice_pass(setup, std::max<std::size_t>(plan.points_per_shift, 1), plan.shifts, plan.seed);
}

SequentialConditioner::SequentialConditioner(const MvnSpec& spec, const Rectangle& rect, std::vector<int> order) {
  check_problem(spec, rect);
  const Eigen::VectorXd lo = rect.lower - spec.mean;
  const Eigen::VectorXd hi = rect.upper - spec.mean;
  const bool select = order.empty();
  Setup s = factorize(spec.cov, lo, hi, std::move(order), select);
  dim_ = s.dim;
  order_ = std::move(s.order);
  chol_ = std::move(s.chol);
  lower_ = std::move(s.a);
  upper_ = std::move(s.b);
  mean_.assign(spec.mean.data(), spec.mean.data() + spec.mean.size());
  x_.assign(dim_, 0.0);
}

double SequentialConditioner::map(std::span<const double> w, std::span<double> y) const {
  const int d = dim_;
  double weight = 1.0;
  for (int i = 0; i < d; ++i) {
    double partial = 0.0;
    const double* row = &chol_[static_cast<std::size_t>(i) * d];
    for (int j = 0; j < i; ++j) partial += row[j] * x_[j];
    const double piv = row[i];
    double lo, hi;
    if (piv > 0.0) {
      lo = norm_cdf((lower_[i] - partial) / piv);
      hi = norm_cdf((upper_[i] - partial) / piv);
      x_[i] = clamp_normal(norm_quantile(lo + w[i] * (hi - lo)));
    } else {
      lo = 0.0;
      hi = (lower_[i] <= partial && partial <= upper_[i]) ? 1.0 : 0.0;
      x_[i] = 0.0;
    }
    weight *= (hi - lo);
  }
  for (int i = 0; i < d; ++i) {
    double v = 0.0;
    const double* row = &chol_[static_cast<std::size_t>(i) * d];
    for (int j = 0; j <= i; ++j) v += row[j] * x_[j];
    // Keep the point inside the box despite clamping of extreme quantiles.
    v = std::clamp(v, lower_[i], upper_[i]);
    y[order_[i]] = mean_[order_[i]] + v;
  }
  return weight;
}

TruncatedSample truncated_mvn_sample(const MvnSpec& spec, const Rectangle& rect, std::size_t n, std::uint64_t seed) {
  const auto prob = mvn_rect_prob(spec, rect);
  if (prob.probability < 1e-12) throw DegenerateRegion("rectangle probability underflows");
  SequentialConditioner cond(spec, rect);
  const int d = cond.dim();
  TruncatedSample out;
  out.points.resize(static_cast<Eigen::Index>(n), d);
  out.weights.resize(static_cast<Eigen::Index>(n));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> w(d), y(d);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& v : w) v = unif(rng);
    const double weight = cond.map(w, y);
    for (int j = 0; j < d; ++j) out.points(static_cast<Eigen::Index>(k), j) = y[j];
    out.weights[static_cast<Eigen::Index>(k)] = weight;
    total += weight;
  }
  out.probability = n > 0 ? total / static_cast<double>(n) : prob.probability;
  if (total > 0.0) out.weights *= static_cast<double>(n) / total;
  return out;
}

}  // namespace augbin::mvn
