#pragma once

#include <cmath>

#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace augbin {

namespace detail {
using FastPolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
}

/// Standard normal distribution function.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double norm_pdf(double x) { return 0.3989422804014327 * std::exp(-0.5 * x * x); }

/// Standard normal quantile; maps 0 and 1 to -inf and +inf.
inline double norm_quantile(double p) {
  if (p <= 0.0) return -HUGE_VAL;
  if (p >= 1.0) return HUGE_VAL;
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p, detail::FastPolicy());
}

inline double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// log(expit(x)) without overflow.
inline double log_expit(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace augbin
