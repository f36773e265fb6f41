#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace augbin::mvn {
namespace detail {

/// Fractional parts of sqrt(prime_j), j = 0..dim-1 (Richtmyer generators).
std::vector<double> richtmyer_generators(int dim);

/// shifts x dim uniform random shifts, row-major.
std::vector<double> lattice_shifts(int dim, int shifts, std::uint64_t seed);

inline double tent(double u) { return std::abs(2.0 * u - 1.0); }

}  // namespace detail

template <class Integrand>
RectProbResult mvn_rect_integral(const SequentialConditioner& conditioner, Integrand&& g,
                                 std::size_t points_per_shift, int shifts, std::uint64_t seed) {
  const int d = conditioner.dim();
  RectProbResult result;
  if (d == 0) {
    std::vector<double> empty;
    result.probability = g(std::span<const double>(empty));
    return result;
  }
  const auto gen = detail::richtmyer_generators(d);
  const auto shift = detail::lattice_shifts(d, shifts, seed);
  std::vector<double> u(d), w(d), y(d);
  double mean = 0.0, sq = 0.0;
  for (int s = 0; s < shifts; ++s) {
    for (int j = 0; j < d; ++j) u[j] = shift[s * d + j];
    double sum = 0.0;
    for (std::size_t k = 0; k < points_per_shift; ++k) {
      for (int j = 0; j < d; ++j) {
        u[j] += gen[j];
        u[j] -= std::floor(u[j]);
        w[j] = detail::tent(u[j]);
      }
      const double weight = conditioner.map(w, y);
      if (weight > 0.0) sum += weight * g(std::span<const double>(y));
    }
    const double est = sum / static_cast<double>(points_per_shift);
    const double delta = est - mean;
    mean += delta / (s + 1);
    sq += delta * (est - mean);
  }
  result.probability = mean;
  result.error_estimate = shifts > 1 ? 3.0 * std::sqrt(sq / (shifts - 1) / shifts) : 0.0;
  result.samples_used = points_per_shift * static_cast<std::size_t>(shifts);
  return result;
}

}  // namespace augbin::mvn
