#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

#include <boost/math/distributions/normal.hpp>

#include "popsize/error.hpp"

namespace popsize {

// Neumaier-compensated accumulator. Summation order is whatever order the
// caller feeds values in; callers iterate in ascending unit id.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      compensation_ += (sum_ - t) + x;
    else
      compensation_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double compensated_mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return compensated_sum(xs) / static_cast<double>(xs.size());
}

// Unbiased (N-1 divisor) sample variance around a supplied center. Returns 0
// for fewer than two values.
inline double unbiased_variance(std::span<const double> xs, double center) {
  if (xs.size() < 2) return 0.0;
  CompensatedSum acc;
  for (double x : xs) acc.add((x - center) * (x - center));
  return acc.value() / static_cast<double>(xs.size() - 1);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Upper (1 - alpha/2) standard normal quantile, i.e. the z of a two-sided
// (1 - alpha) interval.
inline double two_sided_z(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 1.0 - alpha / 2.0);
}

inline int popcount(std::uint64_t x) { return std::popcount(x); }

}  // namespace popsize
