#pragma once

// Plug-in and one-step estimators of the inverse capture probability, the
// delta-sensitivity bound estimators, and population-size intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "popsize/dataset.hpp"
#include "popsize/error.hpp"
#include "popsize/identification.hpp"
#include "popsize/numeric.hpp"
#include "popsize/nuisance.hpp"

namespace popsize {

/// Uncentered influence values (phi + 1/psi), one per unit in ascending id
/// order. The center is their compensated mean, so the estimator equals the
/// sample mean of the stored values by construction.
struct EifSample {
  std::vector<std::int64_t> unit_ids;
  std::vector<double> values;
  double center = 0.0;
  double variance = 0.0;  // unbiased, N - 1 divisor

  static EifSample from_values(std::vector<std::int64_t> ids, std::vector<double> values) {
    EifSample e;
    e.center = compensated_mean(values);
    e.variance = unbiased_variance(values, e.center);
    e.unit_ids = std::move(ids);
    e.values = std::move(values);
    return e;
  }

  std::size_t size() const { return values.size(); }
  double sigma() const { return std::sqrt(variance); }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

enum class Method { plug_in, one_step };

inline std::string to_string(Method m) { return m == Method::plug_in ? "plug-in" : "one-step"; }

namespace detail {

inline void check_alignment(const ObservedDataset& data, const QEstimates& q) {
  if (q.size() != data.size())
    throw DataError("q estimates cover " + std::to_string(q.size()) + " units, dataset has " +
                    std::to_string(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    if (q.unit_ids[i] != data[i].id) q.position_of(data[i].id);  // throws for a missing unit
}

inline const QVector& q_for(const ObservedDataset& data, const QEstimates& q, std::size_t i) {
  if (q.unit_ids[i] == data[i].id) return q.per_unit[i];
  return q.per_unit[q.position_of(data[i].id)];
}

// sum over suffix-zero y of (-1)^(|y|+1) 1(Y = y) / q_y: at most one term
// is nonzero; units off the suffix-zero set contribute 0.
inline double signed_indicator_ratio(const CaptureProfile& y, const ListSubset& subset, const QVector& q) {
  const auto idx = subset.index_of(y);
  if (!idx) return 0.0;
  return profile_sign(*idx) / q[*idx];
}

}  // namespace detail

// (1/N) sum 1/gamma-hat(X_i)
inline double plug_in_psi_inv(const QEstimates& q) {
  if (q.empty()) throw DataError("plug-in estimator needs at least one unit");
  CompensatedSum acc;
  for (const auto& v : q.per_unit) acc.add(gamma_inverse(v));
  return acc.value() / static_cast<double>(q.size());
}

inline EifSample one_step_psi_inv(const ObservedDataset& data, const ListSubset& subset, const QEstimates& q) {
  if (data.empty()) throw DataError("one-step estimator needs at least one unit");
  detail::check_alignment(data, q);
  std::vector<std::int64_t> ids(data.size());
  std::vector<double> values(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& qi = detail::q_for(data, q, i);
    if (qi.size() != subset.profile_count()) throw DataError("q-vector length does not match subset");
    const double excess = gamma_inverse(qi) - 1.0;
    ids[i] = data[i].id;
    values[i] = excess * detail::signed_indicator_ratio(data[i].profile, subset, qi) + 1.0;
  }
  return EifSample::from_values(std::move(ids), std::move(values));
}

struct PsiInverseInterval {
  Interval ci;
  bool clamped = false;  // lower limit raised to 1
};

// center +/- z sigma / sqrt(N), lower limit clamped at 1.
inline PsiInverseInterval psi_inv_ci(double center, double sigma, std::size_t n, double alpha) {
  const double z = two_sided_z(alpha);
  const double half = n > 0 ? z * sigma / std::sqrt(static_cast<double>(n)) : 0.0;
  PsiInverseInterval out{{center - half, center + half}, false};
  if (out.ci.lo < 1.0) {
    out.ci.lo = 1.0;
    out.clamped = true;
  }
  if (out.ci.hi < out.ci.lo) out.ci.hi = out.ci.lo;
  return out;
}
inline PsiInverseInterval psi_inv_ci(const EifSample& e, double alpha) {
  return psi_inv_ci(e.center, e.sigma(), e.size(), alpha);
}

// One covariate stratum of an exactly known population: its Q-mass and the
// exact suffix-zero q-probabilities.
struct Stratum {
  double weight = 0.0;
  std::vector<double> q;
};

// psi^{-1} = E_Q[1/gamma(X)]
inline double exact_psi_inv(std::span<const Stratum> strata) {
  CompensatedSum w;
  CompensatedSum acc;
  for (const auto& s : strata) {
    w.add(s.weight);
    acc.add(s.weight * gamma_inverse(s.q));
  }
  return acc.value() / w.value();
}

// Var(1/gamma) + E[(1/gamma - 1)^2 (sum 1/q_y - 1)], weights normalized.
inline double efficiency_bound(std::span<const Stratum> strata) {
  if (strata.empty()) throw DomainError("efficiency bound needs at least one stratum");
  CompensatedSum total;
  for (const auto& s : strata) {
    if (!(s.weight >= 0.0)) throw DomainError("stratum weights must be nonnegative");
    total.add(s.weight);
  }
  if (!(total.value() > 0.0)) throw DomainError("stratum weights sum to zero");
  const double mean = exact_psi_inv(strata);
  CompensatedSum heterogeneity;
  CompensatedSum sampling;
  for (const auto& s : strata) {
    const double w = s.weight / total.value();
    const double g = gamma_inverse(s.q);
    double inv_sum = 0.0;
    for (double v : s.q) inv_sum += 1.0 / v;
    heterogeneity.add(w * (g - mean) * (g - mean));
    sampling.add(w * (g - 1.0) * (g - 1.0) * (inv_sum - 1.0));
  }
  return heterogeneity.value() + sampling.value();
}

enum class BoundSide { lower, upper };

inline std::string to_string(BoundSide s) { return s == BoundSide::lower ? "lower" : "upper"; }

// Per unit: (phi_delta - 1/eps) 1(1/gamma_delta <= 1/eps) + 1/eps, with
// phi_delta = (1/gamma_delta - 1) sum (-1)^(|y|+1) 1(Y=y)/q_y + 1 and the
// indicator evaluated on the unit's own cross-fitted gamma_delta. A tie at the
// cap counts as uncapped (the indicator is "<= 0").
inline EifSample bound_psi_inv_one_step(const ObservedDataset& data, const ListSubset& subset, const QEstimates& q,
                                        const SensitivityParams& s, BoundSide side) {
  if (data.empty()) throw DataError("bound estimator needs at least one unit");
  detail::check_alignment(data, q);
  const double cap = s.cap();
  const double shift = side == BoundSide::lower ? -s.delta : s.delta;
  std::vector<std::int64_t> ids(data.size());
  std::vector<double> values(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& qi = detail::q_for(data, q, i);
    const double g_delta = 1.0 + std::exp(signed_log_sum(qi.values()) + shift);
    ids[i] = data[i].id;
    if (g_delta - cap <= 0.0) {
      const double phi = (g_delta - 1.0) * detail::signed_indicator_ratio(data[i].profile, subset, qi) + 1.0;
      values[i] = phi;
    } else {
      values[i] = cap;
    }
  }
  return EifSample::from_values(std::move(ids), std::move(values));
}

struct EstimateReport {
  Method method = Method::one_step;
  std::size_t observed = 0;        // N
  double psi_inv_hat = 0.0;        // raw, may fall below 1
  double psi_inv_clamped = 1.0;    // max(1, psi_inv_hat)
  double psi_hat = 0.0;            // 1 / psi_inv_hat
  double sigma_hat = 0.0;
  double alpha = 0.05;
  Interval ci_psi_inv;
  double n_hat = 0.0;
  Interval ci_n;
  bool clamped = false;            // n_hat or CI(n) lower limit raised to N
};

// Half-width of CI(n) written as z sqrt(n_hat (psi sigma^2 + (1 - psi)/psi)).
inline double n_halfwidth_point_form(double n_hat, double psi, double sigma, double z) {
  return z * std::sqrt(std::max(0.0, n_hat * (psi * sigma * sigma + (1.0 - psi) / psi)));
}

// The same half-width written as z sqrt(N (sigma^2 + (1 - psi)/psi^2)).
inline double n_halfwidth_bound_form(double observed, double psi, double sigma, double z) {
  return z * std::sqrt(std::max(0.0, observed * (sigma * sigma + (1.0 - psi) / (psi * psi))));
}

inline EstimateReport n_point_and_ci(double psi_inv, double sigma, std::size_t observed, double alpha,
                                     Method method) {
  const double z = two_sided_z(alpha);
  EstimateReport r;
  r.method = method;
  r.observed = observed;
  r.alpha = alpha;
  r.psi_inv_hat = psi_inv;
  r.psi_inv_clamped = std::max(1.0, psi_inv);
  r.psi_hat = 1.0 / psi_inv;
  r.sigma_hat = sigma;
  const auto ci = psi_inv_ci(psi_inv, sigma, observed, alpha);
  r.ci_psi_inv = ci.ci;

  const double N = static_cast<double>(observed);
  r.n_hat = N * psi_inv;
  const double half = n_halfwidth_point_form(r.n_hat, r.psi_hat, sigma, z);
  r.ci_n = {r.n_hat - half, r.n_hat + half};
  if (r.n_hat < N) {
    r.n_hat = N;
    r.clamped = true;
  }
  if (r.ci_n.lo < N) {
    r.ci_n.lo = N;
    r.clamped = true;
  }
  if (r.ci_n.hi < r.ci_n.lo) r.ci_n.hi = r.ci_n.lo;
  return r;
}

inline EstimateReport n_point_and_ci(const EifSample& e, std::size_t observed, double alpha) {
  return n_point_and_ci(e.center, e.sigma(), observed, alpha, Method::one_step);
}

struct BoundBlock {
  double psi_inv_hat = 0.0;
  double psi_hat = 0.0;
  double sigma_hat = 0.0;
  Interval ci_psi_inv;
  double n_hat = 0.0;
  Interval ci_n;
  bool clamped = false;
};

struct BoundsReport {
  BoundBlock lower;
  BoundBlock upper;
  SensitivityParams params;
  std::size_t observed = 0;
  double alpha = 0.05;
  Interval combined_ci_n;
  Interval combined_ci_psi_inv;
};

namespace detail {

inline BoundBlock bound_block(const EifSample& e, std::size_t observed, double alpha) {
  const double z = two_sided_z(alpha);
  const double N = static_cast<double>(observed);
  BoundBlock b;
  b.psi_inv_hat = e.center;
  b.psi_hat = 1.0 / e.center;
  b.sigma_hat = e.sigma();
  b.ci_psi_inv = psi_inv_ci(e, alpha).ci;
  b.n_hat = N / b.psi_hat;
  const double half = n_halfwidth_bound_form(N, b.psi_hat, b.sigma_hat, z);
  b.ci_n = {b.n_hat - half, b.n_hat + half};
  if (b.n_hat < N) {
    b.n_hat = N;
    b.clamped = true;
  }
  if (b.ci_n.lo < N) {
    b.ci_n.lo = N;
    b.clamped = true;
  }
  if (b.ci_n.hi < b.ci_n.lo) b.ci_n.hi = b.ci_n.lo;
  return b;
}

}  // namespace detail

// Per-side intervals for n_l and n_u and their union-form combination
// [lower-side lo, upper-side hi].
inline BoundsReport n_bounds_and_ci(const EifSample& lower, const EifSample& upper, std::size_t observed,
                                    double alpha, const SensitivityParams& params) {
  BoundsReport r;
  r.params = params;
  r.observed = observed;
  r.alpha = alpha;
  r.lower = detail::bound_block(lower, observed, alpha);
  r.upper = detail::bound_block(upper, observed, alpha);
  r.combined_ci_n = {std::min(r.lower.ci_n.lo, r.upper.ci_n.lo), std::max(r.upper.ci_n.hi, r.lower.ci_n.hi)};
  r.combined_ci_psi_inv = {std::min(r.lower.ci_psi_inv.lo, r.upper.ci_psi_inv.lo),
                          std::max(r.upper.ci_psi_inv.hi, r.lower.ci_psi_inv.hi)};
  return r;
}

}  // namespace popsize
