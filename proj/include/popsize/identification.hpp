#pragma once

// Closed-form identification formulas: q-probabilities to the inverse
// conditional capture probability, its partial-identification bounds, and the
// highest-order log-linear interaction of a full probability table.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "popsize/error.hpp"
#include "popsize/numeric.hpp"
#include "popsize/profile.hpp"

namespace popsize {

// Per-unit q-probabilities over the 2^J - 1 suffix-zero profiles, canonical
// order, each in [floor, 1].
class QVector {
 public:
  QVector() = default;

  // Validates every value against [floor, 1] and the total mass against 1.
  static QVector checked(std::vector<double> values, double floor) {
    QVector q(std::move(values), floor);
    CompensatedSum total;
    for (std::size_t i = 0; i < q.values_.size(); ++i) {
      const double v = q.values_[i];
      if (!(v > 0.0) || v < floor || v > 1.0)
        throw DomainError("q value " + std::to_string(v) + " at profile index " + std::to_string(i) +
                          " outside [floor, 1]");
      total.add(v);
    }
    if (total.value() > 1.0 + 1e-9) throw DomainError("q values sum above 1");
    return q;
  }

  // Clamps each raw value into [floor, 1] independently, no renormalization.
  // The clamped vector may carry total mass above 1; see exceeds_unit_mass().
  static QVector truncated(std::span<const double> raw, double floor) {
    std::vector<double> v(raw.begin(), raw.end());
    for (double& x : v) {
      if (std::isnan(x)) throw DomainError("NaN q prediction");
      x = std::clamp(x, floor, 1.0);
    }
    QVector q(std::move(v), floor);
    for (double x : q.values_)
      if (!(x > 0.0)) throw DomainError("q value is not positive; use a positive truncation floor");
    return q;
  }

  // Builds from a profile-keyed map. Profiles touching complement lists are
  // rejected rather than dropped.
  static QVector from_profiles(const std::map<std::uint64_t, double>& by_mask, const ListSubset& subset,
                               double floor) {
    std::vector<double> v(subset.profile_count(), -1.0);
    for (const auto& [mask, value] : by_mask) {
      const CaptureProfile y(mask, subset.lists());
      const auto idx = subset.index_of(y);
      if (!idx)
        throw DomainError("profile " + y.to_string() + " is not a nonzero suffix-zero profile of the subset");
      v[*idx] = value;
    }
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] < 0.0) throw DomainError("missing q value for profile " + subset.profile_at(i).to_string());
    return checked(std::move(v), floor);
  }

  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  int subset_size() const { return subset_size_for(values_.size()); }
  double floor() const { return floor_; }

  bool exceeds_unit_mass() const { return compensated_sum(values_) > 1.0 + 1e-9; }

 private:
  QVector(std::vector<double> values, double floor) : values_(std::move(values)), floor_(floor) {
    if (!(floor >= 0.0 && floor < 1.0)) throw ConfigError("q floor must lie in [0, 1)");
    subset_size_for(values_.size());
  }

  std::vector<double> values_;
  double floor_ = 0.0;
};

struct SensitivityParams {
  double delta = 0.0;    // bound on |alpha_1(X)|
  double epsilon = 0.01; // lower bound on gamma(X); caps 1/gamma at 1/epsilon

  static SensitivityParams make(double delta, double epsilon) {
    if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be finite and >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    return {delta, epsilon};
  }
  double cap() const { return 1.0 / epsilon; }
};

// sum over suffix-zero profiles of (-1)^(|y|+1) log q_y
inline double signed_log_sum(std::span<const double> q) {
  subset_size_for(q.size());
  CompensatedSum acc;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!(q[i] > 0.0) || !std::isfinite(q[i]))
      throw DomainError("q value must be positive and finite at profile index " + std::to_string(i) +
                        " (got " + std::to_string(q[i]) + ")");
    acc.add(profile_sign(i) * std::log(q[i]));
  }
  return acc.value();
}

// 1/gamma(X) = 1 + exp(sum (-1)^(|y|+1) log q_y)
inline double gamma_inverse(std::span<const double> q) { return 1.0 + std::exp(signed_log_sum(q)); }
inline double gamma_inverse(const QVector& q) { return gamma_inverse(q.values()); }

struct GammaInverseBounds {
  double lower;
  double upper;
};

inline double capped_gamma_inverse(double signed_log, double shift, double cap) {
  return std::min(1.0 + std::exp(signed_log + shift), cap);
}

inline GammaInverseBounds gamma_inverse_bounds(std::span<const double> q, const SensitivityParams& s) {
  const double base = signed_log_sum(q);
  return {capped_gamma_inverse(base, -s.delta, s.cap()), capped_gamma_inverse(base, s.delta, s.cap())};
}
inline GammaInverseBounds gamma_inverse_bounds(const QVector& q, const SensitivityParams& s) {
  return gamma_inverse_bounds(q.values(), s);
}

// Validates a full 2^J table of positive cell weights indexed by profile mask.
// Returns the table total.
inline double check_positive_table(std::span<const double> p) {
  if (p.size() < 2 || (p.size() & (p.size() - 1)) != 0)
    throw DomainError("probability table must have 2^J cells with J >= 1");
  CompensatedSum total;
  for (std::size_t m = 0; m < p.size(); ++m) {
    if (!(p[m] > 0.0) || !std::isfinite(p[m]))
      throw DomainError("probability table cell " + std::to_string(m) + " is not positive");
    total.add(p[m]);
  }
  return total.value();
}

struct Alpha1 {
  double value;
  bool renormalized;  // input total differed from 1 by more than 1e-8
};

// Highest-order interaction of the saturated log-linear model on J binary
// variables: sum over all 2^J cells of (-1)^(J+|y|) log p_y. The table is
// indexed by profile mask (bit j = variable j).
inline Alpha1 alpha1_from_conditional_probs(std::span<const double> p) {
  const double total = check_positive_table(p);
  const int J = std::countr_zero(p.size());
  const double log_total = std::log(total);
  CompensatedSum acc;
  for (std::size_t m = 0; m < p.size(); ++m) {
    const int sign = (J + popcount(m)) % 2 == 0 ? 1 : -1;
    acc.add(sign * (std::log(p[m]) - log_total));
  }
  return {acc.value(), std::fabs(total - 1.0) > 1e-8};
}

struct OddsRatioFactor {
  std::uint64_t rest_mask;  // bits over lists 3..K (bit 0 = list 3)
  int rest_order;           // |(y_3, ..., y_K)|
  double odds_ratio;        // OR_{Y1,Y2}((y_3, ..., y_K))
};

struct OddsRatioDecomposition {
  double lhs;                  // exp((-1)^K alpha_1) = prod_even p / prod_odd p
  double even_odd_ratio;       // prod_even OR / prod_odd OR
  std::vector<OddsRatioFactor> factors;
};

// Writes exp((-1)^K alpha_1) both as the even/odd cell-product ratio and as
// the even/odd product of conditional odds ratios between lists 1 and 2.
inline OddsRatioDecomposition odds_ratio_decomposition(std::span<const double> p) {
  check_positive_table(p);
  const int K = std::countr_zero(p.size());
  if (K < 2) throw DomainError("odds-ratio decomposition needs at least two lists");

  CompensatedSum log_lhs;
  for (std::size_t m = 0; m < p.size(); ++m) log_lhs.add((popcount(m) % 2 == 0 ? 1 : -1) * std::log(p[m]));

  OddsRatioDecomposition out{std::exp(log_lhs.value()), 0.0, {}};
  CompensatedSum log_ratio;
  const std::size_t rest_cells = p.size() >> 2;
  for (std::uint64_t rest = 0; rest < rest_cells; ++rest) {
    const std::size_t base = rest << 2;
    const double log_or = std::log(p[base | 0b11]) + std::log(p[base]) - std::log(p[base | 0b01]) -
                          std::log(p[base | 0b10]);
    const int order = popcount(rest);
    out.factors.push_back({rest, order, std::exp(log_or)});
    log_ratio.add(order % 2 == 0 ? log_or : -log_or);
  }
  out.even_odd_ratio = std::exp(log_ratio.value());
  return out;
}

}  // namespace popsize
