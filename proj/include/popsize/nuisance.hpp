#pragma once

// Cross-fitted q-probability estimates.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <future>
#include <numeric>
#include <random>
#include <vector>

#include "popsize/dataset.hpp"
#include "popsize/error.hpp"
#include "popsize/identification.hpp"
#include "popsize/learners.hpp"

namespace popsize {

// Seeded partition of n units into folds whose sizes differ by at most one.
// Entry i is the fold of the i-th unit (dataset order).
inline std::vector<int> split_folds(std::size_t n_units, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("cross-fitting needs at least 2 folds");
  if (n_units < static_cast<std::size_t>(n_folds))
    throw ConfigError("need at least as many units (" + std::to_string(n_units) + ") as folds (" +
                      std::to_string(n_folds) + ")");
  std::vector<std::size_t> order(n_units);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n_units; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<int> fold(n_units);
  for (std::size_t r = 0; r < n_units; ++r) fold[order[r]] = static_cast<int>(r % static_cast<std::size_t>(n_folds));
  return fold;
}

inline std::vector<int> split_folds(const ObservedDataset& data, int n_folds, std::uint64_t seed) {
  return split_folds(data.size(), n_folds, seed);
}

struct QEstimates {
  std::vector<std::int64_t> unit_ids;   // ascending, parallel to per_unit
  std::vector<QVector> per_unit;
  std::vector<int> fold;                // fold of each unit
  std::vector<std::vector<std::int64_t>> training_ids;  // per fold: ids the predicting model saw
  double floor = 0.0;

  std::size_t size() const { return per_unit.size(); }
  bool empty() const { return per_unit.empty(); }

  // Position of a unit id, or throws DataError.
  std::size_t position_of(std::int64_t id) const {
    const auto it = std::lower_bound(unit_ids.begin(), unit_ids.end(), id);
    if (it == unit_ids.end() || *it != id) throw DataError("unit " + std::to_string(id) + " has no q estimate");
    return static_cast<std::size_t>(it - unit_ids.begin());
  }

  // Builds estimates that did not come from cross-fitting (oracle or
  // simulated nuisances). Ids must be ascending.
  static QEstimates from_vectors(std::vector<std::int64_t> ids, std::vector<QVector> q, double floor) {
    if (ids.size() != q.size()) throw DataError("id and q-vector counts differ");
    if (!std::is_sorted(ids.begin(), ids.end())) throw DataError("unit ids must be ascending");
    QEstimates out;
    out.unit_ids = std::move(ids);
    out.per_unit = std::move(q);
    out.fold.assign(out.per_unit.size(), 0);
    out.floor = floor;
    return out;
  }
};

// Each unit's q-vector comes from the model trained on the other folds, then
// every suffix-zero entry is clamped to [floor, 1] without renormalizing.
// One estimate set per floor; the models are fitted once.
inline std::vector<QEstimates> cross_fit_q(const ObservedDataset& data, const ListSubset& subset,
                                           const LearnerSpec& spec, int n_folds, const std::vector<double>& floors) {
  spec.validate();
  if (floors.empty()) throw ConfigError("no q floor given");
  for (double floor : floors)
    if (!(floor >= 0.0 && floor < 1.0)) throw ConfigError("q floor must lie in [0, 1)");
  const auto fold = split_folds(data, n_folds, spec.seed);

  std::vector<std::vector<double>> raw(data.size());
  std::vector<std::vector<std::int64_t>> training_ids(static_cast<std::size_t>(n_folds));
  auto run_fold = [&](int f) {
    std::vector<std::size_t> train_pos;
    std::vector<std::size_t> test_pos;
    for (std::size_t i = 0; i < data.size(); ++i) (fold[i] == f ? test_pos : train_pos).push_back(i);
    const auto model = fit_q(data.select(train_pos), subset, spec);
    auto& seen = training_ids[static_cast<std::size_t>(f)];
    for (std::size_t p : train_pos) seen.push_back(data[p].id);
    for (std::size_t p : test_pos) raw[p] = model.predict_suffix_zero(data[p].covariates);
  };

  // Folds write disjoint slots.
  std::vector<std::future<void>> jobs;
  for (int f = 0; f < n_folds; ++f) jobs.push_back(std::async(std::launch::async, run_fold, f));
  for (auto& j : jobs) j.get();

  std::vector<QEstimates> out;
  for (double floor : floors) {
    QEstimates q;
    q.floor = floor;
    q.fold = fold;
    q.training_ids = training_ids;
    for (std::size_t i = 0; i < data.size(); ++i) {
      q.unit_ids.push_back(data[i].id);
      q.per_unit.push_back(QVector::truncated(raw[i], floor));
    }
    out.push_back(std::move(q));
  }
  return out;
}

inline QEstimates cross_fit_q(const ObservedDataset& data, const ListSubset& subset, const LearnerSpec& spec,
                              int n_folds, double floor) {
  return std::move(cross_fit_q(data, subset, spec, n_folds, std::vector<double>{floor}).front());
}

}  // namespace popsize
