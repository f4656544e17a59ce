#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "popsize/error.hpp"
#include "popsize/profile.hpp"

namespace popsize {

enum class ColumnKind { numeric, categorical };

struct CovariateColumn {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> levels;  // categorical only; codes index this list
};

// Categorical covariates are stored as their level code (0, 1, ...).
struct ObservedUnit {
  std::int64_t id = 0;
  std::vector<double> covariates;
  CaptureProfile profile;
};

// The N observed units (nonzero profiles only), sorted by ascending id.
class ObservedDataset {
 public:
  ObservedDataset() = default;

  ObservedDataset(int lists, std::vector<CovariateColumn> schema, std::vector<ObservedUnit> units,
                  std::vector<std::string> list_names = {})
      : lists_(lists), schema_(std::move(schema)), units_(std::move(units)), list_names_(std::move(list_names)) {
    if (lists < 1 || lists > kMaxLists) throw ConfigError("list count out of range");
    if (list_names_.empty())
      for (int k = 0; k < lists; ++k) list_names_.push_back("list" + std::to_string(k + 1));
    if (static_cast<int>(list_names_.size()) != lists) throw ConfigError("list name count does not match K");
    for (const auto& col : schema_)
      if (col.kind == ColumnKind::categorical && col.levels.empty())
        throw ConfigError("categorical column '" + col.name + "' has no levels");

    std::sort(units_.begin(), units_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < units_.size(); ++i) {
      const auto& u = units_[i];
      if (i > 0 && units_[i - 1].id == u.id) throw DataError("duplicate unit id " + std::to_string(u.id));
      if (u.profile.lists() != lists) throw DataError("unit " + std::to_string(u.id) + " has wrong list count");
      if (u.profile.is_zero())
        throw DataError("unit " + std::to_string(u.id) + " has an all-zero capture profile");
      if (u.covariates.size() != schema_.size())
        throw DataError("unit " + std::to_string(u.id) + " has wrong covariate dimension");
      for (std::size_t c = 0; c < schema_.size(); ++c) {
        const double v = u.covariates[c];
        if (!std::isfinite(v)) throw DataError("non-finite covariate on unit " + std::to_string(u.id));
        if (schema_[c].kind == ColumnKind::categorical &&
            (v < 0 || v != std::floor(v) || v >= static_cast<double>(schema_[c].levels.size())))
          throw DataError("categorical code out of range on unit " + std::to_string(u.id), std::nullopt,
                          schema_[c].name);
      }
    }
  }

  std::size_t size() const { return units_.size(); }
  bool empty() const { return units_.empty(); }
  int lists() const { return lists_; }
  const std::vector<CovariateColumn>& schema() const { return schema_; }
  const std::vector<ObservedUnit>& units() const { return units_; }
  const ObservedUnit& operator[](std::size_t i) const { return units_[i]; }
  const std::vector<std::string>& list_names() const { return list_names_; }

  bool all_categorical() const {
    return std::all_of(schema_.begin(), schema_.end(),
                       [](const auto& c) { return c.kind == ColumnKind::categorical; });
  }

  // Units at the given positions, same schema.
  ObservedDataset select(const std::vector<std::size_t>& positions) const {
    std::vector<ObservedUnit> picked;
    picked.reserve(positions.size());
    for (std::size_t p : positions) picked.push_back(units_.at(p));
    return ObservedDataset(lists_, schema_, std::move(picked), list_names_);
  }

 private:
  int lists_ = 1;
  std::vector<CovariateColumn> schema_;
  std::vector<ObservedUnit> units_;
  std::vector<std::string> list_names_;
};

}  // namespace popsize
