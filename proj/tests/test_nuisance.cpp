#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "popsize/learners.hpp"
#include "popsize/nuisance.hpp"

using namespace popsize;

namespace {

CovariateColumn binary_column(const std::string& name) {
  return {name, ColumnKind::categorical, {"a", "b"}};
}

// K = 3 observed profiles drawn from a fixed law `probs` over masks 1..7,
// independent of the covariates: a binary categorical, plus a standard-normal
// numeric when `numeric` is set.
ObservedDataset constant_q_dataset(std::size_t n, const std::vector<double>& probs, bool numeric,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick(probs.begin(), probs.end());
  std::bernoulli_distribution coin(0.4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<CovariateColumn> schema{binary_column("g")};
  if (numeric) schema.push_back({"x", ColumnKind::numeric, {}});
  std::vector<ObservedUnit> units;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x{coin(rng) ? 1.0 : 0.0};
    if (numeric) x.push_back(gauss(rng));
    units.push_back({static_cast<std::int64_t>(i), x, CaptureProfile(static_cast<std::uint64_t>(pick(rng) + 1), 3)});
  }
  return ObservedDataset(3, schema, std::move(units));
}

}  // namespace

TEST(SplitFolds, FourUnitsTwoFoldsIsDeterministic) {
  const auto a = split_folds(4, 2, 7);
  const auto b = split_folds(4, 2, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), 0), 2);
  EXPECT_EQ(std::count(a.begin(), a.end(), 1), 2);
}

TEST(SplitFolds, FiveUnitsGiveThreeAndTwo) {
  const auto f = split_folds(5, 2, 1);
  std::vector<long> sizes{std::count(f.begin(), f.end(), 0), std::count(f.begin(), f.end(), 1)};
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<long>{2, 3}));
}

TEST(SplitFolds, Preconditions) {
  EXPECT_THROW(split_folds(1, 2, 0), ConfigError);
  EXPECT_THROW(split_folds(10, 1, 0), ConfigError);
}

TEST(SplitFolds, PropertyBalancedPartition) {
  for (std::size_t n = 2; n < 60; ++n)
    for (int k = 2; k <= std::min<int>(6, static_cast<int>(n)); ++k) {
      const auto f = split_folds(n, k, n * 31 + static_cast<std::size_t>(k));
      ASSERT_EQ(f.size(), n);
      long lo = static_cast<long>(n), hi = 0;
      for (int j = 0; j < k; ++j) {
        const long c = std::count(f.begin(), f.end(), j);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      EXPECT_LE(hi - lo, 1);
      EXPECT_GT(lo, 0);
    }
}

TEST(LearnerSpec, ParseAndValidate) {
  EXPECT_EQ(LearnerSpec::parse("knn:k=50").neighbors, 50);
  const auto ml = LearnerSpec::parse("multinomial-logistic:lambda=0.01,iters=20,tol=1e-6");
  EXPECT_EQ(ml.kind, LearnerKind::multinomial_logistic);
  EXPECT_DOUBLE_EQ(ml.ridge, 0.01);
  EXPECT_EQ(ml.max_iterations, 20);
  EXPECT_EQ(LearnerSpec::parse("empirical-cell").kind, LearnerKind::empirical_cell);
  EXPECT_THROW(LearnerSpec::parse("forest"), ConfigError);
  EXPECT_THROW(LearnerSpec::parse("knn:k=0"), ConfigError);
  EXPECT_THROW(LearnerSpec::parse("multinomial-logistic:lambda=-1"), ConfigError);
  EXPECT_THROW(LearnerSpec::parse("multinomial-logistic:tol=0"), ConfigError);
  const LearnerSpec d;
  EXPECT_EQ(d.kind, LearnerKind::multinomial_logistic);
  EXPECT_DOUBLE_EQ(d.ridge, 1e-3);
  EXPECT_EQ(d.max_iterations, 500);
  EXPECT_DOUBLE_EQ(d.tolerance, 1e-8);
}

TEST(FitQ, EmpiricalCellMatchesCellFrequencies) {
  // J = 2 of K = 3; labels: 10, 01, 11, or pooled (anything touching list 3).
  const ListSubset s(3, {0, 1});
  const std::vector<std::pair<int, std::uint64_t>> rows{{0, 0b001}, {0, 0b001}, {0, 0b011}, {0, 0b100},
                                                        {1, 0b010}, {1, 0b010}, {1, 0b010}, {1, 0b111}};
  std::vector<ObservedUnit> units;
  for (std::size_t i = 0; i < rows.size(); ++i)
    units.push_back({static_cast<std::int64_t>(i), {double(rows[i].first)}, CaptureProfile(rows[i].second, 3)});
  const ObservedDataset data(3, {binary_column("g")}, units);
  const auto model = fit_q(data, s, LearnerSpec::parse("empirical-cell"));
  const auto p0 = model.predict(std::vector<double>{0.0});
  const auto p1 = model.predict(std::vector<double>{1.0});
  EXPECT_EQ(p0, (std::vector<double>{0.5, 0.0, 0.25, 0.25}));
  EXPECT_EQ(p1, (std::vector<double>{0.0, 0.75, 0.0, 0.25}));
  EXPECT_EQ(model.predict_suffix_zero(std::vector<double>{1.0}), (std::vector<double>{0.0, 0.75, 0.0}));
}

TEST(FitQ, EmpiricalCellRejectsNumericCovariates) {
  const auto data = constant_q_dataset(50, {1, 1, 1, 1, 1, 1, 1}, true, 3);
  EXPECT_THROW(fit_q(data, ListSubset::all(3), LearnerSpec::parse("empirical-cell")), ConfigError);
}

TEST(FitQ, KnnWithAllNeighborsGivesGlobalFrequencies) {
  const auto data = constant_q_dataset(200, {3, 1, 1, 2, 1, 1, 1}, true, 5);
  const ListSubset s(3, {0, 1});
  std::vector<double> global(4, 0.0);
  for (const auto& u : data.units()) global[class_label(u.profile, s)] += 1.0 / 200.0;
  auto spec = LearnerSpec::parse("knn:k=200");
  const auto model = fit_q(data, s, spec);
  for (const auto& u : data.units()) {
    const auto p = model.predict(u.covariates);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(p[c], global[c], 1e-12);
  }
}

TEST(FitQ, KnnTiesBreakByUnitId) {
  // All covariates identical: the k nearest are the k smallest ids.
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 6; ++i)
    units.push_back({10 - i, {0.0}, CaptureProfile(i < 3 ? 0b001U : 0b010U, 2)});
  const ObservedDataset data(2, {binary_column("g")}, units);
  const auto model = fit_q(data, ListSubset::all(2), LearnerSpec::parse("knn:k=3"));
  // ids 5, 6, 7 carry profile 01.
  EXPECT_EQ(model.predict(std::vector<double>{0.0}), (std::vector<double>{0.0, 1.0, 0.0, 0.0}));
}

TEST(FitQ, LogisticBeatsCellMeanOnSeparableData) {
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 60; ++i) {
    const double x = -3.0 + 0.1 * i;
    const std::uint64_t y = x < -1.0 ? 0b001 : x < 1.0 ? 0b010 : 0b011;
    units.push_back({i, {x}, CaptureProfile(y, 2)});
  }
  const ObservedDataset data(2, {{"x", ColumnKind::numeric, {}}}, units);
  const auto s = ListSubset::all(2);
  auto spec = LearnerSpec::parse("multinomial-logistic:lambda=0,iters=2000");
  const auto model = fit_q(data, s, spec);
  std::vector<std::size_t> labels;
  std::vector<double> counts(4, 0.0);
  for (const auto& u : data.units()) {
    labels.push_back(class_label(u.profile, s));
    counts[labels.back()] += 1.0;
  }
  double baseline = 0.0;
  for (auto l : labels) baseline -= std::log(counts[l] / 60.0) / 60.0;
  const auto& fitted = dynamic_cast<const detail::MultinomialLogisticModel&>(model.model());
  double direct = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) direct -= std::log(model.predict(data[i].covariates)[labels[i]]) / 60.0;
  EXPECT_NEAR(fitted.training_log_loss(labels), direct, 1e-12);
  EXPECT_LT(direct, 0.25 * baseline);
}

TEST(FitQ, LearnersRecoverConstantQ) {
  // Observed-profile law constant in X; J = 3 with no pooled class.
  const std::vector<double> probs{0.25, 0.2, 0.1, 0.15, 0.1, 0.05, 0.15};
  const auto data = constant_q_dataset(5000, probs, false, 17);
  const auto data_num = constant_q_dataset(5000, probs, true, 17);
  const auto s = ListSubset::all(3);
  struct Case {
    const ObservedDataset* d;
    std::string spec;
    double effective_n;
  };
  const std::vector<Case> cases{{&data, "empirical-cell", 5000 * 0.6},
                                {&data_num, "knn:k=1000", 1000},
                                {&data_num, "multinomial-logistic", 5000 * 0.4 / 3.0}};
  for (const auto& c : cases) {
    const auto model = fit_q(*c.d, s, LearnerSpec::parse(c.spec));
    for (std::size_t i = 0; i < c.d->size(); i += 50) {
      const auto p = model.predict_suffix_zero((*c.d)[i].covariates);
      for (std::size_t y = 0; y < 7; ++y) {
        const double se = std::sqrt(probs[y] * (1 - probs[y]) / c.effective_n);
        EXPECT_NEAR(p[y], probs[y], 5 * se) << c.spec << " profile " << y;
      }
    }
  }
}

TEST(CrossFit, ExclusionFloorAndDeterminism) {
  const auto data = constant_q_dataset(400, {0.3, 0.2, 0.1, 0.15, 0.1, 0.05, 0.1}, true, 23);
  const ListSubset s(3, {0, 1});
  LearnerSpec spec = LearnerSpec::parse("knn:k=15");
  spec.seed = 99;
  const auto q = cross_fit_q(data, s, spec, 3, 0.02);
  ASSERT_EQ(q.size(), data.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& seen = q.training_ids[static_cast<std::size_t>(q.fold[i])];
    EXPECT_FALSE(std::binary_search(seen.begin(), seen.end(), q.unit_ids[i]));
    EXPECT_EQ(seen.size() + static_cast<std::size_t>(std::count(q.fold.begin(), q.fold.end(), q.fold[i])),
              data.size());
    for (double v : q.per_unit[i].values()) EXPECT_GE(v, 0.02);
  }
  const auto again = cross_fit_q(data, s, spec, 3, 0.02);
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t y = 0; y < 3; ++y)
      EXPECT_EQ(std::bit_cast<std::uint64_t>(q.per_unit[i][y]), std::bit_cast<std::uint64_t>(again.per_unit[i][y]));
}

TEST(CrossFit, TwoFoldsSwapModels) {
  const auto data = constant_q_dataset(100, {1, 1, 1, 1, 1, 1, 1}, false, 2);
  LearnerSpec spec = LearnerSpec::parse("empirical-cell");
  spec.seed = 4;
  const auto q = cross_fit_q(data, ListSubset::all(3), spec, 2, 0.0);
  const auto fold = split_folds(data, 2, 4);
  for (int f = 0; f < 2; ++f) {
    std::vector<std::size_t> other;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (fold[i] != f) other.push_back(i);
    const auto model = fit_q(data.select(other), ListSubset::all(3), spec);
    for (std::size_t i = 0; i < data.size(); ++i)
      if (fold[i] == f) {
        const auto p = model.predict_suffix_zero(data[i].covariates);
        for (std::size_t y = 0; y < 7; ++y) EXPECT_EQ(q.per_unit[i][y], p[y]);
      }
  }
}

TEST(CrossFit, FloorClampsRarePrediction) {
  // One profile appears once in 1000 units; with floor 0.04 every prediction
  // of it is raised to 0.04.
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 1000; ++i) units.push_back({i, {0.0}, CaptureProfile(i == 0 ? 0b11U : (i % 2 ? 0b01U : 0b10U), 2)});
  const ObservedDataset data(2, {binary_column("g")}, units);
  const auto q = cross_fit_q(data, ListSubset::all(2), LearnerSpec::parse("empirical-cell"), 2, 0.04);
  for (const auto& v : q.per_unit) EXPECT_DOUBLE_EQ(v[2], 0.04);
  // Without a floor the zero prediction of the fold that never saw it is rejected.
  EXPECT_THROW(cross_fit_q(data, ListSubset::all(2), LearnerSpec::parse("empirical-cell"), 2, 0.0), DomainError);
}

TEST(CrossFit, SweepMatchesSingleFloorCalls) {
  const auto data = constant_q_dataset(300, {0.3, 0.2, 0.1, 0.15, 0.1, 0.05, 0.1}, true, 29);
  const auto s = ListSubset::all(3);
  auto spec = LearnerSpec::parse("multinomial-logistic:iters=50");
  const auto sweep = cross_fit_q(data, s, spec, 2, std::vector<double>{0.01, 0.08});
  const auto single = cross_fit_q(data, s, spec, 2, 0.08);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t y = 0; y < 7; ++y) EXPECT_EQ(sweep[1].per_unit[i][y], single.per_unit[i][y]);
}

TEST(CrossFit, OraclePassThroughWithinSamplingNoise) {
  // Single categorical covariate with three levels, each with its own q law.
  const std::vector<std::vector<double>> law{{0.3, 0.3, 0.1, 0.1, 0.1, 0.05, 0.05},
                                             {0.1, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1},
                                             {0.5, 0.1, 0.05, 0.2, 0.05, 0.05, 0.05}};
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> level(0, 2);
  std::vector<std::discrete_distribution<int>> pick;
  for (const auto& l : law) pick.emplace_back(l.begin(), l.end());
  std::vector<ObservedUnit> units;
  for (int i = 0; i < 30000; ++i) {
    const int g = level(rng);
    units.push_back({i, {double(g)}, CaptureProfile(static_cast<std::uint64_t>(pick[g](rng) + 1), 3)});
  }
  const ObservedDataset data(3, {{"g", ColumnKind::categorical, {"a", "b", "c"}}}, units);
  const auto q = cross_fit_q(data, ListSubset::all(3), LearnerSpec::parse("empirical-cell"), 2, 0.0);
  for (std::size_t i = 0; i < data.size(); i += 97) {
    const auto g = static_cast<std::size_t>(data[i].covariates[0]);
    const double cell = 30000.0 / 3.0 / 2.0;
    for (std::size_t y = 0; y < 7; ++y) EXPECT_NEAR(q.per_unit[i][y], law[g][y], 3.0 / std::sqrt(cell));
  }
}
