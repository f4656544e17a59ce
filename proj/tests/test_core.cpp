#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "popsize/identification.hpp"
#include "popsize/profile.hpp"

using namespace popsize;

namespace {

// Random positive 2^K table with alpha_1 = 0 on the sub-table of `subset`
// (complement lists zero), normalized to 1. Cell 0 is solved for.
std::vector<double> table_with_zero_interaction(const ListSubset& subset, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(std::size_t{1} << subset.lists());
  for (double& v : p) v = u(rng);
  const int J = subset.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < subset.profile_count(); ++i) {
    const auto y = subset.profile_at(i);
    acc += ((J + y.order()) % 2 == 0 ? 1.0 : -1.0) * std::log(p[y.mask()]);
  }
  // sign of the zero cell is (-1)^J
  p[0] = std::exp(-acc * (J % 2 == 0 ? 1.0 : -1.0));
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> sub_table(const std::vector<double>& p, const ListSubset& subset) {
  std::vector<double> out(subset.profile_count() + 1);
  out[0] = p[0];
  for (std::size_t i = 0; i < subset.profile_count(); ++i) out[i + 1] = p[subset.profile_at(i).mask()];
  return out;
}

}  // namespace

TEST(CaptureProfile, BitsOrderAndString) {
  const auto y = CaptureProfile::from_bits({true, false, true});
  EXPECT_EQ(y.lists(), 3);
  EXPECT_EQ(y.order(), 2);
  EXPECT_EQ(y.to_string(), "101");
  EXPECT_TRUE(y[0]);
  EXPECT_FALSE(y[1]);
  EXPECT_TRUE(CaptureProfile(0, 4).is_zero());
}

TEST(ListSubset, RejectsInvalidSelections) {
  EXPECT_THROW(ListSubset(3, {}), ConfigError);
  EXPECT_THROW(ListSubset(3, {0, 0}), ConfigError);
  EXPECT_THROW(ListSubset(3, {3}), ConfigError);
  EXPECT_THROW(ListSubset(0, {0}), ConfigError);
}

TEST(ListSubset, ComplementPartitionsLists) {
  const ListSubset s(5, {3, 1});
  EXPECT_EQ(s.size(), 2);
  EXPECT_EQ(s.complement(), (std::vector<int>{0, 2, 4}));
  EXPECT_EQ(s.selected_mask() | s.complement_mask(), 0b11111U);
  EXPECT_EQ(s.selected_mask() & s.complement_mask(), 0U);
}

TEST(EnumerateSuffixZero, SingleListOfThree) {
  const auto profiles = enumerate_suffix_zero_profiles(ListSubset(3, {0}));
  ASSERT_EQ(profiles.size(), 1U);
  EXPECT_EQ(profiles[0].to_string(), "100");
}

TEST(EnumerateSuffixZero, FullTwoListEnumeration) {
  const auto profiles = enumerate_suffix_zero_profiles(ListSubset::all(2));
  ASSERT_EQ(profiles.size(), 3U);
  EXPECT_EQ(profiles[0].to_string(), "10");
  EXPECT_EQ(profiles[1].to_string(), "01");
  EXPECT_EQ(profiles[2].to_string(), "11");
}

TEST(EnumerateSuffixZero, ComplementStaysZero) {
  const ListSubset s(5, {0, 1});
  const auto profiles = enumerate_suffix_zero_profiles(s);
  ASSERT_EQ(profiles.size(), 3U);
  for (const auto& y : profiles) {
    EXPECT_FALSE(y[2] || y[3] || y[4]);
    EXPECT_FALSE(y.is_zero());
  }
}

TEST(EnumerateSuffixZero, CountAndIndexRoundTrip) {
  for (int K = 1; K <= 6; ++K)
    for (int J = 1; J <= K; ++J) {
      std::vector<int> sel(static_cast<std::size_t>(J));
      std::iota(sel.begin(), sel.end(), K - J);
      const ListSubset s(K, sel);
      const auto profiles = enumerate_suffix_zero_profiles(s);
      ASSERT_EQ(profiles.size(), (std::size_t{1} << J) - 1);
      for (std::size_t i = 0; i < profiles.size(); ++i) {
        EXPECT_EQ(s.index_of(profiles[i]), i);
        EXPECT_EQ(profile_sign(i), profiles[i].order() % 2 == 1 ? 1 : -1);
      }
    }
  const ListSubset s(3, {0, 1});
  EXPECT_FALSE(s.index_of(CaptureProfile(0b100, 3)).has_value());
  EXPECT_FALSE(s.index_of(CaptureProfile(0b101, 3)).has_value());
  EXPECT_FALSE(s.index_of(CaptureProfile(0, 3)).has_value());
}

TEST(GammaInverse, HomogeneousIndependentLists) {
  const std::vector<double> q{1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_NEAR(gamma_inverse(q), 4.0 / 3.0, 1e-15);
}

TEST(GammaInverse, TwoListClosedForm) {
  const std::vector<double> q{0.2, 0.3, 0.1};
  EXPECT_NEAR(gamma_inverse(q), 1.6, 1e-14);
}

TEST(GammaInverse, NonpositiveValueNamesProfile) {
  const std::vector<double> q{0.2, 0.0, 0.1};
  try {
    gamma_inverse(q);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos) << e.what();
  }
}

TEST(GammaInverse, MatchesEnumerationForThreeLists) {
  std::mt19937_64 rng(11);
  const auto s = ListSubset::all(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = table_with_zero_interaction(s, rng);
    std::vector<double> q(7);
    for (std::size_t i = 0; i < 7; ++i) q[i] = p[s.profile_at(i).mask()] / (1.0 - p[0]);
    EXPECT_NEAR(gamma_inverse(q), 1.0 / (1.0 - p[0]), 1e-12);
  }
}

TEST(GammaInverse, PropertyAlwaysAboveOne) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const int J = 1 + rep % 5;
    std::vector<double> q((std::size_t{1} << J) - 1);
    for (double& v : q) v = u(rng);
    EXPECT_GT(gamma_inverse(q), 1.0);
  }
}

TEST(GammaInverse, PropertyPermutationInvariance) {
  // Relabel the selected lists: profile with local mask m maps to permuted mask.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 0.3);
  for (int rep = 0; rep < 200; ++rep) {
    const int J = 2 + rep % 3;
    const std::size_t m = (std::size_t{1} << J) - 1;
    std::vector<double> q(m);
    for (double& v : q) v = u(rng);
    std::vector<int> perm(static_cast<std::size_t>(J));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> permuted(m);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t local = i + 1;
      std::size_t mapped = 0;
      for (int j = 0; j < J; ++j)
        if (local >> j & 1U) mapped |= std::size_t{1} << perm[static_cast<std::size_t>(j)];
      permuted[mapped - 1] = q[i];
    }
    EXPECT_NEAR(gamma_inverse(permuted), gamma_inverse(q), 1e-12 * gamma_inverse(q));
  }
}

TEST(GammaInverse, PropertyTwoListSignConvention) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 0.33);
  for (int rep = 0; rep < 500; ++rep) {
    const std::vector<double> q{u(rng), u(rng), u(rng)};
    const double expected = q[0] * q[1] / q[2];
    EXPECT_NEAR(gamma_inverse(q) - 1.0, expected, 1e-13 * (1.0 + expected));
  }
}

TEST(GammaInverseBounds, CollapseAtZeroDelta) {
  const std::vector<double> q{0.3, 0.2, 0.15};
  const auto b = gamma_inverse_bounds(q, SensitivityParams::make(0.0, 0.01));
  EXPECT_EQ(b.lower, b.upper);
  EXPECT_NEAR(b.lower, gamma_inverse(q), 1e-15);
}

TEST(GammaInverseBounds, LogTwoExample) {
  const std::vector<double> q{0.25, 0.25, 0.5};
  const auto b = gamma_inverse_bounds(q, SensitivityParams::make(std::log(2.0), 0.1));
  EXPECT_NEAR(b.lower, 1.0625, 1e-14);
  EXPECT_NEAR(b.upper, 1.25, 1e-14);
}

TEST(GammaInverseBounds, CapActivates) {
  const std::vector<double> q{0.25, 0.25, 0.5};
  const auto b = gamma_inverse_bounds(q, SensitivityParams::make(10.0, 0.1));
  EXPECT_DOUBLE_EQ(b.upper, 10.0);
  EXPECT_LT(b.lower, b.upper);
}

TEST(GammaInverseBounds, PropertyMonotoneInDelta) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.02, 0.3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::vector<double> q{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    const double eps = 0.02 + 0.2 * u(rng);
    double prev_lo = INFINITY, prev_hi = 0.0;
    for (double delta = 0.0; delta <= 3.0; delta += 0.25) {
      const auto b = gamma_inverse_bounds(q, SensitivityParams::make(delta, eps));
      EXPECT_LE(b.lower, prev_lo);
      EXPECT_GE(b.upper, prev_hi);
      EXPECT_LE(b.lower, b.upper);
      EXPECT_GE(b.lower, 1.0);
      EXPECT_LE(b.upper, 1.0 / eps);
      prev_lo = b.lower;
      prev_hi = b.upper;
    }
  }
}

TEST(SensitivityParams, Validation) {
  EXPECT_THROW(SensitivityParams::make(-0.1, 0.1), ConfigError);
  EXPECT_THROW(SensitivityParams::make(0.1, 0.0), ConfigError);
  EXPECT_THROW(SensitivityParams::make(0.1, 1.0), ConfigError);
  EXPECT_DOUBLE_EQ(SensitivityParams::make(0.1, 0.04).cap(), 25.0);
}

TEST(QVector, CheckedEnforcesFloorAndMass) {
  EXPECT_NO_THROW(QVector::checked({0.2, 0.3, 0.1}, 0.05));
  EXPECT_THROW(QVector::checked({0.2, 0.01, 0.1}, 0.05), DomainError);
  EXPECT_THROW(QVector::checked({0.5, 0.4, 0.3}, 0.05), DomainError);
  EXPECT_THROW(QVector::checked({0.5, 1.2, 0.3}, 0.05), DomainError);
}

TEST(QVector, TruncationClampsWithoutRenormalizing) {
  const std::vector<double> raw{0.001, 0.5, 0.499};
  const auto q = QVector::truncated(raw, 0.04);
  EXPECT_DOUBLE_EQ(q[0], 0.04);
  EXPECT_DOUBLE_EQ(q[1], 0.5);
  EXPECT_DOUBLE_EQ(q[2], 0.499);
  EXPECT_TRUE(q.exceeds_unit_mass());
}

TEST(QVector, FromProfilesRejectsComplementProfiles) {
  const ListSubset s(3, {0, 1});
  std::map<std::uint64_t, double> ok{{0b001, 0.2}, {0b010, 0.3}, {0b011, 0.1}};
  const auto q = QVector::from_profiles(ok, s, 0.0);
  EXPECT_NEAR(gamma_inverse(q), 1.6, 1e-14);
  auto bad = ok;
  bad[0b101] = 0.05;
  EXPECT_THROW(QVector::from_profiles(bad, s, 0.0), DomainError);
  ok.erase(0b011);
  EXPECT_THROW(QVector::from_profiles(ok, s, 0.0), DomainError);
}

TEST(Alpha1, IndependentBernoullisGiveZero) {
  const double a = 0.3, b = 0.6;
  const std::vector<double> p{(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b};
  EXPECT_NEAR(alpha1_from_conditional_probs(p).value, 0.0, 1e-14);
}

TEST(Alpha1, LogSixteenExample) {
  const std::vector<double> p{0.4, 0.1, 0.1, 0.4};
  const auto a = alpha1_from_conditional_probs(p);
  EXPECT_NEAR(a.value, std::log(16.0), 1e-14);
  EXPECT_FALSE(a.renormalized);
}

TEST(Alpha1, RecoversPlantedThreeWayCoefficient) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> coef(0.0, 0.7);
  for (int rep = 0; rep < 20; ++rep) {
    // log p_y = sum over subsets S of y of lambda_S
    std::vector<double> lambda(8);
    for (double& l : lambda) l = coef(rng);
    std::vector<double> p(8);
    for (std::size_t y = 0; y < 8; ++y) {
      double lp = 0.0;
      for (std::size_t s = 0; s < 8; ++s)
        if ((s & y) == s) lp += lambda[s];
      p[y] = std::exp(lp);
    }
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= total;
    EXPECT_NEAR(alpha1_from_conditional_probs(p).value, lambda[7], 1e-10);
  }
}

TEST(Alpha1, UnnormalizedInputIsFlagged) {
  const std::vector<double> p{4.0, 1.0, 1.0, 4.0};
  const auto a = alpha1_from_conditional_probs(p);
  EXPECT_NEAR(a.value, std::log(16.0), 1e-14);
  EXPECT_TRUE(a.renormalized);
}

TEST(Alpha1, NonpositiveCellIsRejected) {
  EXPECT_THROW(alpha1_from_conditional_probs(std::vector<double>{0.5, 0.0, 0.25, 0.25}), DomainError);
  EXPECT_THROW(alpha1_from_conditional_probs(std::vector<double>{0.5, 0.5, 0.0}), DomainError);
}

TEST(Alpha1, PropertyZeroForProductTables) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int rep = 0; rep < 300; ++rep) {
    const int J = 2 + rep % 5;  // for J = 1 the alternating sum is the main effect
    std::vector<double> marg(static_cast<std::size_t>(J));
    for (double& m : marg) m = u(rng);
    std::vector<double> p(std::size_t{1} << J);
    for (std::size_t y = 0; y < p.size(); ++y) {
      p[y] = 1.0;
      for (int j = 0; j < J; ++j) p[y] *= (y >> j & 1U) ? marg[static_cast<std::size_t>(j)] : 1 - marg[static_cast<std::size_t>(j)];
    }
    EXPECT_NEAR(alpha1_from_conditional_probs(p).value, 0.0, 1e-12);
  }
}

TEST(OddsRatio, TwoIndependentLists) {
  const std::vector<double> p{0.42, 0.18, 0.28, 0.12};
  const auto d = odds_ratio_decomposition(p);
  EXPECT_NEAR(d.lhs, 1.0, 1e-14);
  ASSERT_EQ(d.factors.size(), 1U);
  EXPECT_NEAR(d.factors[0].odds_ratio, 1.0, 1e-14);
}

TEST(OddsRatio, ConditionalIndependenceGivesUnitRatios) {
  // Y1 and Y2 independent given Y3.
  const double p3 = 0.3;
  const double a[2] = {0.2, 0.6}, b[2] = {0.5, 0.1};
  std::vector<double> p(8);
  for (std::size_t y = 0; y < 8; ++y) {
    const int y3 = static_cast<int>(y >> 2 & 1U);
    p[y] = (y3 ? p3 : 1 - p3) * ((y & 1U) ? a[y3] : 1 - a[y3]) * ((y >> 1 & 1U) ? b[y3] : 1 - b[y3]);
  }
  const auto d = odds_ratio_decomposition(p);
  EXPECT_NEAR(d.lhs, 1.0, 1e-13);
  for (const auto& f : d.factors) EXPECT_NEAR(f.odds_ratio, 1.0, 1e-13);
}

TEST(OddsRatio, FourListPlantedRatiosCancel) {
  // log p = main effects + log2 y1y2 - log2 y1y2y4: conditional ORs
  // OR(00) = 2, OR(10) = 2, OR(01) = 1, OR(11) = 1 (rest = y3, y4).
  const double main[4] = {-0.4, 0.3, -1.0, 0.2};
  std::vector<double> p(16);
  for (std::size_t y = 0; y < 16; ++y) {
    double lp = 0.0;
    for (int k = 0; k < 4; ++k)
      if (y >> k & 1U) lp += main[k];
    if ((y & 3U) == 3U) lp += std::log(2.0);
    if ((y & 0b1011U) == 0b1011U) lp -= std::log(2.0);
    p[y] = std::exp(lp);
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  const auto d = odds_ratio_decomposition(p);
  ASSERT_EQ(d.factors.size(), 4U);
  std::vector<double> ors;
  for (const auto& f : d.factors) ors.push_back(f.odds_ratio);
  EXPECT_NEAR(ors[0], 2.0, 1e-12);
  EXPECT_NEAR(ors[1], 2.0, 1e-12);
  EXPECT_NEAR(ors[2], 1.0, 1e-12);
  EXPECT_NEAR(ors[3], 1.0, 1e-12);
  EXPECT_NEAR(d.lhs, 1.0, 1e-12);
  EXPECT_NEAR(d.even_odd_ratio, 1.0, 1e-12);
}

TEST(OddsRatio, PropertyIdentityWithAlpha1) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const int K = 2 + rep % 3;
    std::vector<double> p(std::size_t{1} << K);
    for (double& v : p) v = u(rng);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= total;
    const auto d = odds_ratio_decomposition(p);
    const double expected = std::exp((K % 2 == 0 ? 1.0 : -1.0) * alpha1_from_conditional_probs(p).value);
    EXPECT_NEAR(d.lhs, expected, 1e-10 * expected);
    EXPECT_NEAR(d.even_odd_ratio, expected, 1e-10 * expected);
  }
}

TEST(OddsRatio, RequiresTwoLists) {
  EXPECT_THROW(odds_ratio_decomposition(std::vector<double>{0.5, 0.5}), DomainError);
}

TEST(Identification, PropertyOracleOnSuffixZeroSubTable) {
  // With alpha_1 = 0 on the sub-table, gamma_inverse of q renormalized within
  // the sub-table is 1 / P(Y_J != 0 | complement zero).
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    const int K = 2 + rep % 3;
    const int J = 1 + static_cast<int>(rng() % static_cast<unsigned>(K));
    std::vector<int> lists(static_cast<std::size_t>(K));
    std::iota(lists.begin(), lists.end(), 0);
    std::shuffle(lists.begin(), lists.end(), rng);
    lists.resize(static_cast<std::size_t>(J));
    const ListSubset s(K, lists);
    const auto p = table_with_zero_interaction(s, rng);
    const auto sub = sub_table(p, s);
    const double sub_total = std::accumulate(sub.begin(), sub.end(), 0.0);
    std::vector<double> q(s.profile_count());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = sub[i + 1] / (sub_total - sub[0]);
    const double exact = sub_total / (sub_total - sub[0]);
    EXPECT_NEAR(gamma_inverse(q), exact, 1e-12 * exact);
  }
}
