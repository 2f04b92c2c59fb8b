#include <gtest/gtest.h>

#include <thread>

#include "rspin/correlators.hpp"

using namespace rspin;

namespace {

Points pts(std::initializer_list<std::pair<int, int>> list) {
  Points p;
  for (auto [a, d] : list) p.push_back({a, d});
  return p;
}

Points primaries(std::initializer_list<int> twists) {
  Points p;
  for (int a : twists) p.push_back({a, 0});
  return p;
}

std::shared_ptr<const ClosedSource> closed_for(int r, int max_n = 6, int max_d = 2) {
  static std::map<std::tuple<int, int, int>, std::shared_ptr<const ClosedSource>> cache;
  auto& slot = cache[{r, max_n, max_d}];
  if (!slot) slot = Hierarchy(r, Caps{max_n, max_d}).closed_source();
  return slot;
}

}  // namespace

TEST(Keys, ParseAndValidate) {
  EXPECT_EQ(parse_insertions("1:0,2:1"), pts({{1, 0}, {2, 1}}));
  EXPECT_TRUE(parse_insertions("").empty());
  EXPECT_THROW(parse_insertions("1-0"), BadKey);
  EXPECT_THROW(parse_insertions("1:x"), BadKey);
  EXPECT_THROW(CorrelatorKey::extended(3, primaries({9})), BadKey);
  EXPECT_THROW(CorrelatorKey::closed(3, primaries({-1, 0, 1})), TwoMinusOneInsertions);
  EXPECT_THROW(CorrelatorKey::extended(3, primaries({-1, 1})), TwoMinusOneInsertions);
  EXPECT_THROW(parse_sector("bulk"), BadKey);
  EXPECT_EQ(parse_sector("ext"), Sector::extended);
  EXPECT_EQ(parse_sector("o"), Sector::open);
}

TEST(Keys, InsertionOrderDoesNotMatter) {
  auto a = CorrelatorKey::extended(4, pts({{2, 1}, {1, 0}, {3, 0}}));
  auto b = CorrelatorKey::extended(4, pts({{3, 0}, {2, 1}, {1, 0}}));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.points().front().twist, -1);
}

TEST(Gates, DimensionConstraints) {
  // Closed: (sum of twists - (r - 2)) / r must be a nonnegative integer e with e + sum d = n - 3.
  EXPECT_TRUE(closed_gate(2, primaries({0, 0, 0})));
  EXPECT_FALSE(closed_gate(2, primaries({0, 0})));
  EXPECT_FALSE(closed_gate(3, primaries({1, 1, 0})));
  EXPECT_TRUE(closed_gate(3, primaries({0, 0, 1})));
  EXPECT_TRUE(closed_gate(3, primaries({2, 2, 0, 0})));
  EXPECT_FALSE(closed_gate(3, pts({{0, 1}, {0, 0}, {1, 0}})));
  EXPECT_TRUE(extended_gate(3, primaries({-1, 1, 1})));
  EXPECT_TRUE(extended_gate(3, primaries({-1, 1, 2, 2})));
  EXPECT_FALSE(extended_gate(3, primaries({-1, 1, 2})));
  // Open r = 2: sigma^3 alone, and tau^0 sigma with e_o = 0.
  EXPECT_TRUE(open_gate(2, {}, 3));
  EXPECT_FALSE(open_gate(2, {}, 2));
  EXPECT_TRUE(open_gate(2, primaries({0}), 1));
}

TEST(ChangeOfVariables, RoundTripIsIdentity) {
  for (int r = 2; r <= 4; ++r) {
    auto cov = ChangeOfVars::standard(r, 2 * r);
    auto Tspace = VarSpace::T(2 * r);
    RSeries F = RSeries::variable(Tspace, 4, 0) * RSeries::variable(Tspace, 4, r) +
                RSeries::variable(Tspace, 4, r - 1) * RSeries::variable(Tspace, 4, 1) * RSeries::variable(Tspace, 4, 2 * r - 1);
    SSeries back = to_T_variables(to_t_variables(F, cov), cov);
    EXPECT_EQ(rational_series(back), F) << r;
  }
}

TEST(ChangeOfVariables, KnownScales) {
  // r = 2: T_1 = t^0_0 / L^0, T_2 = t^1_0 / (1! 2^1) with no L (m(r-2) = 0).
  auto c2 = ChangeOfVars::standard(2, 2);
  EXPECT_EQ(as_rational(c2.scale[0]), Rational(1));
  EXPECT_EQ(as_rational(c2.scale[1]), Rational(1, 2));
  // The closed formula at a Ramond index is the Ramond formula times L^{-(r+1)}.
  for (int r = 3; r <= 5; ++r) {
    auto c = ChangeOfVars::standard(r, 2 * r);
    for (int m = 1; m <= 2; ++m) {
      const int k = m * r, d = (k - 1) / r, alpha = (k - 1) % r;
      Rational kf(1);
      for (int i = 0; i <= d; ++i) kf *= Rational(alpha + 1 + r * i);
      Scalar closed_formula = Scalar::monomial(r, kf.inverse(), -(3 * k - (r + 1) - 2 * d * (r + 1)));
      EXPECT_EQ(closed_formula, c.scale[k - 1] * lambda_pow(r, -(r + 1))) << r << " " << m;
    }
  }
}

TEST(ChangeOfVariables, UnmappedVariable) {
  auto cov = ChangeOfVars::standard(3, 2);
  EXPECT_THROW(to_t_variables(RSeries::variable(VarSpace::T(4), 3, 3), cov), UnmappedVariable);
}

TEST(Extraction, MultiplicityFactorials) {
  auto s = VarSpace::t(2, 2);
  RSeries F = RSeries::variable(s, 4, 0) * RSeries::variable(s, 4, 0) * RSeries::variable(s, 4, 0) * RSeries::constant(s, 4, Rational(1, 6));
  EXPECT_EQ(extract_correlator(F, CorrelatorKey::closed(2, primaries({0, 0, 0}))), Rational(1));
  EXPECT_THROW(key_monomial(CorrelatorKey::extended(2, primaries({1}), 1), *s), BadKey);
}

TEST(BaseCorrelators, BothPipelines) {
  for (int r = 2; r <= 5; ++r) {
    Hierarchy H(r, Caps{4, 0});
    ExtendedEngine E(r, H.closed_source());
    auto k1 = CorrelatorKey::extended(r, primaries({1, r - 2}));
    EXPECT_EQ(E.value(k1), Rational(1)) << r;
    EXPECT_EQ(H.value(k1), Rational(1)) << r;
    auto k2 = CorrelatorKey::extended(r, primaries({1, r - 1, r - 1}));
    EXPECT_EQ(E.value(k2), Rational(-1, r)) << r;
    EXPECT_EQ(H.value(k2), Rational(-1, r)) << r;
  }
}

TEST(BaseCorrelators, ClosedSector) {
  EXPECT_EQ(Hierarchy(2, Caps{3, 0}).value(CorrelatorKey::closed(2, primaries({0, 0, 0}))), Rational(1));
  for (int r = 3; r <= 5; ++r) {
    Hierarchy H(r, Caps{4, 0});
    for (int g = 0; g <= r - 3; ++g)
      EXPECT_EQ(H.value(CorrelatorKey::closed(r, primaries({1, g, r - 3 - g}))), Rational(1)) << r << " " << g;
    // Ramond vanishing.
    EXPECT_EQ(H.value(CorrelatorKey::closed(r, primaries({r - 1, 0, 0, r - 1}))), Rational(0));
  }
}

TEST(XSeries, ClosedFormAndRecursion) {
  // <tau^-1 tau^alpha (tau^{r-1})^{alpha+1}> = (-1)^alpha alpha! / r^alpha, including
  // alpha = r - 1, where the insertions are r + 1 Ramond points.
  for (int r = 2; r <= 5; ++r) {
    Hierarchy H(r, Caps{r + 1, 0});
    ExtendedEngine E(r, H.closed_source());
    for (int alpha = 0; alpha <= r - 1; ++alpha) {
      Points p{{alpha, 0}};
      for (int c = 0; c <= alpha; ++c) p.push_back({r - 1, 0});
      auto key = CorrelatorKey::extended(r, p);
      const Rational want = factorial(alpha) / pow(Rational(r), alpha) * Rational(alpha % 2 ? -1 : 1);
      EXPECT_EQ(x_alpha(r, alpha), want);
      EXPECT_EQ(E.value(key), want) << key.str();
      EXPECT_EQ(H.value(key), want) << key.str();
    }
  }
}

TEST(Extended, R3FourRamondInsertions) {
  ExtendedEngine E(3, closed_for(3));
  EXPECT_EQ(E.value(CorrelatorKey::extended(3, primaries({2, 2, 2, 2}))), Rational(2, 9));
  Hierarchy H(3, Caps{4, 0});
  EXPECT_EQ(H.value(CorrelatorKey::extended(3, primaries({2, 2, 2, 2}))), Rational(2, 9));
}

TEST(Extended, DescendantOnMinusOneUsesRecursionOnly) {
  ExtendedEngine E(2, closed_for(2));
  auto key = CorrelatorKey::extended(2, pts({{1, 0}, {1, 0}, {1, 0}, {0, 0}}), 1);
  EXPECT_NO_THROW(E.value(key));
  Hierarchy H(2, Caps{6, 2});
  EXPECT_FALSE(H.in_cap(key));
  EXPECT_THROW(H.value(key), CapExceeded);
}

TEST(Extended, TrrChoicesAgree) {
  ExtendedEngine E(3, closed_for(3));
  const Points p = sorted(pts({{-1, 0}, {1, 1}, {2, 0}, {2, 0}, {0, 0}}));
  const Rational v = E.value(p);
  ASSERT_NE(v, Rational(0));
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i].desc == 0) continue;
    for (size_t j = 0; j < p.size(); ++j)
      for (size_t k = j + 1; k < p.size(); ++k) {
        if (j == i || k == i) continue;
        EXPECT_EQ(E.general_trr(p, i, j, k), v) << i << j << k;
      }
  }
}

TEST(Extended, ConcurrentEvaluationIsDeterministic) {
  auto src = closed_for(3);
  ExtendedEngine shared(3, src);
  auto keys = enumerate_insertions(3, 2, 0, 5, 2);
  std::vector<Rational> serial;
  {
    ExtendedEngine solo(3, src);
    for (const auto& p : keys) serial.push_back(solo.value(CorrelatorKey::extended(3, p)));
  }
  std::vector<Rational> par(keys.size());
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      for (size_t i = t; i < keys.size(); i += 4) par[i] = shared.value(CorrelatorKey::extended(3, keys[i]));
    });
  for (auto& th : pool) th.join();
  EXPECT_EQ(serial, par);
}

TEST(Open, DictionaryExamples) {
  Hierarchy H(2, Caps{4, 1});
  EXPECT_EQ(H.value(CorrelatorKey::open(2, {}, 3)), Rational(-2));
  EXPECT_EQ(H.value(CorrelatorKey::open(2, primaries({0}), 1)), Rational(1));
  // m = 0 vanishes by definition.
  EXPECT_EQ(H.value(CorrelatorKey::open(2, primaries({0, 0, 0}), 0)), Rational(0));
}

TEST(Hierarchy, CapExceededNamesTheNeededCap) {
  Hierarchy H(3, Caps{4, 0});
  try {
    H.value(CorrelatorKey::extended(3, primaries({1, 1, 1, 1, 1, 1, 1})));
    FAIL() << "expected CapExceeded";
  } catch (const CapExceeded& e) {
    EXPECT_NE(std::string(e.what()).find("max_n >= 7"), std::string::npos) << e.what();
  }
}

TEST(Table, PoisonedOnConflictAndMergesProvenance) {
  CorrelatorTable t;
  auto k = CorrelatorKey::extended(3, primaries({1, 1}));
  t.record(k, Scalar(Rational(1)), Provenance::recursion);
  t.record(k, Scalar(Rational(1)), Provenance::hierarchy);
  EXPECT_EQ(t.find(k)->provenance, Provenance::both_agree);
  EXPECT_FALSE(t.poisoned());
  auto k2 = CorrelatorKey::extended(3, primaries({1, 2, 2}));
  t.record(k2, Scalar(Rational(-1, 3)), Provenance::recursion);
  t.record(k2, Scalar(Rational(1, 3)), Provenance::hierarchy);
  EXPECT_TRUE(t.poisoned());
  ASSERT_EQ(t.conflicts().size(), 1u);
  EXPECT_EQ(t.conflicts().front(), k2);
}

TEST(Table, EnumerationIsSortedAndComplete) {
  auto a = enumerate_insertions(2, 1, 0, 3, 1);
  auto b = enumerate_insertions(2, 1, 0, 3, 1);
  EXPECT_EQ(a, b);
  // Kinds: (0,0),(1,0),(0,1),(1,1); multisets of size <= 3 with total desc <= 1.
  // desc 0: sizes 0..3 over 2 kinds -> 1 + 2 + 3 + 4 = 10; desc 1: one of 2 desc kinds plus <= 2 primaries -> 2 * (1 + 2 + 3) = 12.
  EXPECT_EQ(a.size(), 22u);
}
