#include <gtest/gtest.h>

#include <random>

#include "rspin/scalar.hpp"

using namespace rspin;

namespace {

Scalar random_scalar(int r, std::mt19937& rng) {
  std::uniform_int_distribution<int> num(-5, 5), den(1, 4), sparse(0, 2);
  std::vector<Rational> c(Scalar::period(r), Rational(0));
  for (auto& x : c)
    if (sparse(rng) == 0) x = Rational(num(rng), den(rng));
  return Scalar::from_coeffs(r, c);
}

}  // namespace

TEST(Rational, ReducesAndParses) {
  Rational q(6, -4);
  EXPECT_EQ(q.str(), "-3/2");
  EXPECT_EQ(q.num_str(), "-3");
  EXPECT_EQ(q.den_str(), "2");
  EXPECT_EQ(Rational::parse("10/4"), Rational(5, 2));
  EXPECT_THROW(Rational::parse("x"), std::invalid_argument);
  EXPECT_THROW(Rational(1, 0), std::domain_error);
}

TEST(Rational, Binomials) {
  EXPECT_EQ(binomial(Rational(1, 2), 2), Rational(-1, 8));
  EXPECT_EQ(binomial(Rational(3, 2), 2), Rational(3, 8));
  EXPECT_EQ(choose(5, 2), Rational(10));
  EXPECT_EQ(choose(5, -1), Rational(0));
  EXPECT_EQ(choose(5, 6), Rational(0));
  EXPECT_EQ(factorial(5), Rational(120));
}

TEST(Scalar, DefiningRelation) {
  // r = 2: L^3 * L^3 = L^6 = -2.
  EXPECT_EQ(lambda_pow(2, 3) * lambda_pow(2, 3), Scalar(-2));
  EXPECT_EQ(lambda_pow(2, 5) * lambda_pow(2, 7), Scalar(4));
  EXPECT_EQ(lambda_pow(2, 6), Scalar(-2));
  EXPECT_EQ(lambda_pow(3, 8), Scalar(-3));
  EXPECT_EQ(lambda_pow(2, -1), Scalar::monomial(2, Rational(-1, 2), 5));
  const Scalar a = Scalar::monomial(3, Rational(7), 2);
  EXPECT_EQ(a + Scalar::zero(3), a);
}

TEST(Scalar, RelationForSeveralR) {
  for (int r = 2; r <= 6; ++r) {
    EXPECT_TRUE((lambda_pow(r, 2 * (r + 1)) + Scalar(r)).is_zero()) << r;
    const Scalar root = lambda_pow(r, r + 1);
    EXPECT_EQ(root * root, Scalar(-r)) << r;
  }
}

TEST(Scalar, InvertUnit) {
  EXPECT_EQ(invert_unit(Scalar::monomial(3, Rational(2), 2)), Scalar::monomial(3, Rational(-1, 6), 6));
  EXPECT_EQ(invert_unit(Scalar(1)), Scalar(1));
  EXPECT_EQ(invert_unit(lambda_pow(2, 1)), Scalar::monomial(2, Rational(-1, 2), 5));
  for (int r = 2; r <= 6; ++r)
    for (int k = -3 * r; k <= 3 * r; ++k) {
      const Scalar u = Scalar::monomial(r, Rational(3, 7), k);
      EXPECT_TRUE((u * invert_unit(u)).is_one());
      EXPECT_TRUE((invert_unit(u) * u).is_one());
    }
  EXPECT_THROW(invert_unit(lambda_pow(3, 1) + Scalar(1)), NotMonomialUnit);
}

TEST(Scalar, AsRational) {
  EXPECT_EQ(as_rational(Scalar(Rational(7, 3))), Rational(7, 3));
  EXPECT_EQ(as_rational(lambda_pow(2, 6)), Rational(-2));
  EXPECT_THROW(as_rational(lambda_pow(3, 1)), NotRational);
}

TEST(Scalar, MixedRIsAnError) {
  EXPECT_THROW(lambda_pow(2, 1) * lambda_pow(3, 1), MixedR);
  EXPECT_THROW(lambda_pow(2, 1) + lambda_pow(3, 1), MixedR);
}

TEST(Scalar, RingAxiomsOnRandomElements) {
  std::mt19937 rng(7);
  for (int r = 2; r <= 5; ++r)
    for (int trial = 0; trial < 30; ++trial) {
      const Scalar a = random_scalar(r, rng), b = random_scalar(r, rng), c = random_scalar(r, rng);
      EXPECT_EQ((a * b) * c, a * (b * c));
      EXPECT_EQ(a * (b + c), a * b + a * c);
      EXPECT_EQ(a * b, b * a);
      EXPECT_TRUE((a - a).is_zero());
    }
}

TEST(Scalar, Text) {
  EXPECT_EQ(Scalar(Rational(-1, 2)).str(), "-1/2");
  EXPECT_EQ((lambda_pow(3, 2) * Rational(2) - Scalar(1)).str(), "-1 + 2*L^2");
  EXPECT_EQ(lambda_pow(3, 1).str(), "L");
}

TEST(EpsScalar, WindowDiscipline) {
  EpsScalar a = EpsScalar::monomial(Rational(1), 1, 0, 2);
  EpsScalar p = a * a * a;  // eps^3 falls above the window
  EXPECT_TRUE(p.is_zero());
  EXPECT_TRUE(p.truncated());
  EXPECT_THROW(EpsScalar::monomial(Rational(1), -1, 0, 2), EpsWindowViolation);
  EXPECT_THROW(a.shifted(-2).restricted(0, 5), EpsWindowViolation);
  EpsScalar b = EpsScalar(2) + EpsScalar::monomial(Rational(3), 2);
  EXPECT_EQ(b.str(), "2 + 3*e^2");
  EXPECT_EQ((b * b).coeff(2), Rational(12));
  EpsScalar c = EpsScalar::monomial(Rational(3), -3);
  EXPECT_EQ(c.str(), "3*e^-3");
  clip_to_budget(b, 1);
  EXPECT_EQ(b, EpsScalar(2));
}
