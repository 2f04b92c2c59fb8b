#pragma once

#include <gmpxx.h>

#include <compare>
#include <cstdint>
#include <ostream>
#include <string>

namespace rspin {

/// Arbitrary-precision rational, always in lowest terms with a positive
/// denominator.  Thin value wrapper over GMP's mpq_class that keeps GMP
/// expression templates out of generic code.
class Rational {
 public:
  Rational() = default;
  Rational(long n) : q_(n) {}  // NOLINT(google-explicit-constructor)
  Rational(long n, long d) : q_(n, d) {
    if (d == 0) throw std::domain_error("Rational: zero denominator");
    q_.canonicalize();
  }
  explicit Rational(mpq_class q) : q_(std::move(q)) { q_.canonicalize(); }

  /// Parses "p" or "p/q".
  static Rational parse(const std::string& s) {
    mpq_class q;
    if (q.set_str(s, 10) != 0) throw std::invalid_argument("Rational: cannot parse '" + s + "'");
    if (q.get_den() == 0) throw std::domain_error("Rational: zero denominator");
    q.canonicalize();
    return Rational(std::move(q));
  }

  const mpq_class& raw() const { return q_; }
  std::string num_str() const { return q_.get_num().get_str(); }
  std::string den_str() const { return q_.get_den().get_str(); }

  bool is_zero() const { return sgn(q_) == 0; }
  bool is_one() const { return q_ == 1; }
  bool is_integer() const { return q_.get_den() == 1; }
  int sign() const { return sgn(q_); }

  Rational& operator+=(const Rational& o) {
    mpq_add(q_.get_mpq_t(), q_.get_mpq_t(), o.q_.get_mpq_t());
    return *this;
  }
  Rational& operator-=(const Rational& o) {
    mpq_sub(q_.get_mpq_t(), q_.get_mpq_t(), o.q_.get_mpq_t());
    return *this;
  }
  Rational& operator*=(const Rational& o) {
    mpq_mul(q_.get_mpq_t(), q_.get_mpq_t(), o.q_.get_mpq_t());
    return *this;
  }
  Rational& operator/=(const Rational& o) {
    if (o.is_zero()) throw std::domain_error("Rational: division by zero");
    mpq_div(q_.get_mpq_t(), q_.get_mpq_t(), o.q_.get_mpq_t());
    return *this;
  }

  /// this += a * b without allocating a named temporary per call.
  void add_product(const Rational& a, const Rational& b) {
    thread_local mpq_class tmp;
    mpq_mul(tmp.get_mpq_t(), a.q_.get_mpq_t(), b.q_.get_mpq_t());
    mpq_add(q_.get_mpq_t(), q_.get_mpq_t(), tmp.get_mpq_t());
  }

  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
  friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
  Rational operator-() const {
    Rational r;
    mpq_neg(r.q_.get_mpq_t(), q_.get_mpq_t());
    return r;
  }

  friend bool operator==(const Rational& a, const Rational& b) { return a.q_ == b.q_; }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    int c = cmp(a.q_, b.q_);
    return c < 0 ? std::strong_ordering::less
                 : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
  }

  Rational inverse() const { return Rational(1) / *this; }
  Rational abs() const { return sign() < 0 ? -*this : *this; }

  /// "p" for integers, "p/q" otherwise.
  std::string str() const { return q_.get_str(10); }

  friend std::ostream& operator<<(std::ostream& os, const Rational& q) { return os << q.str(); }

 private:
  mpq_class q_;
};

inline Rational pow(const Rational& base, int e) {
  if (e < 0) return pow(base.inverse(), -e);
  Rational out(1);
  for (int i = 0; i < e; ++i) out *= base;
  return out;
}

inline Rational factorial(int n) {
  Rational out(1);
  for (int i = 2; i <= n; ++i) out *= Rational(i);
  return out;
}

/// Generalized binomial coefficient x(x-1)...(x-k+1)/k!, zero for k < 0.
inline Rational binomial(const Rational& x, int k) {
  if (k < 0) return Rational(0);
  Rational out(1);
  for (int j = 0; j < k; ++j) {
    out *= x - Rational(j);
    out /= Rational(j + 1);
  }
  return out;
}

/// Integer binomial C(n, k); zero unless 0 <= k <= n.
inline Rational choose(int n, int k) {
  if (k < 0 || n < 0 || k > n) return Rational(0);
  return binomial(Rational(n), k);
}

}  // namespace rspin
