#pragma once

#include <algorithm>
#include <climits>
#include <map>
#include <string>
#include <vector>

#include "rspin/errors.hpp"
#include "rspin/rational.hpp"

namespace rspin {

/// Element of R_r = Q[L]/(L^{2(r+1)} + r), stored on the basis L^0..L^{2r+1}.
///
/// L stands for the root (-r)^{1/(2(r+1))}; every fractional power of (-r)
/// that the variable rescalings need is a power of L, and sqrt(-r) is L^{r+1}.
///
/// A Scalar built from a plain Rational carries r = 0 and acts as a constant of
/// every R_r: it adopts the r of the other operand in mixed arithmetic.
class Scalar {
 public:
  Scalar() : c_(1) {}
  Scalar(const Rational& q) : c_{q} {}  // NOLINT(google-explicit-constructor)
  Scalar(long n) : c_{Rational(n)} {}   // NOLINT(google-explicit-constructor)

  /// q * L^k, reduced.
  static Scalar monomial(int r, const Rational& q, int k) {
    check_r(r);
    const int m = period(r);
    int e = k % m;
    int wraps = k / m;
    if (e < 0) {
      e += m;
      wraps -= 1;
    }
    Scalar s = zero(r);
    s.c_[e] = q * pow(Rational(-r), wraps);
    return s;
  }
  static Scalar zero(int r) {
    check_r(r);
    Scalar s;
    s.r_ = r;
    s.c_.assign(period(r), Rational(0));
    return s;
  }
  static Scalar from_coeffs(int r, std::vector<Rational> coeffs) {
    check_r(r);
    if (static_cast<int>(coeffs.size()) != period(r)) throw MixedR("coefficient vector has wrong length");
    Scalar s;
    s.r_ = r;
    s.c_ = std::move(coeffs);
    return s;
  }

  /// 0 for a ring-agnostic rational constant.
  int r() const { return r_; }
  static int period(int r) { return 2 * (r + 1); }

  /// Coefficient of L^k on the reduced basis.
  Rational coeff(int k) const {
    if (r_ == 0) return k == 0 ? c_[0] : Rational(0);
    if (k < 0 || k >= period(r_)) return Rational(0);
    return c_[k];
  }

  bool is_zero() const {
    return std::all_of(c_.begin(), c_.end(), [](const Rational& q) { return q.is_zero(); });
  }
  bool is_one() const { return is_rational() && c_[0].is_one(); }
  bool is_rational() const {
    for (size_t k = 1; k < c_.size(); ++k)
      if (!c_[k].is_zero()) return false;
    return true;
  }

  /// Number of nonzero basis coefficients.
  int support_size() const {
    return static_cast<int>(std::count_if(c_.begin(), c_.end(), [](const Rational& q) { return !q.is_zero(); }));
  }

  Scalar& operator+=(const Scalar& o) {
    unify(o);
    for (size_t k = 0; k < c_.size(); ++k) c_[k] += o.coeff(static_cast<int>(k));
    return *this;
  }
  Scalar& operator-=(const Scalar& o) {
    unify(o);
    for (size_t k = 0; k < c_.size(); ++k) c_[k] -= o.coeff(static_cast<int>(k));
    return *this;
  }
  Scalar& operator*=(const Rational& q) {
    for (auto& x : c_) x *= q;
    return *this;
  }

  friend Scalar operator+(Scalar a, const Scalar& b) { return a += b; }
  friend Scalar operator-(Scalar a, const Scalar& b) { return a -= b; }
  friend Scalar operator*(Scalar a, const Rational& q) { return a *= q; }
  Scalar operator-() const {
    Scalar s = *this;
    for (auto& x : s.c_) x = -x;
    return s;
  }

  friend Scalar operator*(const Scalar& a, const Scalar& b) {
    if (a.r_ == 0) return b * a.c_[0];
    if (b.r_ == 0) return a * b.c_[0];
    if (a.r_ != b.r_) throw MixedR("r=" + std::to_string(a.r_) + " vs r=" + std::to_string(b.r_));
    const int r = a.r_;
    const int m = period(r);
    Scalar out = zero(r);
    const Rational minus_r(-r);
    for (int i = 0; i < m; ++i) {
      if (a.c_[i].is_zero()) continue;
      for (int j = 0; j < m; ++j) {
        if (b.c_[j].is_zero()) continue;
        const int k = i + j;
        if (k < m) {
          out.c_[k].add_product(a.c_[i], b.c_[j]);
        } else {
          out.c_[k - m].add_product(a.c_[i] * b.c_[j], minus_r);
        }
      }
    }
    return out;
  }
  Scalar& operator*=(const Scalar& o) { return *this = *this * o; }

  void add_product(const Scalar& a, const Scalar& b) { *this += a * b; }

  friend bool operator==(const Scalar& a, const Scalar& b) {
    const int r = a.r_ != 0 ? a.r_ : b.r_;
    if (a.r_ != 0 && b.r_ != 0 && a.r_ != b.r_) throw MixedR("comparison across different r");
    const int m = r == 0 ? 1 : period(r);
    for (int k = 0; k < m; ++k)
      if (a.coeff(k) != b.coeff(k)) return false;
    return true;
  }

  /// Text form: "q" for rationals, otherwise a sum of "q*L^k" terms.
  std::string str() const {
    std::string out;
    for (size_t k = 0; k < c_.size(); ++k) {
      const Rational& q = c_[k];
      if (q.is_zero()) continue;
      std::string mag;
      if (k == 0) {
        mag = q.abs().str();
      } else {
        mag = q.abs().is_one() ? "" : q.abs().str() + "*";
        mag += k == 1 ? "L" : "L^" + std::to_string(k);
      }
      if (out.empty())
        out = (q.sign() < 0 ? "-" : "") + mag;
      else
        out += (q.sign() < 0 ? " - " : " + ") + mag;
    }
    return out.empty() ? "0" : out;
  }

 private:
  static void check_r(int r) {
    if (r < 1) throw MixedR("r must be positive, got " + std::to_string(r));
  }

  void unify(const Scalar& o) {
    if (o.r_ == 0 || o.r_ == r_) return;
    if (r_ == 0) {
      Rational q = c_[0];
      *this = zero(o.r_);
      c_[0] = q;
      return;
    }
    throw MixedR("r=" + std::to_string(r_) + " vs r=" + std::to_string(o.r_));
  }

  int r_ = 0;
  std::vector<Rational> c_;
};

/// L^k in R_r; negative k uses L^{-1} = -L^{2r+1}/r.
inline Scalar lambda_pow(int r, int k) { return Scalar::monomial(r, Rational(1), k); }

/// Inverse of a monomial unit q*L^k.  General inversion is not offered: R_r
/// need not be a domain.
inline Scalar invert_unit(const Scalar& a) {
  if (a.r() == 0) {
    if (a.is_zero()) throw NotMonomialUnit("zero is not a unit");
    return Scalar(a.coeff(0).inverse());
  }
  if (a.support_size() != 1) throw NotMonomialUnit(a.str());
  for (int k = 0; k < Scalar::period(a.r()); ++k) {
    if (!a.coeff(k).is_zero()) return Scalar::monomial(a.r(), a.coeff(k).inverse(), -k);
  }
  throw NotMonomialUnit(a.str());
}

inline Rational as_rational(const Scalar& a) {
  if (!a.is_rational()) throw NotRational(a.str());
  return a.coeff(0);
}

/// Laurent polynomial in eps with a validity window [lo, hi].
///
/// Exponents above hi are dropped (and the drop is recorded); an exponent
/// below lo is an error, because negative-genus information must never be
/// silently discarded.  Constants built from a Rational have an unbounded
/// window.
class EpsScalar {
 public:
  static constexpr int kNegInf = INT_MIN / 4;
  static constexpr int kPosInf = INT_MAX / 4;

  EpsScalar() = default;
  EpsScalar(const Rational& q) {  // NOLINT(google-explicit-constructor)
    if (!q.is_zero()) terms_[0] = q;
  }
  EpsScalar(long n) : EpsScalar(Rational(n)) {}  // NOLINT(google-explicit-constructor)

  static EpsScalar window(int lo, int hi) {
    EpsScalar e;
    e.lo_ = lo;
    e.hi_ = hi;
    return e;
  }
  /// q * eps^k with the given window.
  static EpsScalar monomial(const Rational& q, int k, int lo = kNegInf, int hi = kPosInf) {
    EpsScalar e = window(lo, hi);
    e.set(k, q);
    return e;
  }

  int lo() const { return lo_; }
  int hi() const { return hi_; }
  bool truncated() const { return truncated_; }
  const std::map<int, Rational>& terms() const { return terms_; }

  Rational coeff(int k) const {
    auto it = terms_.find(k);
    return it == terms_.end() ? Rational(0) : it->second;
  }
  bool is_zero() const { return terms_.empty(); }
  bool is_one() const { return terms_.size() == 1 && terms_.begin()->first == 0 && terms_.begin()->second.is_one(); }
  int min_exponent() const { return terms_.empty() ? kPosInf : terms_.begin()->first; }
  int max_exponent() const { return terms_.empty() ? kNegInf : terms_.rbegin()->first; }

  EpsScalar& operator+=(const EpsScalar& o) {
    merge_window(std::min(lo_, o.lo_), std::min(hi_, o.hi_));
    for (const auto& [k, q] : o.terms_) accumulate(k, q);
    return *this;
  }
  EpsScalar& operator-=(const EpsScalar& o) {
    merge_window(std::min(lo_, o.lo_), std::min(hi_, o.hi_));
    for (const auto& [k, q] : o.terms_) accumulate(k, -q);
    return *this;
  }
  EpsScalar& operator*=(const Rational& q) {
    if (q.is_zero()) {
      terms_.clear();
      return *this;
    }
    for (auto& [k, c] : terms_) c *= q;
    return *this;
  }
  friend EpsScalar operator+(EpsScalar a, const EpsScalar& b) { return a += b; }
  friend EpsScalar operator-(EpsScalar a, const EpsScalar& b) { return a -= b; }
  friend EpsScalar operator*(EpsScalar a, const Rational& q) { return a *= q; }
  EpsScalar operator-() const {
    EpsScalar e = *this;
    for (auto& [k, c] : e.terms_) c = -c;
    return e;
  }

  friend EpsScalar operator*(const EpsScalar& a, const EpsScalar& b) {
    EpsScalar out = window(sat_add(a.lo_, b.lo_), std::min(a.hi_, b.hi_));
    out.truncated_ = a.truncated_ || b.truncated_;
    for (const auto& [i, x] : a.terms_)
      for (const auto& [j, y] : b.terms_) out.accumulate(i + j, x * y);
    return out;
  }
  EpsScalar& operator*=(const EpsScalar& o) { return *this = *this * o; }
  void add_product(const EpsScalar& a, const EpsScalar& b) { *this += a * b; }

  /// Multiplies by eps^k, moving the window along.
  EpsScalar shifted(int k) const {
    EpsScalar out = window(sat_add(lo_, k), sat_add(hi_, k));
    out.truncated_ = truncated_;
    for (const auto& [e, q] : terms_) out.terms_[e + k] = q;
    return out;
  }

  /// Re-windows the value: exponents below lo throw, exponents above hi drop.
  EpsScalar restricted(int lo, int hi) const {
    if (!terms_.empty() && terms_.begin()->first < lo)
      throw EpsWindowViolation("exponent " + std::to_string(terms_.begin()->first) + " below window floor " +
                               std::to_string(lo));
    EpsScalar out = window(lo, hi);
    out.truncated_ = truncated_;
    for (const auto& [e, q] : terms_) out.set(e, q);
    return out;
  }

  /// Drops exponents above `budget` (used by degree-capped series).
  void truncate_above(int budget) {
    while (!terms_.empty() && terms_.rbegin()->first > budget) {
      terms_.erase(std::prev(terms_.end()));
      truncated_ = true;
    }
  }

  friend bool operator==(const EpsScalar& a, const EpsScalar& b) { return a.terms_ == b.terms_; }

  /// "q*e^k" terms in increasing exponent.
  std::string str() const {
    std::string out;
    for (const auto& [k, q] : terms_) {
      std::string mag;
      if (k == 0) {
        mag = q.abs().str();
      } else {
        mag = q.abs().is_one() ? "" : q.abs().str() + "*";
        mag += k == 1 ? "e" : "e^" + std::to_string(k);
      }
      if (out.empty())
        out = (q.sign() < 0 ? "-" : "") + mag;
      else
        out += (q.sign() < 0 ? " - " : " + ") + mag;
    }
    return out.empty() ? "0" : out;
  }

 private:
  static int sat_add(int a, int b) {
    if (a <= kNegInf || b <= kNegInf) return kNegInf;
    if (a >= kPosInf || b >= kPosInf) return kPosInf;
    return std::clamp(a + b, kNegInf, kPosInf);
  }

  void merge_window(int lo, int hi) {
    lo_ = lo;
    if (hi < hi_) {
      hi_ = hi;
      truncate_above(hi_);
    }
  }

  void set(int k, const Rational& q) {
    if (q.is_zero()) return;
    if (k < lo_) throw EpsWindowViolation("exponent " + std::to_string(k) + " below window floor " + std::to_string(lo_));
    if (k > hi_) {
      truncated_ = true;
      return;
    }
    terms_[k] = q;
  }

  void accumulate(int k, const Rational& q) {
    if (q.is_zero()) return;
    if (k < lo_) throw EpsWindowViolation("exponent " + std::to_string(k) + " below window floor " + std::to_string(lo_));
    if (k > hi_) {
      truncated_ = true;
      return;
    }
    auto [it, inserted] = terms_.try_emplace(k, q);
    if (!inserted) {
      it->second += q;
      if (it->second.is_zero()) terms_.erase(it);
    }
  }

  int lo_ = kNegInf;
  int hi_ = kPosInf;
  std::map<int, Rational> terms_;
  bool truncated_ = false;
};

/// Hook used by degree-capped series: a coefficient at a monomial of degree d
/// may only keep eps-exponents up to cap - d.  A no-op for plain rings.
inline void clip_to_budget(EpsScalar& c, int budget) { c.truncate_above(budget); }

}  // namespace rspin
