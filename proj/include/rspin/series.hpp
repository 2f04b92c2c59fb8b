#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rspin/errors.hpp"
#include "rspin/rational.hpp"
#include "rspin/scalar.hpp"

namespace rspin {

// ---------------------------------------------------------------------------
// Monomials: up to 32 variables, exponents 0..15, packed four bits apiece.
// Variable 0 lives in the most significant nibble of the first word, so that
// comparing the packed words compares exponent vectors lexicographically.
// ---------------------------------------------------------------------------

inline constexpr int kMaxVars = 32;
inline constexpr int kMaxExponent = 15;

struct Monomial {
  std::uint64_t w[2] = {0, 0};

  static constexpr int shift(int var) { return (15 - var % 16) * 4; }

  int exponent(int var) const { return static_cast<int>((w[var / 16] >> shift(var)) & 0xF); }
  void set_exponent(int var, int e) {
    if (e < 0 || e > kMaxExponent) throw CapExceeded("exponent " + std::to_string(e) + " exceeds packed range 15");
    std::uint64_t& word = w[var / 16];
    word &= ~(std::uint64_t{0xF} << shift(var));
    word |= static_cast<std::uint64_t>(e) << shift(var);
  }

  static Monomial from_exponents(const std::vector<int>& e) {
    if (static_cast<int>(e.size()) > kMaxVars) throw BadVar("too many variables");
    Monomial m;
    for (size_t i = 0; i < e.size(); ++i) m.set_exponent(static_cast<int>(i), e[i]);
    return m;
  }
  static Monomial unit(int var, int e = 1) {
    Monomial m;
    m.set_exponent(var, e);
    return m;
  }

  std::vector<int> exponents(int count) const {
    std::vector<int> e(count);
    for (int i = 0; i < count; ++i) e[i] = exponent(i);
    return e;
  }

  int degree() const { return nibble_sum(w[0]) + nibble_sum(w[1]); }
  bool is_one() const { return w[0] == 0 && w[1] == 0; }

  /// Caller guarantees that no exponent overflows (total degree <= 15 suffices).
  friend Monomial operator*(const Monomial& a, const Monomial& b) {
    Monomial m;
    m.w[0] = a.w[0] + b.w[0];
    m.w[1] = a.w[1] + b.w[1];
    return m;
  }
  /// a / b; caller guarantees divisibility.
  friend Monomial operator/(const Monomial& a, const Monomial& b) {
    Monomial m;
    m.w[0] = a.w[0] - b.w[0];
    m.w[1] = a.w[1] - b.w[1];
    return m;
  }
  bool divisible_by(const Monomial& b) const {
    for (int i = 0; i < kMaxVars; ++i)
      if (exponent(i) < b.exponent(i)) return false;
    return true;
  }

  friend bool operator==(const Monomial& a, const Monomial& b) { return a.w[0] == b.w[0] && a.w[1] == b.w[1]; }

  /// Graded-lex order: lower degree first, then lexicographically larger
  /// exponent vectors first (T1^2 < T1*T2 < T2^2).
  friend bool graded_less(const Monomial& a, const Monomial& b) {
    const int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    if (a.w[0] != b.w[0]) return a.w[0] > b.w[0];
    return a.w[1] > b.w[1];
  }

 private:
  static int nibble_sum(std::uint64_t x) {
    constexpr std::uint64_t lo = 0x0F0F0F0F0F0F0F0FULL;
    std::uint64_t bytes = (x & lo) + ((x >> 4) & lo);
    return static_cast<int>((bytes * 0x0101010101010101ULL) >> 56);
  }
};

struct MonomialHash {
  size_t operator()(const Monomial& m) const noexcept {
    std::uint64_t h = m.w[0] * 0x9E3779B97F4A7C15ULL;
    h ^= (m.w[1] + 0x632BE59BD9B4E019ULL) + (h << 6) + (h >> 2);
    return static_cast<size_t>(h ^ (h >> 31));
  }
};

struct GradedLess {
  bool operator()(const Monomial& a, const Monomial& b) const { return graded_less(a, b); }
};

// ---------------------------------------------------------------------------
// Variable spaces
// ---------------------------------------------------------------------------

enum class SpaceKind { T, t, v, f };

/// A named, ordered set of variables.  For t-spaces, variable index k-1 is
/// t^alpha_d with k = alpha + 1 + r*d, i.e. it shares its index with T_k; the
/// open t-space appends the boundary variable s after the last t-variable.
class VarSpace {
 public:
  SpaceKind kind() const { return kind_; }
  int count() const { return static_cast<int>(names_.size()); }
  int r() const { return r_; }
  const std::string& name(int i) const {
    check(i);
    return names_[i];
  }
  const std::vector<std::string>& names() const { return names_; }

  /// Index of the boundary variable s, or -1.
  int boundary_index() const { return boundary_; }

  int index_of(const std::string& label) const {
    for (int i = 0; i < count(); ++i)
      if (names_[i] == label) return i;
    throw BadVar("no variable named '" + label + "'");
  }

  /// For t-spaces: (alpha, d) of a t-variable.
  std::pair<int, int> twist_desc(int i) const {
    check(i);
    if (kind_ != SpaceKind::t || i == boundary_) throw BadVar("variable " + names_[i] + " has no (twist, desc) label");
    return {i % r_, i / r_};
  }
  /// For t-spaces: index of t^alpha_d.
  int t_index(int alpha, int d) const {
    if (kind_ != SpaceKind::t || alpha < 0 || alpha >= r_ || d < 0) throw BadVar("bad t-variable label");
    const int i = alpha + r_ * d;
    if (i >= (boundary_ >= 0 ? boundary_ : count()))
      throw UnmappedVariable("t" + std::to_string(alpha) + "_" + std::to_string(d) + " is outside the space");
    return i;
  }

  void check(int i) const {
    if (i < 0 || i >= count()) throw BadVar("variable index " + std::to_string(i) + " outside space of size " + std::to_string(count()));
  }

  friend bool operator==(const VarSpace& a, const VarSpace& b) {
    return a.kind_ == b.kind_ && a.r_ == b.r_ && a.names_ == b.names_ && a.boundary_ == b.boundary_;
  }

  static std::shared_ptr<const VarSpace> T(int N) {
    auto s = make(SpaceKind::T, 0);
    for (int k = 1; k <= N; ++k) s->names_.push_back("T" + std::to_string(k));
    return finish(s);
  }
  static std::shared_ptr<const VarSpace> t(int r, int N, bool with_boundary = false) {
    auto s = make(SpaceKind::t, r);
    for (int i = 0; i < N; ++i) s->names_.push_back("t" + std::to_string(i % r) + "_" + std::to_string(i / r));
    if (with_boundary) {
      s->boundary_ = N;
      s->names_.push_back("s");
    }
    return finish(s);
  }
  static std::shared_ptr<const VarSpace> v(int r) {
    auto s = make(SpaceKind::v, r);
    for (int i = 1; i <= r - 1; ++i) s->names_.push_back("v" + std::to_string(i));
    return finish(s);
  }
  static std::shared_ptr<const VarSpace> f(int r) {
    auto s = make(SpaceKind::f, r);
    for (int i = 0; i <= r - 2; ++i) s->names_.push_back("f" + std::to_string(i));
    return finish(s);
  }

 private:
  static std::shared_ptr<VarSpace> make(SpaceKind k, int r) {
    auto s = std::make_shared<VarSpace>();
    s->kind_ = k;
    s->r_ = r;
    return s;
  }
  static std::shared_ptr<const VarSpace> finish(std::shared_ptr<VarSpace> s) {
    if (s->count() > kMaxVars) throw BadVar("at most 32 variables are supported, asked for " + std::to_string(s->count()));
    if (s->count() == 0) throw BadVar("empty variable space");
    return s;
  }

  SpaceKind kind_ = SpaceKind::T;
  int r_ = 0;
  int boundary_ = -1;
  std::vector<std::string> names_;
};

using SpacePtr = std::shared_ptr<const VarSpace>;

/// Optional pruning: monomials whose weight sum_i w_i*e_i exceeds `max` are
/// dropped.  Weights are nonnegative, so the kept part of a product only
/// depends on the kept parts of the factors.
struct WeightCap {
  std::vector<int> weights;
  int max = 0;
  int weight(const Monomial& m) const {
    int s = 0;
    for (size_t i = 0; i < weights.size(); ++i)
      if (weights[i] != 0) s += weights[i] * m.exponent(static_cast<int>(i));
    return s;
  }
  friend bool operator==(const WeightCap&, const WeightCap&) = default;
};

// Coefficient-type hooks.
inline void clip_to_budget(Rational&, int) {}
inline void clip_to_budget(Scalar&, int) {}

template <class C>
inline std::string coeff_str(const C& c) {
  return c.str();
}

// ---------------------------------------------------------------------------
// Truncated power series
// ---------------------------------------------------------------------------

/// Sparse multivariate polynomial truncated at total degree `cap`, with
/// coefficients in an exact ring C (Rational, Scalar or EpsScalar).
///
/// Terms are kept sorted in graded-lex order with no zero coefficients.  A
/// coefficient query above the cap is an error rather than a silent zero.
/// For EpsScalar coefficients the cap bounds the combined degree
/// (T-degree + eps-exponent).
template <class C>
class TSeries {
 public:
  using Term = std::pair<Monomial, C>;

  TSeries() = default;
  TSeries(SpacePtr space, int cap) : space_(std::move(space)), cap_(cap) { check_cap(cap_); }

  static TSeries constant(SpacePtr space, int cap, const C& c) {
    TSeries s(std::move(space), cap);
    s.push_checked(Monomial{}, c);
    return s;
  }
  static TSeries variable(SpacePtr space, int cap, int var, const C& c = C(1)) {
    TSeries s(std::move(space), cap);
    s.space_->check(var);
    s.push_checked(Monomial::unit(var), c);
    return s;
  }
  /// Builds from arbitrary (possibly repeated, unsorted) terms.
  static TSeries from_terms(SpacePtr space, int cap, std::vector<Term> terms,
                            std::shared_ptr<const WeightCap> wcap = nullptr) {
    TSeries s(std::move(space), cap);
    s.wcap_ = std::move(wcap);
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return graded_less(a.first, b.first); });
    for (auto& t : terms) {
      if (!s.keeps(t.first)) continue;
      if (!s.terms_.empty() && s.terms_.back().first == t.first) {
        s.terms_.back().second += t.second;
      } else {
        s.terms_.push_back(std::move(t));
      }
    }
    s.normalize();
    return s;
  }

  const VarSpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const { return space_; }
  int cap() const { return cap_; }
  const std::shared_ptr<const WeightCap>& weight_cap() const { return wcap_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  size_t size() const { return terms_.size(); }

  /// Stored coefficient, 0 if absent; OutOfCap above the cap.
  C coefficient(const Monomial& m) const {
    if (m.degree() > cap_)
      throw OutOfCap("degree " + std::to_string(m.degree()) + " monomial read from a series capped at " + std::to_string(cap_));
    if (wcap_ && wcap_->weight(m) > wcap_->max) throw OutOfCap("monomial beyond the weight cap");
    auto it = std::lower_bound(terms_.begin(), terms_.end(), m,
                               [](const Term& t, const Monomial& x) { return graded_less(t.first, x); });
    if (it != terms_.end() && it->first == m) return it->second;
    return zero_coeff();
  }
  C coefficient(const std::vector<int>& exps) const {
    if (static_cast<int>(exps.size()) > space_->count()) throw BadVar("exponent vector longer than the space");
    return coefficient(Monomial::from_exponents(exps));
  }
  C constant_term() const { return coefficient(Monomial{}); }

  int min_degree() const { return terms_.empty() ? cap_ + 1 : terms_.front().first.degree(); }
  int max_degree() const { return terms_.empty() ? -1 : terms_.back().first.degree(); }

  TSeries truncated(int cap) const {
    TSeries s = *this;
    s.cap_ = std::min(cap, cap_);
    check_cap(s.cap_);
    s.terms_.erase(std::remove_if(s.terms_.begin(), s.terms_.end(), [&](const Term& t) { return !s.keeps(t.first); }),
                   s.terms_.end());
    s.clip_all();
    return s;
  }
  TSeries with_weight_cap(std::shared_ptr<const WeightCap> w) const {
    TSeries s = *this;
    s.wcap_ = std::move(w);
    if (s.wcap_)
      s.terms_.erase(std::remove_if(s.terms_.begin(), s.terms_.end(), [&](const Term& t) { return !s.keeps(t.first); }),
                     s.terms_.end());
    return s;
  }
  /// Same terms, declared cap raised (the caller vouches for exactness).
  TSeries with_cap(int cap) const {
    if (cap < cap_) return truncated(cap);
    TSeries s = *this;
    s.cap_ = cap;
    check_cap(cap);
    return s;
  }
  TSeries homogeneous_part(int deg) const {
    TSeries s(space_, cap_);
    s.wcap_ = wcap_;
    for (const auto& t : terms_)
      if (t.first.degree() == deg) s.terms_.push_back(t);
    return s;
  }
  TSeries filtered(const std::function<bool(const Monomial&)>& keep) const {
    TSeries s(space_, cap_);
    s.wcap_ = wcap_;
    for (const auto& t : terms_)
      if (keep(t.first)) s.terms_.push_back(t);
    return s;
  }

  TSeries& operator+=(const TSeries& o) { return *this = combine(*this, o, false); }
  TSeries& operator-=(const TSeries& o) { return *this = combine(*this, o, true); }
  friend TSeries operator+(const TSeries& a, const TSeries& b) { return combine(a, b, false); }
  friend TSeries operator-(const TSeries& a, const TSeries& b) { return combine(a, b, true); }
  TSeries operator-() const {
    TSeries s = *this;
    for (auto& t : s.terms_) t.second = -t.second;
    return s;
  }
  friend TSeries operator*(const TSeries& a, const C& c) {
    TSeries s = a;
    for (auto& t : s.terms_) t.second = t.second * c;
    s.normalize();
    return s;
  }
  friend TSeries operator*(const C& c, const TSeries& a) { return a * c; }

  friend TSeries operator*(const TSeries& a, const TSeries& b) { return mul_truncated(a, b); }

  /// Product truncated to the common (minimum) cap.
  friend TSeries mul_truncated(const TSeries& a, const TSeries& b) {
    TSeries out = empty_like(a, b);
    if (a.is_zero() || b.is_zero()) return out;
    const int cap = out.cap_;
    if (a.size() == 1 || b.size() == 1) {
      const TSeries& one = a.size() == 1 ? a : b;
      const TSeries& many = a.size() == 1 ? b : a;
      const auto& [m1, c1] = one.terms_.front();
      const int d1 = m1.degree();
      for (const auto& [m, c] : many.terms_) {
        if (m.degree() + d1 > cap) break;
        Monomial p = m * m1;
        if (!out.keeps(p)) continue;
        out.terms_.emplace_back(p, c * c1);
      }
      out.normalize();
      return out;
    }
    std::unordered_map<Monomial, C, MonomialHash> acc;
    acc.reserve(a.size() * 2);
    for (const auto& [ma, ca] : a.terms_) {
      const int da = ma.degree();
      if (da + b.min_degree() > cap) break;
      for (const auto& [mb, cb] : b.terms_) {
        if (da + mb.degree() > cap) break;
        Monomial p = ma * mb;
        if (out.wcap_ && out.wcap_->weight(p) > out.wcap_->max) continue;
        auto [it, inserted] = acc.try_emplace(p, zero_coeff_like(ca));
        it->second.add_product(ca, cb);
      }
    }
    out.terms_.reserve(acc.size());
    for (auto& kv : acc) out.terms_.emplace_back(kv.first, std::move(kv.second));
    std::sort(out.terms_.begin(), out.terms_.end(), [](const Term& x, const Term& y) { return graded_less(x.first, y.first); });
    out.normalize();
    return out;
  }

  /// Formal partial derivative; the cap is unchanged.
  TSeries derivative(int var) const {
    space_->check(var);
    TSeries s(space_, cap_);
    s.wcap_ = wcap_;
    const Monomial unit = Monomial::unit(var);
    for (const auto& [m, c] : terms_) {
      const int e = m.exponent(var);
      if (e == 0) continue;
      s.terms_.emplace_back(m / unit, c * C(Rational(e)));
    }
    std::sort(s.terms_.begin(), s.terms_.end(), [](const Term& x, const Term& y) { return graded_less(x.first, y.first); });
    s.normalize();
    return s;
  }

  friend bool operator==(const TSeries& a, const TSeries& b) {
    if (a.terms_.size() != b.terms_.size()) return false;
    for (size_t i = 0; i < a.terms_.size(); ++i)
      if (!(a.terms_[i].first == b.terms_[i].first) || !(a.terms_[i].second == b.terms_[i].second)) return false;
    return true;
  }

  /// Canonical text: graded-lex order, "p/q" coefficients, "T1^2*T3" monomials.
  std::string str() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (const auto& [m, c] : terms_) {
      std::string cs = coeff_str(c);
      bool negative = false;
      const bool compound = cs.find(" + ") != std::string::npos || cs.find(" - ") != std::string::npos;
      if (!compound && !cs.empty() && cs[0] == '-') {
        negative = true;
        cs = cs.substr(1);
      }
      if (compound) cs = "(" + cs + ")";
      std::string mono = monomial_str(m);
      std::string piece;
      if (mono.empty())
        piece = cs;
      else if (cs == "1")
        piece = mono;
      else
        piece = cs + "*" + mono;
      if (out.empty())
        out = (negative ? "-" : "") + piece;
      else
        out += (negative ? " - " : " + ") + piece;
    }
    return out;
  }

  std::string monomial_str(const Monomial& m) const {
    std::string s;
    for (int i = 0; i < space_->count(); ++i) {
      const int e = m.exponent(i);
      if (e == 0) continue;
      if (!s.empty()) s += "*";
      s += space_->name(i);
      if (e > 1) s += "^" + std::to_string(e);
    }
    return s;
  }

  /// Appends a term known to be larger (graded-lex) than every stored term.
  void push_back_sorted(const Monomial& m, const C& c) {
    if (!terms_.empty() && !graded_less(terms_.back().first, m)) throw InternalInconsistency("push_back_sorted out of order");
    push_checked(m, c);
  }

  static C zero_coeff() { return C(Rational(0)); }

 private:
  static C zero_coeff_like(const C&) { return zero_coeff(); }

  static void check_cap(int cap) {
    if (cap < 0 || cap > kMaxExponent)
      throw CapExceeded("degree cap " + std::to_string(cap) + " outside the supported range 0..15");
  }

  bool keeps(const Monomial& m) const {
    if (m.degree() > cap_) return false;
    if (wcap_ && wcap_->weight(m) > wcap_->max) return false;
    return true;
  }

  void push_checked(const Monomial& m, C c) {
    if (!keeps(m)) return;
    clip_to_budget(c, cap_ - m.degree());
    if (c.is_zero()) return;
    terms_.emplace_back(m, std::move(c));
  }

  void clip_all() {
    for (auto& [m, c] : terms_) clip_to_budget(c, cap_ - m.degree());
    normalize();
  }

  void normalize() {
    for (auto& [m, c] : terms_) clip_to_budget(c, cap_ - m.degree());
    terms_.erase(std::remove_if(terms_.begin(), terms_.end(), [](const Term& t) { return t.second.is_zero(); }), terms_.end());
  }

  static TSeries empty_like(const TSeries& a, const TSeries& b) {
    if (!a.space_ || !b.space_) throw SpaceMismatch("uninitialized series");
    if (a.space_ != b.space_ && !(*a.space_ == *b.space_)) throw SpaceMismatch("series over different variable spaces");
    TSeries out(a.space_, std::min(a.cap_, b.cap_));
    if (a.wcap_ && b.wcap_ && !(*a.wcap_ == *b.wcap_)) throw SpaceMismatch("series with different weight caps");
    out.wcap_ = a.wcap_ ? a.wcap_ : b.wcap_;
    return out;
  }

  static TSeries combine(const TSeries& a, const TSeries& b, bool subtract) {
    TSeries out = empty_like(a, b);
    out.terms_.reserve(a.size() + b.size());
    auto ia = a.terms_.begin(), ib = b.terms_.begin();
    while (ia != a.terms_.end() || ib != b.terms_.end()) {
      if (ib == b.terms_.end() || (ia != a.terms_.end() && graded_less(ia->first, ib->first))) {
        if (out.keeps(ia->first)) out.terms_.push_back(*ia);
        ++ia;
      } else if (ia == a.terms_.end() || graded_less(ib->first, ia->first)) {
        if (out.keeps(ib->first)) out.terms_.emplace_back(ib->first, subtract ? -ib->second : ib->second);
        ++ib;
      } else {
        if (out.keeps(ia->first)) out.terms_.emplace_back(ia->first, subtract ? ia->second - ib->second : ia->second + ib->second);
        ++ia;
        ++ib;
      }
    }
    out.normalize();
    return out;
  }

  SpacePtr space_;
  int cap_ = 0;
  std::shared_ptr<const WeightCap> wcap_;
  std::vector<Term> terms_;
};

using RSeries = TSeries<Rational>;
using SSeries = TSeries<Scalar>;
using ESeries = TSeries<EpsScalar>;

/// Coefficientwise conversion between coefficient rings.
template <class D, class C, class F>
TSeries<D> map_coeffs(const TSeries<C>& a, F&& f) {
  std::vector<typename TSeries<D>::Term> terms;
  terms.reserve(a.size());
  for (const auto& [m, c] : a.terms()) terms.emplace_back(m, f(c));
  return TSeries<D>::from_terms(a.space_ptr(), a.cap(), std::move(terms), a.weight_cap());
}

template <class D, class C>
TSeries<D> convert(const TSeries<C>& a) {
  return map_coeffs<D>(a, [](const C& c) { return D(c); });
}

/// Same coefficients, relabelled into another space with the same variable count.
template <class C>
TSeries<C> rebase(const TSeries<C>& a, SpacePtr space) {
  if (space->count() < a.space().count()) throw SpaceMismatch("target space too small");
  return TSeries<C>::from_terms(std::move(space), a.cap(), a.terms());
}

/// Linear change of variables x_i -> images[i], where every image is a
/// homogeneous linear form over the target space.  The result is truncated to
/// the smaller of the source cap and `cap`.
template <class C>
TSeries<C> substitute_linear(const TSeries<C>& a, const std::vector<TSeries<C>>& images, SpacePtr target, int cap) {
  if (static_cast<int>(images.size()) != a.space().count())
    throw SpaceMismatch("substitute_linear needs one image per source variable");
  cap = std::min(cap, a.cap());
  bool diagonal = true;
  std::vector<int> used(target->count(), 0);
  for (const auto& im : images) {
    if (!(im.space() == *target)) throw SpaceMismatch("image not over the target space");
    for (const auto& [m, c] : im.terms())
      if (m.degree() != 1) throw NonLinearSubstitution("image term of degree " + std::to_string(m.degree()));
    if (im.size() != 1) {
      diagonal = false;
      continue;
    }
    const Monomial& m = im.terms().front().first;
    for (int j = 0; j < target->count(); ++j)
      if (m.exponent(j) && used[j]++) diagonal = false;
  }
  if (diagonal) {
    // Monomials map to monomials: rescale and relabel.
    std::vector<int> where(images.size(), -1);
    std::vector<C> scale(images.size(), C(Rational(1)));
    for (size_t i = 0; i < images.size(); ++i) {
      if (images[i].is_zero()) continue;
      const auto& [m, c] = images[i].terms().front();
      for (int j = 0; j < target->count(); ++j)
        if (m.exponent(j)) where[i] = j;
      scale[i] = c;
    }
    std::vector<typename TSeries<C>::Term> terms;
    for (const auto& [m, c] : a.terms()) {
      Monomial out;
      C coef = c;
      bool dead = false;
      for (size_t i = 0; i < images.size(); ++i) {
        const int e = m.exponent(static_cast<int>(i));
        if (e == 0) continue;
        if (where[i] < 0) {
          dead = true;
          break;
        }
        out.set_exponent(where[i], e);
        for (int k = 0; k < e; ++k) coef = coef * scale[i];
      }
      if (!dead) terms.emplace_back(out, coef);
    }
    return TSeries<C>::from_terms(target, cap, std::move(terms));
  }
  std::vector<TSeries<C>> lifted;
  for (const auto& im : images) lifted.push_back(im.with_cap(cap));
  return substitute_series(a, lifted, target, cap);
}

/// Composition p(x_1..x_n) with x_i -> images[i] (series over `target`).
/// Throws CapExceeded when an image has a nonzero constant term while p has
/// terms at its cap, since the truncated tail of p would then feed every
/// degree of the result.
template <class C>
TSeries<C> substitute_series(const TSeries<C>& p, const std::vector<TSeries<C>>& images, SpacePtr target, int cap) {
  const int n = p.space().count();
  if (static_cast<int>(images.size()) != n) throw SpaceMismatch("substitute_series needs one image per variable");
  bool constant_terms = false;
  for (const auto& im : images) {
    if (!(im.space() == *target)) throw SpaceMismatch("image not over the target space");
    cap = std::min(cap, im.cap());
    if (!im.constant_term().is_zero()) constant_terms = true;
  }
  if (constant_terms && p.max_degree() >= p.cap())
    throw CapExceeded("composition with a non-nilpotent image needs p beyond its cap " + std::to_string(p.cap()));
  // Terms of p beyond its cap would land above p's cap in the result.
  if (!constant_terms) cap = std::min(cap, p.cap());
  // Cached powers of each image.
  std::vector<std::vector<TSeries<C>>> powers(n);
  auto power = [&](int i, int e) -> const TSeries<C>& {
    auto& pw = powers[i];
    if (pw.empty()) pw.push_back(TSeries<C>::constant(target, cap, C(Rational(1))));
    while (static_cast<int>(pw.size()) <= e) pw.push_back(pw.back() * images[i].truncated(cap));
    return pw[e];
  };
  TSeries<C> out(target, cap);
  for (const auto& [m, c] : p.terms()) {
    TSeries<C> term = TSeries<C>::constant(target, cap, c);
    for (int i = 0; i < n && !term.is_zero(); ++i) {
      const int e = m.exponent(i);
      if (e) term = term * power(i, e);
    }
    out += term;
  }
  return out;
}

}  // namespace rspin
