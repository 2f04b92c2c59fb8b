#pragma once

#include <algorithm>
#include <climits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "rspin/errors.hpp"
#include "rspin/series.hpp"

namespace rspin {

/// Multiplies every coefficient by eps^k.
inline ESeries eps_shift(const ESeries& a, int k) {
  if (k == 0) return a;
  return map_coeffs<EpsScalar>(a, [k](const EpsScalar& c) { return c.shifted(k); });
}

/// Re-windows every coefficient (see EpsScalar::restricted).
inline ESeries eps_restrict(const ESeries& a, int lo, int hi) {
  return map_coeffs<EpsScalar>(a, [&](const EpsScalar& c) { return c.restricted(lo, hi); });
}

/// The eps^g layer of a series, as a rational series.
inline RSeries eps_layer(const ESeries& a, int g) {
  std::vector<RSeries::Term> terms;
  for (const auto& [m, c] : a.terms()) {
    Rational q = c.coeff(g);
    if (!q.is_zero()) terms.emplace_back(m, q);
  }
  return RSeries::from_terms(a.space_ptr(), a.cap(), std::move(terms));
}

/// Pseudo-differential operator sum_k a_k D^k with eps-graded coefficients.
///
/// D is either d/dx (hbar power 0) or eps*d/dx (hbar power 1); moving D^k past
/// a coefficient f follows
///   D^k o f = sum_l binom(k, l) eps^{hbar*l} (d^l f/dx^l) D^{k-l}.
/// Coefficients below low_bound() are unknown; reading them is an error.
class PDOp {
 public:
  static constexpr int kExact = INT_MIN / 4;

  PDOp() = default;
  PDOp(SpacePtr space, int cap, int hbar_power, int low_bound = kExact, int xvar = 0)
      : space_(std::move(space)), cap_(cap), hbar_(hbar_power), low_(low_bound), xvar_(xvar) {}

  static PDOp d_power(SpacePtr space, int cap, int hbar_power, int k) {
    PDOp p(space, cap, hbar_power);
    p.set(k, ESeries::constant(space, cap, EpsScalar(1)));
    return p;
  }
  static PDOp multiplication(const ESeries& f, int hbar_power) {
    PDOp p(f.space_ptr(), f.cap(), hbar_power);
    p.set(0, f);
    return p;
  }

  const SpacePtr& space_ptr() const { return space_; }
  int cap() const { return cap_; }
  int hbar_power() const { return hbar_; }
  int low_bound() const { return low_; }
  bool exact() const { return low_ <= kExact / 2; }
  int xvar() const { return xvar_; }
  const std::map<int, ESeries>& coeffs() const { return c_; }
  bool is_zero() const { return c_.empty(); }
  int top() const { return c_.empty() ? INT_MIN / 8 : c_.rbegin()->first; }

  ESeries coeff(int k) const {
    if (k < low_) throw BelowValidRange("D^" + std::to_string(k) + " requested, valid down to D^" + std::to_string(low_));
    auto it = c_.find(k);
    return it == c_.end() ? ESeries(space_, cap_) : it->second;
  }
  void set(int k, const ESeries& c) {
    if (k < low_) return;
    if (c.is_zero())
      c_.erase(k);
    else
      c_[k] = c;
  }
  void add_to(int k, const ESeries& c) {
    if (k < low_ || c.is_zero()) return;
    auto it = c_.find(k);
    if (it == c_.end()) {
      c_.emplace(k, c);
    } else {
      it->second += c;
      if (it->second.is_zero()) c_.erase(it);
    }
  }

  PDOp floored(int floor) const {
    PDOp p = *this;
    if (floor <= p.low_) return p;
    p.low_ = floor;
    p.c_.erase(p.c_.begin(), p.c_.lower_bound(floor));
    return p;
  }
  template <class F>
  PDOp map(F&& f) const {
    PDOp p(space_, cap_, hbar_, low_, xvar_);
    for (const auto& [k, c] : c_) p.set(k, f(c));
    return p;
  }

  friend PDOp operator+(const PDOp& a, const PDOp& b) { return combine(a, b, false); }
  friend PDOp operator-(const PDOp& a, const PDOp& b) { return combine(a, b, true); }
  PDOp operator-() const {
    return map([](const ESeries& c) { return -c; });
  }
  friend PDOp operator*(const PDOp& a, const Rational& q) {
    return a.map([&](const ESeries& c) { return c * EpsScalar(q); });
  }

  /// Composition a o b, valid down to max(lo_a + top_b, lo_b + top_a) and
  /// additionally floored at `floor`.
  friend PDOp compose(const PDOp& a, const PDOp& b, int floor = kExact) {
    check(a, b);
    const int cap = std::min(a.cap_, b.cap_);
    int bound = std::max({sat(a.low_, b.top()), sat(b.low_, a.top()), floor});
    if (a.is_zero() || b.is_zero()) return PDOp(a.space_, cap, a.hbar_, std::max({a.low_, b.low_, floor}), a.xvar_);
    if (bound <= kExact / 2) bound = kExact;
    PDOp out(a.space_, cap, a.hbar_, bound, a.xvar_);
    // Cache x-derivatives of b's coefficients, already multiplied by eps^{hbar*l}.
    std::map<int, std::vector<ESeries>> dcache;
    auto deriv = [&](int j, int l) -> const ESeries* {
      auto& v = dcache[j];
      if (v.empty()) v.push_back(b.c_.at(j).truncated(cap));
      while (static_cast<int>(v.size()) <= l) {
        const ESeries& last = v.back();
        if (last.is_zero()) return nullptr;
        v.push_back(eps_shift(last.derivative(a.xvar_), a.hbar_));
      }
      return v[l].is_zero() ? nullptr : &v[l];
    };
    for (const auto& [i, ai] : a.c_) {
      const ESeries ait = ai.truncated(cap);
      for (const auto& [j, bj] : b.c_) {
        for (int l = 0;; ++l) {
          const int k = i + j - l;
          if (k < bound) break;
          const Rational coef = binomial(Rational(i), l);
          if (i >= 0 && l > i) break;
          const ESeries* d = deriv(j, l);
          if (!d) break;
          out.add_to(k, ait * (*d) * EpsScalar(coef));
        }
      }
    }
    return out;
  }

  std::tuple<PDOp, PDOp, ESeries> project_residue() const {
    if (low_ > 0) throw BelowValidRange("projection needs coefficients down to D^0");
    PDOp plus(space_, cap_, hbar_, kExact, xvar_), minus(space_, cap_, hbar_, low_, xvar_);
    for (const auto& [k, c] : c_) (k >= 0 ? plus : minus).set(k, c);
    if (low_ > -1) throw BelowValidRange("residue needs D^-1, valid only to D^" + std::to_string(low_));
    return {plus, minus, coeff(-1)};
  }
  PDOp plus() const {
    if (low_ > 0) throw BelowValidRange("projection needs coefficients down to D^0");
    PDOp p(space_, cap_, hbar_, kExact, xvar_);
    for (const auto& [k, c] : c_)
      if (k >= 0) p.set(k, c);
    return p;
  }
  ESeries residue() const {
    if (low_ > -1) throw BelowValidRange("residue needs D^-1, valid only to D^" + std::to_string(low_));
    return coeff(-1);
  }

  friend bool operator==(const PDOp& a, const PDOp& b) {
    if (a.c_.size() != b.c_.size()) return false;
    for (auto ia = a.c_.begin(), ib = b.c_.begin(); ia != a.c_.end(); ++ia, ++ib)
      if (ia->first != ib->first || !(ia->second == ib->second)) return false;
    return true;
  }

  /// "Dx^3 + 3*e^-3*T1"; D prints as Dx (hbar power 0) or eDx (hbar power 1).
  std::string str() const {
    if (c_.empty()) return "0";
    const std::string d = hbar_ ? "eDx" : "Dx";
    std::string out;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) {
      const int k = it->first;
      std::string cs = it->second.str();
      bool negative = false;
      const bool compound = cs.find(" + ") != std::string::npos || cs.find(" - ") != std::string::npos;
      if (!compound && cs[0] == '-') {
        negative = true;
        cs = cs.substr(1);
      }
      if (compound && k != 0) cs = "(" + cs + ")";
      std::string ds = k == 0 ? "" : (k == 1 ? d : d + "^" + std::to_string(k));
      std::string piece = ds.empty() ? cs : (cs == "1" ? ds : cs + "*" + ds);
      if (out.empty())
        out = (negative ? "-" : "") + piece;
      else
        out += (negative ? " - " : " + ") + piece;
    }
    return out;
  }

 private:
  static int sat(int a, int b) {
    if (a <= kExact / 2 || b <= INT_MIN / 16) return kExact;
    return a + b;
  }
  static void check(const PDOp& a, const PDOp& b) {
    if (!a.space_ || !b.space_ || !(*a.space_ == *b.space_)) throw SpaceMismatch("operators over different spaces");
    if (a.hbar_ != b.hbar_ || a.xvar_ != b.xvar_) throw SpaceMismatch("operators with different derivations");
  }
  static PDOp combine(const PDOp& a, const PDOp& b, bool subtract) {
    check(a, b);
    PDOp out(a.space_, std::min(a.cap_, b.cap_), a.hbar_, std::max(a.low_, b.low_), a.xvar_);
    for (const auto& [k, c] : a.c_) out.set(k, c.truncated(out.cap_));
    for (const auto& [k, c] : b.c_) out.add_to(k, subtract ? -c.truncated(out.cap_) : c.truncated(out.cap_));
    return out;
  }

  SpacePtr space_;
  int cap_ = 0;
  int hbar_ = 0;
  int low_ = kExact;
  int xvar_ = 0;
  std::map<int, ESeries> c_;
};

inline PDOp commutator(const PDOp& a, const PDOp& b, int floor = PDOp::kExact) {
  return compose(a, b, floor) - compose(b, a, floor);
}

/// a^n for n >= 1 by repeated right multiplication.  With a floor, partial
/// products keep exactly the range the remaining factors still need.
inline PDOp power(const PDOp& a, int n, int floor = PDOp::kExact) {
  if (n < 1) throw BadIndex("power needs n >= 1");
  const bool floored = floor > PDOp::kExact / 2;
  const int t = a.top();
  PDOp p = floored ? a.floored(floor - (n - 1) * t) : a;
  for (int k = 2; k <= n; ++k) p = compose(p, a, floored ? floor - (n - k) * t : PDOp::kExact);
  return p;
}

/// The unique Q = D + sum_{n>=0} q_n D^{-n} with Q^r = a, valid down to D^depth.
/// q_n is fixed by the D^{r-1-n} coefficient of Q^r, which depends on q_n
/// only through the leading term r*q_n.
inline PDOp rth_root(const PDOp& a, int r, int depth) {
  if (r < 1 || a.top() != r) throw NotMonic("operator top degree is not " + std::to_string(r));
  const ESeries lead = a.coeff(r);
  if (lead.size() != 1 || !lead.terms().front().first.is_one() || !lead.terms().front().second.is_one())
    throw NotMonic("leading coefficient is not 1");
  if (depth > 1) throw DepthUnreachable("root depth above its top degree");
  if (!a.exact() && a.low_bound() > r - 1 + depth)
    throw DepthUnreachable("input valid to D^" + std::to_string(a.low_bound()) + " cannot give a root valid to D^" +
                           std::to_string(depth));
  PDOp q = PDOp::d_power(a.space_ptr(), a.cap(), a.hbar_power(), 1);
  const Rational inv_r(1, r);
  for (int n = 0; -n >= depth; ++n) {
    const int target = r - 1 - n;
    PDOp p = power(q, r, target);
    ESeries qn = (a.coeff(target) - p.coeff(target)) * EpsScalar(inv_r);
    q.set(-n, qn);
  }
  return q.floored(depth);
}

}  // namespace rspin
