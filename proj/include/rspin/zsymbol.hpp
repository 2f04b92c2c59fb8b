#pragma once

#include <algorithm>
#include <climits>
#include <map>
#include <string>
#include <vector>

#include "rspin/errors.hpp"
#include "rspin/series.hpp"

namespace rspin {

/// Laurent series in z with coefficients in a truncated power series ring.
///
/// Only exponents >= low_bound() are known; reading below it is an error.  A
/// symbol whose every coefficient is known (a Laurent polynomial) is "exact"
/// and reports kExact as its bound.
class ZSymbol {
 public:
  static constexpr int kExact = INT_MIN / 4;

  ZSymbol() = default;
  ZSymbol(SpacePtr space, int cap, int low_bound = kExact) : space_(std::move(space)), cap_(cap), low_(low_bound) {}

  static ZSymbol z_power(SpacePtr space, int cap, int k) { return monomial(k, RSeries::constant(space, cap, Rational(1))); }
  static ZSymbol monomial(int k, const RSeries& c) {
    ZSymbol s(c.space_ptr(), c.cap());
    s.set(k, c);
    return s;
  }
  /// z^r + sum_i f[i] z^i.
  static ZSymbol monic(int r, const std::vector<RSeries>& f, SpacePtr space, int cap) {
    ZSymbol s = z_power(space, cap, r);
    for (size_t i = 0; i < f.size(); ++i) s.set(static_cast<int>(i), f[i].truncated(cap));
    return s;
  }

  const SpacePtr& space_ptr() const { return space_; }
  int cap() const { return cap_; }
  int low_bound() const { return low_; }
  bool exact() const { return low_ <= kExact / 2; }
  const std::map<int, RSeries>& coeffs() const { return c_; }

  int top() const { return c_.empty() ? INT_MIN / 8 : c_.rbegin()->first; }
  int lowest_stored() const { return c_.empty() ? INT_MAX / 8 : c_.begin()->first; }
  bool is_zero() const { return c_.empty(); }

  /// Coefficient of z^k; BelowValidRange if k is below the known range.
  RSeries coeff(int k) const {
    if (k < low_) throw BelowValidRange("z^" + std::to_string(k) + " requested, valid down to z^" + std::to_string(low_));
    auto it = c_.find(k);
    return it == c_.end() ? RSeries(space_, cap_) : it->second;
  }

  void set(int k, const RSeries& c) {
    if (k < low_) return;
    if (c.is_zero())
      c_.erase(k);
    else
      c_[k] = c;
  }
  void add_to(int k, const RSeries& c) {
    if (k < low_ || c.is_zero()) return;
    auto it = c_.find(k);
    if (it == c_.end()) {
      c_.emplace(k, c);
    } else {
      it->second += c;
      if (it->second.is_zero()) c_.erase(it);
    }
  }

  /// Drops everything below `floor` and records it as the new bound.
  ZSymbol floored(int floor) const {
    ZSymbol s = *this;
    if (floor <= s.low_) return s;
    s.low_ = floor;
    s.c_.erase(s.c_.begin(), s.c_.lower_bound(floor));
    return s;
  }
  ZSymbol truncated(int cap) const {
    ZSymbol s(space_, std::min(cap, cap_), low_);
    for (const auto& [k, c] : c_) s.set(k, c.truncated(cap));
    return s;
  }
  /// Coefficientwise map.
  template <class F>
  ZSymbol map(F&& f) const {
    ZSymbol s(space_, cap_, low_);
    for (const auto& [k, c] : c_) {
      RSeries v = f(c);
      s.cap_ = std::min(s.cap_, v.cap());
      s.set(k, v);
    }
    return s;
  }

  friend ZSymbol operator+(const ZSymbol& a, const ZSymbol& b) { return combine(a, b, false); }
  friend ZSymbol operator-(const ZSymbol& a, const ZSymbol& b) { return combine(a, b, true); }
  ZSymbol operator-() const {
    return map([](const RSeries& c) { return -c; });
  }
  friend ZSymbol operator*(const ZSymbol& a, const Rational& q) {
    return a.map([&](const RSeries& c) { return c * q; });
  }

  friend ZSymbol operator*(const ZSymbol& a, const ZSymbol& b) { return mul(a, b); }

  /// Product; the result is valid down to max(lo_a + top_b, lo_b + top_a),
  /// additionally floored at `floor`.
  friend ZSymbol mul(const ZSymbol& a, const ZSymbol& b, int floor = kExact) {
    check_space(a, b);
    const int cap = std::min(a.cap_, b.cap_);
    if (a.is_zero() || b.is_zero()) return ZSymbol(a.space_, cap, std::max(floor, std::max(a.low_, b.low_)));
    int bound = std::max(sat(a.low_, b.top()), sat(b.low_, a.top()));
    bound = std::max(bound, floor);
    if (bound <= kExact / 2) bound = kExact;
    ZSymbol out(a.space_, cap, bound);
    for (const auto& [i, x] : a.c_) {
      for (auto it = b.c_.rbegin(); it != b.c_.rend(); ++it) {
        const int k = i + it->first;
        if (k < bound) break;
        out.add_to(k, x * it->second);
      }
    }
    return out;
  }

  /// Nonnegative and negative parts.
  std::pair<ZSymbol, ZSymbol> split() const {
    if (low_ > 0) throw BelowValidRange("split needs coefficients down to z^0, valid only to z^" + std::to_string(low_));
    ZSymbol plus(space_, cap_), minus(space_, cap_, low_);
    for (const auto& [k, c] : c_) (k >= 0 ? plus : minus).set(k, c);
    return {plus, minus};
  }
  ZSymbol plus() const { return split().first; }

  RSeries residue() const {
    if (low_ > -1) throw BelowValidRange("residue needs z^-1, valid only to z^" + std::to_string(low_));
    return coeff(-1);
  }

  /// d/dz.
  ZSymbol dz() const {
    ZSymbol s(space_, cap_, exact() ? kExact : low_ - 1);
    for (const auto& [k, c] : c_)
      if (k != 0) s.set(k - 1, c * Rational(k));
    return s;
  }
  /// Coefficientwise d/dx_var.
  ZSymbol dvar(int var) const {
    return map([&](const RSeries& c) { return c.derivative(var); });
  }

  /// Substitutes z := value in a symbol without negative powers.
  RSeries evaluate(const RSeries& value) const {
    if (low_ > 0) throw BelowValidRange("evaluation needs all nonnegative coefficients");
    if (!c_.empty() && c_.begin()->first < 0) throw BelowValidRange("evaluation of a symbol with negative z-powers");
    const int cap = std::min(cap_, value.cap());
    RSeries out(space_, cap);
    // Horner from the top degree.
    for (int k = top(); k >= 0; --k) {
      out = out * value;
      auto it = c_.find(k);
      if (it != c_.end()) out += it->second.truncated(cap);
    }
    return out;
  }

  friend bool operator==(const ZSymbol& a, const ZSymbol& b) {
    if (a.c_.size() != b.c_.size()) return false;
    for (auto ia = a.c_.begin(), ib = b.c_.begin(); ia != a.c_.end(); ++ia, ++ib)
      if (ia->first != ib->first || !(ia->second == ib->second)) return false;
    return true;
  }

  /// "z^2 + 2*T1", highest power first; compound coefficients parenthesized.
  std::string str() const {
    if (c_.empty()) return "0";
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
      std::string zs = k == 0 ? "" : (k == 1 ? "z" : "z^" + std::to_string(k));
      std::string piece = zs.empty() ? cs : (cs == "1" ? zs : cs + "*" + zs);
      if (out.empty())
        out = (negative ? "-" : "") + piece;
      else
        out += (negative ? " - " : " + ") + piece;
    }
    return out;
  }

 private:
  static int sat(int a, int b) {
    if (a <= kExact / 2 || b <= kExact / 2) return kExact;
    return a + b;
  }
  static void check_space(const ZSymbol& a, const ZSymbol& b) {
    if (!a.space_ || !b.space_ || !(*a.space_ == *b.space_)) throw SpaceMismatch("symbols over different spaces");
  }
  static ZSymbol combine(const ZSymbol& a, const ZSymbol& b, bool subtract) {
    check_space(a, b);
    ZSymbol out(a.space_, std::min(a.cap_, b.cap_), std::max(a.low_, b.low_));
    for (const auto& [k, c] : a.c_) out.set(k, c.truncated(out.cap_));
    for (const auto& [k, c] : b.c_) out.add_to(k, subtract ? -c.truncated(out.cap_) : c.truncated(out.cap_));
    return out;
  }

  SpacePtr space_;
  int cap_ = 0;
  int low_ = kExact;
  std::map<int, RSeries> c_;
};

/// {a, b} = da/dz * db/dx - da/dx * db/dz, with x the variable `xvar`.
inline ZSymbol poisson(const ZSymbol& a, const ZSymbol& b, int xvar = 0) {
  return mul(a.dz(), b.dvar(xvar)) - mul(a.dvar(xvar), b.dz());
}

namespace detail {
inline void check_monic(const ZSymbol& a, int r) {
  if (r < 1) throw NotMonic("top degree must be positive");
  if (a.top() != r) throw NotMonic("top z-degree " + std::to_string(a.top()) + ", expected " + std::to_string(r));
  const RSeries lead = a.coeff(r);
  if (lead.size() != 1 || !lead.terms().front().first.is_one() || !lead.terms().front().second.is_one())
    throw NotMonic("leading coefficient is not 1");
}
}  // namespace detail

/// a^{n/r} = z^n (1+u)^{n/r}, u = (a - z^r) z^{-r}, for every n in `ns`, each
/// valid down to z^depth.  The binomial series is cut where either the T-cap
/// or the requested z-depth makes further terms vanish.
inline std::vector<ZSymbol> fractional_powers(const ZSymbol& a, int r, const std::vector<int>& ns, int depth) {
  detail::check_monic(a, r);
  if (ns.empty()) return {};
  const int nmax = *std::max_element(ns.begin(), ns.end());
  for (int n : ns)
    if (depth > n) throw DepthUnreachable("depth z^" + std::to_string(depth) + " above the top degree " + std::to_string(n));
  if (nmax - depth > 4096) throw DepthUnreachable("z-depth request too deep");
  const int cap = a.cap();
  ZSymbol u = (a - ZSymbol::z_power(a.space_ptr(), cap, r));
  {
    ZSymbol shifted(a.space_ptr(), cap, u.exact() ? ZSymbol::kExact : u.low_bound() - r);
    for (const auto& [k, c] : u.coeffs()) shifted.set(k - r, c);
    u = shifted;
  }
  const int floor = depth - nmax;
  // Number of binomial terms that can contribute.
  int kmax = INT_MAX;
  if (!u.is_zero()) {
    const int utop = u.top();  // <= -1
    kmax = std::min(kmax, (nmax - depth) / (-utop));
    int min_deg = INT_MAX;
    for (const auto& [k, c] : u.coeffs()) min_deg = std::min(min_deg, c.min_degree());
    if (min_deg >= 1) kmax = std::min(kmax, cap / min_deg);
  } else {
    kmax = 0;
  }
  std::vector<ZSymbol> upow;
  upow.push_back(ZSymbol::z_power(a.space_ptr(), cap, 0));
  for (int k = 1; k <= kmax; ++k) upow.push_back(mul(upow.back(), u, floor));
  std::vector<ZSymbol> out;
  for (int n : ns) {
    ZSymbol acc(a.space_ptr(), cap);
    int bound = ZSymbol::kExact;
    for (int k = 0; k <= kmax; ++k) {
      const Rational b = binomial(Rational(n, r), k);
      if (b.is_zero()) break;
      const ZSymbol& p = upow[k];
      if (!p.exact()) bound = std::max(bound, p.low_bound() + n);
      for (const auto& [e, c] : p.coeffs())
        if (e + n >= depth) acc.add_to(e + n, c * b);
    }
    bound = std::max(bound, depth);
    if (u.is_zero()) bound = ZSymbol::kExact;
    out.push_back(acc.floored(bound));
  }
  return out;
}

inline ZSymbol fractional_power(const ZSymbol& a, int r, int n, int depth) { return fractional_powers(a, r, {n}, depth).front(); }

}  // namespace rspin
