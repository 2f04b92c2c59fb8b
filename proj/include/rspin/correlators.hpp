#pragma once

#include <algorithm>
#include <compare>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rspin/errors.hpp"
#include "rspin/hierarchy.hpp"
#include "rspin/rational.hpp"
#include "rspin/scalar.hpp"
#include "rspin/series.hpp"

namespace rspin {

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

enum class Sector { closed, extended, open };

inline std::string sector_name(Sector s) {
  switch (s) {
    case Sector::closed:
      return "closed";
    case Sector::extended:
      return "extended";
    case Sector::open:
      return "open";
  }
  return "?";
}

inline Sector parse_sector(const std::string& s) {
  if (s == "closed" || s == "c") return Sector::closed;
  if (s == "extended" || s == "ext" || s == "e") return Sector::extended;
  if (s == "open" || s == "o") return Sector::open;
  throw BadKey("unknown sector '" + s + "'");
}

/// An insertion tau^twist_desc.  Twist -1 only appears inside the engine.
struct Point {
  int twist = 0;
  int desc = 0;
  auto operator<=>(const Point&) const = default;
};
using Points = std::vector<Point>;

inline Points sorted(Points p) {
  std::sort(p.begin(), p.end());
  return p;
}

inline int count_twist(const Points& p, int twist) {
  return static_cast<int>(std::count_if(p.begin(), p.end(), [&](const Point& q) { return q.twist == twist; }));
}

inline std::string points_str(const Points& p) {
  std::string s = "<";
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) s += " ";
    s += "tau^" + std::to_string(p[i].twist) + "_" + std::to_string(p[i].desc);
  }
  return s + ">";
}

/// A correlator: a multiset of insertions (twist 0..r-1, descendant >= 0)
/// plus, for the extended sector, the implicit tau^{-1} (which may carry a
/// descendant), and for the open sector the number of boundary points.
struct CorrelatorKey {
  int r = 2;
  Sector sector = Sector::closed;
  Points insertions;
  int boundary = 0;    // open: number of boundary points
  int minus_desc = 0;  // extended: descendant on the tau^{-1} point

  static CorrelatorKey closed(int r, Points ins) { return make(r, Sector::closed, std::move(ins), 0, 0); }
  static CorrelatorKey extended(int r, Points ins, int minus_desc = 0) {
    return make(r, Sector::extended, std::move(ins), 0, minus_desc);
  }
  static CorrelatorKey open(int r, Points ins, int m) { return make(r, Sector::open, std::move(ins), m, 0); }

  int total_desc() const {
    int s = minus_desc;
    for (const auto& p : insertions) s += p.desc;
    return s;
  }
  /// All points, the tau^{-1} point included.
  Points points() const {
    Points p = insertions;
    if (sector == Sector::extended) p.push_back({-1, minus_desc});
    return sorted(std::move(p));
  }
  std::string str() const {
    std::string s = "<";
    bool first = true;
    auto put = [&](const std::string& x) {
      if (!first) s += " ";
      s += x;
      first = false;
    };
    if (sector == Sector::extended) put("tau^-1_" + std::to_string(minus_desc));
    for (const auto& p : insertions) put("tau^" + std::to_string(p.twist) + "_" + std::to_string(p.desc));
    if (sector == Sector::open && boundary > 0) put("sigma^" + std::to_string(boundary));
    return s + ">";
  }
  friend auto operator<=>(const CorrelatorKey&, const CorrelatorKey&) = default;

 private:
  static CorrelatorKey make(int r, Sector sector, Points ins, int m, int minus_desc) {
    if (r < 2) throw BadKey("r must be at least 2");
    for (const auto& p : ins) {
      if (p.twist == -1)
        throw TwoMinusOneInsertions("the tau^{-1} insertion is implicit; an explicit one would make two");
      if (p.twist < 0 || p.twist > r - 1) throw BadKey("twist " + std::to_string(p.twist) + " outside 0.." + std::to_string(r - 1));
      if (p.desc < 0) throw BadKey("negative descendant");
    }
    if (m < 0) throw BadKey("negative boundary count");
    if (minus_desc < 0) throw BadKey("negative descendant");
    return CorrelatorKey{r, sector, sorted(std::move(ins)), m, minus_desc};
  }
};

/// Parses "1:0,2:0,2:1" (twist:descendant pairs; an empty string is no insertions).
inline Points parse_insertions(const std::string& text) {
  Points out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    try {
      size_t used = 0;
      Point p;
      if (colon == std::string::npos) {
        p.twist = std::stoi(item, &used);
        if (used != item.size()) throw BadKey("bad insertion '" + item + "'");
      } else {
        const std::string a = item.substr(0, colon), d = item.substr(colon + 1);
        p.twist = std::stoi(a, &used);
        if (used != a.size()) throw BadKey("bad insertion '" + item + "'");
        p.desc = std::stoi(d, &used);
        if (used != d.size()) throw BadKey("bad insertion '" + item + "'");
      }
      out.push_back(p);
    } catch (const std::logic_error&) {
      throw BadKey("bad insertion '" + item + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dimension constraints
// ---------------------------------------------------------------------------

/// Closed: e = (sum alpha - (r-2))/r a nonnegative integer with e + sum d = n - 3.
inline bool closed_gate(int r, const Points& p) {
  const int n = static_cast<int>(p.size());
  if (n < 3) return false;
  int sa = 0, sd = 0;
  for (const auto& q : p) sa += q.twist, sd += q.desc;
  const int num = sa - (r - 2);
  if (num < 0 || num % r) return false;
  return num / r + sd == n - 3;
}

/// Extended (one point of twist -1 among p): the same rank formula with the
/// -1 twist included, i.e. (sum' alpha - (r-1))/r + sum d = n' - 2 over the
/// n' points of nonnegative twist.
inline bool extended_gate(int r, const Points& p) {
  int sa = 0, sd = 0;
  for (const auto& q : p) sa += q.twist, sd += q.desc;
  const int n = static_cast<int>(p.size());
  const int num = sa - (r - 2);
  if (num < 0 || num % r) return false;
  return num / r + sd == n - 3;
}

/// Open disk: e_o = ((m-1)(r-2) + 2 sum alpha)/r a nonnegative integer of
/// the parity of m+1, with e_o + 2 sum d = m + 2n - 3.
inline bool open_gate(int r, const Points& internal, int m) {
  int sa = 0, sd = 0;
  for (const auto& q : internal) sa += q.twist, sd += q.desc;
  const int n = static_cast<int>(internal.size());
  const int num = (m - 1) * (r - 2) + 2 * sa;
  if (num < 0 || num % r) return false;
  const int eo = num / r;
  if ((eo - m - 1) % 2) return false;
  return eo + 2 * sd == m + 2 * n - 3;
}

// ---------------------------------------------------------------------------
// Changes of variables
// ---------------------------------------------------------------------------

/// T_k = scale[k-1] * t_{k-1}, with t_{k-1} = t^alpha_d for k = alpha + 1 + r d:
///   non-Ramond: T_k = t^alpha_d / (L^{3k-(r+1)-2d(r+1)} k!_r),
///               k!_r = prod_{i=0}^{d} (alpha + 1 + r i);
///   Ramond:     T_{mr} = t^{r-1}_{m-1} / (L^{m(r-2)} m! r^m).
struct ChangeOfVars {
  int r = 2;
  int N = 0;
  std::vector<Scalar> scale;

  static ChangeOfVars standard(int r, int N) {
    ChangeOfVars c{r, N, {}};
    for (int k = 1; k <= N; ++k) {
      const int alpha = (k - 1) % r, d = (k - 1) / r;
      if (k % r != 0) {
        Rational kf(1);
        for (int i = 0; i <= d; ++i) kf *= Rational(alpha + 1 + r * i);
        const int ex = 3 * k - (r + 1) - 2 * d * (r + 1);
        c.scale.push_back(Scalar::monomial(r, kf.inverse(), -ex));
      } else {
        const int m = k / r;
        c.scale.push_back(Scalar::monomial(r, (factorial(m) * pow(Rational(r), m)).inverse(), -m * (r - 2)));
      }
    }
    return c;
  }
};

/// F(T) rewritten in t^alpha_d via the diagonal change of variables.
template <class C>
SSeries to_t_variables(const TSeries<C>& F, const ChangeOfVars& cov) {
  const int n = F.space().count();
  if (n > cov.N) throw UnmappedVariable("T" + std::to_string(cov.N + 1) + " has no t-variable in this change of variables");
  auto tspace = VarSpace::t(cov.r, n);
  std::vector<SSeries> images;
  for (int k = 1; k <= n; ++k) images.push_back(SSeries::variable(tspace, F.cap(), k - 1, cov.scale[k - 1]));
  return substitute_linear(convert<Scalar>(F), images, tspace, F.cap());
}

/// The inverse: G(t) rewritten in T_k.
inline SSeries to_T_variables(const SSeries& G, const ChangeOfVars& cov) {
  const int n = G.space().count();
  if (n > cov.N) throw UnmappedVariable("t-variable " + std::to_string(n) + " is not mapped");
  auto Tspace = VarSpace::T(n);
  std::vector<SSeries> images;
  for (int k = 1; k <= n; ++k) images.push_back(SSeries::variable(Tspace, G.cap(), k - 1, invert_unit(cov.scale[k - 1])));
  return substitute_linear(G, images, Tspace, G.cap());
}

inline RSeries rational_series(const SSeries& s) {
  return map_coeffs<Rational>(s, [](const Scalar& c) { return as_rational(c); });
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

/// Monomial of a key in a t-space, and the product of factorials of its
/// multiplicities (the 1/n! and 1/m! conventions).
inline std::pair<Monomial, Rational> key_monomial(const CorrelatorKey& key, const VarSpace& space) {
  if (key.sector == Sector::extended && key.minus_desc != 0)
    throw BadKey("a descendant on tau^{-1} has no variable in the extended potential");
  std::map<int, int> mult;
  for (const auto& p : key.insertions) ++mult[space.t_index(p.twist, p.desc)];
  if (key.sector == Sector::open && key.boundary > 0) {
    if (space.boundary_index() < 0) throw BadKey("open key read from a potential without boundary variable");
    mult[space.boundary_index()] += key.boundary;
  }
  Monomial m;
  Rational fact(1);
  for (auto [v, e] : mult) {
    if (e > kMaxExponent) throw CapExceeded("multiplicity " + std::to_string(e) + " exceeds the exponent limit");
    m = m * Monomial::unit(v, e);
    fact *= factorial(e);
  }
  return {m, fact};
}

/// Coefficient of the key's monomial times the product of multiplicity factorials.
template <class C>
C extract_correlator(const TSeries<C>& F, const CorrelatorKey& key) {
  auto [m, fact] = key_monomial(key, F.space());
  return F.coefficient(m) * C(fact);
}

// ---------------------------------------------------------------------------
// Hierarchy side: closed and extended potentials in t-variables
// ---------------------------------------------------------------------------

/// F_ext(t) = sqrt(-r) phi0(T(t)) with the Ramond times t^{r-1}_* divided by
/// sqrt(-r) = L^{r+1}.  Every coefficient must be rational.
inline RSeries extended_from_phi0(const PhiJet& phi, const ChangeOfVars& cov) {
  SSeries s = to_t_variables(phi.phi0, cov);
  const int r = phi.r;
  const auto& space = s.space_ptr();
  std::vector<SSeries> images;
  for (int i = 0; i < space->count(); ++i) {
    const bool ramond = i % r == r - 1;
    images.push_back(SSeries::variable(space, s.cap(), i, ramond ? lambda_pow(r, -(r + 1)) : Scalar::monomial(r, Rational(1), 0)));
  }
  s = substitute_linear(s, images, space, s.cap()) * lambda_pow(r, r + 1);
  return rational_series(s);
}

/// The closed potential in t-variables.
inline RSeries closed_in_t(const RSeries& Fc, const ChangeOfVars& cov) { return rational_series(to_t_variables(Fc, cov)); }

/// F_o = -(1/r) F_ext|_{t^{r-1}_0 -> t^{r-1}_0 - r s} + (1/r) F_ext, over the
/// t-space with the boundary variable s adjoined.
inline RSeries open_potential(const RSeries& Fext, int r) {
  const int n = Fext.space().count();
  if (n < r) throw CapExceeded("open potential needs t^{r-1}_0 in the extended potential");
  auto ospace = VarSpace::t(r, n, true);
  RSeries F = rebase(Fext, ospace);
  std::vector<RSeries> images;
  for (int i = 0; i < n; ++i) images.push_back(RSeries::variable(ospace, F.cap(), i));
  images.push_back(RSeries::variable(ospace, F.cap(), n));
  images[r - 1] += RSeries::variable(ospace, F.cap(), n, Rational(-r));
  RSeries shifted = substitute_linear(F, images, ospace, F.cap());
  return (F - shifted) * Rational(1, r);
}

/// Closed correlators served from a closed potential in t-variables.
class ClosedSource {
 public:
  ClosedSource(int r, RSeries Fc_t) : r_(r), F_(std::move(Fc_t)) {}

  int r() const { return r_; }
  int cap() const { return F_.cap(); }
  int max_index() const { return F_.space().count(); }
  const RSeries& potential() const { return F_; }

  /// Ramond vanishing and the dimension constraint first, then extraction.
  Rational value(const Points& p) const {
    for (const auto& q : p)
      if (q.twist == r_ - 1) return Rational(0);
    if (!closed_gate(r_, p)) return Rational(0);
    const int n = static_cast<int>(p.size());
    if (n > F_.cap())
      throw CapExceeded("closed correlator " + points_str(p) + " needs the closed potential to degree " + std::to_string(n));
    for (const auto& q : p)
      if (q.twist + 1 + r_ * q.desc > max_index())
        throw CapExceeded("closed correlator " + points_str(p) + " needs flows up to T" + std::to_string(q.twist + 1 + r_ * q.desc));
    return extract_correlator(F_, CorrelatorKey::closed(r_, p));
  }

 private:
  int r_;
  RSeries F_;
};

// ---------------------------------------------------------------------------
// Geometric reconstruction of extended correlators
// ---------------------------------------------------------------------------

/// (-1)^alpha alpha! / r^alpha.
inline Rational x_alpha(int r, int alpha) {
  Rational v = factorial(alpha) / pow(Rational(r), alpha);
  return alpha % 2 ? -v : v;
}

/// Evaluates extended correlators from the dimension constraint, the general
/// TRR, the closed form X_alpha and the primary recursion, with closed
/// correlators supplied by a ClosedSource.  Safe for concurrent use.
class ExtendedEngine {
 public:
  ExtendedEngine(int r, std::shared_ptr<const ClosedSource> closed) : r_(r), closed_(std::move(closed)) {
    if (closed_ && closed_->r() != r) throw BadIndex("closed source for a different r");
  }

  int r() const { return r_; }

  /// Any correlator with at most one point of twist -1.
  Rational value(const Points& raw) const {
    const Points p = sorted(raw);
    const int minus = count_twist(p, -1);
    if (minus >= 2) throw TwoMinusOneInsertions(points_str(p) + " has two insertions of twist -1");
    if (minus == 0) return closed_value(p);
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = memo_.find(p);
      if (it != memo_.end()) return it->second;
    }
    const Rational v = compute(p);
    std::lock_guard<std::mutex> lock(mu_);
    memo_.emplace(p, v);
    return v;
  }
  Rational value(const CorrelatorKey& key) const {
    if (key.sector == Sector::open) throw BadKey("open keys are not evaluated by the extended engine");
    return value(key.points());
  }

  Rational closed_value(const Points& p) const {
    for (const auto& q : p)
      if (q.twist == r_ - 1) return Rational(0);
    if (!closed_gate(r_, p)) return Rational(0);
    if (!closed_) throw CapExceeded("no closed correlators available for " + points_str(p));
    return closed_->value(p);
  }

  /// Right side of the general TRR for the choice (i, j, k) of positions in
  /// the sorted point list; d_i > 0 and i, j, k distinct.
  Rational general_trr(const Points& raw, size_t i, size_t j, size_t k) const {
    const Points p = sorted(raw);
    if (i >= p.size() || j >= p.size() || k >= p.size() || i == j || i == k || j == k) throw BadIndex("TRR needs distinct points");
    if (p[i].desc == 0) throw BadIndex("TRR needs a descendant at the chosen point");
    std::vector<size_t> rest;
    for (size_t l = 0; l < p.size(); ++l)
      if (l != i && l != j && l != k) rest.push_back(l);
    Rational sum(0);
    for (unsigned mask = 0; mask < (1u << rest.size()); ++mask) {
      Points I, J{p[j], p[k]};
      for (size_t b = 0; b < rest.size(); ++b) (mask >> b & 1 ? I : J).push_back(p[rest[b]]);
      for (int a = -1; a <= r_ - 1; ++a) {
        Points left = I, right = J;
        left.push_back({a, 0});
        left.push_back({p[i].twist, p[i].desc - 1});
        right.push_back({r_ - 2 - a, 0});
        sum += pair_product(left, right);
      }
    }
    return sum;
  }

  /// Canonical TRR choice: i = a point of maximal descendant (a point of
  /// nonnegative twist when possible), j = the -1 point, k = the first other.
  /// When i is the -1 point, j and k are the first two other points.
  std::optional<std::tuple<size_t, size_t, size_t>> canonical_choice(const Points& p) const {
    int best = 0;
    std::optional<size_t> i;
    for (size_t l = 0; l < p.size(); ++l)
      if (p[l].desc > best || (p[l].desc == best && best > 0 && p[l].twist >= 0)) best = p[l].desc, i = l;
    if (!i) return std::nullopt;
    std::vector<size_t> others;
    size_t minus = p.size();
    for (size_t l = 0; l < p.size(); ++l) {
      if (l == *i) continue;
      if (p[l].twist == -1)
        minus = l;
      else
        others.push_back(l);
    }
    if (minus < p.size()) {
      if (others.empty()) return std::nullopt;
      return std::make_tuple(*i, minus, others[0]);
    }
    if (others.size() < 2) return std::nullopt;
    return std::make_tuple(*i, others[0], others[1]);
  }

  /// Product of the two factors of a TRR summand.  A factor with two -1
  /// insertions only ever meets a closed partner with a Ramond insertion, so
  /// the summand vanishes; anything else is an error.
  Rational pair_product(const Points& left, const Points& right) const {
    const int ml = count_twist(left, -1), mr = count_twist(right, -1);
    if (ml >= 2 || mr >= 2) {
      const Points& partner = ml >= 2 ? right : left;
      if (count_twist(partner, -1) == 0 && closed_value(sorted(partner)).is_zero()) return Rational(0);
      throw TwoMinusOneInsertions("TRR summand pairs " + points_str(left) + " with " + points_str(right));
    }
    const Rational a = value(left);
    if (a.is_zero()) return a;
    return a * value(right);
  }

  size_t memo_size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return memo_.size();
  }

 private:
  Rational compute(const Points& p) const {
    if (!extended_gate(r_, p)) return Rational(0);
    if (auto choice = canonical_choice(p)) {
      auto [i, j, k] = *choice;
      return general_trr(p, i, j, k);
    }
    for (const auto& q : p)
      if (q.desc > 0) throw InternalInconsistency("no TRR choice for " + points_str(p));
    return primary(p);
  }

  /// All insertions primary: X_alpha for at most one non-Ramond point of
  /// nonnegative twist, the primary recursion otherwise.
  Rational primary(const Points& p) const {
    std::vector<int> ns;  // non-Ramond twists
    int k = 0;
    for (const auto& q : p) {
      if (q.twist == -1) continue;
      if (q.twist == r_ - 1)
        ++k;
      else
        ns.push_back(q.twist);
    }
    if (ns.empty()) return k == r_ + 1 ? x_alpha(r_, r_ - 1) : Rational(0);
    if (ns.size() == 1) return k == ns[0] + 1 ? x_alpha(r_, ns[0]) : Rational(0);
    const int l = static_cast<int>(ns.size());
    auto m_of = [&](unsigned mask) {
      int m = r_ + 1;
      for (int b = 0; b < l; ++b)
        if (mask >> b & 1) m -= r_ - ns[b];
      return m;
    };
    auto A = [&](unsigned mask) {
      const int m = m_of(mask);
      if (m < 0) return Rational(0);
      Points q{{-1, 0}};
      for (int b = 0; b < l; ++b)
        if (mask >> b & 1) q.push_back({ns[b], 0});
      for (int c = 0; c < m; ++c) q.push_back({r_ - 1, 0});
      return value(q);
    };
    const unsigned full = (1u << l) - 1, first = 1u, last = 1u << (l - 1);
    if (m_of(full) != k) return Rational(0);
    Rational rhs(0);
    for (unsigned I = 1; I < full; ++I) {
      const unsigned J = full & ~I;
      if ((I & first) && (J & last)) rhs += choose(r_ + k - 1, m_of(I) - 1) * A(I) * A(J);
      if ((I & first) && (I & last)) rhs -= choose(r_ + k - 1, m_of(I)) * A(I) * A(J);
    }
    Rational lead = factorial(r_ + k - 1) / (factorial(k) * pow(Rational(r_), r_ - 1));
    if ((r_ - 1) % 2) lead = -lead;
    return rhs / lead;
  }

  int r_;
  std::shared_ptr<const ClosedSource> closed_;
  mutable std::mutex mu_;
  mutable std::map<Points, Rational> memo_;
};

// ---------------------------------------------------------------------------
// Hierarchy pipeline
// ---------------------------------------------------------------------------

/// Caps of a run: number of insertions (besides tau^{-1}) and total
/// descendant depth.
struct Caps {
  int max_n = 6;
  int max_d = 2;
};

/// Number of flows T_1..T_N that reach every insertion within the caps.
inline int flows_for(int r, int max_d) { return r * (max_d + 1); }

/// All jets and potentials of the hierarchy side, built on first use.
class Hierarchy {
 public:
  Hierarchy(int r, Caps caps, JetOptions opt = {})
      : r_(r), caps_(caps), N_(flows_for(r, caps.max_d)), opt_(opt), cov_(ChangeOfVars::standard(r, N_)) {
    if (r < 2) throw BadIndex("r must be at least 2");
    if (caps.max_n < 1 || caps.max_d < 0) throw BadIndex("caps must be positive");
    if (caps.max_n > kMaxExponent) throw CapExceeded("at most 15 insertions");
  }

  int r() const { return r_; }
  int N() const { return N_; }
  const Caps& caps() const { return caps_; }
  const ChangeOfVars& cov() const { return cov_; }
  const JetOptions& options() const { return opt_; }

  const LaxJet& lax() const {
    if (!L_) L_ = build_L0(r_, std::max(1, std::max(caps_.max_n - 1, closed_cap() - 2)), N_, opt_);
    return *L_;
  }
  const PhiJet& phi() const {
    if (!phi_) phi_ = build_phi0(lax(), caps_.max_n, opt_);
    return *phi_;
  }
  const VCoords& vcoords() const {
    if (!V_) V_ = v_coords(r_, symbolic_cap(N_ + r_));
    return *V_;
  }
  const TwoPointTable& two_point() const {
    if (!G_) G_ = std::make_unique<TwoPointTable>(lax(), vcoords(), N_);
    return *G_;
  }
  /// Closed potential in T-variables.
  const RSeries& closed_T() const {
    if (!FcT_) FcT_ = assemble_F0_closed(two_point(), N_, closed_cap(), lax().space);
    return *FcT_;
  }
  const RSeries& closed_t() const {
    if (!Fc_) Fc_ = closed_in_t(closed_T(), cov_);
    return *Fc_;
  }
  const RSeries& extended_t() const {
    if (!Fe_) Fe_ = extended_from_phi0(phi(), cov_);
    return *Fe_;
  }
  const RSeries& open_t() const {
    if (!Fo_) Fo_ = open_potential(extended_t(), r_);
    return *Fo_;
  }
  std::shared_ptr<const ClosedSource> closed_source() const {
    if (!src_) src_ = std::make_shared<const ClosedSource>(r_, closed_t());
    return src_;
  }

  /// Degree of the closed potential: TRR factors never exceed max_n points.
  int closed_cap() const { return std::max(3, caps_.max_n); }

  /// Whether a key lies within the caps of this pipeline.
  bool in_cap(const CorrelatorKey& key) const {
    int n = static_cast<int>(key.insertions.size()) + (key.sector == Sector::open ? key.boundary : 0);
    if (key.sector == Sector::extended && key.minus_desc != 0) return false;
    if (n > (key.sector == Sector::closed ? closed_cap() : caps_.max_n)) return false;
    for (const auto& p : key.insertions)
      if (p.twist + 1 + r_ * p.desc > N_) return false;
    return true;
  }
  void require_in_cap(const CorrelatorKey& key) const {
    if (in_cap(key)) return;
    int n = static_cast<int>(key.insertions.size()) + (key.sector == Sector::open ? key.boundary : 0);
    int d = 0;
    for (const auto& p : key.insertions) d = std::max(d, p.desc);
    throw CapExceeded(key.str() + " needs caps max_n >= " + std::to_string(n) + " and max_d >= " + std::to_string(d));
  }

  /// Hierarchy-side value of a key.
  Rational value(const CorrelatorKey& key) const {
    require_in_cap(key);
    switch (key.sector) {
      case Sector::closed: {
        for (const auto& p : key.insertions)
          if (p.twist == r_ - 1) return Rational(0);
        return extract_correlator(closed_t(), key);
      }
      case Sector::extended:
        return extract_correlator(extended_t(), key);
      case Sector::open:
        return extract_correlator(open_t(), key);
    }
    return Rational(0);
  }

 private:
  int r_;
  Caps caps_;
  int N_;
  JetOptions opt_;
  ChangeOfVars cov_;
  mutable std::optional<LaxJet> L_;
  mutable std::optional<PhiJet> phi_;
  mutable std::optional<VCoords> V_;
  mutable std::unique_ptr<TwoPointTable> G_;
  mutable std::optional<RSeries> FcT_, Fc_, Fe_, Fo_;
  mutable std::shared_ptr<const ClosedSource> src_;
};

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

enum class Provenance { recursion, hierarchy, both_agree };

inline std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::recursion:
      return "recursion";
    case Provenance::hierarchy:
      return "hierarchy";
    case Provenance::both_agree:
      return "both-agree";
  }
  return "?";
}

/// Values by key with the pipeline(s) that produced them.  Writing a second
/// pipeline's value that differs from the first poisons the table.
class CorrelatorTable {
 public:
  struct Entry {
    Scalar value;
    Provenance provenance;
  };

  void record(const CorrelatorKey& key, const Scalar& v, Provenance from) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      entries_.emplace(key, Entry{v, from});
      return;
    }
    if (!(it->second.value == v)) {
      poisoned_ = true;
      conflicts_.push_back(key);
      return;
    }
    if (it->second.provenance != from) it->second.provenance = Provenance::both_agree;
  }
  std::optional<Entry> find(const CorrelatorKey& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  bool poisoned() const { return poisoned_; }
  const std::vector<CorrelatorKey>& conflicts() const { return conflicts_; }
  const std::map<CorrelatorKey, Entry>& entries() const { return entries_; }

 private:
  mutable std::mutex mu_;
  std::map<CorrelatorKey, Entry> entries_;
  std::vector<CorrelatorKey> conflicts_;
  bool poisoned_ = false;
};

/// Every multiset of insertions with twists in [0, max_twist], at most max_n
/// points and total descendant at most max_d, in a deterministic order.
inline std::vector<Points> enumerate_insertions(int r, int max_twist, int min_n, int max_n, int max_d) {
  std::vector<Point> kinds;
  for (int d = 0; d <= max_d; ++d)
    for (int a = 0; a <= max_twist; ++a) kinds.push_back({a, d});
  (void)r;
  std::vector<Points> out;
  Points cur;
  std::function<void(size_t, int)> rec = [&](size_t from, int dleft) {
    if (static_cast<int>(cur.size()) >= min_n) out.push_back(cur);
    if (static_cast<int>(cur.size()) == max_n) return;
    for (size_t k = from; k < kinds.size(); ++k) {
      if (kinds[k].desc > dleft) continue;
      cur.push_back(kinds[k]);
      rec(k, dleft - kinds[k].desc);
      cur.pop_back();
    }
  };
  rec(0, max_d);
  for (auto& p : out) p = sorted(p);
  std::sort(out.begin(), out.end(), [](const Points& a, const Points& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

}  // namespace rspin
