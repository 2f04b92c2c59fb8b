#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rspin/errors.hpp"
#include "rspin/pdo.hpp"
#include "rspin/series.hpp"
#include "rspin/zsymbol.hpp"

namespace rspin {

/// Switches for jet construction.  Neither affects the result.
struct JetOptions {
  /// Restrict intermediate products to the part the current stage needs.
  bool prune = true;
  /// Re-check every flow equation on the finished jet.
  bool certify = true;
};

namespace detail {

/// Degree in T_2..T_N (variable 0 is x = T_1).
inline int delta_degree(const Monomial& m) { return m.degree() - m.exponent(0); }

inline std::shared_ptr<const WeightCap> delta_cap(int nvars, int max) {
  WeightCap w;
  w.weights.assign(nvars, 1);
  w.weights[0] = 0;
  w.max = max;
  return std::make_shared<const WeightCap>(std::move(w));
}

/// Integration step of the jet construction.  Every monomial M of degree
/// delta-degree e has a largest variable T_a with a >= 2, and its coefficient
/// is read off the flow dT_a: coefficient of M - e_a in rhs[a], divided by the
/// exponent of T_a in M.  rhs[a][i] holds component i of the right side of
/// the T_a-flow (a is 1-based; rhs[a] may be empty when the flow is zero).
template <class C>
void integrate_stage(std::vector<TSeries<C>>& comps, const std::vector<std::vector<TSeries<C>>>& rhs, int e, int cap) {
  for (size_t i = 0; i < comps.size(); ++i) {
    std::vector<typename TSeries<C>::Term> fresh;
    for (size_t a = 2; a < rhs.size(); ++a) {
      if (rhs[a].empty()) continue;
      const int var = static_cast<int>(a) - 1;
      for (const auto& [m, c] : rhs[a][i].terms()) {
        if (delta_degree(m) != e - 1 || m.degree() + 1 > cap) continue;
        bool larger = false;
        for (int v = var + 1; v < comps[i].space().count() && !larger; ++v) larger = m.exponent(v) != 0;
        if (larger) continue;
        const int ea = m.exponent(var) + 1;
        fresh.emplace_back(m * Monomial::unit(var), c * C(Rational(1, ea)));
      }
    }
    comps[i] += TSeries<C>::from_terms(comps[i].space_ptr(), comps[i].cap(), std::move(fresh));
  }
}

template <class C>
TSeries<C> pruned(const TSeries<C>& s, const std::shared_ptr<const WeightCap>& w) {
  return w ? s.with_weight_cap(w) : s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dispersionless Lax operator
// ---------------------------------------------------------------------------

/// Jet of L0 = z^r + sum_{i=0}^{r-2} f_i z^i in T_1..T_N up to total degree cap.
struct LaxJet {
  int r = 0;
  int cap = 0;
  int N = 0;
  SpacePtr space;
  std::vector<RSeries> f;  // f[i] multiplies z^i

  ZSymbol symbol() const { return ZSymbol::monic(r, f, space, cap); }
  std::string str() const { return symbol().str(); }
};

/// Right side of the T_a-flow, {(L^{a/r})_+, L}, for every a in `flows`.
inline std::map<int, ZSymbol> lax_flow_rhs(const ZSymbol& L, int r, const std::vector<int>& flows) {
  std::map<int, ZSymbol> out;
  std::vector<int> ns;
  for (int a : flows)
    if (a % r != 0) ns.push_back(a);
  auto powers = fractional_powers(L, r, ns, 0);
  for (size_t k = 0; k < ns.size(); ++k) out.emplace(ns[k], poisson(powers[k].plus(), L));
  for (int a : flows)
    if (a % r == 0) out.emplace(a, ZSymbol(L.space_ptr(), L.cap()));
  return out;
}

/// First flow index a in 1..N for which dL/dT_a = {(L^{a/r})_+, L} fails
/// below the cap, if any.
inline std::optional<int> first_flow_violation(const LaxJet& jet) {
  const ZSymbol L = jet.symbol();
  std::vector<int> flows;
  for (int a = 1; a <= jet.N; ++a) flows.push_back(a);
  auto rhs = lax_flow_rhs(L, jet.r, flows);
  for (int a = 1; a <= jet.N; ++a) {
    ZSymbol lhs = L.dvar(a - 1).truncated(jet.cap - 1);
    if (!(lhs == rhs.at(a).truncated(jet.cap - 1))) return a;
  }
  return std::nullopt;
}

inline void certify_flows(const LaxJet& jet) {
  if (auto a = first_flow_violation(jet))
    throw InternalInconsistency("Lax jet violates the T" + std::to_string(*a) + "-flow");
}

/// Builds L0 from the seed z^r + r*T_1 on the slice T_{>=2} = 0 by
/// integrating the dispersionless flows dL/dT_a = {(L^{a/r})_+, L}.
/// Stages run over the degree in T_2..T_N, which the flows raise by one.
inline LaxJet build_L0(int r, int cap, int N, const JetOptions& opt = {}) {
  if (r < 2) throw BadIndex("r must be at least 2");
  if (N < r) throw BadIndex("N must be at least r");
  if (cap < 1) throw BadIndex("cap must be positive");
  if (N > kMaxVars) throw CapExceeded("at most 32 flow variables");
  LaxJet jet{r, cap, N, VarSpace::T(N), {}};
  for (int i = 0; i <= r - 2; ++i) jet.f.emplace_back(jet.space, cap);
  jet.f[0] = RSeries::variable(jet.space, cap, 0, Rational(r));

  for (int e = 1; e <= cap; ++e) {
    auto w = opt.prune ? detail::delta_cap(N, e - 1) : nullptr;
    std::vector<RSeries> fw;
    for (const auto& fi : jet.f) fw.push_back(detail::pruned(fi, w));
    const ZSymbol L = ZSymbol::monic(r, fw, jet.space, cap);
    std::vector<int> flows;
    for (int a = 2; a <= N; ++a) flows.push_back(a);
    auto rhs_sym = lax_flow_rhs(L, r, flows);
    std::vector<std::vector<RSeries>> rhs(N + 1);
    for (int a = 2; a <= N; ++a) {
      if (a % r == 0) continue;
      const ZSymbol s = rhs_sym.at(a).truncated(cap - 1);
      for (int i = 0; i <= r - 2; ++i) rhs[a].push_back(s.coeff(i).with_weight_cap(nullptr));
    }
    detail::integrate_stage(jet.f, rhs, e, cap);
  }
  if (opt.certify) certify_flows(jet);
  return jet;
}

// ---------------------------------------------------------------------------
// Genus-zero wave function phi_0
// ---------------------------------------------------------------------------

struct PhiJet {
  int r = 0;
  int cap = 0;
  int N = 0;
  SpacePtr space;
  RSeries phi0;
};

namespace detail {
inline std::vector<ZSymbol> phi_flow_symbols(const LaxJet& L, int N) {
  std::vector<int> ns;
  for (int a = 1; a <= N; ++a) ns.push_back(a);
  auto powers = fractional_powers(L.symbol(), L.r, ns, 0);
  std::vector<ZSymbol> out(1);  // 1-based
  for (auto& p : powers) out.push_back(p.plus());
  return out;
}
}  // namespace detail

/// (string operator) phi0 - r*T_r, which vanishes below the cap exactly when
/// phi0 satisfies the string equation
///   (d/dT_1 - sum_i (i+r) T_{i+r} d/dT_i) phi0 = r T_r.
inline RSeries string_defect(const RSeries& phi, int r) {
  const auto& space = phi.space_ptr();
  const int N = space->count();
  RSeries lhs = phi.derivative(0).truncated(phi.cap() - 1);
  for (int i = 1; i + r <= N; ++i) {
    RSeries t = RSeries::variable(space, phi.cap(), i + r - 1, Rational(i + r));
    lhs -= (t * phi.derivative(i - 1)).truncated(phi.cap() - 1);
  }
  lhs -= RSeries::variable(space, phi.cap() - 1, r - 1, Rational(r));
  return lhs;
}

/// First a in 1..N with d(phi0)/dT_a != (L^{a/r})_+ |_{z = (phi0)_x}, if any.
inline std::optional<int> first_phi_flow_violation(const LaxJet& L, const PhiJet& phi) {
  auto P = detail::phi_flow_symbols(L, phi.N);
  const int cap = phi.cap - 1;
  const RSeries phix = phi.phi0.derivative(0).truncated(cap);
  for (int a = 1; a <= phi.N; ++a) {
    RSeries rhs = P[a].evaluate(phix).truncated(cap);
    if (!(phi.phi0.derivative(a - 1).truncated(cap) == rhs)) return a;
  }
  return std::nullopt;
}

/// phi0 from d(phi0)/dT_n = (L0^{n/r})_+ |_{z=(phi0)_x} with phi0 = 0 on the
/// slice T_{>=2} = 0.  Needs L0 up to degree cap - 1.
inline PhiJet build_phi0(const LaxJet& L, int cap, const JetOptions& opt = {}) {
  if (L.cap < cap - 1) throw CapExceeded("phi0 to degree " + std::to_string(cap) + " needs the Lax jet to degree " + std::to_string(cap - 1));
  const int N = L.N;
  PhiJet phi{L.r, cap, N, L.space, RSeries(L.space, cap)};
  auto P = detail::phi_flow_symbols(L, N);
  for (int e = 1; e <= cap; ++e) {
    auto w = opt.prune ? detail::delta_cap(N, e - 1) : nullptr;
    const RSeries phix = detail::pruned(phi.phi0, w).derivative(0).truncated(cap - 1);
    std::vector<std::vector<RSeries>> rhs(N + 1);
    for (int a = 2; a <= N; ++a) {
      ZSymbol pa = P[a].map([&](const RSeries& c) { return detail::pruned(c.truncated(cap - 1), w); });
      rhs[a].push_back(pa.evaluate(phix).with_weight_cap(nullptr));
    }
    std::vector<RSeries> comps{phi.phi0};
    detail::integrate_stage(comps, rhs, e, cap);
    phi.phi0 = comps[0];
  }
  if (opt.certify) {
    if (!string_defect(phi.phi0, L.r).is_zero()) throw StringCheckFailed("phi0 violates the string equation");
    if (auto a = first_phi_flow_violation(L, phi))
      throw InternalInconsistency("phi0 violates the T" + std::to_string(*a) + "-flow");
  }
  return phi;
}

// ---------------------------------------------------------------------------
// v-coordinates and the closed potential
// ---------------------------------------------------------------------------

/// v_i = res L0^{i/r} (i = 1..r-1) as polynomials in f_0..f_{r-2}, and the
/// inverse polynomial map.
struct VCoords {
  int r = 0;
  int cap = 0;
  SpacePtr fspace, vspace;
  std::vector<RSeries> forward;   // forward[i-1] = v_i(f)
  std::vector<RSeries> backward;  // backward[j]  = f_j(v)

  ZSymbol symbolic_L() const {
    std::vector<RSeries> f;
    for (int j = 0; j <= r - 2; ++j) f.push_back(RSeries::variable(fspace, cap, j));
    return ZSymbol::monic(r, f, fspace, cap);
  }
  /// p(f) rewritten in the v-coordinates.
  RSeries to_v(const RSeries& p) const { return substitute_series(p, backward, vspace, cap); }
};

/// Polynomial cap large enough for res L^{n/r} with n <= nmax: every f_j has
/// z-weight >= 2 and the residue has weight n + 1.
inline int symbolic_cap(int nmax) { return (nmax + 1) / 2 + 1; }

inline VCoords v_coords(int r, int cap) {
  VCoords V{r, cap, VarSpace::f(r), VarSpace::v(r), {}, {}};
  const ZSymbol L = V.symbolic_L();
  std::vector<int> ns;
  for (int i = 1; i <= r - 1; ++i) ns.push_back(i);
  for (auto& p : fractional_powers(L, r, ns, -1)) V.forward.push_back(p.residue());
  // v_i = (i/r) f_{r-1-i} + P_i(f_{r-i}, ..., f_{r-2}): solve for f_{r-1-i}
  // in the order i = 1, ..., r-1.
  V.backward.assign(r - 1, RSeries(V.vspace, cap));
  for (int i = 1; i <= r - 1; ++i) {
    const int j = r - 1 - i;
    RSeries P = V.forward[i - 1] - RSeries::variable(V.fspace, cap, j, Rational(i, r));
    for (const auto& [m, c] : P.terms())
      for (int k = 0; k <= j; ++k)
        if (m.exponent(k)) throw InternalInconsistency("v-coordinates are not triangular");
    RSeries Pv = substitute_series(P, V.backward, V.vspace, cap);
    V.backward[j] = (RSeries::variable(V.vspace, cap, i - 1) - Pv) * Rational(r, i);
  }
  return V;
}

/// v_i(T) = res L0^{i/r} on the jet, i = 1..r-1.
inline std::vector<RSeries> v_on_jet(const LaxJet& L) {
  std::vector<int> ns;
  for (int i = 1; i <= L.r - 1; ++i) ns.push_back(i);
  std::vector<RSeries> out;
  for (auto& p : fractional_powers(L.symbol(), L.r, ns, -1)) out.push_back(p.residue());
  return out;
}

/// d^2 F_c / dT_a dT_b for a = 1..amax and b = 1..r-1 from
///   (b(r-b)/(a+r)) d/dv_{r-b} res L0^{(a+r)/r}.
class TwoPointTable {
 public:
  TwoPointTable(const LaxJet& L, const VCoords& V, int amax) : r_(L.r), amax_(amax) {
    if (V.r != L.r) throw BadIndex("v-coordinates for a different r");
    if (V.cap < symbolic_cap(amax + L.r)) throw CapExceeded("v-coordinate cap too small for flows up to " + std::to_string(amax));
    const ZSymbol Ls = V.symbolic_L();
    std::vector<int> ns;
    for (int a = 1; a <= amax; ++a) ns.push_back(a + r_);
    auto powers = fractional_powers(Ls, r_, ns, -1);
    const auto vT = v_on_jet(L);
    for (int a = 1; a <= amax; ++a) {
      const RSeries res_v = V.to_v(powers[a - 1].residue());
      for (int b = 1; b <= r_ - 1; ++b) {
        RSeries g = res_v.derivative(r_ - b - 1) * Rational(b * (r_ - b), a + r_);
        table_[{a, b}] = substitute_series(g, vT, L.space, L.cap);
      }
    }
  }
  const RSeries& get(int a, int b) const {
    if (b < 1 || b > r_ - 1) throw BadIndex("second index must lie in 1..r-1, got " + std::to_string(b));
    if (a < 1 || a > amax_) throw BadIndex("first index must lie in 1.." + std::to_string(amax_) + ", got " + std::to_string(a));
    return table_.at({a, b});
  }
  int r() const { return r_; }
  int amax() const { return amax_; }

 private:
  int r_, amax_;
  std::map<std::pair<int, int>, RSeries> table_;
};

inline RSeries two_point_closed(int a, int b, const LaxJet& L, const VCoords& V) {
  if (a < 1) throw BadIndex("flow index must be positive");
  if (b < 1 || b > L.r - 1) throw BadIndex("second index must lie in 1..r-1");
  return TwoPointTable(L, V, a).get(a, b);
}

/// The closed genus-zero potential in T_1..T_N up to degree `cap`: every
/// monomial contains some T_b with b <= r-1, and its coefficient is read off
/// d^2F/dT_a dT_b for the smallest such b and the smallest other index a.  A
/// second pair is used as a certificate whenever the monomial offers one.
inline RSeries assemble_F0_closed(const TwoPointTable& G, int N, int cap, SpacePtr space) {
  const int r = G.r();
  if (G.amax() < N) throw BadIndex("two-point table does not cover all flows");
  RSeries any = G.get(1, 1);
  if (any.cap() < cap - 2) throw CapExceeded("closed potential to degree " + std::to_string(cap) + " needs the Lax jet to degree " + std::to_string(cap - 2));
  std::vector<Monomial> candidates;
  for (int a = 1; a <= N; ++a)
    for (int b = 1; b <= r - 1 && b <= N; ++b)
      for (const auto& [m, c] : G.get(a, b).terms()) {
        if (m.degree() + 2 > cap) continue;
        candidates.push_back(m * Monomial::unit(a - 1) * Monomial::unit(b - 1));
      }
  std::sort(candidates.begin(), candidates.end(), [](const Monomial& x, const Monomial& y) { return graded_less(x, y); });
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  auto read = [&](const Monomial& M, int a, int b) {
    const Monomial rest = M / Monomial::unit(a - 1) / Monomial::unit(b - 1);
    const int ma = M.exponent(a - 1), mb = M.exponent(b - 1);
    const Rational mult = a == b ? Rational(mb * (mb - 1)) : Rational(ma * mb);
    return G.get(a, b).coefficient(rest) / mult;
  };
  std::vector<RSeries::Term> terms;
  for (const Monomial& M : candidates) {
    std::vector<int> idx;  // 1-based indices present, with repetition
    for (int v = 0; v < N; ++v)
      for (int k = 0; k < M.exponent(v); ++k) idx.push_back(v + 1);
    std::vector<int> bs;
    for (int v = 1; v <= std::min(N, r - 1); ++v)
      if (M.exponent(v - 1)) bs.push_back(v);
    if (bs.empty()) continue;
    const int b = bs.front();
    auto smallest_other = [&](int bb) {
      bool skipped = false;
      for (int v : idx) {
        if (v == bb && !skipped) {
          skipped = true;
          continue;
        }
        return v;
      }
      return -1;
    };
    auto largest_other = [&](int bb) {
      bool skipped = false;
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        if (*it == bb && !skipped) {
          skipped = true;
          continue;
        }
        return *it;
      }
      return -1;
    };
    const int a = smallest_other(b);
    const Rational c = read(M, a, b);
    // Certificate from an alternative pair.
    int a2 = largest_other(b), b2 = b;
    if (a2 == a && bs.size() > 1) {
      b2 = bs[1];
      a2 = smallest_other(b2);
    }
    if (a2 != a || b2 != b) {
      const Rational c2 = read(M, a2, b2);
      if (c2 != c)
        throw Inconsistent("closed potential coefficient of " + any.monomial_str(M) + " differs between (" + std::to_string(a) + "," +
                           std::to_string(b) + ") and (" + std::to_string(a2) + "," + std::to_string(b2) + ")");
    }
    if (!c.is_zero()) terms.emplace_back(M, c);
  }
  return RSeries::from_terms(std::move(space), cap, std::move(terms));
}

// ---------------------------------------------------------------------------
// Dispersive Lax operator and wave function
// ---------------------------------------------------------------------------
//
// The dispersive objects are stored in the eps-scaled normalization
//   eps^r L = D^r + sum_i ft_i D^i,  D = eps d/dx,  ft_i = eps^{r-i} f_i,
// in which every coefficient is a power series in eps with layers
// ft_i = sum_g eps^g f_i^{[g]}, and the flows read
//   d(eps^r L)/dT_n = eps^{-1} [((eps^r L)^{n/r})_+, eps^r L].
// Series are truncated by combined degree (T-degree + eps-exponent), which
// every operation respects because D has combined degree zero.

struct DispersiveLaxJet {
  int r = 0;
  int cap = 0;
  int N = 0;
  SpacePtr space;
  std::vector<ESeries> ft;  // ft[i] multiplies D^i

  PDOp op() const {
    PDOp p = PDOp::d_power(space, cap, 1, r);
    for (int i = 0; i <= r - 2; ++i) p.set(i, ft[i]);
    return p;
  }
  /// Genus layer f_i^{[g]}.
  RSeries layer(int i, int g) const { return eps_layer(ft.at(i), g); }

  /// L itself in terms of d/dx: coefficients f_i = eps^{i-r} ft_i.
  PDOp plain() const {
    PDOp p = PDOp::d_power(space, cap, 0, r);
    for (int i = 0; i <= r - 2; ++i) p.set(i, eps_shift(ft[i], i - r));
    return p;
  }
  std::string str() const { return plain().str(); }
};

namespace detail {
/// Q^a for a = 1..N where Q = (eps^r L)^{1/r}, each valid down to D^0.
inline std::vector<PDOp> dispersive_powers(const PDOp& L, int r, int N) {
  const PDOp Q = rth_root(L, r, 1 - N);
  std::vector<PDOp> out(1);
  out.push_back(Q);
  for (int a = 2; a <= N; ++a) out.push_back(compose(out.back(), Q, a - N));
  return out;
}

/// eps^{-1} [P, L], checking that the eps^0 part of the commutator vanishes.
inline PDOp scaled_commutator(const PDOp& P, const PDOp& L) {
  return commutator(P, L).map([](const ESeries& c) { return eps_restrict(eps_shift(c, -1), 0, EpsScalar::kPosInf); });
}
}  // namespace detail

inline std::optional<int> first_flow_violation(const DispersiveLaxJet& jet) {
  const PDOp L = jet.op();
  auto Qa = detail::dispersive_powers(L, jet.r, jet.N);
  for (int a = 1; a <= jet.N; ++a) {
    PDOp rhs = detail::scaled_commutator(Qa[a].plus(), L);
    for (int i = 0; i <= jet.r; ++i) {
      ESeries lhs = i == jet.r ? ESeries(jet.space, jet.cap) : L.coeff(i).derivative(a - 1).truncated(jet.cap - 1);
      if (!(lhs == rhs.coeff(i).truncated(jet.cap - 1))) return a;
    }
    for (const auto& [k, c] : rhs.coeffs())
      if ((k < 0 || k > jet.r) && !c.truncated(jet.cap - 1).is_zero()) return a;
  }
  return std::nullopt;
}

/// Dispersive jet from the seed D^r + r*T_1 (i.e. L = d^r + eps^{-r} r x).
/// EpsWindowViolation signals a coefficient that would need eps^{<i-r} in f_i.
inline DispersiveLaxJet build_L_dispersive(int r, int cap, int N, const JetOptions& opt = {}) {
  if (r < 2) throw BadIndex("r must be at least 2");
  if (N < r) throw BadIndex("N must be at least r");
  DispersiveLaxJet jet{r, cap, N, VarSpace::T(N), {}};
  for (int i = 0; i <= r - 2; ++i) jet.ft.emplace_back(jet.space, cap);
  jet.ft[0] = ESeries::variable(jet.space, cap, 0, EpsScalar(r));
  for (int e = 1; e <= cap; ++e) {
    auto w = opt.prune ? detail::delta_cap(N, e - 1) : nullptr;
    DispersiveLaxJet cur = jet;
    for (auto& c : cur.ft) c = detail::pruned(c, w);
    const PDOp L = cur.op();
    auto Qa = detail::dispersive_powers(L, r, N);
    std::vector<std::vector<ESeries>> rhs(N + 1);
    for (int a = 2; a <= N; ++a) {
      if (a % r == 0) continue;
      PDOp s = detail::scaled_commutator(Qa[a].plus(), L);
      for (int i = 0; i <= r - 2; ++i) rhs[a].push_back(s.coeff(i).truncated(cap - 1).with_weight_cap(nullptr));
    }
    detail::integrate_stage(jet.ft, rhs, e, cap);
  }
  for (const auto& c : jet.ft)
    for (const auto& [m, x] : c.terms())
      if (x.min_exponent() < 0) throw EpsWindowViolation("Lax coefficient below its eps floor");
  if (opt.certify)
    if (auto a = first_flow_violation(jet)) throw InternalInconsistency("dispersive Lax jet violates the T" + std::to_string(*a) + "-flow");
  return jet;
}

/// Faa di Bruno: D^i e^{psi/eps} / e^{psi/eps} for i = 0..imax, with
/// D = eps d/dx and theta_j = eps^{j-1} d^j psi/dx^j:
///   B_i = i! sum_{sum j m_j = i} prod_j theta_j^{m_j} / ((j!)^{m_j} m_j!).
inline std::vector<ESeries> exp_derivatives(const ESeries& psi, int imax, int cap) {
  const auto& space = psi.space_ptr();
  std::vector<ESeries> theta(imax + 1, ESeries(space, cap));
  ESeries d = psi;
  for (int j = 1; j <= imax; ++j) {
    d = d.derivative(0);
    theta[j] = eps_shift(d, j - 1).truncated(cap);
  }
  // Powers theta_j^m for j*m <= imax.
  std::vector<std::vector<ESeries>> pw(imax + 1);
  for (int j = 1; j <= imax; ++j) {
    pw[j].push_back(ESeries::constant(space, cap, EpsScalar(1)));
    for (int m = 1; j * m <= imax; ++m) pw[j].push_back(pw[j].back() * theta[j]);
  }
  std::vector<ESeries> B;
  for (int i = 0; i <= imax; ++i) {
    ESeries sum(space, cap);
    // Enumerate multiplicities m_1..m_i with sum j*m_j = i.
    std::vector<int> m(i + 1, 0);
    std::function<void(int, int)> rec = [&](int j, int left) {
      if (left == 0) {
        ESeries term = ESeries::constant(space, cap, EpsScalar(factorial(i)));
        Rational denom(1);
        for (int k = 1; k <= i; ++k) {
          if (!m[k]) continue;
          denom *= pow(factorial(k), m[k]) * factorial(m[k]);
          term = term * pw[k][m[k]];
        }
        sum += term * EpsScalar(denom.inverse());
        return;
      }
      if (j > left) return;
      for (int c = left / j; c >= 0; --c) {
        m[j] = c;
        rec(j + 1, left - c * j);
      }
      m[j] = 0;
    };
    rec(1, i);
    B.push_back(sum);
  }
  return B;
}

/// psi = eps*phi with phi = log Phi; layers psi = sum_g eps^g phi_g.
struct DispersivePhiJet {
  int r = 0;
  int cap = 0;
  int N = 0;
  int g_max = 0;
  SpacePtr space;
  ESeries psi;

  RSeries layer(int g) const { return eps_layer(psi, g); }
};

inline std::optional<int> first_phi_flow_violation(const DispersiveLaxJet& L, const DispersivePhiJet& phi) {
  auto Qa = detail::dispersive_powers(L.op(), L.r, phi.N);
  const int cap = phi.cap - 1;
  auto B = exp_derivatives(phi.psi, phi.N, cap);
  for (int a = 1; a <= phi.N; ++a) {
    ESeries rhs(phi.space, cap);
    const PDOp P = Qa[a].plus();
    for (const auto& [i, c] : P.coeffs()) rhs += c.truncated(cap) * B[i];
    if (!(phi.psi.derivative(a - 1).truncated(cap) == rhs)) return a;
  }
  return std::nullopt;
}

/// Dispersive wave function: d psi/dT_n = sum_i R_i B_i(psi) where
/// ((eps^r L)^{n/r})_+ = sum_i R_i D^i; psi = 0 on the slice.
/// GenusLeak if psi acquires a negative eps-exponent (phi below eps^{-1}).
inline DispersivePhiJet build_phi_dispersive(const DispersiveLaxJet& L, int cap, int g_max, const JetOptions& opt = {}) {
  if (L.cap < cap - 1) throw CapExceeded("wave function to degree " + std::to_string(cap) + " needs the Lax jet to degree " + std::to_string(cap - 1));
  const int N = L.N;
  DispersivePhiJet phi{L.r, cap, N, g_max, L.space, ESeries(L.space, cap)};
  auto Qa = detail::dispersive_powers(L.op(), L.r, N);
  std::vector<PDOp> plus(N + 1);
  for (int a = 1; a <= N; ++a) plus[a] = Qa[a].plus();
  for (int e = 1; e <= cap; ++e) {
    auto w = opt.prune ? detail::delta_cap(N, e - 1) : nullptr;
    auto B = exp_derivatives(detail::pruned(phi.psi, w), N, cap - 1);
    std::vector<std::vector<ESeries>> rhs(N + 1);
    for (int a = 2; a <= N; ++a) {
      ESeries s(phi.space, cap - 1);
      for (const auto& [i, c] : plus[a].coeffs()) s += detail::pruned(c.truncated(cap - 1), w) * B[i];
      rhs[a].push_back(s.with_weight_cap(nullptr));
    }
    std::vector<ESeries> comps{phi.psi};
    detail::integrate_stage(comps, rhs, e, cap);
    phi.psi = comps[0];
  }
  for (const auto& [m, c] : phi.psi.terms())
    if (c.min_exponent() < 0) throw GenusLeak("wave function has a term below eps^-1 at " + phi.psi.monomial_str(m));
  if (opt.certify) {
    // String equation: (d/dT_1 - sum (i+r) T_{i+r} d/dT_i) psi = r T_r.
    ESeries lhs = phi.psi.derivative(0).truncated(cap - 1);
    for (int i = 1; i + L.r <= N; ++i)
      lhs -= (ESeries::variable(phi.space, cap, i + L.r - 1, EpsScalar(i + L.r)) * phi.psi.derivative(i - 1)).truncated(cap - 1);
    lhs -= ESeries::variable(phi.space, cap - 1, L.r - 1, EpsScalar(L.r));
    if (!lhs.is_zero()) throw StringCheckFailed("dispersive wave function violates the string equation");
    if (auto a = first_phi_flow_violation(L, phi))
      throw InternalInconsistency("dispersive wave function violates the T" + std::to_string(*a) + "-flow");
  }
  return phi;
}

// ---------------------------------------------------------------------------
// Homogeneity
// ---------------------------------------------------------------------------

/// Sum of indices k over a monomial in T_1..T_N (with multiplicity).
inline int index_weight(const Monomial& m, int nvars) {
  int s = 0;
  for (int v = 0; v < nvars; ++v) s += (v + 1) * m.exponent(v);
  return s;
}

/// Monomials of phi_g satisfy sum k = (r+1)(n+g-1); returns the first
/// offending monomial text, if any.
inline std::optional<std::string> phi_homogeneity_violation(const RSeries& phi_g, int r, int g) {
  const int n = phi_g.space().count();
  for (const auto& [m, c] : phi_g.terms())
    if (index_weight(m, n) != (r + 1) * (m.degree() + g - 1)) return phi_g.monomial_str(m);
  return std::nullopt;
}
/// Monomials of f_i satisfy sum_k m_k (r+1-k) = r - i.
inline std::optional<std::string> lax_homogeneity_violation(const LaxJet& L) {
  for (int i = 0; i <= L.r - 2; ++i)
    for (const auto& [m, c] : L.f[i].terms())
      if ((L.r + 1) * m.degree() - index_weight(m, L.N) != L.r - i) return "f" + std::to_string(i) + ": " + L.f[i].monomial_str(m);
  return std::nullopt;
}
/// Monomials of the closed potential satisfy sum k = (r+1)(n-2).
inline std::optional<std::string> closed_homogeneity_violation(const RSeries& F, int r) {
  const int n = F.space().count();
  for (const auto& [m, c] : F.terms())
    if (index_weight(m, n) != (r + 1) * (m.degree() - 2)) return F.monomial_str(m);
  return std::nullopt;
}

}  // namespace rspin
