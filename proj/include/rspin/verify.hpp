#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rspin/correlators.hpp"
#include "rspin/hierarchy.hpp"

namespace rspin {

/// Outcome of one property suite: the number of identities checked and the
/// first counterexample, if any.
struct SuiteResult {
  explicit SuiteResult(std::string n) : name(std::move(n)) {}

  std::string name;
  long checks = 0;
  std::optional<std::string> counterexample;
  bool passed() const { return !counterexample.has_value(); }

  /// Records one identity; only the first failure is kept.
  void expect(bool ok, const std::function<std::string()>& describe) {
    ++checks;
    if (!ok && !counterexample) counterexample = describe();
  }
};

struct VerifyConfig {
  int r = 3;
  Caps caps;
  int genus_max = 1;
  /// Test mode: perturb the Lax jet before the flow suite certifies it.
  bool corrupt_jet = false;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"theorem", "strings", "trr", "flows", "homogeneity", "ramond", "open", "lax", "dispersive"};
  return names;
}

/// One row of the theorem cross-check.
struct CrosscheckRow {
  CorrelatorKey key;
  Rational recursion;
  Rational hierarchy;
  bool equal() const { return recursion == hierarchy; }
};

struct CrosscheckReport {
  int r = 0;
  Caps caps;
  std::vector<CrosscheckRow> rows;
  bool lax_ok = false;
  std::string lax_detail;
  long mismatches() const {
    long n = 0;
    for (const auto& row : rows) n += !row.equal();
    return n;
  }
  bool ok() const { return mismatches() == 0 && lax_ok; }
};

// ---------------------------------------------------------------------------
// Lax proposition
// ---------------------------------------------------------------------------

/// Checks dF_ext/dt^{r-1}_0 = (1/(L^{r-2} r)) L0 |_{z = L^{1-2r} t^{r-1}_0}
/// with all descendant times set to zero, up to primary degree `degree`.
/// Returns an empty string on success, otherwise the first differing term.
inline std::string check_lax_proposition(int r, int degree, const JetOptions& opt = {}) {
  const LaxJet L = build_L0(r, degree, r, opt);
  const PhiJet phi = build_phi0(L, degree + 1, opt);
  const ChangeOfVars cov = ChangeOfVars::standard(r, r);
  const RSeries F = extended_from_phi0(phi, cov);
  const SSeries lhs = convert<Scalar>(F.derivative(r - 1).truncated(degree));
  const auto& space = lhs.space_ptr();
  const SSeries z = SSeries::variable(space, degree, r - 1, lambda_pow(r, 1 - 2 * r));
  SSeries rhs = SSeries::constant(space, degree, Scalar::monomial(r, Rational(1), 0));
  for (int i = 0; i < r; ++i) rhs = rhs * z;  // z^r
  SSeries zi = SSeries::constant(space, degree, Scalar::monomial(r, Rational(1), 0));
  for (int i = 0; i <= r - 2; ++i) {
    rhs += to_t_variables(L.f[i], cov).truncated(degree) * zi;
    zi = zi * z;
  }
  rhs = rhs * Scalar::monomial(r, Rational(1, r), -(r - 2));
  const SSeries diff = lhs - rhs;
  if (diff.is_zero()) return "";
  const auto& [m, c] = diff.terms().front();
  return "r=" + std::to_string(r) + ": sides differ at " + diff.monomial_str(m) + " by " + c.str();
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

class Verifier {
 public:
  explicit Verifier(VerifyConfig cfg) : cfg_(cfg), H_(cfg.r, cfg.caps), engine_(cfg.r, H_.closed_source()) {}

  const Hierarchy& hierarchy() const { return H_; }
  const ExtendedEngine& engine() const { return engine_; }
  int r() const { return cfg_.r; }

  SuiteResult run(const std::string& name) {
    if (name == "theorem") return theorem();
    if (name == "strings") return strings();
    if (name == "trr") return trr();
    if (name == "flows") return flows();
    if (name == "homogeneity") return homogeneity();
    if (name == "ramond") return ramond();
    if (name == "open") return open();
    if (name == "lax") return lax();
    if (name == "dispersive") return dispersive();
    throw BadKey("unknown suite '" + name + "'");
  }

  /// Every extended key within the caps, evaluated by both pipelines, plus
  /// the Lax proposition.
  CrosscheckReport crosscheck() {
    CrosscheckReport rep;
    rep.r = cfg_.r;
    rep.caps = cfg_.caps;
    for (const auto& p : extended_keys()) {
      const auto key = CorrelatorKey::extended(cfg_.r, p);
      rep.rows.push_back({key, engine_.value(key), H_.value(key)});
    }
    rep.lax_detail = check_lax_proposition(cfg_.r, 4, H_.options());
    rep.lax_ok = rep.lax_detail.empty();
    return rep;
  }

  std::vector<Points> extended_keys() const {
    return enumerate_insertions(cfg_.r, cfg_.r - 1, 0, cfg_.caps.max_n, cfg_.caps.max_d);
  }

 private:
  int r_() const { return cfg_.r; }

  /// Extended or closed value: hierarchy potentials where they apply, the
  /// recursion engine for descendants on the -1 point.
  Rational lookup(const Points& raw) const {
    const Points p = sorted(raw);
    const int minus = count_twist(p, -1);
    if (minus == 0) return engine_.closed_value(p);
    if (minus >= 2) throw TwoMinusOneInsertions(points_str(p));
    Points ins;
    int md = 0;
    for (const auto& q : p) {
      if (q.twist == -1)
        md = q.desc;
      else
        ins.push_back(q);
    }
    const auto key = CorrelatorKey::extended(r_(), ins, md);
    if (H_.in_cap(key)) return H_.value(key);
    return engine_.value(p);
  }
  Rational lookup_pair(const Points& a, const Points& b) const {
    const Rational x = lookup(a);
    return x.is_zero() ? x : x * lookup(b);
  }
  Rational open_value(const Points& ins, int m) const {
    if (m < 0) return Rational(0);
    if (!open_gate(r_(), ins, m)) return Rational(0);
    return H_.value(CorrelatorKey::open(r_(), ins, m));
  }

  /// Keys with the -1 point carrying a descendant as well.
  std::vector<Points> extended_points_with_minus_desc() const {
    std::vector<Points> out;
    for (int md = 0; md <= cfg_.caps.max_d; ++md)
      for (auto p : enumerate_insertions(r_(), r_() - 1, 0, cfg_.caps.max_n, cfg_.caps.max_d - md)) {
        p.push_back({-1, md});
        out.push_back(sorted(p));
      }
    return out;
  }

  SuiteResult theorem() {
    SuiteResult res{"theorem"};
    auto rep = crosscheck();
    for (const auto& row : rep.rows)
      res.expect(row.equal(), [&] {
        return row.key.str() + ": recursion " + row.recursion.str() + ", hierarchy " + row.hierarchy.str();
      });
    res.expect(rep.lax_ok, [&] { return "Lax proposition: " + rep.lax_detail; });
    return res;
  }

  SuiteResult strings() {
    SuiteResult res{"strings"};
    const int r = r_();
    res.expect(string_defect(H_.phi().phi0, r).is_zero(), [] { return std::string("phi0 violates the string equation"); });
    // Extended: <tau^0_0 prod> = sum over descendants of the lowered correlator.
    for (const auto& p : extended_points_with_minus_desc()) {
      Points lhs_pts = p;
      lhs_pts.push_back({0, 0});
      Rational expected(0);
      if (p.size() == 2) {
        expected = Rational(p[0].desc == 0 && p[1].desc == 0 && p[0].twist + p[1].twist == r - 2 ? 1 : 0);
      } else if (p.size() >= 3) {
        for (size_t i = 0; i < p.size(); ++i) {
          if (p[i].desc == 0) continue;
          Points q = p;
          --q[i].desc;
          expected += engine_.value(q);
        }
      } else {
        continue;
      }
      const Rational got = engine_.value(lhs_pts);
      res.expect(got == expected, [&] { return points_str(sorted(lhs_pts)) + " = " + got.str() + ", string sum " + expected.str(); });
      // The same identity on the hierarchy-side potential where it applies.
      if (count_twist(p, -1) == 1 && std::all_of(p.begin(), p.end(), [](const Point& q) { return q.twist != -1 || q.desc == 0; })) {
        Points ins;
        for (const auto& q : lhs_pts)
          if (q.twist != -1) ins.push_back(q);
        const auto key = CorrelatorKey::extended(r, ins);
        if (H_.in_cap(key)) {
          Rational hier_expected(0);
          if (p.size() == 2) {
            hier_expected = expected;
          } else {
            for (size_t i = 0; i < p.size(); ++i) {
              if (p[i].desc == 0) continue;
              Points q = p;
              --q[i].desc;
              hier_expected += lookup(q);
            }
          }
          const Rational h = H_.value(key);
          res.expect(h == hier_expected, [&] { return "hierarchy " + key.str() + " = " + h.str() + ", string sum " + hier_expected.str(); });
        }
      }
    }
    // Closed: <tau^0_0 prod> = sum of lowered correlators (n >= 3), delta for n = 2.
    for (const auto& p : enumerate_insertions(r, r - 2, 2, H_.closed_cap() - 1, cfg_.caps.max_d)) {
      Points lhs_pts = p;
      lhs_pts.push_back({0, 0});
      Rational expected(0);
      if (p.size() == 2) {
        expected = Rational(p[0].desc == 0 && p[1].desc == 0 && p[0].twist + p[1].twist == r - 2 ? 1 : 0);
      } else {
        for (size_t i = 0; i < p.size(); ++i) {
          if (p[i].desc == 0) continue;
          Points q = p;
          --q[i].desc;
          expected += engine_.closed_value(sorted(q));
        }
      }
      const Rational got = engine_.closed_value(sorted(lhs_pts));
      res.expect(got == expected, [&] { return "closed " + points_str(sorted(lhs_pts)) + " = " + got.str() + ", string sum " + expected.str(); });
    }
    return res;
  }

  SuiteResult trr() {
    SuiteResult res{"trr"};
    const int r = r_();
    for (const auto& p : extended_points_with_minus_desc()) {
      const Rational v = engine_.value(p);
      const size_t n = p.size();
      // Independence of the choice (i, j, k) in the general TRR.
      for (size_t i = 0; i < n; ++i) {
        if (p[i].desc == 0) continue;
        for (size_t j = 0; j < n; ++j)
          for (size_t k = j + 1; k < n; ++k) {
            if (j == i || k == i) continue;
            const Rational w = engine_.general_trr(p, i, j, k);
            res.expect(w == v, [&] {
              return points_str(p) + " TRR at (" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + ") gives " + w.str() +
                     ", value " + v.str();
            });
          }
      }
      specialized_trrs(p, v, res);
    }
    (void)r;
    return res;
  }

  void specialized_trrs(const Points& p, const Rational& value, SuiteResult& res) const {
    const int r = r_();
    const size_t n = p.size();
    size_t one = n;
    std::vector<size_t> K;
    for (size_t l = 0; l < n; ++l) {
      if (p[l].twist == -1) one = l;
      if (p[l].twist == r - 1) K.push_back(l);
    }
    auto in = [](const std::vector<size_t>& v, size_t x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    auto subsets = [&](const std::vector<size_t>& pool, const std::function<void(const Points&, const Points&)>& f,
                       const std::vector<size_t>& forced_J, const std::vector<size_t>& forced_I) {
      std::vector<size_t> free;
      for (size_t x : pool)
        if (!in(forced_J, x) && !in(forced_I, x)) free.push_back(x);
      for (unsigned mask = 0; mask < (1u << free.size()); ++mask) {
        Points I, J;
        for (size_t x : forced_J) J.push_back(p[x]);
        for (size_t x : forced_I) I.push_back(p[x]);
        for (size_t b = 0; b < free.size(); ++b) (mask >> b & 1 ? I : J).push_back(p[free[b]]);
        f(I, J);
      }
    };
    auto describe = [&](const std::string& what, const Rational& rhs) {
      return [&, what, rhs] { return what + " on " + points_str(p) + " gives " + rhs.str() + ", value " + value.str(); };
    };
    // Neveu-Schwarz and Ramond TRRs.
    for (size_t i = 0; i < n; ++i) {
      if (i == one || p[i].desc == 0) continue;
      const bool ramond = in(K, i);
      std::vector<size_t> rest;
      for (size_t l = 0; l < n; ++l)
        if (l != i) rest.push_back(l);
      for (size_t j = 0; j < n; ++j) {
        if (j == i || j == one) continue;
        Rational rhs(0);
        if (!ramond) {
          std::vector<size_t> forced{one, j};
          for (size_t x : K)
            if (!in(forced, x)) forced.push_back(x);
          subsets(
              rest,
              [&](const Points& I, const Points& J) {
                for (int a = 0; a <= r - 2; ++a) {
                  Points left = I, right = J;
                  left.push_back({a, 0});
                  left.push_back({p[i].twist, p[i].desc - 1});
                  right.push_back({r - 2 - a, 0});
                  rhs += lookup_pair(left, right);
                }
              },
              forced, {});
        }
        subsets(
            rest,
            [&](const Points& I, const Points& J) {
              Points left = I, right = J;
              left.push_back({-1, 0});
              left.push_back({p[i].twist, p[i].desc - 1});
              right.push_back({r - 1, 0});
              rhs += lookup_pair(left, right);
            },
            {one, j}, {});
        res.expect(rhs == value, describe(ramond ? "Ramond TRR" : "Neveu-Schwarz TRR", rhs));
      }
    }
    // -1 TRR.
    if (one < n && p[one].desc > 0) {
      std::vector<size_t> others;
      for (size_t l = 0; l < n; ++l)
        if (l != one) others.push_back(l);
      for (size_t a = 0; a < others.size(); ++a)
        for (size_t b = a + 1; b < others.size(); ++b) {
          const size_t j = others[a], k = others[b];
          Rational rhs(0);
          if (!in(K, j) && !in(K, k)) {
            subsets(
                others,
                [&](const Points& I, const Points& J) {
                  for (int al = 0; al <= r - 2; ++al) {
                    Points left = I, right = J;
                    left.push_back({al, 0});
                    left.push_back({-1, p[one].desc - 1});
                    right.push_back({r - 2 - al, 0});
                    rhs += lookup_pair(left, right);
                  }
                },
                {j, k}, K);
          }
          subsets(
              others,
              [&](const Points& I, const Points& J) {
                Points left = I, right = J;
                left.push_back({r - 1, 0});
                left.push_back({-1, p[one].desc - 1});
                right.push_back({-1, 0});
                rhs += lookup_pair(left, right);
              },
              {j, k}, {});
          res.expect(rhs == value, describe("-1 TRR", rhs));
        }
    }
  }

  SuiteResult flows() {
    SuiteResult res{"flows"};
    const int r = r_();
    LaxJet L = H_.lax();
    if (cfg_.corrupt_jet) {
      // Perturb f_0 by T_2*T_4-like term of low degree; some flow must break.
      const int a = std::min(2, L.N) - 1, b = std::min(r + 1, L.N) - 1;
      L.f[0] += RSeries::variable(L.space, L.cap, a) * RSeries::variable(L.space, L.cap, b);
    }
    auto bad = first_flow_violation(L);
    res.expect(!bad, [&] { return "Lax jet violates the T" + std::to_string(*bad) + "-flow (violated flow index " + std::to_string(*bad) + ")"; });
    if (cfg_.corrupt_jet) return res;
    auto badphi = first_phi_flow_violation(L, H_.phi());
    res.expect(!badphi, [&] { return "phi0 violates the T" + std::to_string(*badphi) + "-flow"; });
    // (L^{1/r})^r = L.
    const ZSymbol Ls = L.symbol();
    const ZSymbol Q = fractional_power(Ls, r, 1, 1 - r - 2);
    ZSymbol P = Q;
    for (int k = 2; k <= r; ++k) P = mul(P, Q, -2);
    res.expect(P.floored(-2) == Ls.floored(-2), [] { return std::string("(L^{1/r})^r differs from L"); });
    // res L^{n/r} = d^2F/dT_1 dT_n and two-point symmetry.
    const RSeries& F = H_.closed_T();
    const int top = F.cap() - 2;
    std::vector<int> ns;
    for (int n = 1; n <= L.N; ++n) ns.push_back(n);
    auto powers = fractional_powers(Ls, r, ns, -1);
    for (int n = 1; n <= L.N; ++n) {
      const bool ok = F.derivative(0).derivative(n - 1).truncated(top) == powers[n - 1].residue().truncated(top);
      res.expect(ok, [&] { return "res L^{" + std::to_string(n) + "/r} differs from d^2F/dT1dT" + std::to_string(n); });
    }
    const auto& G = H_.two_point();
    for (int a = 1; a <= L.N; ++a)
      for (int b = 1; b <= r - 1; ++b) {
        const RSeries g = G.get(a, b).truncated(top);
        res.expect(F.derivative(a - 1).derivative(b - 1).truncated(top) == g,
                   [&] { return "d^2F/dT" + std::to_string(a) + "dT" + std::to_string(b) + " differs from the two-point function"; });
        if (a <= r - 1)
          res.expect(g == G.get(b, a).truncated(top), [&] {
            return "two-point function not symmetric at (" + std::to_string(a) + "," + std::to_string(b) + ")";
          });
      }
    return res;
  }

  SuiteResult homogeneity() {
    SuiteResult res{"homogeneity"};
    const int r = r_();
    auto badL = lax_homogeneity_violation(H_.lax());
    res.expect(!badL, [&] { return "Lax coefficient " + *badL; });
    auto badphi = phi_homogeneity_violation(H_.phi().phi0, r, 0);
    res.expect(!badphi, [&] { return "phi0 monomial " + *badphi; });
    auto badF = closed_homogeneity_violation(H_.closed_T(), r);
    res.expect(!badF, [&] { return "closed potential monomial " + *badF; });
    // Dimension constraints on every nonzero coefficient in t-variables.
    const RSeries& Fe = H_.extended_t();
    for (const auto& [m, c] : Fe.terms()) {
      Points p{{-1, 0}};
      for (int v = 0; v < Fe.space().count(); ++v)
        for (int e = 0; e < m.exponent(v); ++e) p.push_back({v % r, v / r});
      res.expect(extended_gate(r, p), [&] { return "extended coefficient of " + Fe.monomial_str(m) + " violates the dimension constraint"; });
    }
    const RSeries& Fc = H_.closed_t();
    for (const auto& [m, c] : Fc.terms()) {
      Points p;
      for (int v = 0; v < Fc.space().count(); ++v)
        for (int e = 0; e < m.exponent(v); ++e) p.push_back({v % r, v / r});
      res.expect(closed_gate(r, p), [&] { return "closed coefficient of " + Fc.monomial_str(m) + " violates the dimension constraint"; });
    }
    return res;
  }

  SuiteResult ramond() {
    SuiteResult res{"ramond"};
    const int r = r_();
    // Closed correlators with a Ramond insertion vanish, read straight off the potential.
    for (const auto& p : enumerate_insertions(r, r - 1, 3, H_.closed_cap(), cfg_.caps.max_d)) {
      if (count_twist(p, r - 1) == 0) continue;
      const auto key = CorrelatorKey::closed(r, p);
      if (!H_.in_cap(key)) continue;
      const Rational v = extract_correlator(H_.closed_t(), key);
      res.expect(v.is_zero(), [&] { return key.str() + " = " + v.str() + " despite a Ramond insertion"; });
    }
    // <tau^1 tau^g tau^{r-3-g}> = 1 for g <= r-3, and <tau^0 tau^0 tau^0> = 1 for r = 2.
    for (int g = 0; g <= r - 3; ++g) {
      const auto key = CorrelatorKey::closed(r, {{1, 0}, {g, 0}, {r - 3 - g, 0}});
      const Rational v = H_.value(key);
      res.expect(v == Rational(1), [&] { return key.str() + " = " + v.str(); });
    }
    if (r == 2) {
      const auto key = CorrelatorKey::closed(2, {{0, 0}, {0, 0}, {0, 0}});
      const Rational v = H_.value(key);
      res.expect(v == Rational(1), [&] { return key.str() + " = " + v.str(); });
    }
    // Closed dimension constraint: nonzero values only on the constraint.
    for (const auto& p : enumerate_insertions(r, r - 2, 3, H_.closed_cap(), cfg_.caps.max_d)) {
      const auto key = CorrelatorKey::closed(r, p);
      if (!H_.in_cap(key) || closed_gate(r, p)) continue;
      const Rational v = extract_correlator(H_.closed_t(), key);
      res.expect(v.is_zero(), [&] { return key.str() + " = " + v.str() + " off the dimension constraint"; });
    }
    return res;
  }

  SuiteResult open() {
    SuiteResult res{"open"};
    const int r = r_();
    const RSeries& Fo = H_.open_t();
    const int s = Fo.space().boundary_index();
    for (const auto& [m, c] : Fo.terms())
      res.expect(m.exponent(s) > 0, [&] { return "open potential has the s-free term " + Fo.monomial_str(m); });
    for (int mb = 0; mb <= cfg_.caps.max_n; ++mb)
      for (const auto& ins : enumerate_insertions(r, r - 1, 0, cfg_.caps.max_n - mb, cfg_.caps.max_d)) {
        if (ins.empty() && mb == 0) continue;
        const auto key = CorrelatorKey::open(r, ins, mb);
        const Rational v = H_.value(key);
        // Dictionary.
        Rational expected(0);
        if (mb >= 1) {
          Points ext = ins;
          for (int c = 0; c < mb; ++c) ext.push_back({r - 1, 0});
          expected = pow(Rational(-r), mb - 1) * lookup([&] {
                       Points q = ext;
                       q.push_back({-1, 0});
                       return q;
                     }());
        }
        res.expect(v == expected, [&] { return key.str() + " = " + v.str() + ", dictionary gives " + expected.str(); });
        res.expect(v.is_zero() || open_gate(r, ins, mb), [&] { return key.str() + " nonzero off the open dimension constraint"; });
        open_trrs(ins, mb, v, res);
      }
    return res;
  }

  void open_trrs(const Points& p, int m, const Rational& value, SuiteResult& res) const {
    const int r = r_();
    const size_t n = p.size();
    for (size_t i = 0; i < n; ++i) {
      if (p[i].desc == 0) continue;
      std::vector<size_t> rest;
      for (size_t l = 0; l < n; ++l)
        if (l != i) rest.push_back(l);
      const Point lowered{p[i].twist, p[i].desc - 1};
      // Sum over I, J with an optional point forced into J.
      auto rhs_for = [&](std::optional<size_t> j, bool second_kind) {
        Rational rhs(0);
        std::vector<size_t> free;
        for (size_t x : rest)
          if (!j || x != *j) free.push_back(x);
        for (unsigned mask = 0; mask < (1u << free.size()); ++mask) {
          Points I, J;
          if (j) J.push_back(p[*j]);
          for (size_t b = 0; b < free.size(); ++b) (mask >> b & 1 ? I : J).push_back(p[free[b]]);
          for (int a = -1; a <= r - 2; ++a) {
            Points left = I;
            left.push_back({a, 0});
            left.push_back(lowered);
            Points right = J;
            right.push_back({r - 2 - a, 0});
            const Rational x = lookup(left);
            if (!x.is_zero()) rhs += x * open_value(right, m);
          }
          Points left = I;
          left.push_back(lowered);
          if (!second_kind) {
            for (int m1 = 0; m1 <= m; ++m1)
              rhs += choose(m, m1) * open_value(left, m1) * open_value(J, m - m1 + 1);
          } else {
            for (int m1 = 0; m1 <= m - 1; ++m1)
              rhs += choose(m - 1, m1) * open_value(left, m1) * open_value(J, m - 1 - m1 + 2);
          }
        }
        return rhs;
      };
      for (size_t j : rest) {
        const Rational rhs = rhs_for(j, false);
        res.expect(rhs == value, [&] { return "first open TRR on " + CorrelatorKey::open(r, p, m).str() + " gives " + rhs.str() + ", value " + value.str(); });
      }
      if (m >= 1) {
        const Rational rhs = rhs_for(std::nullopt, true);
        res.expect(rhs == value, [&] { return "second open TRR on " + CorrelatorKey::open(r, p, m).str() + " gives " + rhs.str() + ", value " + value.str(); });
      }
    }
  }

  SuiteResult lax() {
    SuiteResult res{"lax"};
    const std::string detail = check_lax_proposition(r_(), 4, H_.options());
    res.expect(detail.empty(), [&] { return detail; });
    return res;
  }

  SuiteResult dispersive() {
    SuiteResult res{"dispersive"};
    const int r = r_();
    const int N = std::min(H_.N(), 2 * r);
    const int cap = std::min(5, cfg_.caps.max_n);
    const DispersiveLaxJet D = build_L_dispersive(r, cap - 1, N, H_.options());
    const LaxJet L0 = build_L0(r, cap - 1, N, H_.options());
    auto bad = first_flow_violation(D);
    res.expect(!bad, [&] { return "dispersive Lax jet violates the T" + std::to_string(*bad) + "-flow"; });
    for (int i = 0; i <= r - 2; ++i) {
      res.expect(D.layer(i, 0) == L0.f[i], [&] { return "leading layer of f" + std::to_string(i) + " differs from the dispersionless jet"; });
      for (const auto& [m, c] : D.ft[i].terms()) {
        res.expect(c.min_exponent() >= 0, [&] { return "f" + std::to_string(i) + " has a term below eps^" + std::to_string(i - r); });
        for (const auto& [g, q] : c.terms()) {
          const int w = (r + 1) * m.degree() - index_weight(m, N);
          res.expect(w == r - i - (r + 1) * g, [&] { return "f" + std::to_string(i) + " layer " + std::to_string(g) + " monomial " + D.ft[i].monomial_str(m) + " off weight"; });
        }
      }
    }
    const DispersivePhiJet psi = build_phi_dispersive(D, cap, cfg_.genus_max, H_.options());
    const PhiJet phi = build_phi0(L0, cap, H_.options());
    res.expect(psi.layer(0) == phi.phi0, [] { return std::string("genus-zero layer of the wave function differs from phi0"); });
    for (int g = 0; g <= cfg_.genus_max; ++g) {
      auto badg = phi_homogeneity_violation(psi.layer(g), r, g);
      res.expect(!badg, [&] { return "phi_" + std::to_string(g) + " monomial " + *badg; });
    }
    return res;
  }

  VerifyConfig cfg_;
  Hierarchy H_;
  ExtendedEngine engine_;
};

}  // namespace rspin
