// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.

#include <chrono>
#include <functional>
#include <iostream>
#include <string>

#include "rspin/verify.hpp"

using namespace rspin;

namespace {

/// Returns an empty string on success, otherwise the first failure.
using Criterion = std::function<std::string()>;

std::string expect_eq(const std::string& what, const Rational& got, const Rational& want) {
  return got == want ? "" : what + " = " + got.str() + ", expected " + want.str();
}

Points primaries(std::initializer_list<int> twists) {
  Points p;
  for (int a : twists) p.push_back({a, 0});
  return p;
}

std::string base_correlators() {
  for (int r = 2; r <= 5; ++r) {
    Hierarchy H(r, Caps{r == 5 ? r + 1 : 4, 0});
    ExtendedEngine E(r, H.closed_source());
    const auto k1 = CorrelatorKey::extended(r, primaries({1, r - 2}));
    const auto k2 = CorrelatorKey::extended(r, primaries({1, r - 1, r - 1}));
    for (const auto& [key, want] : {std::pair{k1, Rational(1)}, std::pair{k2, Rational(-1, r)}}) {
      if (auto e = expect_eq("recursion " + key.str(), E.value(key), want); !e.empty()) return e;
      if (auto e = expect_eq("hierarchy " + key.str(), H.value(key), want); !e.empty()) return e;
    }
  }
  return "";
}

std::string x_series() {
  for (int r = 2; r <= 5; ++r) {
    Hierarchy H(r, Caps{r + 1, 0});
    ExtendedEngine E(r, H.closed_source());
    for (int alpha = 0; alpha <= r - 1; ++alpha) {
      Points p{{alpha, 0}};
      for (int c = 0; c <= alpha; ++c) p.push_back({r - 1, 0});
      const auto key = CorrelatorKey::extended(r, p);
      const Rational want = factorial(alpha) / pow(Rational(r), alpha) * Rational(alpha % 2 ? -1 : 1);
      if (auto e = expect_eq("recursion " + key.str(), E.value(key), want); !e.empty()) return e;
      if (auto e = expect_eq("hierarchy " + key.str(), H.value(key), want); !e.empty()) return e;
    }
  }
  return "";
}

std::string theorem() {
  for (int r = 2; r <= 4; ++r) {
    Verifier V(VerifyConfig{r, Caps{6, 2}});
    const CrosscheckReport rep = V.crosscheck();
    if (rep.rows.empty()) return "r=" + std::to_string(r) + ": no keys compared";
    for (const auto& row : rep.rows)
      if (!row.equal()) return "r=" + std::to_string(r) + " " + row.key.str() + ": recursion " + row.recursion.str() + ", hierarchy " + row.hierarchy.str();
    std::cout << "  r=" << r << ": " << rep.rows.size() << " keys, 0 mismatches\n";
  }
  return "";
}

std::string phi0_values() {
  for (int r = 2; r <= 5; ++r) {
    const LaxJet L = build_L0(r, 3, r);
    const PhiJet phi = build_phi0(L, 4);
    const RSeries& f = phi.phi0;
    const std::string tag = "r=" + std::to_string(r) + " ";
    if (auto e = expect_eq(tag + "d2 phi0/dT1 dTr", f.derivative(0).derivative(r - 1).coefficient(Monomial()), Rational(r)); !e.empty()) return e;
    if (auto e = expect_eq(tag + "d2 phi0/dT2 dT(r-1)", f.derivative(1).derivative(r - 2).coefficient(Monomial()), Rational(2 * (r - 1))); !e.empty())
      return e;
    if (auto e = expect_eq(tag + "d3 phi0/dT2 dTr^2", f.derivative(1).derivative(r - 1).derivative(r - 1).coefficient(Monomial()), Rational(2 * r * r));
        !e.empty())
      return e;
  }
  return "";
}

std::string closed_sector() {
  if (auto e = expect_eq("r=2 <tau^0 tau^0 tau^0>", Hierarchy(2, Caps{3, 0}).value(CorrelatorKey::closed(2, primaries({0, 0, 0}))), Rational(1));
      !e.empty())
    return e;
  for (int r = 3; r <= 5; ++r) {
    Hierarchy H(r, Caps{4, 0});
    for (int g = 0; g <= r - 3; ++g) {
      const auto key = CorrelatorKey::closed(r, primaries({1, g, r - 3 - g}));
      if (auto e = expect_eq(key.str(), H.value(key), Rational(1)); !e.empty()) return e;
    }
  }
  // Ramond vanishing is read off the closed potential itself, not the lookup.
  for (int r = 2; r <= 4; ++r) {
    Hierarchy H(r, Caps{6, 2});
    for (const auto& p : enumerate_insertions(r, r - 1, 3, H.closed_cap(), 2)) {
      const auto key = CorrelatorKey::closed(r, p);
      if (count_twist(p, r - 1) == 0 || !H.in_cap(key)) continue;
      if (auto e = expect_eq("closed potential at " + key.str(), extract_correlator(H.closed_t(), key), Rational(0)); !e.empty()) return e;
    }
  }
  return "";
}

std::string suites(const std::vector<std::string>& names) {
  for (int r = 2; r <= 4; ++r) {
    Verifier V(VerifyConfig{r, Caps{6, 2}});
    for (const auto& name : names) {
      const SuiteResult res = V.run(name);
      if (!res.passed()) return "r=" + std::to_string(r) + " " + name + ": " + *res.counterexample;
      std::cout << "  r=" << r << " " << name << ": " << res.checks << " checks\n";
    }
  }
  return "";
}

std::string lax_proposition() {
  for (int r = 2; r <= 3; ++r)
    if (auto e = check_lax_proposition(r, 5); !e.empty()) return e;
  return "";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Criterion>> criteria = {
      {"base correlators agree in both pipelines (r = 2..5)", base_correlators},
      {"X-series and anchor in both pipelines (r = 2..5)", x_series},
      {"recursion and hierarchy agree on every extended key (r = 2..4, n <= 6, d <= 2)", theorem},
      {"phi0 second and third derivatives at the origin (r = 2..5)", phi0_values},
      {"closed sector values and Ramond vanishing", closed_sector},
      {"property suites (flows, strings, homogeneity, roots, dispersive, TRRs)",
       [] { return suites({"strings", "trr", "flows", "homogeneity", "ramond", "dispersive"}); }},
      {"open sector dictionary, vanishing at m = 0 and open TRRs", [] { return suites({"open"}); }},
      {"Lax proposition to primary degree 5 (r = 2, 3)", lax_proposition},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    std::string err;
    try {
      err = criteria[i].second();
    } catch (const std::exception& e) {
      err = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (err.empty() ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " (" << secs << " s)";
    if (!err.empty()) std::cout << " -- " << err;
    std::cout << std::endl;
    failed += !err.empty();
  }
  return failed == 0 ? 0 : 1;
}
