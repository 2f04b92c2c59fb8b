#include <gtest/gtest.h>

#include "rspin/hierarchy.hpp"

using namespace rspin;

namespace {

Monomial mono(std::initializer_list<std::pair<int, int>> powers) {
  Monomial m;
  for (auto [k, e] : powers) m = m * Monomial::unit(k - 1, e);
  return m;
}

}  // namespace

TEST(LaxJet, SeedAndFirstFlowsForKdV) {
  // r = 2: u = f0 obeys u_{T3} = (3/2) u u_x, so u contains 2*T1 + 6*T1*T3.
  LaxJet L = build_L0(2, 4, 4);
  EXPECT_EQ(L.f[0].coefficient(mono({{1, 1}})), Rational(2));
  EXPECT_EQ(L.f[0].coefficient(mono({{1, 1}, {3, 1}})), Rational(6));
  EXPECT_EQ(L.f[0].coefficient(mono({{2, 1}})), Rational(0));
}

TEST(LaxJet, LinearTermsAtOrigin) {
  // At T = 0, d f_{r-2}/dT_{r-1} = r(r-1) and f_0 has r*T_1.
  for (int r = 2; r <= 5; ++r) {
    LaxJet L = build_L0(r, 3, r + 1);
    EXPECT_EQ(L.f[0].coefficient(mono({{1, 1}})), Rational(r)) << r;
    EXPECT_EQ(L.f[r - 2].coefficient(mono({{r - 1, 1}})), Rational(r) * Rational(r - 1)) << r;
  }
}

TEST(LaxJet, FlowsHoldAndIndependentOfRamondTimes) {
  for (int r = 2; r <= 4; ++r) {
    LaxJet L = build_L0(r, 4, 2 * r + 1);
    EXPECT_FALSE(first_flow_violation(L).has_value());
    for (const auto& fi : L.f)
      for (const auto& [m, c] : fi.terms()) EXPECT_EQ(m.exponent(r - 1), 0) << "f depends on T_r";
    EXPECT_FALSE(lax_homogeneity_violation(L).has_value()) << *lax_homogeneity_violation(L);
  }
}

TEST(LaxJet, PruningDoesNotChangeTheJet) {
  LaxJet a = build_L0(3, 4, 6);
  LaxJet b = build_L0(3, 4, 6, JetOptions{false, true});
  for (int i = 0; i <= 1; ++i) EXPECT_EQ(a.f[i], b.f[i]);
}

TEST(LaxJet, CorruptedJetIsDetected) {
  LaxJet L = build_L0(3, 4, 5);
  L.f[0] += RSeries::variable(L.space, L.cap, 1) * RSeries::variable(L.space, L.cap, 3);
  auto bad = first_flow_violation(L);
  ASSERT_TRUE(bad.has_value());
  EXPECT_THROW(certify_flows(L), InternalInconsistency);
}

TEST(LaxJet, RejectsBadArguments) {
  EXPECT_THROW(build_L0(1, 3, 3), BadIndex);
  EXPECT_THROW(build_L0(3, 3, 2), BadIndex);
  EXPECT_THROW(build_L0(3, 16, 4), CapExceeded);
}

TEST(Phi0, KnownSecondAndThirdDerivatives) {
  for (int r = 2; r <= 5; ++r) {
    LaxJet L = build_L0(r, 3, r);
    PhiJet phi = build_phi0(L, 4);
    EXPECT_EQ(phi.phi0.coefficient(mono({{1, 1}, {r, 1}})), Rational(r)) << r;
    // d^2/dT_2 dT_{r-1} = 2(r-1); for r = 3 this is a second derivative of T_2^2.
    if (r >= 3) {
      EXPECT_EQ(phi.phi0.coefficient(mono({{2, 1}, {r - 1, 1}})), Rational(2 * (r - 1), r == 3 ? 2 : 1)) << r;
    }
    // d^3/dT_2 dT_r^2 = 2 r^2, i.e. coefficient r^2 of T_2 T_r^2.
    if (r >= 3) {
      EXPECT_EQ(phi.phi0.coefficient(mono({{2, 1}, {r, 2}})), Rational(r * r)) << r;
    }
  }
}

TEST(Phi0, StringEquationFlowsAndHomogeneity) {
  for (int r = 2; r <= 4; ++r) {
    LaxJet L = build_L0(r, 4, 2 * r);
    PhiJet phi = build_phi0(L, 5);
    EXPECT_TRUE(string_defect(phi.phi0, r).is_zero());
    EXPECT_FALSE(first_phi_flow_violation(L, phi).has_value());
    EXPECT_FALSE(phi_homogeneity_violation(phi.phi0, r, 0).has_value()) << *phi_homogeneity_violation(phi.phi0, r, 0);
  }
}

TEST(Phi0, NeedsDeepEnoughJet) {
  LaxJet L = build_L0(3, 3, 3);
  EXPECT_THROW(build_phi0(L, 5), CapExceeded);
}

TEST(VCoords, RoundTrip) {
  for (int r = 2; r <= 5; ++r) {
    VCoords V = v_coords(r, 6);
    for (int i = 1; i <= r - 1; ++i) {
      RSeries back = substitute_series(V.forward[i - 1], V.backward, V.vspace, V.cap);
      EXPECT_EQ(back, RSeries::variable(V.vspace, V.cap, i - 1)) << "r=" << r << " i=" << i;
    }
  }
}

TEST(VCoords, LeadingCoefficients) {
  // v_i = (i/r) f_{r-1-i} + higher f's.
  VCoords V = v_coords(4, 4);
  for (int i = 1; i <= 3; ++i) EXPECT_EQ(V.forward[i - 1].coefficient(Monomial::unit(3 - i)), Rational(i, 4));
}

TEST(ClosedPotential, PrimaryThreePointAndTwoPointIdentities) {
  for (int r = 2; r <= 4; ++r) {
    const int N = 2 * r;
    LaxJet L = build_L0(r, 4, N);
    VCoords V = v_coords(r, symbolic_cap(N + r));
    TwoPointTable G(L, V, N);
    RSeries F = assemble_F0_closed(G, N, 6, L.space);
    // For r = 2, <tau^0 tau^0 tau^0> = 1 and T_1 = t^0_0.
    if (r == 2) {
      EXPECT_EQ(F.coefficient(mono({{1, 3}})), Rational(1, 6));
    }
    // res L^{n/r} = d^2F/dT_1 dT_n.
    auto vT = v_on_jet(L);
    std::vector<int> ns;
    for (int n = 1; n <= N; ++n) ns.push_back(n);
    auto powers = fractional_powers(L.symbol(), r, ns, -1);
    for (int n = 1; n <= N; ++n) {
      RSeries d2 = F.derivative(0).derivative(n - 1).truncated(4);
      EXPECT_EQ(d2, powers[n - 1].residue().truncated(4)) << "r=" << r << " n=" << n;
    }
    for (int a = 1; a <= N; ++a)
      for (int b = 1; b <= r - 1; ++b)
        EXPECT_EQ(F.derivative(a - 1).derivative(b - 1).truncated(4), G.get(a, b).truncated(4)) << a << "," << b;
    EXPECT_FALSE(closed_homogeneity_violation(F, r).has_value());
  }
}

TEST(ClosedPotential, BadIndices) {
  LaxJet L = build_L0(3, 3, 3);
  VCoords V = v_coords(3, symbolic_cap(6));
  EXPECT_THROW(two_point_closed(1, 3, L, V), BadIndex);
  EXPECT_THROW(two_point_closed(0, 1, L, V), BadIndex);
  EXPECT_NO_THROW(two_point_closed(2, 1, L, V));
}

TEST(Dispersive, LeadingLayerIsDispersionless) {
  for (int r = 2; r <= 3; ++r) {
    DispersiveLaxJet D = build_L_dispersive(r, 4, 2 * r);
    LaxJet L = build_L0(r, 4, 2 * r);
    for (int i = 0; i <= r - 2; ++i) EXPECT_EQ(D.layer(i, 0), L.f[i]) << "r=" << r << " i=" << i;
    EXPECT_FALSE(first_flow_violation(D).has_value());
  }
}

TEST(Dispersive, PlainTextForm) {
  DispersiveLaxJet D = build_L_dispersive(3, 1, 3);
  EXPECT_EQ(D.str(), "Dx^3 + 6*e^-2*T2*Dx + 3*e^-3*T1");
}

TEST(Dispersive, WaveFunctionLayers) {
  for (int r = 2; r <= 3; ++r) {
    DispersiveLaxJet D = build_L_dispersive(r, 4, 2 * r);
    DispersivePhiJet psi = build_phi_dispersive(D, 5, 1);
    LaxJet L = build_L0(r, 4, 2 * r);
    PhiJet phi = build_phi0(L, 5);
    EXPECT_EQ(psi.layer(0), phi.phi0);
    for (int g = 0; g <= 2; ++g) {
      auto bad = phi_homogeneity_violation(psi.layer(g), r, g);
      EXPECT_FALSE(bad.has_value()) << "g=" << g << " " << *bad;
    }
  }
}

TEST(Dispersive, FaaDiBrunoMatchesRecursion) {
  // B_{i+1} = D B_i + psi_x B_i with D = eps d/dx.
  auto s = VarSpace::T(3);
  const int cap = 6;
  ESeries psi = ESeries::variable(s, cap, 0) * ESeries::variable(s, cap, 1) +
                ESeries::variable(s, cap, 0, EpsScalar::monomial(Rational(2), 1)) * ESeries::variable(s, cap, 0) * ESeries::variable(s, cap, 2) +
                ESeries::variable(s, cap, 0, EpsScalar(Rational(1, 3))) * ESeries::variable(s, cap, 0) * ESeries::variable(s, cap, 0);
  auto B = exp_derivatives(psi, 5, cap);
  EXPECT_EQ(B[0], ESeries::constant(s, cap, EpsScalar(1)));
  for (int i = 0; i < 5; ++i) {
    ESeries next = eps_shift(B[i].derivative(0), 1) + psi.derivative(0) * B[i];
    EXPECT_EQ(B[i + 1], next.truncated(cap)) << i;
  }
}
