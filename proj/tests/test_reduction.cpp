#include <cmath>
#include <complex>

#include "doctest.h"
#include "sclag/reduction.hpp"

using namespace sclag;

namespace {
const Complex I1{0.0, 1.0};

PhaseFunction fourier1() {
  VarSpace sp(1, 1);
  return PhaseFunction{parse("x1*t1", sp), std::nullopt};
}

Amplitude narrow_amp(const VarSpace& sp) {
  // concentrated fiber amplitude keeps the oscillatory cross-checks cheap
  Expr g = exp(Rational(-25) * block_square_sum(Block::Theta, sp));
  return Amplitude{g, SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};
}

}  // namespace

TEST_CASE("order_normalize: delta and constant normalizations are exact") {
  for (int d : {1, 2, 3}) {
    // delta_0: amplitude order (0,0), s = d fiber variables, no excess
    LagrangianOrders del = order_normalize(Rational(0), Rational(0), Rational(d), Rational(d),
                                           Rational(0));
    CHECK(del.psi_order == Rational(d, 4));

    // constant function: zero-dimensional fiber bookkeeping
    LagrangianOrders con = order_normalize(Rational(0), Rational(0), Rational(d), Rational(0),
                                           Rational(0));
    CHECK(con.e_order == Rational(-d, 4));

    // s = e = 0 edge: pure +-d/4 shifts
    CHECK(con.psi_order == Rational(-d, 4));
  }
}

TEST_CASE("add_smooth: identity and bounded perturbations") {
  PhaseFunction phi = fourier1();
  const VarSpace& sp = phi.space();
  Amplitude a = narrow_amp(sp);

  SurgeryResult id = add_smooth(phi, a, constant(Rational(0), sp));
  CHECK(id.phase.expr == phi.expr);
  CHECK(id.order_before == id.order_after);

  SurgeryResult pert = add_smooth(phi, a, sin(variable(Block::X, 0, sp)));
  CHECK(pert.amp_phase_shift.has_value());
  CHECK(pert.order_after.mu_psi() == id.order_after.mu_psi());

  // unbounded perturbations are rejected
  CHECK_THROWS_AS(add_smooth(phi, a, japanese_bracket(Block::X, sp)), std::invalid_argument);
}

TEST_CASE("add_smooth: the amplitude rotation keeps the distribution equal") {
  PhaseFunction phi = fourier1();
  const VarSpace& sp = phi.space();
  Amplitude a = narrow_amp(sp);
  Expr r = sin(variable(Block::X, 0, sp));
  SurgeryResult res = add_smooth(phi, a, r);

  Vec c(1);
  c << 0.3;
  TestDensity f = TestDensity::gaussian(c, 0.8);
  OscIntegral before = evaluate(phi, a, f);
  OscIntegral after = evaluate(res.phase, res.osc_amplitude(), f, CutoffSpec{});
  CHECK(std::abs(before.value - after.value) < 1e-6 * (1 + std::abs(before.value)));
}

TEST_CASE("increase_fiber: critical set gains t = 0 and mu stays fixed") {
  PhaseFunction phi = fourier1();
  Amplitude a = narrow_amp(phi.space());
  SurgeryResult up = increase_fiber(phi, a, Rational(60));

  CHECK(up.order_after.mu_e() == up.order_before.mu_e());
  CHECK(up.order_after.mu_psi() == up.order_before.mu_psi());
  CHECK(up.order_after.s == up.order_before.s + Rational(1));

  CriticalManifold cm = critical_solve(up.phase);
  CHECK(cm.excess == 0);
  bool saw = false;
  for (const auto& p : cm.points) {
    // the added bounded variable sits in the last fiber slot
    CHECK(std::abs(p.theta(p.theta.size() - 1)) < 1e-9);
    saw = true;
  }
  CHECK(saw);

  // the lifted representation re-evaluates to the original distribution
  Vec c(1);
  c << 0.5;
  TestDensity f = TestDensity::gaussian(c, 0.6);
  QuadratureConfig qc;
  qc.rel_tol = 1e-5;
  qc.eps_sweep = {0.25};  // the fiber amplitude is concentrated; one rung suffices
  OscIntegral base = evaluate(phi, a, f);
  OscIntegral lifted = evaluate(up.phase, up.osc_amplitude(), f, CutoffSpec{}, qc);
  // stationary-phase error O(1/c) on <x><t> >= 1 supports
  CHECK(std::abs(lifted.value - base.value) < 0.05 * (1 + std::abs(base.value)));
}

TEST_CASE("reduce_fiber: round trip through increase_fiber") {
  PhaseFunction phi = fourier1();
  Amplitude a = narrow_amp(phi.space());
  SurgeryResult up = increase_fiber(phi, a, Rational(60));

  // psi-face critical point of the augmented phase
  CriticalPoint seed;
  seed.face = Face::Psi;
  seed.x = Vec::Zero(1);
  seed.theta = (Vec(2) << 1.0, 0.0).finished();
  CriticalPoint p0 = polish_critical_point(up.phase, seed);

  SurgeryResult down = reduce_fiber(up.phase, up.amplitude, p0, {}, up.order_after);
  CHECK(down.order_after.s == Rational(1));
  CHECK(down.order_after.mu_psi() == up.order_before.mu_psi());
  CHECK(down.order_after.m_e == up.order_after.m_e - Rational(1, 2));
  CHECK(down.order_after.m_psi == up.order_after.m_psi + Rational(1, 2));

  // Maslov factor from the positive-definite rank-one block
  CHECK(std::abs(down.maslov_factor - std::exp(I1 * (M_PI / 4))) < 1e-12);

  // the reduced phase is the original one and the phases are equivalent
  CriticalPoint q;
  q.face = Face::Psi;
  q.x = Vec::Zero(1);
  q.theta = (Vec(1) << 1.0).finished();
  EquivalenceVerdict eq = equivalence_decide(down.phase, phi, q, q);
  CHECK(eq.applicable);
  CHECK(eq.equivalent);

  // and the transported amplitude reproduces the original numerically:
  // carrier * scalars == a * e^{i pi/4} up to O(1/c)
  Vec c(1);
  c << 0.5;
  TestDensity f = TestDensity::gaussian(c, 0.6);
  QuadratureConfig qc;
  qc.rel_tol = 1e-5;
  qc.eps_sweep = {0.25};
  Complex before = evaluate(phi, a, f).value;
  OscAmplitude reduced = down.osc_amplitude();
  reduced.scalar *= up.scalar_factor;  // carry the lift normalization
  Complex after = evaluate(down.phase, reduced, f, CutoffSpec{}, qc).value;
  CHECK(std::abs(after - before * std::exp(I1 * (M_PI / 4))) <
        0.06 * (1 + std::abs(before)));
}

TEST_CASE("reduce_fiber: explicit quadratic fiber block with positive sign") {
  // phi = x1 t1 + <x> <t1> t2^2 restricted to |eta_1| >= 1/2, reduced in t2
  VarSpace sp(1, 2);
  Expr t1 = variable(Block::Theta, 0, sp), t2 = variable(Block::Theta, 1, sp);
  (void)t1;
  Expr e = parse("x1*t1", sp) + Rational(100) * japanese_bracket(Block::X, sp) *
                                    pow(t2, Rational(2)) *
                                    pow(japanese_bracket(Block::Theta, sp), Rational(-1));
  PhaseFunction phi{e, std::nullopt};
  Vec axis(2);
  axis << 1.0, 0.0;
  phi.domain = PhaseFunction::ConeRestriction{axis, 0.5};

  CriticalPoint seed;
  seed.face = Face::Psi;
  seed.x = Vec::Zero(1);
  seed.theta = (Vec(2) << 1.0, 0.0).finished();
  CriticalPoint p0 = polish_critical_point(phi, seed);

  Amplitude a{exp(Rational(-25) * pow(t1, Rational(2))) *
                  exp(Rational(-25) * pow(t2, Rational(2))),
              SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};
  SurgeryResult down = reduce_fiber(phi, a, p0);
  CHECK(std::abs(down.maslov_factor - std::exp(I1 * (M_PI / 4))) < 1e-12);
  CHECK(down.order_after.m_e == a.order.m_e - Rational(1, 2));
  CHECK(down.order_after.m_psi == a.order.m_psi + Rational(1, 2));

  // oscillatory cross-check of the two representations
  Vec c(1);
  c << 0.6;
  TestDensity f = TestDensity::gaussian(c, 0.5);
  QuadratureConfig qc;
  qc.rel_tol = 1e-5;
  qc.eps_sweep = {0.25};
  Complex before = evaluate(phi, a, f, qc).value;
  Complex after = evaluate(down.phase, down.osc_amplitude(), f, CutoffSpec{}, qc).value;
  CHECK(std::abs(after - before) < 0.05 * (1 + std::abs(before)));
}

TEST_CASE("reduce_fiber: split quadratic gives unit Maslov factor") {
  // phi = x1 t1 + <x><t1>(t2^2 - t3^2): block signature 0, |det| factors out
  VarSpace sp(1, 3);
  Expr t1 = variable(Block::Theta, 0, sp);
  Expr t2 = variable(Block::Theta, 1, sp);
  Expr t3 = variable(Block::Theta, 2, sp);
  Expr q = pow(t2, Rational(2)) - pow(t3, Rational(2));
  Expr e = parse("x1*t1", sp) +
           Rational(100) * japanese_bracket(Block::X, sp) * q *
               pow(japanese_bracket(Block::Theta, sp), Rational(-1));
  PhaseFunction phi{e, std::nullopt};
  Vec axis(3);
  axis << 1.0, 0.0, 0.0;
  phi.domain = PhaseFunction::ConeRestriction{axis, 0.5};

  CriticalPoint seed;
  seed.face = Face::Psi;
  seed.x = Vec::Zero(1);
  seed.theta = (Vec(3) << 1.0, 0.0, 0.0).finished();
  CriticalPoint p0 = polish_critical_point(phi, seed);
  ScHessianRecord rec = sc_hessian(phi, p0);
  CHECK(rec.rank == 2);
  CHECK(rec.signature == 0);

  Amplitude a = narrow_amp(sp);
  SurgeryResult down = reduce_fiber(phi, a, p0);
  CHECK(std::abs(down.maslov_factor - Complex{1, 0}) < 1e-12);
  CHECK(down.order_after.s == Rational(1));
}

TEST_CASE("reduce_fiber: rank zero is rejected and s_min bound holds") {
  PhaseFunction phi = fourier1();
  CriticalPoint seed;
  seed.face = Face::Psi;
  seed.x = Vec::Zero(1);
  seed.theta = (Vec(1) << 1.0).finished();
  CriticalPoint p0 = polish_critical_point(phi, seed);
  Amplitude a = narrow_amp(phi.space());
  // s = 1 = d + e - n is already minimal here: the Hessian has rank zero
  CHECK_THROWS_AS(reduce_fiber(phi, a, p0), ComputeError);
}

TEST_CASE("eliminate_excess: normalized fiber profile integrates away") {
  // phi independent of t2; a = a1(x, t1) * rho(t2) with integral one
  VarSpace sp(1, 2);
  PhaseFunction phi{parse("x1*t1", sp), std::nullopt};
  Vec axis(2);
  axis << 1.0, 0.0;
  phi.domain = PhaseFunction::ConeRestriction{axis, 0.5};

  Expr t2 = variable(Block::Theta, 1, sp);
  // rho = (1/sqrt(pi)) e^{-t2^2}, integral exactly 1
  Expr rho = exp(Rational(-1) * pow(t2, Rational(2)));
  Expr a1 = exp(Rational(-25) * pow(variable(Block::Theta, 0, sp), Rational(2)));
  Amplitude a{a1 * rho, SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};

  auto split = find_excess_split(phi, 1);
  REQUIRE(split.has_value());
  CHECK(*split == std::vector<int>{1});

  SurgeryResult res = eliminate_excess(phi, a, *split);
  CHECK(res.scalar_factor.real() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-9));
  CHECK(res.order_after.m_psi == a.order.m_psi + Rational(1));
  CHECK(res.order_after.mu_psi() == res.order_before.mu_psi());
  CHECK(res.order_after.mu_e() == res.order_before.mu_e());

  // reduced amplitude is a1 itself (over the smaller space)
  VarSpace nsp(1, 1);
  Expr a1_reduced = exp(Rational(-25) * pow(variable(Block::Theta, 0, nsp), Rational(2)));
  CHECK(res.amplitude.expr == a1_reduced);
}

TEST_CASE("eliminate_excess: duplicated Fourier phase recovers the standard one") {
  VarSpace sp(1, 2);
  PhaseFunction dup{parse("x1*t1", sp), std::nullopt};
  Vec axis(2);
  axis << 1.0, 0.0;
  dup.domain = PhaseFunction::ConeRestriction{axis, 0.5};

  Expr rho = exp(Rational(-1) * pow(variable(Block::Theta, 1, sp), Rational(2)));
  Expr a1 = exp(Rational(-25) * pow(variable(Block::Theta, 0, sp), Rational(2)));
  Amplitude a{a1 * rho, SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};
  SurgeryResult res = eliminate_excess(dup, a, {1});

  Vec c(1);
  c << 0.4;
  TestDensity f = TestDensity::gaussian(c, 0.7);
  CutoffSpec pv;
  pv.family = CutoffSpec::Family::PerVariable;
  Complex before =
      evaluate(dup, OscAmplitude{a.expr, std::nullopt, Complex{1, 0}}, f, pv).value;
  Complex after = evaluate(res.phase, res.osc_amplitude(), f, pv).value;
  CHECK(std::abs(after - before) < 1e-3 * (1 + std::abs(before)));
}

TEST_CASE("eliminate_excess: misaligned splits are reported") {
  VarSpace sp(1, 2);
  PhaseFunction phi{parse("x1*t1 + x1*t2", sp), std::nullopt};
  Amplitude a = narrow_amp(sp);
  CHECK_THROWS_AS(eliminate_excess(phi, a, {1}), ComputeError);
}

TEST_CASE("equivalence_decide: dilation, smooth shifts, signature obstruction") {
  VarSpace sp(1, 1);
  PhaseFunction phi1{parse("x1*t1", sp), std::nullopt};
  PhaseFunction phi2{parse("x1*2*t1", sp), std::nullopt};
  CriticalPoint p;
  p.face = Face::Psi;
  p.x = Vec::Zero(1);
  p.theta = (Vec(1) << 1.0).finished();

  EquivalenceVerdict same = equivalence_decide(phi1, phi2, p, p);
  CHECK(same.applicable);
  CHECK(same.equivalent);

  // phi vs phi + bounded smooth
  PhaseFunction phi3{phi1.expr + sin(variable(Block::X, 0, sp)), std::nullopt};
  EquivalenceVerdict shift = equivalence_decide(phi1, phi3, p, p);
  CHECK(shift.applicable);
  CHECK(shift.equivalent);

  // opposite-signature fiber extensions of the same Lagrangian
  Amplitude a = narrow_amp(sp);
  SurgeryResult plus = increase_fiber(phi1, a, Rational(60));
  SurgeryResult minus = increase_fiber(phi1, a, Rational(-60));
  CriticalPoint q;
  q.face = Face::Psi;
  q.x = Vec::Zero(1);
  q.theta = (Vec(2) << 1.0, 0.0).finished();
  EquivalenceVerdict opp = equivalence_decide(plus.phase, minus.phase, q, q);
  CHECK(opp.applicable);
  CHECK(!opp.equivalent);
  CHECK(opp.signature_1 == 1);
  CHECK(opp.signature_2 == -1);

  // reflexivity and symmetry on the precondition set
  EquivalenceVerdict refl = equivalence_decide(phi1, phi1, p, p);
  CHECK(refl.applicable);
  CHECK(refl.equivalent);
  EquivalenceVerdict sym = equivalence_decide(phi2, phi1, p, p);
  CHECK(sym.applicable);
  CHECK(sym.equivalent == same.equivalent);

  // dimension mismatch is reported as a precondition failure
  EquivalenceVerdict mism = equivalence_decide(phi1, plus.phase, p, q);
  CHECK(!mism.applicable);
  CHECK(!mism.failed_preconditions.empty());
}
