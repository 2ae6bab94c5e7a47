#include <cmath>
#include <complex>

#include "doctest.h"
#include "sclag/oscint.hpp"

using namespace sclag;

namespace {
const Complex I1{0.0, 1.0};

PhaseFunction fourier1() {
  VarSpace sp(1, 1);
  return PhaseFunction{parse("x1*t1", sp), std::nullopt};
}

Amplitude unit_amp(const VarSpace& sp) {
  return Amplitude{constant(Rational(1), sp), SGOrder{Rational(0), Rational(0)},
                   DensityConvention::Scalar};
}
}  // namespace

TEST_CASE("make_regularizer: bounds verified, pointwise limit one") {
  CutoffSpec spec;
  RegularizerReport rep;
  Regularizer m = make_regularizer(spec, 0.25, &rep);
  CHECK(rep.ok);
  CHECK(rep.worst_constant < 50.0);

  // m_eps -> 1 pointwise as eps -> 0 at a fixed interior point
  const double norm_at_point = smooth_norm_profile(17.3, 0);
  for (double eps : {0.25, 0.1, 0.01, 0.001}) {
    Regularizer me = make_regularizer(spec, eps);
    if (eps < 0.01) CHECK(me(norm_at_point) == 1.0);
  }
  CHECK(m(1.0) == 1.0);  // plateau near the origin

  // a second, wider profile also verifies
  CutoffSpec spec2;
  spec2.t0 = Rational(1, 4);
  spec2.t1 = Rational(3, 2);
  RegularizerReport rep2;
  make_regularizer(spec2, 0.25, &rep2);
  CHECK(rep2.ok);

  // profiles without compact support are rejected
  CutoffSpec bad;
  bad.compact = false;
  CHECK_THROWS_AS(make_regularizer(bad, 0.25), std::invalid_argument);
}

TEST_CASE("evaluate: Fourier inversion recovers f(0), d = 1") {
  PhaseFunction phi = fourier1();
  Amplitude one = unit_amp(phi.space());
  for (double c0 : {0.0, 0.4, -0.9}) {
    Vec c(1);
    c << c0;
    TestDensity f = TestDensity::gaussian(c, 1.2);
    OscIntegral I = evaluate(phi, one, f);
    CHECK(I.converged);
    const double want = std::exp(-c0 * c0 / (1.2 * 1.2));
    CHECK(std::abs(I.value / (2 * M_PI) - want) < 1e-3 * want);
  }
}

TEST_CASE("evaluate: regularizer independence") {
  PhaseFunction phi = fourier1();
  // amplitude with slow polynomial decay so the regularizer genuinely acts
  Amplitude a{pow(japanese_bracket(Block::Theta, phi.space()), Rational(-3)),
              SGOrder{Rational(0), Rational(-3)}, DensityConvention::Scalar};
  Vec c(1);
  c << 0.3;
  TestDensity f = TestDensity::gaussian(c, 1.0);

  CutoffSpec narrow;  // plateau [0, 1/2], gone by 1
  CutoffSpec wide;
  wide.t0 = Rational(1, 4);
  wide.t1 = Rational(2);
  QuadratureConfig cfg;
  cfg.eps_sweep = {0.2, 0.1, 0.05, 0.025};
  OscAmplitude oa{a.expr, std::nullopt, Complex{1, 0}};
  OscIntegral i1 = evaluate(phi, oa, f, narrow, cfg);
  OscIntegral i2 = evaluate(phi, oa, f, wide, cfg);
  CHECK(i1.converged);
  CHECK(i2.converged);
  CHECK(std::abs(i1.value - i2.value) < 1e-6 * (1 + std::abs(i1.value)));
}

TEST_CASE("evaluate: amplitude decaying near the critical set gives a negligible pairing") {
  // phi = x t: C_phi = {x = 0}; the amplitude vanishes identically near
  // the critical set and is Schwartz in the fiber, so the pairing against
  // an f supported far away sits below the floor
  VarSpace sp(1, 1);
  PhaseFunction phi{parse("x1*t1", sp), std::nullopt};
  Expr off = constant(Rational(1), sp) -
             cutoff(pow(variable(Block::X, 0, sp), Rational(2)), 0, Rational(9), Rational(16));
  Expr damp = off * exp(Rational(-1) * block_square_sum(Block::Theta, sp));
  Amplitude a{damp, SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};
  Vec c(1);
  c << 11.0;  // far from the singular support at x = 0
  TestDensity f = TestDensity::gaussian(c, 0.5);
  OscIntegral I = evaluate(phi, a, f);
  CHECK(std::abs(I.value) < 1e-8);
}

TEST_CASE("evaluate: linearity in the amplitude") {
  PhaseFunction phi = fourier1();
  const VarSpace& sp = phi.space();
  Amplitude a1{pow(japanese_bracket(Block::Theta, sp), Rational(-3)),
               SGOrder{Rational(0), Rational(-3)}, DensityConvention::Scalar};
  Amplitude a2{pow(japanese_bracket(Block::Theta, sp), Rational(-4)),
               SGOrder{Rational(0), Rational(-4)}, DensityConvention::Scalar};
  Amplitude sum{a1.expr + a2.expr, a1.order, DensityConvention::Scalar};
  Vec c(1);
  c << 0.2;
  TestDensity f = TestDensity::gaussian(c, 0.9);
  Complex v1 = evaluate(phi, a1, f).value;
  Complex v2 = evaluate(phi, a2, f).value;
  Complex vs = evaluate(phi, sum, f).value;
  CHECK(std::abs(vs - (v1 + v2)) < 1e-6 * (1 + std::abs(vs)));
}

TEST_CASE("stationary phase: Gaussian model integral at lambda = 200") {
  // int e^{i lambda t^2/2} e^{-t^2} dt: leading term sqrt(2 pi/lambda) e^{i pi/4}
  VarSpace sp(1, 1);
  Expr psi = parse("1/2*t1^2", sp);
  Expr g = exp(Rational(-1) * pow(variable(Block::Theta, 0, sp), Rational(2)));
  Vec seed(1);
  seed << 0.4;
  StationaryPhaseTerm term = stationary_phase_leading(psi, g, 200.0, Vec::Zero(1), seed);
  CHECK(term.signature == 1);

  // exact value sqrt(pi / (1 - i lambda/2))
  const Complex exact = std::sqrt(M_PI / (Complex{1.0, -100.0}));
  CHECK(std::abs(term.value - exact) / std::abs(exact) < 0.05);

  // sign flip conjugates the factor
  StationaryPhaseTerm flip = stationary_phase_leading(Rational(-1) * psi, g, 200.0,
                                                      Vec::Zero(1), seed);
  CHECK(flip.signature == -1);
  CHECK(std::abs(flip.value - std::conj(term.value)) < 1e-12);
}

TEST_CASE("stationary phase: quadrature ratio approaches one at rate ~ 1/lambda") {
  VarSpace sp(1, 1);
  Expr psi = parse("1/2*t1^2", sp);
  Expr g = exp(Rational(-1) * pow(variable(Block::Theta, 0, sp), Rational(2)));
  Vec seed(1);
  seed << 0.4;
  std::vector<double> lambdas = {50, 100, 200, 400};
  std::vector<double> devs;
  for (double lam : lambdas) {
    const Complex exact = std::sqrt(M_PI / Complex{1.0, -lam / 2});
    const Complex lead = stationary_phase_leading(psi, g, lam, Vec::Zero(1), seed).value;
    devs.push_back(std::abs(lead / exact - 1.0));
  }
  SlopeFit fit = fit_log_slope(lambdas, devs);
  CHECK(fit.slope < -0.8);  // decay at least like 1/lambda^0.8
}

TEST_CASE("stationary phase: indefinite 2-D model is the product of 1-D factors") {
  VarSpace sp(1, 2);
  Expr psi = parse("1/2*t1^2 - 1/2*t2^2", sp);
  Expr g = exp(Rational(-1) * (pow(variable(Block::Theta, 0, sp), Rational(2)) +
                               pow(variable(Block::Theta, 1, sp), Rational(2))));
  Vec seed(2);
  seed << 0.3, -0.2;
  const double lam = 150;
  StationaryPhaseTerm t2 = stationary_phase_leading(psi, g, lam, Vec::Zero(1), seed);
  CHECK(t2.signature == 0);  // e^{i pi sgn/4} = 1
  CHECK(std::abs(t2.value.imag()) < 1e-12);
  CHECK(t2.value.real() == doctest::Approx(2 * M_PI / lam).epsilon(1e-9));

  // degenerate Hessian is rejected
  Expr degen = parse("1/2*t1^2", sp);  // no t2 dependence
  CHECK_THROWS_AS(stationary_phase_leading(degen, g, lam, Vec::Zero(1), seed), ComputeError);
}

TEST_CASE("wf_probe: conormal example, singular and regular directions") {
  // u(x) = int e^{i x1 t} dt in d = 2 (conormal to the line x1 = 0)
  VarSpace sp(2, 1);
  PhaseFunction phi{parse("x1*t1", sp), std::nullopt};
  OscAmplitude one{constant(Rational(1), sp), std::nullopt, Complex{1, 0}};

  WfProbeConfig cfg;
  cfg.scales = {4, 8, 16, 32};

  // psi-face probe on the wavefront: x on the line, conormal direction
  CompactPoint on;
  on.face = Face::Psi;
  on.base = (Vec(2) << 0.0, 0.7).finished();
  on.fiber = (Vec(2) << 1.0, 0.0).finished();
  WfProbeResult r_on = wf_probe(phi, one, on, cfg);
  CHECK(r_on.verdict == WfProbeResult::Verdict::Singular);

  // same base point, direction rotated well away from the conormal
  CompactPoint off = on;
  off.fiber = (Vec(2) << std::cos(1.0), std::sin(1.0)).finished();
  WfProbeResult r_off = wf_probe(phi, one, off, cfg);
  CHECK(r_off.verdict == WfProbeResult::Verdict::Regular);
  CHECK(r_off.decay_exponent - r_on.decay_exponent >= 4.0);

  // base point far from the line: regular in every direction
  CompactPoint away = on;
  away.base = (Vec(2) << 5.0, 0.7).finished();
  WfProbeResult r_away = wf_probe(phi, one, away, cfg);
  CHECK(r_away.verdict == WfProbeResult::Verdict::Regular);
}

TEST_CASE("wf_probe: a Schwartz representation is regular everywhere probed") {
  // amplitude rapidly decaying near C_phi: the pairing is globally regular
  VarSpace sp(2, 1);
  PhaseFunction phi{parse("x1*t1", sp), std::nullopt};
  Expr damp = exp(Rational(-1) * pow(variable(Block::Theta, 0, sp), Rational(2)));
  Expr damp_x = exp(Rational(-1) * block_square_sum(Block::X, sp));
  OscAmplitude a{damp * damp_x, std::nullopt, Complex{1, 0}};
  WfProbeConfig cfg;
  cfg.scales = {4, 8, 16, 32};
  CompactPoint p;
  p.face = Face::Psi;
  p.base = (Vec(2) << 0.0, 0.5).finished();
  p.fiber = (Vec(2) << 1.0, 0.0).finished();
  WfProbeResult r = wf_probe(phi, a, p, cfg);
  CHECK(r.verdict == WfProbeResult::Verdict::Regular);
}
