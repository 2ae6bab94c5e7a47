#include <cmath>
#include <random>

#include "doctest.h"
#include "sclag/geometry.hpp"

using namespace sclag;

namespace {
Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("iota: exact formula outside radius 3") {
  Vec x = vec2(4.0, 0.0);
  Vec y = iota(x);
  CHECK(y(0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(y(1) == doctest::Approx(0.0));

  // interior maps to interior
  Vec z = iota(Vec::Zero(2));
  CHECK(z.norm() < 1.0);
}

TEST_CASE("iota_inv: closed form beyond 2/3 and round trips") {
  Vec y = vec2(0.9, 0.0);
  Vec x = iota_inv(y);
  CHECK(x(0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(x(1) == doctest::Approx(0.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-6, 6);
  for (int i = 0; i < 200; ++i) {
    Vec p = vec2(u(rng), u(rng));
    Vec q = iota_inv(iota(p));
    CHECK((q - p).norm() < 1e-12 * (1 + p.norm()));
  }
  CHECK_THROWS_AS(iota_inv(vec2(1.0, 0.0)), DomainError);
}

TEST_CASE("iota radial profile is strictly increasing") {
  double prev = 0.0;
  for (int i = 1; i <= 4000; ++i) {
    const double r = 4.0 * i / 4000;
    const double p = iota_radial_profile(r);
    CHECK(p > prev);
    prev = p;
  }
  CHECK(prev < 1.0);
}

TEST_CASE("bdf equivalence: bracket vs smooth norm") {
  for (int d : {1, 2, 3}) {
    VarSpace sp(d, 1);
    Expr rho1 = pow(japanese_bracket(Block::X, sp), Rational(-1));
    Expr rho2 = pow(smooth_norm(Block::X, sp), Rational(-1));
    BdfReport rep = bdf_equivalent(rho1, rho2);
    CHECK(rep.equivalent);
    CHECK(rep.limit_min == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(rep.limit_max == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("bdf equivalence: rate of <x>^-1 / [x]^-1 is quadratic") {
  VarSpace sp(2, 1);
  Expr jb = japanese_bracket(Block::X, sp);
  Expr nn = smooth_norm(Block::X, sp);
  // |ratio - 1| ~ R^-2
  std::vector<double> radii = {1e2, 3e2, 1e3, 3e3, 1e4};
  std::vector<double> devs;
  for (double R : radii) {
    std::vector<double> p = {R, 0.0, 0.0};
    devs.push_back(std::abs(nn.eval(p) / jb.eval(p) - 1.0));
  }
  SlopeFit fit = fit_log_slope(radii, devs);
  CHECK(fit.slope == doctest::Approx(-2.0).epsilon(0.02));
}

TEST_CASE("bdf equivalence: wrong order rejected, scalar multiple accepted") {
  VarSpace sp(2, 1);
  Expr rho1 = pow(japanese_bracket(Block::X, sp), Rational(-1));
  Expr rho2 = pow(japanese_bracket(Block::X, sp), Rational(-2));
  CHECK(!bdf_equivalent(rho1, rho2).equivalent);

  Expr rho3 = Rational(2) * rho1;
  BdfReport rep = bdf_equivalent(rho1, rho3);
  CHECK(rep.equivalent);
  CHECK(rep.limit_min == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("scattering differential of bounded functions vanishes at the boundary") {
  VarSpace sp(2, 1);
  Expr one = constant(Rational(1), sp);
  ScDifferentialReport rep = sc_differential(one);
  CHECK(rep.order_ok);
  CHECK(rep.vanishes_at_boundary);

  // bounded non-constant
  Expr g = pow(japanese_bracket(Block::X, sp), Rational(-1));
  CHECK(sc_differential(g).vanishes_at_boundary);
}

TEST_CASE("scattering differential of [x] in d=1 has radial coefficient -1") {
  VarSpace sp(1, 1);
  Expr f = smooth_norm(Block::X, sp);
  ScDifferentialReport rep = sc_differential(f, 2);
  CHECK(rep.order_ok);
  CHECK(!rep.vanishes_at_boundary);
  for (double lim : rep.radial_limits) CHECK(lim == doctest::Approx(-1.0).epsilon(1e-9));
  // exact value at a concrete point x > 3
  CHECK(rep.coefficients.radial_coeff.eval({7.0, 0.0}) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("scattering differential of [x]*g reproduces -g + rho d_rho g") {
  // f = [x] + x1/[x] corresponds to g(rho, omega) = 1 + rho*omega1 in the chart;
  // the radial coefficient must tend to -g(0, omega) = -1.
  VarSpace sp(2, 1);
  Expr nn = smooth_norm(Block::X, sp);
  Expr f = nn + variable(Block::X, 0, sp) * pow(nn, Rational(-1));
  ScDifferentialReport rep = sc_differential(f, 8);
  for (double lim : rep.radial_limits) CHECK(lim == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("scmap_check: accepts benign maps, rejects quadratic growth") {
  VarSpace sp(1, 1);
  ScMap id = identity_map(sp);
  CHECK(scmap_check(id).ok);

  // x -> x^2 is not an sc-map (bdf pullback quotient degenerates)
  ScMap sq = id;
  sq.x_comps[0] = pow(variable(Block::X, 0, sp), Rational(2));
  ScMapVerdict v = scmap_check(sq);
  CHECK(!v.ok);
  CHECK(!v.failure.empty());
}

TEST_CASE("scmap_check: smoothed dilation and composition closure") {
  VarSpace sp(1, 1);
  // t -> t*(1 + cut(1/[t])) equals 2t for large |t| and t near 0
  Expr t = variable(Block::Theta, 0, sp);
  Expr scale = constant(Rational(1), sp) +
               cutoff(pow(smooth_norm(Block::Theta, sp), Rational(-1)), 0, Rational(1, 3),
                      Rational(2, 3));
  ScMap dil = identity_map(sp);
  dil.t_comps[0] = t * scale;
  ScMapVerdict v1 = scmap_check(dil);
  CHECK(v1.ok);
  CHECK(v1.h_min == doctest::Approx(0.5).epsilon(1e-6));

  ScMap twice = compose(dil, dil);
  CHECK(scmap_check(twice).ok);
}

TEST_CASE("factor_map_check: fiber-ball embedding in ball charts") {
  // j(y, yt) = (y / sqrt(1 - yt^2), yt) from the unit ball chart of B^{s+1}
  // restricted to |yt| < eps, into B^s x (-eps, eps); bdf on the source is
  // 1 - [(y, yt)], on the target 1 - [y'].
  VarSpace sp(2, 1);  // variables (y, yt) as x1, x2
  Expr y = variable(Block::X, 0, sp);
  Expr yt = variable(Block::X, 1, sp);
  Expr scale = pow_declared_positive(constant(Rational(1), sp) - pow(yt, Rational(2)),
                                     Rational(-1, 2));
  std::vector<Expr> comps = {y * scale, yt};
  // rays approach the joint sphere |(y, yt)| = 1 with |yt| < eps = 1/4;
  // the target bdf lives on the first component only
  std::vector<Vec> dirs;
  for (double wt : {-0.25, -0.1, 0.0, 0.1, 0.25}) {
    for (double sgn : {-1.0, 1.0}) {
      Vec w(2);
      w << sgn * std::sqrt(1.0 - wt * wt), wt;
      dirs.push_back(w);
    }
  }
  ScMapVerdict v =
      factor_map_check(comps, ChartKind::Ball, ChartKind::Ball, {0, 1}, {0}, {}, 24, dirs);
  CHECK(v.ok);
  CHECK(v.h_min > 0.9);  // h -> 1/(1 - yt^2) lies in [1, 16/15]
  CHECK(v.h_max < 1.1);
}

TEST_CASE("rank_compare: identity map has full rank on both sides") {
  VarSpace sp(2, 1);
  std::vector<Expr> f = {variable(Block::X, 0, sp), variable(Block::X, 1, sp)};
  auto dirs = sphere_directions(2, 6);
  for (const auto& w : dirs) {
    RankCompareResult r = rank_compare(f, w);
    CHECK(r.rank_scd == 2);
    CHECK(r.rank_tpsi == 2);
    CHECK(r.equal);
  }
}

TEST_CASE("rank_compare: constant h gives rank one on both sides") {
  // f = [y] * c for a constant vector c: h = rho f = c at the boundary
  VarSpace sp(2, 1);
  Expr nn = smooth_norm(Block::X, sp);
  std::vector<Expr> f = {Rational(2) * nn, Rational(1) * nn};
  RankCompareResult r = rank_compare(f, vec2(1.0, 0.0));
  CHECK(r.rank_scd == 1);
  CHECK(r.rank_tpsi == 1);
  CHECK(r.equal);
}

TEST_CASE("rank_compare: vanishing h triggers the precondition error") {
  VarSpace sp(2, 1);
  std::vector<Expr> f = {variable(Block::X, 0, sp), constant(Rational(0), sp)};
  CHECK_THROWS_AS(rank_compare(f, vec2(0.0, 1.0)), PreconditionError);
}

TEST_CASE("contact forms: vanishing cases and face mismatches") {
  // psi-face sample over x = 0 with no base motion
  TangentSample s1;
  s1.at.face = Face::Psi;
  s1.at.base = Vec::Zero(2);
  s1.at.fiber = vec2(1.0, 0.0);
  s1.dbase = Vec::Zero(2);
  s1.dfiber = vec2(0.0, 0.4);
  CHECK(contact_eval(ContactForm::AlphaPsi, s1) == 0.0);
  CHECK_THROWS_AS(contact_eval(ContactForm::AlphaE, s1), FaceMismatch);

  // e-face sample with base-only motion
  TangentSample s2;
  s2.at.face = Face::E;
  s2.at.base = vec2(0.0, 1.0);
  s2.at.fiber = vec2(0.3, 0.0);
  s2.dbase = vec2(1.0, 0.0);
  s2.dfiber = Vec::Zero(2);
  CHECK(contact_eval(ContactForm::AlphaE, s2) == 0.0);

  // non-Legendrian direction shows up as a nonzero value
  TangentSample s3 = s1;
  s3.dbase = vec2(1.0, 0.0);
  CHECK(std::abs(contact_eval(ContactForm::AlphaPsi, s3)) > 0.5);
}

TEST_CASE("corner blow-up form on orthogonal-block tangents") {
  // base direction in the x'' block, fiber direction in the xi' block
  TangentSample s;
  s.at.face = Face::PsiE;
  s.at.base = vec2(0.0, 1.0);
  s.at.fiber = vec2(1.0, 0.0);
  s.dbase = vec2(0.0, 0.0);
  s.dfiber = vec2(0.0, 0.0);
  s.tau = 0.01;
  s.dtau = 1.0;
  // eta1 = -base.fiber = 0, all variations vanish
  CHECK(contact_eval(ContactForm::AlphaPsiE, s) == 0.0);

  // moving the fiber direction towards the base block is detected
  TangentSample s4 = s;
  s4.dfiber = vec2(0.0, 0.7);
  CHECK(std::abs(contact_eval(ContactForm::AlphaPsiE, s4)) > 0.3);
}
