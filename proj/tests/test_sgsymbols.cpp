#include <cmath>
#include <random>

#include "doctest.h"
#include "sclag/sgsymbols.hpp"

using namespace sclag;

namespace {

VerifyOrderConfig quick_cfg(int depth = 2) {
  VerifyOrderConfig cfg;
  cfg.depth = depth;
  cfg.directions = 6;
  cfg.radii = 7;
  return cfg;
}

Amplitude amp(const std::string& text, const VarSpace& sp, Rational me, Rational mp) {
  return Amplitude{parse(text, sp), SGOrder{me, mp}, DensityConvention::Scalar};
}

}  // namespace

TEST_CASE("verify_order: generator amplitude passes at its declared order") {
  VarSpace sp(1, 1);
  Expr gen = pow(japanese_bracket(Block::X, sp), Rational(3, 2)) *
             pow(japanese_bracket(Block::Theta, sp), Rational(-1));
  Amplitude a{gen, SGOrder{Rational(3, 2), Rational(-1)}, DensityConvention::Scalar};
  OrderReport rep = verify_order(a, quick_cfg());
  CHECK(rep.ok);
  CHECK(rep.tightest_C > 0.5);
  CHECK(rep.tightest_C < 5.0);
}

TEST_CASE("verify_order: wrong declared order is rejected with a growth witness") {
  VarSpace sp(1, 1);
  Amplitude bad = amp("jbt()^2", sp, Rational(0), Rational(1));
  OrderReport rep = verify_order(bad, quick_cfg(1));
  CHECK(!rep.ok);
  REQUIRE(!rep.violations.empty());
  CHECK(rep.violations[0].slope > 0.5);
  CHECK(rep.violations[0].axis == "theta");
}

TEST_CASE("verify_order: the Klein-Gordon factor is an order (1,1) amplitude") {
  VarSpace sp(1, 1);
  Amplitude a = amp("x1*jbt()", sp, Rational(1), Rational(1));
  OrderReport rep = verify_order(a, quick_cfg(2));
  CHECK(rep.ok);
}

TEST_CASE("verify_order: order arithmetic under products") {
  VarSpace sp(1, 1);
  std::mt19937_64 rng(41);
  std::vector<Amplitude> pool = {
      amp("jbx()", sp, Rational(1), Rational(0)),
      amp("jbt()^(-1)", sp, Rational(0), Rational(-1)),
      amp("x1*jbt()", sp, Rational(1), Rational(1)),
      amp("jbx()^(1/2)*jbt()^(1/2)", sp, Rational(1, 2), Rational(1, 2)),
      amp("1 + jbx()^(-1)", sp, Rational(0), Rational(0)),
  };
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  for (int trial = 0; trial < 8; ++trial) {
    const Amplitude& a = pool[pick(rng)];
    const Amplitude& b = pool[pick(rng)];
    Amplitude prod{a.expr * b.expr, a.order + b.order, DensityConvention::Scalar};
    CHECK(verify_order(prod, quick_cfg(1)).ok);
  }
}

TEST_CASE("principal components: closed forms") {
  VarSpace sp(1, 1);
  // sigma^psi of <t> is |t|
  Amplitude a = amp("jbt()", sp, Rational(0), Rational(1));
  PrincipalParts p = principal_components(a);
  REQUIRE(p.sigma_psi().has_value());
  CHECK(p.sigma_psi()->eval({0.0, -2.5}) == doctest::Approx(2.5).epsilon(1e-12));

  // iterated component of x1 <t> is x1 |t|
  Amplitude kg = amp("x1*jbt()", sp, Rational(1), Rational(1));
  PrincipalParts pk = principal_components(kg);
  REQUIRE(pk.sigma_psie().has_value());
  CHECK(pk.sigma_psie()->eval({2.0, -1.0}) == doctest::Approx(2.0).epsilon(1e-12));  // x1|t|

  // decaying order-(0,0) amplitude has vanishing components
  Amplitude dec = amp("jbx()^(-1)*jbt()^(-1)", sp, Rational(0), Rational(0));
  PrincipalParts pd = principal_components(dec);
  REQUIRE(pd.sigma_e().has_value());
  CHECK(pd.sigma_e()->is_zero());
  REQUIRE(pd.sigma_psi().has_value());
  CHECK(pd.sigma_psi()->is_zero());
}

TEST_CASE("principal components: numeric fallback agrees with symbolic route") {
  VarSpace sp(1, 1);
  Amplitude a = amp("jbt()", sp, Rational(0), Rational(1));
  PrincipalParts p = principal_components(a);
  Vec eta(1), x(1);
  eta << 1.0;
  x << 0.3;
  CHECK(p.sigma_psi_at(x, eta) == doctest::Approx(1.0).epsilon(1e-9));

  // non-classical input is detected: sin(<t>) oscillates at fiber infinity
  Amplitude bad{sin(japanese_bracket(Block::Theta, sp)), SGOrder{Rational(0), Rational(0)},
                DensityConvention::Scalar};
  CHECK_THROWS_AS(principal_components(bad), NonClassicalError);
}

TEST_CASE("principal components of products multiply") {
  VarSpace sp(1, 1);
  std::mt19937_64 rng(17);
  std::vector<Amplitude> pool = {
      amp("jbx()", sp, Rational(1), Rational(0)),
      amp("jbt()", sp, Rational(0), Rational(1)),
      amp("x1*jbt()", sp, Rational(1), Rational(1)),
      amp("jbx()^(-1/2)", sp, Rational(-1, 2), Rational(0)),
  };
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  int done = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Amplitude& a = pool[pick(rng)];
    const Amplitude& b = pool[pick(rng)];
    Amplitude prod{a.expr * b.expr, a.order + b.order, DensityConvention::Scalar};
    auto pa = principal_components(a);
    auto pb = principal_components(b);
    auto pp = principal_components(prod);
    Vec omega(1), eta(1), x(1), th(1);
    omega << 1.0;
    eta << -1.0;
    x << u(rng);
    th << u(rng);
    const double lhs = pp.sigma_psi_at(x, eta);
    const double rhs = pa.sigma_psi_at(x, eta) * pb.sigma_psi_at(x, eta);
    CHECK(std::abs(lhs - rhs) <= 1e-8 * (1 + std::abs(rhs)));
    const double le = pp.sigma_e_at(omega, th);
    const double re = pa.sigma_e_at(omega, th) * pb.sigma_e_at(omega, th);
    CHECK(std::abs(le - re) <= 1e-8 * (1 + std::abs(re)));
    ++done;
  }
  CHECK(done == 20);
}

TEST_CASE("principal part: bi-homogeneous amplitudes are reproduced outside the cutoff") {
  VarSpace sp(1, 1);
  Expr nx = smooth_norm(Block::X, sp);
  Expr nt = smooth_norm(Block::Theta, sp);
  Amplitude a{nx * nt, SGOrder{Rational(1), Rational(1)}, DensityConvention::Scalar};
  PrincipalPartResult res = principal_part(a);
  // outside the cutoff support and radius 3, a == a_p pointwise
  for (double x : {9.0, 20.0, -15.0}) {
    for (double t : {10.0, -30.0}) {
      CHECK(res.residual.eval({x, t}) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
  CHECK(res.residual_order.ok);
}

TEST_CASE("principal part: residual of <x><t> is one order lower") {
  VarSpace sp(1, 1);
  Amplitude a = amp("jbx()*jbt()", sp, Rational(1), Rational(1));
  PrincipalPartResult res = principal_part(a);
  CHECK(res.residual_order.ok);
}

TEST_CASE("principal part: two cutoff scales differ by lower order") {
  VarSpace sp(1, 1);
  Amplitude a = amp("jbx()*jbt()", sp, Rational(1), Rational(1));
  PrincipalPartResult r1 = principal_part(a, Rational(1, 2), 0);
  PrincipalPartResult r2 = principal_part(a, Rational(1, 4), 0);
  Amplitude difference{r1.principal.expr - r2.principal.expr,
                       SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};
  OrderReport rep = verify_order(difference, quick_cfg(0));
  CHECK(rep.ok);
}

TEST_CASE("transform_principal: identity map leaves residuals at zero") {
  VarSpace sp(1, 1);
  Amplitude a = amp("jbx()*jbt()", sp, Rational(1), Rational(1));
  TransformPrincipalReport rep = transform_principal(a, identity_map(sp));
  CHECK(rep.ok);
  CHECK(rep.psi_residual.tightest_C < 1e-12);
  CHECK(rep.e_residual.tightest_C < 1e-12);
}

TEST_CASE("transform_principal: rotation invariance") {
  VarSpace sp(1, 2);
  // rotate the two fiber variables; <t> is invariant
  ScMap rot = identity_map(sp);
  Expr t1 = variable(Block::Theta, 0, sp), t2 = variable(Block::Theta, 1, sp);
  const Rational c(3, 5), s(4, 5);  // exact rotation
  rot.t_comps[0] = c * t1 - s * t2;
  rot.t_comps[1] = s * t1 + c * t2;
  Amplitude a{japanese_bracket(Block::Theta, sp), SGOrder{Rational(0), Rational(1)},
              DensityConvention::Scalar};
  TransformPrincipalReport rep = transform_principal(a, rot);
  CHECK(rep.ok);
  CHECK(rep.psi_residual.tightest_C < 1e-12);
}

TEST_CASE("transform_principal: smoothed fiber dilation keeps residual orders") {
  VarSpace sp(1, 1);
  ScMap dil = identity_map(sp);
  Expr t = variable(Block::Theta, 0, sp);
  Expr scale = constant(Rational(1), sp) +
               cutoff(pow(smooth_norm(Block::Theta, sp), Rational(-1)), 0, Rational(1, 3),
                      Rational(2, 3));
  dil.t_comps[0] = t * scale;
  Amplitude a = amp("jbt()", sp, Rational(0), Rational(1));
  TransformPrincipalReport rep = transform_principal(a, dil);
  CHECK(rep.ok);

  // non-product maps are rejected
  ScMap shear = identity_map(sp);
  shear.t_comps[0] = t + variable(Block::X, 0, sp);
  TransformPrincipalReport bad = transform_principal(a, shear);
  CHECK(!bad.ok);
  CHECK(bad.failure == "map is not of product form");
}
