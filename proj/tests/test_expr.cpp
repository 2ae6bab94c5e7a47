#include <cmath>
#include <random>

#include "doctest.h"
#include "sclag/expr.hpp"

using namespace sclag;

namespace {

// Independent oracle: central finite differences with one Richardson step.
double central_fd(const Expr& e, Block b, int idx, std::vector<double> p, double h = 1e-5) {
  const size_t k = static_cast<size_t>(b == Block::X ? idx : e.space().d + idx);
  auto at = [&](double v) {
    std::vector<double> q = p;
    q[k] = v;
    return e.eval(q);
  };
  const double x = p[k];
  const double c1 = (at(x + h) - at(x - h)) / (2 * h);
  const double c2 = (at(x + h / 2) - at(x - h / 2)) / h;
  return (4 * c2 - c1) / 3;
}

double rel_err(double got, double want) { return std::abs(got - want) / (1 + std::abs(want)); }

// Random expression generator over the declared-safe grammar.
Expr random_expr(std::mt19937_64& rng, const VarSpace& sp, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 3 : 9);
  std::uniform_int_distribution<int> coin(0, 1);
  switch (pick(rng)) {
    case 0: {
      std::uniform_int_distribution<int> num(-4, 4);
      return constant(Rational(num(rng), 1 + coin(rng)), sp);
    }
    case 1:
    case 2: {
      const bool xblk = coin(rng) == 0;
      std::uniform_int_distribution<int> vi(0, (xblk ? sp.d : sp.s) - 1);
      return variable(xblk ? Block::X : Block::Theta, vi(rng), sp);
    }
    case 3:
      return coin(rng) ? japanese_bracket(Block::X, sp) : japanese_bracket(Block::Theta, sp);
    case 4:
      return random_expr(rng, sp, depth - 1) + random_expr(rng, sp, depth - 1);
    case 5:
      return random_expr(rng, sp, depth - 1) * random_expr(rng, sp, depth - 1);
    case 6: {
      std::uniform_int_distribution<int> e(2, 3);
      return pow(random_expr(rng, sp, depth - 1), Rational(e(rng)));
    }
    case 7: {
      // fractional / negative powers on safe positive bases
      Expr base = constant(Rational(1), sp) + pow(random_expr(rng, sp, depth - 1), Rational(2));
      std::uniform_int_distribution<int> e(-2, 1);
      return pow(base, Rational(2 * e(rng) + 1, 2));
    }
    case 8:
      return sin(random_expr(rng, sp, depth - 1));
    default:
      return coin(rng) ? smooth_norm(Block::X, sp) : cos(random_expr(rng, sp, depth - 1));
  }
}

std::vector<double> random_point(std::mt19937_64& rng, const VarSpace& sp, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> p(static_cast<size_t>(sp.total()));
  for (auto& v : p) v = u(rng);
  return p;
}

}  // namespace

TEST_CASE("parse: basic structure") {
  VarSpace sp(1, 1);
  Expr e = parse("x1*t1", sp);
  REQUIRE(e.node()->kind == NodeKind::Prod);
  REQUIRE(e.node()->kids.size() == 2);
  CHECK(e.node()->kids[0]->kind == NodeKind::Var);
  CHECK(e.node()->kids[1]->kind == NodeKind::Var);

  // Klein-Gordon-type factor
  Expr kg = parse("x1*jbt()", sp);
  CHECK(kg.node()->kind == NodeKind::Prod);
  std::vector<double> pt = {2.0, 0.0};
  CHECK(kg.eval(pt) == doctest::Approx(2.0));
}

TEST_CASE("parse: errors carry positions") {
  VarSpace sp(1, 1);
  CHECK_THROWS_AS(parse("x1*", sp), ParseError);
  try {
    parse("x1*", sp);
  } catch (const ParseError& pe) {
    CHECK(pe.position == 2);  // the dangling '*' (column 3)
  }
  CHECK_THROWS_AS(parse("x2*t1", sp), ParseError);     // unknown variable
  CHECK_THROWS_AS(parse("jbx(x1)", sp), ParseError);   // arity mismatch
  CHECK_THROWS_AS(parse("exp()", sp), ParseError);     // arity mismatch
  CHECK_THROWS_AS(parse("x1 + (t1", sp), ParseError);  // unbalanced
}

TEST_CASE("eval: trivial and derived values") {
  VarSpace sp11(1, 1);
  std::vector<double> p = {2.0, 3.0};
  CHECK(parse("x1*t1", sp11).eval(p) == doctest::Approx(6.0));

  CHECK(parse("jbt()", sp11).eval({0.0, 0.0}) == doctest::Approx(1.0));

  VarSpace sp21(2, 1);
  // direct arithmetic oracle: <(3,4)> = sqrt(1+9+16)
  CHECK(parse("jbx()", sp21).eval({3.0, 4.0, 0.0}) == doctest::Approx(std::sqrt(26.0)));
}

TEST_CASE("smooth norm equals |x| outside radius 3 and is smooth inside") {
  VarSpace sp(2, 1);
  Expr n = smooth_norm(Block::X, sp);
  CHECK(n.eval({3.0, 4.0, 0.0}) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(n.eval({10.0, 0.0, 0.0}) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(n.eval({0.0, 0.0, 0.0}) > 0.0);
  // strict mode rejects the interpolation region
  CHECK_THROWS_AS(n.eval({0.5, 0.5, 0.0}, EvalMode::Strict), DomainError);
  CHECK_NOTHROW(n.eval({4.0, 0.0, 0.0}, EvalMode::Strict));
  // derivative continuity across the blend joints
  for (double r : {1.9, 2.0, 2.1, 2.9, 3.0, 3.1}) {
    const double fd = central_fd(n, Block::X, 0, {r, 0.0, 0.0}, 1e-6);
    const double sym = diff(n, Block::X, 0).eval({r, 0.0, 0.0});
    CHECK(rel_err(sym, fd) < 1e-6);
  }
}

TEST_CASE("diff: structural results") {
  VarSpace sp(1, 1);
  Expr e = parse("x1*t1", sp);
  CHECK(diff(e, Block::Theta, 0) == parse("x1", sp));

  VarSpace sp2(1, 2);
  Expr h0 = parse("t1^2 + t2^2", sp2);
  auto H = hessian(h0, Block::Theta);
  CHECK(H[0][0] == constant(Rational(2), sp2));
  CHECK(H[1][1] == constant(Rational(2), sp2));
  CHECK(H[0][1].is_zero());

  VarSpace spd(2, 2);
  Expr fourier = parse("x1*t1 + x2*t2", spd);
  auto g = grad(fourier, Block::Theta);
  CHECK(g[0] == parse("x1", spd));
  CHECK(g[1] == parse("x2", spd));
}

TEST_CASE("diff: japanese bracket chain rule") {
  VarSpace sp(1, 2);
  Expr jb = japanese_bracket(Block::Theta, sp);
  Expr d0 = diff(jb, Block::Theta, 0);
  // t1 / <t>, checked pointwise
  for (double a : {-1.5, 0.0, 0.7}) {
    for (double b : {-0.3, 2.0}) {
      std::vector<double> p = {0.0, a, b};
      const double want = a / std::sqrt(1 + a * a + b * b);
      CHECK(d0.eval(p) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("second derivative of x1*<t> against finite differences") {
  // d^2/dt_j dt_k (x1 <t>) = x1 (delta_jk <t>^2 - t_j t_k)/<t>^3
  VarSpace sp(1, 2);
  Expr e = parse("x1*jbt()", sp);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> p = {u(rng), u(rng), u(rng)};
    for (int j = 0; j < 2; ++j) {
      Expr dj = diff(e, Block::Theta, j);
      for (int k = 0; k < 2; ++k) {
        Expr djk = diff(dj, Block::Theta, k);
        const double t1 = p[1], t2 = p[2];
        const double jb = std::sqrt(1 + t1 * t1 + t2 * t2);
        const double tj = j == 0 ? t1 : t2, tk = k == 0 ? t1 : t2;
        const double want = p[0] * ((j == k ? jb * jb : 0.0) - tj * tk) / (jb * jb * jb);
        CHECK(rel_err(djk.eval(p), want) < 1e-10);
        CHECK(rel_err(central_fd(dj, Block::Theta, k, p), djk.eval(p)) < 1e-6);
      }
    }
  }
}

TEST_CASE("hessian of x1*<t> at t=0 is x1*I") {
  VarSpace sp(1, 2);
  Expr e = parse("x1*jbt()", sp);
  auto H = hessian(e, Block::Theta);
  std::vector<double> p = {1.7, 0.0, 0.0};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(H[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(p) ==
            doctest::Approx(i == j ? 1.7 : 0.0).epsilon(1e-12));
}

TEST_CASE("property: symbolic derivative matches central differences") {
  VarSpace sp(2, 2);
  std::mt19937_64 rng(20240601);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Expr e = random_expr(rng, sp, 3);
    const bool xblk = trial % 2 == 0;
    std::uniform_int_distribution<int> vi(0, 1);
    const Block b = xblk ? Block::X : Block::Theta;
    const int idx = vi(rng);
    Expr de = diff(e, b, idx);
    auto p = random_point(rng, sp);
    double sym, fd;
    try {
      sym = de.eval(p);
      fd = central_fd(e, b, idx, p);
    } catch (const DomainError&) {
      continue;
    }
    if (!std::isfinite(sym) || !std::isfinite(fd) || std::abs(fd) > 1e6) continue;
    CHECK(rel_err(sym, fd) < 1e-6);
    ++checked;
  }
  CHECK(checked > 150);
}

TEST_CASE("property: parse(print(e)) is the identity") {
  VarSpace sp(2, 2);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    Expr e = random_expr(rng, sp, 3);
    Expr back = parse(e.str(), sp);
    CHECK(back == e);
  }
  // derived nodes round-trip through the extended forms
  Expr n = smooth_norm(Block::X, sp);
  Expr dn = diff(diff(n, Block::X, 0), Block::X, 1);
  CHECK(parse(dn.str(), sp) == dn);
  Expr c = cutoff(pow(japanese_bracket(Block::X, sp), Rational(-1)), 0, Rational(1, 8),
                  Rational(1, 4));
  CHECK(parse(c.str(), sp) == c);
  CHECK(parse(diff(c, Block::X, 0).str(), sp) == diff(c, Block::X, 0));
}

TEST_CASE("eval is deterministic") {
  VarSpace sp(2, 2);
  std::mt19937_64 rng(5);
  Expr e = random_expr(rng, sp, 4);
  auto p = random_point(rng, sp);
  const double v0 = e.eval(p);
  for (int i = 0; i < 5; ++i) CHECK(e.eval(p) == v0);
}

TEST_CASE("substitution composes expressions") {
  VarSpace sp(1, 1);
  Expr e = parse("x1*jbt()", sp);
  // t1 -> 2*t1
  Expr two_t = parse("2*t1", sp);
  Expr s = subst(e, {}, {two_t}, sp);
  std::vector<double> p = {1.5, 0.7};
  CHECK(s.eval(p) == doctest::Approx(1.5 * std::sqrt(1 + 4 * 0.49)));
}

TEST_CASE("homogeneous limits extract principal behavior") {
  VarSpace sp(1, 2);
  Expr jb = japanese_bracket(Block::Theta, sp);
  auto lim = homogeneous_limit(jb, Block::Theta, Rational(1));
  REQUIRE(lim.has_value());
  // limit is |t| = sqrt(t1^2+t2^2)
  CHECK(lim->eval({0.0, 3.0, 4.0}) == doctest::Approx(5.0).epsilon(1e-12));

  // bounded term drops out of the x-limit
  Expr e = parse("x1*t1 + sin(x1)", sp);
  auto lx = homogeneous_limit(e, Block::X, Rational(1));
  REQUIRE(lx.has_value());
  CHECK(lx->eval({1.0, 2.0, 0.0}) == doctest::Approx(2.0));

  // order-0 limit of something that grows has no value
  CHECK(!homogeneous_limit(jb, Block::Theta, Rational(0)).has_value());

  // smooth norm behaves like the bracket at infinity
  Expr nn = smooth_norm(Block::Theta, sp);
  auto ln = homogeneous_limit(nn, Block::Theta, Rational(1));
  REQUIRE(ln.has_value());
  CHECK(ln->eval({0.0, 0.6, 0.8}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bounded fiber variables do not scale in face limits") {
  VarSpace sp(1, 2);
  sp = VarSpace(1, 1).with_bounded_theta(-0.5, 0.5);  // t2 bounded
  Expr e = parse("x1*t1 + jbx()*t2^2", sp);
  auto lt = homogeneous_limit(e, Block::Theta, Rational(1));
  REQUIRE(lt.has_value());
  // only x1*t1 scales in theta; the t2 term sits at degree 0
  CHECK(lt->eval({3.0, 2.0, 0.4}) == doctest::Approx(6.0));
}
