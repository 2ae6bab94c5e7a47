#include "sclag/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sclag {

// ---- radial compactification ---------------------------------------------------

double iota_radial_profile(double r) {
  if (r >= 3.0) return 1.0 - 1.0 / r;
  const double a = 1.0 - 1.0 / std::sqrt(1.0 + r * r);
  if (r <= 2.0) return a;
  const double w = smooth_step(r - 2.0);
  return (1.0 - w) * a + w * (1.0 - 1.0 / r);
}

Vec iota(const Vec& x) {
  const double r = x.norm();
  if (r == 0.0) return Vec::Zero(x.size());
  return (iota_radial_profile(r) / r) * x;
}

Vec iota_inv(const Vec& y) {
  const double q = y.norm();
  if (q >= 1.0) throw DomainError("iota_inv: point outside the open ball");
  if (q == 0.0) return Vec::Zero(y.size());
  if (q >= 2.0 / 3.0) return (1.0 / (1.0 - q)) * (y / q);
  // invert the radial profile on [0, 3] (monotone)
  double lo = 0.0, hi = 3.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (iota_radial_profile(mid) < q)
      lo = mid;
    else
      hi = mid;
  }
  const double r = 0.5 * (lo + hi);
  return (r / q) * y;
}

// ---- bdf equivalence --------------------------------------------------------------

BdfReport bdf_equivalent(const Expr& rho1, const Expr& rho2, int directions,
                         std::vector<double> radii) {
  if (radii.empty()) radii = default_radii();
  const VarSpace& sp = rho1.space();
  auto dirs = sphere_directions(sp.d, directions);
  BdfReport rep;
  rep.limit_min = 1e300;
  rep.limit_max = -1e300;
  rep.equivalent = true;
  double worst_spread = 0, worst_slope = 0;
  for (const auto& w : dirs) {
    std::vector<double> ratios;
    std::vector<double> point(static_cast<size_t>(sp.total()), 1.0);
    for (double R : radii) {
      for (int i = 0; i < sp.d; ++i) point[static_cast<size_t>(i)] = R * w(i);
      const double r1 = rho1.eval(point);
      const double r2 = rho2.eval(point);
      if (!(r1 > 0) || !(r2 > 0)) {
        rep.equivalent = false;
        rep.detail = "non-positive sample";
        return rep;
      }
      ratios.push_back(r1 / r2);
    }
    double lo = *std::min_element(ratios.begin(), ratios.end());
    double hi = *std::max_element(ratios.begin(), ratios.end());
    worst_spread = std::max(worst_spread, hi / lo);
    SlopeFit fit = fit_log_slope(radii, ratios);
    worst_slope = std::max(worst_slope, std::abs(fit.slope));
    rep.limit_min = std::min(rep.limit_min, ratios.back());
    rep.limit_max = std::max(rep.limit_max, ratios.back());
  }
  rep.worst_spread = worst_spread;
  rep.worst_slope = worst_slope;
  // Bounded positive limit <=> flat log-log trend with positive samples.
  rep.equivalent = worst_slope < 0.05 && rep.limit_min > 1e-10;
  if (!rep.equivalent && rep.detail.empty()) {
    std::ostringstream os;
    os << "ratio trend slope " << worst_slope;
    rep.detail = os.str();
  }
  return rep;
}

// ---- scattering differential ---------------------------------------------------------

ScDifferentialReport sc_differential(const Expr& f, int directions, std::vector<double> radii) {
  if (radii.empty()) radii = default_radii();
  const VarSpace& sp = f.space();
  ScDifferentialReport rep;
  Expr norm = smooth_norm(Block::X, sp);
  auto g = grad(f, Block::X);
  std::vector<Expr> xs;
  for (int i = 0; i < sp.d; ++i) xs.push_back(variable(Block::X, i, sp));
  std::vector<Expr> xdotg_terms;
  for (int i = 0; i < sp.d; ++i)
    xdotg_terms.push_back(xs[static_cast<size_t>(i)] * g[static_cast<size_t>(i)]);
  Expr xdotg = add(xdotg_terms);
  rep.coefficients.radial_coeff = Rational(-1) * xdotg * pow(norm, Rational(-1));
  for (int j = 0; j < sp.d; ++j) {
    Expr tang =
        g[static_cast<size_t>(j)] - xs[static_cast<size_t>(j)] * xdotg * pow(norm, Rational(-2));
    rep.coefficients.tangential.push_back(tang);
  }

  // order check: |f| / <x> bounded along rays
  Expr jb = japanese_bracket(Block::X, sp);
  auto dirs = sphere_directions(sp.d, directions);
  bool order_ok = true;
  double worst_boundary = 0;
  for (const auto& w : dirs) {
    std::vector<double> point(static_cast<size_t>(sp.total()), 0.0);
    std::vector<double> ratios;
    for (double R : radii) {
      for (int i = 0; i < sp.d; ++i) point[static_cast<size_t>(i)] = R * w(i);
      ratios.push_back(std::abs(f.eval(point)) / jb.eval(point));
    }
    SlopeFit fit = fit_log_slope(radii, ratios);
    if (fit.used >= 2 && fit.slope > 0.05) order_ok = false;

    auto coeff_at = [&](double R) {
      for (int i = 0; i < sp.d; ++i) point[static_cast<size_t>(i)] = R * w(i);
      return rep.coefficients.radial_coeff.eval(point);
    };
    RayLimit lim = ray_limit(coeff_at, radii);
    rep.radial_limits.push_back(lim.value);
    worst_boundary = std::max(worst_boundary, std::abs(lim.value));
    for (const auto& tc : rep.coefficients.tangential) {
      auto tc_at = [&](double R) {
        for (int i = 0; i < sp.d; ++i) point[static_cast<size_t>(i)] = R * w(i);
        return tc.eval(point);
      };
      RayLimit tl = ray_limit(tc_at, radii);
      worst_boundary = std::max(worst_boundary, std::abs(tl.value));
    }
  }
  rep.order_ok = order_ok;
  rep.worst_boundary_value = worst_boundary;
  rep.vanishes_at_boundary = worst_boundary < 1e-6;
  return rep;
}

// ---- scattering maps --------------------------------------------------------------------

bool ScMap::product_form() const {
  for (const auto& e : x_comps)
    if (depends_on_block(e.node(), Block::Theta)) return false;
  for (const auto& e : t_comps)
    if (depends_on_block(e.node(), Block::X)) return false;
  return true;
}

ScMap identity_map(const VarSpace& sp) {
  ScMap m;
  m.space = sp;
  for (int i = 0; i < sp.d; ++i) m.x_comps.push_back(variable(Block::X, i, sp));
  for (int j = 0; j < sp.s; ++j) m.t_comps.push_back(variable(Block::Theta, j, sp));
  return m;
}

ScMap compose(const ScMap& outer, const ScMap& inner) {
  if (!(outer.space == inner.space)) throw std::invalid_argument("compose: space mismatch");
  ScMap m;
  m.space = inner.space;
  for (const auto& e : outer.x_comps)
    m.x_comps.push_back(subst(e, inner.x_comps, inner.t_comps, inner.space));
  for (const auto& e : outer.t_comps)
    m.t_comps.push_back(subst(e, inner.x_comps, inner.t_comps, inner.space));
  return m;
}

Expr pullback(const ScMap& psi, const Expr& a) {
  return subst(a, psi.x_comps, psi.t_comps, psi.space);
}

namespace {

struct FactorRayData {
  double h_min = 1e300, h_max = -1e300;
  double worst_slope = 0;
  std::string failure;
};

// h = rho_Y^{-1} Psi^* rho_Z along rays of a Euclidean factor.
FactorRayData euclidean_factor_rays(const std::function<Vec(const Vec&)>& map, int n,
                                    int directions, const std::vector<double>& radii) {
  FactorRayData out;
  auto dirs = sphere_directions(n, directions);
  for (const auto& w : dirs) {
    std::vector<double> hs;
    for (double R : radii) {
      const Vec y = R * w;
      const Vec z = map(y);
      const double ny = smooth_norm_profile(y.squaredNorm(), 0);
      const double nz = smooth_norm_profile(z.squaredNorm(), 0);
      hs.push_back(ny / nz);
    }
    for (double h : hs)
      if (!(h > 0) || !std::isfinite(h)) {
        std::ostringstream os;
        os << "non-positive h along direction (" << w.transpose() << ")";
        out.failure = os.str();
        return out;
      }
    SlopeFit fit = fit_log_slope(radii, hs);
    out.worst_slope = std::max(out.worst_slope, std::abs(fit.slope));
    out.h_min = std::min(out.h_min, hs.back());
    out.h_max = std::max(out.h_max, hs.back());
    if (std::abs(fit.slope) > 0.05 && out.failure.empty()) {
      std::ostringstream os;
      os << "unbounded bdf quotient along direction (" << w.transpose() << "), slope "
         << fit.slope;
      out.failure = os.str();
    }
  }
  return out;
}

}  // namespace

ScMapVerdict scmap_check(const ScMap& psi, int directions) {
  ScMapVerdict v;
  if (!psi.product_form()) {
    v.failure = "not of product form";
    return v;
  }
  const VarSpace& sp = psi.space;
  const auto radii = default_radii();

  auto map_x = [&](const Vec& y) {
    std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
    for (int i = 0; i < sp.d; ++i) p[static_cast<size_t>(i)] = y(i);
    Vec z(sp.d);
    for (int i = 0; i < sp.d; ++i) z(i) = psi.x_comps[static_cast<size_t>(i)].eval(p);
    return z;
  };
  auto map_t = [&](const Vec& y) {
    std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
    for (int j = 0; j < sp.s; ++j) p[static_cast<size_t>(sp.d + j)] = y(j);
    Vec z(sp.s);
    for (int j = 0; j < sp.s; ++j) z(j) = psi.t_comps[static_cast<size_t>(j)].eval(p);
    return z;
  };
  FactorRayData fx = euclidean_factor_rays(map_x, sp.d, directions, radii);
  FactorRayData ft = euclidean_factor_rays(map_t, sp.s, directions, radii);
  if (!fx.failure.empty() || !ft.failure.empty()) {
    v.failure = !fx.failure.empty() ? "X factor: " + fx.failure : "Y factor: " + ft.failure;
    return v;
  }
  v.h_min = std::min(fx.h_min, ft.h_min);
  v.h_max = std::max(fx.h_max, ft.h_max);
  v.worst_slope = std::max(fx.worst_slope, ft.worst_slope);

  // order preservation on the generator amplitude <x><t>
  Expr test_amp = japanese_bracket(Block::X, sp) * japanese_bracket(Block::Theta, sp);
  Expr pulled = pullback(psi, test_amp);
  bool order_ok = true;
  auto dirs_x = sphere_directions(sp.d, std::min(directions, 8));
  auto dirs_t = sphere_directions(sp.s, std::min(directions, 8));
  for (const auto& wx : dirs_x) {
    for (const auto& wt : dirs_t) {
      std::vector<double> ratios;
      for (double R : radii) {
        std::vector<double> p(static_cast<size_t>(sp.total()));
        for (int i = 0; i < sp.d; ++i) p[static_cast<size_t>(i)] = R * wx(i);
        for (int j = 0; j < sp.s; ++j) p[static_cast<size_t>(sp.d + j)] = R * wt(j);
        ratios.push_back(pulled.eval(p) / test_amp.eval(p));
      }
      SlopeFit fit = fit_log_slope(radii, ratios);
      if (std::abs(fit.slope) > 0.1) order_ok = false;
    }
  }
  v.order_preserved = order_ok;
  v.ok = order_ok && v.h_min > 1e-10;
  if (!v.ok && v.failure.empty()) v.failure = "order preservation failed";
  return v;
}

ScMapVerdict factor_map_check(const std::vector<Expr>& comps, ChartKind source, ChartKind target,
                              std::vector<int> bdf_vars, std::vector<int> bdf_comps,
                              const std::vector<double>& frozen, int directions,
                              const std::vector<Vec>& custom_dirs) {
  ScMapVerdict v;
  if (comps.empty()) {
    v.failure = "empty map";
    return v;
  }
  const VarSpace& sp = comps[0].space();
  const int n = sp.d;
  const int m = static_cast<int>(comps.size());
  if (bdf_vars.empty())
    for (int i = 0; i < n; ++i) bdf_vars.push_back(i);
  if (bdf_comps.empty())
    for (int i = 0; i < m; ++i) bdf_comps.push_back(i);

  auto eval_map = [&](const Vec& y) {
    std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
    for (size_t i = 0; i < frozen.size() && i < static_cast<size_t>(n); ++i) p[i] = frozen[i];
    for (size_t a = 0; a < bdf_vars.size(); ++a)
      p[static_cast<size_t>(bdf_vars[a])] = y(static_cast<int>(a));
    Vec z(m);
    for (int i = 0; i < m; ++i) z(i) = comps[static_cast<size_t>(i)].eval(p);
    return z;
  };
  auto bdf_of = [&](const Vec& z, ChartKind chart, const std::vector<int>& sel) {
    double ss = 0;
    for (int i : sel) ss += z(i) * z(i);
    // Euclidean charts use the smooth norm; in ball charts the boundary
    // sphere |y| = 1 lies inside radius 3, so the plain norm is the bdf.
    return chart == ChartKind::Euclidean ? 1.0 / smooth_norm_profile(ss, 0)
                                         : 1.0 - std::sqrt(ss);
  };

  const int nb = static_cast<int>(bdf_vars.size());
  auto dirs = custom_dirs.empty() ? sphere_directions(nb, directions) : custom_dirs;
  const std::vector<double> params = default_radii();  // ball rays use radius 1 - 1/P
  double worst_slope = 0, h_min = 1e300, h_max = -1e300;
  for (const auto& w : dirs) {
    std::vector<double> hs;
    for (double P : params) {
      Vec y = source == ChartKind::Euclidean ? Vec(P * w) : Vec((1.0 - 1.0 / P) * w);
      const Vec z = eval_map(y);
      double rho_y;
      {
        double ss = 0;
        for (int i = 0; i < nb; ++i) ss += y(i) * y(i);
        rho_y = source == ChartKind::Euclidean ? 1.0 / smooth_norm_profile(ss, 0)
                                               : 1.0 - std::sqrt(ss);
      }
      const double rho_z = bdf_of(z, target, bdf_comps);
      if (!(rho_z > 0) || !(rho_y > 0)) {
        v.failure = "bdf left its chart range";
        return v;
      }
      hs.push_back(rho_z / rho_y);
    }
    SlopeFit fit = fit_log_slope(params, hs);
    worst_slope = std::max(worst_slope, std::abs(fit.slope));
    h_min = std::min(h_min, hs.back());
    h_max = std::max(h_max, hs.back());
  }
  v.worst_slope = worst_slope;
  v.h_min = h_min;
  v.h_max = h_max;
  v.order_preserved = true;
  v.ok = worst_slope < 0.05 && h_min > 1e-10;
  if (!v.ok) v.failure = "bdf quotient not positively bounded";
  return v;
}

// ---- rank comparison -----------------------------------------------------------------

RankCompareResult rank_compare(const std::vector<Expr>& f, const Vec& direction,
                               std::vector<double> radii) {
  if (radii.empty()) radii = default_radii();
  RankCompareResult out;
  const VarSpace& sp = f[0].space();
  const int s = sp.d;  // map variables live in the x block by convention
  const int d = static_cast<int>(f.size());
  const Vec w = direction / direction.norm();

  auto value_at = [&](const Vec& y) {
    std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
    for (int i = 0; i < s; ++i) p[static_cast<size_t>(i)] = y(i);
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = f[static_cast<size_t>(i)].eval(p);
    return v;
  };

  // precondition: rho |f| has a nonzero limit along the ray
  auto hnorm_at = [&](double R) {
    return value_at(R * w).norm() / smooth_norm_profile(R * R, 0);
  };
  RayLimit hn = ray_limit(hnorm_at, radii);
  out.h_norm = hn.value;
  if (!(hn.value > 1e-8))
    throw PreconditionError("rank_compare: rho|f| vanishes along the ray");

  std::vector<std::vector<Expr>> grads;
  for (const auto& comp : f) grads.push_back(grad(comp, Block::X));
  auto tau = tangent_basis(w);

  // scattering-differential coefficient matrix at the boundary
  Mat A(d, s);
  for (int i = 0; i < d; ++i) {
    for (int c = 0; c < s; ++c) {
      auto entry_at = [&](double R) {
        std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
        for (int k = 0; k < s; ++k) p[static_cast<size_t>(k)] = R * w(k);
        if (c == 0) {
          double xg = 0;
          for (int k = 0; k < s; ++k)
            xg += p[static_cast<size_t>(k)] *
                  grads[static_cast<size_t>(i)][static_cast<size_t>(k)].eval(p);
          return -xg / smooth_norm_profile(R * R, 0);
        }
        double tg = 0;
        for (int k = 0; k < s; ++k)
          tg += tau[static_cast<size_t>(c - 1)](k) *
                grads[static_cast<size_t>(i)][static_cast<size_t>(k)].eval(p);
        return tg;
      };
      A(i, c) = ray_limit(entry_at, radii).value;
    }
  }
  out.rank_scd = svd_rank(A);

  // T(iota o f) in the chart (rho, u) by finite differences along the ray
  auto psi_at = [&](double rho, const Vec& u) {
    const Vec dir = sphere_chart(w, tau, u);
    return iota(value_at(dir / rho));
  };
  Mat T(d, s);
  for (int c = 0; c < s; ++c) {
    for (int i = 0; i < d; ++i) {
      auto entry_at = [&](double R) {
        const double rho = 1.0 / R;
        if (c == 0) {
          const double h = rho * 1e-2;
          Vec u = Vec::Zero(s - 1);
          return (psi_at(rho + h, u)(i) - psi_at(rho - h, u)(i)) / (2 * h);
        }
        const double hu = 1e-4;
        Vec up = Vec::Zero(s - 1), um = Vec::Zero(s - 1);
        up(c - 1) = hu;
        um(c - 1) = -hu;
        return (psi_at(rho, up)(i) - psi_at(rho, um)(i)) / (2 * hu);
      };
      T(i, c) = ray_limit(entry_at, radii).value;
    }
  }
  out.rank_tpsi = svd_rank(T);
  out.equal = out.rank_scd == out.rank_tpsi;
  return out;
}

// ---- compact points and contact forms ---------------------------------------------------

Vec CompactPoint::embed() const {
  const int d = static_cast<int>(base.size());
  Vec out(d + static_cast<int>(fiber.size()));
  switch (face) {
    case Face::Interior:
      out << iota(base), iota(fiber);
      break;
    case Face::E:
      out << base, iota(fiber);
      break;
    case Face::Psi:
      out << iota(base), fiber;
      break;
    case Face::PsiE:
      out << base, fiber;
      break;
  }
  return out;
}

double CompactPoint::distance(const CompactPoint& a, const CompactPoint& b) {
  if (a.face != b.face) return 2.0 + (a.embed() - b.embed()).norm();
  return (a.embed() - b.embed()).norm();
}

double contact_eval(ContactForm form, const TangentSample& v) {
  const Face face = v.at.face;
  switch (form) {
    case ContactForm::AlphaPsi:
      if (face != Face::Psi) throw FaceMismatch("alpha_psi requires a psi-face sample");
      return v.at.fiber.dot(v.dbase);
    case ContactForm::AlphaE:
      if (face != Face::E) throw FaceMismatch("alpha_e requires an e-face sample");
      return -v.at.base.dot(v.dfiber);
    case ContactForm::ScAlphaPsi:
      if (face != Face::Psi && face != Face::PsiE)
        throw FaceMismatch("sc alpha_psi requires a psi- or corner sample");
      return v.at.fiber.dot(v.dbase);
    case ContactForm::ScAlphaE:
      if (face != Face::E && face != Face::PsiE)
        throw FaceMismatch("sc alpha_e requires an e- or corner sample");
      return -v.at.base.dot(v.dfiber);
    case ContactForm::AlphaPsiE: {
      if (face != Face::PsiE) throw FaceMismatch("alpha_psie requires a corner sample");
      if (!(v.tau > 0)) throw FaceMismatch("alpha_psie needs blow-up data tau > 0");
      const double eta1 = -v.at.base.dot(v.at.fiber);
      return -0.5 * eta1 * v.dtau / v.tau +
             0.5 * (v.at.fiber.dot(v.dbase) - v.at.base.dot(v.dfiber));
    }
  }
  return 0;
}

}  // namespace sclag
