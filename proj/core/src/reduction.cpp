#include "sclag/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <sstream>

namespace sclag {

LagrangianOrders order_normalize(Rational m_e, Rational m_psi, Rational d, Rational s,
                                 Rational e) {
  LagrangianOrders out;
  const Rational half(1, 2), quarter(1, 4);
  out.mu_psi = m_psi + s * half + e * half;
  out.mu_e = m_e - s * half + e * half;
  out.psi_order = out.mu_psi - d * quarter;
  out.e_order = -(out.mu_e + d * quarter);
  return out;
}

namespace {

// remap theta variables into a smaller space after dropping `drop` indices
Expr remap_without(const Expr& e, const std::vector<int>& drop, const VarSpace& target,
                   const std::vector<Expr>& drop_values) {
  const VarSpace& src = e.space();
  std::vector<Expr> tsub(static_cast<size_t>(src.s));
  int newj = 0;
  for (int j = 0; j < src.s; ++j) {
    auto it = std::find(drop.begin(), drop.end(), j);
    if (it != drop.end()) {
      tsub[static_cast<size_t>(j)] = drop_values[static_cast<size_t>(it - drop.begin())];
    } else {
      tsub[static_cast<size_t>(j)] = variable(Block::Theta, newj++, target);
    }
  }
  std::vector<Expr> xsub;
  for (int i = 0; i < src.d; ++i) xsub.push_back(variable(Block::X, i, target));
  return subst(e, xsub, tsub, target);
}

VarSpace space_without(const VarSpace& src, const std::vector<int>& drop) {
  VarSpace out(src.d, src.s - static_cast<int>(drop.size()));
  if (!src.theta_bounds.empty()) {
    out.theta_bounds.clear();
    for (int j = 0; j < src.s; ++j) {
      if (std::find(drop.begin(), drop.end(), j) != drop.end()) continue;
      out.theta_bounds.push_back(src.theta_bound(j));
    }
  }
  return out;
}

std::vector<Vec> psi_face_patch(const PhaseFunction& phi, const CriticalPoint& p,
                                const EquivalenceConfig& cfg) {
  // local Lagrangian patch around p: re-solve from perturbed seeds
  std::vector<Vec> cloud;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < cfg.patch_samples; ++i) {
    CriticalPoint seed = p;
    for (int k = 0; k < seed.x.size(); ++k) seed.x(k) += cfg.patch_radius * gauss(rng);
    if (p.face == Face::E || p.face == Face::PsiE) seed.x.normalize();
    for (int k = 0; k < seed.theta.size(); ++k)
      seed.theta(k) += 0.5 * cfg.patch_radius * gauss(rng);
    try {
      CriticalPoint q = polish_critical_point(phi, seed, cfg.solve);
      cloud.push_back(lambda_phi(phi, q).point.embed());
    } catch (const ComputeError&) {
      continue;
    }
  }
  return cloud;
}

}  // namespace

// ---- add_smooth ------------------------------------------------------------------------

SurgeryResult add_smooth(const PhaseFunction& phi, const Amplitude& a, const Expr& r,
                         bool rotate_amplitude, Rational excess) {
  Amplitude r_amp{r, SGOrder{Rational(0), Rational(0)}, DensityConvention::Scalar};
  // boundedness of r itself is the requirement; derivatives of smooth
  // bounded perturbations like sin(x1) gain no decay
  VerifyOrderConfig vcfg;
  vcfg.depth = 0;
  vcfg.directions = 6;
  OrderReport rep = verify_order(r_amp, vcfg);
  if (!rep.ok)
    throw std::invalid_argument("add_smooth: the perturbation must have order (0,0)");

  SurgeryResult out;
  out.phase = PhaseFunction{phi.expr + r, phi.domain};
  out.amplitude = a;
  if (rotate_amplitude) out.amp_phase_shift = Rational(-1) * r;
  const VarSpace& sp = phi.space();
  out.order_before = OrderRecord{a.order.m_e, a.order.m_psi, Rational(sp.s), excess};
  out.order_after = out.order_before;
  out.provenance = "add_smooth";

  // boundary critical set and Lagrangian samples must be unchanged
  CriticalManifold ca = critical_solve(phi);
  CriticalManifold cb = critical_solve(out.phase);
  std::vector<Vec> la, lb;
  for (const auto& q : ca.points)
    if (q.face != Face::Interior) la.push_back(lambda_phi(phi, q).point.embed());
  for (const auto& q : cb.points)
    if (q.face != Face::Interior) lb.push_back(lambda_phi(out.phase, q).point.embed());
  if (!la.empty() || !lb.empty()) {
    const double hd = hausdorff(la, lb);
    if (hd > 1e-9) {
      std::ostringstream os;
      os << "add_smooth: boundary Lagrangian moved by " << hd;
      throw ComputeError(os.str());
    }
  }
  return out;
}

// ---- increase_fiber ---------------------------------------------------------------------

SurgeryResult increase_fiber(const PhaseFunction& phi, const Amplitude& a, Rational c,
                             Rational excess) {
  if (c.is_zero())
    throw std::invalid_argument("increase_fiber: the quadratic coefficient must be nonzero");
  const VarSpace& sp = phi.space();
  VarSpace nsp = sp.with_bounded_theta(-0.5, 0.5);

  auto lift = [&](const Expr& e) { return rebase(e, nsp); };
  Expr t = variable(Block::Theta, sp.s, nsp);
  // brackets over the original blocks
  Expr jbx = japanese_bracket(Block::X, nsp);
  std::vector<Expr> tsq;
  for (int j = 0; j < sp.s; ++j) tsq.push_back(pow(variable(Block::Theta, j, nsp), Rational(2)));
  Expr jbt_old = sqrt(constant(Rational(1), nsp) + add(tsq));

  SurgeryResult out;
  out.phase = PhaseFunction{lift(phi.expr) + c * jbx * jbt_old * pow(t, Rational(2)),
                            phi.domain};
  // bump equal to 1 at t = 0, supported in |t| < 0.45
  Expr bump = cutoff(pow(t, Rational(2)), 0, Rational(9, 100), Rational(1, 5));
  // normalization keeping the represented distribution fixed to leading order
  Expr carrier = lift(a.expr) * bump * sqrt(jbx) * sqrt(jbt_old);
  out.amplitude = Amplitude{
      carrier, SGOrder{a.order.m_e + Rational(1, 2), a.order.m_psi + Rational(1, 2)},
      a.convention};
  out.scalar_factor = Complex{std::sqrt(std::abs(c.to_double()) / M_PI), 0};
  out.maslov_factor = Complex{1, 0};
  out.order_before = OrderRecord{a.order.m_e, a.order.m_psi, Rational(sp.s), excess};
  out.order_after = OrderRecord{a.order.m_e + Rational(1, 2), a.order.m_psi - Rational(1, 2),
                                Rational(sp.s + 1), excess};
  out.provenance = "increase_fiber";
  return out;
}

// ---- reduce_fiber -----------------------------------------------------------------------

SurgeryResult reduce_fiber(const PhaseFunction& phi, const Amplitude& a,
                           const CriticalPoint& p0, const ReduceFiberConfig& cfg,
                           std::optional<OrderRecord> before) {
  const VarSpace& sp = phi.space();
  ScHessianRecord rec = sc_hessian(phi, p0);
  if (rec.rank == 0)
    throw ComputeError("reduce_fiber: the fiber Hessian has rank zero at the point");

  // coordinate fiber Hessian of the face expression at p0
  Expr face_expr = phi.expr;
  if (p0.face == Face::E || p0.face == Face::PsiE)
    face_expr = *homogeneous_limit(face_expr, Block::X, Rational(1));
  if (p0.face == Face::Psi || p0.face == Face::PsiE)
    face_expr = *homogeneous_limit(face_expr, Block::Theta, Rational(1));
  auto gt = grad(face_expr, Block::Theta);
  std::vector<std::vector<Expr>> htt(static_cast<size_t>(sp.s));
  for (int i = 0; i < sp.s; ++i) {
    htt[static_cast<size_t>(i)].resize(static_cast<size_t>(sp.s));
    for (int j = 0; j < sp.s; ++j)
      htt[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          diff(gt[static_cast<size_t>(i)], Block::Theta, j);
  }
  std::vector<double> pt(static_cast<size_t>(sp.total()));
  for (int i = 0; i < sp.d; ++i) pt[static_cast<size_t>(i)] = p0.x(i);
  {
    // assemble the fiber slots exactly as the face systems do
    std::vector<int> unbounded;
    for (int j = 0; j < sp.s; ++j)
      if (!sp.theta_bounded(j)) unbounded.push_back(j);
    if (p0.face == Face::Psi || p0.face == Face::PsiE) {
      for (size_t aidx = 0; aidx < unbounded.size(); ++aidx)
        pt[static_cast<size_t>(sp.d + unbounded[aidx])] = p0.theta(static_cast<int>(aidx));
      int bpos = static_cast<int>(unbounded.size());
      for (int j = 0; j < sp.s; ++j)
        if (sp.theta_bounded(j)) pt[static_cast<size_t>(sp.d + j)] = p0.theta(bpos++);
    } else {
      for (int j = 0; j < sp.s; ++j) pt[static_cast<size_t>(sp.d + j)] = p0.theta(j);
    }
  }
  Mat H(sp.s, sp.s);
  for (int i = 0; i < sp.s; ++i)
    for (int j = 0; j < sp.s; ++j)
      H(i, j) = htt[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(pt);

  // pivoted selection of r coordinates: greedy symmetric pivoting on the
  // Schur complements, skipping near-radial coordinates on psi-type faces
  const int r = rec.rank;
  std::vector<int> candidates;
  for (int j = 0; j < sp.s; ++j) {
    if ((p0.face == Face::Psi || p0.face == Face::PsiE) && !sp.theta_bounded(j)) {
      // exclude the coordinate most aligned with the radial direction
      continue;
    }
    candidates.push_back(j);
  }
  if (p0.face == Face::Psi || p0.face == Face::PsiE) {
    std::vector<int> unbounded;
    for (int j = 0; j < sp.s; ++j)
      if (!sp.theta_bounded(j)) unbounded.push_back(j);
    int radial = unbounded[0];
    double best = -1;
    for (size_t aidx = 0; aidx < unbounded.size(); ++aidx) {
      const double c = std::abs(p0.theta(static_cast<int>(aidx)));
      if (c > best) {
        best = c;
        radial = unbounded[aidx];
      }
    }
    for (int j : unbounded)
      if (j != radial) candidates.push_back(j);
    std::sort(candidates.begin(), candidates.end());
  }

  Mat S = H;  // working copy for Schur pivoting on candidate indices
  std::vector<int> chosen;
  std::vector<int> avail = candidates;
  for (int step = 0; step < r; ++step) {
    int best = -1;
    double bestval = 0;
    for (int j : avail) {
      if (std::abs(S(j, j)) > bestval) {
        bestval = std::abs(S(j, j));
        best = j;
      }
    }
    if (best < 0 || bestval < 1e-12)
      throw ComputeError("reduce_fiber: no well-conditioned coordinate split");
    chosen.push_back(best);
    avail.erase(std::remove(avail.begin(), avail.end(), best), avail.end());
    const double piv = S(best, best);
    for (int i = 0; i < sp.s; ++i)
      for (int j = 0; j < sp.s; ++j)
        if (i != best && j != best) S(i, j) -= S(i, best) * S(best, j) / piv;
  }
  std::sort(chosen.begin(), chosen.end());

  Mat A0(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) A0(i, j) = H(chosen[static_cast<size_t>(i)], chosen[static_cast<size_t>(j)]);
  Eigen::JacobiSVD<Mat> svdA(A0);
  const double cond = svdA.singularValues()(0) / svdA.singularValues()(r - 1);
  if (cond > cfg.cond_max) throw ComputeError("reduce_fiber: split is ill-conditioned");
  if (r > cfg.max_rank)
    throw ComputeError("reduce_fiber: closed-form solve supports rank <= 2 blocks");

  // closed-form critical solve of the block on the FULL phase (not the face
  // limit): A(x, y') y'' = -c(x, y')
  const VarSpace nsp = space_without(sp, chosen);
  // gradient and Hessian of the full phase in the chosen block at y'' = 0
  std::vector<Expr> cvec, Avec;
  auto gt_full = grad(phi.expr, Block::Theta);
  for (int i = 0; i < r; ++i) {
    Expr gi = gt_full[static_cast<size_t>(chosen[static_cast<size_t>(i)])];
    std::vector<Expr> tz(static_cast<size_t>(sp.s));
    for (int j = 0; j < sp.s; ++j) {
      auto it = std::find(chosen.begin(), chosen.end(), j);
      tz[static_cast<size_t>(j)] =
          it == chosen.end() ? Expr() : constant(Rational(0), sp);
    }
    cvec.push_back(subst(gi, {}, tz, sp));
    for (int j = 0; j < r; ++j) {
      Expr aij = diff(gi, Block::Theta, chosen[static_cast<size_t>(j)]);
      Avec.push_back(subst(aij, {}, tz, sp));
    }
  }
  auto Aij = [&](int i, int j) { return Avec[static_cast<size_t>(i * r + j)]; };

  bool origin_solves = true;
  for (const auto& ci : cvec) origin_solves = origin_solves && ci.is_zero();

  if (!origin_solves) {
    // general affine-quadratic case: the block Hessian must not depend on y''
    std::vector<double> shifted = pt;
    for (int trial = 0; trial < 3; ++trial) {
      for (int i = 0; i < r; ++i)
        shifted[static_cast<size_t>(sp.d + chosen[static_cast<size_t>(i)])] =
            pt[static_cast<size_t>(sp.d + chosen[static_cast<size_t>(i)])] +
            0.17 * (trial + 1) * (i + 1);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const double v = htt[static_cast<size_t>(chosen[static_cast<size_t>(i)])]
                              [static_cast<size_t>(chosen[static_cast<size_t>(j)])]
                                  .eval(shifted);
          if (std::abs(v - A0(i, j)) > cfg.quad_tol * (1 + std::abs(A0(i, j))))
            throw ComputeError(
                "reduce_fiber: the phase is not quadratic in the selected block");
        }
    }
  }

  std::vector<Expr> solved(static_cast<size_t>(r));  // y''_0 over the source space
  Expr detA = [&]() {
    if (r == 1) return Aij(0, 0);
    return Aij(0, 0) * Aij(1, 1) - Aij(0, 1) * Aij(1, 0);
  }();
  if (origin_solves) {
    for (int i = 0; i < r; ++i) solved[static_cast<size_t>(i)] = constant(Rational(0), sp);
  } else {
    Expr inv_det = pow_declared_positive(pow(detA, Rational(2)), Rational(-1)) * detA;
    if (r == 1) {
      solved[0] = Rational(-1) * cvec[0] * inv_det;
    } else {
      solved[0] = Rational(-1) * (Aij(1, 1) * cvec[0] - Aij(0, 1) * cvec[1]) * inv_det;
      solved[1] = Rational(-1) * (Aij(0, 0) * cvec[1] - Aij(1, 0) * cvec[0]) * inv_det;
    }
  }

  // verify the closed form against Newton at the base point
  {
    Vec seed = Vec::Zero(r);
    auto F = [&](const Vec& y) {
      std::vector<double> q = pt;
      for (int i = 0; i < r; ++i)
        q[static_cast<size_t>(sp.d + chosen[static_cast<size_t>(i)])] = y(i);
      Vec v(r);
      for (int i = 0; i < r; ++i)
        v(i) = gt_full[static_cast<size_t>(chosen[static_cast<size_t>(i)])].eval(q);
      return v;
    };
    auto J = [&](const Vec& y) {
      std::vector<double> q = pt;
      for (int i = 0; i < r; ++i)
        q[static_cast<size_t>(sp.d + chosen[static_cast<size_t>(i)])] = y(i);
      Mat m(r, r);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          m(i, j) = diff(gt_full[static_cast<size_t>(chosen[static_cast<size_t>(i)])],
                         Block::Theta, chosen[static_cast<size_t>(j)])
                        .eval(q);
      return m;
    };
    NewtonResult nr = newton_solve(F, J, seed, 1e-13, cfg.solve.max_iter);
    if (!nr.converged) throw ComputeError("reduce_fiber: implicit solve diverged");
    for (int i = 0; i < r; ++i) {
      const double closed = solved[static_cast<size_t>(i)].eval(pt);
      if (std::abs(closed - nr.point(i)) > 1e-9 * (1 + std::abs(nr.point(i))))
        throw ComputeError("reduce_fiber: closed-form solve mismatch");
    }
  }

  // reduced phase and transported amplitude over the smaller space
  std::vector<Expr> drop_vals_src = solved;
  Expr phi_src = [&]() {
    std::vector<Expr> tz(static_cast<size_t>(sp.s));
    for (int j = 0; j < sp.s; ++j) {
      auto it = std::find(chosen.begin(), chosen.end(), j);
      tz[static_cast<size_t>(j)] =
          it == chosen.end() ? Expr() : drop_vals_src[static_cast<size_t>(it - chosen.begin())];
    }
    return subst(phi.expr, {}, tz, sp);
  }();
  Expr a_src = [&]() {
    std::vector<Expr> tz(static_cast<size_t>(sp.s));
    for (int j = 0; j < sp.s; ++j) {
      auto it = std::find(chosen.begin(), chosen.end(), j);
      tz[static_cast<size_t>(j)] =
          it == chosen.end() ? Expr() : drop_vals_src[static_cast<size_t>(it - chosen.begin())];
    }
    return subst(a.expr, {}, tz, sp);
  }();
  // |det A|^{-1/2} carried symbolically so the transported amplitude is a
  // genuine amplitude on the reduced space
  Expr det_factor = pow_declared_positive(pow(detA, Rational(2)), Rational(-1, 4));
  Expr det_src = [&]() {
    std::vector<Expr> tz(static_cast<size_t>(sp.s));
    for (int j = 0; j < sp.s; ++j) {
      auto it = std::find(chosen.begin(), chosen.end(), j);
      tz[static_cast<size_t>(j)] =
          it == chosen.end() ? Expr() : drop_vals_src[static_cast<size_t>(it - chosen.begin())];
    }
    return subst(det_factor, {}, tz, sp);
  }();

  std::vector<Expr> zeros_new(static_cast<size_t>(r), constant(Rational(0), nsp));
  SurgeryResult out;
  out.phase = PhaseFunction{remap_without(phi_src, chosen, nsp, zeros_new), phi.domain};
  Expr carrier = remap_without(a_src * det_src, chosen, nsp, zeros_new);
  out.amplitude =
      Amplitude{carrier,
                SGOrder{a.order.m_e - Rational(r, 2), a.order.m_psi - Rational(r, 2)},
                a.convention};
  Signature blk = symmetric_signature(A0);
  const double mas = 0.25 * M_PI * blk.sgn();
  out.maslov_factor = Complex{std::cos(mas), std::sin(mas)};
  out.scalar_factor = Complex{std::pow(2 * M_PI, 0.5 * r), 0};
  out.order_before =
      before ? *before : OrderRecord{a.order.m_e, a.order.m_psi, Rational(sp.s), Rational(0)};
  out.order_after = OrderRecord{out.order_before.m_e - Rational(r, 2),
                                out.order_before.m_psi + Rational(r, 2),
                                out.order_before.s - Rational(r), out.order_before.e};
  std::ostringstream prov;
  prov << "reduce_fiber: rank " << r << ", sgn " << blk.sgn() << ", block {";
  for (int j : chosen) prov << " t" << (j + 1);
  prov << " }";
  out.provenance = prov.str();
  return out;
}

// ---- eliminate_excess ------------------------------------------------------------------

std::optional<std::vector<int>> find_excess_split(const PhaseFunction& phi, int excess,
                                                  const CriticalSolveConfig& cfg) {
  if (excess <= 0) return std::nullopt;
  const VarSpace& sp = phi.space();
  CriticalManifold cm = critical_solve(phi, {}, cfg);
  std::vector<const CriticalPoint*> interior;
  for (const auto& p : cm.points)
    if (p.face == Face::Interior) interior.push_back(&p);
  if (interior.empty()) return std::nullopt;

  // candidate blocks: coordinates along which the phase gradient vanishes
  // identically on the critical set and lambda stays constant
  auto gt = grad(phi.expr, Block::Theta);
  std::vector<int> vars(static_cast<size_t>(sp.s));
  for (int j = 0; j < sp.s; ++j) vars[static_cast<size_t>(j)] = j;

  std::vector<int> current;
  std::function<std::optional<std::vector<int>>(int)> search =
      [&](int start) -> std::optional<std::vector<int>> {
    if (static_cast<int>(current.size()) == excess) {
      for (const auto* p : interior) {
        LagrangianSample base = lambda_phi(phi, *p);
        for (double shift : {0.4, -0.7}) {
          CriticalPoint moved = *p;
          for (int j : current) moved.theta(j) += shift;
          CriticalPoint polished;
          try {
            polished = polish_critical_point(phi, moved, cfg);
          } catch (const ComputeError&) {
            return std::nullopt;
          }
          // the move must stay inside the fiber of lambda
          if ((polished.theta - moved.theta).norm() > 1e-7) return std::nullopt;
          LagrangianSample l2 = lambda_phi(phi, polished);
          if (CompactPoint::distance(base.point, l2.point) > 1e-7) return std::nullopt;
        }
      }
      return current;
    }
    for (int j = start; j < sp.s; ++j) {
      current.push_back(j);
      auto r = search(j + 1);
      if (r) return r;
      current.pop_back();
    }
    return std::nullopt;
  };
  return search(0);
}

SurgeryResult eliminate_excess(const PhaseFunction& phi, const Amplitude& a,
                               const std::vector<int>& fiber_vars,
                               const EliminateExcessConfig& cfg) {
  const VarSpace& sp = phi.space();
  const int e = static_cast<int>(fiber_vars.size());
  if (e == 0) throw std::invalid_argument("eliminate_excess: empty fiber block");

  // the phase must not depend on the fiber block (after freezing, gradients
  // along it must vanish identically on samples)
  for (int j : fiber_vars)
    if (depends_on(phi.expr.node(), Block::Theta, j))
      throw ComputeError("eliminate_excess: fibration split not aligned with coordinates");

  // amplitude must factor across the split
  std::vector<Expr> fiber_factors, base_factors;
  auto classify = [&](const NodePtr& n) {
    bool on_fiber = false, off_fiber = false;
    for (int j : fiber_vars)
      if (depends_on(n, Block::Theta, j)) on_fiber = true;
    for (int j = 0; j < sp.s; ++j) {
      if (std::find(fiber_vars.begin(), fiber_vars.end(), j) != fiber_vars.end()) continue;
      if (depends_on(n, Block::Theta, j)) off_fiber = true;
    }
    if (depends_on_block(n, Block::X)) off_fiber = true;
    if (on_fiber && off_fiber)
      throw ComputeError("eliminate_excess: amplitude does not factor across the split");
    (on_fiber ? fiber_factors : base_factors).emplace_back(n, sp);
  };
  if (a.expr.node()->kind == NodeKind::Prod) {
    for (const auto& k : a.expr.node()->kids) classify(k);
  } else {
    classify(a.expr.node());
  }
  Expr fiber_profile = fiber_factors.empty() ? constant(Rational(1), sp) : mul(fiber_factors);
  Expr base_part = base_factors.empty() ? constant(Rational(1), sp) : mul(base_factors);

  // integrate the fiber profile (adaptive panels on each axis)
  double integral = 1.0;
  {
    std::vector<double> pt(static_cast<size_t>(sp.total()), 0.0);
    std::function<double(size_t)> integ = [&](size_t k) -> double {
      if (k == fiber_vars.size()) return fiber_profile.eval(pt);
      const int j = fiber_vars[k];
      double lo = -cfg.integration_halfwidth, hi = cfg.integration_halfwidth;
      if (sp.theta_bounded(j)) {
        auto b = sp.theta_bound(j);
        lo = b.first;
        hi = b.second;
      }
      const GaussRule& rule = gauss_rule(16);
      // fixed composite rule; the profiles are smooth and decaying
      const int panels = 64;
      double s = 0;
      for (int pnl = 0; pnl < panels; ++pnl) {
        const double plo = lo + (hi - lo) * pnl / panels;
        const double phi_ = lo + (hi - lo) * (pnl + 1) / panels;
        const double mid = 0.5 * (plo + phi_), half = 0.5 * (phi_ - plo);
        for (size_t q = 0; q < rule.nodes.size(); ++q) {
          pt[static_cast<size_t>(sp.d + j)] = mid + half * rule.nodes[q];
          s += half * rule.weights[q] * integ(k + 1);
        }
      }
      return s;
    };
    integral = integ(0);
  }

  const VarSpace nsp = space_without(sp, fiber_vars);
  std::vector<Expr> zeros_new(fiber_vars.size(), constant(Rational(0), nsp));
  SurgeryResult out;
  out.phase = PhaseFunction{remap_without(phi.expr, fiber_vars, nsp, zeros_new), phi.domain};
  out.amplitude = Amplitude{remap_without(base_part, fiber_vars, nsp, zeros_new),
                            SGOrder{a.order.m_e, a.order.m_psi}, a.convention};
  out.scalar_factor = Complex{integral, 0};
  out.maslov_factor = Complex{1, 0};
  out.order_before =
      OrderRecord{a.order.m_e, a.order.m_psi, Rational(sp.s), Rational(e)};
  out.order_after = OrderRecord{a.order.m_e, a.order.m_psi + Rational(e),
                                Rational(sp.s - e), Rational(0)};
  out.provenance = "eliminate_excess";
  return out;
}

// ---- equivalence decision -------------------------------------------------------------------

EquivalenceVerdict equivalence_decide(const PhaseFunction& phi1, const PhaseFunction& phi2,
                                      const CriticalPoint& p1, const CriticalPoint& p2,
                                      const EquivalenceConfig& cfg) {
  EquivalenceVerdict v;
  const VarSpace& s1 = phi1.space();
  const VarSpace& s2 = phi2.space();
  if (s1.d != s2.d) v.failed_preconditions.push_back("base dimensions differ");
  if (s1.s != s2.s) v.failed_preconditions.push_back("fiber dimensions differ");

  CriticalPoint q1, q2;
  try {
    q1 = polish_critical_point(phi1, p1, cfg.solve);
    q2 = polish_critical_point(phi2, p2, cfg.solve);
  } catch (const ComputeError&) {
    v.failed_preconditions.push_back("a base point is not critical");
    return v;
  }

  CriticalManifold c1 = critical_solve(phi1, {}, cfg.solve);
  CriticalManifold c2 = critical_solve(phi2, {}, cfg.solve);
  if (!c1.clean_on_samples || !c2.clean_on_samples)
    v.failed_preconditions.push_back("a phase is not clean on samples");
  if (c1.excess != c2.excess) v.failed_preconditions.push_back("excesses differ");

  LagrangianSample l1 = lambda_phi(phi1, q1);
  LagrangianSample l2 = lambda_phi(phi2, q2);
  v.lambda_distance = CompactPoint::distance(l1.point, l2.point);
  if (v.lambda_distance > cfg.lambda_tol)
    v.failed_preconditions.push_back("lambda values differ at the base points");

  auto patch1 = psi_face_patch(phi1, q1, cfg);
  auto patch2 = psi_face_patch(phi2, q2, cfg);
  if (patch1.size() >= 3 && patch2.size() >= 3) {
    v.patch_hausdorff = hausdorff(patch1, patch2);
    if (v.patch_hausdorff > cfg.hausdorff_tol)
      v.failed_preconditions.push_back("local Lagrangian patches differ");
  }

  if (!v.failed_preconditions.empty()) return v;
  v.applicable = true;
  v.signature_1 = sc_hessian(phi1, q1).signature;
  v.signature_2 = sc_hessian(phi2, q2).signature;
  v.equivalent = v.signature_1 == v.signature_2;
  return v;
}

}  // namespace sclag
