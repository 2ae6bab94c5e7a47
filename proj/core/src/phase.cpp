#include "sclag/phase.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace sclag {

namespace {

std::vector<double> log_radii(int count, double r_max) {
  std::vector<double> rs;
  for (int i = 0; i < count; ++i)
    rs.push_back(std::pow(10.0, std::log10(r_max) * i / std::max(1, count - 1)));
  return rs;
}

// ---- face systems -------------------------------------------------------------

// The face-reduced critical system of a phase: the full fiber gradient of
// the face principal part, with sphere-normalized coordinates on the faces
// at infinity.  Bounded product-chart fiber variables are carried along
// unchanged on every face.
struct FaceSystem {
  Face face;
  const PhaseFunction* phi = nullptr;
  Expr fexpr;  // phi / phi^psi / phi^e / phi^psie
  std::vector<Expr> gx, gt;
  std::vector<std::vector<Expr>> hxt, htt;  // hxt[i][j] = d2/dx_i dt_j, htt sym
  std::vector<int> unbounded;
  int d = 0, s = 0, su = 0, sb = 0;
  bool base_sphere = false, fiber_sphere = false;

  int base_chart_dim() const { return base_sphere ? d - 1 : d; }
  int fiber_chart_dim() const { return (fiber_sphere ? su - 1 : su) + sb; }
  int chart_dim() const { return base_chart_dim() + fiber_chart_dim(); }
};

FaceSystem make_face_system(const PhaseFunction& phi, Face face) {
  FaceSystem fs;
  fs.face = face;
  fs.phi = &phi;
  const VarSpace& sp = phi.space();
  fs.d = sp.d;
  fs.s = sp.s;
  for (int j = 0; j < sp.s; ++j)
    if (!sp.theta_bounded(j)) fs.unbounded.push_back(j);
  fs.su = static_cast<int>(fs.unbounded.size());
  fs.sb = sp.s - fs.su;
  fs.base_sphere = face == Face::E || face == Face::PsiE;
  fs.fiber_sphere = face == Face::Psi || face == Face::PsiE;

  std::optional<Expr> fe = phi.expr;
  if (face == Face::E || face == Face::PsiE) {
    fe = homogeneous_limit(*fe, Block::X, Rational(1));
    if (!fe) throw ComputeError("phase has no closed-form base principal part");
  }
  if (face == Face::Psi || face == Face::PsiE) {
    fe = homogeneous_limit(*fe, Block::Theta, Rational(1));
    if (!fe) throw ComputeError("phase has no closed-form fiber principal part");
  }
  fs.fexpr = *fe;
  fs.gx = grad(fs.fexpr, Block::X);
  fs.gt = grad(fs.fexpr, Block::Theta);
  fs.hxt.resize(static_cast<size_t>(sp.d));
  for (int i = 0; i < sp.d; ++i) {
    fs.hxt[static_cast<size_t>(i)].resize(static_cast<size_t>(sp.s));
    for (int j = 0; j < sp.s; ++j)
      fs.hxt[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          diff(fs.gt[static_cast<size_t>(j)], Block::X, i);
  }
  fs.htt.resize(static_cast<size_t>(sp.s));
  for (int j = 0; j < sp.s; ++j) {
    fs.htt[static_cast<size_t>(j)].resize(static_cast<size_t>(sp.s));
    for (int k = 0; k < sp.s; ++k)
      fs.htt[static_cast<size_t>(j)][static_cast<size_t>(k)] =
          diff(fs.gt[static_cast<size_t>(j)], Block::Theta, k);
  }
  return fs;
}

// Full coordinate vector from face state (base, fiber).
std::vector<double> assemble_point(const FaceSystem& fs, const Vec& base, const Vec& fiber) {
  std::vector<double> p(static_cast<size_t>(fs.d + fs.s), 0.0);
  for (int i = 0; i < fs.d; ++i) p[static_cast<size_t>(i)] = base(i);
  if (fs.fiber_sphere) {
    // fiber = (eta on S^{su-1}) ++ bounded values
    for (int a = 0; a < fs.su; ++a)
      p[static_cast<size_t>(fs.d + fs.unbounded[static_cast<size_t>(a)])] = fiber(a);
    int bpos = fs.su;
    for (int j = 0; j < fs.s; ++j)
      if (fs.phi->space().theta_bounded(j)) p[static_cast<size_t>(fs.d + j)] = fiber(bpos++);
  } else {
    for (int j = 0; j < fs.s; ++j) p[static_cast<size_t>(fs.d + j)] = fiber(j);
  }
  return p;
}

Vec face_F(const FaceSystem& fs, const Vec& base, const Vec& fiber) {
  auto p = assemble_point(fs, base, fiber);
  Vec F(fs.s);
  for (int j = 0; j < fs.s; ++j) F(j) = fs.gt[static_cast<size_t>(j)].eval(p);
  return F;
}

Mat face_J(const FaceSystem& fs, const Vec& base, const Vec& fiber,
           const std::vector<Vec>& tau_base, const std::vector<Vec>& tau_fiber) {
  auto p = assemble_point(fs, base, fiber);
  Mat J(fs.s, fs.chart_dim());
  int col = 0;
  if (fs.base_sphere) {
    for (const auto& tb : tau_base) {
      for (int j = 0; j < fs.s; ++j) {
        double v = 0;
        for (int i = 0; i < fs.d; ++i)
          v += fs.hxt[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(p) * tb(i);
        J(j, col) = v;
      }
      ++col;
    }
  } else {
    for (int i = 0; i < fs.d; ++i) {
      for (int j = 0; j < fs.s; ++j)
        J(j, col) = fs.hxt[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(p);
      ++col;
    }
  }
  if (fs.fiber_sphere) {
    for (const auto& tf : tau_fiber) {
      for (int j = 0; j < fs.s; ++j) {
        double v = 0;
        for (int a = 0; a < fs.su; ++a)
          v += fs.htt[static_cast<size_t>(fs.unbounded[static_cast<size_t>(a)])]
                     [static_cast<size_t>(j)]
                   .eval(p) *
               tf(a);
        J(j, col) = v;
      }
      ++col;
    }
    for (int j2 = 0; j2 < fs.s; ++j2) {
      if (!fs.phi->space().theta_bounded(j2)) continue;
      for (int j = 0; j < fs.s; ++j)
        J(j, col) = fs.htt[static_cast<size_t>(j2)][static_cast<size_t>(j)].eval(p);
      ++col;
    }
  } else {
    for (int j2 = 0; j2 < fs.s; ++j2) {
      for (int j = 0; j < fs.s; ++j)
        J(j, col) = fs.htt[static_cast<size_t>(j2)][static_cast<size_t>(j)].eval(p);
      ++col;
    }
  }
  return J;
}

struct FaceState {
  Vec base, fiber;
};

// One damped Newton run with chart recentering.
std::optional<CriticalPoint> newton_face(const FaceSystem& fs, FaceState st,
                                         const CriticalSolveConfig& cfg) {
  const VarSpace& sp = fs.phi->space();
  double res = face_F(fs, st.base, st.fiber).norm();
  if (fs.chart_dim() == 0) {
    // zero-dimensional chart (products of S^0): the seed either is or is
    // not a critical point
    if (res > cfg.residual_accept) return std::nullopt;
    CriticalPoint cp;
    cp.face = fs.face;
    cp.x = st.base;
    cp.theta = st.fiber;
    cp.residual = res;
    cp.jac_rank = 0;
    return cp;
  }
  for (int it = 0; it < cfg.max_iter && res > cfg.newton_tol; ++it) {
    std::vector<Vec> tau_base, tau_fiber;
    if (fs.base_sphere) tau_base = tangent_basis(st.base);
    if (fs.fiber_sphere && fs.su >= 2)
      tau_fiber = tangent_basis(st.fiber.head(fs.su));
    Vec F = face_F(fs, st.base, st.fiber);
    Mat J = face_J(fs, st.base, st.fiber, tau_base, tau_fiber);
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    Vec step = svd.solve(F);
    double lambda = 1.0;
    for (int halv = 0; halv < 40; ++halv) {
      FaceState next = st;
      int col = 0;
      if (fs.base_sphere) {
        Vec nb = st.base;
        for (int a = 0; a < fs.d - 1; ++a) nb -= lambda * step(col + a) * tau_base[static_cast<size_t>(a)];
        next.base = nb / nb.norm();
        col += fs.d - 1;
      } else {
        for (int i = 0; i < fs.d; ++i) next.base(i) = st.base(i) - lambda * step(col + i);
        col += fs.d;
      }
      if (fs.fiber_sphere) {
        Vec eta = st.fiber.head(fs.su);
        if (fs.su >= 2) {
          for (int a = 0; a < fs.su - 1; ++a)
            eta -= lambda * step(col + a) * tau_fiber[static_cast<size_t>(a)];
          eta.normalize();
          col += fs.su - 1;
        }
        next.fiber.head(fs.su) = eta;
        for (int b = 0; b < fs.sb; ++b) {
          double v = st.fiber(fs.su + b) - lambda * step(col + b);
          next.fiber(fs.su + b) = v;
        }
        col += fs.sb;
      } else {
        for (int j = 0; j < fs.s; ++j) next.fiber(j) = st.fiber(j) - lambda * step(col + j);
      }
      const double rn = face_F(fs, next.base, next.fiber).norm();
      if (rn <= res || rn < cfg.newton_tol) {
        st = next;
        res = rn;
        break;
      }
      lambda *= 0.5;
      if (halv == 39) it = cfg.max_iter;  // stagnated; accept/reject below
    }
  }
  if (res > cfg.residual_accept) return std::nullopt;

  // clamp bounded fiber variables into their chart interval
  if (fs.fiber_sphere) {
    int bpos = fs.su;
    for (int j = 0; j < fs.s; ++j) {
      if (!sp.theta_bounded(j)) continue;
      const auto bnd = sp.theta_bound(j);
      if (st.fiber(bpos) < bnd.first || st.fiber(bpos) > bnd.second) return std::nullopt;
      ++bpos;
    }
  } else if (fs.face == Face::Interior || fs.face == Face::E) {
    for (int j = 0; j < fs.s; ++j) {
      if (!sp.theta_bounded(j)) continue;
      const auto bnd = sp.theta_bound(j);
      if (st.fiber(j) < bnd.first || st.fiber(j) > bnd.second) return std::nullopt;
    }
  }

  // cone restriction on fiber directions at infinity
  if (fs.fiber_sphere && fs.phi->domain) {
    const auto& cone = *fs.phi->domain;
    const double c = std::abs(st.fiber.head(fs.su).dot(cone.theta_axis));
    if (c < cone.min_cos) return std::nullopt;
  }

  CriticalPoint cp;
  cp.face = fs.face;
  cp.x = st.base;
  cp.theta = st.fiber;
  cp.residual = res;
  std::vector<Vec> tb, tf;
  if (fs.base_sphere) tb = tangent_basis(st.base);
  if (fs.fiber_sphere && fs.su >= 2) tf = tangent_basis(st.fiber.head(fs.su));
  cp.jac_rank = svd_rank(face_J(fs, st.base, st.fiber, tb, tf));
  return cp;
}

std::vector<FaceState> default_seeds(const FaceSystem& fs, const CriticalSolveConfig& cfg) {
  const VarSpace& sp = fs.phi->space();
  std::vector<FaceState> seeds;
  std::vector<double> lattice;
  for (int i = -cfg.seed_refine; i <= cfg.seed_refine; ++i)
    lattice.push_back(cfg.seed_span * i / cfg.seed_refine);

  std::vector<Vec> bases;
  if (fs.base_sphere) {
    for (const auto& w : sphere_directions(fs.d, cfg.sphere_seeds)) bases.push_back(w);
  } else {
    // lattice in R^d
    std::vector<Vec> acc = {Vec::Zero(fs.d)};
    for (int i = 0; i < fs.d; ++i) {
      std::vector<Vec> next;
      for (const auto& b : acc)
        for (double v : lattice) {
          Vec nb = b;
          nb(i) = v;
          next.push_back(nb);
        }
      acc = std::move(next);
    }
    bases = std::move(acc);
  }

  std::vector<Vec> fibers;
  if (fs.fiber_sphere) {
    std::vector<Vec> etas = sphere_directions(fs.su, cfg.sphere_seeds);
    std::vector<Vec> bvals = {Vec::Zero(fs.sb)};
    if (fs.sb > 0) {
      bvals.clear();
      std::vector<Vec> acc = {Vec::Zero(fs.sb)};
      int bpos = 0;
      for (int j = 0; j < fs.s; ++j) {
        if (!sp.theta_bounded(j)) continue;
        const auto bnd = sp.theta_bound(j);
        std::vector<Vec> next;
        for (const auto& b : acc)
          for (double frac : {-0.5, 0.0, 0.5}) {
            Vec nb = b;
            nb(bpos) = 0.5 * (bnd.first + bnd.second) + frac * 0.45 * (bnd.second - bnd.first);
            next.push_back(nb);
          }
        acc = std::move(next);
        ++bpos;
      }
      bvals = std::move(acc);
    }
    for (const auto& e : etas)
      for (const auto& b : bvals) {
        Vec f(fs.su + fs.sb);
        f.head(fs.su) = e;
        if (fs.sb > 0) f.tail(fs.sb) = b;
        fibers.push_back(f);
      }
  } else {
    std::vector<Vec> acc = {Vec::Zero(fs.s)};
    for (int j = 0; j < fs.s; ++j) {
      std::vector<Vec> next;
      std::vector<double> vals = lattice;
      if (sp.theta_bounded(j)) {
        const auto bnd = sp.theta_bound(j);
        vals = {0.5 * (bnd.first + bnd.second), 0.5 * (bnd.first + bnd.second) + 0.3 * (bnd.second - bnd.first)};
      }
      for (const auto& b : acc)
        for (double v : vals) {
          Vec nb = b;
          nb(j) = v;
          next.push_back(nb);
        }
      acc = std::move(next);
    }
    fibers = std::move(acc);
  }

  for (const auto& b : bases)
    for (const auto& f : fibers) seeds.push_back(FaceState{b, f});
  return seeds;
}

bool same_point(const CriticalPoint& a, const CriticalPoint& b, double tol) {
  if (a.face != b.face) return false;
  return (a.x - b.x).norm() + (a.theta - b.theta).norm() < tol;
}

}  // namespace

// ---- validation ------------------------------------------------------------------

PhaseVerdict validate_phase(const PhaseFunction& phi, const PhaseValidateConfig& cfg) {
  PhaseVerdict v;
  const VarSpace& sp = phi.space();
  Amplitude as_amp{phi.expr, SGOrder{Rational(1), Rational(1)}, DensityConvention::Scalar};
  VerifyOrderConfig ocfg;
  ocfg.depth = cfg.order_depth;
  ocfg.directions = 6;
  OrderReport order = verify_order(as_amp, ocfg);
  v.order_ok = order.ok;
  if (!order.ok) {
    v.detail = "order (1,1) estimate failed";
    return v;
  }

  auto gx = grad(phi.expr, Block::X);
  auto gt = grad(phi.expr, Block::Theta);
  Expr jbx = japanese_bracket(Block::X, sp);
  Expr jbt = japanese_bracket(Block::Theta, sp);

  std::vector<int> unbounded;
  for (int j = 0; j < sp.s; ++j)
    if (!sp.theta_bounded(j)) unbounded.push_back(j);
  const int su = static_cast<int>(unbounded.size());

  auto dirs_x = sphere_directions(sp.d, cfg.directions);
  auto dirs_t = sphere_directions(su, cfg.directions);
  // always probe the coordinate axes; degeneracies tend to sit on them
  for (int j = 0; j < su; ++j) {
    Vec e = Vec::Zero(su);
    e(j) = 1.0;
    dirs_t.push_back(e);
    dirs_t.push_back(-e);
  }
  for (int i = 0; i < sp.d; ++i) {
    Vec e = Vec::Zero(sp.d);
    e(i) = 1.0;
    dirs_x.push_back(e);
    dirs_x.push_back(-e);
  }
  auto radii_t = log_radii(cfg.radii, cfg.r_max);
  // the inequality constrains all base points, including x = 0
  std::vector<double> radii_x = {0.0, 0.3};
  for (double r : log_radii(cfg.radii, cfg.r_max)) radii_x.push_back(r);

  double cmin = 1e300;
  std::optional<std::vector<double>> witness;
  for (const auto& wt : dirs_t) {
    if (phi.domain) {
      Vec eta(su);
      for (int a = 0; a < su; ++a) eta(a) = wt(a);
      if (std::abs(eta.dot(phi.domain->theta_axis)) < phi.domain->min_cos) continue;
    }
    for (const auto& wx : dirs_x) {
      for (double rt : radii_t) {
        if (rt < cfg.r1) continue;
        for (double rx : radii_x) {
          std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
          for (int i = 0; i < sp.d; ++i) p[static_cast<size_t>(i)] = rx * wx(i);
          for (int a = 0; a < su; ++a)
            p[static_cast<size_t>(sp.d + unbounded[static_cast<size_t>(a)])] = rt * wt(a);
          double q = 0;
          const double ix = 1.0 / jbx.eval(p), it = 1.0 / jbt.eval(p);
          for (const auto& g : gt) {
            const double val = g.eval(p) * ix;
            q += val * val;
          }
          for (const auto& g : gx) {
            const double val = g.eval(p) * it;
            q += val * val;
          }
          if (q < cmin) {
            cmin = q;
            if (q < cfg.c_min) witness = p;
          }
        }
      }
    }
  }
  v.empirical_C = cmin;
  v.witness = witness;
  v.ok = cmin >= cfg.c_min;
  if (!v.ok && v.detail.empty()) v.detail = "phase inequality failed on the grid";
  return v;
}

// ---- critical solve ------------------------------------------------------------------

CriticalPoint polish_critical_point(const PhaseFunction& phi, const CriticalPoint& seed,
                                    const CriticalSolveConfig& cfg) {
  FaceSystem fs = make_face_system(phi, seed.face);
  FaceState st{seed.x, seed.theta};
  auto r = newton_face(fs, st, cfg);
  if (!r) throw ComputeError("critical point did not converge from the given seed");
  return *r;
}

CriticalManifold critical_solve(const PhaseFunction& phi, const std::vector<CriticalPoint>& seeds,
                                const CriticalSolveConfig& cfg) {
  CriticalManifold cm;
  const VarSpace& sp = phi.space();
  std::ostringstream diag;

  std::vector<Face> faces = {Face::Interior, Face::Psi, Face::E, Face::PsiE};
  std::map<Face, std::vector<CriticalPoint>> per_face;
  std::map<Face, std::set<int>> ranks;

  for (Face face : faces) {
    FaceSystem fs = [&]() -> std::optional<FaceSystem> {
      try {
        return make_face_system(phi, face);
      } catch (const ComputeError&) {
        return std::nullopt;
      }
    }()
                        .value_or(FaceSystem{});
    if (!fs.phi) {
      diag << "face system unavailable for a boundary face; ";
      continue;
    }
    std::vector<FaceState> starts;
    for (const auto& s : seeds)
      if (s.face == face) starts.push_back(FaceState{s.x, s.theta});
    if (starts.empty() && seeds.empty()) {
      auto def = default_seeds(fs, cfg);
      starts.insert(starts.end(), def.begin(), def.end());
    }
    for (const auto& st : starts) {
      auto r = newton_face(fs, st, cfg);
      if (!r) continue;
      bool dup = false;
      for (const auto& q : per_face[face])
        if (same_point(*r, q, cfg.dedup_tol)) {
          dup = true;
          break;
        }
      if (!dup) {
        ranks[face].insert(r->jac_rank);
        per_face[face].push_back(std::move(*r));
      }
    }
  }

  std::set<int> excesses;
  bool rank_consistent = true;
  for (const auto& [face, pts] : per_face) {
    if (pts.empty()) continue;
    if (ranks[face].size() > 1) rank_consistent = false;
    excesses.insert(sp.s - *ranks[face].begin());
    for (const auto& p : pts) cm.points.push_back(p);
  }
  if (excesses.size() > 1) rank_consistent = false;
  if (!excesses.empty()) cm.excess = *excesses.begin();
  cm.clean_on_samples = rank_consistent && !cm.points.empty();
  if (!rank_consistent) diag << "rank varies across samples or faces; ";

  // frame: a maximal coordinate subset spanning T C_phi, from the kernel of
  // the interior critical Jacobian at a sample (pivoted QR)
  const auto interior_it =
      std::find_if(cm.points.begin(), cm.points.end(),
                   [](const CriticalPoint& p) { return p.face == Face::Interior; });
  if (interior_it != cm.points.end() && cm.excess >= 0) {
    FaceSystem fs = make_face_system(phi, Face::Interior);
    Mat J = face_J(fs, interior_it->x, interior_it->theta, {}, {});
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullV);
    const int kdim = sp.d + cm.excess;
    Mat K = svd.matrixV().rightCols(kdim);  // kernel basis (rows = coords)
    Eigen::ColPivHouseholderQR<Mat> qr(K.transpose());
    for (int i = 0; i < kdim; ++i) cm.frame.push_back(qr.colsPermutation().indices()(i));
    std::sort(cm.frame.begin(), cm.frame.end());
  }
  cm.diagnostics = diag.str();
  return cm;
}

// ---- scattering Hessian ------------------------------------------------------------------

ScHessianRecord sc_hessian(const PhaseFunction& phi, const CriticalPoint& p) {
  FaceSystem fs = make_face_system(phi, p.face);
  const VarSpace& sp = phi.space();
  Vec F = face_F(fs, p.x, p.theta);
  if (F.norm() > 1e-9) throw ComputeError("sc_hessian: not a critical point");
  auto pt = assemble_point(fs, p.x, p.theta);

  Mat H(sp.s, sp.s);
  for (int i = 0; i < sp.s; ++i)
    for (int j = 0; j < sp.s; ++j)
      H(i, j) = fs.htt[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(pt);

  ScHessianRecord rec;
  rec.face = p.face;
  if (fs.fiber_sphere) {
    // remove the radial direction of the unbounded block
    const int cols = fs.fiber_chart_dim();
    Mat B = Mat::Zero(sp.s, cols);
    int col = 0;
    if (fs.su >= 2) {
      auto tau = tangent_basis(p.theta.head(fs.su));
      for (const auto& t : tau) {
        for (int a = 0; a < fs.su; ++a) B(fs.unbounded[static_cast<size_t>(a)], col) = t(a);
        ++col;
      }
    }
    for (int j = 0; j < sp.s; ++j)
      if (sp.theta_bounded(j)) B(j, col++) = 1.0;
    rec.matrix = B.transpose() * H * B;
  } else {
    rec.matrix = H;
  }
  Signature sig = symmetric_signature(rec.matrix);
  rec.rank = sig.rank();
  rec.signature = sig.sgn();
  if (std::abs(rec.signature) > rec.rank || rec.rank > sp.s ||
      ((rec.signature - rec.rank) % 2) != 0)
    throw ComputeError("sc_hessian: invariant violation");
  return rec;
}

// ---- the Lagrangian map ---------------------------------------------------------------------

LagrangianSample lambda_phi(const PhaseFunction& phi, const CriticalPoint& p) {
  FaceSystem fs = make_face_system(phi, p.face);
  Vec F = face_F(fs, p.x, p.theta);
  if (F.norm() > 1e-8) throw ComputeError("lambda_phi: not a critical point");
  auto pt = assemble_point(fs, p.x, p.theta);
  const VarSpace& sp = phi.space();

  Vec gxv(sp.d);
  for (int i = 0; i < sp.d; ++i) gxv(i) = fs.gx[static_cast<size_t>(i)].eval(pt);

  LagrangianSample out;
  out.source = p;
  out.euclid_x = p.x;
  out.euclid_xi = gxv;
  CompactPoint cp;
  switch (p.face) {
    case Face::Interior:
      cp.face = Face::Interior;
      cp.base = p.x;
      cp.fiber = gxv;
      break;
    case Face::Psi:
      if (gxv.norm() < 1e-12) throw ComputeError("lambda_phi: vanishing fiber direction");
      cp.face = Face::Psi;
      cp.base = p.x;
      cp.fiber = gxv / gxv.norm();
      break;
    case Face::E:
      cp.face = Face::E;
      cp.base = p.x;  // unit direction
      cp.fiber = gxv;
      break;
    case Face::PsiE:
      if (gxv.norm() < 1e-12) throw ComputeError("lambda_phi: vanishing fiber direction");
      cp.face = Face::PsiE;
      cp.base = p.x;
      cp.fiber = gxv / gxv.norm();
      break;
  }
  out.point = cp;
  return out;
}

namespace {

// Embedded lambda as a function of face-chart coordinates, for rank checks.
Vec lambda_embed_at(const FaceSystem& fs, const PhaseFunction& phi, const Vec& base,
                    const Vec& fiber) {
  CriticalPoint p;
  p.face = fs.face;
  p.x = base;
  p.theta = fiber;
  p.residual = 0;
  // bypass the residual check: evaluate the map directly
  auto pt = assemble_point(fs, base, fiber);
  const VarSpace& sp = phi.space();
  Vec gxv(sp.d);
  for (int i = 0; i < sp.d; ++i) gxv(i) = fs.gx[static_cast<size_t>(i)].eval(pt);
  CompactPoint cp;
  switch (fs.face) {
    case Face::Interior:
      cp = {Face::Interior, base, gxv};
      break;
    case Face::Psi:
      cp = {Face::Psi, base, Vec(gxv / gxv.norm())};
      break;
    case Face::E:
      cp = {Face::E, Vec(base / base.norm()), gxv};
      break;
    case Face::PsiE:
      cp = {Face::PsiE, Vec(base / base.norm()), Vec(gxv / gxv.norm())};
      break;
  }
  return cp.embed();
}

}  // namespace

LagrangianSampleSet sample_lagrangian(const PhaseFunction& phi, const CriticalManifold& cm) {
  LagrangianSampleSet out;
  std::ostringstream diag;
  bool rank_ok = true, subm_ok = true;
  std::map<Face, FaceSystem> systems;

  for (const auto& p : cm.points) {
    auto it = systems.find(p.face);
    if (it == systems.end()) it = systems.emplace(p.face, make_face_system(phi, p.face)).first;
    const FaceSystem& fs = it->second;
    LagrangianSample ls = lambda_phi(phi, p);

    // tangent space of C_phi in chart coordinates = kernel of the face Jacobian
    std::vector<Vec> tb, tf;
    if (fs.base_sphere) tb = tangent_basis(p.x);
    if (fs.fiber_sphere && fs.su >= 2) tf = tangent_basis(p.theta.head(fs.su));
    Mat J = face_J(fs, p.x, p.theta, tb, tf);
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-8 * std::max(sv(0), 1e-30)) ++rank;
    const int kdim = fs.chart_dim() - rank;
    if (kdim == 0) {
      // isolated sample (e.g. a zero-dimensional corner): nothing to check
      out.samples.push_back(std::move(ls));
      continue;
    }
    Mat K = svd.matrixV().rightCols(kdim);

    // directional derivatives of the embedded lambda along the kernel
    const double h = 1e-5;
    Mat D(ls.point.embed().size(), kdim);
    for (int c = 0; c < kdim; ++c) {
      auto move_state = [&](double sign) {
        Vec b = p.x, f = p.theta;
        int col = 0;
        if (fs.base_sphere) {
          for (int a = 0; a < fs.d - 1; ++a) b += sign * h * K(col + a, c) * tb[static_cast<size_t>(a)];
          b.normalize();
          col += fs.d - 1;
        } else {
          for (int i = 0; i < fs.d; ++i) b(i) += sign * h * K(col + i, c);
          col += fs.d;
        }
        if (fs.fiber_sphere) {
          Vec eta = f.head(fs.su);
          if (fs.su >= 2) {
            for (int a = 0; a < fs.su - 1; ++a)
              eta += sign * h * K(col + a, c) * tf[static_cast<size_t>(a)];
            eta.normalize();
            col += fs.su - 1;
          }
          f.head(fs.su) = eta;
          for (int bb = 0; bb < fs.sb; ++bb) f(fs.su + bb) += sign * h * K(col + bb, c);
        } else {
          for (int j = 0; j < fs.s; ++j) f(j) += sign * h * K(col + j, c);
        }
        return lambda_embed_at(fs, phi, b, f);
      };
      D.col(c) = (move_state(+1.0) - move_state(-1.0)) / (2 * h);
    }
    const int lrank = svd_rank(D, 1e-6);
    if (p.face == Face::Interior) {
      if (lrank != fs.d) {
        rank_ok = false;
        diag << "interior rank " << lrank << " != " << fs.d << "; ";
      }
    } else {
      const int expect = kdim - cm.excess;
      if (lrank != expect) {
        subm_ok = false;
        diag << "face rank " << lrank << " != " << expect << "; ";
      }
    }
    out.samples.push_back(std::move(ls));
  }
  out.rank_ok = rank_ok;
  out.submersion_ok = subm_ok;
  out.diagnostics = diag.str();
  return out;
}

// ---- Legendrian verification ---------------------------------------------------------------------

LegendrianReport legendrian_check(const std::vector<LagrangianSample>& samples, int d,
                                  int lambda_dim_psi, int lambda_dim_e,
                                  const LegendrianCheckConfig& cfg) {
  LegendrianReport rep;
  std::map<Face, std::vector<const LagrangianSample*>> byface;
  for (const auto& s : samples) byface[s.point.face].push_back(&s);

  auto face_points = [&](Face f) { return byface.count(f) ? byface[f] : std::vector<const LagrangianSample*>{}; };

  for (Face f : {Face::Psi, Face::E}) {
    auto pts = face_points(f);
    if (pts.empty()) continue;
    const int dim = f == Face::Psi ? lambda_dim_psi : lambda_dim_e;
    if (dim <= 0) continue;
    if (static_cast<int>(pts.size()) < cfg.min_samples_factor * d)
      throw InsufficientSamples("legendrian_check: too few samples on a face");
    for (const auto* sp : pts) {
      // nearest neighbours in the embedding
      std::vector<std::pair<double, const LagrangianSample*>> near;
      for (const auto* q : pts) {
        if (q == sp) continue;
        near.emplace_back(CompactPoint::distance(q->point, sp->point), q);
      }
      std::sort(near.begin(), near.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      const int k = std::min<int>(static_cast<int>(near.size()), 2 * dim + 2);
      // tangent estimate from centered differences, split into face slots
      const int nb = static_cast<int>(sp->point.base.size());
      Mat diffs(2 * nb, k);
      for (int i = 0; i < k; ++i) {
        Vec db = near[static_cast<size_t>(i)].second->point.base - sp->point.base;
        Vec df = near[static_cast<size_t>(i)].second->point.fiber - sp->point.fiber;
        // project sphere slots onto the tangent planes
        if (f == Face::Psi) {
          df -= sp->point.fiber * (sp->point.fiber.dot(df));
        } else {
          db -= sp->point.base * (sp->point.base.dot(db));
        }
        diffs.col(i) << db, df;
      }
      Eigen::JacobiSVD<Mat> svd(diffs, Eigen::ComputeThinU);
      const int tdim = std::min<int>(dim, static_cast<int>(svd.singularValues().size()));
      for (int c = 0; c < tdim; ++c) {
        if (svd.singularValues()(c) < 1e-12) break;
        TangentSample v;
        v.at = sp->point;
        v.dbase = svd.matrixU().col(c).head(nb);
        v.dfiber = svd.matrixU().col(c).tail(nb);
        const double scale = std::max(v.dbase.norm() + v.dfiber.norm(), 1e-30);
        if (f == Face::Psi)
          rep.max_alpha_psi = std::max(
              rep.max_alpha_psi, std::abs(contact_eval(ContactForm::AlphaPsi, v)) / scale);
        else
          rep.max_alpha_e =
              std::max(rep.max_alpha_e, std::abs(contact_eval(ContactForm::AlphaE, v)) / scale);
      }
    }
  }

  // corner checks: conic pairing and the blow-up form
  auto corner = face_points(Face::PsiE);
  for (const auto* sp : corner) {
    rep.max_corner_pairing =
        std::max(rep.max_corner_pairing, std::abs(sp->point.base.dot(sp->point.fiber)));
  }
  if (static_cast<int>(corner.size()) >= 2) {
    const int nb = static_cast<int>(corner[0]->point.base.size());
    for (const auto* sp : corner) {
      for (const auto* q : corner) {
        if (q == sp) continue;
        Vec db = q->point.base - sp->point.base;
        Vec df = q->point.fiber - sp->point.fiber;
        db -= sp->point.base * (sp->point.base.dot(db));
        df -= sp->point.fiber * (sp->point.fiber.dot(df));
        const double scale = db.norm() + df.norm();
        if (scale < 1e-12) continue;
        for (double dtau : {0.0, 1.0}) {
          TangentSample v;
          v.at = sp->point;
          v.dbase = db;
          v.dfiber = df;
          v.tau = 1.0;
          v.dtau = dtau;
          rep.max_alpha_psie = std::max(
              rep.max_alpha_psie, std::abs(contact_eval(ContactForm::AlphaPsiE, v)) / scale);
        }
      }
    }
    (void)nb;
  }
  rep.ok = rep.max_alpha_psi <= cfg.tol && rep.max_alpha_e <= cfg.tol &&
           rep.max_corner_pairing <= cfg.corner_tol && rep.max_alpha_psie <= cfg.psie_tol;
  return rep;
}

// ---- the conormal model ------------------------------------------------------------------------

ConormalModel conormal_bundle(int k, int d) {
  if (k < 0 || k >= d)
    throw std::invalid_argument("conormal_bundle: need 0 <= k < d (k = d has no fiber variables)");
  ConormalModel m;
  m.d = d;
  m.k = k;
  const int s = d - k;
  VarSpace sp(d, s);
  std::vector<Expr> terms;
  for (int i = 0; i < s; ++i)
    terms.push_back(variable(Block::X, i, sp) * variable(Block::Theta, i, sp));
  m.phi.expr = add(std::move(terms));
  return m;
}

bool ConormalModel::face_nonempty(Face f) const {
  switch (f) {
    case Face::Interior:
      return true;
    case Face::Psi:
      return true;
    case Face::E:
    case Face::PsiE:
      return k >= 1;
  }
  return false;
}

std::vector<CompactPoint> ConormalModel::face_samples(Face f, int count, unsigned seed) const {
  std::vector<CompactPoint> out;
  if (!face_nonempty(f)) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  std::normal_distribution<double> gauss;
  const int s = d - k;
  auto unit = [&](int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    v.normalize();
    return v;
  };
  for (int i = 0; i < count; ++i) {
    CompactPoint p;
    p.face = f;
    switch (f) {
      case Face::Psi: {
        Vec x = Vec::Zero(d);
        for (int j = s; j < d; ++j) x(j) = box(rng);
        Vec xi = Vec::Zero(d);
        xi.head(s) = unit(s);
        p.base = x;
        p.fiber = xi;
        break;
      }
      case Face::E: {
        Vec omega = Vec::Zero(d);
        omega.tail(k) = unit(k);
        Vec xi = Vec::Zero(d);
        for (int j = 0; j < s; ++j) xi(j) = box(rng);
        p.base = omega;
        p.fiber = xi;
        break;
      }
      case Face::PsiE: {
        Vec omega = Vec::Zero(d);
        omega.tail(k) = unit(k);
        Vec xi = Vec::Zero(d);
        xi.head(s) = unit(s);
        p.base = omega;
        p.fiber = xi;
        break;
      }
      case Face::Interior: {
        Vec x = Vec::Zero(d);
        for (int j = s; j < d; ++j) x(j) = box(rng);
        Vec xi = Vec::Zero(d);
        for (int j = 0; j < s; ++j) xi(j) = box(rng);
        p.base = x;
        p.fiber = xi;
        break;
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

double ConormalModel::face_distance(const CompactPoint& p) const {
  const int s = d - k;
  double r = 0;
  switch (p.face) {
    case Face::Psi:
      r = std::max(p.base.head(s).norm(), p.fiber.tail(k).norm());
      r = std::max(r, std::abs(p.fiber.norm() - 1.0));
      break;
    case Face::E:
      if (k == 0) return 1e300;
      r = std::max(p.base.head(s).norm(), p.fiber.tail(k).norm());
      r = std::max(r, std::abs(p.base.norm() - 1.0));
      break;
    case Face::PsiE:
      if (k == 0) return 1e300;
      r = std::max(p.base.head(s).norm(), p.fiber.tail(k).norm());
      r = std::max(r, std::abs(p.base.norm() - 1.0));
      r = std::max(r, std::abs(p.fiber.norm() - 1.0));
      break;
    case Face::Interior:
      r = p.base.head(s).norm();
      break;
  }
  return r;
}

}  // namespace sclag
