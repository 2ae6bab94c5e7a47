#include "sclag/oscint.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace sclag {

// ---- regularizers ---------------------------------------------------------------

Regularizer::Regularizer(CutoffSpec spec, double eps)
    : poly_(spec.t0, spec.t1),
      smooth_(spec.smooth),
      t0_(spec.t0.to_double()),
      t1_(spec.t1.to_double()),
      eps_(eps) {
  if (!(eps > 0)) throw std::invalid_argument("regularizer needs eps > 0");
}

double Regularizer::profile_deriv(double t, int k) const {
  if (!smooth_) return poly_.deriv(t, k);
  if (t <= t0_) return k == 0 ? 1.0 : 0.0;
  if (t >= t1_) return 0.0;
  const double w = t1_ - t0_;
  Jet s = smooth_step_jet((t - t0_) / w, k);
  double fact = 1.0, scale = 1.0;
  for (int j = 2; j <= k; ++j) fact *= j;
  for (int j = 0; j < k; ++j) scale /= w;
  const double v = s.c[k] * fact * scale;
  return k == 0 ? 1.0 - v : -v;
}

Regularizer make_regularizer(const CutoffSpec& spec, double eps, RegularizerReport* report) {
  if (!spec.compact)
    throw std::invalid_argument("regularizer profile must be compactly supported");
  Regularizer m(spec, eps);
  if (report) {
    RegularizerReport rep;
    // m as a function of rho = 1/[theta] is chi(eps / rho); the scattering
    // derivative bounds |(rho^2 d_rho)^k m| <= C rho^k are checked on a grid
    // (angular derivatives vanish: the family is radial).
    double worst = 0;
    bool ok = true;
    const double t1 = spec.t1.to_double();
    for (int k = 1; k <= 2; ++k) {
      for (double rho = 1e-6; rho < 1.2; rho *= 1.7) {
        const double t = eps / rho;
        if (t <= 0 || t > 2 * t1) continue;
        double val;
        if (k == 1) {
          val = -eps * m.profile_deriv(t, 1);  // (rho^2 d_rho) chi(eps/rho)
        } else {
          val = eps * eps * m.profile_deriv(t, 2);
        }
        const double c = std::abs(val) / std::pow(rho, k);
        worst = std::max(worst, c);
        if (!std::isfinite(c)) ok = false;
      }
    }
    rep.worst_constant = worst;
    rep.limit_at_interior = m.profile_deriv(eps * 2.0, 0);
    rep.ok = ok && std::isfinite(worst);
    *report = rep;
  }
  return m;
}

// ---- test densities --------------------------------------------------------------

Complex TestDensity::operator()(const Vec& x) const {
  double loc = scale;
  if (use_gaussian) {
    Vec c = center ? *center : Vec::Zero(dim);
    loc *= std::exp(-(x - c).squaredNorm() / (width * width));
  }
  if (angular_cap) {
    const double r = x.norm();
    if (r < 1e-12) return Complex{0, 0};
    const double c = x.dot(angular_cap->first) / r;
    const double t = (1.0 - c) / std::max(1e-12, 1.0 - angular_cap->second);
    if (t >= 1.0) return Complex{0, 0};
    loc *= 1.0 - smooth_step(t);
  }
  if (radial_window) {
    const double r = x.norm();
    const double a = radial_window->first, b = radial_window->second;
    const double w = 0.25 * (b - a);
    loc *= smooth_step((r - (a - w)) / w) * (1.0 - smooth_step((r - b) / w));
  }
  if (loc == 0.0) return Complex{0, 0};
  if (wave.size() == x.size() && wave.squaredNorm() > 0) {
    const double ph = wave.dot(x);
    return Complex{loc * std::cos(ph), loc * std::sin(ph)};
  }
  return Complex{loc, 0};
}

std::vector<std::pair<double, double>> TestDensity::support_box() const {
  std::vector<std::pair<double, double>> box(static_cast<size_t>(dim));
  double rmax = 1e300;
  if (radial_window) rmax = radial_window->second * 1.3;
  for (int i = 0; i < dim; ++i) {
    double lo = -rmax, hi = rmax;
    if (use_gaussian) {
      const double c = center ? (*center)(i) : 0.0;
      lo = std::max(lo, c - 7.0 * width);
      hi = std::min(hi, c + 7.0 * width);
    }
    box[static_cast<size_t>(i)] = {lo, hi};
  }
  return box;
}

TestDensity TestDensity::gaussian(const Vec& center, double width) {
  TestDensity f;
  f.dim = static_cast<int>(center.size());
  f.center = center;
  f.width = width;
  f.wave = Vec::Zero(f.dim);
  return f;
}

// ---- nested adaptive quadrature ------------------------------------------------------
//
// The integrand e^{i phi} a f m factorizes across groups of variables that
// never interact (additive phase terms, multiplicative amplitude factors,
// per-dimension localizers).  Axes are ordered group-contiguously, fiber
// axes outermost within each group, and each group's block integral is
// computed once and cached: the total is the product of group integrals.

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(static_cast<size_t>(n)) {
    for (int i = 0; i < n; ++i) parent[static_cast<size_t>(i)] = i;
  }
  int find(int a) {
    while (parent[static_cast<size_t>(a)] != a) {
      parent[static_cast<size_t>(a)] =
          parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
      a = parent[static_cast<size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) { parent[static_cast<size_t>(find(a))] = find(b); }
};

void collect_vars(const NodePtr& n, int d, std::vector<int>& out) {
  if (n->kind == NodeKind::Var) {
    out.push_back(n->block == Block::X ? n->index : d + n->index);
    return;
  }
  for (const auto& k : n->kids) collect_vars(k, d, out);
}

void couple_all(const NodePtr& n, int d, UnionFind& uf) {
  std::vector<int> vars;
  collect_vars(n, d, vars);
  for (size_t i = 1; i < vars.size(); ++i) uf.unite(vars[0], vars[i]);
}

// additive splitting (phases): sums split, anything else couples
void couple_phase(const NodePtr& n, int d, UnionFind& uf) {
  if (n->kind == NodeKind::Sum) {
    for (const auto& k : n->kids) couple_phase(k, d, uf);
    return;
  }
  couple_all(n, d, uf);
}

// multiplicative splitting (amplitudes): products split, sums couple
void couple_value(const NodePtr& n, int d, UnionFind& uf) {
  if (n->kind == NodeKind::Prod) {
    for (const auto& k : n->kids) couple_value(k, d, uf);
    return;
  }
  couple_all(n, d, uf);
}

int group_of_term(const NodePtr& n, int d, UnionFind& uf, int fallback) {
  std::vector<int> vars;
  collect_vars(n, d, vars);
  return vars.empty() ? fallback : uf.find(vars[0]);
}

struct Axis {
  bool is_theta = false;
  int index = 0;
  double lo = 0, hi = 0;
  int group = 0;        // contiguous group id
  bool group_start = false;
};

struct GroupData {
  std::optional<Expr> phase;  // additive phase terms of this group (incl. shift)
  std::optional<Expr> ampf;   // product of amplitude factors
  std::vector<int> f_dims;    // x dims whose gaussian/wave factors live here
  bool full_f = false;        // non-separable localizer: evaluate f as a whole
  bool radial_m = false;
  std::vector<int> m_dims;    // per-variable regularizer dims
  Complex scalar{1.0, 0.0};
};

struct Engine {
  const PhaseFunction* phi = nullptr;
  const TestDensity* f = nullptr;
  const Regularizer* reg = nullptr;
  const VarSpace* sp = nullptr;
  std::vector<Axis> axes;
  std::vector<GroupData> groups;
  std::vector<Expr> grad_x, grad_t;
  Expr theta_sq;
  std::vector<int> unbounded_theta;

  long evals = 0;
  long budget = 0;
  int max_depth = 14;
  double screen = 0.02;
  bool coarse = false;
  std::vector<long> level_nodes;

  std::vector<double> point;
  std::vector<std::optional<std::pair<Complex, double>>> cache;

  Complex group_integrand(int g) {
    ++evals;
    if (evals > budget) {
      std::string msg = "quadrature evaluation budget exceeded (nodes/level:";
      for (long n : level_nodes) msg += " " + std::to_string(n);
      msg += ")";
      throw ConvergenceError(msg);
    }
    const GroupData& gd = groups[static_cast<size_t>(g)];
    double loc = 1.0;
    double ph = 0.0;
    Complex val = gd.scalar;
    if (gd.full_f) {
      const Vec x = Eigen::Map<const Vec>(point.data(), sp->d);
      Complex fv = (*f)(x);
      if (fv == Complex{0, 0}) return fv;
      val *= fv;
    } else {
      for (int i : gd.f_dims) {
        const double xi = point[static_cast<size_t>(i)];
        if (f->use_gaussian) {
          const double c = f->center ? (*f->center)(i) : 0.0;
          loc *= std::exp(-(xi - c) * (xi - c) / (f->width * f->width));
        }
        if (f->wave.size() == sp->d) ph += f->wave(i) * xi;
      }
    }
    if (gd.radial_m && reg) {
      loc *= (*reg)(smooth_norm_profile(theta_sq.eval(point), 0));
      if (loc == 0.0) return Complex{0, 0};
    }
    for (int j : gd.m_dims) {
      const double tj = point[static_cast<size_t>(sp->d + j)];
      loc *= (*reg)(smooth_norm_profile(tj * tj, 0));
      if (loc == 0.0) return Complex{0, 0};
    }
    if (gd.phase) ph += gd.phase->eval(point);
    if (gd.ampf) loc *= gd.ampf->eval(point);
    if (loc == 0.0) return Complex{0, 0};
    return val * loc * Complex{std::cos(ph), std::sin(ph)};
  }

  double axis_frequency(size_t level) {
    const Axis& ax = axes[level];
    for (size_t l = level; l < axes.size(); ++l) {
      const Axis& in = axes[l];
      const size_t ci = static_cast<size_t>(in.is_theta ? sp->d + in.index : in.index);
      point[ci] = 0.5 * (in.lo + in.hi);
    }
    double freq = 0;
    const Expr& g = ax.is_theta ? grad_t[static_cast<size_t>(ax.index)]
                                : grad_x[static_cast<size_t>(ax.index)];
    const size_t ci = static_cast<size_t>(ax.is_theta ? sp->d + ax.index : ax.index);
    for (double frac : {0.05, 0.5, 0.95}) {
      point[ci] = ax.lo + frac * (ax.hi - ax.lo);
      freq = std::max(freq, std::abs(g.eval(point)));
    }
    if (!ax.is_theta && f->wave.size() == sp->d) freq += std::abs(f->wave(ax.index));
    return freq;
  }

  struct LevelResult {
    Complex value;
    double mag = 0;
  };

  LevelResult integrate_axis(size_t level, double abs_tol) {
    if (level > 0 && axes[level].group_start) {
      auto& slot = cache[level];
      if (slot) return {slot->first, slot->second};
      LevelResult r = integrate_block(level, abs_tol);
      slot = {r.value, r.mag};
      return r;
    }
    return integrate_block(level, abs_tol);
  }

  // Conservative magnitude bound of a panel's contribution: max |integrand|
  // over a sample lattice of the remaining axes times the remaining volume.
  // The test-density center is always included so localized bumps are seen.
  double prescreen(size_t level, double lo, double hi) {
    struct Saved {
      size_t idx;
      double val;
    };
    std::vector<Saved> saved;
    for (size_t l = level; l < axes.size(); ++l) {
      const Axis& in = axes[l];
      const size_t ci = static_cast<size_t>(in.is_theta ? sp->d + in.index : in.index);
      saved.push_back({ci, point[ci]});
    }
    double volume = hi - lo;
    for (size_t l = level + 1; l < axes.size(); ++l) volume *= axes[l].hi - axes[l].lo;

    double peak = 0;
    const int g = axes[level].group;
    std::function<void(size_t)> walk = [&](size_t l) {
      if (l == axes.size() || axes[l].group != g) {
        // groups further in contribute their own factors; bound them crudely
        // by the magnitude of this group's integrand alone
        double v = std::abs(group_integrand(g));
        peak = std::max(peak, v);
        return;
      }
      const Axis& in = axes[l];
      const size_t ci = static_cast<size_t>(in.is_theta ? sp->d + in.index : in.index);
      const double a = l == level ? lo : in.lo;
      const double b = l == level ? hi : in.hi;
      std::vector<double> samples = {a + 0.2 * (b - a), 0.5 * (a + b), b - 0.2 * (b - a)};
      if (!in.is_theta && f->use_gaussian && f->center) {
        const double c = (*f->center)(in.index);
        if (c > a && c < b) samples.push_back(c);
      }
      for (double sv : samples) {
        point[ci] = sv;
        walk(l + 1);
      }
    };
    walk(level);
    for (const auto& s : saved) point[s.idx] = s.val;
    (void)volume;
    double inner_volume = hi - lo;
    size_t l = level + 1;
    for (; l < axes.size() && axes[l].group == g; ++l) inner_volume *= axes[l].hi - axes[l].lo;
    // deeper groups multiply through their cached block integrals
    double inner_scale = 1.0;
    if (l < axes.size()) {
      if (!cache[l]) return 1e300;  // not known yet: do not screen
      inner_scale = std::abs(cache[l]->first) + 1e-300;
    }
    return peak * inner_volume * inner_scale;
  }

  LevelResult integrate_block(size_t level, double abs_tol) {
    if (level_nodes.size() <= level) level_nodes.resize(level + 1, 0);
    const Axis& ax = axes[level];
    const double W = ax.hi - ax.lo;
    const double freq = axis_frequency(level);
    int n0 = static_cast<int>(std::ceil(W * freq / (2 * M_PI * 3.0)));
    n0 = std::clamp(n0, 1, 4096);
    if (coarse) n0 = std::min(n0, 8);

    const bool innermost_of_group =
        level + 1 == axes.size() || axes[level + 1].group_start;
    const size_t ci = static_cast<size_t>(ax.is_theta ? sp->d + ax.index : ax.index);

    struct Panel {
      double lo, hi;
      int depth;
    };
    std::vector<Panel> stack;
    for (int i = n0 - 1; i >= 0; --i)
      stack.push_back({ax.lo + W * i / n0, ax.lo + W * (i + 1) / n0, 0});

    Complex total{0, 0};
    double magmax = 0;

    auto node_value = [&](double coord, double child_tol, double& m) {
      ++level_nodes[level];
      point[ci] = coord;
      Complex v;
      if (innermost_of_group) {
        v = group_integrand(ax.group);
        if (level + 1 < axes.size() && v != Complex{0, 0}) {
          LevelResult inner = integrate_axis(level + 1, child_tol);
          v *= inner.value;
        }
        m = std::abs(v);
      } else {
        LevelResult inner = integrate_axis(level + 1, child_tol);
        v = inner.value;
        m = inner.mag;
      }
      return v;
    };
    auto gl_eval = [&](const Panel& p, int order, double child_tol) {
      const GaussRule& rule = gauss_rule(order);
      const double mid = 0.5 * (p.lo + p.hi), half = 0.5 * (p.hi - p.lo);
      Complex s{0, 0};
      double mag = 0;
      for (size_t q = 0; q < rule.nodes.size(); ++q) {
        double m = 0;
        s += rule.weights[q] * node_value(mid + half * rule.nodes[q], child_tol, m);
        mag = std::max(mag, m);
      }
      return std::pair<Complex, double>{half * s, mag};
    };
    auto gk_eval = [&](const Panel& p, double child_tol) {
      const GaussKronrod& rule = gk15();
      const double mid = 0.5 * (p.lo + p.hi), half = 0.5 * (p.hi - p.lo);
      Complex sk{0, 0}, sg{0, 0};
      double mag = 0;
      for (size_t q = 0; q < rule.nodes.size(); ++q) {
        double m = 0;
        Complex v = node_value(mid + half * rule.nodes[static_cast<size_t>(q)], child_tol, m);
        sk += rule.wk[static_cast<size_t>(q)] * v;
        sg += rule.wg[static_cast<size_t>(q)] * v;
        mag = std::max(mag, m);
      }
      return std::tuple<Complex, Complex, double>{half * sk, half * sg, mag};
    };

    while (!stack.empty()) {
      Panel p = stack.back();
      stack.pop_back();
      const double w = p.hi - p.lo;
      const double panel_tol = std::max(abs_tol * (w / W), 1e-300);
      const double child_tol = panel_tol / (w * 4.0);
      if (!coarse) {
        // cheap magnitude bound before descending into the inner recursion
        if (prescreen(level, p.lo, p.hi) < screen * panel_tol) continue;
      }
      if (coarse) {
        auto [i4, mag4] = gl_eval(p, 4, child_tol);
        magmax = std::max(magmax, mag4);
        total += i4;
        continue;
      }
      auto [ik, ig, magk] = gk_eval(p, child_tol);
      magmax = std::max(magmax, magk);
      const double err = std::abs(ik - ig);
      if (err <= panel_tol || p.depth >= max_depth || magk * w < screen * panel_tol) {
        total += ik;
      } else {
        const double mid = 0.5 * (p.lo + p.hi);
        stack.push_back({p.lo, mid, p.depth + 1});
        stack.push_back({mid, p.hi, p.depth + 1});
      }
    }
    return {total, magmax};
  }

  // Crude integral of |integrand| over a fixed lattice (test-density centers
  // included): anchors the absolute tolerance when the oscillatory coarse
  // estimate cancels past localized features.
  double mass_estimate() {
    point.assign(static_cast<size_t>(sp->total()), 0.0);
    double cellvol = 1.0;
    std::vector<std::vector<double>> samples(axes.size());
    for (size_t l = 0; l < axes.size(); ++l) {
      const Axis& ax = axes[l];
      std::vector<double> s;
      for (double frac : {0.08, 0.3, 0.5, 0.7, 0.92})
        s.push_back(ax.lo + frac * (ax.hi - ax.lo));
      if (!ax.is_theta && f->use_gaussian && f->center) {
        const double c = (*f->center)(ax.index);
        if (c > ax.lo && c < ax.hi) s.push_back(c);
      } else if (ax.is_theta) {
        if (0 > ax.lo && 0 < ax.hi) s.push_back(0.0);
      }
      cellvol *= (ax.hi - ax.lo) / static_cast<double>(s.size());
      samples[l] = std::move(s);
    }
    double mass = 0;
    std::function<void(size_t, double)> walk = [&](size_t l, double acc) {
      if (l == axes.size()) {
        mass += acc;
        return;
      }
      const Axis& ax = axes[l];
      const size_t ci = static_cast<size_t>(ax.is_theta ? sp->d + ax.index : ax.index);
      const bool leaf_of_group = l + 1 == axes.size() || axes[l + 1].group_start;
      for (double v : samples[l]) {
        point[ci] = v;
        double a = acc;
        if (leaf_of_group) a *= std::abs(group_integrand(ax.group));
        walk(l + 1, a);
      }
    };
    walk(0, 1.0);
    return mass * cellvol;
  }

  Complex run(double rel_tol, double abs_floor) {
    point.assign(static_cast<size_t>(sp->total()), 0.0);
    cache.assign(axes.size(), std::nullopt);
    coarse = true;
    Complex est = integrate_axis(0, 1e300).value;
    coarse = false;
    const double mass = mass_estimate();
    const double abs_tol =
        std::max(abs_floor, rel_tol * std::max(std::abs(est), 0.02 * mass));
    point.assign(static_cast<size_t>(sp->total()), 0.0);
    cache.assign(axes.size(), std::nullopt);
    return integrate_axis(0, abs_tol).value;
  }
};

Engine make_engine(const PhaseFunction& phi, const OscAmplitude& amp, const TestDensity& f,
                   const Regularizer* reg, bool reg_per_var, const QuadratureConfig& cfg) {
  Engine en;
  en.phi = &phi;
  en.f = &f;
  en.reg = reg;
  en.sp = &phi.space();
  en.budget = cfg.max_evals;
  en.max_depth = cfg.max_depth;
  en.grad_x = grad(phi.expr, Block::X);
  en.grad_t = grad(phi.expr, Block::Theta);

  const VarSpace& sp = phi.space();
  for (int j = 0; j < sp.s; ++j)
    if (!sp.theta_bounded(j)) en.unbounded_theta.push_back(j);
  std::vector<Expr> sq;
  for (int j : en.unbounded_theta)
    sq.push_back(pow(variable(Block::Theta, j, sp), Rational(2)));
  en.theta_sq = sq.empty() ? constant(Rational(0), sp) : add(sq);

  // interaction groups
  UnionFind uf(sp.total());
  couple_phase(phi.expr.node(), sp.d, uf);
  if (amp.phase_shift) couple_phase(amp.phase_shift->node(), sp.d, uf);
  couple_value(amp.expr.node(), sp.d, uf);
  const bool f_separable = !f.angular_cap && !f.radial_window;
  if (!f_separable)
    for (int i = 1; i < sp.d; ++i) uf.unite(0, i);
  if (reg && !reg_per_var && en.unbounded_theta.size() >= 2)
    for (size_t j = 1; j < en.unbounded_theta.size(); ++j)
      uf.unite(sp.d + en.unbounded_theta[0], sp.d + en.unbounded_theta[j]);

  // contiguous group ids in order of appearance
  std::map<int, int> gid;
  auto group_id = [&](int var) {
    const int root = uf.find(var);
    auto it = gid.find(root);
    if (it == gid.end()) it = gid.emplace(root, static_cast<int>(gid.size())).first;
    return it->second;
  };
  std::map<int, std::vector<Axis>> grouped;
  const double T = reg ? reg->support() : 0;
  auto box = f.support_box();
  for (int j = 0; j < sp.s; ++j) {
    Axis ax;
    ax.is_theta = true;
    ax.index = j;
    if (sp.theta_bounded(j)) {
      auto b = sp.theta_bound(j);
      ax.lo = b.first;
      ax.hi = b.second;
    } else {
      ax.lo = -T;
      ax.hi = T;
    }
    ax.group = group_id(sp.d + j);
    grouped[ax.group].push_back(ax);
  }
  for (int i = 0; i < sp.d; ++i) {
    Axis ax;
    ax.is_theta = false;
    ax.index = i;
    ax.lo = box[static_cast<size_t>(i)].first;
    ax.hi = box[static_cast<size_t>(i)].second;
    ax.group = group_id(i);
    grouped[ax.group].push_back(ax);
  }
  en.groups.resize(gid.size());
  for (auto& [g, axs] : grouped) {
    (void)g;
    std::stable_sort(axs.begin(), axs.end(),
                     [](const Axis& a, const Axis& b) { return a.is_theta > b.is_theta; });
    axs.front().group_start = true;
    for (auto& ax : axs) en.axes.push_back(ax);
  }

  // distribute the integrand factors over the groups
  auto group_of_node = [&](const NodePtr& n) {
    std::vector<int> vars;
    collect_vars(n, sp.d, vars);
    return vars.empty() ? 0 : group_id(vars[0]);
  };
  auto add_phase_term = [&](const NodePtr& n) {
    std::vector<int> vars;
    collect_vars(n, sp.d, vars);
    if (vars.empty()) {
      // constant phase contributes a unit scalar
      const double c = Expr(n, sp).eval(std::vector<double>(static_cast<size_t>(sp.total()), 0.0));
      en.groups[0].scalar *= Complex{std::cos(c), std::sin(c)};
      return;
    }
    auto& slot = en.groups[static_cast<size_t>(group_of_node(n))].phase;
    Expr term(n, sp);
    slot = slot ? *slot + term : term;
  };
  if (phi.expr.node()->kind == NodeKind::Sum) {
    for (const auto& k : phi.expr.node()->kids) add_phase_term(k);
  } else {
    add_phase_term(phi.expr.node());
  }
  if (amp.phase_shift) {
    if (amp.phase_shift->node()->kind == NodeKind::Sum) {
      for (const auto& k : amp.phase_shift->node()->kids) add_phase_term(k);
    } else {
      add_phase_term(amp.phase_shift->node());
    }
  }
  auto add_amp_factor = [&](const NodePtr& n) {
    auto& slot = en.groups[static_cast<size_t>(group_of_node(n))].ampf;
    Expr fac(n, sp);
    slot = slot ? *slot * fac : fac;
  };
  if (amp.expr.node()->kind == NodeKind::Prod) {
    for (const auto& k : amp.expr.node()->kids) add_amp_factor(k);
  } else {
    add_amp_factor(amp.expr.node());
  }
  en.groups[0].scalar *= amp.scalar;
  if (f_separable) {
    en.groups[0].scalar *= f.scale;
    for (int i = 0; i < sp.d; ++i)
      en.groups[static_cast<size_t>(group_id(i))].f_dims.push_back(i);
  } else {
    en.groups[static_cast<size_t>(group_id(0))].full_f = true;
  }
  if (reg) {
    if (reg_per_var) {
      for (int j : en.unbounded_theta)
        en.groups[static_cast<size_t>(group_id(sp.d + j))].m_dims.push_back(j);
    } else if (!en.unbounded_theta.empty()) {
      en.groups[static_cast<size_t>(group_id(sp.d + en.unbounded_theta[0]))].radial_m = true;
    }
  }
  return en;
}

}  // namespace

OscIntegral evaluate(const PhaseFunction& phi, const OscAmplitude& a, const TestDensity& f,
                     const CutoffSpec& reg_profile, const QuadratureConfig& cfg) {
  OscIntegral out;
  const VarSpace& sp = phi.space();
  bool has_unbounded = false;
  for (int j = 0; j < sp.s; ++j)
    if (!sp.theta_bounded(j)) has_unbounded = true;
  for (size_t i = 1; i < cfg.eps_sweep.size(); ++i)
    if (!(cfg.eps_sweep[i] < cfg.eps_sweep[i - 1]))
      throw std::invalid_argument("eps sweep must decrease strictly");

  const bool per_var = reg_profile.family == CutoffSpec::Family::PerVariable;

  if (!has_unbounded) {
    Engine en = make_engine(phi, a, f, nullptr, per_var, cfg);
    out.value = en.run(cfg.rel_tol, cfg.abs_floor);
    out.evals = en.evals;
    out.per_eps = {out.value};
    out.error_estimate = cfg.rel_tol * (1 + std::abs(out.value));
    out.converged = true;
    return out;
  }

  std::vector<Complex> vals;
  long evals = 0;
  for (double eps : cfg.eps_sweep) {
    Regularizer m = make_regularizer(reg_profile, eps);
    Engine en = make_engine(phi, a, f, &m, per_var, cfg);
    vals.push_back(en.run(cfg.rel_tol, cfg.abs_floor));
    evals += en.evals;
  }
  out.per_eps = vals;
  out.evals = evals;
  if (vals.size() == 1) {
    out.value = vals[0];
    out.error_estimate = cfg.rel_tol * (1 + std::abs(out.value));
    out.converged = true;
    return out;
  }
  std::vector<double> R;
  for (double e : cfg.eps_sweep) R.push_back(1.0 / e);
  auto extrapolate = [&](bool imag) {
    std::vector<double> comps;
    for (const auto& v : vals) comps.push_back(imag ? v.imag() : v.real());
    size_t k = 0;
    auto g = [&](double) { return comps[std::min(k++, comps.size() - 1)]; };
    return ray_limit(g, R);
  };
  RayLimit re = extrapolate(false), im = extrapolate(true);
  out.value = Complex{re.value, im.value};
  const double scale = 1.0 + std::abs(out.value);
  const double spread = std::abs(vals.back() - out.value) / scale;
  out.error_estimate = spread + cfg.rel_tol;
  out.converged =
      spread < cfg.final_tol ||
      std::abs(vals.back() - vals[vals.size() - 2]) / scale < cfg.final_tol;
  return out;
}

// ---- stationary phase --------------------------------------------------------------------

StationaryPhaseTerm stationary_phase_leading(const Expr& psi, const Expr& g, double lambda,
                                             const Vec& frozen_x, const Vec& seed) {
  const VarSpace& sp = psi.space();
  auto gt = grad(psi, Block::Theta);
  auto ht = hessian(psi, Block::Theta);

  auto full_point = [&](const Vec& th) {
    std::vector<double> p(static_cast<size_t>(sp.total()), 0.0);
    for (int i = 0; i < sp.d && i < frozen_x.size(); ++i) p[static_cast<size_t>(i)] = frozen_x(i);
    for (int j = 0; j < sp.s; ++j) p[static_cast<size_t>(sp.d + j)] = th(j);
    return p;
  };
  auto F = [&](const Vec& th) {
    auto p = full_point(th);
    Vec v(sp.s);
    for (int j = 0; j < sp.s; ++j) v(j) = gt[static_cast<size_t>(j)].eval(p);
    return v;
  };
  auto J = [&](const Vec& th) {
    auto p = full_point(th);
    Mat m(sp.s, sp.s);
    for (int i = 0; i < sp.s; ++i)
      for (int j = 0; j < sp.s; ++j)
        m(i, j) = ht[static_cast<size_t>(i)][static_cast<size_t>(j)].eval(p);
    return m;
  };
  NewtonResult nr = newton_solve(F, J, seed);
  if (!nr.converged) throw ComputeError("stationary_phase: no stationary point from seed");
  Mat H = J(nr.point);
  const double det = H.determinant();
  if (std::abs(det) < 1e-12) throw ComputeError("stationary_phase: degenerate Hessian");
  Signature sig = symmetric_signature(H);

  StationaryPhaseTerm term;
  term.point = nr.point;
  term.signature = sig.sgn();
  term.det_hessian = det;
  auto p = full_point(nr.point);
  const double phase_val = lambda * psi.eval(p);
  const double amp_val = g.eval(p);
  const double mag = std::pow(2 * M_PI / lambda, 0.5 * sp.s) / std::sqrt(std::abs(det));
  const double arg = phase_val + 0.25 * M_PI * sig.sgn();
  term.value = mag * amp_val * Complex{std::cos(arg), std::sin(arg)};
  return term;
}

Complex fiber_reduction_factor(const Mat& H) {
  const double det = H.determinant();
  if (std::abs(det) < 1e-14) throw ComputeError("fiber_reduction_factor: degenerate block");
  Signature sig = symmetric_signature(H);
  const double mag = std::pow(2 * M_PI, 0.5 * H.rows()) / std::sqrt(std::abs(det));
  const double arg = 0.25 * M_PI * sig.sgn();
  return mag * Complex{std::cos(arg), std::sin(arg)};
}

// ---- wavefront probe ------------------------------------------------------------------------

WfProbeResult wf_probe(const PhaseFunction& phi, const OscAmplitude& a,
                       const CompactPoint& probe, const WfProbeConfig& cfg) {
  WfProbeResult res;
  res.probe = probe;
  const int d = static_cast<int>(probe.base.size());

  std::vector<double> mags;
  for (double R : cfg.scales) {
    TestDensity f;
    f.dim = d;
    double wave_norm = 0;
    switch (probe.face) {
      case Face::Psi: {
        f.center = probe.base;
        f.width = cfg.loc_width;
        f.wave = -R * probe.fiber;
        wave_norm = R;
        break;
      }
      case Face::E: {
        const double w = cfg.e_width0 * std::sqrt(R);
        f.center = Vec(R * probe.base);
        f.width = w;
        f.wave = -probe.fiber;
        f.scale = std::pow(std::sqrt(M_PI) * w, -d);
        wave_norm = probe.fiber.norm();
        break;
      }
      case Face::PsiE: {
        const double sR = std::sqrt(R);
        const double w = cfg.e_width0 * std::pow(R, 0.25);
        f.center = Vec(sR * probe.base);
        f.width = w;
        f.wave = Vec(-sR * probe.fiber);
        f.scale = std::pow(std::sqrt(M_PI) * w, -d);
        wave_norm = sR;
        break;
      }
      case Face::Interior:
        throw std::invalid_argument("wf_probe expects a boundary probe point");
    }
    // regularizer plateau covering the probed frequency band
    QuadratureConfig qc = cfg.quad;
    CutoffSpec spec;
    const double eps_R = spec.t0.to_double() / (2.0 * (wave_norm + 4.0));
    qc.eps_sweep = {eps_R};
    OscIntegral I = evaluate(phi, a, f, spec, qc);
    mags.push_back(std::abs(I.value));
  }
  res.scales = cfg.scales;
  res.magnitudes = mags;

  const double peak = *std::max_element(mags.begin(), mags.end());
  const double floor = std::max(1e-10 * (peak + 1e-300), cfg.magnitude_floor);
  int below = 0;
  for (double m : mags) below += m < floor ? 1 : 0;
  if (below >= 2 || peak < floor) {
    res.decay_exponent = 12.0;
    res.fit_residual = 0.0;
    res.verdict = WfProbeResult::Verdict::Regular;
    return res;
  }
  SlopeFit fit = fit_log_slope(cfg.scales, mags, floor);
  res.decay_exponent = -fit.slope;
  res.fit_residual = fit.residual;
  if (fit.residual > cfg.fit_residual_max)
    res.verdict = WfProbeResult::Verdict::Inconclusive;
  else if (res.decay_exponent >= cfg.regular_threshold)
    res.verdict = WfProbeResult::Verdict::Regular;
  else if (res.decay_exponent <= cfg.singular_threshold)
    res.verdict = WfProbeResult::Verdict::Singular;
  else
    res.verdict = WfProbeResult::Verdict::Inconclusive;
  return res;
}

}  // namespace sclag
