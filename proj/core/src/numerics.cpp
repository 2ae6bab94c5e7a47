#include "sclag/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>

namespace sclag {

std::vector<double> default_radii() { return {1e3, 1e4, 1e5}; }

RayLimit ray_limit(const std::function<double(double)>& g, std::span<const double> radii,
                   double rel_tol) {
  RayLimit out;
  const size_t n = radii.size();
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = g(radii[i]);
  if (n == 1) {
    out.value = v[0];
    out.converged = true;
    return out;
  }
  // Estimate the decay exponent from successive differences, assuming the
  // radii are geometric with ratio q: (v1 - v0)/(v2 - v1) ~ q^p.
  const double q = radii[1] / radii[0];
  double p = 0;
  const double d0 = v[1] - v[0];
  const double d1 = v[n - 1] - v[n - 2];
  const double dprev = v[n - 2] - (n >= 3 ? v[n - 3] : v[0]);
  if (d1 != 0.0 && dprev != 0.0 && dprev / d1 > 0) p = std::log(dprev / d1) / std::log(q);
  out.rate = p;
  // Richardson step using the fitted rate when sane, else last value.
  double value = v[n - 1];
  if (p > 0.1 && p < 50) {
    const double f = std::pow(q, p);
    value = v[n - 1] + (v[n - 1] - v[n - 2]) / (f - 1.0);
  }
  out.value = value;
  const double scale = 1.0 + std::abs(value);
  out.stability = std::abs(v[n - 1] - v[n - 2]) / scale;
  out.converged = out.stability < rel_tol || std::abs(v[n - 1] - value) / scale < rel_tol;
  (void)d0;
  return out;
}

SlopeFit fit_log_slope(std::span<const double> x, std::span<const double> y, double floor) {
  SlopeFit f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i) {
    const double ay = std::abs(y[i]);
    if (ay < floor) continue;
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(ay));
    ++n;
  }
  f.used = n;
  if (n < 2) return f;
  for (int i = 0; i < n; ++i) {
    sx += lx[static_cast<size_t>(i)];
    sy += ly[static_cast<size_t>(i)];
    sxx += lx[static_cast<size_t>(i)] * lx[static_cast<size_t>(i)];
    sxy += lx[static_cast<size_t>(i)] * ly[static_cast<size_t>(i)];
  }
  const double det = n * sxx - sx * sx;
  f.slope = (n * sxy - sx * sy) / det;
  f.intercept = (sy - f.slope * sx) / n;
  double r2 = 0;
  for (int i = 0; i < n; ++i) {
    const double e = ly[static_cast<size_t>(i)] - (f.intercept + f.slope * lx[static_cast<size_t>(i)]);
    r2 += e * e;
  }
  f.residual = std::sqrt(r2 / n);
  return f;
}

int svd_rank(const Mat& m, double tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double cut = tol * s(0);
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

Signature symmetric_signature(const Mat& m, double tol) {
  Signature sig;
  if (m.size() == 0) return sig;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  const auto& ev = es.eigenvalues();
  double maxabs = 0;
  for (int i = 0; i < ev.size(); ++i) maxabs = std::max(maxabs, std::abs(ev(i)));
  const double cut = tol * std::max(maxabs, 1e-300);
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > cut)
      ++sig.positive;
    else if (ev(i) < -cut)
      ++sig.negative;
    else
      ++sig.zero;
  }
  return sig;
}

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& p, double h) {
  Vec g(p.size());
  for (int i = 0; i < p.size(); ++i) {
    Vec pp = p, pm = p;
    pp(i) += h;
    pm(i) -= h;
    const double c1 = (f(pp) - f(pm)) / (2 * h);
    pp(i) = p(i) + h / 2;
    pm(i) = p(i) - h / 2;
    const double c2 = (f(pp) - f(pm)) / h;
    g(i) = (4 * c2 - c1) / 3;  // Richardson to O(h^4)
  }
  return g;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& p, double h) {
  const Vec f0 = f(p);
  Mat J(f0.size(), p.size());
  for (int i = 0; i < p.size(); ++i) {
    Vec pp = p, pm = p;
    pp(i) += h;
    pm(i) -= h;
    const Vec c1 = (f(pp) - f(pm)) / (2 * h);
    pp(i) = p(i) + h / 2;
    pm(i) = p(i) - h / 2;
    const Vec c2 = (f(pp) - f(pm)) / h;
    J.col(i) = (4 * c2 - c1) / 3;
  }
  return J;
}

NewtonResult newton_solve(const std::function<Vec(const Vec&)>& F,
                          const std::function<Mat(const Vec&)>& J, Vec start, double tol,
                          int max_iter) {
  NewtonResult res;
  Vec u = std::move(start);
  double r = F(u).norm();
  for (int it = 0; it < max_iter; ++it) {
    if (r < tol) break;
    const Vec f = F(u);
    const Mat j = J(u);
    Eigen::JacobiSVD<Mat> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    Vec step = svd.solve(f);
    double lambda = 1.0;
    Vec next = u - step;
    double rn = F(next).norm();
    int halvings = 0;
    while (rn > r && halvings < 30) {
      lambda *= 0.5;
      next = u - lambda * step;
      rn = F(next).norm();
      ++halvings;
    }
    if (rn >= r && r < 1e-9) break;  // stagnated at an acceptable residual
    u = next;
    r = rn;
    res.iterations = it + 1;
  }
  res.point = u;
  res.residual = r;
  res.converged = r < tol * 10;
  return res;
}

std::vector<Vec> sphere_directions(int n, int count, unsigned seed) {
  std::vector<Vec> dirs;
  if (n == 1) {
    Vec p(1), m(1);
    p(0) = 1;
    m(0) = -1;
    dirs.push_back(p);
    dirs.push_back(m);
    return dirs;
  }
  if (n == 2) {
    for (int i = 0; i < count; ++i) {
      const double a = 2 * M_PI * (i + 0.5) / count;
      Vec v(2);
      v << std::cos(a), std::sin(a);
      dirs.push_back(v);
    }
    return dirs;
  }
  if (n == 3) {
    // Fibonacci sphere
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double a = ga * i;
      Vec v(3);
      v << r * std::cos(a), r * std::sin(a), z;
      dirs.push_back(v);
    }
    return dirs;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  for (int i = 0; i < count; ++i) {
    Vec v(n);
    for (int j = 0; j < n; ++j) v(j) = gauss(rng);
    v.normalize();
    dirs.push_back(v);
  }
  return dirs;
}

std::vector<Vec> tangent_basis(const Vec& w) {
  const int n = static_cast<int>(w.size());
  // Householder complement of w
  Mat B = Mat::Identity(n, n);
  Vec v = w;
  v(0) += (w(0) >= 0 ? 1.0 : -1.0) * w.norm();
  if (v.norm() > 1e-14) B -= (2.0 / v.squaredNorm()) * (v * v.transpose());
  std::vector<Vec> tau;
  for (int i = 1; i < n; ++i) tau.push_back(B.col(i));
  return tau;
}

Vec sphere_chart(const Vec& w0, const std::vector<Vec>& tau, const Vec& u) {
  Vec p = w0;
  for (size_t a = 0; a < tau.size(); ++a) p += u(static_cast<int>(a)) * tau[a];
  return p / p.norm();
}

double pairwise_sum(std::span<const double> v) {
  const size_t n = v.size();
  if (n == 0) return 0;
  if (n <= 8) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  const size_t h = n / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

int default_threads() {
  if (const char* env = std::getenv("SCLAG_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

void parallel_for(int n, const std::function<void(int)>& fn, int threads) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int nw = std::min(threads, n);
  pool.reserve(static_cast<size_t>(nw));
  for (int t = 0; t < nw; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

double parallel_sum(int n, const std::function<double(int)>& fn, int threads) {
  std::vector<double> vals(static_cast<size_t>(n));
  parallel_for(n, [&](int i) { vals[static_cast<size_t>(i)] = fn(i); }, threads);
  return pairwise_sum(vals);
}

namespace {

GaussRule make_gauss(int n) {
  // Golub-Welsch via the symmetric tridiagonal Jacobi matrix.
  Mat J = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  GaussRule r;
  r.nodes.resize(static_cast<size_t>(n));
  r.weights.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    r.nodes[static_cast<size_t>(i)] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    r.weights[static_cast<size_t>(i)] = 2.0 * v * v;
  }
  return r;
}

}  // namespace

const GaussRule& gauss_rule(int n) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss(n)).first;
  return it->second;
}

const GaussKronrod& gk15() {
  static const GaussKronrod rule = [] {
    GaussKronrod r{};
    const double xk[8] = {0.991455371120813, 0.949107912342759, 0.864864423359769,
                          0.741531185599394, 0.586087235467691, 0.405845151377397,
                          0.207784955007898, 0.0};
    const double wk[8] = {0.022935322010529, 0.063092092629979, 0.104790010322250,
                          0.140653259715525, 0.169004726639267, 0.190350578064785,
                          0.204432940075298, 0.209482141084728};
    const double wg[4] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                          0.417959183673469};
    for (int i = 0; i < 7; ++i) {
      r.nodes[static_cast<size_t>(i)] = -xk[i];
      r.nodes[static_cast<size_t>(14 - i)] = xk[i];
      r.wk[static_cast<size_t>(i)] = wk[i];
      r.wk[static_cast<size_t>(14 - i)] = wk[i];
      r.wg[static_cast<size_t>(i)] = 0;
      r.wg[static_cast<size_t>(14 - i)] = 0;
    }
    r.nodes[7] = 0.0;
    r.wk[7] = wk[7];
    // Gauss points sit at the odd Kronrod indices 1, 3, 5, 7 (and mirrors)
    r.wg[1] = wg[0];
    r.wg[13] = wg[0];
    r.wg[3] = wg[1];
    r.wg[11] = wg[1];
    r.wg[5] = wg[2];
    r.wg[9] = wg[2];
    r.wg[7] = wg[3];
    return r;
  }();
  return rule;
}

double hausdorff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  auto one_sided = [](const std::vector<Vec>& p, const std::vector<Vec>& q) {
    double worst = 0;
    for (const auto& u : p) {
      double best = 1e300;
      for (const auto& v : q) best = std::min(best, (u - v).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : 1e300;
  return std::max(one_sided(a, b), one_sided(b, a));
}

}  // namespace sclag
