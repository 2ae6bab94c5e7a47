#include "sclag/profiles.hpp"

#include <cmath>
#include <stdexcept>

namespace sclag {

Jet Jet::variable(double value, int order) {
  Jet j;
  j.n = order;
  j.c[0] = value;
  if (order >= 1) j.c[1] = 1.0;
  return j;
}

Jet Jet::constant(double value, int order) {
  Jet j;
  j.n = order;
  j.c[0] = value;
  return j;
}

Jet operator+(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k <= r.n; ++k) r.c[k] = a.c[k] + b.c[k];
  return r;
}

Jet operator-(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k <= r.n; ++k) r.c[k] = a.c[k] - b.c[k];
  return r;
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k <= r.n; ++k) {
    double s = 0;
    for (int j = 0; j <= k; ++j) s += a.c[j] * b.c[k - j];
    r.c[k] = s;
  }
  return r;
}

Jet operator/(const Jet& a, const Jet& b) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k <= r.n; ++k) {
    double s = a.c[k];
    for (int j = 1; j <= k; ++j) s -= b.c[j] * r.c[k - j];
    r.c[k] = s / b.c[0];
  }
  return r;
}

Jet operator*(double s, const Jet& a) {
  Jet r = a;
  for (int k = 0; k <= r.n; ++k) r.c[k] *= s;
  return r;
}

Jet operator+(const Jet& a, double s) {
  Jet r = a;
  r.c[0] += s;
  return r;
}

Jet operator-(double s, const Jet& a) {
  Jet r;
  r.n = a.n;
  for (int k = 0; k <= r.n; ++k) r.c[k] = -a.c[k];
  r.c[0] += s;
  return r;
}

Jet jet_sqrt(const Jet& a) {
  Jet r;
  r.n = a.n;
  r.c[0] = std::sqrt(a.c[0]);
  for (int k = 1; k <= r.n; ++k) {
    double s = a.c[k];
    for (int j = 1; j < k; ++j) s -= r.c[j] * r.c[k - j];
    r.c[k] = s / (2.0 * r.c[0]);
  }
  return r;
}

Jet jet_exp(const Jet& a) {
  // e' = a' e  =>  k e_k = sum_{j=1..k} j a_j e_{k-j}
  Jet r;
  r.n = a.n;
  r.c[0] = std::exp(a.c[0]);
  for (int k = 1; k <= r.n; ++k) {
    double s = 0;
    for (int j = 1; j <= k; ++j) s += j * a.c[j] * r.c[k - j];
    r.c[k] = s / k;
  }
  return r;
}

namespace {

// f(t) = exp(-1/t) for t > 0, 0 otherwise, as a jet at t0.
Jet bump_half(const Jet& t) {
  if (t.c[0] <= 0.0) return Jet::constant(0.0, t.n);
  if (t.c[0] < 1e-3) return Jet::constant(0.0, t.n);  // below double underflow of exp(-1000)
  return jet_exp(0.0 - (Jet::constant(1.0, t.n) / t));
}

}  // namespace

Jet smooth_step_jet(double t, int order) {
  if (t <= 0.0) return Jet::constant(0.0, order);
  if (t >= 1.0) return Jet::constant(1.0, order);
  Jet tj = Jet::variable(t, order);
  Jet f = bump_half(tj);
  Jet g = bump_half(1.0 - tj);
  return f / (f + g);
}

double smooth_step(double t) { return smooth_step_jet(t, 0).c[0]; }

double smooth_norm_profile(double u, int k) {
  if (k > Jet::kMax) throw std::invalid_argument("smooth_norm_profile: derivative order too high");
  double fact = 1.0;
  for (int j = 2; j <= k; ++j) fact *= j;
  if (u >= 9.0) {
    // G = sqrt(u) exactly
    Jet uj = Jet::variable(u, k);
    return jet_sqrt(uj).c[k] * fact;
  }
  if (u <= 4.0) {
    Jet uj = Jet::variable(u, k);
    return jet_sqrt(uj + 1.0).c[k] * fact;
  }
  Jet uj = Jet::variable(u, k);
  Jet w = smooth_step_jet((u - 4.0) / 5.0, k);
  // Rescale the step jet from t = (u-4)/5 to the u variable.
  double p = 1.0;
  for (int j = 1; j <= k; ++j) {
    p /= 5.0;
    w.c[j] *= p;
  }
  Jet g = jet_sqrt(uj + 1.0) * (1.0 - w) + jet_sqrt(uj) * w;
  return g.c[k] * fact;
}

CutoffProfile::CutoffProfile(Rational t0, Rational t1) : t0_(t0), t1_(t1) {
  if (!(t0 < t1) || !t0.is_positive())
    throw std::invalid_argument("cutoff profile requires 0 < t0 < t1");
  a_ = t0.to_double();
  b_ = t1.to_double();
}

double CutoffProfile::deriv(double t, int k) const {
  if (t <= a_ || t >= b_) return k == 0 ? (t <= a_ ? 1.0 : 0.0) : 0.0;
  // chi = 1 - s7(u), u = (t - a)/(b - a), s7 = -20u^7 + 70u^6 - 84u^5 + 35u^4
  const double w = b_ - a_;
  const double u = (t - a_) / w;
  static const double coef[8] = {0, 0, 0, 0, 35, -84, 70, -20};
  double v = 0;
  for (int p = 7; p >= 0; --p) {
    const int q = p - k;
    if (q < 0) continue;
    double fall = 1.0;
    for (int j = 0; j < k; ++j) fall *= (p - j);
    double up = coef[p] * fall;
    if (up == 0.0) continue;
    double upow = 1.0;
    for (int j = 0; j < q; ++j) upow *= u;
    v += up * upow;
  }
  double scale = 1.0;
  for (int j = 0; j < k; ++j) scale /= w;
  double s7k = v * scale;
  return k == 0 ? 1.0 - s7k : -s7k;
}

}  // namespace sclag
