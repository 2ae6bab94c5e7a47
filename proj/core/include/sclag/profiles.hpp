#pragma once

#include <array>
#include <cstddef>

#include "sclag/rational.hpp"

namespace sclag {

/// Truncated Taylor series (jet) in one variable, used to obtain exact
/// higher derivatives of the fixed smooth radial profiles below.
struct Jet {
  static constexpr int kMax = 12;
  int n = 0;                          // highest retained derivative order
  std::array<double, kMax + 1> c{};  // c[k] = f^(k)(t0) / k!

  static Jet variable(double value, int order);
  static Jet constant(double value, int order);
};

Jet operator+(const Jet& a, const Jet& b);
Jet operator-(const Jet& a, const Jet& b);
Jet operator*(const Jet& a, const Jet& b);
Jet operator/(const Jet& a, const Jet& b);
Jet operator*(double s, const Jet& a);
Jet operator+(const Jet& a, double s);
Jet operator-(double s, const Jet& a);
Jet jet_sqrt(const Jet& a);
Jet jet_exp(const Jet& a);

/// k-th derivative of the smooth-norm radial profile G, where the smooth
/// norm of a vector v is G(|v|^2).  G is smooth and positive on [0, inf),
/// G(u) = sqrt(u) for u >= 9 (i.e. [v] = |v| outside radius 3) and
/// G(u) = sqrt(1 + u) for u <= 4.  A C^infty step in u blends the two
/// branches on [4, 9].
double smooth_norm_profile(double u, int k);

/// C^infty step: 0 for t <= 0, 1 for t >= 1 (exp-based partition).
double smooth_step(double t);
/// Jet version of smooth_step at t (for derivative towers).
Jet smooth_step_jet(double t, int order);

/// Polynomial cutoff profile chi(t; t0, t1): equals 1 for t <= t0, 0 for
/// t >= t1, and a fixed C^3 heptic smoothstep in between.  Derivatives up
/// to any order are available (piecewise polynomial; one-sided at joints).
class CutoffProfile {
 public:
  CutoffProfile(Rational t0, Rational t1);

  double operator()(double t) const { return deriv(t, 0); }
  double deriv(double t, int k) const;

  Rational t0() const { return t0_; }
  Rational t1() const { return t1_; }
  bool compactly_supported() const { return true; }

 private:
  Rational t0_, t1_;
  double a_, b_;  // doubles of t0, t1
};

}  // namespace sclag
