#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sclag/phase.hpp"
#include "sclag/profiles.hpp"
#include "sclag/sgsymbols.hpp"

namespace sclag {

using Complex = std::complex<double>;

// ---- regularizers -----------------------------------------------------------------

/// Cutoff profile request: the fixed polynomial bump on [t0, t1], or a
/// non-compact tail shape (which make_regularizer rejects).  Two admissible
/// families are provided: the radial one chi(eps [theta]) and the
/// per-variable product prod_j chi(eps [theta_j]); oscillatory integrals are
/// independent of the choice.
struct CutoffSpec {
  Rational t0 = Rational(1, 2);
  Rational t1 = Rational(1);
  bool compact = true;   // false models profiles without compact support
  bool smooth = true;    // exp-based C^infty step; false = polynomial C^3 bump
  enum class Family { Radial, PerVariable } family = Family::Radial;
};

/// m_eps(theta) = chi(eps * [theta]) over the unbounded fiber block; equals
/// 1 for [theta] <= t0/eps and vanishes beyond t1/eps.
class Regularizer {
 public:
  Regularizer(CutoffSpec spec, double eps);

  double operator()(double smooth_norm_theta) const {
    return profile_deriv(eps_ * smooth_norm_theta, 0);
  }
  double profile_deriv(double t, int k) const;
  double eps() const { return eps_; }
  /// Support radius in [theta].
  double support() const { return t1_ / eps_; }

 private:
  CutoffProfile poly_;
  bool smooth_;
  double t0_, t1_;
  double eps_;
};

struct RegularizerReport {
  bool ok = false;
  double worst_constant = 0;  // sup over k+|alpha| <= 2 of the weighted bound
  double limit_at_interior = 0;  // m_eps at a fixed interior point as eps -> 0
  std::string detail;
};

/// Builds the regularizer and numerically verifies the scattering derivative
/// bounds |(rho^2 d_rho)^k (rho d_y)^a m_eps| <= C rho^{k+|a|} up to order 2.
Regularizer make_regularizer(const CutoffSpec& spec, double eps,
                             RegularizerReport* report = nullptr);

// ---- test densities ----------------------------------------------------------------

/// Closed-form rapidly decaying test density on the base:
///   f(x) = gaussian(x) * angular cap * radial window * e^{i wave . x}
/// (all localizer factors optional).
struct TestDensity {
  int dim = 1;
  std::optional<Vec> center;   // gaussian center
  double width = 1.0;          // gaussian width
  bool use_gaussian = true;
  Vec wave;                    // oscillation vector (empty = none)
  std::optional<std::pair<Vec, double>> angular_cap;      // (axis, cos threshold)
  std::optional<std::pair<double, double>> radial_window;  // smooth window on |x|
  double scale = 1.0;

  Complex operator()(const Vec& x) const;
  /// Per-axis integration box covering the effective support.
  std::vector<std::pair<double, double>> support_box() const;

  static TestDensity gaussian(const Vec& center, double width);
};

// ---- quadrature ------------------------------------------------------------------------

struct QuadratureConfig {
  double rel_tol = 1e-7;
  double abs_floor = 1e-13;
  std::vector<double> eps_sweep = {0.25, 0.125, 0.0625};
  long max_evals = 80000000;
  int max_depth = 16;
  int min_panels_per_period = 3;  // one GL16 panel resolves ~3 periods
  int threads = 1;
  double final_tol = 1e-6;  // acceptance bar on the eps-extrapolation spread
};

struct OscIntegral {
  Complex value{0, 0};
  double error_estimate = 0;
  bool converged = false;
  std::vector<Complex> per_eps;
  long evals = 0;
};

struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Amplitude carrier for oscillatory integrals: a real expression times an
/// optional unit-phase factor e^{i shift} and a complex scalar.
struct OscAmplitude {
  Expr expr;
  std::optional<Expr> phase_shift;
  Complex scalar{1.0, 0.0};
};

/// Regularized oscillatory pairing  lim_eps  iint e^{i phi} a f m_eps,
/// evaluated by nested adaptive panel quadrature (fiber variables outermost)
/// with extrapolation over the eps sweep.
OscIntegral evaluate(const PhaseFunction& phi, const OscAmplitude& a, const TestDensity& f,
                     const CutoffSpec& reg_profile, const QuadratureConfig& cfg = {});

inline OscIntegral evaluate(const PhaseFunction& phi, const Amplitude& a, const TestDensity& f,
                            const QuadratureConfig& cfg = {}) {
  return evaluate(phi, OscAmplitude{a.expr, std::nullopt, Complex{1, 0}}, f, CutoffSpec{}, cfg);
}

// ---- stationary phase -----------------------------------------------------------------------

struct StationaryPhaseTerm {
  Complex value{0, 0};
  Vec point;       // the stationary point
  int signature = 0;
  double det_hessian = 0;
};

/// Leading term of  int e^{i lambda psi(theta)} g(theta) dtheta  at a
/// non-degenerate interior stationary point reached from `seed`:
///   (2 pi / lambda)^{s/2} |det H|^{-1/2} e^{i lambda psi} e^{i pi sgn(H)/4} g.
/// psi and g are theta-expressions (x variables frozen at `frozen_x`).
StationaryPhaseTerm stationary_phase_leading(const Expr& psi, const Expr& g, double lambda,
                                             const Vec& frozen_x, const Vec& seed);

/// Gaussian fiber factor (2 pi)^{r/2} |det H|^{-1/2} e^{i pi sgn(H)/4} for a
/// non-degenerate symmetric block H.
Complex fiber_reduction_factor(const Mat& H);

// ---- scattering wavefront probe ------------------------------------------------------------------

struct WfProbeResult {
  CompactPoint probe;
  double decay_exponent = 0;
  double fit_residual = 0;
  enum class Verdict { Regular, Singular, Inconclusive } verdict = Verdict::Inconclusive;
  std::vector<double> scales;
  std::vector<double> magnitudes;
};

struct WfProbeConfig {
  std::vector<double> scales = {4, 8, 16, 32};
  double regular_threshold = 4.0;
  double singular_threshold = 1.5;
  double fit_residual_max = 1.0;
  double loc_width = 1.0;        // spatial localizer width for psi probes
  double e_width0 = 1.0;         // e/corner probes: width grows like sqrt(R)
  double magnitude_floor = 1e-8; // pairings below this count as fully decayed
  QuadratureConfig quad;

  WfProbeConfig() {
    quad.rel_tol = 1e-4;
    quad.abs_floor = 1e-12;
  }
};

/// Localized-decay wavefront probe: pairs the oscillatory integral against a
/// family of localized plane-wave densities concentrating at the probed
/// boundary direction and fits the decay exponent over dyadic scales.
WfProbeResult wf_probe(const PhaseFunction& phi, const OscAmplitude& a,
                       const CompactPoint& probe, const WfProbeConfig& cfg = {});

}  // namespace sclag
