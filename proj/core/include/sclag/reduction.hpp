#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "sclag/oscint.hpp"
#include "sclag/phase.hpp"

namespace sclag {

/// Order bookkeeping in the density convention: amplitudes are
/// half-density-in-x, density-in-fiber valued, with the density weights
/// folded into the exponents.  mu_e and mu_psi are invariant under the
/// fiber surgeries and identify the distribution order.
struct OrderRecord {
  Rational m_e, m_psi;
  Rational s;  // fiber dimension
  Rational e;  // excess

  Rational mu_e() const { return m_e - s / Rational(2) + e / Rational(2); }
  Rational mu_psi() const { return m_psi + s / Rational(2) + e / Rational(2); }
  friend bool operator==(const OrderRecord& a, const OrderRecord& b) {
    return a.m_e == b.m_e && a.m_psi == b.m_psi && a.s == b.s && a.e == b.e;
  }
};

/// Distribution orders derived from amplitude data; the e-order follows the
/// sign convention in which the constant function has e-order -d/4.
struct LagrangianOrders {
  Rational psi_order;  // delta_0 normalization: d/4
  Rational e_order;    // constant-function normalization: -d/4
  Rational mu_e, mu_psi;
};

LagrangianOrders order_normalize(Rational m_e, Rational m_psi, Rational d, Rational s,
                                 Rational e);

/// Result of one phase surgery.  The scalar amplitude carrier (expression,
/// optional phase shift, complex scalar) feeds numerical cross-checks; the
/// order delta is recorded in the density convention.
struct SurgeryResult {
  PhaseFunction phase;
  Amplitude amplitude;                     // scalar carrier with its scalar order
  std::optional<Expr> amp_phase_shift;     // effective amplitude includes e^{i shift}
  Complex scalar_factor{1.0, 0.0};         // numeric factor from the surgery
  Complex maslov_factor{1.0, 0.0};         // unit-modulus contribution
  OrderRecord order_before, order_after;
  std::string provenance;

  OscAmplitude osc_amplitude() const {
    return OscAmplitude{amplitude.expr, amp_phase_shift, scalar_factor * maslov_factor};
  }
};

// ---- the four surgeries -------------------------------------------------------------

/// phi -> phi + r for bounded smooth r (order (0,0)); boundary critical set
/// and Lagrangian samples are unchanged.  With rotate_amplitude the result
/// carries the e^{-i r} amplitude convention so the distribution is equal,
/// not just equivalent.
SurgeryResult add_smooth(const PhaseFunction& phi, const Amplitude& a, const Expr& r,
                         bool rotate_amplitude = true, Rational excess = Rational(0));

/// phi -> phi + c <x><theta> t^2 on the product chart with a new bounded
/// fiber variable t in (-1/2, 1/2); the amplitude is lifted so that the
/// represented distribution is unchanged to leading order.
SurgeryResult increase_fiber(const PhaseFunction& phi, const Amplitude& a,
                             Rational c = Rational(200), Rational excess = Rational(0));

struct ReduceFiberConfig {
  double quad_tol = 1e-8;        // fiber-block quadratic-dependence tolerance
  double cond_max = 1e8;         // condition-number guard for the split
  int max_rank = 2;              // closed-form solve limit for the eliminated block
  CriticalSolveConfig solve;
};

/// Eliminates a rank-r quadratic fiber block at the critical point p0:
/// variable split by pivoted eigen-decomposition, the implicit solve done in
/// closed form (the block must enter the phase quadratically), amplitude
/// transported with the stationary-phase factor
///   (2 pi)^{r/2} |det Q|^{-1/2} e^{i pi sgn(Q)/4}
/// and order delta (-r/2, +r/2) in the density convention.
SurgeryResult reduce_fiber(const PhaseFunction& phi, const Amplitude& a,
                           const CriticalPoint& p0, const ReduceFiberConfig& cfg = {},
                           std::optional<OrderRecord> before = std::nullopt);

struct EliminateExcessConfig {
  double fiber_tol = 1e-8;
  double integration_halfwidth = 40.0;  // truncation for unbounded fiber integrals
  CriticalSolveConfig solve;
};

/// Freezes an excess block along which lambda_phi is constant and integrates
/// the amplitude over the fiber; requires the amplitude to factor across the
/// split.  Order delta (0, +e).
SurgeryResult eliminate_excess(const PhaseFunction& phi, const Amplitude& a,
                               const std::vector<int>& fiber_vars,
                               const EliminateExcessConfig& cfg = {});

/// Searches for an admissible excess split of the given size.
std::optional<std::vector<int>> find_excess_split(const PhaseFunction& phi, int excess,
                                                  const CriticalSolveConfig& cfg = {});

// ---- equivalence ---------------------------------------------------------------------

struct EquivalenceVerdict {
  bool applicable = false;  // all preconditions hold
  std::vector<std::string> failed_preconditions;
  bool equivalent = false;
  int signature_1 = 0, signature_2 = 0;
  double lambda_distance = 0;
  double patch_hausdorff = 0;
};

struct EquivalenceConfig {
  double lambda_tol = 1e-8;
  double hausdorff_tol = 1e-6;
  int patch_samples = 8;
  double patch_radius = 0.3;
  CriticalSolveConfig solve;
};

/// Equivalence of two phases at matched critical points: same base and fiber
/// dimensions, both clean with equal excess, matching Lagrangian point and
/// local patch; the verdict is equality of the fiber Hessian signatures.
EquivalenceVerdict equivalence_decide(const PhaseFunction& phi1, const PhaseFunction& phi2,
                                      const CriticalPoint& p1, const CriticalPoint& p2,
                                      const EquivalenceConfig& cfg = {});

}  // namespace sclag
