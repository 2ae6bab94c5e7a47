#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sclag/expr.hpp"
#include "sclag/numerics.hpp"

namespace sclag {

// ---- radial compactification -------------------------------------------------

/// Radial compactification R^d -> (B^d)°.  Equals (x/|x|)(1 - 1/|x|) for
/// |x| >= 3; inside radius 3 a fixed smooth increasing radial profile is
/// used.  The interpolation region never enters boundary-limit code paths.
Vec iota(const Vec& x);
/// Inverse of iota; rejects |y| >= 1.
Vec iota_inv(const Vec& y);
/// The radial profile p with iota(x) = (x/|x|) p(|x|).
double iota_radial_profile(double r);

// ---- boundary defining function comparison -------------------------------------

struct BdfReport {
  bool equivalent = false;
  double worst_spread = 0;   // max over directions of max/min sampled ratio
  double limit_min = 0, limit_max = 0;
  double worst_slope = 0;    // log-log growth rate of the ratio (0 = bounded)
  std::string detail;
};

/// Checks whether rho1/rho2 extends positively and boundedly along rays
/// x = R omega (R in `radii`, `directions` directions of S^{d-1}).
/// Both arguments are expressions over the x-block of their space.
BdfReport bdf_equivalent(const Expr& rho1, const Expr& rho2, int directions = 50,
                         std::vector<double> radii = {});

// ---- scattering differential ----------------------------------------------------

struct ScDifferential {
  Expr radial_coeff;             // coefficient of d(rho)/rho^2 in the chart rho = 1/[x]
  std::vector<Expr> tangential;  // coefficients of the (overcomplete) angular frame
};

struct ScDifferentialReport {
  ScDifferential coefficients;
  bool order_ok = false;          // |f| <= C <x> on the sampled rays
  bool vanishes_at_boundary = false;
  double worst_boundary_value = 0;
  std::vector<double> radial_limits;  // per sampled direction
};

/// Coefficients of the scattering differential of f (a function of x with
/// declared order <= 1) in the boundary chart rho = 1/[x]:
///   radial  = -(x . grad f) / [x]
///   tangential_j = (grad f - (x/[x]) (x.grad f)/[x])_j
/// For bounded smooth f all coefficients vanish at the boundary.
ScDifferentialReport sc_differential(const Expr& f, int directions = 24,
                                     std::vector<double> radii = {});

// ---- scattering maps -------------------------------------------------------------

/// Product-form map Psi = Psi_X x Psi_Y in Euclidean charts on both factors,
/// stored over the joint space: x components may reference only x variables,
/// theta components only theta variables.
struct ScMap {
  VarSpace space;
  std::vector<Expr> x_comps;  // size d
  std::vector<Expr> t_comps;  // size s

  bool product_form() const;
};

ScMap identity_map(const VarSpace& sp);
ScMap compose(const ScMap& outer, const ScMap& inner);
Expr pullback(const ScMap& psi, const Expr& a);

enum class ChartKind { Euclidean, Ball };

struct ScMapVerdict {
  bool ok = false;
  double h_min = 0, h_max = 0;  // limits of the bdf quotient across directions
  double worst_slope = 0;
  bool order_preserved = false;
  std::string failure;          // empty when ok; else the offending ray
};

/// Verifies Psi^* rho_Z = rho_Y * h with h positive and bounded by
/// asymptotic ray sampling on both factors, plus an order-preservation
/// check on a test amplitude.
ScMapVerdict scmap_check(const ScMap& psi, int directions = 24);

/// Single-factor version: comps over VarSpace(n,1) (x variables), charts on
/// either side either Euclidean (bdf 1/[.]) or Ball (bdf 1 - [.]).
/// `bdf_vars`/`bdf_comps` select which variables/components carry the bdf
/// norm; empty means all.  Rays approach the bdf sphere with the remaining
/// variables held at `frozen` values.
ScMapVerdict factor_map_check(const std::vector<Expr>& comps, ChartKind source,
                              ChartKind target, std::vector<int> bdf_vars = {},
                              std::vector<int> bdf_comps = {},
                              const std::vector<double>& frozen = {}, int directions = 24,
                              const std::vector<Vec>& custom_dirs = {});

// ---- rank comparison (compactified vs scattering differential) -------------------

struct RankCompareResult {
  int rank_scd = -1;   // rank of the scattering-differential coefficient matrix
  int rank_tpsi = -1;  // rank of T(iota ' f)
  bool equal = false;
  double h_norm = 0;   // limit of [y]^{-1}|f| along the ray (precondition)
};

struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// f: R^s -> R^d given componentwise over VarSpace(s,1) (x variables),
/// of order <= 1 with rho|f| bounded away from zero along the ray.
RankCompareResult rank_compare(const std::vector<Expr>& f, const Vec& direction,
                               std::vector<double> radii = {});

// ---- boundary points, tangents, contact forms -------------------------------------

enum class Face { Interior, E, Psi, PsiE };

struct CompactPoint {
  Face face = Face::Interior;
  Vec base;   // Interior/Psi: x in R^d; E/PsiE: unit direction
  Vec fiber;  // Interior/E: xi in R^d; Psi/PsiE: unit direction

  /// Continuous embedding into B^d x B^d used for distances.
  Vec embed() const;
  static double distance(const CompactPoint& a, const CompactPoint& b);
};

struct TangentSample {
  CompactPoint at;
  Vec dbase;   // tangent to the base slot (sphere-tangent on E/PsiE)
  Vec dfiber;  // tangent to the fiber slot (sphere-tangent on Psi/PsiE)
  double tau = 0, dtau = 0;  // corner blow-up coordinate and its variation
};

enum class ContactForm { AlphaPsi, AlphaE, ScAlphaPsi, ScAlphaE, AlphaPsiE };

struct FaceMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Evaluates the requested contact form on a tangent sample.  In the
/// Euclidean picture alpha_psi = (xi/[xi]).dx and alpha_e = -(x/[x]).dxi;
/// alpha_psie is evaluated in the corner blow-up chart (rho, tau, x, xi).
double contact_eval(ContactForm form, const TangentSample& v);

}  // namespace sclag
