#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sclag/geometry.hpp"
#include "sclag/sgsymbols.hpp"

namespace sclag {

/// Phase carrier: an order-(1,1) expression in the Euclidean chart with an
/// optional conic domain restriction in the fiber directions.
struct PhaseFunction {
  Expr expr;

  struct ConeRestriction {
    Vec theta_axis;   // unit axis in the unbounded fiber variables
    double min_cos = 0.0;  // admit directions with |eta . axis| >= min_cos
  };
  std::optional<ConeRestriction> domain;

  const VarSpace& space() const { return expr.space(); }
};

// ---- validation -------------------------------------------------------------------

struct PhaseVerdict {
  bool ok = false;
  bool order_ok = false;
  double empirical_C = 0;  // inf of the phase-inequality quantity over the grid
  std::optional<std::vector<double>> witness;  // a failing grid point
  std::string detail;
};

struct PhaseValidateConfig {
  double r1 = 10.0;     // the inequality is enforced for |theta| >= r1
  int directions = 12;  // per sphere factor
  int radii = 8;
  double r_max = 1e5;
  double c_min = 1e-6;
  int order_depth = 1;
};

/// Order check at (1,1) plus the grid check of
///   |<x>^-1 grad_theta phi|^2 + |<theta>^-1 grad_x phi|^2 >= C > 0
/// for |theta| >= r1 (restricted to the declared cone, if any).
PhaseVerdict validate_phase(const PhaseFunction& phi, const PhaseValidateConfig& cfg = {});

// ---- critical manifold ---------------------------------------------------------------

struct CriticalPoint {
  Face face = Face::Interior;
  Vec x;      // Interior/Psi: finite base point; E/PsiE: unit direction
  Vec theta;  // Interior/E: finite fiber point; Psi/PsiE: unit direction in the
              // unbounded fiber variables, bounded chart variables appended as-is
  double residual = 0;
  int jac_rank = -1;
};

struct CriticalManifold {
  std::vector<CriticalPoint> points;
  int excess = -1;
  bool clean_on_samples = false;
  std::vector<int> frame;  // indices into (x_0..x_{d-1}, t_0..t_{s-1}) spanning T C_phi
  std::string diagnostics;
};

struct CriticalSolveConfig {
  double newton_tol = 1e-12;
  int max_iter = 50;
  int seed_refine = 2;       // coarse-grid seeds per axis = 2*refine+1
  double seed_span = 2.0;
  int sphere_seeds = 8;
  double dedup_tol = 1e-6;
  double residual_accept = 1e-9;
};

/// Newton-solves the face-reduced critical systems: grad_theta phi = 0 in
/// the interior, the homogeneous-principal-part systems on the boundary
/// faces (unit-sphere normalization).  Excess = s - rank of the critical
/// Jacobian; the cleanness verdict requires a constant rank across all
/// solved points and faces.
CriticalManifold critical_solve(const PhaseFunction& phi,
                                const std::vector<CriticalPoint>& seeds = {},
                                const CriticalSolveConfig& cfg = {});

/// Re-polishes a single seed on its face; throws ComputeError on divergence.
CriticalPoint polish_critical_point(const PhaseFunction& phi, const CriticalPoint& seed,
                                    const CriticalSolveConfig& cfg = {});

struct ComputeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- scattering Hessian -----------------------------------------------------------------

struct ScHessianRecord {
  Mat matrix;  // fiber Hessian in the face chart (radial direction removed on psi-type faces)
  int rank = 0;
  int signature = 0;
  Face face = Face::Interior;
};

/// Fiber Hessian data at a critical point: the full Euclidean fiber Hessian
/// in the interior and on the e-face (of the x-principal part there), and
/// the sphere-restricted Hessian of the theta-homogeneous principal part on
/// psi-type faces.
ScHessianRecord sc_hessian(const PhaseFunction& phi, const CriticalPoint& p);

// ---- the Lagrangian map ------------------------------------------------------------------

struct LagrangianSample {
  CriticalPoint source;
  CompactPoint point;
  Vec euclid_x, euclid_xi;  // Euclidean-limit coordinates (pre-compactification)
};

/// lambda_phi at a critical point: (x, grad_x phi) with compactified entries
/// and the face tag inherited from which boundary defining functions vanish.
LagrangianSample lambda_phi(const PhaseFunction& phi, const CriticalPoint& p);

struct LagrangianSampleSet {
  std::vector<LagrangianSample> samples;
  bool rank_ok = false;        // rank T lambda_phi == d at interior samples
  bool submersion_ok = false;  // face ranks equal dim C^face - excess
  std::string diagnostics;
};

LagrangianSampleSet sample_lagrangian(const PhaseFunction& phi, const CriticalManifold& cm);

// ---- Legendrian verification ----------------------------------------------------------------

struct LegendrianReport {
  double max_alpha_psi = 0;
  double max_alpha_e = 0;
  double max_corner_pairing = 0;  // max |x^ . xi^| over corner samples
  double max_alpha_psie = 0;      // blow-up form residual on corner tangents
  bool ok = false;
  std::string detail;
};

struct InsufficientSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LegendrianCheckConfig {
  double tol = 1e-8;
  double corner_tol = 1e-8;
  double psie_tol = 1e-6;
  int min_samples_factor = 2;  // requires >= factor*d samples per non-empty face
};

/// Estimates tangent spaces of each face from the sample cloud and checks
/// the contact forms against them; corner samples are also tested for the
/// conic pairing x^ . xi^ = 0 and the blow-up form.
LegendrianReport legendrian_check(const std::vector<LagrangianSample>& samples, int d,
                                  int lambda_dim_psi, int lambda_dim_e,
                                  const LegendrianCheckConfig& cfg = {});

// ---- the conormal model ------------------------------------------------------------------------

/// phi(x, y) = x' . y on R^d x R^{d-k} parametrizing the boundary of the
/// compactified conormal bundle of the subspace {x' = 0}.
struct ConormalModel {
  int d = 0, k = 0;
  PhaseFunction phi;

  /// Closed-form samples of each face (empty when the face is empty).
  std::vector<CompactPoint> face_samples(Face f, int count, unsigned seed = 7) const;
  /// Residual distance of a point to the closed-form face set.
  double face_distance(const CompactPoint& p) const;
  bool face_nonempty(Face f) const;
};

ConormalModel conormal_bundle(int k, int d);

}  // namespace sclag
