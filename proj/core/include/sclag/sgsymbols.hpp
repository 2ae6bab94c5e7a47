#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sclag/expr.hpp"
#include "sclag/geometry.hpp"
#include "sclag/numerics.hpp"

namespace sclag {

struct SGOrder {
  Rational m_e, m_psi;
  friend bool operator==(const SGOrder& a, const SGOrder& b) {
    return a.m_e == b.m_e && a.m_psi == b.m_psi;
  }
  SGOrder operator+(const SGOrder& o) const { return {m_e + o.m_e, m_psi + o.m_psi}; }
  std::string str() const { return "(" + m_e.str() + ", " + m_psi.str() + ")"; }
};

enum class DensityConvention { Scalar, HalfDensityXDensityTheta };

struct Amplitude {
  Expr expr;
  SGOrder order;
  DensityConvention convention = DensityConvention::Scalar;
};

// ---- order verification ---------------------------------------------------------

struct OrderViolation {
  std::vector<int> alpha, beta;  // multi-indices
  double slope = 0;              // growth rate of the weighted ratio
  std::string axis;              // "x" or "theta"
};

struct OrderReport {
  bool ok = false;
  double tightest_C = 0;  // sup of |d^a d^b a| / (<x>^{me-|a|} <t>^{mpsi-|b|})
  std::vector<OrderViolation> violations;
};

struct VerifyOrderConfig {
  int depth = 2;            // max |alpha| + |beta| (<= 3)
  int directions = 8;       // per sphere factor
  int radii = 9;            // log-spaced in [1, r_max]
  double r_max = 1e5;
  double growth_slope_tol = 0.1;
};

/// Checks the weighted symbol estimates for all derivatives up to the given
/// total order on a log-spaced grid; reports the tightest constant and any
/// direction along which the ratio grows.
OrderReport verify_order(const Amplitude& a, const VerifyOrderConfig& cfg = {});

// ---- principal components ---------------------------------------------------------

struct NonClassicalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Leading homogeneous components of an amplitude.  Components hold closed
/// forms when the AST admits the limit; numeric evaluation falls back to ray
/// extrapolation on the source amplitude.
class PrincipalParts {
 public:
  PrincipalParts(Amplitude src, std::optional<Expr> se, std::optional<Expr> sp,
                 std::optional<Expr> spe)
      : source_(std::move(src)), sigma_e_(std::move(se)), sigma_psi_(std::move(sp)),
        sigma_psie_(std::move(spe)) {}

  const Amplitude& source() const { return source_; }
  const std::optional<Expr>& sigma_e() const { return sigma_e_; }
  const std::optional<Expr>& sigma_psi() const { return sigma_psi_; }
  const std::optional<Expr>& sigma_psie() const { return sigma_psie_; }

  /// sigma^e at (omega, theta): lim R^{-m_e} a(R omega, theta).
  double sigma_e_at(const Vec& omega, const Vec& theta) const;
  /// sigma^psi at (x, eta): lim R^{-m_psi} a(x, R eta).
  double sigma_psi_at(const Vec& x, const Vec& eta) const;
  /// sigma^psie at (omega, eta): iterated limits.
  double sigma_psie_at(const Vec& omega, const Vec& eta) const;

 private:
  Amplitude source_;
  std::optional<Expr> sigma_e_, sigma_psi_, sigma_psie_;
};

/// Extracts the principal components; throws NonClassicalError when neither
/// a closed form nor a stable extrapolated limit exists.
PrincipalParts principal_components(const Amplitude& a);

// ---- principal part -----------------------------------------------------------------

struct PrincipalPartResult {
  Amplitude principal;   // the cutoff-assembled leading part, same order
  Rational chi_eps;      // cutoff scale: plateau eps/4, support end eps/2
  Expr residual;         // a - a_p
  OrderReport residual_order;  // checked at (m_e - 1, m_psi - 1)
};

/// Assembles chi(rho_X) sigma^e + chi(rho_Y) sigma^psi - chi chi sigma^psie
/// with the fixed polynomial cutoff profile at scale eps (in compactified
/// radius).  Requires closed-form components.
PrincipalPartResult principal_part(const Amplitude& a, Rational eps = Rational(1, 2),
                                   int residual_depth = 2);

// ---- transformation law ----------------------------------------------------------------

struct TransformPrincipalReport {
  bool ok = false;
  OrderReport psi_residual;   // sigma^psi(Psi^*a) - Psi^*(sigma^psi a) at (m_e, m_psi-1)
  OrderReport e_residual;     // symmetric, at (m_e-1, m_psi)
  OrderReport part_residual;  // (Psi^*a)_p - Psi^*(a_p) at (m_e-1, m_psi-1)
  std::string failure;
};

/// Verifies the principal-symbol transformation laws under a product-form
/// scattering map (which must pass scmap_check).
TransformPrincipalReport transform_principal(const Amplitude& a, const ScMap& psi,
                                             Rational chi_eps = Rational(1, 2));

/// Replaces fractional/negative powers of merely-nonnegative bases by powers
/// of the smooth norm profile, making homogeneous limit expressions total;
/// values are unchanged where the base is >= 9 (outside radius 3).
Expr regularize_homogeneous(const Expr& e);

}  // namespace sclag
