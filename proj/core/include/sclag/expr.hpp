#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sclag/profiles.hpp"
#include "sclag/rational.hpp"

namespace sclag {

enum class Block { X, Theta };

/// Dimensions of the (base, fiber) variable space.  Fiber variables may be
/// declared bounded (product-chart variables such as the auxiliary variable
/// introduced when raising the fiber dimension); bounded variables do not
/// participate in fiber-infinity scalings or unbounded grids.
struct VarSpace {
  int d = 1;
  int s = 1;
  std::vector<std::pair<double, double>> theta_bounds;  // empty or size s

  VarSpace() = default;
  VarSpace(int d_, int s_) : d(d_), s(s_) {
    if (d < 1 || s < 1) throw std::invalid_argument("VarSpace requires d >= 1 and s >= 1");
  }

  int total() const { return d + s; }
  bool theta_bounded(int j) const {
    return !theta_bounds.empty() && std::isfinite(theta_bounds[static_cast<size_t>(j)].first) &&
           std::isfinite(theta_bounds[static_cast<size_t>(j)].second);
  }
  std::pair<double, double> theta_bound(int j) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return theta_bounds.empty() ? std::pair<double, double>{-inf, inf}
                                : theta_bounds[static_cast<size_t>(j)];
  }
  /// Appends one bounded fiber variable, returning the enlarged space.
  VarSpace with_bounded_theta(double lo, double hi) const {
    VarSpace sp = *this;
    if (sp.theta_bounds.empty()) {
      constexpr double inf = std::numeric_limits<double>::infinity();
      sp.theta_bounds.assign(static_cast<size_t>(sp.s), {-inf, inf});
    }
    sp.s += 1;
    sp.theta_bounds.emplace_back(lo, hi);
    return sp;
  }
  friend bool operator==(const VarSpace& a, const VarSpace& b) {
    return a.d == b.d && a.s == b.s && a.theta_bounds == b.theta_bounds;
  }
};

enum class NodeKind { Const, Var, Sum, Prod, Pow, Exp, Sin, Cos, Radial, Chi };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  NodeKind kind;
  Rational value;           // Const: value; Pow: exponent
  Block block = Block::X;   // Var
  int index = 0;            // Var: index within block; Radial/Chi: derivative order
  Rational chi_t0, chi_t1;  // Chi profile parameters
  std::vector<NodePtr> kids;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int pos)
      : std::runtime_error(msg + " at column " + std::to_string(pos + 1)), position(pos) {}
  int position;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EvalMode { Lenient, Strict };

class Expr;
namespace detail {
struct Tape;
struct TapeBox;
}  // namespace detail

/// Immutable expression over (x_1..x_d, t_1..t_s).  Construction goes through
/// normalizing builders; evaluation is re-entrant and side-effect free.
class Expr {
 public:
  Expr() = default;
  Expr(NodePtr n, VarSpace sp);

  const NodePtr& node() const { return node_; }
  const VarSpace& space() const { return space_; }
  bool valid() const { return node_ != nullptr; }

  double eval(std::span<const double> point, EvalMode mode = EvalMode::Lenient) const;
  double eval(std::initializer_list<double> point, EvalMode mode = EvalMode::Lenient) const {
    return eval(std::span<const double>(point.begin(), point.size()), mode);
  }
  std::string str() const;

  bool is_zero() const;
  bool is_const() const;
  std::optional<Rational> const_value() const;

  /// Structural equality of the underlying trees.
  friend bool operator==(const Expr& a, const Expr& b);
  friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

 private:
  NodePtr node_;
  VarSpace space_;
  std::shared_ptr<detail::TapeBox> tape_;
  friend class Evaluator;
};

// ---- builders ----------------------------------------------------------

Expr constant(Rational v, const VarSpace& sp);
Expr variable(Block b, int index, const VarSpace& sp);  // 0-based index
Expr add(std::vector<Expr> kids);
Expr mul(std::vector<Expr> kids);
Expr pow(const Expr& base, Rational exponent);
/// Like pow, but the caller declares the base positive on the working
/// domain (used for chart factors such as 1 - y^2 on |y| < 1).
Expr pow_declared_positive(const Expr& base, Rational exponent);
Expr exp(const Expr& e);
Expr sin(const Expr& e);
Expr cos(const Expr& e);
Expr sqrt(const Expr& e);
/// Smooth-norm profile node: radial(u, k) evaluates G^(k)(u) where the
/// smooth norm of a vector v is G(|v|^2); G(u) = sqrt(u) for u >= 9.
Expr radial(const Expr& u, int k);
/// Cutoff node: chi^(k)(u) for the polynomial profile with plateau t0, end t1.
Expr cutoff(const Expr& u, int k, Rational t0, Rational t1);

/// <x> = sqrt(1 + sum x_i^2) over the given block.
Expr japanese_bracket(Block b, const VarSpace& sp);
/// [x] = smooth norm of the full block, equal to |x| outside radius 3.
Expr smooth_norm(Block b, const VarSpace& sp);
/// sum of squares of the full block
Expr block_square_sum(Block b, const VarSpace& sp);

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator*(Rational c, const Expr& a);

// ---- structural predicates ----------------------------------------------

bool is_structurally_positive(const NodePtr& n);
bool is_structurally_nonneg(const NodePtr& n);
bool depends_on(const NodePtr& n, Block b, int index);
bool depends_on_block(const NodePtr& n, Block b);

// ---- calculus ------------------------------------------------------------

Expr diff(const Expr& e, Block b, int index);
std::vector<Expr> grad(const Expr& e, Block b);
std::vector<std::vector<Expr>> hessian(const Expr& e, Block b);

/// Substitutes expressions for the variables; all substituted expressions
/// must share the target space.  Missing entries keep the variable (only
/// valid if the target space contains it).
Expr subst(const Expr& e, const std::vector<Expr>& x_subst, const std::vector<Expr>& t_subst,
           const VarSpace& target);

/// Re-declare the space of an expression (e.g. after appending fiber
/// variables).  The new space must contain all referenced variables.
Expr rebase(const Expr& e, const VarSpace& target);

// ---- boundary asymptotics --------------------------------------------------

/// Growth data of e under the scaling v -> R v of the unbounded variables of
/// one block: e(Rv, w) ~ R^deg * lead(v, w).  `deg_exact == false` means deg
/// is only an upper bound (leading terms cancelled) and lead is absent.
struct FaceAsym {
  bool zero = false;
  Rational deg;
  bool deg_exact = true;
  std::optional<Expr> lead;
};

FaceAsym face_asym(const Expr& e, Block b);

/// lim R^{-m} e(R v_block) as an expression, when the AST admits it:
/// returns the homogeneous-degree-m leading part, Const 0 if e grows slower,
/// nullopt if the limit diverges or is not structurally available.
std::optional<Expr> homogeneous_limit(const Expr& e, Block b, Rational m);

// ---- parsing / printing -----------------------------------------------------

/// Grammar: identifiers x1..xd, t1..ts; zero-argument functions jbx(), jbt(),
/// nx(), nt(); unary exp, sin, cos, sqrt; operators + - * ^; rational
/// literals p/q.  (nrm/nrmd<k>/cut/cutd<k> are accepted for round-tripping
/// derived expressions.)
Expr parse(const std::string& text, const VarSpace& sp);

}  // namespace sclag
