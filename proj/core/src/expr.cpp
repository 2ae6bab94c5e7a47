#include "sclag/expr.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace sclag {

namespace detail {

// Flat post-order program for fast re-entrant evaluation.
struct Tape {
  struct Op {
    NodeKind kind;
    int argstart = 0, argcount = 0;  // indices into args (value slots)
    double dval = 0;                 // Const value / Pow general exponent
    long ipow = 0;                   // Pow integer exponent fast path
    int mode = 0;                    // Pow: 0 int, 1 half-int (2q odd), 2 general
    int k = 0;                       // Radial / Chi derivative order
    double t0 = 0, t1 = 0;           // Chi profile
    Block block = Block::X;          // Var
    int index = 0;                   // Var
  };
  std::vector<Op> ops;
  std::vector<int> args;
  int nslots = 0;
};

struct TapeBox {
  std::once_flag once;
  std::unique_ptr<Tape> tape;
};

namespace {

int compile(const Node* n, Tape& t, std::map<const Node*, int>& memo) {
  auto it = memo.find(n);
  if (it != memo.end()) return it->second;
  std::vector<int> kid_slots;
  kid_slots.reserve(n->kids.size());
  for (const auto& k : n->kids) kid_slots.push_back(compile(k.get(), t, memo));
  Tape::Op op;
  op.kind = n->kind;
  op.argstart = static_cast<int>(t.args.size());
  op.argcount = static_cast<int>(kid_slots.size());
  for (int s : kid_slots) t.args.push_back(s);
  switch (n->kind) {
    case NodeKind::Const:
      op.dval = n->value.to_double();
      break;
    case NodeKind::Var:
      op.block = n->block;
      op.index = n->index;
      break;
    case NodeKind::Pow:
      if (n->value.is_integer()) {
        op.mode = 0;
        op.ipow = n->value.num();
      } else if (n->value.den() == 2) {
        op.mode = 1;
        op.ipow = n->value.num();  // exponent = ipow / 2
      } else {
        op.mode = 2;
        op.dval = n->value.to_double();
      }
      break;
    case NodeKind::Radial:
      op.k = n->index;
      break;
    case NodeKind::Chi:
      op.k = n->index;
      op.t0 = n->chi_t0.to_double();
      op.t1 = n->chi_t1.to_double();
      break;
    default:
      break;
  }
  int slot = t.nslots++;
  t.ops.push_back(op);
  // op writes to `slot`; ops are appended post-order so op i writes slot i
  memo[n] = slot;
  return slot;
}

double ipow_eval(double b, long e) {
  if (e < 0) return 1.0 / ipow_eval(b, -e);
  double r = 1.0, p = b;
  while (e) {
    if (e & 1) r *= p;
    p *= p;
    e >>= 1;
  }
  return r;
}

}  // namespace

}  // namespace detail

Expr::Expr(NodePtr n, VarSpace sp)
    : node_(std::move(n)), space_(std::move(sp)), tape_(std::make_shared<detail::TapeBox>()) {}

double Expr::eval(std::span<const double> point, EvalMode mode) const {
  if (!node_) throw std::logic_error("eval of empty expression");
  if (static_cast<int>(point.size()) != space_.total())
    throw std::invalid_argument("eval: point dimension mismatch");
  std::call_once(tape_->once, [&] {
    auto t = std::make_unique<detail::Tape>();
    std::map<const Node*, int> memo;
    detail::compile(node_.get(), *t, memo);
    tape_->tape = std::move(t);
  });
  const detail::Tape& t = *tape_->tape;
  thread_local std::vector<double> v;
  v.resize(t.ops.size());
  const bool strict = mode == EvalMode::Strict;
  for (size_t i = 0; i < t.ops.size(); ++i) {
    const auto& op = t.ops[i];
    double r = 0;
    switch (op.kind) {
      case NodeKind::Const:
        r = op.dval;
        break;
      case NodeKind::Var:
        r = op.block == Block::X ? point[static_cast<size_t>(op.index)]
                                 : point[static_cast<size_t>(space_.d + op.index)];
        break;
      case NodeKind::Sum:
        for (int a = 0; a < op.argcount; ++a) r += v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart + a)])];
        break;
      case NodeKind::Prod: {
        r = 1;
        for (int a = 0; a < op.argcount; ++a) r *= v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart + a)])];
        break;
      }
      case NodeKind::Pow: {
        const double b = v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart)])];
        if (op.mode == 0) {
          if (b == 0.0 && op.ipow < 0) throw DomainError("pow: zero base with negative exponent");
          r = detail::ipow_eval(b, op.ipow);
        } else {
          if (b < 0.0 || (b == 0.0 && op.ipow < 0))
            throw DomainError("pow: fractional power of non-positive base");
          r = op.mode == 1 ? std::pow(std::sqrt(b), static_cast<double>(op.ipow))
                           : std::pow(b, op.dval);
        }
        break;
      }
      case NodeKind::Exp:
        r = std::exp(v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart)])]);
        break;
      case NodeKind::Sin:
        r = std::sin(v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart)])]);
        break;
      case NodeKind::Cos:
        r = std::cos(v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart)])]);
        break;
      case NodeKind::Radial: {
        const double u = v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart)])];
        if (strict && u < 9.0)
          throw DomainError("smooth norm evaluated inside radius 3 (strict mode)");
        r = smooth_norm_profile(u, op.k);
        break;
      }
      case NodeKind::Chi: {
        const double u = v[static_cast<size_t>(t.args[static_cast<size_t>(op.argstart)])];
        // heptic smoothstep on [t0, t1], k-th derivative
        if (u <= op.t0) {
          r = op.k == 0 ? 1.0 : 0.0;
        } else if (u >= op.t1) {
          r = 0.0;
        } else {
          const double w = op.t1 - op.t0;
          const double uu = (u - op.t0) / w;
          static const double coef[8] = {0, 0, 0, 0, 35, -84, 70, -20};
          double val = 0;
          for (int p = 7; p >= 4; --p) {
            const int q = p - op.k;
            if (q < 0) continue;
            double fall = 1.0;
            for (int j = 0; j < op.k; ++j) fall *= (p - j);
            double upow = 1.0;
            for (int j = 0; j < q; ++j) upow *= uu;
            val += coef[p] * fall * upow;
          }
          double scale = 1.0;
          for (int j = 0; j < op.k; ++j) scale /= w;
          val *= scale;
          r = op.k == 0 ? 1.0 - val : -val;
        }
        break;
      }
    }
    v[i] = r;
  }
  return v.back();
}

bool Expr::is_zero() const {
  return node_ && node_->kind == NodeKind::Const && node_->value.is_zero();
}

bool Expr::is_const() const { return node_ && node_->kind == NodeKind::Const; }

std::optional<Rational> Expr::const_value() const {
  if (is_const()) return node_->value;
  return std::nullopt;
}

namespace {

bool node_equal(const Node* a, const Node* b) {
  if (a == b) return true;
  if (a->kind != b->kind || a->kids.size() != b->kids.size()) return false;
  switch (a->kind) {
    case NodeKind::Const:
      if (a->value != b->value) return false;
      break;
    case NodeKind::Var:
      if (a->block != b->block || a->index != b->index) return false;
      break;
    case NodeKind::Pow:
      if (a->value != b->value) return false;
      break;
    case NodeKind::Radial:
      if (a->index != b->index) return false;
      break;
    case NodeKind::Chi:
      if (a->index != b->index || a->chi_t0 != b->chi_t0 || a->chi_t1 != b->chi_t1) return false;
      break;
    default:
      break;
  }
  for (size_t i = 0; i < a->kids.size(); ++i)
    if (!node_equal(a->kids[i].get(), b->kids[i].get())) return false;
  return true;
}

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  if (!a.valid() || !b.valid()) return a.valid() == b.valid();
  return a.space() == b.space() && node_equal(a.node().get(), b.node().get());
}

// ---- builders -------------------------------------------------------------

namespace {

NodePtr mk(Node n) { return std::make_shared<const Node>(std::move(n)); }

NodePtr const_node(Rational v) {
  Node n;
  n.kind = NodeKind::Const;
  n.value = v;
  return mk(std::move(n));
}

bool is_const0(const NodePtr& n) { return n->kind == NodeKind::Const && n->value.is_zero(); }
bool is_const1(const NodePtr& n) {
  return n->kind == NodeKind::Const && n->value == Rational(1);
}

NodePtr add_nodes(std::vector<NodePtr> kids);
NodePtr mul_nodes(std::vector<NodePtr> kids);
NodePtr pow_node(NodePtr base, Rational q);

NodePtr add_nodes(std::vector<NodePtr> kids) {
  std::vector<NodePtr> flat;
  Rational c(0);
  for (auto& k : kids) {
    if (k->kind == NodeKind::Sum) {
      for (const auto& kk : k->kids) {
        if (kk->kind == NodeKind::Const)
          c += kk->value;
        else
          flat.push_back(kk);
      }
    } else if (k->kind == NodeKind::Const) {
      c += k->value;
    } else {
      flat.push_back(std::move(k));
    }
  }
  std::vector<NodePtr> out;
  if (!c.is_zero()) out.push_back(const_node(c));
  for (auto& k : flat) out.push_back(std::move(k));
  if (out.empty()) return const_node(Rational(0));
  if (out.size() == 1) return out[0];
  Node n;
  n.kind = NodeKind::Sum;
  n.kids = std::move(out);
  return mk(std::move(n));
}

NodePtr mul_nodes(std::vector<NodePtr> kids) {
  std::vector<NodePtr> flat;
  Rational c(1);
  for (auto& k : kids) {
    if (k->kind == NodeKind::Prod) {
      for (const auto& kk : k->kids) {
        if (kk->kind == NodeKind::Const)
          c *= kk->value;
        else
          flat.push_back(kk);
      }
    } else if (k->kind == NodeKind::Const) {
      c *= k->value;
    } else {
      flat.push_back(std::move(k));
    }
  }
  if (c.is_zero()) return const_node(Rational(0));
  std::vector<NodePtr> out;
  if (c != Rational(1)) out.push_back(const_node(c));
  for (auto& k : flat) out.push_back(std::move(k));
  if (out.empty()) return const_node(Rational(1));
  if (out.size() == 1) return out[0];
  Node n;
  n.kind = NodeKind::Prod;
  n.kids = std::move(out);
  return mk(std::move(n));
}

NodePtr pow_node(NodePtr base, Rational q) {
  if (q.is_zero()) return const_node(Rational(1));
  if (q == Rational(1)) return base;
  if (base->kind == NodeKind::Const && q.is_integer() && q.num() >= 0 && q.num() <= 8) {
    Rational r(1);
    for (std::int64_t i = 0; i < q.num(); ++i) r *= base->value;
    return const_node(r);
  }
  if (base->kind == NodeKind::Pow) {
    const bool collapsible =
        is_structurally_nonneg(base->kids[0]) || (base->value.is_integer() && q.is_integer());
    if (collapsible) return pow_node(base->kids[0], base->value * q);
  }
  if (is_const1(base)) return base;
  Node n;
  n.kind = NodeKind::Pow;
  n.value = q;
  n.kids.push_back(std::move(base));
  return mk(std::move(n));
}

void require_same_space(const Expr& a, const Expr& b) {
  if (!(a.space() == b.space())) throw std::invalid_argument("expression space mismatch");
}

}  // namespace

Expr constant(Rational v, const VarSpace& sp) { return Expr(const_node(v), sp); }

Expr variable(Block b, int index, const VarSpace& sp) {
  const int limit = b == Block::X ? sp.d : sp.s;
  if (index < 0 || index >= limit) throw std::invalid_argument("variable index out of range");
  Node n;
  n.kind = NodeKind::Var;
  n.block = b;
  n.index = index;
  return Expr(mk(std::move(n)), sp);
}

Expr add(std::vector<Expr> kids) {
  if (kids.empty()) throw std::invalid_argument("add: empty");
  for (size_t i = 1; i < kids.size(); ++i) require_same_space(kids[0], kids[i]);
  std::vector<NodePtr> ns;
  ns.reserve(kids.size());
  for (auto& k : kids) ns.push_back(k.node());
  return Expr(add_nodes(std::move(ns)), kids[0].space());
}

Expr mul(std::vector<Expr> kids) {
  if (kids.empty()) throw std::invalid_argument("mul: empty");
  for (size_t i = 1; i < kids.size(); ++i) require_same_space(kids[0], kids[i]);
  std::vector<NodePtr> ns;
  ns.reserve(kids.size());
  for (auto& k : kids) ns.push_back(k.node());
  return Expr(mul_nodes(std::move(ns)), kids[0].space());
}

Expr pow(const Expr& base, Rational q) {
  if ((!q.is_integer() || q.is_negative()) && !is_structurally_nonneg(base.node()))
    throw std::invalid_argument(
        "pow: fractional or negative exponent requires a sign-definite base");
  return Expr(pow_node(base.node(), q), base.space());
}

Expr pow_declared_positive(const Expr& base, Rational q) {
  return Expr(pow_node(base.node(), q), base.space());
}

namespace {
Expr unary(NodeKind k, const Expr& e) {
  Node n;
  n.kind = k;
  n.kids.push_back(e.node());
  return Expr(mk(std::move(n)), e.space());
}
}  // namespace

Expr exp(const Expr& e) { return unary(NodeKind::Exp, e); }
Expr sin(const Expr& e) { return unary(NodeKind::Sin, e); }
Expr cos(const Expr& e) { return unary(NodeKind::Cos, e); }
Expr sqrt(const Expr& e) { return pow(e, Rational(1, 2)); }

Expr radial(const Expr& u, int k) {
  Node n;
  n.kind = NodeKind::Radial;
  n.index = k;
  n.kids.push_back(u.node());
  return Expr(mk(std::move(n)), u.space());
}

Expr cutoff(const Expr& u, int k, Rational t0, Rational t1) {
  if (!(t0 < t1) || !t0.is_positive())
    throw std::invalid_argument("cutoff requires 0 < t0 < t1");
  Node n;
  n.kind = NodeKind::Chi;
  n.index = k;
  n.chi_t0 = t0;
  n.chi_t1 = t1;
  n.kids.push_back(u.node());
  return Expr(mk(std::move(n)), u.space());
}

Expr block_square_sum(Block b, const VarSpace& sp) {
  std::vector<Expr> terms;
  const int count = b == Block::X ? sp.d : sp.s;
  for (int i = 0; i < count; ++i) terms.push_back(pow(variable(b, i, sp), Rational(2)));
  return add(std::move(terms));
}

Expr japanese_bracket(Block b, const VarSpace& sp) {
  return sqrt(constant(Rational(1), sp) + block_square_sum(b, sp));
}

Expr smooth_norm(Block b, const VarSpace& sp) { return radial(block_square_sum(b, sp), 0); }

Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
Expr operator-(const Expr& a, const Expr& b) { return add({a, Rational(-1) * b}); }
Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
Expr operator-(const Expr& a) { return Rational(-1) * a; }
Expr operator*(Rational c, const Expr& a) { return mul({constant(c, a.space()), a}); }

// ---- structural predicates --------------------------------------------------

bool is_structurally_positive(const NodePtr& n) {
  switch (n->kind) {
    case NodeKind::Const:
      return n->value.is_positive();
    case NodeKind::Exp:
      return true;
    case NodeKind::Radial:
      return n->index == 0;  // the profile itself is >= 1
    case NodeKind::Pow:
      return is_structurally_positive(n->kids[0]);
    case NodeKind::Prod: {
      for (const auto& k : n->kids)
        if (!is_structurally_positive(k)) return false;
      return true;
    }
    case NodeKind::Sum: {
      bool one_pos = false;
      for (const auto& k : n->kids) {
        if (is_structurally_positive(k))
          one_pos = true;
        else if (!is_structurally_nonneg(k))
          return false;
      }
      return one_pos;
    }
    default:
      return false;
  }
}

bool is_structurally_nonneg(const NodePtr& n) {
  if (is_structurally_positive(n)) return true;
  switch (n->kind) {
    case NodeKind::Const:
      return !n->value.is_negative();
    case NodeKind::Chi:
      return n->index == 0;
    case NodeKind::Pow: {
      if (n->value.is_integer() && n->value.num() % 2 == 0 && !n->value.is_negative()) return true;
      return is_structurally_nonneg(n->kids[0]);
    }
    case NodeKind::Prod: {
      for (const auto& k : n->kids)
        if (!is_structurally_nonneg(k)) return false;
      return true;
    }
    case NodeKind::Sum: {
      for (const auto& k : n->kids)
        if (!is_structurally_nonneg(k)) return false;
      return true;
    }
    default:
      return false;
  }
}

bool depends_on(const NodePtr& n, Block b, int index) {
  if (n->kind == NodeKind::Var) return n->block == b && n->index == index;
  for (const auto& k : n->kids)
    if (depends_on(k, b, index)) return true;
  return false;
}

bool depends_on_block(const NodePtr& n, Block b) {
  if (n->kind == NodeKind::Var) return n->block == b;
  for (const auto& k : n->kids)
    if (depends_on_block(k, b)) return true;
  return false;
}

// ---- calculus ---------------------------------------------------------------

namespace {

NodePtr diff_node(const NodePtr& n, Block b, int idx, std::map<const Node*, NodePtr>& memo) {
  auto it = memo.find(n.get());
  if (it != memo.end()) return it->second;
  NodePtr r;
  switch (n->kind) {
    case NodeKind::Const:
      r = const_node(Rational(0));
      break;
    case NodeKind::Var:
      r = const_node(n->block == b && n->index == idx ? Rational(1) : Rational(0));
      break;
    case NodeKind::Sum: {
      std::vector<NodePtr> ks;
      for (const auto& k : n->kids) ks.push_back(diff_node(k, b, idx, memo));
      r = add_nodes(std::move(ks));
      break;
    }
    case NodeKind::Prod: {
      std::vector<NodePtr> terms;
      for (size_t i = 0; i < n->kids.size(); ++i) {
        NodePtr di = diff_node(n->kids[i], b, idx, memo);
        if (is_const0(di)) continue;
        std::vector<NodePtr> fac;
        for (size_t j = 0; j < n->kids.size(); ++j) fac.push_back(j == i ? di : n->kids[j]);
        terms.push_back(mul_nodes(std::move(fac)));
      }
      r = terms.empty() ? const_node(Rational(0)) : add_nodes(std::move(terms));
      break;
    }
    case NodeKind::Pow: {
      NodePtr db = diff_node(n->kids[0], b, idx, memo);
      if (is_const0(db)) {
        r = const_node(Rational(0));
      } else {
        r = mul_nodes({const_node(n->value), pow_node(n->kids[0], n->value - Rational(1)), db});
      }
      break;
    }
    case NodeKind::Exp: {
      NodePtr du = diff_node(n->kids[0], b, idx, memo);
      r = is_const0(du) ? const_node(Rational(0)) : mul_nodes({n, du});
      break;
    }
    case NodeKind::Sin: {
      NodePtr du = diff_node(n->kids[0], b, idx, memo);
      if (is_const0(du)) {
        r = const_node(Rational(0));
      } else {
        Node c;
        c.kind = NodeKind::Cos;
        c.kids.push_back(n->kids[0]);
        r = mul_nodes({mk(std::move(c)), du});
      }
      break;
    }
    case NodeKind::Cos: {
      NodePtr du = diff_node(n->kids[0], b, idx, memo);
      if (is_const0(du)) {
        r = const_node(Rational(0));
      } else {
        Node s;
        s.kind = NodeKind::Sin;
        s.kids.push_back(n->kids[0]);
        r = mul_nodes({const_node(Rational(-1)), mk(std::move(s)), du});
      }
      break;
    }
    case NodeKind::Radial: {
      NodePtr du = diff_node(n->kids[0], b, idx, memo);
      if (is_const0(du)) {
        r = const_node(Rational(0));
      } else {
        Node rn;
        rn.kind = NodeKind::Radial;
        rn.index = n->index + 1;
        rn.kids.push_back(n->kids[0]);
        r = mul_nodes({mk(std::move(rn)), du});
      }
      break;
    }
    case NodeKind::Chi: {
      NodePtr du = diff_node(n->kids[0], b, idx, memo);
      if (is_const0(du)) {
        r = const_node(Rational(0));
      } else {
        Node cn;
        cn.kind = NodeKind::Chi;
        cn.index = n->index + 1;
        cn.chi_t0 = n->chi_t0;
        cn.chi_t1 = n->chi_t1;
        cn.kids.push_back(n->kids[0]);
        r = mul_nodes({mk(std::move(cn)), du});
      }
      break;
    }
  }
  memo[n.get()] = r;
  return r;
}

}  // namespace

Expr diff(const Expr& e, Block b, int index) {
  std::map<const Node*, NodePtr> memo;
  return Expr(diff_node(e.node(), b, index, memo), e.space());
}

std::vector<Expr> grad(const Expr& e, Block b) {
  const int count = b == Block::X ? e.space().d : e.space().s;
  std::vector<Expr> g;
  g.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) g.push_back(diff(e, b, i));
  return g;
}

std::vector<std::vector<Expr>> hessian(const Expr& e, Block b) {
  const int count = b == Block::X ? e.space().d : e.space().s;
  std::vector<Expr> g = grad(e, b);
  std::vector<std::vector<Expr>> h(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    h[static_cast<size_t>(i)].resize(static_cast<size_t>(count));
    for (int j = i; j < count; ++j)
      h[static_cast<size_t>(i)][static_cast<size_t>(j)] = diff(g[static_cast<size_t>(i)], b, j);
  }
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < i; ++j)
      h[static_cast<size_t>(i)][static_cast<size_t>(j)] = h[static_cast<size_t>(j)][static_cast<size_t>(i)];
  return h;
}

namespace {

NodePtr subst_node(const NodePtr& n, const std::vector<Expr>& xs, const std::vector<Expr>& ts,
                   const VarSpace& target, std::map<const Node*, NodePtr>& memo) {
  auto it = memo.find(n.get());
  if (it != memo.end()) return it->second;
  NodePtr r;
  if (n->kind == NodeKind::Var) {
    const auto& tab = n->block == Block::X ? xs : ts;
    if (n->index < static_cast<int>(tab.size()) && tab[static_cast<size_t>(n->index)].valid()) {
      r = tab[static_cast<size_t>(n->index)].node();
    } else {
      const int limit = n->block == Block::X ? target.d : target.s;
      if (n->index >= limit) throw std::invalid_argument("subst: variable not in target space");
      r = n;
    }
  } else if (n->kids.empty()) {
    r = n;
  } else {
    std::vector<NodePtr> ks;
    ks.reserve(n->kids.size());
    bool changed = false;
    for (const auto& k : n->kids) {
      ks.push_back(subst_node(k, xs, ts, target, memo));
      changed |= ks.back() != k;
    }
    if (!changed) {
      r = n;
    } else {
      switch (n->kind) {
        case NodeKind::Sum:
          r = add_nodes(std::move(ks));
          break;
        case NodeKind::Prod:
          r = mul_nodes(std::move(ks));
          break;
        case NodeKind::Pow:
          r = pow_node(std::move(ks[0]), n->value);
          break;
        default: {
          Node nn;
          nn.kind = n->kind;
          nn.index = n->index;
          nn.chi_t0 = n->chi_t0;
          nn.chi_t1 = n->chi_t1;
          nn.kids = std::move(ks);
          r = mk(std::move(nn));
          break;
        }
      }
    }
  }
  memo[n.get()] = r;
  return r;
}

}  // namespace

Expr subst(const Expr& e, const std::vector<Expr>& x_subst, const std::vector<Expr>& t_subst,
           const VarSpace& target) {
  for (const auto& f : x_subst)
    if (f.valid() && !(f.space() == target)) throw std::invalid_argument("subst: space mismatch");
  for (const auto& f : t_subst)
    if (f.valid() && !(f.space() == target)) throw std::invalid_argument("subst: space mismatch");
  std::map<const Node*, NodePtr> memo;
  return Expr(subst_node(e.node(), x_subst, t_subst, target, memo), target);
}

Expr rebase(const Expr& e, const VarSpace& target) {
  return subst(e, {}, {}, target);
}

// ---- boundary asymptotics ----------------------------------------------------

namespace {

// Derivative coefficients of sqrt at its leading branch: d^k/du^k u^{1/2}
// carries prefactor prod_{j=0..k-1} (1/2 - j).
Rational half_falling(int k) {
  Rational r(1);
  for (int j = 0; j < k; ++j) r *= (Rational(1, 2) - Rational(j));
  return r;
}

struct AsymCtx {
  Block block;
  const VarSpace* space;
  std::map<const Node*, FaceAsym> memo;
};

bool scaled_var(const AsymCtx& ctx, const Node* n) {
  if (n->kind != NodeKind::Var || n->block != ctx.block) return false;
  if (ctx.block == Block::Theta && ctx.space->theta_bounded(n->index)) return false;
  return true;
}

bool contains_scaled(const AsymCtx& ctx, const NodePtr& n) {
  if (n->kind == NodeKind::Var) return scaled_var(ctx, n.get());
  for (const auto& k : n->kids)
    if (contains_scaled(ctx, k)) return true;
  return false;
}

FaceAsym asym(const AsymCtx& ctx0, const NodePtr& np);

FaceAsym asym_sum(AsymCtx& ctx, const Node* n) {
  std::vector<FaceAsym> ks;
  ks.reserve(n->kids.size());
  for (const auto& k : n->kids) ks.push_back(asym(ctx, k));
  bool have_exact = false, have_upper = false;
  Rational max_exact(0), max_upper(0);
  for (const auto& a : ks) {
    if (a.zero) continue;
    if (a.deg_exact) {
      if (!have_exact || max_exact < a.deg) max_exact = a.deg;
      have_exact = true;
    } else {
      if (!have_upper || max_upper < a.deg) max_upper = a.deg;
      have_upper = true;
    }
  }
  if (!have_exact && !have_upper) return FaceAsym{true, Rational(0), true, std::nullopt};
  if (!have_exact) return FaceAsym{false, max_upper, false, std::nullopt};
  if (have_upper && max_upper >= max_exact)
    return FaceAsym{false, max_upper, false, std::nullopt};
  // leading part: the exact kids at the top degree; inexact kids sit below
  bool lead_ok = true;
  std::vector<NodePtr> leads;
  for (const auto& a : ks) {
    if (a.zero || !a.deg_exact || a.deg != max_exact) continue;
    if (a.lead)
      leads.push_back(a.lead->node());
    else
      lead_ok = false;
  }
  if (!lead_ok) return FaceAsym{false, max_exact, true, std::nullopt};
  NodePtr lead = add_nodes(std::move(leads));
  if (is_const0(lead)) {
    // exact cancellation of the top order: degree drops by at least one
    return FaceAsym{false, max_exact - Rational(1), false, std::nullopt};
  }
  return FaceAsym{false, max_exact, true, Expr(lead, *ctx.space)};
}

FaceAsym asym(const AsymCtx& ctx0, const NodePtr& np) {
  AsymCtx& ctx = const_cast<AsymCtx&>(ctx0);
  const Node* n = np.get();
  auto it = ctx.memo.find(n);
  if (it != ctx.memo.end()) return it->second;
  FaceAsym r;
  switch (n->kind) {
    case NodeKind::Const:
      if (n->value.is_zero())
        r = {true, Rational(0), true, std::nullopt};
      else
        r = {false, Rational(0), true, Expr(np, *ctx.space)};
      break;
    case NodeKind::Var:
      r = {false, Rational(scaled_var(ctx, n) ? 1 : 0), true, Expr(np, *ctx.space)};
      break;
    case NodeKind::Sum:
      r = asym_sum(ctx, n);
      break;
    case NodeKind::Prod: {
      Rational deg(0);
      bool exact = true;
      std::vector<NodePtr> leads;
      bool lead_ok = true, zero = false;
      for (const auto& k : n->kids) {
        FaceAsym a = asym(ctx, k);
        if (a.zero) {
          zero = true;
          break;
        }
        deg += a.deg;
        exact = exact && a.deg_exact;
        if (a.lead)
          leads.push_back(a.lead->node());
        else
          lead_ok = false;
      }
      if (zero)
        r = {true, Rational(0), true, std::nullopt};
      else if (!exact || !lead_ok)
        r = {false, deg, false, std::nullopt};
      else
        r = {false, deg, true, Expr(mul_nodes(std::move(leads)), *ctx.space)};
      break;
    }
    case NodeKind::Pow: {
      FaceAsym a = asym(ctx, n->kids[0]);
      if (a.zero) {
        r = {true, Rational(0), true, std::nullopt};
      } else {
        Rational deg = a.deg * n->value;
        if (!a.deg_exact) {
          // upper bound only survives a positive exponent
          r = {false, deg, false, std::nullopt};
          if (n->value.is_negative()) r.deg = Rational(0), r.deg_exact = false;
        } else if (a.lead) {
          r = {false, deg, true, pow(*a.lead, n->value)};
        } else {
          r = {false, deg, true, std::nullopt};
        }
      }
      break;
    }
    case NodeKind::Exp:
    case NodeKind::Sin:
    case NodeKind::Cos: {
      if (!contains_scaled(ctx, n->kids[0])) {
        r = {false, Rational(0), true, Expr(np, *ctx.space)};
        break;
      }
      FaceAsym a = asym(ctx, n->kids[0]);
      if (a.zero || (a.deg_exact && a.deg.is_negative()) ||
          (!a.deg_exact && a.deg.is_negative())) {
        // argument tends to 0 along the face
        if (n->kind == NodeKind::Sin) {
          if (a.zero)
            r = {true, Rational(0), true, std::nullopt};
          else
            r = {false, a.deg, a.deg_exact,
                 a.lead && a.deg_exact ? a.lead : std::optional<Expr>{}};
        } else {
          r = {false, Rational(0), true, Expr(const_node(Rational(1)), *ctx.space)};
        }
      } else if (a.deg_exact && a.deg.is_zero() && a.lead) {
        // argument converges to a direction function; take the limit inside
        NodePtr lim;
        Node nn;
        nn.kind = n->kind;
        nn.kids.push_back(a.lead->node());
        lim = mk(std::move(nn));
        r = {false, Rational(0), true, Expr(lim, *ctx.space)};
      } else if (n->kind == NodeKind::Exp) {
        // exp of a growing argument admits no polynomial bound
        r = {false, Rational(1000000), false, std::nullopt};
      } else {
        // bounded but with no stable limit (e.g. sin of a growing argument)
        r = {false, Rational(0), false, std::nullopt};
      }
      break;
    }
    case NodeKind::Radial: {
      FaceAsym a = asym(ctx, n->kids[0]);
      const int k = n->index;
      if (!a.zero && a.deg_exact && a.deg.is_positive() && a.lead) {
        Rational deg = a.deg * (Rational(1, 2) - Rational(k));
        Expr lead = half_falling(k) * pow(*a.lead, Rational(1, 2) - Rational(k));
        r = {false, deg, true, lead};
      } else if (a.zero || (a.deg_exact && !a.deg.is_positive() && a.lead)) {
        Expr base = a.zero ? Expr(const_node(Rational(0)), *ctx.space)
                           : (a.deg.is_zero() ? *a.lead : Expr(const_node(Rational(0)), *ctx.space));
        Node rn;
        rn.kind = NodeKind::Radial;
        rn.index = k;
        rn.kids.push_back(base.node());
        r = {false, Rational(0), true, Expr(mk(std::move(rn)), *ctx.space)};
      } else {
        r = {false, a.deg * (Rational(1, 2) - Rational(k)), false, std::nullopt};
      }
      break;
    }
    case NodeKind::Chi: {
      FaceAsym a = asym(ctx, n->kids[0]);
      const int k = n->index;
      if (a.zero || (a.deg_exact && a.deg.is_negative())) {
        // argument -> 0: chi = 1, derivatives 0
        if (k == 0)
          r = {false, Rational(0), true, Expr(const_node(Rational(1)), *ctx.space)};
        else
          r = {true, Rational(0), true, std::nullopt};
      } else if (a.deg_exact && a.deg.is_positive()) {
        // argument -> infinity: beyond the support
        r = {true, Rational(0), true, std::nullopt};
      } else if (a.deg_exact && a.deg.is_zero() && a.lead) {
        Node cn;
        cn.kind = NodeKind::Chi;
        cn.index = k;
        cn.chi_t0 = n->chi_t0;
        cn.chi_t1 = n->chi_t1;
        cn.kids.push_back(a.lead->node());
        r = {false, Rational(0), true, Expr(mk(std::move(cn)), *ctx.space)};
      } else {
        r = {false, Rational(0), false, std::nullopt};
      }
      break;
    }
  }
  ctx.memo[n] = r;
  return r;
}

}  // namespace

FaceAsym face_asym(const Expr& e, Block b) {
  AsymCtx ctx{b, &e.space(), {}};
  return asym(ctx, e.node());
}

std::optional<Expr> homogeneous_limit(const Expr& e, Block b, Rational m) {
  FaceAsym a = face_asym(e, b);
  if (a.zero) return constant(Rational(0), e.space());
  if (a.deg_exact) {
    if (a.deg < m) return constant(Rational(0), e.space());
    if (a.deg == m) return a.lead;  // may be nullopt (no structural limit)
    return std::nullopt;            // grows faster than R^m
  }
  if (a.deg < m) return constant(Rational(0), e.space());  // upper bound below m
  return std::nullopt;
}

// ---- printing ------------------------------------------------------------------

namespace {

int precedence(const Node* n) {
  switch (n->kind) {
    case NodeKind::Sum:
      return 1;
    case NodeKind::Prod:
      return 2;
    case NodeKind::Pow:
      return n->value == Rational(1, 2) ? 4 : 3;  // printed as sqrt(...)
    default:
      return 4;
  }
}

void print_node(const Node* n, std::ostringstream& os);

void print_child(const Node* n, int parent_prec, std::ostringstream& os) {
  const bool parens = precedence(n) < parent_prec ||
                      (n->kind == NodeKind::Const && n->value.is_negative());
  if (parens) os << "(";
  print_node(n, os);
  if (parens) os << ")";
}

void print_node(const Node* n, std::ostringstream& os) {
  switch (n->kind) {
    case NodeKind::Const:
      os << n->value.str();
      break;
    case NodeKind::Var:
      os << (n->block == Block::X ? "x" : "t") << (n->index + 1);
      break;
    case NodeKind::Sum:
      for (size_t i = 0; i < n->kids.size(); ++i) {
        if (i) os << " + ";
        print_child(n->kids[i].get(), 1, os);
      }
      break;
    case NodeKind::Prod:
      for (size_t i = 0; i < n->kids.size(); ++i) {
        if (i) os << "*";
        print_child(n->kids[i].get(), 2, os);
      }
      break;
    case NodeKind::Pow:
      if (n->value == Rational(1, 2)) {
        os << "sqrt(";
        print_node(n->kids[0].get(), os);
        os << ")";
      } else {
        print_child(n->kids[0].get(), 4, os);
        os << "^";
        if (n->value.is_integer() && !n->value.is_negative()) {
          os << n->value.str();
        } else {
          os << "(" << n->value.str() << ")";
        }
      }
      break;
    case NodeKind::Exp:
      os << "exp(";
      print_node(n->kids[0].get(), os);
      os << ")";
      break;
    case NodeKind::Sin:
      os << "sin(";
      print_node(n->kids[0].get(), os);
      os << ")";
      break;
    case NodeKind::Cos:
      os << "cos(";
      print_node(n->kids[0].get(), os);
      os << ")";
      break;
    case NodeKind::Radial:
      if (n->index == 0)
        os << "nrm(";
      else
        os << "nrmd" << n->index << "(";
      print_node(n->kids[0].get(), os);
      os << ")";
      break;
    case NodeKind::Chi:
      if (n->index == 0)
        os << "cut(";
      else
        os << "cutd" << n->index << "(";
      print_node(n->kids[0].get(), os);
      os << "," << n->chi_t0.str() << "," << n->chi_t1.str() << ")";
      break;
  }
}

}  // namespace

std::string Expr::str() const {
  if (!node_) return "<empty>";
  std::ostringstream os;
  print_node(node_.get(), os);
  return os.str();
}

}  // namespace sclag
