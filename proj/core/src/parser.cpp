#include <algorithm>
#include <cctype>
#include <string>

#include "sclag/expr.hpp"

namespace sclag {

namespace {

struct Lexer {
  const std::string& text;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  char get() {
    char c = peek();
    if (pos < text.size()) ++pos;
    return c;
  }
  bool eat(char c) {
    if (peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }
  int col() {
    skip_ws();
    return static_cast<int>(pos);
  }
};

class Parser {
 public:
  Parser(const std::string& text, const VarSpace& sp) : lex_{text}, sp_(sp) {}

  Expr run() {
    Expr e = expression();
    if (lex_.peek() != '\0') throw ParseError("unexpected input", lex_.col());
    return e;
  }

 private:
  Lexer lex_;
  const VarSpace& sp_;

  Expr expression() {
    Expr e = term();
    while (true) {
      if (lex_.eat('+')) {
        e = e + term();
      } else if (lex_.eat('-')) {
        e = e - term();
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = factor();
    while (lex_.eat('*')) e = e * factor();
    return e;
  }

  Expr factor() {
    if (lex_.eat('-')) return -factor();
    return power();
  }

  Expr power() {
    Expr base = atom();
    if (lex_.eat('^')) {
      Rational q = exponent();
      if ((!q.is_integer() || q.is_negative()) && !is_structurally_nonneg(base.node()))
        throw ParseError("fractional or negative power of a base without definite sign",
                         lex_.col());
      return pow(base, q);
    }
    return base;
  }

  Rational exponent() {
    if (lex_.eat('(')) {
      bool neg = lex_.eat('-');
      Rational q = rational_literal();
      if (!lex_.eat(')')) throw ParseError("expected ')'", lex_.col());
      return neg ? -q : q;
    }
    return rational_literal();
  }

  Rational rational_literal() {
    int start = lex_.col();
    if (!std::isdigit(static_cast<unsigned char>(lex_.peek())))
      throw ParseError("expected number", start);
    std::int64_t num = integer();
    if (lex_.pos < lex_.text.size() && lex_.text[lex_.pos] == '/') {
      ++lex_.pos;
      if (lex_.pos >= lex_.text.size() ||
          !std::isdigit(static_cast<unsigned char>(lex_.text[lex_.pos])))
        throw ParseError("expected denominator", static_cast<int>(lex_.pos));
      std::int64_t den = integer();
      if (den == 0) throw ParseError("zero denominator", start);
      return Rational(num, den);
    }
    return Rational(num);
  }

  std::int64_t integer() {
    lex_.skip_ws();
    std::int64_t v = 0;
    bool any = false;
    while (lex_.pos < lex_.text.size() &&
           std::isdigit(static_cast<unsigned char>(lex_.text[lex_.pos]))) {
      v = v * 10 + (lex_.text[lex_.pos] - '0');
      ++lex_.pos;
      any = true;
    }
    if (!any) throw ParseError("expected integer", static_cast<int>(lex_.pos));
    return v;
  }

  std::string identifier() {
    lex_.skip_ws();
    std::string id;
    while (lex_.pos < lex_.text.size() &&
           (std::isalnum(static_cast<unsigned char>(lex_.text[lex_.pos])))) {
      id += lex_.text[lex_.pos];
      ++lex_.pos;
    }
    return id;
  }

  Expr atom() {
    const int start = lex_.col();
    char c = lex_.peek();
    if (c == '\0') {
      // point at the last non-space character
      int p = static_cast<int>(lex_.text.size()) - 1;
      while (p > 0 && std::isspace(static_cast<unsigned char>(lex_.text[static_cast<size_t>(p)])))
        --p;
      throw ParseError("unexpected end of input", p);
    }
    if (c == '(') {
      lex_.get();
      Expr e = expression();
      if (!lex_.eat(')')) throw ParseError("expected ')'", lex_.col());
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      return constant(rational_literal(), sp_);
    }
    if (!std::isalpha(static_cast<unsigned char>(c)))
      throw ParseError("syntax error", start);
    std::string id = identifier();

    // variables x<k>, t<k>
    if ((id[0] == 'x' || id[0] == 't') && id.size() > 1 &&
        std::all_of(id.begin() + 1, id.end(),
                    [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      const Block b = id[0] == 'x' ? Block::X : Block::Theta;
      const int idx = std::stoi(id.substr(1)) - 1;
      const int limit = b == Block::X ? sp_.d : sp_.s;
      if (idx < 0 || idx >= limit) throw ParseError("unknown variable '" + id + "'", start);
      return variable(b, idx, sp_);
    }

    if (id == "exp" || id == "sin" || id == "cos" || id == "sqrt") {
      if (!lex_.eat('(')) throw ParseError("expected '(' after '" + id + "'", lex_.col());
      if (lex_.peek() == ')') throw ParseError("arity mismatch: '" + id + "' takes one argument",
                                               lex_.col());
      Expr arg = expression();
      if (!lex_.eat(')')) throw ParseError("expected ')'", lex_.col());
      if (id == "exp") return exp(arg);
      if (id == "sin") return sin(arg);
      if (id == "cos") return cos(arg);
      if (!is_structurally_nonneg(arg.node()))
        throw ParseError("sqrt of a base without definite sign", start);
      return sqrt(arg);
    }

    if (id == "jbx" || id == "jbt" || id == "nx" || id == "nt") {
      if (!lex_.eat('(')) throw ParseError("expected '(' after '" + id + "'", lex_.col());
      if (lex_.peek() != ')')
        throw ParseError("arity mismatch: '" + id + "' takes no arguments", lex_.col());
      lex_.get();
      const Block b = id[1] == 'b' ? (id[2] == 'x' ? Block::X : Block::Theta)
                                   : (id[1] == 'x' ? Block::X : Block::Theta);
      if (id[0] == 'j') return japanese_bracket(b, sp_);
      return smooth_norm(b, sp_);
    }

    // round-trip forms for derived expressions
    if (id == "nrm" || (id.rfind("nrmd", 0) == 0 && id.size() > 4)) {
      const int k = id == "nrm" ? 0 : std::stoi(id.substr(4));
      if (!lex_.eat('(')) throw ParseError("expected '('", lex_.col());
      Expr arg = expression();
      if (!lex_.eat(')')) throw ParseError("expected ')'", lex_.col());
      return radial(arg, k);
    }
    if (id == "cut" || (id.rfind("cutd", 0) == 0 && id.size() > 4)) {
      const int k = id == "cut" ? 0 : std::stoi(id.substr(4));
      if (!lex_.eat('(')) throw ParseError("expected '('", lex_.col());
      Expr arg = expression();
      if (!lex_.eat(',')) throw ParseError("expected ','", lex_.col());
      bool n0 = lex_.eat('-');
      Rational t0 = rational_literal();
      if (n0) t0 = -t0;
      if (!lex_.eat(',')) throw ParseError("expected ','", lex_.col());
      bool n1 = lex_.eat('-');
      Rational t1 = rational_literal();
      if (n1) t1 = -t1;
      if (!lex_.eat(')')) throw ParseError("expected ')'", lex_.col());
      return cutoff(arg, k, t0, t1);
    }

    throw ParseError("unknown variable or function '" + id + "'", start);
  }
};

}  // namespace

Expr parse(const std::string& text, const VarSpace& sp) { return Parser(text, sp).run(); }

}  // namespace sclag
