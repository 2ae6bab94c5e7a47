#include "sclag/rational.hpp"

#include <numeric>

namespace sclag {

namespace {

std::int64_t checked(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw RationalOverflow("rational overflow");
  return static_cast<std::int64_t>(v);
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) {
  if (d == 0) throw std::invalid_argument("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
  num_ = g ? n / g : n;
  den_ = g ? d / g : d;
}

Rational operator+(const Rational& a, const Rational& b) {
  __int128 n = static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_;
  __int128 d = static_cast<__int128>(a.den_) * b.den_;
  // Reduce in 128-bit before narrowing.
  __int128 x = n < 0 ? -n : n, y = d;
  while (y) {
    __int128 t = x % y;
    x = y;
    y = t;
  }
  if (x > 1) {
    n /= x;
    d /= x;
  }
  return Rational(checked(n), checked(d));
}

Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }

Rational operator*(const Rational& a, const Rational& b) {
  const Rational x(a.num_, b.den_);  // cross-reduce
  const Rational y(b.num_, a.den_);
  __int128 n = static_cast<__int128>(x.num_) * y.num_;
  __int128 d = static_cast<__int128>(x.den_) * y.den_;
  return Rational(checked(n), checked(d));
}

Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw std::invalid_argument("rational division by zero");
  return a * Rational(b.den_, b.num_);
}

bool operator<(const Rational& a, const Rational& b) {
  return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

}  // namespace sclag
