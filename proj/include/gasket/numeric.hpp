#pragma once

#include <boost/multiprecision/gmp.hpp>

#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "gasket/errors.hpp"

namespace gasket {

/// Exact rational backed by GMP, expression templates off so `auto` is safe.
using Rational = boost::multiprecision::number<boost::multiprecision::gmp_rational,
                                               boost::multiprecision::et_off>;
using Integer = boost::multiprecision::number<boost::multiprecision::gmp_int,
                                              boost::multiprecision::et_off>;

template <class T>
concept Scalar = std::same_as<T, double> || std::same_as<T, Rational>;

template <class T>
inline constexpr bool is_exact_v = std::is_same_v<T, Rational>;

template <Scalar T>
T ratio(long long p, long long q = 1) {
  if constexpr (is_exact_v<T>) {
    return Rational(p) / Rational(q);
  } else {
    return static_cast<double>(p) / static_cast<double>(q);
  }
}

inline double to_double(double x) { return x; }
inline double to_double(const Rational& x) { return x.convert_to<double>(); }

/// Converts an exact value into the scalar type T.
template <Scalar T>
T from_rational(const Rational& q) {
  if constexpr (is_exact_v<T>) {
    return q;
  } else {
    return q.convert_to<double>();
  }
}

inline double abs_value(double x) { return std::abs(x); }
inline Rational abs_value(const Rational& x) { return boost::multiprecision::abs(x); }

template <Scalar T>
T power(T base, long long n) {
  T result = ratio<T>(1);
  if (n < 0) {
    base = ratio<T>(1) / base;
    n = -n;
  }
  while (n > 0) {
    if (n & 1) result *= base;
    base *= base;
    n >>= 1;
  }
  return result;
}

inline bool is_zero(double x) { return x == 0.0; }
inline bool is_zero(const Rational& x) { return x == 0; }

/// Shortest round-trip decimal for doubles, "p/q" for rationals.
inline std::string format_number(double x) {
  if (x == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_number(const Rational& x) {
  Integer num = boost::multiprecision::numerator(x);
  Integer den = boost::multiprecision::denominator(x);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

/// Parses "p", "p/q", or a finite decimal such as "-0.375" exactly.
inline Rational parse_rational(std::string_view text) {
  auto fail = [&] { throw DataError("not a rational number: '" + std::string(text) + "'"); };
  if (text.empty()) fail();
  auto slash = text.find('/');
  auto parse_int = [&](std::string_view s) -> Integer {
    if (s.empty()) fail();
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) fail();
    for (std::size_t k = i; k < s.size(); ++k) {
      if (s[k] < '0' || s[k] > '9') fail();
    }
    return Integer(std::string(s[0] == '+' ? s.substr(1) : s));
  };
  if (slash != std::string_view::npos) {
    Integer p = parse_int(text.substr(0, slash));
    Integer q = parse_int(text.substr(slash + 1));
    if (q == 0) throw DataError("zero denominator in '" + std::string(text) + "'");
    return Rational(p) / Rational(q);
  }
  auto dot = text.find('.');
  if (dot == std::string_view::npos) return Rational(parse_int(text));
  std::string digits(text.substr(0, dot));
  std::string frac(text.substr(dot + 1));
  bool negative = !digits.empty() && digits[0] == '-';
  if (!digits.empty() && (digits[0] == '-' || digits[0] == '+')) digits.erase(0, 1);
  if (digits.empty() && frac.empty()) fail();
  for (char c : frac) {
    if (c < '0' || c > '9') fail();
  }
  Integer whole = digits.empty() ? Integer(0) : parse_int(digits);
  Integer scale = 1;
  for (std::size_t k = 0; k < frac.size(); ++k) scale *= 10;
  Integer part = frac.empty() ? Integer(0) : Integer(frac);
  Rational value = Rational(whole) + Rational(part) / Rational(scale);
  return negative ? -value : value;
}

/// Dense Gaussian elimination with partial pivoting (by magnitude in float
/// mode, first nonzero in exact mode). Meant for systems of a few dozen rows.
template <Scalar T>
std::vector<T> solve_dense(std::vector<std::vector<T>> a, std::vector<T> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = n;
    if constexpr (is_exact_v<T>) {
      for (std::size_t r = col; r < n; ++r) {
        if (!is_zero(a[r][col])) {
          pivot = r;
          break;
        }
      }
    } else {
      double best = 0.0;
      for (std::size_t r = col; r < n; ++r) {
        if (std::abs(a[r][col]) > best) {
          best = std::abs(a[r][col]);
          pivot = r;
        }
      }
    }
    if (pivot == n) throw SolvabilityError("singular dense system");
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      if (is_zero(a[r][col])) continue;
      T factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<T> x(n);
  for (std::size_t i = n; i-- > 0;) {
    T acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace gasket
