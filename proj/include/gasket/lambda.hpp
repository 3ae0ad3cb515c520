#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gasket/errors.hpp"
#include "gasket/numeric.hpp"

namespace gasket {

/// Raised when a finite digit list runs out before the computation is done.
class DigitsExhausted : public DataError {
 public:
  using DataError::DataError;
};

/// Digit stream d_1 d_2 ... in base 2 or 3: eventually periodic, finite, or a callback.
class DigitSource {
 public:
  using Callback = std::function<int(long)>;

  DigitSource(int base, std::vector<int> prefix, std::vector<int> period)
      : base_(base), prefix_(std::move(prefix)), period_(std::move(period)) {
    for (int d : prefix_) check(d);
    for (int d : period_) check(d);
  }
  DigitSource(int base, Callback cb) : base_(base), callback_(std::move(cb)) {}

  int base() const { return base_; }
  bool periodic() const { return !callback_ && !period_.empty(); }
  bool finite() const { return !callback_ && period_.empty(); }
  bool callback() const { return static_cast<bool>(callback_); }
  const std::vector<int>& prefix() const { return prefix_; }
  const std::vector<int>& period() const { return period_; }

  /// Digit at 1-based position k.
  int digit(long k) const {
    if (callback_) {
      int d = callback_(k);
      check(d);
      return d;
    }
    if (k <= static_cast<long>(prefix_.size())) return prefix_[static_cast<std::size_t>(k - 1)];
    if (period_.empty()) {
      throw DigitsExhausted("digit stream exhausted at position " + std::to_string(k));
    }
    long j = (k - 1 - static_cast<long>(prefix_.size())) % static_cast<long>(period_.size());
    return period_[static_cast<std::size_t>(j)];
  }

  /// Reduces a start offset so that equal suffixes share a key.
  long normalize_offset(long offset) const {
    if (!periodic() || offset < static_cast<long>(prefix_.size())) return offset;
    long p = static_cast<long>(period_.size());
    return static_cast<long>(prefix_.size()) + (offset - static_cast<long>(prefix_.size())) % p;
  }

  /// Exact value of 0.d_{offset+1} d_{offset+2} ... for periodic streams.
  std::optional<Rational> value(long offset) const {
    if (!periodic()) return std::nullopt;
    Rational b(base_);
    Rational sum = 0;
    Rational place = 1;
    long plen = static_cast<long>(prefix_.size());
    for (long k = offset + 1; k <= plen; ++k) {
      place /= b;
      sum += place * prefix_[static_cast<std::size_t>(k - 1)];
    }
    long start = std::max(offset, plen);
    Rational per = 0;
    Rational pp = 1;
    long q = static_cast<long>(period_.size());
    long shift = (start - plen) % q;
    for (long j = 0; j < q; ++j) {
      pp /= b;
      per += pp * period_[static_cast<std::size_t>((shift + j) % q)];
    }
    Rational full = 1;
    for (long j = 0; j < q; ++j) full *= b;
    per = per * full / (full - 1);
    return sum + place * per;
  }

 private:
  void check(int d) const {
    if (d < 0 || d >= base_) throw DataError("digit " + std::to_string(d) + " invalid in base " + std::to_string(base_));
  }

  int base_;
  std::vector<int> prefix_;
  std::vector<int> period_;
  Callback callback_;
};

namespace lambda_detail {

/// Eventually periodic expansion of q in [0,1) in the given base.
inline std::pair<std::vector<int>, std::vector<int>> expand(const Rational& q, int base) {
  std::vector<int> digits;
  std::map<Rational, std::size_t> seen;
  Rational x = q;
  const std::size_t limit = 1u << 20;
  while (true) {
    if (x == 0) return {digits, {0}};
    auto [it, fresh] = seen.emplace(x, digits.size());
    if (!fresh) {
      std::vector<int> prefix(digits.begin(), digits.begin() + static_cast<long>(it->second));
      std::vector<int> period(digits.begin() + static_cast<long>(it->second), digits.end());
      return {prefix, period};
    }
    if (digits.size() > limit) throw CapabilityError("expansion period too long");
    x *= base;
    Integer whole = boost::multiprecision::numerator(x) / boost::multiprecision::denominator(x);
    int d = whole.convert_to<int>();
    digits.push_back(d);
    x -= d;
  }
}

inline std::vector<std::pair<long, int>> parse_pairs(std::string_view s, std::string_view what) {
  std::vector<std::pair<long, int>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '(') throw DataError(std::string(what) + ": expected '(' at column " + std::to_string(i + 1));
    auto close = s.find(')', i);
    auto comma = s.find(',', i);
    if (close == std::string_view::npos || comma == std::string_view::npos || comma > close) {
      throw DataError(std::string(what) + ": malformed pair at column " + std::to_string(i + 1));
    }
    auto a = parse_rational(s.substr(i + 1, comma - i - 1));
    auto b = parse_rational(s.substr(comma + 1, close - comma - 1));
    if (boost::multiprecision::denominator(a) != 1 || boost::multiprecision::denominator(b) != 1) {
      throw DataError(std::string(what) + ": pair entries must be integers");
    }
    out.emplace_back(a.convert_to<long>(), b.convert_to<int>());
    i = close + 1;
  }
  return out;
}

}  // namespace lambda_detail

/// lambda = sum_k iota_k 3^(-m_k) with iota_k in {1,2}, seen through its
/// base-3 digits. Triadic rationals use the infinite all-2 expansion.
class TriadicLambda {
 public:
  /// lambda in (0, 1].
  static TriadicLambda from_rational(const Rational& q) {
    if (q <= 0 || q > 1) throw DataError("upper-domain lambda must lie in (0, 1]");
    if (q == 1) return TriadicLambda(std::make_shared<DigitSource>(3, std::vector<int>{}, std::vector<int>{2}), 0);
    auto [prefix, period] = lambda_detail::expand(q, 3);
    if (period == std::vector<int>{0}) {
      // Terminating: d_1..d_n with d_n > 0 becomes d_1..(d_n - 1) 2 2 2 ...
      while (!prefix.empty() && prefix.back() == 0) prefix.pop_back();
      prefix.back() -= 1;
      period = {2};
    }
    return TriadicLambda(std::make_shared<DigitSource>(3, prefix, period), 0);
  }

  /// Nonzero digits as absolute (m_k, iota_k) pairs, then an optional
  /// repeating block of (gap, iota) pairs where gap = m_{k+1} - m_k.
  static TriadicLambda from_pairs(const std::vector<std::pair<long, int>>& head,
                                  const std::vector<std::pair<long, int>>& periodic) {
    std::vector<int> prefix;
    long last = 0;
    for (auto [m, iota] : head) {
      if (m <= last) throw DataError("digit positions m_k must be strictly increasing and positive");
      if (iota != 1 && iota != 2) throw DataError("iota_k must be 1 or 2");
      prefix.resize(static_cast<std::size_t>(m), 0);
      prefix[static_cast<std::size_t>(m - 1)] = iota;
      last = m;
    }
    std::vector<int> period;
    for (auto [gap, iota] : periodic) {
      if (gap < 1) throw DataError("periodic gaps must be positive");
      if (iota != 1 && iota != 2) throw DataError("iota_k must be 1 or 2");
      for (long k = 1; k < gap; ++k) period.push_back(0);
      period.push_back(iota);
    }
    if (prefix.empty() && period.empty()) throw DataError("lambda needs at least one digit");
    return TriadicLambda(std::make_shared<DigitSource>(3, prefix, period), 0);
  }

  /// Base-3 digit callback d(k), k >= 1.
  static TriadicLambda from_callback(DigitSource::Callback cb) {
    return TriadicLambda(std::make_shared<DigitSource>(3, std::move(cb)), 0);
  }

  /// "p/q", a decimal, or "digits:(m,i)(m,i)...[periodic:(gap,i)...]".
  static TriadicLambda parse(std::string_view text) {
    if (text.rfind("digits:", 0) == 0) {
      auto body = text.substr(7);
      auto pos = body.find("periodic:");
      auto head = lambda_detail::parse_pairs(body.substr(0, pos), "lambda digits");
      std::vector<std::pair<long, int>> tail;
      if (pos != std::string_view::npos) tail = lambda_detail::parse_pairs(body.substr(pos + 9), "lambda periodic");
      return from_pairs(head, tail);
    }
    return from_rational(parse_rational(text));
  }

  int digit(long k) const { return source_->digit(offset_ + k); }

  /// First nonzero digit position m_1 and its value iota_1.
  std::pair<long, int> first() const {
    const long limit = 1L << 16;
    for (long k = 1; k <= limit; ++k) {
      int d = digit(k);
      if (d != 0) return {k, d};
    }
    throw DigitsExhausted("no nonzero digit within 65536 positions");
  }
  long m1() const { return first().first; }
  int iota1() const { return first().second; }
  /// Gap m_2 - m_1.
  long gap() const { return shift().m1(); }

  /// R lambda: digits after position m_1.
  TriadicLambda shift() const { return TriadicLambda(source_, offset_ + m1()); }
  TriadicLambda shift(int n) const {
    TriadicLambda x = *this;
    for (int i = 0; i < n; ++i) x = x.shift();
    return x;
  }

  std::optional<Rational> value() const { return source_->value(offset_); }
  bool exact() const { return source_->periodic(); }
  double approx() const {
    double v = 0, place = 1;
    for (long k = 1; k <= 60; ++k) {
      place /= 3;
      v += place * digit(k);
    }
    return v;
  }

  /// Identifies the suffix for memoization.
  std::pair<const DigitSource*, long> key() const { return {source_.get(), source_->normalize_offset(offset_)}; }

  /// (m_k, iota_k) for k = 1..n.
  std::vector<std::pair<long, int>> terms(int n) const {
    std::vector<std::pair<long, int>> out;
    TriadicLambda x = *this;
    long base = 0;
    for (int k = 0; k < n; ++k) {
      auto [m, iota] = x.first();
      base += m;
      out.emplace_back(base, iota);
      x = x.shift();
    }
    return out;
  }

 private:
  TriadicLambda(std::shared_ptr<const DigitSource> s, long offset) : source_(std::move(s)), offset_(offset) {}

  std::shared_ptr<const DigitSource> source_;
  long offset_;
};

/// lambda = sum_k e_k 2^(-k) in [0, 1) with no infinite run of 1's.
class BinaryLambda {
 public:
  static BinaryLambda from_rational(const Rational& q) {
    if (q < 0 || q >= 1) throw DataError("lower-domain lambda must lie in [0, 1)");
    auto [prefix, period] = lambda_detail::expand(q, 2);
    return BinaryLambda(std::make_shared<DigitSource>(2, prefix, period), 0);
  }
  static BinaryLambda from_bits(std::vector<int> prefix, std::vector<int> period) {
    if (!period.empty() && std::all_of(period.begin(), period.end(), [](int d) { return d == 1; })) {
      throw DataError("lower-domain lambda may not end in infinitely many 1's");
    }
    return BinaryLambda(std::make_shared<DigitSource>(2, std::move(prefix), std::move(period)), 0);
  }
  /// Callback digits; the caller guarantees no infinite run of 1's.
  static BinaryLambda from_callback(DigitSource::Callback cb) {
    return BinaryLambda(std::make_shared<DigitSource>(2, std::move(cb)), 0);
  }

  /// "p/q", a decimal, or "bits:0101[periodic:01]".
  static BinaryLambda parse(std::string_view text) {
    if (text.rfind("bits:", 0) == 0) {
      auto body = text.substr(5);
      auto pos = body.find("periodic:");
      auto bits = [&](std::string_view s) {
        std::vector<int> out;
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (s[i] != '0' && s[i] != '1') {
            throw DataError("lambda bits: invalid character at column " + std::to_string(i + 1));
          }
          out.push_back(s[i] - '0');
        }
        return out;
      };
      auto prefix = bits(body.substr(0, pos));
      std::vector<int> period = pos == std::string_view::npos ? std::vector<int>{0} : bits(body.substr(pos + 9));
      if (period.empty()) throw DataError("lambda bits: empty periodic block");
      return from_bits(prefix, period);
    }
    return from_rational(parse_rational(text));
  }

  int digit(long k) const { return source_->digit(offset_ + k); }
  BinaryLambda shift(long n = 1) const { return BinaryLambda(source_, offset_ + n); }

  /// d(lambda) when dyadic: least d with lambda 2^d integral. Null otherwise.
  std::optional<long> dyadic_depth() const {
    if (!source_->periodic()) return std::nullopt;
    const auto& period = source_->period();
    if (std::any_of(period.begin(), period.end(), [](int d) { return d != 0; })) return std::nullopt;
    long plen = static_cast<long>(source_->prefix().size());
    long d = 0;
    for (long k = offset_ + 1; k <= plen; ++k) {
      if (source_->prefix()[static_cast<std::size_t>(k - 1)] != 0) d = k - offset_;
    }
    return d;
  }
  bool dyadic() const { return dyadic_depth().has_value(); }
  bool is_zero() const { return dyadic_depth() == 0; }

  std::optional<Rational> value() const { return source_->value(offset_); }
  bool exact() const { return source_->periodic(); }
  double approx() const {
    double v = 0, place = 1;
    for (long k = 1; k <= 60; ++k) {
      place /= 2;
      v += place * digit(k);
    }
    return v;
  }

  /// Least j with 1 - lambda > 2^(-j): one more than the leading run of 1's.
  long gap_exponent() const {
    const long limit = 1L << 16;
    for (long k = 1; k <= limit; ++k) {
      if (digit(k) == 0) return k;
    }
    throw DigitsExhausted("lambda too close to 1");
  }

  std::pair<const DigitSource*, long> key() const { return {source_.get(), source_->normalize_offset(offset_)}; }

 private:
  BinaryLambda(std::shared_ptr<const DigitSource> s, long offset) : source_(std::move(s)), offset_(offset) {}

  std::shared_ptr<const DigitSource> source_;
  long offset_;
};

}  // namespace gasket
