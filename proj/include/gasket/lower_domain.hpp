#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <vector>

#include "gasket/energy.hpp"
#include "gasket/geometry.hpp"
#include "gasket/lambda.hpp"
#include "gasket/numeric.hpp"

namespace gasket {

/// 2x2 matrix (a b; c d).
template <Scalar T>
struct Mat2 {
  T a, b, c, d;

  static Mat2 identity() { return {ratio<T>(1), ratio<T>(0), ratio<T>(0), ratio<T>(1)}; }
  Mat2 operator*(const Mat2& o) const {
    return {a * o.a + b * o.c, a * o.b + b * o.d, c * o.a + d * o.c, c * o.b + d * o.d};
  }
  std::array<T, 2> operator*(const std::array<T, 2>& v) const { return {a * v[0] + b * v[1], c * v[0] + d * v[1]}; }
  Mat2 transpose() const { return {a, c, b, d}; }
  bool operator==(const Mat2&) const = default;
};

template <Scalar T>
std::pair<T, T> t0_map(const T& x, const T& y) {
  T s = ratio<T>(5, 6) * (3 + 2 * x + 2 * y) / (2 + x + y);
  T t = ratio<T>(5, 2) * (x - y) / (3 + 2 * x - 2 * y);
  return {s + t, s - t};
}

template <Scalar T>
std::pair<T, T> t1_map(const T& x, const T& y) {
  if (!(x >= 2)) throw AccuracyError("eta_1 fell below 2 in the recursion");
  return {ratio<T>(5, 3) * (x - y * y / (2 * x)), 5 * y * y / (6 * x)};
}

template <Scalar T>
struct EtaPair {
  T eta1 = ratio<T>(2);
  T eta2 = ratio<T>(1);
  /// Number of T maps composed.
  int depth = 0;
  /// Bound on max(|eta1 - true|, |eta2 - true|); zero when exact.
  double bound = 0;
};

struct EtaPairOptions {
  double tolerance = 1e-13;
  int max_depth = 4000;
};

/// T_{e_1} o ... o T_{e_m}(c1, c2).
template <Scalar T>
EtaPair<T> compose_eta(const BinaryLambda& lambda, int m, const T& c1, const T& c2) {
  T x = c1, y = c2;
  for (int k = m; k >= 1; --k) {
    auto next = lambda.digit(k) == 0 ? t0_map(x, y) : t1_map(x, y);
    x = next.first;
    y = next.second;
  }
  return {x, y, m, 0};
}

/// Exact (eta1, eta2) for dyadic lambda: the recursion starts from eta(0) = (2, 1).
template <Scalar T>
EtaPair<T> eta_pair_dyadic(const BinaryLambda& lambda) {
  auto d = lambda.dyadic_depth();
  if (!d) throw CapabilityError("lambda is not a dyadic rational");
  return compose_eta<T>(lambda, static_cast<int>(*d), ratio<T>(2), ratio<T>(1));
}

inline void check_eta_invariants(double e1, double e2, double slack) {
  if (!std::isfinite(e1) || !std::isfinite(e2)) throw AccuracyError("lambda too close to 1: eta leaves the double range");
  if (e1 < 2 - slack || e2 < -slack || e2 > 1 + slack || e1 + e2 < 3 - slack) {
    throw AccuracyError("eta pair violates eta1 >= 2, 0 <= eta2 <= 1, eta1 + eta2 >= 3");
  }
}

/// Composite map at depth m with bound 8 (3/5)^{m-2j}(1/(c1-c2) + 1), j least with 1 - lambda > 2^{-j}.
inline EtaPair<double> eta_pair(const BinaryLambda& lambda, int m, double c1 = 2, double c2 = 1) {
  if (m < 1) throw DataError("eta_pair needs depth m >= 1");
  if (!(c1 > c2 && c2 > 0)) throw DataError("seed needs c1 > c2 > 0");
  auto e = compose_eta<double>(lambda, m, c1, c2);
  auto d = lambda.dyadic_depth();
  if (d && *d <= m && c1 == 2 && c2 == 1) {
    e.bound = 0;
  } else {
    long j = lambda.gap_exponent();
    e.bound = 8 * std::pow(0.6, static_cast<double>(m - 2 * j)) * (1 / (c1 - c2) + 1);
  }
  check_eta_invariants(e.eta1, e.eta2, e.bound + 1e-12);
  return e;
}

/// Smallest depth whose bound meets the tolerance (exact depth for dyadic lambda).
inline EtaPair<double> eta_pair(const BinaryLambda& lambda, const EtaPairOptions& opt = {}) {
  if (auto d = lambda.dyadic_depth()) {
    auto e = eta_pair_dyadic<double>(lambda);
    check_eta_invariants(e.eta1, e.eta2, 1e-12);
    return e;
  }
  long j = lambda.gap_exponent();
  double need = std::log(opt.tolerance / 16) / std::log(0.6);
  long m = 2 * j + static_cast<long>(std::ceil(need));
  if (m > opt.max_depth) {
    throw AccuracyError("lambda too close to 1: eta needs " + std::to_string(m) + " digits for tolerance " +
                        format_number(opt.tolerance));
  }
  return eta_pair(lambda, static_cast<int>(std::max(1L, m)));
}

/// M^lambda_i from eta(S lambda).
template <Scalar T>
Mat2<T> lower_matrix(int digit, const T& e1, const T& e2) {
  if (digit == 0) {
    T den = 6 + 4 * e1 + 4 * e2;
    T diag = (3 + 3 * e1 + 3 * e2) / den;
    T off = (3 + e1 + e2) / den;
    return {diag, off, off, diag};
  }
  T r = e2 / (2 * e1);
  if (digit == 1) return {ratio<T>(1), ratio<T>(0), -r, r};
  return {r, -r, ratio<T>(0), ratio<T>(1)};
}

/// Values (u(F_0 q_1), u(F_0 q_2), u(F_1 q_2)) from the matching equations.
/// e = eta(S lambda); in[(i, k)] = integral of f o F_i against mu_k^{S lambda}, k = 1, 2.
template <Scalar T>
std::array<T, 3> solve_lower_step(int digit, const T& e1, const T& e2, const T& f1, const T& f2,
                                  const std::map<std::pair<int, int>, T>& in) {
  const T z = ratio<T>(0), one = ratio<T>(1);
  if (digit == 1) {
    T rhs = e2 * (f1 + f2) + (e1 - e2) * (in.at({1, 2}) + in.at({2, 1}));
    auto x = solve_dense(std::vector<std::vector<T>>{{2 * e1}}, std::vector<T>{rhs});
    return {z, z, x[0]};
  }
  // Unknowns (x, y, z) = (u(F_0 q_1), u(F_0 q_2), u(F_1 q_2)).
  std::vector<std::vector<T>> m = {
      {-one, -one, ratio<T>(4)},
      {e1 + 2, -e2, -one},
      {-e2, e1 + 2, -one},
  };
  std::vector<T> b = {f1 + f2, f1 + (e1 - e2) * in.at({0, 1}), f2 + (e1 - e2) * in.at({0, 2})};
  auto x = solve_dense(m, b);
  return {x[0], x[1], x[2]};
}

/// Closed forms for the same values.
template <Scalar T>
std::array<T, 3> extend_step_lower(int digit, const T& e1, const T& e2, const T& f1, const T& f2,
                                   const std::map<std::pair<int, int>, T>& in) {
  const T z = ratio<T>(0);
  if (digit == 1) {
    T v = e2 / (2 * e1) * (f1 + f2) + (e1 - e2) / (2 * e1) * (in.at({1, 2}) + in.at({2, 1}));
    return {z, z, v};
  }
  T den = 4 * e1 * e1 + 14 * e1 - 2 * e2 - 4 * e2 * e2 + 12;
  auto side = [&](const T& near, const T& far, const T& i_near, const T& i_far) {
    return ((9 + 5 * e1 + e2) * near + (3 + e1 + 5 * e2) * far + (7 + 4 * e1) * (e1 - e2) * i_near +
            (1 + 4 * e2) * (e1 - e2) * i_far) /
           den;
  };
  T x = side(f1, f2, in.at({0, 1}), in.at({0, 2}));
  T y = side(f2, f1, in.at({0, 2}), in.at({0, 1}));
  return {x, y, (x + y + f1 + f2) / 4};
}

/// Per-suffix data of a lower domain: digits, eta(S^n lambda), transfer matrices, measures.
template <Scalar T>
class LowerGeometry {
 public:
  explicit LowerGeometry(BinaryLambda lambda, EtaPairOptions opt = {}) : lambda_(std::move(lambda)), opt_(opt), g_(2) {
    if constexpr (is_exact_v<T>) {
      if (!lambda_.dyadic()) throw CapabilityError("rational mode needs a dyadic lambda; use float mode");
    }
  }

  const BinaryLambda& lambda() const { return lambda_; }
  const Gasket& gasket() const { return g_; }
  /// e_n for n >= 1.
  int digit(int n) const { return lambda_.digit(n); }
  /// Digits of W~ between levels n and n+1.
  const std::vector<int>& alphabet(int n) const {
    static const std::vector<int> zero = {0};
    static const std::vector<int> ones = {1, 2};
    return digit(n + 1) == 0 ? zero : ones;
  }

  EtaPair<T> eta_pair(int n) const {
    auto s = lambda_.shift(n);
    auto key = s.key();
    {
      std::shared_lock lock(mutex_);
      auto it = eta_.find(key);
      if (it != eta_.end()) return it->second;
    }
    EtaPair<T> e;
    if constexpr (is_exact_v<T>) {
      e = eta_pair_dyadic<T>(s);
    } else {
      e = gasket::eta_pair(s, opt_);
    }
    std::unique_lock lock(mutex_);
    eta_.emplace(key, e);
    return e;
  }
  std::pair<T, T> eta(int n) const {
    auto e = eta_pair(n);
    return {e.eta1, e.eta2};
  }

  /// M_i^{S^n lambda}.
  Mat2<T> matrix(int n, int digit) const {
    auto [e1, e2] = eta(n + 1);
    return lower_matrix(digit, e1, e2);
  }

  /// M_w = M_{w_k}^{S^{k-1} lambda} ... M_{w_1}^lambda.
  Mat2<T> transfer_matrix(const Word& w) const {
    check_word(w);
    Mat2<T> m = Mat2<T>::identity();
    for (std::size_t k = 0; k < w.size(); ++k) m = matrix(static_cast<int>(k), w[k]) * m;
    return m;
  }

  /// (mu_1(X_w), mu_2(X_w)).
  std::pair<T, T> measures(const Word& w) const {
    auto [e1, e2] = eta(0);
    auto m = transfer_matrix(w);
    auto v1 = m * std::array<T, 2>{e1, -e2};
    auto v2 = m * std::array<T, 2>{-e2, e1};
    return {(v1[0] + v1[1]) / (e1 - e2), (v2[0] + v2[1]) / (e1 - e2)};
  }

  std::vector<Word> words(int n) const {
    std::vector<Word> out{Word{}};
    for (int k = 0; k < n; ++k) {
      std::vector<Word> next;
      for (const auto& w : out) {
        for (int i : alphabet(k)) next.push_back(w.then(i));
      }
      out = std::move(next);
    }
    return out;
  }

  void check_word(const Word& w) const {
    for (std::size_t k = 0; k < w.size(); ++k) {
      const auto& s = alphabet(static_cast<int>(k));
      if (std::find(s.begin(), s.end(), w[k]) == s.end()) {
        throw AddressError("digit " + std::to_string(w[k]) + " at position " + std::to_string(k + 1) +
                           " does not match the binary digits of lambda");
      }
    }
  }

 private:
  BinaryLambda lambda_;
  EtaPairOptions opt_;
  Gasket g_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::pair<const DigitSource*, long>, EtaPair<T>> eta_;
};

/// Values at q1, q2 and on each depth-d cylinder X_w.
template <Scalar T>
struct LowerBoundaryData {
  T q1 = ratio<T>(0);
  T q2 = ratio<T>(0);
  int depth = 0;
  std::map<Word, T> values;

  static LowerBoundaryData constant(const T& c) { return {c, c, 0, {{Word{}, c}}}; }
  static LowerBoundaryData h1() { return {ratio<T>(1), ratio<T>(0), 0, {{Word{}, ratio<T>(0)}}}; }
  static LowerBoundaryData h2() { return {ratio<T>(0), ratio<T>(1), 0, {{Word{}, ratio<T>(0)}}}; }

  static LowerBoundaryData cylinders(const LowerGeometry<T>& geo, const T& a, const T& b, int d,
                                     const std::function<T(const Word&)>& value) {
    LowerBoundaryData f{a, b, d, {}};
    for (const auto& w : geo.words(d)) f.values.emplace(w, value(w));
    return f;
  }

  T cylinder_value(const Word& w) const {
    auto it = values.find(w.prefix(static_cast<std::size_t>(depth)));
    if (it == values.end()) throw DataError("no boundary value for cylinder " + w.str());
    return it->second;
  }

  void validate(const LowerGeometry<T>& geo) const {
    if (depth < 0) throw DataError("cylinder depth must be nonnegative");
    auto ws = geo.words(depth);
    if (ws.size() != values.size()) {
      throw DataError("boundary data needs one value per depth-" + std::to_string(depth) + " cylinder");
    }
    for (const auto& w : ws) {
      if (!values.count(w)) throw DataError("missing boundary value for cylinder " + w.str());
    }
  }
};

/// Harmonic function on the lower domain with cylinder-constant data.
template <Scalar T>
class LowerSolution {
 public:
  LowerSolution(std::shared_ptr<const LowerGeometry<T>> geo, LowerBoundaryData<T> f)
      : geo_(std::move(geo)), f_(std::move(f)) {
    f_.validate(*geo_);
  }

  const LowerGeometry<T>& geometry() const { return *geo_; }
  const LowerBoundaryData<T>& data() const { return f_; }

  /// g(w) with sum_v (1,1) M_v D f(X_{wv}) = g . D for derivative vectors D at level |w|.
  std::array<T, 2> moments(const Word& w) const {
    if (static_cast<int>(w.size()) >= f_.depth) {
      T c = f_.cylinder_value(w);
      return {c, c};
    }
    {
      std::lock_guard lock(mutex_);
      auto it = moments_.find(w);
      if (it != moments_.end()) return it->second;
    }
    int n = static_cast<int>(w.size());
    std::array<T, 2> g{ratio<T>(0), ratio<T>(0)};
    for (int i : geo_->alphabet(n)) {
      auto child = geo_->matrix(n, i).transpose() * moments(w.then(i));
      g[0] += child[0];
      g[1] += child[1];
    }
    std::lock_guard lock(mutex_);
    moments_.emplace(w, g);
    return g;
  }

  /// (integral of f o F_w d mu_1, integral of f o F_w d mu_2) at level |w|.
  std::pair<T, T> integrals(const Word& w) const {
    auto g = moments(w);
    auto [e1, e2] = geo_->eta(static_cast<int>(w.size()));
    return {(g[0] * e1 - g[1] * e2) / (e1 - e2), (g[1] * e1 - g[0] * e2) / (e1 - e2)};
  }

  /// (d_n u(q1), d_n u(q2)).
  std::pair<T, T> normal_derivatives() const { return corner_derivatives(Word{}, f_.q1, f_.q2); }

  /// Derivatives at F_w q1, F_w q2 of u restricted to F_w Omega, given u there.
  std::pair<T, T> corner_derivatives(const Word& w, const T& b1, const T& b2) const {
    int n = static_cast<int>(w.size());
    auto [e1, e2] = geo_->eta(n);
    auto [i1, i2] = integrals(w);
    T scale = power(ratio<T>(5, 3), n);
    return {scale * (e1 * b1 - e2 * b2 - (e1 - e2) * i1), scale * (e1 * b2 - e2 * b1 - (e1 - e2) * i2)};
  }

  /// V_1 values of u o F_w given u(F_w q1) = b1, u(F_w q2) = b2.
  std::array<T, 3> step(const Word& w, const T& b1, const T& b2) const {
    int n = static_cast<int>(w.size());
    auto [e1, e2] = geo_->eta(n + 1);
    std::map<std::pair<int, int>, T> in;
    for (int i : geo_->alphabet(n)) {
      auto [a, b] = integrals(w.then(i));
      in[{i, 1}] = a;
      in[{i, 2}] = b;
    }
    return extend_step_lower(geo_->digit(n + 1), e1, e2, b1, b2, in);
  }

  /// (u(F_w q1), u(F_w q2)).
  std::pair<T, T> corner_values(const Word& w) const {
    geo_->check_word(w);
    T b1 = f_.q1, b2 = f_.q2;
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto s = step(w.prefix(k), b1, b2);
      if (w[k] == 0) {
        b1 = s[0];
        b2 = s[1];
      } else if (w[k] == 1) {
        b2 = s[2];
      } else {
        b1 = s[2];
      }
    }
    return {b1, b2};
  }

  /// u at a vertex of the closure; throws AddressError above the cut.
  T value(LatticePoint p) const {
    const Gasket& g = geo_->gasket();
    Word w;
    T b1 = f_.q1, b2 = f_.q2;
    while (true) {
      p = g.normalize(p);
      int n = static_cast<int>(w.size());
      if (p == Gasket::corner(1)) return b1;
      if (p == Gasket::corner(2)) return b2;
      if (p == Gasket::corner(0)) {
        if (!geo_->lambda().shift(n).is_zero()) throw AddressError("vertex lies above the cut");
        Word c = w;
        while (static_cast<int>(c.size()) < f_.depth) c = c.then(0);
        return f_.cylinder_value(c);
      }
      auto s = step(w, b1, b2);
      if (geo_->digit(n + 1) == 0) {
        if (auto q = g.to_local(1, p)) return harmonic_value_in_cell(g, CellBoundaryValues<T>{s[0], b1, s[2]}, *q);
        if (auto q = g.to_local(2, p)) return harmonic_value_in_cell(g, CellBoundaryValues<T>{s[1], s[2], b2}, *q);
        auto q = g.to_local(0, p);
        if (!q) throw AddressError("vertex lies above the cut");
        p = *q;
        w = w.then(0);
        b1 = s[0];
        b2 = s[1];
        continue;
      }
      if (auto q = g.to_local(1, p)) {
        p = *q;
        w = w.then(1);
        b2 = s[2];
        continue;
      }
      if (auto q = g.to_local(2, p)) {
        p = *q;
        w = w.then(2);
        b1 = s[2];
        continue;
      }
      throw AddressError("vertex lies above the cut");
    }
  }

 private:
  std::shared_ptr<const LowerGeometry<T>> geo_;
  LowerBoundaryData<T> f_;
  mutable std::mutex mutex_;
  mutable std::map<Word, std::array<T, 2>> moments_;
};

/// Predictions for a run of m zero digits from eta(S^m lambda).
struct ZeroRunForm {
  double eta1 = 0, eta2 = 0;
  /// M_{0^m} = (a b; b a).
  double a = 0, b = 0;
};

inline ZeroRunForm zero_run_form(const LowerGeometry<double>& geo, int m) {
  for (int k = 1; k <= m; ++k) {
    if (geo.digit(k) != 0) throw DataError("zero-run closed form needs the first m digits to be 0");
  }
  auto [x, y] = geo.eta(m);
  double p = std::pow(15.0, m);
  double t = x + y - 3;
  double sum = 3 + 14 * t / (3 * (p - 1) * t + 14 * p);
  double q = std::pow(0.6, m);
  double diff = (x - y) / ((1 - q) * (x - y) + q);
  double amb = 14 * std::pow(5.0, m) * (x + y) / ((9 * p + 5) * (x + y) + 15 * (p - 1));
  return {(sum + diff) / 2, (sum - diff) / 2, (1 + amb) / 2, (1 - amb) / 2};
}

struct OneRunForm {
  double eta1 = 0, eta2 = 0;
  /// Root in (0, 1) of eta1/eta2 (S^m lambda) = (x + 1/x)/2.
  double x = 0;
};

inline OneRunForm one_run_form(const LowerGeometry<double>& geo, int m) {
  for (int k = 1; k <= m; ++k) {
    if (geo.digit(k) != 1) throw DataError("one-run closed form needs the first m digits to be 1");
  }
  auto [e1, e2] = geo.eta(m);
  if (!(e2 > 0)) throw DataError("one-run closed form needs eta2(S^m lambda) > 0");
  double r = e1 / e2;
  double x = r - std::sqrt(r * r - 1);
  double big = std::pow(x, std::pow(2.0, m));
  double c = std::pow(5.0 / 3.0, m);
  double eta1 = c * (x - 1 / x) / (x + 1 / x) * (big + 1 / big) / (big - 1 / big) * e1;
  double eta2 = c * (x - 1 / x) / (big - 1 / big) * e2;
  return {eta1, eta2, x};
}

/// M_w for w in W~_m along a run of m one digits, from the closed form.
inline Mat2<double> one_run_matrix(const LowerGeometry<double>& geo, const Word& w) {
  int m = static_cast<int>(w.size());
  double x = one_run_form(geo, m).x;
  long j = 0;
  for (int k = 0; k < m; ++k) j = 2 * j + (w[static_cast<std::size_t>(k)] - 1);
  double n = std::pow(2.0, m);
  double jd = static_cast<double>(j);
  Mat2<double> left{std::pow(x, jd), -std::pow(x, n - jd), -std::pow(x, jd + 1), std::pow(x, n - jd - 1)};
  double xn = std::pow(x, n);
  double det = 1 - xn * xn;
  Mat2<double> inv{1 / det, xn / det, xn / det, 1 / det};
  return left * inv;
}

/// Boundary values for graph solves on the lower domain.
template <Scalar T>
std::function<T(LatticePoint)> lower_boundary_function(const LowerSolution<T>& s) {
  return [&s](LatticePoint p) { return s.value(p); };
}

}  // namespace gasket
