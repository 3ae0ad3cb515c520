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

/// Level-1 weight 15/7 of SG_3.
inline constexpr double upper_scale = 15.0 / 7.0;

/// alpha(1), the largest value of h_0(p_4).
inline double alpha_one() { return (75.0 - std::sqrt(2353.0)) / 60.0; }

/// One step of the alpha recursion: alpha(lambda) = T(alpha(R lambda)).
inline double t_map(int iota, long gap, double x) {
  double s = std::pow(upper_scale, static_cast<double>(gap)) * (1 - x);
  if (iota == 1) return 1 / (1 + 2 * s);
  return (3 + 6 * s + 2 * s * s) / (3 + 15 * s + 6 * s * s);
}

struct EtaAlpha {
  double alpha = 0;
  double eta = 0;
  /// Number of T maps composed.
  int depth = 0;
  /// Certified bounds on |alpha - true alpha| and |eta - true eta|.
  double alpha_bound = 0;
  double eta_bound = 0;
};

struct EtaOptions {
  double tolerance = 1e-12;
  int max_depth = 400;
};

/// T^lambda o ... o T^{lambda_{n-1}}(0), bracketed by the same composition at 1/2 > alpha(1).
inline EtaAlpha eta_alpha(const TriadicLambda& lambda, int n) {
  if (n < 1) throw DataError("eta_alpha needs depth n >= 1");
  auto terms = lambda.terms(n + 1);
  auto compose = [&](double x) {
    for (int k = n - 1; k >= 0; --k) {
      auto idx = static_cast<std::size_t>(k);
      x = t_map(terms[idx].second, terms[idx + 1].first - terms[idx].first, x);
    }
    return x;
  };
  double lo = compose(0.0);
  double hi = compose(0.5);
  double scale = 2 * std::pow(upper_scale, static_cast<double>(terms[0].first));
  EtaAlpha e;
  e.alpha = lo;
  e.eta = scale * (1 - lo);
  e.depth = n;
  e.alpha_bound = hi - lo;
  e.eta_bound = scale * (hi - lo);
  return e;
}

/// Smallest depth whose certified bracket is below the tolerance.
inline EtaAlpha eta_alpha(const TriadicLambda& lambda, const EtaOptions& opt = {}) {
  for (int n = 1; n <= opt.max_depth; ++n) {
    auto e = eta_alpha(lambda, n);
    if (e.alpha_bound <= opt.tolerance) return e;
  }
  throw AccuracyError("alpha recursion did not reach the tolerance within " + std::to_string(opt.max_depth) + " steps");
}

/// Values u(p_i), indexed by digit, from the matching equations at the p_i.
/// e = eta(R lambda), a = f(q0), integral[i] = integral of f o F_i against mu^{R lambda}.
template <Scalar T>
std::array<T, 6> solve_upper_step(int iota, const T& e, const T& a, const std::array<T, 6>& integral) {
  std::array<T, 6> u{};
  u.fill(ratio<T>(0));
  if (iota == 1) {
    // Unknowns (u4, u5).
    std::vector<std::vector<T>> m = {{e + 2, ratio<T>(-1)}, {ratio<T>(-1), e + 2}};
    auto x = solve_dense(m, std::vector<T>{a + e * integral[4], a + e * integral[5]});
    u[4] = x[0];
    u[5] = x[1];
    return u;
  }
  // Unknowns (u1, u2, u3, u4, u5).
  const T z = ratio<T>(0), one = ratio<T>(1);
  std::vector<std::vector<T>> m = {
      {-one, z, -one, -one, ratio<T>(4)},
      {z, -one, -one, ratio<T>(4), -one},
      {e + 2, z, -one, z, -one},
      {z, e + 2, -one, -one, z},
      {-one, -one, e + 4, -one, -one},
  };
  std::vector<T> b = {a, a, e * integral[1], e * integral[2], e * integral[3]};
  auto x = solve_dense(m, b);
  for (int i = 0; i < 5; ++i) u[static_cast<std::size_t>(i + 1)] = x[static_cast<std::size_t>(i)];
  return u;
}

/// Closed-form values u(p_i); u(p_2), u(p_5) by reflection.
template <Scalar T>
std::array<T, 6> extend_step_upper(int iota, const T& e, const T& a, const std::array<T, 6>& integral) {
  std::array<T, 6> u{};
  u.fill(ratio<T>(0));
  const T e2 = e * e, e3 = e2 * e;
  if (iota == 1) {
    T den = 3 + 4 * e + e2;
    auto side = [&](const T& mine, const T& other) {
      return a / (1 + e) + (2 * e + e2) / den * mine + e / den * other;
    };
    u[4] = side(integral[4], integral[5]);
    u[5] = side(integral[5], integral[4]);
    return u;
  }
  const T den = 54 + 165 * e + 102 * e2 + 15 * e3;
  auto bottom = [&](const T& mine, const T& other) {
    return ((54 + 39 * e + 5 * e2) * a + (60 * e + 76 * e2 + 15 * e3) * mine + (30 * e + e2) * other +
            (36 * e + 20 * e2) * integral[3]) /
           den;
  };
  auto middle = [&](const T& near, const T& far) {
    return ((54 + 84 * e + 39 * e2 + 5 * e3) * a + (24 * e + 12 * e2 + e3) * far + (30 * e + 27 * e2 + 4 * e3) * near +
            (27 * e + 24 * e2 + 5 * e3) * integral[3]) /
           den;
  };
  const T d3 = 6 + 15 * e + 3 * e2;
  u[1] = bottom(integral[1], integral[2]);
  u[2] = bottom(integral[2], integral[1]);
  u[3] = ((6 + 2 * e) * a + (5 * e + 3 * e2) * integral[3] + 4 * e * (integral[1] + integral[2])) / d3;
  // p_4 borders F_4, which meets F_2; p_5 is its mirror image.
  u[4] = middle(integral[2], integral[1]);
  u[5] = middle(integral[1], integral[2]);
  return u;
}

/// Digit alphabets S_1 = {4,5}, S_2 = {1,2,3}.
inline const std::vector<int>& upper_alphabet(int iota) {
  static const std::vector<int> s1 = {4, 5};
  static const std::vector<int> s2 = {1, 2, 3};
  return iota == 1 ? s1 : s2;
}

/// Per-suffix data of an upper domain: the lambda_n, m_n, iota_n and certified eta(lambda_n).
class UpperGeometry {
 public:
  explicit UpperGeometry(TriadicLambda lambda, EtaOptions opt = {}) : lambda_(std::move(lambda)), opt_(opt), g_(3) {
    suffixes_.push_back(lambda_);
    m_.push_back(0);
  }

  const TriadicLambda& lambda() const { return lambda_; }
  const Gasket& gasket() const { return g_; }
  const EtaOptions& options() const { return opt_; }

  /// lambda_n = R^n lambda.
  TriadicLambda suffix(int n) const {
    extend(n);
    std::shared_lock lock(mutex_);
    return suffixes_[static_cast<std::size_t>(n)];
  }
  /// m_n with m_0 = 0.
  long m(int n) const {
    extend(n);
    std::shared_lock lock(mutex_);
    return m_[static_cast<std::size_t>(n)];
  }
  /// iota_n for n >= 1.
  int iota(int n) const { return suffix(n - 1).iota1(); }
  /// m_{n+1} - m_n.
  long gap(int n) const { return m(n + 1) - m(n); }
  /// Digits of W^lambda between levels n and n+1.
  const std::vector<int>& alphabet(int n) const { return upper_alphabet(iota(n + 1)); }

  EtaAlpha eta_alpha(int n) const {
    auto s = suffix(n);
    auto key = s.key();
    {
      std::shared_lock lock(mutex_);
      auto it = eta_.find(key);
      if (it != eta_.end()) return it->second;
    }
    auto e = gasket::eta_alpha(s, opt_);
    std::unique_lock lock(mutex_);
    eta_.emplace(key, e);
    return e;
  }
  double eta(int n) const { return eta_alpha(n).eta; }
  double alpha(int n) const { return eta_alpha(n).alpha; }

  /// mu^{lambda_n}_i, indexed by digit.
  std::array<double, 6> weights(int n) const {
    std::array<double, 6> w{};
    if (iota(n + 1) == 1) {
      w[4] = w[5] = 0.5;
    } else {
      double e = eta(n + 1);
      w[1] = w[2] = (6 + e) / (18 + 4 * e);
      w[3] = (3 + e) / (9 + 2 * e);
    }
    return w;
  }

  double cylinder_mass(const Word& w) const {
    check_word(w);
    double mass = 1;
    for (std::size_t k = 0; k < w.size(); ++k) mass *= weights(static_cast<int>(k))[static_cast<std::size_t>(w[k])];
    return mass;
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
                           " is not in the alphabet of this lambda");
      }
    }
  }

  /// The SG_3 word of F^lambda_w.
  Word map_word(const Word& w) const {
    check_word(w);
    std::vector<std::uint8_t> d;
    for (std::size_t k = 0; k < w.size(); ++k) {
      for (long t = 1; t < gap(static_cast<int>(k)); ++t) d.push_back(0);
      d.push_back(static_cast<std::uint8_t>(w[k]));
    }
    return Word(std::move(d));
  }

 private:
  void extend(int n) const {
    if (n < 0) throw DataError("suffix index must be nonnegative");
    std::unique_lock lock(mutex_);
    while (static_cast<int>(suffixes_.size()) <= n) {
      const auto& last = suffixes_.back();
      m_.push_back(m_.back() + last.m1());
      suffixes_.push_back(last.shift());
    }
  }

  TriadicLambda lambda_;
  EtaOptions opt_;
  Gasket g_;
  mutable std::shared_mutex mutex_;
  mutable std::vector<TriadicLambda> suffixes_;
  mutable std::vector<long> m_;
  mutable std::map<std::pair<const DigitSource*, long>, EtaAlpha> eta_;
};

/// Value a at q0 and data constant on each depth-d cylinder X_w.
struct UpperBoundaryData {
  double q0 = 0;
  int depth = 0;
  std::map<Word, double> values;

  static UpperBoundaryData constant(double a, double c) { return {a, 0, {{Word{}, c}}}; }
  /// h_0: 1 at q0 and 0 on X.
  static UpperBoundaryData h0() { return constant(1, 0); }

  static UpperBoundaryData cylinders(const UpperGeometry& geo, double a, int d,
                                     const std::function<double(const Word&)>& value) {
    UpperBoundaryData f{a, d, {}};
    for (const auto& w : geo.words(d)) f.values.emplace(w, value(w));
    return f;
  }

  double cylinder_value(const Word& w) const {
    auto it = values.find(w.prefix(static_cast<std::size_t>(depth)));
    if (it == values.end()) throw DataError("no boundary value for cylinder " + w.str());
    return it->second;
  }

  void validate(const UpperGeometry& geo) const {
    if (depth < 0) throw DataError("cylinder depth must be nonnegative");
    auto ws = geo.words(depth);
    if (ws.size() != values.size()) {
      throw DataError("boundary data needs one value per depth-" + std::to_string(depth) + " cylinder");
    }
    for (const auto& w : ws) {
      if (!values.count(w)) throw DataError("missing boundary value for cylinder " + w.str());
    }
  }

  double sup() const {
    double s = std::abs(q0);
    for (const auto& [w, v] : values) s = std::max(s, std::abs(v));
    return s;
  }
};

/// Harmonic function on the upper domain with cylinder-constant data.
class UpperSolution {
 public:
  UpperSolution(std::shared_ptr<const UpperGeometry> geo, UpperBoundaryData f) : geo_(std::move(geo)), f_(std::move(f)) {
    f_.validate(*geo_);
  }

  const UpperGeometry& geometry() const { return *geo_; }
  const UpperBoundaryData& data() const { return f_; }

  /// Integral of f o F^lambda_w against mu^{lambda_|w|}.
  double integral(const Word& w) const {
    if (static_cast<int>(w.size()) >= f_.depth) return f_.cylinder_value(w);
    {
      std::lock_guard lock(mutex_);
      auto it = integrals_.find(w);
      if (it != integrals_.end()) return it->second;
    }
    int n = static_cast<int>(w.size());
    auto mu = geo_->weights(n);
    double acc = 0;
    for (int i : geo_->alphabet(n)) acc += mu[static_cast<std::size_t>(i)] * integral(w.then(i));
    std::lock_guard lock(mutex_);
    integrals_.emplace(w, acc);
    return acc;
  }

  /// eta(lambda)(f(q0) - integral of f).
  double normal_derivative_q0() const { return geo_->eta(0) * (f_.q0 - integral(Word{})); }

  /// u(F^lambda_w q0).
  double top_value(const Word& w) const {
    geo_->check_word(w);
    if (w.empty()) return f_.q0;
    Word parent = w.prefix(w.size() - 1);
    return step(parent, top_value(parent))[static_cast<std::size_t>(w[w.size() - 1])];
  }

  /// u(F^lambda_w p_i^{lambda_n}) for i in W_1^{lambda_n}, given u(F^lambda_w q0) = a.
  std::array<double, 6> step(const Word& w, double a) const {
    int n = static_cast<int>(w.size());
    std::array<double, 6> in{};
    for (int i : geo_->alphabet(n)) in[static_cast<std::size_t>(i)] = integral(w.then(i));
    return extend_step_upper<double>(geo_->iota(n + 1), geo_->eta(n + 1), a, in);
  }

  /// Derivative at F^lambda_w q0 into F^lambda_w Omega_{lambda_n}, read off the cell at its apex.
  double apex_derivative(const Word& w) const {
    double a = top_value(w);
    auto u = step(w, a);
    return std::pow(upper_scale, static_cast<double>(geo_->m(static_cast<int>(w.size()) + 1))) * (2 * a - u[4] - u[5]);
  }

  /// u at a vertex of the closure; throws AddressError below the cut and
  /// DataError at a jump of the boundary data.
  double value(LatticePoint p) const {
    auto c = candidates(p);
    for (double x : c) {
      if (std::abs(x - c.front()) > 1e-12 * std::max(1.0, f_.sup())) {
        throw DataError("boundary data jumps at this vertex");
      }
    }
    return c.front();
  }

  /// One-sided values at p: more than one only where p joins two cylinders of X.
  std::vector<double> candidates(LatticePoint p) const {
    std::vector<double> out;
    collect(Word{}, f_.q0, p, out);
    return out;
  }

  /// Energy of u on cells above level n of the cut decomposition.
  double partial_energy(int n) const { return pair_partial(*this, n); }

  /// E_{Omega_lambda}(u): cells above the data depth plus the h_0 tails below it.
  double energy() const { return energy_form(*this, *this); }

  /// E(u, v) for two solutions on the same domain.
  friend double energy_form(const UpperSolution& u, const UpperSolution& v) {
    if (u.geo_ != v.geo_) throw DataError("energy pairing needs solutions on one domain");
    int d = std::max(u.f_.depth, v.f_.depth);
    double sum = u.pair_partial(v, d);
    const auto& geo = *u.geo_;
    double scale = std::pow(upper_scale, static_cast<double>(geo.m(d))) * geo.eta(d);
    for (const auto& w : geo.words(d)) {
      sum += scale * (u.top_value(w) - u.f_.cylinder_value(w)) * (v.top_value(w) - v.f_.cylinder_value(w));
    }
    return sum;
  }

 private:
  /// Full cells of the step at w with their corner values (q0, q1, q2).
  std::vector<std::pair<int, CellBoundaryValues<double>>> full_cells(int iota, double a,
                                                                     const std::array<double, 6>& u) const {
    std::vector<std::pair<int, CellBoundaryValues<double>>> cells = {{0, {a, u[5], u[4]}}};
    if (iota == 2) {
      cells.push_back({4, {u[4], u[3], u[2]}});
      cells.push_back({5, {u[5], u[1], u[3]}});
    }
    return cells;
  }

  double pair_partial(const UpperSolution& v, int n) const {
    const auto& geo = *geo_;
    double sum = 0;
    std::function<void(const Word&, double, double)> walk = [&](const Word& w, double a, double b) {
      int k = static_cast<int>(w.size());
      if (k >= n) return;
      auto su = step(w, a);
      auto sv = v.step(w, b);
      int iota = geo.iota(k + 1);
      auto cu = full_cells(iota, a, su);
      auto cv = v.full_cells(iota, b, sv);
      double scale = std::pow(upper_scale, static_cast<double>(geo.m(k + 1)));
      for (std::size_t c = 0; c < cu.size(); ++c) {
        const auto& x = cu[c].second;
        const auto& y = cv[c].second;
        sum += scale * ((x[0] - x[1]) * (y[0] - y[1]) + (x[1] - x[2]) * (y[1] - y[2]) + (x[0] - x[2]) * (y[0] - y[2]));
      }
      for (int i : geo.alphabet(k)) walk(w.then(i), su[static_cast<std::size_t>(i)], sv[static_cast<std::size_t>(i)]);
    };
    walk(Word{}, f_.q0, v.f_.q0);
    return sum;
  }

  static bool is_all_two(const TriadicLambda& s) {
    if (auto v = s.value()) return *v == 1;
    for (long k = 1; k <= 64; ++k) {
      if (s.digit(k) != 2) return false;
    }
    return true;
  }

  void collect(const Word& w, double a, LatticePoint p, std::vector<double>& out) const {
    const Gasket& g = geo_->gasket();
    const int n = static_cast<int>(w.size());
    p = g.normalize(p);
    if (p == Gasket::corner(0)) {
      out.push_back(a);
      return;
    }
    if (p.level == 0) {
      // A bottom corner lies in the closure only when the cut is the bottom edge.
      if (!is_all_two(geo_->suffix(n))) throw AddressError("vertex lies below the cut");
      Word c = w;
      while (static_cast<int>(c.size()) < f_.depth) c = c.then(p == Gasket::corner(1) ? 1 : 2);
      out.push_back(f_.cylinder_value(c));
      return;
    }
    for (long t = 1; t < geo_->gap(n); ++t) {
      auto q = g.to_local(0, p);
      if (!q) throw AddressError("vertex lies below the cut");
      p = g.normalize(*q);
    }
    if (p == Gasket::corner(0)) {
      out.push_back(a);
      return;
    }
    auto u = step(w, a);
    for (const auto& [cell, corners] : full_cells(geo_->iota(n + 1), a, u)) {
      if (auto q = g.to_local(cell, p)) {
        out.push_back(harmonic_value_in_cell(g, corners, *q));
        return;
      }
    }
    bool found = false;
    for (int i : geo_->alphabet(n)) {
      if (auto q = g.to_local(i, p)) {
        found = true;
        collect(w.then(i), u[static_cast<std::size_t>(i)], *q, out);
      }
    }
    if (!found) throw AddressError("vertex lies below the cut");
  }

  std::shared_ptr<const UpperGeometry> geo_;
  UpperBoundaryData f_;
  mutable std::mutex mutex_;
  mutable std::map<Word, double> integrals_;
};

/// psi^{(j), lambda_n} on the children of a level-n cylinder, indexed by digit.
inline std::array<double, 6> haar_values(const UpperGeometry& geo, int n, int j) {
  std::array<double, 6> v{};
  int iota = geo.iota(n + 1);
  if (j < 1 || j > iota) throw DataError("Haar index j must satisfy 1 <= j <= iota");
  if (iota == 1) {
    v[5] = 1;
    v[4] = -1;
  } else if (j == 1) {
    v[1] = 1;
    v[2] = -1;
  } else {
    auto mu = geo.weights(n);
    v[1] = v[2] = mu[3];
    v[3] = -2 * mu[1];
  }
  return v;
}

/// Boundary data of h_w^{(j)}: 0 at q0 and psi_w^{(j)} on X.
inline UpperBoundaryData haar_function(const UpperGeometry& geo, const Word& w, int j) {
  geo.check_word(w);
  int n = static_cast<int>(w.size());
  auto psi = haar_values(geo, n, j);
  return UpperBoundaryData::cylinders(geo, 0, n + 1, [&](const Word& c) {
    return c.starts_with(w) ? psi[static_cast<std::size_t>(c[static_cast<std::size_t>(n)])] : 0.0;
  });
}

struct HaarCoefficient {
  Word w;
  int j = 1;
  double c = 0;
};

struct HaarExpansion {
  double b = 0;
  std::vector<HaarCoefficient> coefficients;
};

/// b and c_w^{(j)} for |w| < depth.
inline HaarExpansion haar_expand(const UpperSolution& s, int depth) {
  const auto& geo = s.geometry();
  HaarExpansion out;
  out.b = s.integral(Word{});
  for (int n = 0; n < depth; ++n) {
    auto mu = geo.weights(n);
    for (const auto& w : geo.words(n)) {
      for (int j = 1; j <= geo.iota(n + 1); ++j) {
        auto psi = haar_values(geo, n, j);
        double num = 0, den = 0;
        for (int i : geo.alphabet(n)) {
          auto k = static_cast<std::size_t>(i);
          num += mu[k] * psi[k] * s.integral(w.then(i));
          den += mu[k] * psi[k] * psi[k];
        }
        out.coefficients.push_back({w, j, num / den});
      }
    }
  }
  return out;
}

/// b + sum c psi as depth-`depth` cylinder data with the given value at q0.
inline UpperBoundaryData haar_reconstruct(const UpperGeometry& geo, const HaarExpansion& h, double a, int depth) {
  return UpperBoundaryData::cylinders(geo, a, depth, [&](const Word& x) {
    double v = h.b;
    for (const auto& c : h.coefficients) {
      int n = static_cast<int>(c.w.size());
      if (n < depth && x.starts_with(c.w)) {
        v += c.c * haar_values(geo, n, c.j)[static_cast<std::size_t>(x[static_cast<std::size_t>(n)])];
      }
    }
    return v;
  });
}

struct UpperEnergyEstimate {
  /// (15/7)^{m_1}(a-b)^2 + sum (15/7)^{m_{n+1}} |c_w^{(j)}|^2.
  double haar_sum = 0;
  /// Energy from the cell decomposition.
  double energy = 0;
  /// (a-b)^2 eta + sum |c|^2 E(h_w^{(j)}).
  double orthogonal_energy = 0;
  double ratio() const { return haar_sum > 0 ? energy / haar_sum : 0; }
};

inline UpperEnergyEstimate energy_estimate_upper(const std::shared_ptr<const UpperGeometry>& geo, const UpperSolution& s,
                                                 int depth) {
  UpperEnergyEstimate out;
  auto h = haar_expand(s, depth);
  double ab = s.data().q0 - h.b;
  out.haar_sum = std::pow(upper_scale, static_cast<double>(geo->m(1))) * ab * ab;
  out.orthogonal_energy = ab * ab * geo->eta(0);
  for (const auto& c : h.coefficients) {
    int n = static_cast<int>(c.w.size());
    out.haar_sum += std::pow(upper_scale, static_cast<double>(geo->m(n + 1))) * c.c * c.c;
    if (c.c != 0) out.orthogonal_energy += c.c * c.c * UpperSolution(geo, haar_function(*geo, c.w, c.j)).energy();
  }
  out.energy = s.energy();
  return out;
}

/// Boundary values for graph solves; jumps of X take the mean of the one-sided values.
inline std::function<double(LatticePoint)> upper_boundary_function(const UpperSolution& s) {
  return [&s](LatticePoint p) {
    auto c = s.candidates(p);
    double sum = 0;
    for (double x : c) sum += x;
    return sum / static_cast<double>(c.size());
  };
}

}  // namespace gasket
