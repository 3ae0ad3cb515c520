#include <chrono>
#include <cmath>
#include <deque>
#include <iostream>
#include <random>
#include <sstream>

#include "gasket/compare.hpp"
#include "gasket/half_domain.hpp"
#include "gasket/lower_domain.hpp"
#include "gasket/upper_domain.hpp"

using namespace gasket;
using R = Rational;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& id, const std::string& name, double limit_s, const std::function<Outcome()>& run) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (dt > limit_s) {
    o.ok = false;
    o.detail += " (over the " + format_number(limit_s) + " s budget)";
  }
  if (!o.ok) ++failures;
  std::ostringstream line;
  line << (o.ok ? "PASS " : "FAIL ") << id << ' ' << name << ": " << o.detail << " [" << std::fixed;
  line.precision(3);
  line << dt << " s]";
  std::cout << line.str() << std::endl;
}

std::string sci(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

TriadicLambda program() { return TriadicLambda::parse("digits:(1,1)(2,1)(3,2)periodic:(2,1)(1,2)"); }

/// Random binary lambda with 1 - lambda > 1/8 and an eventually periodic tail.
BinaryLambda random_binary(std::mt19937& rng) {
  std::uniform_int_distribution<int> bit(0, 1), len(1, 6);
  std::vector<int> prefix(8), period(static_cast<std::size_t>(len(rng)));
  do {
    for (auto& b : prefix) b = bit(rng);
  } while (prefix[0] && prefix[1] && prefix[2]);
  do {
    for (auto& b : period) b = bit(rng);
  } while (std::all_of(period.begin(), period.end(), [](int b) { return b == 1; }));
  return BinaryLambda::from_bits(prefix, period);
}

}  // namespace

int main() {
  // 1. Exact constants.
  report("1.1", "extend_step_sg3 on the q1 indicator", 1, [] {
    HalfSolution<R> s(std::make_shared<const HalfGeometry>(3), HalfBoundaryData<R>(R(1), R(0)));
    auto v = extend_step_sg3(s);
    bool ok = v == std::array<R, 3>{R(4, 15), R(1, 3), R(1, 15)};
    return Outcome{ok, format_number(v[0]) + ", " + format_number(v[1]) + ", " + format_number(v[2])};
  });
  report("1.2", "normal_derivative_q1 on the q1 indicator", 1, [] {
    HalfSolution<R> s(std::make_shared<const HalfGeometry>(3), HalfBoundaryData<R>(R(1), R(0)));
    auto d = s.normal_derivative_q1();
    return Outcome{d == 3, format_number(d)};
  });
  report("1.3", "SG_3 cell extension coefficients", 1, [] {
    Gasket g(3);
    // Level-1 grid point -> numerators over 15 of (h(q0), h(q1), h(q2)).
    const std::vector<std::pair<std::pair<int, int>, std::array<int, 3>>> figure = {
        {{0, 2}, {8, 4, 3}}, {{1, 2}, {8, 3, 4}}, {{0, 1}, {4, 8, 3}}, {{2, 1}, {4, 3, 8}},
        {{1, 0}, {3, 8, 4}}, {{2, 0}, {3, 4, 8}}, {{1, 1}, {5, 5, 5}}};
    int matched = 0;
    bool ok = true;
    for (int c = 0; c < 3; ++c) {
      CellBoundaryValues<R> e{R(0), R(0), R(0)};
      e[static_cast<std::size_t>(c)] = 1;
      auto grid = harmonic_extend_cell(g, e);
      for (const auto& [uv, num] : figure) {
        R got = grid[static_cast<std::size_t>(g.grid_index(uv.first, uv.second))];
        if (got == R(num[static_cast<std::size_t>(c)], 15)) {
          ++matched;
        } else {
          ok = false;
        }
      }
    }
    return Outcome{ok, std::to_string(matched) + "/21 coefficients"};
  });
  report("1.4", "half-domain atom and residual masses", 1, [] {
    HalfGeometry g(3);
    bool ok = g.atom_mass(Word{}, 1) == R(2, 7);
    for (int d = 0; d <= 8; ++d) {
      R visited = 0;
      std::function<void(const Word&)> walk = [&](const Word& w) {
        if (static_cast<int>(w.size()) == d) return;
        visited += g.atom_mass(w, 1);
        for (int i : g.alphabet()) walk(w.then(i));
      };
      walk(Word{});
      ok = ok && 1 - visited == power(R(5, 7), d) && g.residual_mass(d) == power(R(5, 7), d);
    }
    return Outcome{ok, "mass(p_0) = " + format_number(g.atom_mass(Word{}, 1)) + ", residual (5/7)^d for d <= 8"};
  });

  // 2. Fixed points and limits.
  report("2.1", "upper alpha(1) radical", 1, [] {
    double target = (75 - std::sqrt(2353.0)) / 60;
    auto l = TriadicLambda::from_rational(R(1));
    for (int n = 1; n <= 60; ++n) {
      auto e = eta_alpha(l, n);
      if (std::abs(e.alpha - target) <= 1e-9) {
        return Outcome{true, "alpha = " + format_number(e.alpha) + " after " + std::to_string(n) + " iterations"};
      }
    }
    return Outcome{false, "no 1e-9 agreement within 60 iterations"};
  });
  report("2.2", "lower eta(0) and the T_0 fixed point", 1, [] {
    auto e = eta_pair(BinaryLambda::parse("0"));
    auto [x, y] = t0_map(2.0, 1.0);
    double a = std::max(std::abs(e.eta1 - 2), std::abs(e.eta2 - 1));
    double b = std::max(std::abs(x - 2), std::abs(y - 1));
    return Outcome{a <= 1e-12 && b <= 1e-14, "eta error " + sci(a) + ", T_0 error " + sci(b)};
  });
  report("2.3", "lower eta(1/2) iterative and one-run closed form", 1, [] {
    auto l = BinaryLambda::parse("1/2");
    auto e = eta_pair(l);
    auto c = one_run_form(LowerGeometry<double>(l), 1);
    double a = std::max(std::abs(e.eta1 - 35.0 / 12), std::abs(e.eta2 - 5.0 / 12));
    double b = std::max(std::abs(c.eta1 - 35.0 / 12), std::abs(c.eta2 - 5.0 / 12));
    return Outcome{a <= 1e-12 && b <= 1e-12, "iterative error " + sci(a) + ", closed form error " + sci(b)};
  });
  report("2.4", "lower eta seed independence", 1, [] {
    std::mt19937 rng(2024);
    double worst = 0;
    for (int t = 0; t < 20; ++t) {
      auto l = random_binary(rng);
      const int m = 80;
      auto a = eta_pair(l, m, 2, 1);
      auto b = eta_pair(l, m, 3, 1);
      worst = std::max({worst, std::abs(a.eta1 - b.eta1), std::abs(a.eta2 - b.eta2)});
    }
    return Outcome{worst <= 1e-10, "20 lambdas, depth 80, max seed gap " + sci(worst)};
  });

  // 3. Oracle equivalence.
  report("3.1", "half SG_3 evaluation vs graph solves, m = 4..8", 60, [] {
    auto geo = std::make_shared<const HalfGeometry>(3);
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    auto f = cylinder_data<double>(*geo, 2, u(rng), [&](const Word&) { return u(rng); });
    HalfSolution<double> s(geo, f);
    CompareOptions opt;
    opt.probe_level = 3;
    opt.graph = {true, 3};
    auto r = compare_levels<double>(DomainGeometry(HalfDomain{3}), {4, 5, 6, 7, 8}, half_boundary_function(s),
                                    [&](LatticePoint p) { return s.value(p); }, opt);
    std::string d;
    for (const auto& l : r) d += (d.empty() ? "" : " ") + sci(l.max_abs);
    return Outcome{strictly_decreasing(r) && r.back().max_abs <= 1e-3, "max errors " + d};
  });
  report("3.2", "lower dyadic evaluation equals graph solves exactly", 60, [] {
    bool ok = true;
    std::size_t probes = 0;
    for (const char* text : {"1/2", "1/4", "3/8"}) {
      auto l = BinaryLambda::parse(text);
      auto geo = std::make_shared<const LowerGeometry<R>>(l);
      int d = static_cast<int>(*l.dyadic_depth());
      auto f = LowerBoundaryData<R>::cylinders(*geo, R(1), R(-2), d, [](const Word& w) {
        R v = 0;
        for (int c : w.digits()) v = 3 * v + c + 1;
        return v / 7;
      });
      LowerSolution<R> s(geo, f);
      CompareOptions opt;
      opt.graph = {false, 0};
      std::vector<int> levels;
      for (int m = d; m <= d + 3; ++m) levels.push_back(m);
      auto r = compare_levels<R>(DomainGeometry(LowerDomain{l}), levels, lower_boundary_function(s),
                                 [&](LatticePoint p) { return s.value(p); }, opt);
      for (const auto& x : r) {
        ok = ok && x.exact;
        probes += x.points;
      }
    }
    return Outcome{ok, std::to_string(probes) + " vertices compared in rational mode"};
  });
  report("3.3", "upper lambda = 1 first-level values vs graph solves", 60, [] {
    auto geo = std::make_shared<const UpperGeometry>(TriadicLambda::from_rational(R(1)));
    auto f = UpperBoundaryData::cylinders(*geo, 0.3, 1, [](const Word& w) { return w[0] == 1 ? 1.0 : (w[0] == 2 ? -0.5 : 0.25); });
    UpperSolution s(geo, f);
    auto first = s.step(Word{}, 0.3);
    const Gasket& g = geo->gasket();
    auto eval = [&](LatticePoint p) {
      auto q = g.normalize(p);
      for (int i = 1; i <= 5; ++i) {
        if (g.normalize(g.apply_word(Word{i}, Gasket::corner(0))) == q) return first[static_cast<std::size_t>(i)];
      }
      return s.value(p);
    };
    CompareOptions opt;
    opt.probe_level = 1;
    opt.graph = {true, 1};
    auto r = compare_levels<double>(DomainGeometry(UpperDomain{geo->lambda()}), {3, 4, 5, 6, 7}, upper_boundary_function(s),
                                    eval, opt);
    std::string d;
    for (const auto& l : r) d += (d.empty() ? "" : " ") + sci(l.max_abs);
    return Outcome{strictly_decreasing(r) && r.back().max_abs <= 2e-3, "max errors m=3..7 " + d};
  });

  // 4. Gauss-Green and measure identities.
  report("4.1", "half Gauss-Green truncation bound", 30, [] {
    auto g = std::make_shared<const HalfGeometry>(3);
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> dist(-9, 9);
    double worst = 0;
    bool ok = true;
    for (int t = 0; t < 10; ++t) {
      auto f = cylinder_data<R>(*g, 1 + t % 3, R(dist(rng), 9), [&](const Word&) { return R(dist(rng), 9); });
      HalfSolution<R> s(g, f);
      R target = 3 * f.q1() - 3 * s.integral(Word{}).value;
      double sup = 1;
      for (int m = 1; m <= 8; ++m) {
        double gap = std::abs(to_double(s.antisymmetric_pairing(m) - target));
        double bound = 30.0 / 7.0 * std::pow(5.0 / 7.0, m - 1) * sup;
        worst = std::max(worst, gap / bound);
        ok = ok && gap <= bound;
      }
    }
    return Outcome{ok, "10 data sets, m <= 8, worst gap/bound " + format_number(worst)};
  });
  report("4.2", "upper apex derivatives of h_0 equal mass times eta", 30, [] {
    double worst = 0;
    for (auto l : {TriadicLambda::from_rational(R(1)), TriadicLambda::from_rational(R(2, 3)), program()}) {
      auto geo = std::make_shared<const UpperGeometry>(l);
      UpperSolution h(geo, UpperBoundaryData::h0());
      for (int n = 0; n <= 3; ++n) {
        for (const auto& w : geo->words(n)) {
          double expect = geo->cylinder_mass(w) * geo->eta(0);
          worst = std::max(worst, std::abs(h.apex_derivative(w) - expect) / expect);
        }
      }
    }
    return Outcome{worst <= 1e-8, "max relative error " + sci(worst)};
  });
  report("4.3", "lower derivative sums telescope", 30, [] {
    bool exact = true;
    for (const char* text : {"1/2", "3/8", "5/16"}) {
      auto geo = std::make_shared<const LowerGeometry<R>>(BinaryLambda::parse(text));
      LowerSolution<R> h(geo, LowerBoundaryData<R>{R(2), R(5), 0, {{Word{}, R(0)}}});
      auto [d1, d2] = h.normal_derivatives();
      for (int m = 0; m <= 6; ++m) {
        R sum = 0;
        for (const auto& w : geo->words(m)) {
          auto [b1, b2] = h.corner_values(w);
          auto [e1, e2] = h.corner_derivatives(w, b1, b2);
          sum += e1 + e2;
        }
        exact = exact && sum == d1 + d2;
      }
    }
    double worst = 0;
    for (const char* text : {"1/3", "5/7", "2/9"}) {
      auto geo = std::make_shared<const LowerGeometry<double>>(BinaryLambda::parse(text));
      LowerSolution<double> h(geo, LowerBoundaryData<double>{2.0, 5.0, 0, {{Word{}, 0.0}}});
      auto [d1, d2] = h.normal_derivatives();
      for (int m = 0; m <= 6; ++m) {
        double sum = 0;
        for (const auto& w : geo->words(m)) {
          auto [b1, b2] = h.corner_values(w);
          auto [e1, e2] = h.corner_derivatives(w, b1, b2);
          sum += e1 + e2;
        }
        worst = std::max(worst, std::abs(sum - (d1 + d2)));
      }
    }
    return Outcome{exact && worst <= 1e-10, std::string("rational ") + (exact ? "exact" : "mismatch") + ", float max gap " + sci(worst)};
  });
  report("4.4", "all four measures have unit mass per level", 30, [] {
    double worst = 0;
    HalfGeometry half(3);
    for (int d = 0; d <= 6; ++d) {
      R visited = 0;
      std::function<void(const Word&)> walk = [&](const Word& w) {
        if (static_cast<int>(w.size()) == d) return;
        visited += half.atom_mass(w, 1);
        for (int i : half.alphabet()) walk(w.then(i));
      };
      walk(Word{});
      worst = std::max(worst, std::abs(to_double(visited + half.residual_mass(d)) - 1));
    }
    for (auto l : {TriadicLambda::from_rational(R(1)), program()}) {
      UpperGeometry geo(l);
      for (int n = 0; n <= 6; ++n) {
        double sum = 0;
        for (const auto& w : geo.words(n)) sum += geo.cylinder_mass(w);
        worst = std::max(worst, std::abs(sum - 1));
      }
    }
    for (const char* text : {"3/8", "1/3", "5/7"}) {
      LowerGeometry<double> geo(BinaryLambda::parse(text));
      for (int n = 0; n <= 6; ++n) {
        double s1 = 0, s2 = 0;
        for (const auto& w : geo.words(n)) {
          auto [a, b] = geo.measures(w);
          s1 += a;
          s2 += b;
        }
        worst = std::max({worst, std::abs(s1 - 1), std::abs(s2 - 1)});
      }
    }
    return Outcome{worst <= 1e-12, "max deviation " + sci(worst)};
  });

  // 5. Energy estimates.
  report("5.1", "half energy is at most (225/28) Q", 60, [] {
    auto g = std::make_shared<const HalfGeometry>(3);
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> dist(-12, 12);
    double lo = 1e300, hi = 0;
    bool ok = true;
    for (int t = 0; t < 50; ++t) {
      int d = 1 + t % 3;
      auto f = cylinder_data<R>(*g, d, R(dist(rng), 4), [&](const Word&) { return R(dist(rng), 4); });
      R q = energy_form_Q(*g, f);
      if (q == 0) continue;
      R e = HalfSolution<R>(g, f).energy();
      ok = ok && e <= R(225, 28) * q;
      double ratio = to_double(e / q);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    return Outcome{ok && lo > 0, "E/Q in [" + format_number(lo) + ", " + format_number(hi) + "], cap 225/28"};
  });
  report("5.2", "upper eta band and energy of h_0", 60, [] {
    bool ok = true;
    double worst = 0;
    for (int k = 1; k <= 20; ++k) {
      auto l = TriadicLambda::from_rational(R(k, 20));
      auto geo = std::make_shared<const UpperGeometry>(l);
      double eta = geo->eta(0);
      double scale = std::pow(upper_scale, static_cast<double>(l.m1()));
      ok = ok && eta >= 1.116924 * scale && eta < 2 * scale;
      double e = UpperSolution(geo, UpperBoundaryData::h0()).partial_energy(12);
      worst = std::max(worst, std::abs(e - eta) / eta);
    }
    return Outcome{ok && worst <= 1e-6, "20 lambdas in band, energy relative error " + sci(worst)};
  });
  report("5.3", "Haar functions are energy orthogonal", 60, [] {
    double worst = 0;
    for (auto l : {TriadicLambda::from_rational(R(1)), program()}) {
      auto geo = std::make_shared<const UpperGeometry>(l);
      std::deque<UpperSolution> basis;
      basis.emplace_back(geo, UpperBoundaryData::h0());
      for (int n = 0; n <= 2; ++n) {
        for (const auto& w : geo->words(n)) {
          for (int j = 1; j <= geo->iota(n + 1); ++j) basis.emplace_back(geo, haar_function(*geo, w, j));
        }
      }
      for (std::size_t i = 0; i < basis.size(); ++i) {
        for (std::size_t k = i + 1; k < basis.size(); ++k) {
          double scale = std::sqrt(basis[i].energy() * basis[k].energy());
          worst = std::max(worst, std::abs(energy_form(basis[i], basis[k])) / scale);
        }
      }
    }
    return Outcome{worst <= 1e-8, "max normalized cross energy " + sci(worst)};
  });

  // 6. Dirichlet-to-Neumann.
  report("6.1", "SG half DtN partial sums converge", 5, [] {
    auto geo = std::make_shared<const HalfGeometry>(2);
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> dist(-8, 8), len(1, 6);
    double worst = 0;
    for (int t = 0; t < 10; ++t) {
      HalfBoundaryData<R> f(R(dist(rng)), R(0));
      Word zeros;
      for (int k = 0, n = len(rng); k < n; ++k, zeros = zeros.then(0)) f.set_atom(zeros, 1, R(dist(rng), 3));
      HalfSolution<R> s(geo, f);
      auto d = dirichlet_to_neumann_sg(s, 40);
      R target = R(9, 4) * s.integral(Word{}).value - R(3, 4) * s.q0() - R(3, 2) * f.q1();
      worst = std::max(worst, std::abs(to_double(d.partial_sums.back() - target)));
    }
    return Outcome{worst <= 1e-10, "10 data sets, K = 40, max gap " + sci(worst)};
  });
  report("6.2", "SG half Neumann inverse round trip", 5, [] {
    auto geo = std::make_shared<const HalfGeometry>(2);
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> dist(-6, 6);
    bool ok = true;
    for (int t = 0; t < 10; ++t) {
      std::vector<R> eta;
      int n = 1 + t;
      for (int i = 0; i < n; ++i) eta.push_back(R(dist(rng), 1 + t));
      HalfSolution<R> s(geo, neumann_inverse_sg(eta));
      auto d = dirichlet_to_neumann_sg(s, n + 3);
      ok = ok && d.q1_derivative == eta[0];
      for (int k = 0; k <= n + 3; ++k) {
        R expect = k + 1 < n ? eta[static_cast<std::size_t>(k + 1)] : R(0);
        ok = ok && d.terms[static_cast<std::size_t>(k)] == expect;
      }
    }
    return Outcome{ok, "10 finitely supported derivative sequences, exact"};
  });

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
