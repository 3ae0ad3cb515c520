#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gasket/compare.hpp"
#include "gasket/half_domain.hpp"
#include "gasket/lower_domain.hpp"
#include "gasket/upper_domain.hpp"

using namespace gasket;
using R = Rational;

TEST_CASE("half domain evaluation converges to the graph solutions", "[oracle]") {
  auto geo = std::make_shared<const HalfGeometry>(3);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  auto f = cylinder_data<double>(*geo, 2, u(rng), [&](const Word&) { return u(rng); });
  HalfSolution<double> s(geo, f);
  DomainGeometry dom(HalfDomain{3});
  CompareOptions opt;
  opt.probe_level = 3;
  opt.graph = {true, 3};
  auto r = compare_levels<double>(dom, {4, 5, 6, 7, 8}, half_boundary_function(s),
                                  [&](LatticePoint p) { return s.value(p); }, opt);
  CHECK(strictly_decreasing(r));
  CHECK(r.back().max_abs <= 1e-3);
}

TEST_CASE("half SG3 level-1 domain graph", "[oracle]") {
  auto dg = domain_restricted_graph(DomainGeometry(HalfDomain{3}), 1, {false, 0});
  std::size_t interior = 0, corner = 0, cantor = 0;
  for (auto k : dg.kinds) {
    interior += k == BoundaryKind::interior;
    corner += k == BoundaryKind::corner_boundary;
    cantor += k == BoundaryKind::cantor_boundary;
  }
  CHECK(interior == 3);
  CHECK(corner == 1);
  CHECK(cantor == 1);
}

TEST_CASE("constant data gives zero discrepancy", "[oracle]") {
  auto geo = std::make_shared<const HalfGeometry>(3);
  HalfSolution<R> s(geo, HalfBoundaryData<R>(R(2), R(2)));
  DomainGeometry dom(HalfDomain{3});
  auto r = compare_levels<R>(dom, {2, 3}, half_boundary_function(s), [&](LatticePoint p) { return s.value(p); });
  for (const auto& l : r) CHECK(l.exact);
}

TEST_CASE("lower domain evaluation is exact for dyadic lambda", "[oracle]") {
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
    DomainGeometry dom(LowerDomain{l});
    CompareOptions opt;
    opt.graph = {false, 0};
    std::vector<int> levels;
    for (int m = std::max(1, d); m <= d + 3; ++m) levels.push_back(m);
    auto r = compare_levels<R>(dom, levels, lower_boundary_function(s), [&](LatticePoint p) { return s.value(p); }, opt);
    for (const auto& lvl : r) {
      INFO(text << " level " << lvl.level);
      CHECK(lvl.exact);
      CHECK(lvl.points > 0);
    }
  }
}

TEST_CASE("upper domain first-level values converge to the graph solutions", "[oracle]") {
  auto geo = std::make_shared<const UpperGeometry>(TriadicLambda::from_rational(R(1)));
  auto f = UpperBoundaryData::cylinders(*geo, 0.3, 1, [](const Word& w) { return w[0] == 1 ? 1.0 : (w[0] == 2 ? -0.5 : 0.25); });
  UpperSolution s(geo, f);
  auto first = s.step(Word{}, 0.3);
  DomainGeometry dom(UpperDomain{geo->lambda()});
  const Gasket& g = geo->gasket();
  CompareOptions opt;
  opt.probe_level = 1;
  opt.graph = {true, 1};
  auto eval = [&](LatticePoint p) {
    auto q = g.normalize(p);
    for (int i = 1; i <= 5; ++i) {
      if (g.normalize(g.apply_word(Word{i}, Gasket::corner(0))) == q) return first[static_cast<std::size_t>(i)];
    }
    return s.value(p);
  };
  auto r = compare_levels<double>(dom, {3, 4, 5, 6, 7, 8}, upper_boundary_function(s), eval, opt);
  CHECK(strictly_decreasing(r));
  CHECK(r[4].max_abs <= 2e-3);
}
