#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <deque>

#include "gasket/upper_domain.hpp"

using namespace gasket;
using Catch::Approx;

namespace {
TriadicLambda lam(const char* s) { return TriadicLambda::parse(s); }
auto geometry(const char* s) { return std::make_shared<const UpperGeometry>(lam(s)); }
TriadicLambda program() { return TriadicLambda::parse("digits:(1,1)(2,1)(3,2)periodic:(2,1)(1,2)"); }

LatticePoint vertex(const UpperGeometry& geo, const Word& w) { return geo.gasket().apply_word(geo.map_word(w), Gasket::corner(0)); }
}  // namespace

TEST_CASE("alpha(1) solves the quadratic fixed point", "[upper]") {
  auto e = eta_alpha(lam("1"), 60);
  CHECK(std::abs(e.alpha - (75 - std::sqrt(2353.0)) / 60) <= 1e-9);
  CHECK(e.eta == Approx(30.0 / 7 * (1 - e.alpha)).epsilon(1e-14));
  CHECK(e.eta == Approx(2.393407).margin(1e-6));
  auto a = eta_alpha(lam("1"));
  CHECK(a.alpha_bound <= 1e-12);
  CHECK(std::abs(a.alpha - alpha_one()) <= 1e-12);
}

TEST_CASE("fixed-depth brackets shrink and contain the limit", "[upper]") {
  auto limit = eta_alpha(program(), 200).alpha;
  double prev = 1;
  for (int n : {2, 4, 8, 16}) {
    auto e = eta_alpha(program(), n);
    CHECK(std::abs(e.alpha - limit) <= e.alpha_bound + 1e-13);
    CHECK(e.alpha_bound <= prev);
    prev = e.alpha_bound;
  }
}

TEST_CASE("eta lies in the h_0 band on a grid", "[upper]") {
  for (int k = 1; k <= 20; ++k) {
    auto l = TriadicLambda::from_rational(Rational(k, 20));
    auto e = eta_alpha(l);
    double scale = std::pow(upper_scale, static_cast<double>(l.m1()));
    CHECK(e.eta >= 1.116924 * scale);
    CHECK(e.eta < 2 * scale);
    CHECK(e.alpha > 0);
    CHECK(e.alpha <= alpha_one() + 1e-12);
    CHECK(e.eta == Approx(2 * scale * (1 - e.alpha)).epsilon(1e-13));
  }
}

TEST_CASE("alpha is invariant under dilation and monotone above 1/3", "[upper]") {
  CHECK(eta_alpha(lam("1/9")).alpha == Approx(eta_alpha(lam("1")).alpha).epsilon(1e-13));
  CHECK(eta_alpha(lam("5/243")).alpha == Approx(eta_alpha(lam("5/27")).alpha).epsilon(1e-13));
  double prev = 0;
  for (int k = 7; k <= 20; ++k) {
    double a = eta_alpha(TriadicLambda::from_rational(Rational(k, 20))).alpha;
    CHECK(a >= prev - 1e-13);
    prev = a;
  }
}

TEST_CASE("measure weights", "[upper]") {
  auto one = geometry("1");
  auto w = one->weights(0);
  CHECK(w[1] == Approx(0.304400).margin(1e-6));
  CHECK(w[2] == w[1]);
  CHECK(w[3] == Approx(0.391200).margin(1e-6));
  CHECK(2 * w[1] + w[3] == Approx(1).epsilon(1e-15));
  CHECK(w[1] > 0.25);
  CHECK(w[1] < 1.0 / 3);
  CHECK(w[3] > 1.0 / 3);
  CHECK(w[3] < 0.5);
  auto two = geometry("2/3");
  CHECK(two->weights(0)[4] == 0.5);
  CHECK(two->weights(0)[5] == 0.5);
  CHECK(one->cylinder_mass(Word{}) == 1);
}

TEST_CASE("cylinder masses sum to one and push forward", "[upper]") {
  for (auto g : {geometry("1"), geometry("2/3"), std::make_shared<const UpperGeometry>(program())}) {
    for (int n = 0; n <= 6; ++n) {
      double sum = 0;
      for (const auto& w : g->words(n)) sum += g->cylinder_mass(w);
      CHECK(sum == Approx(1).epsilon(1e-12));
    }
    UpperGeometry shifted(g->suffix(2));
    for (const auto& w : g->words(2)) {
      for (const auto& v : shifted.words(2)) {
        Word wv = w;
        for (int d : v.digits()) wv = wv.then(d);
        CHECK(g->cylinder_mass(wv) == Approx(g->cylinder_mass(w) * shifted.cylinder_mass(v)).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("words must follow the digits of lambda", "[upper]") {
  auto g = geometry("2/3");
  CHECK_NOTHROW(g->check_word(Word{4, 1}));
  CHECK_THROWS_AS(g->check_word(Word{1}), AddressError);
  CHECK(g->map_word(Word{4}) == Word{4});
  auto small = geometry("1/9");
  CHECK(small->map_word(Word{3}) == (Word{0, 0, 3}));
}

TEST_CASE("closed forms agree with the matching equations", "[upper]") {
  std::array<Rational, 6> integral{Rational(0), Rational(2, 7), Rational(-1, 3), Rational(5, 11), Rational(3, 4), Rational(-2)};
  for (int iota : {1, 2}) {
    for (const Rational& e : {Rational(1), Rational(12, 5), Rational(7, 3)}) {
      auto a = extend_step_upper<Rational>(iota, e, Rational(3, 2), integral);
      auto b = solve_upper_step<Rational>(iota, e, Rational(3, 2), integral);
      for (int i : upper_alphabet(iota)) CHECK(a[static_cast<std::size_t>(i)] == b[static_cast<std::size_t>(i)]);
    }
  }
  std::array<double, 6> ones{1, 1, 1, 1, 1, 1};
  for (int iota : {1, 2}) {
    auto v = extend_step_upper<double>(iota, 2.5, 1.0, ones);
    for (int i : upper_alphabet(iota)) CHECK(v[static_cast<std::size_t>(i)] == Approx(1).epsilon(1e-15));
  }
}

TEST_CASE("h_0 values at the first-level points", "[upper]") {
  std::array<double, 6> zero{};
  double e = 2.2;
  CHECK(extend_step_upper<double>(1, e, 1.0, zero)[4] == Approx(1 / (1 + e)));
  CHECK(extend_step_upper<double>(2, e, 1.0, zero)[3] == Approx((6 + 2 * e) / (6 + 15 * e + 3 * e * e)));
  auto one = geometry("1");
  const Gasket& g = one->gasket();
  auto at = [&](const Word& w) { return g.apply_word(w, Gasket::corner(0)); };
  UpperSolution h(one, UpperBoundaryData::h0());
  double e1 = one->eta(1);
  CHECK(h.value(at(Word{4})) == Approx(one->alpha(0)).epsilon(1e-12));
  CHECK(h.value(at(Word{3})) == Approx((6 + 2 * e1) / (6 + 15 * e1 + 3 * e1 * e1)).epsilon(1e-12));
  CHECK(h.value(at(Word{3, 4})) == Approx(h.value(at(Word{3})) * one->alpha(1)).epsilon(1e-12));
  auto two = geometry("2/3");
  UpperSolution h2(two, UpperBoundaryData::h0());
  CHECK(h2.value(at(Word{4})) == Approx(1 / (1 + two->eta(1))).epsilon(1e-12));
  CHECK(h2.value(at(Word{4, 4})) == Approx(two->alpha(0) * two->alpha(1)).epsilon(1e-10));
}

TEST_CASE("evaluation of constants and points below the cut", "[upper]") {
  auto g = geometry("2/3");
  UpperSolution c(g, UpperBoundaryData::constant(2.5, 2.5));
  for (const auto& w : g->words(3)) CHECK(c.value(vertex(*g, w)) == Approx(2.5).epsilon(1e-14));
  CHECK_THROWS_AS(c.value(Gasket::corner(1)), AddressError);
}

TEST_CASE("normal derivative at q0", "[upper]") {
  auto one = geometry("1");
  CHECK(UpperSolution(one, UpperBoundaryData::constant(3, 3)).normal_derivative_q0() == Approx(0).margin(1e-14));
  CHECK(UpperSolution(one, UpperBoundaryData::h0()).normal_derivative_q0() == Approx(one->eta(0)).epsilon(1e-15));
  auto ind = UpperBoundaryData::cylinders(*one, 0, 1, [](const Word& w) { return w[0] == 3 ? 1.0 : 0.0; });
  CHECK(UpperSolution(one, ind).normal_derivative_q0() == Approx(-0.936300).margin(1e-6));
}

TEST_CASE("derivative of h_0 at the cylinder apexes is mass times eta", "[upper]") {
  for (auto l : {lam("1"), lam("2/3"), program()}) {
    auto g = std::make_shared<const UpperGeometry>(l);
    UpperSolution h(g, UpperBoundaryData::h0());
    for (int n = 0; n <= 3; ++n) {
      for (const auto& w : g->words(n)) {
        double expect = g->cylinder_mass(w) * g->eta(0);
        CHECK(std::abs(h.apex_derivative(w) - expect) <= 1e-8 * expect);
      }
    }
  }
}

TEST_CASE("energy of h_0 is eta", "[upper]") {
  for (auto l : {lam("1"), lam("2/3"), program()}) {
    auto g = std::make_shared<const UpperGeometry>(l);
    UpperSolution h(g, UpperBoundaryData::h0());
    CHECK(std::abs(h.partial_energy(12) - g->eta(0)) <= 1e-6 * g->eta(0));
    CHECK(h.energy() == Approx(g->eta(0)).epsilon(1e-12));
  }
}

TEST_CASE("Haar functions are energy orthogonal", "[upper]") {
  for (auto l : {lam("1"), program()}) {
    auto g = std::make_shared<const UpperGeometry>(l);
    std::deque<UpperSolution> basis;
    basis.emplace_back(g, UpperBoundaryData::h0());
    for (int n = 0; n <= 2; ++n) {
      for (const auto& w : g->words(n)) {
        for (int j = 1; j <= g->iota(n + 1); ++j) basis.emplace_back(g, haar_function(*g, w, j));
      }
    }
    for (std::size_t i = 0; i < basis.size(); ++i) {
      for (std::size_t k = i + 1; k < basis.size(); ++k) {
        double scale = std::sqrt(basis[i].energy() * basis[k].energy());
        CHECK(std::abs(energy_form(basis[i], basis[k])) <= 1e-8 * scale);
      }
    }
  }
}

TEST_CASE("Haar functions integrate to zero", "[upper]") {
  auto g = geometry("1");
  for (int n = 0; n <= 2; ++n) {
    for (const auto& w : g->words(n)) {
      for (int j = 1; j <= 2; ++j) CHECK(UpperSolution(g, haar_function(*g, w, j)).integral(Word{}) == Approx(0).margin(1e-15));
    }
  }
  CHECK_THROWS_AS(haar_values(*geometry("2/3"), 0, 2), DataError);
}

TEST_CASE("Haar expansion", "[upper]") {
  auto one = geometry("1");
  auto ind = UpperBoundaryData::cylinders(*one, 0, 1, [](const Word& w) { return w[0] == 1 ? 1.0 : 0.0; });
  auto h = haar_expand(UpperSolution(one, ind), 1);
  CHECK(h.b == Approx(one->weights(0)[1]).epsilon(1e-14));
  REQUIRE(h.coefficients.size() == 2);
  CHECK(h.coefficients[0].c == Approx(0.5).epsilon(1e-14));
  CHECK(h.coefficients[1].c == Approx(0.5).epsilon(1e-14));

  auto two = geometry("2/3");
  auto psi = haar_expand(UpperSolution(two, haar_function(*two, Word{}, 1)), 3);
  CHECK(psi.b == Approx(0).margin(1e-15));
  for (const auto& c : psi.coefficients) CHECK(c.c == Approx(c.w.size() == 0 ? 1.0 : 0.0).margin(1e-14));

  auto constant = haar_expand(UpperSolution(one, UpperBoundaryData::constant(0, 4)), 2);
  CHECK(constant.b == Approx(4));
  for (const auto& c : constant.coefficients) CHECK(c.c == Approx(0).margin(1e-14));

  auto g = std::make_shared<const UpperGeometry>(program());
  auto f = UpperBoundaryData::cylinders(*g, 0.5, 3, [](const Word& w) {
    double v = 0;
    for (int d : w.digits()) v = 0.3 * v + d;
    return v;
  });
  auto back = haar_reconstruct(*g, haar_expand(UpperSolution(g, f), 3), 0.5, 3);
  for (const auto& [w, v] : f.values) CHECK(back.cylinder_value(w) == Approx(v).epsilon(1e-12));
}

TEST_CASE("energy estimate brackets the exact energy", "[upper]") {
  auto one = geometry("1");
  auto zero = energy_estimate_upper(one, UpperSolution(one, UpperBoundaryData::constant(2, 2)), 2);
  CHECK(zero.energy == Approx(0).margin(1e-14));
  CHECK(zero.haar_sum == Approx(0).margin(1e-14));
  auto h0 = energy_estimate_upper(one, UpperSolution(one, UpperBoundaryData::h0()), 2);
  CHECK(h0.energy == Approx(one->eta(0)).epsilon(1e-12));
  for (auto l : {lam("1"), lam("2/3"), program()}) {
    auto g = std::make_shared<const UpperGeometry>(l);
    auto f = UpperBoundaryData::cylinders(*g, 1.5, 2, [](const Word& w) { return w[0] * 0.25 - w[1] * 0.5; });
    auto est = energy_estimate_upper(g, UpperSolution(g, f), 2);
    CHECK(est.energy == Approx(est.orthogonal_energy).epsilon(1e-9));
    CHECK(est.ratio() > 0);
    CHECK(std::isfinite(est.ratio()));
  }
}

TEST_CASE("boundary data validation", "[upper]") {
  auto g = geometry("1");
  UpperBoundaryData bad{0, 1, {{Word{1}, 1.0}}};
  CHECK_THROWS_AS(UpperSolution(g, bad), DataError);
}
