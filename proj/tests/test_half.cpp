#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gasket/half_domain.hpp"

using namespace gasket;
using R = Rational;

namespace {
auto sg3() { return std::make_shared<const HalfGeometry>(3); }
auto sg() { return std::make_shared<const HalfGeometry>(2); }

HalfSolution<R> solve_half(std::shared_ptr<const HalfGeometry> g, HalfBoundaryData<R> f) {
  return HalfSolution<R>(std::move(g), std::move(f));
}

HalfBoundaryData<R> q1_indicator() { return HalfBoundaryData<R>(R(1), R(0)); }
}  // namespace

TEST_CASE("half domain alphabet and masses", "[half]") {
  auto g = sg3();
  CHECK(g->alphabet() == std::vector<int>{0, 3});
  CHECK(g->full_cells() == std::vector<int>{1, 5});
  CHECK(g->digit_weight(0) == R(1, 7));
  CHECK(g->digit_weight(3) == R(4, 7));
  CHECK(g->atom_mass(Word{}, 1) == R(2, 7));
  CHECK(g->atom_mass(Word{0}, 1) == R(2, 49));
  CHECK_THROWS_AS(g->atom_mass(Word{1}, 1), AddressError);
  for (int d = 0; d <= 6; ++d) {
    R visited = 0;
    std::function<void(const Word&)> walk = [&](const Word& w) {
      if (static_cast<int>(w.size()) == d) return;
      visited += g->atom_mass(w, 1);
      for (int i : g->alphabet()) walk(w.then(i));
    };
    walk(Word{});
    CHECK(1 - visited == power(R(5, 7), d));
    CHECK(g->residual_mass(d) == power(R(5, 7), d));
  }
  auto s = sg();
  CHECK(s->alphabet() == std::vector<int>{0});
  CHECK(s->atom_mass(Word{}, 1) == R(2, 3));
  CHECK(s->atom_mass(Word{0, 0}, 1) == R(2, 27));
}

TEST_CASE("atom masses form a probability measure for every l", "[half]") {
  for (int l = 2; l <= 7; ++l) {
    HalfGeometry g(l);
    CHECK(g.atom_count() == l / 2);
    CHECK(g.total_mass() == 1);
    for (const auto& m : g.base_masses()) CHECK(m > 0);
    CHECK(g.weight_sum() < 1);
  }
  CHECK(HalfGeometry(4).alphabet() == std::vector<int>{0, 6});
}

TEST_CASE("antisymmetric harmonic function on V_1", "[half]") {
  auto vals = antisymmetric_values(3);
  std::map<std::pair<long, long>, R> at;
  for (auto& [p, v] : vals) at[{p.u, p.v}] = v;
  CHECK(at[{0, 0}] == 1);
  CHECK(at[{0, 1}] == R(1, 3));   // y = F_1 q0
  CHECK(at[{1, 0}] == R(4, 15));  // x = F_1 q2
  CHECK(at[{0, 2}] == R(1, 15));  // z = F_0 q1
  CHECK(at[{1, 1}] == 0);
  CHECK(at[{0, 3}] == 0);
  auto sgv = antisymmetric_values(2);
  for (auto& [p, v] : sgv) {
    if (p.u == 0 && p.v == 1) CHECK(v == R(1, 5));
  }
  CHECK_THROWS_AS(antisymmetric_values(4), CapabilityError);
}

TEST_CASE("integrals against the atom measure", "[half]") {
  auto g = sg3();
  auto c = solve_half(g, HalfBoundaryData<R>::constant(R(5, 2)));
  CHECK(c.integral(Word{}).value == R(5, 2));
  HalfBoundaryData<R> ind(R(0), R(0));
  ind.set_atom(Word{}, 1, R(1));
  CHECK(solve_half(g, ind).integral(Word{}).value == R(2, 7));

  HalfBoundaryData<R> f(R(0), R(0));
  f.set_atom(Word{}, 1, R(1));
  f.set_atom(Word{0}, 1, R(3));
  f.set_atom(Word{0, 0}, 1, R(9));
  CHECK(solve_half(sg(), f).integral(Word{}).value == 2);
}

TEST_CASE("callback integrals carry a truncation bound", "[half]") {
  auto g = sg3();
  auto f = HalfBoundaryData<double>::from_callback(0.0, 1.0, [](const Word&, int) { return 1.0; }, 1.0);
  HalfSolution<double> s(g, f);
  auto e = s.integral(Word{});
  CHECK(e.bound > 0);
  CHECK(std::abs(e.value - 1.0) <= e.bound + 1e-9);
  CHECK(e.bound < 1e-3);
}

TEST_CASE("normal derivative at q1", "[half]") {
  auto g = sg3();
  CHECK(solve_half(g, HalfBoundaryData<R>::constant(R(4))).normal_derivative_q1() == 0);
  CHECK(solve_half(g, q1_indicator()).normal_derivative_q1() == 3);
  HalfBoundaryData<R> f(R(0), R(0));
  f.set_atom(Word{3}, 1, R(1));
  CHECK(solve_half(g, f).normal_derivative_q1() == R(-24, 49));
  // Same value from the level-1 grid through the full cell at q1.
  auto s = solve_half(g, q1_indicator());
  auto grid = s.cell_grid(Word{});
  const Gasket& gk = g->gasket();
  R d = R(15, 7) * (2 * grid[gk.grid_index(0, 0)] - grid[gk.grid_index(0, 1)] - grid[gk.grid_index(1, 0)]);
  CHECK(d == 3);
}

TEST_CASE("SG3 extension step", "[half]") {
  auto g = sg3();
  auto one = extend_step_sg3(solve_half(g, HalfBoundaryData<R>::constant(R(1))));
  CHECK(one == std::array<R, 3>{1, 1, 1});
  auto ha = extend_step_sg3(solve_half(g, q1_indicator()));
  CHECK(ha == std::array<R, 3>{R(4, 15), R(1, 3), R(1, 15)});
  HalfBoundaryData<R> p(R(0), R(0));
  p.set_atom(Word{}, 1, R(1));
  CHECK(extend_step_sg3(solve_half(g, p)) == std::array<R, 3>{R(1, 15), R(1, 3), R(4, 15)});
}

TEST_CASE("closed forms agree with the generic level-1 solve", "[half]") {
  auto g = sg3();
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> dist(-9, 9);
  const Gasket& gk = g->gasket();
  for (int trial = 0; trial < 10; ++trial) {
    auto f = cylinder_data<R>(*g, 2, R(dist(rng)), [&](const Word&) { return R(dist(rng), 4); });
    auto s = solve_half(g, f);
    auto closed = extend_step_sg3(s);
    auto grid = s.cell_grid(Word{});
    CHECK(grid[gk.grid_index(1, 0)] == closed[0]);
    CHECK(grid[gk.grid_index(0, 1)] == closed[1]);
    CHECK(grid[gk.grid_index(0, 2)] == closed[2]);
  }
  auto s2 = sg();
  for (int trial = 0; trial < 10; ++trial) {
    HalfBoundaryData<R> f(R(dist(rng)), R(dist(rng)));
    for (int k = 0; k < 4; ++k) f.set_atom(Word(std::vector<std::uint8_t>(k, 0)), 1, R(dist(rng)));
    auto s = solve_half(s2, f);
    CHECK(s.cell_grid(Word{})[s2->gasket().grid_index(0, 1)] == extend_step_sg(s));
  }
}

TEST_CASE("SG extension step", "[half]") {
  auto g = sg();
  CHECK(extend_step_sg(solve_half(g, HalfBoundaryData<R>::constant(R(1)))) == 1);
  CHECK(extend_step_sg(solve_half(g, q1_indicator())) == R(1, 5));
  HalfBoundaryData<R> f(R(0), R(0));
  f.set_atom(Word{0}, 1, R(1));
  CHECK(extend_step_sg(solve_half(g, f)) == R(2, 5));
}

TEST_CASE("evaluation inside the half domain", "[half]") {
  auto g = sg3();
  const Gasket& gk = g->gasket();
  auto c = solve_half(g, HalfBoundaryData<R>::constant(R(7, 3)));
  for (auto p : {LatticePoint{2, 1, 1}, LatticePoint{2, 3, 1}, LatticePoint{3, 4, 10}, LatticePoint{1, 0, 2}}) {
    CHECK(c.value(p) == R(7, 3));
  }
  auto ha = solve_half(g, q1_indicator());
  CHECK(ha.value(gk.resolve({Word{1}, 0})) == R(1, 3));
  // x_0 = F_0 x_empty.
  CHECK(ha.value(gk.resolve({Word{0, 1}, 2})) == R(4, 225));
  CHECK(ha.value(gk.resolve({Word{3}, 0})) == 0);
  CHECK_THROWS_AS(ha.value(gk.resolve({Word{2}, 2})), AddressError);
  // The data h_a gives h_a itself on the level-2 grid.
  auto full = extend_to_level(gk, 2, CellBoundaryValues<R>{0, 1, -1});
  for (std::size_t i = 0; i < full.graph->size(); ++i) {
    auto loc = g->locate(full.graph->points()[i]);
    if (loc.kind == HalfPoint::outside) continue;
    CHECK(ha.value(full.graph->points()[i]) == full.values[i]);
  }
}

TEST_CASE("Q form and energy sandwich", "[half]") {
  auto g = sg3();
  CHECK(energy_form_Q(*g, HalfBoundaryData<R>::constant(R(3))) == 0);
  CHECK(energy_form_Q(*g, q1_indicator()) == 1);
  HalfBoundaryData<R> p(R(0), R(0));
  p.set_atom(Word{}, 1, R(1));
  CHECK(energy_form_Q(*g, p, 1) == 3);
  auto e = solve_half(g, q1_indicator()).energy();
  CHECK(e == 3);
  // E_{O_1}(h_a) and the level factor of the cylinder series.
  CHECK(solve_half(g, q1_indicator()).partial_energy(1) == R(88, 35));
  R ratio = 0;
  for (int i : g->alphabet()) {
    R h = g->antisymmetric_grid()[g->gasket().grid_index(g->gasket().cell_origin(Word{i}))];
    ratio += h * h / g->gasket().renorm();
  }
  CHECK(ratio == R(17, 105));
  CHECK(R(88, 35) / (1 - ratio) == 3);
}

TEST_CASE("energy upper bound against Q", "[half]") {
  auto g = sg3();
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> dist(-20, 20);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 1 + trial % 3;
    auto f = cylinder_data<R>(*g, d, R(dist(rng)), [&](const Word&) { return R(dist(rng), 3); });
    auto s = solve_half(g, f);
    R q = energy_form_Q(*g, f);
    R e = s.energy();
    CHECK(e <= R(225, 28) * q);
    CHECK(s.partial_energy(d) <= e);
  }
}

TEST_CASE("discontinuous cylinder data is rejected by the energy", "[half]") {
  auto g = sg3();
  HalfBoundaryData<R> f(R(0), R(0));
  f.set_atom(Word{}, 1, R(1));
  CHECK_THROWS_AS(solve_half(g, f).energy(), DataError);
}

TEST_CASE("Gauss-Green pairing with h_a", "[half]") {
  auto g = sg3();
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> dist(-5, 5);
  for (int trial = 0; trial < 5; ++trial) {
    auto f = cylinder_data<R>(*g, 2, R(dist(rng)), [&](const Word&) { return R(dist(rng)); });
    auto s = solve_half(g, f);
    R target = s.normal_derivative_q1();
    double sup = 5;
    for (int m = 1; m <= 6; ++m) {
      double gap = std::abs(to_double(s.antisymmetric_pairing(m) - target));
      CHECK(gap <= 30.0 / 7.0 * std::pow(5.0 / 7.0, m - 1) * sup + 1e-12);
    }
  }
}

TEST_CASE("Dirichlet-to-Neumann on the SG half domain", "[half][dtn]") {
  auto g = sg();
  auto c = solve_half(g, HalfBoundaryData<R>::constant(R(2)));
  auto dc = dirichlet_to_neumann_sg(c, 5);
  for (const auto& s : dc.partial_sums) CHECK(s == 0);
  CHECK(dc.limit == 0);

  HalfBoundaryData<R> f(R(0), R(0));
  f.set_atom(Word{}, 1, R(1));
  auto s = solve_half(g, f);
  auto d = dirichlet_to_neumann_sg(s, 30);
  CHECK(d.limit == R(3, 2));
  CHECK(abs_value(d.partial_sums.back() - d.limit) < power(R(3, 5), 25));
  for (std::size_t k = 0; k < d.terms.size(); ++k) CHECK(d.terms[k] == d.identity_terms[k]);
}

TEST_CASE("Neumann inverse formulas", "[half][dtn]") {
  auto f = neumann_inverse_sg<R>({R(1)});
  Word zeros;
  for (int k = 0; k < 6; ++k) {
    CHECK(f.atom(zeros, 1) == -1 + R(4, 3) * power(R(3, 5), k + 1));
    zeros = zeros.then(0);
  }
  CHECK(*f.explicit_q0() == -1);
  auto g = neumann_inverse_sg<R>({R(0), R(1)});
  CHECK(g.atom(Word{}, 1) == R(1, 3));
  CHECK(*g.explicit_q0() == R(-4, 3));
  auto z = neumann_inverse_sg<R>({});
  CHECK(z.atom(Word{0, 0}, 1) == 0);
}

TEST_CASE("Neumann inverse round trip", "[half][dtn]") {
  auto geo = sg();
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> dist(-6, 6);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<R> eta;
    int n = 1 + trial;
    for (int i = 0; i < n; ++i) eta.push_back(R(dist(rng), 1 + trial));
    auto f = neumann_inverse_sg(eta);
    HalfSolution<R> s(geo, f);
    auto d = dirichlet_to_neumann_sg(s, n + 3);
    CHECK(d.q1_derivative == eta[0]);
    for (int k = 0; k <= n + 3; ++k) {
      R expect = k + 1 < n ? eta[static_cast<std::size_t>(k + 1)] : R(0);
      CHECK(d.terms[static_cast<std::size_t>(k)] == expect);
    }
  }
}
