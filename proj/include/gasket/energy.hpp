#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "gasket/graph.hpp"

namespace gasket {

/// Corner values (v0, v1, v2) of one cell.
template <Scalar T>
using CellBoundaryValues = std::array<T, 3>;

/// Energy-minimizing extension of corner data to the cell's level-1 grid,
/// indexed by Gasket::grid_index. Closed-form coefficients for l = 2, 3.
template <Scalar T>
std::vector<T> harmonic_extend_cell(const Gasket& g, const CellBoundaryValues<T>& b) {
  const T& h0 = b[0];
  const T& h1 = b[1];
  const T& h2 = b[2];
  std::vector<T> out(static_cast<std::size_t>(g.grid_size()));
  auto put = [&](int u, int v, T value) { out[static_cast<std::size_t>(g.grid_index(u, v))] = std::move(value); };
  if (g.l() == 2) {
    const T d = ratio<T>(5);
    put(0, 0, h1);
    put(2, 0, h2);
    put(0, 2, h0);
    put(0, 1, (2 * h0 + 2 * h1 + h2) / d);
    put(1, 1, (2 * h0 + h1 + 2 * h2) / d);
    put(1, 0, (h0 + 2 * h1 + 2 * h2) / d);
    return out;
  }
  if (g.l() == 3) {
    const T d = ratio<T>(15);
    put(0, 0, h1);
    put(3, 0, h2);
    put(0, 3, h0);
    put(1, 1, (h0 + h1 + h2) / ratio<T>(3));
    put(0, 2, (8 * h0 + 4 * h1 + 3 * h2) / d);
    put(0, 1, (4 * h0 + 8 * h1 + 3 * h2) / d);
    put(1, 2, (8 * h0 + 3 * h1 + 4 * h2) / d);
    put(2, 1, (4 * h0 + 3 * h1 + 8 * h2) / d);
    put(1, 0, (3 * h0 + 8 * h1 + 4 * h2) / d);
    put(2, 0, (3 * h0 + 4 * h1 + 8 * h2) / d);
    return out;
  }
  throw CapabilityError("closed-form harmonic extension only for l = 2, 3");
}

/// Extension coefficients for any l from the mean-value equations on Gamma_1:
/// row p gives (coefficient of v0, v1, v2) at grid point p.
inline std::vector<std::array<Rational, 3>> extension_matrix(const Gasket& g) {
  const int n = g.grid_size();
  const std::array<int, 3> corner_index = {g.grid_index(0, g.l()), g.grid_index(0, 0), g.grid_index(g.l(), 0)};
  std::vector<int> idx(static_cast<std::size_t>(n), -1);
  int unknowns = 0;
  for (int i = 0; i < n; ++i) {
    if (i != corner_index[0] && i != corner_index[1] && i != corner_index[2]) idx[static_cast<std::size_t>(i)] = unknowns++;
  }
  std::vector<std::vector<int>> nbr(static_cast<std::size_t>(n));
  for (auto [a, b] : g.grid_edges()) {
    nbr[static_cast<std::size_t>(a)].push_back(b);
    nbr[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<std::array<Rational, 3>> result(static_cast<std::size_t>(n));
  for (int c = 0; c < 3; ++c) {
    std::vector<std::vector<Rational>> a(static_cast<std::size_t>(unknowns),
                                         std::vector<Rational>(static_cast<std::size_t>(unknowns)));
    std::vector<Rational> rhs(static_cast<std::size_t>(unknowns));
    for (int i = 0; i < n; ++i) {
      int row = idx[static_cast<std::size_t>(i)];
      if (row < 0) continue;
      for (int j : nbr[static_cast<std::size_t>(i)]) {
        a[static_cast<std::size_t>(row)][static_cast<std::size_t>(row)] += 1;
        int col = idx[static_cast<std::size_t>(j)];
        if (col >= 0) {
          a[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] -= 1;
        } else if (j == corner_index[static_cast<std::size_t>(c)]) {
          rhs[static_cast<std::size_t>(row)] += 1;
        }
      }
    }
    auto x = solve_dense<Rational>(a, rhs);
    for (int i = 0; i < n; ++i) {
      int row = idx[static_cast<std::size_t>(i)];
      result[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] =
          row >= 0 ? x[static_cast<std::size_t>(row)] : Rational(i == corner_index[static_cast<std::size_t>(c)] ? 1 : 0);
    }
  }
  return result;
}

/// Harmonic extension through a precomputed extension matrix (any l).
template <Scalar T>
std::vector<T> apply_extension(const std::vector<std::array<Rational, 3>>& matrix, const CellBoundaryValues<T>& b) {
  std::vector<T> out(matrix.size());
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    T acc = ratio<T>(0);
    for (std::size_t c = 0; c < 3; ++c) {
      if (!is_zero(matrix[i][c])) acc += from_rational<T>(matrix[i][c]) * b[c];
    }
    out[i] = acc;
  }
  return out;
}

/// Harmonic extension to the level-1 grid for any l: closed forms for l = 2, 3,
/// otherwise a cached exact extension matrix.
template <Scalar T>
std::vector<T> extend_cell(const Gasket& g, const CellBoundaryValues<T>& b) {
  if (g.l() <= 3) return harmonic_extend_cell(g, b);
  static std::mutex lock;
  static std::map<int, std::shared_ptr<const std::vector<std::array<Rational, 3>>>> cache;
  std::shared_ptr<const std::vector<std::array<Rational, 3>>> matrix;
  {
    std::lock_guard<std::mutex> guard(lock);
    auto& slot = cache[g.l()];
    if (!slot) slot = std::make_shared<const std::vector<std::array<Rational, 3>>>(extension_matrix(g));
    matrix = slot;
  }
  return apply_extension(*matrix, b);
}

/// Corner values of the level-1 subcell F_i taken from grid values.
template <Scalar T>
CellBoundaryValues<T> subcell_corners(const Gasket& g, const std::vector<T>& grid, int i) {
  auto cs = g.cell_corners(Word{i});
  return {grid[static_cast<std::size_t>(g.grid_index(cs[0]))], grid[static_cast<std::size_t>(g.grid_index(cs[1]))],
          grid[static_cast<std::size_t>(g.grid_index(cs[2]))]};
}

/// Value at local point p of the harmonic function with the given corner values.
template <Scalar T>
T harmonic_value_in_cell(const Gasket& g, CellBoundaryValues<T> corners, LatticePoint p) {
  p = g.normalize(p);
  while (true) {
    if (p.level == 0) {
      if (p.u == 0 && p.v == 1) return corners[0];
      if (p.u == 0 && p.v == 0) return corners[1];
      if (p.u == 1 && p.v == 0) return corners[2];
      throw AddressError("point outside the cell");
    }
    auto grid = extend_cell(g, corners);
    if (p.level == 1) return grid[static_cast<std::size_t>(g.grid_index(p.u, p.v))];
    auto i = g.locate(p);
    if (!i) throw AddressError("point is not a vertex of the cell");
    corners = subcell_corners(g, grid, *i);
    p = g.normalize(*g.to_local(*i, p));
  }
}

/// Function on the vertices of a graph; total by construction.
template <Scalar T>
struct GraphFunction {
  std::shared_ptr<const Graph> graph;
  std::vector<T> values;

  int level() const { return graph->level(); }
  const T& at(int i) const { return values[static_cast<std::size_t>(i)]; }
  const T& at(LatticePoint p) const {
    auto i = graph->find(p);
    if (!i) throw AddressError("point is not a vertex of this graph");
    return values[static_cast<std::size_t>(*i)];
  }
};

/// r^(-m) sum over edges of w (f(x)-f(y))(g(x)-g(y)).
template <Scalar T>
T graph_energy(const GraphFunction<T>& f, const GraphFunction<T>& h) {
  if (f.graph->level() != h.graph->level()) throw LevelMismatch("graph_energy: functions on different levels");
  if (f.graph != h.graph && f.graph->points() != h.graph->points()) {
    throw LevelMismatch("graph_energy: functions on different vertex sets");
  }
  const Graph& gr = *f.graph;
  T sum = ratio<T>(0);
  for (const auto& e : gr.edges()) {
    T df = f.at(e.a) - f.at(e.b);
    T dh = h.at(e.a) - h.at(e.b);
    if (e.weight == 1) {
      sum += df * dh;
    } else {
      sum += from_rational<T>(e.weight) * df * dh;
    }
  }
  return sum * power(from_rational<T>(1 / gr.gasket().renorm()), gr.level());
}

/// Sum over neighbors y of x of w (f(x) - f(y)).
template <Scalar T>
T verify_matching(const GraphFunction<T>& f, int x) {
  const Graph& gr = *f.graph;
  auto p = gr.gasket().normalize(gr.points()[static_cast<std::size_t>(x)]);
  if (p.level == 0) throw ContractViolation("verify_matching: x is a corner of V_0");
  T sum = ratio<T>(0);
  for (const auto& [y, w] : gr.neighbors(x)) {
    T d = f.at(x) - f.at(y);
    sum += (w == 1) ? d : from_rational<T>(w) * d;
  }
  return sum;
}

/// Residuals of the mean-value equations at the non-corner grid points.
template <Scalar T>
std::vector<T> cell_matching_residuals(const Gasket& g, const std::vector<T>& grid) {
  std::vector<T> res(grid.size(), ratio<T>(0));
  for (auto [a, b] : g.grid_edges()) {
    T d = grid[static_cast<std::size_t>(a)] - grid[static_cast<std::size_t>(b)];
    res[static_cast<std::size_t>(a)] += d;
    res[static_cast<std::size_t>(b)] -= d;
  }
  for (int c = 0; c < 3; ++c) {
    res[static_cast<std::size_t>(g.grid_index(Gasket::corner(c)))] = ratio<T>(0);
  }
  return res;
}

/// Normal derivative at corner i of a cell of depth m from its level-1 grid
/// values: r^(-m) r^(-1) (2h(q_i) - h(F_i q_{i+1}) - h(F_i q_{i-1})).
template <Scalar T>
T normal_derivative(const Gasket& g, const std::vector<T>& grid, int i, int m) {
  if (grid.size() != static_cast<std::size_t>(g.grid_size())) throw ContractViolation("normal_derivative: grid size");
  if (i < 0 || i > 2) throw AddressError("corner index must be 0, 1 or 2");
  auto res = cell_matching_residuals(g, grid);
  T scale_value = ratio<T>(0);
  for (const auto& v : grid) {
    if (abs_value(v) > scale_value) scale_value = abs_value(v);
  }
  for (const auto& r : res) {
    if constexpr (is_exact_v<T>) {
      if (r != 0) throw ContractViolation("normal_derivative: input is not harmonic in the cell");
    } else {
      if (std::abs(r) > 1e-10 * std::max(1.0, scale_value)) {
        throw ContractViolation("normal_derivative: input is not harmonic in the cell");
      }
    }
  }
  auto sub = g.cell_corners(Word{i});
  const std::size_t c = static_cast<std::size_t>(i);
  const std::size_t next = static_cast<std::size_t>((i + 1) % 3);
  const std::size_t prev = static_cast<std::size_t>((i + 2) % 3);
  T diff = 2 * grid[static_cast<std::size_t>(g.grid_index(sub[c]))] - grid[static_cast<std::size_t>(g.grid_index(sub[next]))] -
           grid[static_cast<std::size_t>(g.grid_index(sub[prev]))];
  T inv_r = from_rational<T>(1 / g.renorm());
  return power(inv_r, m + 1) * diff;
}

/// Normal derivative at corner i of a harmonic cell given by its corner values
/// (depth m); one subdivision of the closed-form extension.
template <Scalar T>
T corner_derivative(const Gasket& g, const CellBoundaryValues<T>& corners, int i, int m) {
  T inv_r = from_rational<T>(1 / g.renorm());
  const std::size_t c = static_cast<std::size_t>(i);
  return power(inv_r, m) * (2 * corners[c] - corners[(c + 1) % 3] - corners[(c + 2) % 3]);
}

/// Harmonic function on Gamma_m with the given V_0 values, by repeated cell extension.
template <Scalar T>
GraphFunction<T> extend_to_level(const Gasket& g, int m, const CellBoundaryValues<T>& corners,
                                 std::shared_ptr<const Graph> graph = nullptr) {
  if (!graph) graph = std::make_shared<const Graph>(Graph::full(g, m));
  GraphFunction<T> f{graph, std::vector<T>(graph->size())};
  std::vector<char> done(graph->size(), 0);
  struct Item {
    Word w;
    CellBoundaryValues<T> c;
  };
  std::vector<Item> stack{{Word{}, corners}};
  while (!stack.empty()) {
    Item it = std::move(stack.back());
    stack.pop_back();
    if (static_cast<int>(it.w.size()) == m) {
      auto cs = g.cell_corners(it.w);
      for (int c = 0; c < 3; ++c) {
        auto idx = graph->find(cs[static_cast<std::size_t>(c)]);
        if (idx && !done[static_cast<std::size_t>(*idx)]) {
          f.values[static_cast<std::size_t>(*idx)] = it.c[static_cast<std::size_t>(c)];
          done[static_cast<std::size_t>(*idx)] = 1;
        }
      }
      continue;
    }
    auto grid = extend_cell(g, it.c);
    for (int i = g.map_count() - 1; i >= 0; --i) stack.push_back({it.w.then(i), subcell_corners(g, grid, i)});
  }
  return f;
}

}  // namespace gasket
