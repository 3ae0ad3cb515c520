#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "gasket/domain.hpp"
#include "gasket/energy.hpp"
#include "gasket/graph.hpp"

namespace gasket {

/// Graph-harmonic problem: prescribed values on B, mean-value equations elsewhere.
template <Scalar T>
struct DirichletProblem {
  std::shared_ptr<const Graph> graph;
  std::vector<char> boundary;
  std::vector<T> values;

  explicit DirichletProblem(std::shared_ptr<const Graph> g)
      : graph(std::move(g)), boundary(graph->size(), 0), values(graph->size(), ratio<T>(0)) {}

  void fix(int i, T v) {
    boundary[static_cast<std::size_t>(i)] = 1;
    values[static_cast<std::size_t>(i)] = std::move(v);
  }
};

struct SolveOptions {
  double tolerance = 1e-12;
  /// Iteration cap as a multiple of the number of unknowns.
  int max_iteration_factor = 20;
  /// Largest exact system attempted.
  std::size_t exact_limit = 20000;
};

struct SolveStats {
  std::size_t unknowns = 0;
  int iterations = 0;
  double relative_residual = 0;
};

namespace oracle_detail {

inline void check_components(const Graph& g, const std::vector<char>& boundary) {
  std::size_t n = g.size();
  if (std::none_of(boundary.begin(), boundary.end(), [](char c) { return c != 0; })) {
    throw SolvabilityError("Dirichlet problem with empty boundary");
  }
  std::vector<char> reached(n, 0);
  std::vector<int> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (boundary[i]) {
      reached[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  }
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (const auto& [y, w] : g.neighbors(x)) {
      if (!reached[static_cast<std::size_t>(y)]) {
        reached[static_cast<std::size_t>(y)] = 1;
        stack.push_back(y);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!reached[i]) throw SolvabilityError("interior component without boundary vertices");
  }
}

template <Scalar T>
std::vector<T> solve_exact(const DirichletProblem<T>& p, const std::vector<int>& unknown, const std::vector<int>& where) {
  const Graph& g = *p.graph;
  const std::size_t n = unknown.size();
  std::vector<std::map<int, T>> rows(n);
  std::vector<T> rhs(n, ratio<T>(0));
  for (std::size_t r = 0; r < n; ++r) {
    int x = unknown[r];
    T diag = ratio<T>(0);
    for (const auto& [y, w] : g.neighbors(x)) {
      T wt = from_rational<T>(w);
      diag += wt;
      int c = where[static_cast<std::size_t>(y)];
      if (c >= 0) {
        rows[r][c] -= wt;
      } else {
        rhs[r] += wt * p.values[static_cast<std::size_t>(y)];
      }
    }
    rows[r][static_cast<int>(r)] += diag;
  }
  // Minimum-degree elimination; the pattern stays symmetric.
  std::set<std::pair<std::size_t, int>> queue;
  for (std::size_t r = 0; r < n; ++r) queue.emplace(rows[r].size(), static_cast<int>(r));
  std::vector<int> order;
  order.reserve(n);
  while (!queue.empty()) {
    int piv = queue.begin()->second;
    queue.erase(queue.begin());
    auto& prow = rows[static_cast<std::size_t>(piv)];
    T pval = prow.at(piv);
    if (is_zero(pval)) throw SolvabilityError("zero pivot in exact elimination");
    for (const auto& entry : prow) {
      int j = entry.first;
      if (j == piv) continue;
      auto& jrow = rows[static_cast<std::size_t>(j)];
      queue.erase({jrow.size(), j});
      auto it = jrow.find(piv);
      T factor = it->second / pval;
      jrow.erase(it);
      for (const auto& [k, apk] : prow) {
        if (k == piv) continue;
        T& slot = jrow[k];
        slot -= factor * apk;
        if (is_zero(slot)) jrow.erase(k);
      }
      rhs[static_cast<std::size_t>(j)] -= factor * rhs[static_cast<std::size_t>(piv)];
      queue.emplace(jrow.size(), j);
    }
    order.push_back(piv);
  }
  std::vector<T> x(n, ratio<T>(0));
  for (std::size_t t = order.size(); t-- > 0;) {
    int r = order[t];
    const auto& row = rows[static_cast<std::size_t>(r)];
    T acc = rhs[static_cast<std::size_t>(r)];
    for (const auto& [c, a] : row) {
      if (c != r) acc -= a * x[static_cast<std::size_t>(c)];
    }
    x[static_cast<std::size_t>(r)] = acc / row.at(r);
  }
  return x;
}

inline std::vector<double> solve_cg(const DirichletProblem<double>& p, const std::vector<int>& unknown,
                                    const std::vector<int>& where, const SolveOptions& opt, SolveStats& stats) {
  const Graph& g = *p.graph;
  const std::size_t n = unknown.size();
  std::vector<std::size_t> start(n + 1, 0);
  std::vector<int> col;
  std::vector<double> val;
  std::vector<double> diag(n, 0.0), b(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    int x = unknown[r];
    for (const auto& [y, w] : g.neighbors(x)) {
      double wt = to_double(w);
      diag[r] += wt;
      int c = where[static_cast<std::size_t>(y)];
      if (c >= 0) {
        col.push_back(c);
        val.push_back(-wt);
      } else {
        b[r] += wt * p.values[static_cast<std::size_t>(y)];
      }
    }
    start[r + 1] = col.size();
  }
  auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
    for (std::size_t r = 0; r < n; ++r) {
      double acc = diag[r] * v[r];
      for (std::size_t k = start[r]; k < start[r + 1]; ++k) acc += val[k] * v[static_cast<std::size_t>(col[k])];
      out[r] = acc;
    }
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& c) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * c[i];
    return s;
  };
  std::vector<double> x(n, 0.0), r = b, z(n), q(n), ap(n);
  double bnorm = std::sqrt(dot(b, b));
  stats.unknowns = n;
  if (bnorm == 0.0) return x;
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  q = z;
  double rz = dot(r, z);
  const long cap = static_cast<long>(opt.max_iteration_factor) * static_cast<long>(std::max<std::size_t>(n, 1));
  for (long it = 1; it <= cap; ++it) {
    apply(q, ap);
    double alpha = rz / dot(q, ap);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * q[i];
      r[i] -= alpha * ap[i];
    }
    double rnorm = std::sqrt(dot(r, r));
    stats.iterations = static_cast<int>(it);
    stats.relative_residual = rnorm / bnorm;
    if (stats.relative_residual <= opt.tolerance) return x;
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    double rz_next = dot(r, z);
    double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) q[i] = z[i] + beta * q[i];
  }
  throw AccuracyError("conjugate gradient did not reach the residual tolerance");
}

}  // namespace oracle_detail

/// Solves the Dirichlet problem: exact elimination for rationals, CG otherwise.
template <Scalar T>
GraphFunction<T> solve(const DirichletProblem<T>& p, const SolveOptions& opt = {}, SolveStats* stats_out = nullptr) {
  const Graph& g = *p.graph;
  oracle_detail::check_components(g, p.boundary);
  std::vector<int> unknown;
  std::vector<int> where(g.size(), -1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!p.boundary[i]) {
      where[i] = static_cast<int>(unknown.size());
      unknown.push_back(static_cast<int>(i));
    }
  }
  SolveStats stats;
  stats.unknowns = unknown.size();
  std::vector<T> x;
  if constexpr (is_exact_v<T>) {
    if (unknown.size() > opt.exact_limit) throw CapabilityError("exact solve limited to " + std::to_string(opt.exact_limit) + " unknowns");
    x = oracle_detail::solve_exact(p, unknown, where);
  } else {
    x = oracle_detail::solve_cg(p, unknown, where, opt, stats);
  }
  GraphFunction<T> f{p.graph, p.values};
  for (std::size_t r = 0; r < unknown.size(); ++r) f.values[static_cast<std::size_t>(unknown[r])] = x[r];
  if (stats_out) *stats_out = stats;
  return f;
}

struct DomainGraphOptions {
  /// Replace inside cells that meet the boundary only at corners by weighted triangles.
  bool condense = true;
  /// Never condense cells shorter than this (keeps V_k points explicit).
  int keep_level = 0;
};

/// Level-m vertices of the cells contained in the domain closure, with boundary kinds.
struct DomainGraph {
  std::shared_ptr<const Graph> graph;
  std::vector<BoundaryKind> kinds;

  bool is_boundary(int i) const {
    auto k = kinds[static_cast<std::size_t>(i)];
    return k == BoundaryKind::cantor_boundary || k == BoundaryKind::corner_boundary;
  }

  template <Scalar T>
  DirichletProblem<T> problem(const std::function<T(LatticePoint)>& boundary_value) const {
    DirichletProblem<T> p(graph);
    for (std::size_t i = 0; i < graph->size(); ++i) {
      if (is_boundary(static_cast<int>(i))) p.fix(static_cast<int>(i), boundary_value(graph->points()[i]));
    }
    return p;
  }
};

inline DomainGraph domain_restricted_graph(const DomainGeometry& dom, int m, const DomainGraphOptions& opt = {}) {
  if (m < 1) throw ResolutionError("domain graphs need level m >= 1");
  const Gasket& g = dom.gasket();
  std::vector<Word> cells;
  std::function<void(const Word&)> visit = [&](const Word& w) {
    auto rel = dom.relation(w);
    if (rel == CellRelation::outside) return;
    int depth = static_cast<int>(w.size());
    if (rel == CellRelation::inside) {
      if (depth == m || (opt.condense && depth >= opt.keep_level && dom.condensable(w))) {
        cells.push_back(w);
        return;
      }
    }
    if (depth == m) return;
    for (int i = 0; i < g.map_count(); ++i) visit(w.then(i));
  };
  visit(Word{});
  if (cells.empty()) throw ResolutionError("no level-" + std::to_string(m) + " cell lies in the domain");
  DomainGraph out;
  out.graph = std::make_shared<const Graph>(Graph::from_cells(g, m, cells));
  out.kinds.reserve(out.graph->size());
  bool any_boundary = false;
  for (const auto& p : out.graph->points()) {
    auto q = g.normalize(p);
    BoundaryKind k;
    if (dom.is_half() ? q == Gasket::corner(1)
                      : dom.is_upper() ? q == Gasket::corner(0) : (q == Gasket::corner(1) || q == Gasket::corner(2))) {
      k = BoundaryKind::corner_boundary;
    } else {
      k = dom.side(q) < 0 ? BoundaryKind::interior : BoundaryKind::cantor_boundary;
    }
    any_boundary = any_boundary || k != BoundaryKind::interior;
    out.kinds.push_back(k);
  }
  if (!any_boundary) throw ResolutionError("domain graph has no boundary vertices");
  return out;
}

}  // namespace gasket
