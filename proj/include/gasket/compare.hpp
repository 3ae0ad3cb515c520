#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <future>
#include <thread>
#include <vector>

#include "gasket/oracle.hpp"

namespace gasket {

/// Evaluator-vs-oracle discrepancy at the probe vertices of one oracle level.
struct LevelDiscrepancy {
  int level = 0;
  std::size_t points = 0;
  std::size_t unknowns = 0;
  double max_abs = 0;
  double mean_abs = 0;
  /// Every probe agrees exactly (rational mode only).
  bool exact = false;
};

struct CompareOptions {
  /// Probe vertices of level at most this (after normalization); negative probes every vertex.
  int probe_level = -1;
  DomainGraphOptions graph{};
  SolveOptions solve{};
  /// Parallel level runs; zero reads GASKET_NUM_THREADS, then the hardware count.
  unsigned threads = 0;
};

inline unsigned worker_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GASKET_NUM_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Solves the domain graph at one level and compares interior probe vertices with `eval`.
template <Scalar T>
LevelDiscrepancy compare_level(const DomainGeometry& dom, int m, const std::function<T(LatticePoint)>& boundary,
                               const std::function<T(LatticePoint)>& eval, const CompareOptions& opt) {
  auto dg = domain_restricted_graph(dom, m, opt.graph);
  SolveStats stats;
  auto sol = solve(dg.problem<T>(boundary), opt.solve, &stats);
  const Gasket& g = dom.gasket();
  LevelDiscrepancy out;
  out.level = m;
  out.unknowns = stats.unknowns;
  out.exact = is_exact_v<T>;
  double total = 0;
  for (std::size_t i = 0; i < dg.graph->size(); ++i) {
    if (dg.is_boundary(static_cast<int>(i))) continue;
    auto p = dg.graph->points()[i];
    if (opt.probe_level >= 0 && g.normalize(p).level > opt.probe_level) continue;
    T diff = sol.values[i] - eval(p);
    if (!is_zero(diff)) out.exact = false;
    double d = std::abs(to_double(diff));
    out.max_abs = std::max(out.max_abs, d);
    total += d;
    ++out.points;
  }
  if (out.points == 0) throw ResolutionError("no probe vertices at level " + std::to_string(m));
  out.mean_abs = total / static_cast<double>(out.points);
  return out;
}

/// compare_level over each level; independent levels run concurrently.
template <Scalar T>
std::vector<LevelDiscrepancy> compare_levels(const DomainGeometry& dom, const std::vector<int>& levels,
                                             const std::function<T(LatticePoint)>& boundary,
                                             const std::function<T(LatticePoint)>& eval, const CompareOptions& opt = {}) {
  std::vector<LevelDiscrepancy> out(levels.size());
  unsigned workers = std::min<unsigned>(worker_count(opt.threads), static_cast<unsigned>(std::max<std::size_t>(levels.size(), 1)));
  std::size_t next = 0;
  while (next < levels.size()) {
    std::vector<std::future<LevelDiscrepancy>> batch;
    std::size_t start = next;
    for (unsigned k = 0; k < workers && next < levels.size(); ++k, ++next) {
      int m = levels[next];
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                 [&, m] { return compare_level<T>(dom, m, boundary, eval, opt); }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) out[start + k] = batch[k].get();
  }
  return out;
}

/// Max discrepancy strictly decreases from level to level.
inline bool strictly_decreasing(const std::vector<LevelDiscrepancy>& r) {
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (!(r[i].max_abs < r[i - 1].max_abs)) return false;
  }
  return true;
}

}  // namespace gasket
