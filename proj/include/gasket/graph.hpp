#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gasket/geometry.hpp"

namespace gasket {

struct Edge {
  int a = 0;
  int b = 0;
  /// Conductance relative to a single level-m edge.
  Rational weight = 1;
};

/// Graph on the corners of a set of cells, addressed at a common level m.
///
/// Gamma_m is the case where every cell has length m. Coarser cells stand for
/// their whole subtree: their corners are joined with conductance r^(m-|w|),
/// which is the trace of Gamma_m on them.
class Graph {
 public:
  static Graph full(const Gasket& g, int m) {
    if (m < 0) throw ContractViolation("graph level must be nonnegative");
    std::vector<Word> cells;
    Word w;
    enumerate(g, m, w, cells);
    return from_cells(g, m, cells);
  }

  static Graph from_cells(const Gasket& g, int m, const std::vector<Word>& cells) {
    Graph graph(g, m);
    std::unordered_map<std::uint64_t, int> provisional;
    std::vector<LatticePoint> pts;
    struct RawEdge {
      int a, b;
      int depth;
    };
    std::vector<RawEdge> raw;
    for (const auto& w : cells) {
      if (static_cast<int>(w.size()) > m) throw LevelMismatch("cell deeper than graph level");
      auto cs = g.cell_corners(w);
      int ids[3];
      for (int c = 0; c < 3; ++c) {
        LatticePoint p = g.lift(cs[static_cast<std::size_t>(c)], m);
        auto key = graph.key(p);
        auto it = provisional.find(key);
        if (it == provisional.end()) {
          it = provisional.emplace(key, static_cast<int>(pts.size())).first;
          pts.push_back(p);
        }
        ids[c] = it->second;
      }
      int depth = static_cast<int>(w.size());
      raw.push_back({ids[0], ids[1], depth});
      raw.push_back({ids[1], ids[2], depth});
      raw.push_back({ids[0], ids[2], depth});
    }
    // Canonical vertex order: sort by canonical address.
    std::vector<VertexAddress> addr(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) addr[i] = g.canonical(pts[i]);
    std::vector<int> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      return addr[static_cast<std::size_t>(x)] < addr[static_cast<std::size_t>(y)];
    });
    std::vector<int> remap(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) remap[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    graph.points_.resize(pts.size());
    graph.addresses_.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      graph.points_[static_cast<std::size_t>(remap[i])] = pts[i];
      graph.addresses_[static_cast<std::size_t>(remap[i])] = addr[i];
    }
    for (std::size_t i = 0; i < graph.points_.size(); ++i) {
      graph.index_.emplace(graph.key(graph.points_[i]), static_cast<int>(i));
    }
    std::map<std::pair<int, int>, int> seen;
    for (auto e : raw) {
      int a = remap[static_cast<std::size_t>(e.a)], b = remap[static_cast<std::size_t>(e.b)];
      if (a > b) std::swap(a, b);
      // Distinct cells of the gasket meet in at most one point, so edges never repeat.
      if (!seen.emplace(std::pair{a, b}, e.depth).second) {
        throw ContractViolation("duplicate edge: overlapping cells");
      }
    }
    for (const auto& [ab, depth] : seen) {
      Rational w = 1;
      for (int k = depth; k < m; ++k) w *= g.renorm();
      graph.edges_.push_back({ab.first, ab.second, w});
    }
    graph.cells_ = cells;
    graph.build_adjacency();
    return graph;
  }

  const Gasket& gasket() const { return gasket_; }
  int level() const { return level_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<LatticePoint>& points() const { return points_; }
  const std::vector<VertexAddress>& addresses() const { return addresses_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Word>& cells() const { return cells_; }
  /// Neighbors of vertex i with the edge conductance.
  const std::vector<std::pair<int, Rational>>& neighbors(int i) const {
    return adjacency_[static_cast<std::size_t>(i)];
  }
  bool unit_weights() const {
    return std::all_of(edges_.begin(), edges_.end(), [](const Edge& e) { return e.weight == 1; });
  }

  std::optional<int> find(LatticePoint p) const {
    p = gasket_.normalize(p);
    if (p.level > level_) return std::nullopt;
    auto it = index_.find(key(gasket_.lift(p, level_)));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<int> find(const VertexAddress& a) const { return find(gasket_.resolve(a)); }

  /// Edge list: header then one `vertex_id,vertex_id[,weight]` line per edge.
  void write_edges_csv(std::ostream& out) const {
    bool weighted = !unit_weights();
    out << (weighted ? "vertex_id,vertex_id,weight\n" : "vertex_id,vertex_id\n");
    for (const auto& e : edges_) {
      out << e.a << ',' << e.b;
      if (weighted) out << ',' << format_number(e.weight);
      out << '\n';
    }
  }

  /// Sidecar: `vertex_id,word,corner,x,y` with exact coordinates.
  void write_vertices_csv(std::ostream& out) const {
    out << "vertex_id,word,corner,x,y\n";
    for (std::size_t i = 0; i < points_.size(); ++i) {
      auto xy = gasket_.coordinates(points_[i]);
      out << i << ',' << addresses_[i].word.str() << ',' << addresses_[i].corner << ','
          << format_number(xy.x) << ',' << format_number(xy.y) << '\n';
    }
  }

 private:
  Graph(const Gasket& g, int m) : gasket_(g), level_(m) {}

  std::uint64_t key(LatticePoint p) const {
    return static_cast<std::uint64_t>(p.u) * (static_cast<std::uint64_t>(gasket_.scale(level_)) + 1) +
           static_cast<std::uint64_t>(p.v);
  }

  static void enumerate(const Gasket& g, int m, Word& w, std::vector<Word>& out) {
    if (static_cast<int>(w.size()) == m) {
      out.push_back(w);
      return;
    }
    for (int i = 0; i < g.map_count(); ++i) {
      Word next = w.then(i);
      enumerate(g, m, next, out);
    }
  }

  void build_adjacency() {
    adjacency_.assign(points_.size(), {});
    for (const auto& e : edges_) {
      adjacency_[static_cast<std::size_t>(e.a)].push_back({e.b, e.weight});
      adjacency_[static_cast<std::size_t>(e.b)].push_back({e.a, e.weight});
    }
  }

  Gasket gasket_;
  int level_;
  std::vector<LatticePoint> points_;
  std::vector<VertexAddress> addresses_;
  std::vector<Edge> edges_;
  std::vector<Word> cells_;
  std::vector<std::vector<std::pair<int, Rational>>> adjacency_;
  std::unordered_map<std::uint64_t, int> index_;
};

/// Plain edge list read back from CSV; vertex ids are 0..n-1.
struct EdgeList {
  std::size_t vertex_count = 0;
  std::vector<Edge> edges;
};

namespace csv_detail {
inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
inline long parse_id(const std::string& s, int line) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument("id");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line) + ": bad vertex id '" + s + "'");
  }
}
}  // namespace csv_detail

inline EdgeList read_edges_csv(std::istream& in) {
  EdgeList list;
  std::string line;
  int lineno = 0;
  long max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("vertex_id", 0) == 0) continue;
    auto cells = csv_detail::split(line);
    if (cells.size() != 2 && cells.size() != 3) {
      throw DataError("line " + std::to_string(lineno) + ": expected 2 or 3 columns");
    }
    Edge e;
    e.a = static_cast<int>(csv_detail::parse_id(cells[0], lineno));
    e.b = static_cast<int>(csv_detail::parse_id(cells[1], lineno));
    if (cells.size() == 3) e.weight = parse_rational(cells[2]);
    max_id = std::max<long>(max_id, std::max(e.a, e.b));
    list.edges.push_back(e);
  }
  list.vertex_count = static_cast<std::size_t>(max_id + 1);
  return list;
}

/// `vertex_id,value` table.
inline std::vector<std::pair<int, Rational>> read_values_csv(std::istream& in) {
  std::vector<std::pair<int, Rational>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("vertex_id", 0) == 0) continue;
    auto cells = csv_detail::split(line);
    if (cells.size() != 2) throw DataError("line " + std::to_string(lineno) + ": expected 2 columns");
    int id = static_cast<int>(csv_detail::parse_id(cells[0], lineno));
    try {
      rows.emplace_back(id, parse_rational(cells[1]));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace gasket
