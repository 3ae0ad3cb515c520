#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gasket/errors.hpp"
#include "gasket/numeric.hpp"

namespace gasket {

/// Finite digit string addressing the cell F_w = F_{w_1} o ... o F_{w_n}.
class Word {
 public:
  Word() = default;
  Word(std::initializer_list<int> digits) {
    for (int d : digits) digits_.push_back(static_cast<std::uint8_t>(d));
  }
  explicit Word(std::vector<std::uint8_t> digits) : digits_(std::move(digits)) {}

  /// Digits are written as 0-9 then a-z; "" is the empty word.
  static Word parse(std::string_view text, int map_count) {
    Word w;
    for (char c : text) {
      int d = -1;
      if (c >= '0' && c <= '9') d = c - '0';
      if (c >= 'a' && c <= 'z') d = 10 + (c - 'a');
      if (d < 0 || d >= map_count) {
        throw AddressError("digit '" + std::string(1, c) + "' out of range in word '" +
                           std::string(text) + "'");
      }
      w.digits_.push_back(static_cast<std::uint8_t>(d));
    }
    return w;
  }

  std::size_t size() const { return digits_.size(); }
  bool empty() const { return digits_.empty(); }
  int operator[](std::size_t i) const { return digits_[i]; }
  const std::vector<std::uint8_t>& digits() const { return digits_; }

  Word then(int digit) const {
    Word w = *this;
    w.digits_.push_back(static_cast<std::uint8_t>(digit));
    return w;
  }
  Word concat(const Word& tail) const {
    Word w = *this;
    w.digits_.insert(w.digits_.end(), tail.digits_.begin(), tail.digits_.end());
    return w;
  }
  Word prefix(std::size_t n) const {
    return Word(std::vector<std::uint8_t>(digits_.begin(),
                                          digits_.begin() + static_cast<long>(std::min(n, size()))));
  }
  Word drop(std::size_t n) const {
    return Word(std::vector<std::uint8_t>(digits_.begin() + static_cast<long>(std::min(n, size())),
                                          digits_.end()));
  }
  bool starts_with(const Word& p) const {
    return p.size() <= size() && std::equal(p.digits_.begin(), p.digits_.end(), digits_.begin());
  }

  std::string str() const {
    std::string s;
    for (auto d : digits_) s.push_back(d < 10 ? static_cast<char>('0' + d) : static_cast<char>('a' + d - 10));
    return s;
  }

  auto operator<=>(const Word&) const = default;
  bool operator==(const Word&) const = default;

 private:
  std::vector<std::uint8_t> digits_;
};

/// Grid point b*q2 + c*q0 + (1-b-c)*q1 with b = u / l^level, c = v / l^level.
struct LatticePoint {
  int level = 0;
  std::int64_t u = 0;
  std::int64_t v = 0;
  auto operator<=>(const LatticePoint&) const = default;
};

/// Exact planar point in the coordinates q0=(1,2), q1=(0,0), q2=(2,0).
struct Point2 {
  Rational x;
  Rational y;
  bool operator==(const Point2&) const = default;
};

/// A corner of the cell F_w; several addresses may name one point.
struct VertexAddress {
  Word word;
  int corner = 0;
  auto operator<=>(const VertexAddress&) const = default;
  bool operator==(const VertexAddress&) const = default;
  std::string str() const { return word.str() + ":" + std::to_string(corner); }
};

/// Level-l Sierpinski gasket: maps, vertex lattice and addressing.
///
/// Map numbering: F_0, F_1, F_2 fix q0, q1, q2. For l = 3 the remaining maps
/// are F_3 (bottom middle), F_4 (right middle), F_5 (left middle); for other l
/// they are numbered row by row from the top, left to right.
class Gasket {
 public:
  static constexpr int kMaxLevel = 8;

  explicit Gasket(int l) : l_(l) {
    if (l < 2 || l > kMaxLevel) {
      throw CapabilityError("gasket level l=" + std::to_string(l) + " outside [2, 8]");
    }
    map_count_ = (l * l + l) / 2;
    table_.assign(static_cast<std::size_t>(l * l), -1);
    offsets_.resize(static_cast<std::size_t>(map_count_));
    auto assign = [&](int index, int k, int s) {
      offsets_[static_cast<std::size_t>(index)] = {k, s};
      table_[static_cast<std::size_t>(s * l + k)] = index;
    };
    assign(0, 0, l - 1);
    assign(1, 0, 0);
    assign(2, l - 1, 0);
    if (l == 3) {
      assign(3, 1, 0);
      assign(4, 1, 1);
      assign(5, 0, 1);
    } else {
      int next = 3;
      for (int s = l - 1; s >= 0; --s) {
        for (int k = 0; k + s <= l - 1; ++k) {
          if (table_[static_cast<std::size_t>(s * l + k)] < 0) assign(next++, k, s);
        }
      }
    }
    renorm_ = l == 2 ? Rational(3) / 5 : l == 3 ? Rational(7) / 15 : trace_renorm();
  }

  int l() const { return l_; }
  int map_count() const { return map_count_; }
  /// Renormalization factor r of the symmetric harmonic structure.
  const Rational& renorm() const { return renorm_; }

  std::int64_t scale(int level) const {
    std::int64_t s = 1;
    for (int i = 0; i < level; ++i) s *= l_;
    return s;
  }

  /// Column k and row s (from the bottom) of the level-1 cell F_i.
  std::array<int, 2> offset(int i) const {
    check_digit(i);
    return offsets_[static_cast<std::size_t>(i)];
  }
  /// Map index of the level-1 cell at column k, row s, or -1 if none.
  int map_at(std::int64_t k, std::int64_t s) const {
    if (k < 0 || s < 0 || k + s > l_ - 1) return -1;
    return table_[static_cast<std::size_t>(s * l_ + k)];
  }

  void check_digit(int i) const {
    if (i < 0 || i >= map_count_) {
      throw AddressError("map index " + std::to_string(i) + " out of range for l=" + std::to_string(l_));
    }
  }
  void check_word(const Word& w) const {
    for (std::size_t i = 0; i < w.size(); ++i) check_digit(w[i]);
  }

  static LatticePoint corner(int i) {
    switch (i) {
      case 0: return {0, 0, 1};
      case 1: return {0, 0, 0};
      case 2: return {0, 1, 0};
      default: throw AddressError("corner index must be 0, 1 or 2");
    }
  }

  LatticePoint apply(int i, LatticePoint p) const {
    auto [k, s] = offset(i);
    std::int64_t n = scale(p.level);
    return {p.level + 1, p.u + k * n, p.v + s * n};
  }

  LatticePoint apply_word(const Word& w, LatticePoint p) const {
    for (std::size_t i = w.size(); i-- > 0;) p = apply(w[i], p);
    return p;
  }

  Point2 apply_word(const Word& w, const Point2& p) const {
    check_word(w);
    Rational c = p.y / 2;
    Rational b = (p.x - c) / 2;
    for (std::size_t i = w.size(); i-- > 0;) {
      auto [k, s] = offsets_[static_cast<std::size_t>(w[i])];
      b = (b + k) / l_;
      c = (c + s) / l_;
    }
    return {2 * b + c, 2 * c};
  }

  Point2 coordinates(LatticePoint p) const {
    Rational n(scale(p.level));
    Rational b = Rational(p.u) / n;
    Rational c = Rational(p.v) / n;
    return {2 * b + c, 2 * c};
  }

  static Point2 corner_point(int i) {
    switch (i) {
      case 0: return {Rational(1), Rational(2)};
      case 1: return {Rational(0), Rational(0)};
      case 2: return {Rational(2), Rational(0)};
      default: throw AddressError("corner index must be 0, 1 or 2");
    }
  }

  LatticePoint lift(LatticePoint p, int level) const {
    if (level < p.level) throw LevelMismatch("cannot lift a point to a coarser level");
    std::int64_t f = scale(level - p.level);
    return {level, p.u * f, p.v * f};
  }

  LatticePoint normalize(LatticePoint p) const {
    while (p.level > 0 && p.u % l_ == 0 && p.v % l_ == 0) {
      p = {p.level - 1, p.u / l_, p.v / l_};
    }
    return p;
  }

  bool same_point(LatticePoint a, LatticePoint b) const { return normalize(a) == normalize(b); }

  /// Word of the level-n cell whose q1 corner is (u, v) at level n.
  std::optional<Word> cell_word(int level, std::int64_t u, std::int64_t v) const {
    if (u < 0 || v < 0) return std::nullopt;
    std::int64_t n = scale(level);
    if (u >= n || v >= n) return std::nullopt;
    std::vector<std::uint8_t> digits(static_cast<std::size_t>(level));
    for (int t = level - 1; t >= 0; --t) {
      int i = map_at(u % l_, v % l_);
      if (i < 0) return std::nullopt;
      digits[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(i);
      u /= l_;
      v /= l_;
    }
    return Word(std::move(digits));
  }

  /// q1 corner of F_w at level |w|.
  LatticePoint cell_origin(const Word& w) const { return apply_word(w, corner(1)); }

  std::array<LatticePoint, 3> cell_corners(const Word& w) const {
    return {apply_word(w, corner(0)), apply_word(w, corner(1)), apply_word(w, corner(2))};
  }

  LatticePoint resolve(const VertexAddress& a) const {
    check_word(a.word);
    return apply_word(a.word, corner(a.corner));
  }

  /// Lexicographically least (word, corner) naming p; the shortest word wins.
  VertexAddress canonical(LatticePoint p) const {
    auto found = try_canonical(p);
    if (!found) throw AddressError("point is not a vertex of the gasket");
    return *found;
  }

  VertexAddress canonical(const VertexAddress& a) const { return canonical(resolve(a)); }

  bool is_vertex(LatticePoint p) const { return try_canonical(p).has_value(); }

  std::optional<VertexAddress> try_canonical(LatticePoint p) const {
    p = normalize(p);
    std::optional<VertexAddress> best;
    auto consider = [&](std::int64_t u, std::int64_t v, int corner_index) {
      if (auto w = cell_word(p.level, u, v)) {
        VertexAddress a{*w, corner_index};
        if (!best || a < *best) best = a;
      }
    };
    consider(p.u, p.v, 1);
    consider(p.u - 1, p.v, 2);
    consider(p.u, p.v - 1, 0);
    return best;
  }

  /// Local coordinates of p inside the level-1 subcell F_i, p given at level >= 1.
  /// Returns null when p is not in that subcell's triangle.
  std::optional<LatticePoint> to_local(int i, LatticePoint p) const {
    if (p.level < 1) p = lift(p, 1);
    auto [k, s] = offset(i);
    std::int64_t n = scale(p.level - 1);
    LatticePoint q{p.level - 1, p.u - k * n, p.v - s * n};
    if (q.u < 0 || q.v < 0 || q.u + q.v > n) return std::nullopt;
    return q;
  }

  std::optional<LatticePoint> to_local(const Word& w, LatticePoint p) const {
    for (std::size_t t = 0; t < w.size(); ++t) {
      auto q = to_local(w[t], p);
      if (!q) return std::nullopt;
      p = *q;
    }
    return p;
  }

  /// Picks a level-1 subcell containing p (p not a level-1 grid point).
  std::optional<int> locate(LatticePoint p) const {
    if (p.level < 1) return std::nullopt;
    std::int64_t n = scale(p.level - 1);
    std::int64_t k = p.u / n;
    std::int64_t s = p.v / n;
    std::int64_t du = p.u - k * n;
    std::int64_t dv = p.v - s * n;
    if (du + dv > n) return std::nullopt;
    int i = map_at(k, s);
    if (i < 0) return std::nullopt;
    return i;
  }

  /// Index of a level-1 grid point (u, v) with u + v <= l.
  int grid_index(std::int64_t u, std::int64_t v) const {
    int offset = 0;
    for (std::int64_t r = 0; r < v; ++r) offset += static_cast<int>(l_ + 1 - r);
    return offset + static_cast<int>(u);
  }
  int grid_size() const { return (l_ + 1) * (l_ + 2) / 2; }
  int grid_index(LatticePoint p) const {
    p = normalize(p);
    if (p.level > 1) return -1;
    p = lift(p, 1);
    return grid_index(p.u, p.v);
  }

  std::vector<LatticePoint> grid_points() const {
    std::vector<LatticePoint> pts;
    for (std::int64_t v = 0; v <= l_; ++v) {
      for (std::int64_t u = 0; u + v <= l_; ++u) pts.push_back({1, u, v});
    }
    return pts;
  }

  /// Edges of Gamma_1 as pairs of grid indices.
  std::vector<std::array<int, 2>> grid_edges() const {
    std::vector<std::array<int, 2>> edges;
    for (int i = 0; i < map_count_; ++i) {
      auto cs = cell_corners(Word{i});
      int a = grid_index(cs[0]), b = grid_index(cs[1]), c = grid_index(cs[2]);
      edges.push_back({a, b});
      edges.push_back({b, c});
      edges.push_back({a, c});
    }
    return edges;
  }

  /// r from the trace of unit-weight Gamma_1 onto V_0 (exact).
  Rational trace_renorm() const {
    // Trace of unit-weight Gamma_1 onto V_0 for data (1,0,0): energy 2r.
    int n = grid_size();
    std::vector<int> idx(static_cast<std::size_t>(n), -1);
    std::vector<int> fixed(static_cast<std::size_t>(n), -1);
    fixed[static_cast<std::size_t>(grid_index(0, l_))] = 1;
    fixed[static_cast<std::size_t>(grid_index(0, 0))] = 0;
    fixed[static_cast<std::size_t>(grid_index(l_, 0))] = 0;
    int unknowns = 0;
    for (int i = 0; i < n; ++i) {
      if (fixed[static_cast<std::size_t>(i)] < 0) idx[static_cast<std::size_t>(i)] = unknowns++;
    }
    std::vector<std::vector<Rational>> a(static_cast<std::size_t>(unknowns),
                                         std::vector<Rational>(static_cast<std::size_t>(unknowns)));
    std::vector<Rational> rhs(static_cast<std::size_t>(unknowns));
    auto edges = grid_edges();
    for (auto [p, q] : edges) {
      for (auto [x, y] : {std::array<int, 2>{p, q}, std::array<int, 2>{q, p}}) {
        int ix = idx[static_cast<std::size_t>(x)];
        if (ix < 0) continue;
        a[static_cast<std::size_t>(ix)][static_cast<std::size_t>(ix)] += 1;
        int iy = idx[static_cast<std::size_t>(y)];
        if (iy >= 0) {
          a[static_cast<std::size_t>(ix)][static_cast<std::size_t>(iy)] -= 1;
        } else {
          rhs[static_cast<std::size_t>(ix)] += fixed[static_cast<std::size_t>(y)];
        }
      }
    }
    auto x = solve_dense<Rational>(a, rhs);
    std::vector<Rational> value(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      value[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i)] >= 0
                                               ? x[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]
                                               : Rational(fixed[static_cast<std::size_t>(i)]);
    }
    Rational energy = 0;
    for (auto [p, q] : edges) {
      Rational d = value[static_cast<std::size_t>(p)] - value[static_cast<std::size_t>(q)];
      energy += d * d;
    }
    return energy / 2;
  }

 private:
  int l_;
  int map_count_;
  std::vector<int> table_;
  std::vector<std::array<int, 2>> offsets_;
  Rational renorm_;
};

}  // namespace gasket
