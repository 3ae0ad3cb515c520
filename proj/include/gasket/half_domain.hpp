#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "gasket/energy.hpp"
#include "gasket/geometry.hpp"

namespace gasket {

enum class HalfPoint { q1, q0, atom, interior, outside };

/// Where a vertex sits relative to the half domain; atoms are p_{j,w}.
struct HalfLocation {
  HalfPoint kind = HalfPoint::outside;
  Word word;
  int j = 0;
};

/// Cells, atoms and weights of the half domain of SG_l: the part left of the
/// line through q0 and the midpoint of q1 q2, where h_a = (0, 1, -1) is positive.
///
/// Level-1 cell (k, s) lies inside when 2k + s + 2 <= l and straddles the
/// line when 2k + s = l - 1; the straddling cells are scaled half domains.
/// Atoms p_{j,0} = (j, l - 2j) in level-1 grid units, top to bottom.
class HalfGeometry {
 public:
  explicit HalfGeometry(int l) : g_(l) {
    ha_ = apply_extension(extension_matrix(g_), CellBoundaryValues<Rational>{0, 1, -1});
    is_full_.assign(static_cast<std::size_t>(g_.map_count()), 0);
    digit_slot_.assign(static_cast<std::size_t>(g_.map_count()), -1);
    for (int i = 0; i < g_.map_count(); ++i) {
      auto [k, s] = g_.offset(i);
      int t = 2 * k + s;
      if (t + 2 <= l) {
        full_.push_back(i);
        is_full_[static_cast<std::size_t>(i)] = 1;
      } else if (t == l - 1) {
        digit_slot_[static_cast<std::size_t>(i)] = static_cast<int>(alphabet_.size());
        alphabet_.push_back(i);
      }
    }
    const Rational inv_r = 1 / g_.renorm();
    for (int i : alphabet_) {
      weights_.push_back(inv_r * ha_[static_cast<std::size_t>(g_.grid_index(g_.cell_origin(Word{i})))]);
      weight_sum_ += weights_.back();
    }
    for (int j = 1; 2 * j <= l; ++j) {
      LatticePoint p{1, j, l - 2 * j};
      Rational d = 0;
      for (int c : full_) {
        auto cs = g_.cell_corners(Word{c});
        for (int k = 0; k < 3; ++k) {
          if (cs[static_cast<std::size_t>(k)] != p) continue;
          Rational next = ha_[static_cast<std::size_t>(g_.grid_index(cs[static_cast<std::size_t>((k + 1) % 3)]))];
          Rational prev = ha_[static_cast<std::size_t>(g_.grid_index(cs[static_cast<std::size_t>((k + 2) % 3)]))];
          d += inv_r * (2 * ha_[static_cast<std::size_t>(g_.grid_index(p))] - next - prev);
        }
      }
      base_mass_.push_back(-d / 3);
      mass_sum_ += base_mass_.back();
    }
    attached_.assign(static_cast<std::size_t>(g_.map_count()), 0);
    for (int i : alphabet_) attached_[static_cast<std::size_t>(i)] = g_.offset(i)[0];
    for (auto p : g_.grid_points()) {
      if (2 * p.u + p.v < l && !(p.u == 0 && p.v == 0)) unknowns_.push_back(g_.grid_index(p));
    }
    solve_extension();
  }

  const Gasket& gasket() const { return g_; }
  int l() const { return g_.l(); }
  /// Straddling maps W~_1, ascending.
  const std::vector<int>& alphabet() const { return alphabet_; }
  /// Level-1 cells contained in the closed domain (they make up O_1).
  const std::vector<int>& full_cells() const { return full_; }
  bool is_full(int i) const { return is_full_[static_cast<std::size_t>(i)] != 0; }
  bool in_alphabet(int i) const { return i >= 0 && i < g_.map_count() && digit_slot_[static_cast<std::size_t>(i)] >= 0; }
  int atom_count() const { return static_cast<int>(base_mass_.size()); }
  LatticePoint atom_point(int j) const { return {1, j, l() - 2 * j}; }

  /// mu_i = h_a(F_i q1) / r, aligned with alphabet().
  const std::vector<Rational>& digit_weights() const { return weights_; }
  Rational digit_weight(int i) const {
    check_digit(i);
    return weights_[static_cast<std::size_t>(digit_slot_[static_cast<std::size_t>(i)])];
  }
  const Rational& weight_sum() const { return weight_sum_; }
  /// Masses of p_{j,0}, j = 1..atom_count(), from the inward normal derivative of h_a.
  const std::vector<Rational>& base_masses() const { return base_mass_; }
  const Rational& base_mass_sum() const { return mass_sum_; }
  /// Total mass of all atoms; exactly 1 for a probability measure.
  Rational total_mass() const { return mass_sum_ / (1 - weight_sum_); }

  Rational word_weight(const Word& w) const {
    Rational m = 1;
    for (std::size_t k = 0; k < w.size(); ++k) m *= digit_weight(w[k]);
    return m;
  }

  Rational atom_mass(const Word& w, int j) const {
    check_atom(j);
    return word_weight(w) * base_mass_[static_cast<std::size_t>(j - 1)];
  }

  /// Mass of the atoms p_{j,w} with |w| >= d.
  Rational residual_mass(int d) const { return power(weight_sum_, d); }

  /// h_a on the level-1 grid (grid order).
  const std::vector<Rational>& antisymmetric_grid() const { return ha_; }

  /// Grid indices of the level-1 unknowns: points strictly left of the line other than q1.
  const std::vector<int>& unknowns() const { return unknowns_; }
  /// Inputs are (value at q1, atoms p_{1..J}, integrals over F_i X for i in the alphabet).
  std::size_t input_count() const { return 1 + base_mass_.size() + alphabet_.size(); }
  /// Row per unknown: coefficients of the inputs.
  const std::vector<std::vector<Rational>>& extension_coefficients() const { return coef_; }

  /// j with F_i q0 = p_{j,0}; 0 when F_i q0 = q0.
  int attached_atom(int i) const { return attached_[static_cast<std::size_t>(i)]; }

  /// F_w q0 as q0 or an atom.
  HalfLocation q0_image(Word w) const {
    auto digits = w.digits();
    while (!digits.empty() && digits.back() == 0) digits.pop_back();
    if (digits.empty()) return {HalfPoint::q0, Word{}, 0};
    int i = digits.back();
    digits.pop_back();
    return {HalfPoint::atom, Word(std::move(digits)), attached_atom(i)};
  }

  HalfLocation locate(LatticePoint p) const {
    if (!g_.is_vertex(p)) throw AddressError("point is not a vertex of the gasket");
    p = g_.normalize(p);
    std::vector<std::uint8_t> w;
    while (true) {
      if (p == Gasket::corner(1)) return {w.empty() ? HalfPoint::q1 : HalfPoint::interior, Word(w), 0};
      if (p == Gasket::corner(0)) return q0_image(Word(w));
      if (p == Gasket::corner(2)) return {HalfPoint::outside, Word(w), 0};
      std::int64_t side = 2 * p.u + p.v - g_.scale(p.level);
      if (side > 0) return {HalfPoint::outside, Word(w), 0};
      if (p.level == 1) {
        if (side == 0) return {HalfPoint::atom, Word(w), static_cast<int>(p.u)};
        return {HalfPoint::interior, Word(w), 0};
      }
      auto i = g_.locate(p);
      if (!i) throw AddressError("point is not a vertex of the gasket");
      if (is_full(*i)) return {HalfPoint::interior, Word(w), 0};
      if (!in_alphabet(*i)) return {HalfPoint::outside, Word(w), 0};
      w.push_back(static_cast<std::uint8_t>(*i));
      p = g_.normalize(*g_.to_local(*i, p));
    }
  }

  void check_digit(int i) const {
    if (!in_alphabet(i)) throw AddressError("digit " + std::to_string(i) + " is not a straddling map of the half domain");
  }
  void check_word(const Word& w) const {
    for (std::size_t k = 0; k < w.size(); ++k) check_digit(w[k]);
  }
  void check_atom(int j) const {
    if (j < 1 || j > atom_count()) throw AddressError("atom index " + std::to_string(j) + " out of range");
  }

 private:
  void solve_extension() {
    const std::size_t n = unknowns_.size();
    std::vector<int> row_of(static_cast<std::size_t>(g_.grid_size()), -1);
    for (std::size_t r = 0; r < n; ++r) row_of[static_cast<std::size_t>(unknowns_[r])] = static_cast<int>(r);
    std::vector<int> input_of(static_cast<std::size_t>(g_.grid_size()), -1);
    input_of[static_cast<std::size_t>(g_.grid_index(0, 0))] = 0;
    for (int j = 1; j <= atom_count(); ++j) input_of[static_cast<std::size_t>(g_.grid_index(atom_point(j)))] = j;
    std::vector<std::vector<Rational>> a(n, std::vector<Rational>(n));
    std::vector<std::vector<Rational>> b(n, std::vector<Rational>(input_count()));
    for (int c : full_) {
      auto cs = g_.cell_corners(Word{c});
      for (int x = 0; x < 3; ++x) {
        int rx = row_of[static_cast<std::size_t>(g_.grid_index(cs[static_cast<std::size_t>(x)]))];
        if (rx < 0) continue;
        for (int y = 0; y < 3; ++y) {
          if (y == x) continue;
          int gy = g_.grid_index(cs[static_cast<std::size_t>(y)]);
          a[static_cast<std::size_t>(rx)][static_cast<std::size_t>(rx)] += 1;
          int ry = row_of[static_cast<std::size_t>(gy)];
          if (ry >= 0) {
            a[static_cast<std::size_t>(rx)][static_cast<std::size_t>(ry)] -= 1;
          } else {
            int in = input_of[static_cast<std::size_t>(gy)];
            if (in < 0) throw ContractViolation("full cell touches a non-boundary point");
            b[static_cast<std::size_t>(rx)][static_cast<std::size_t>(in)] += 1;
          }
        }
      }
    }
    // Each straddling cell contributes r * (normal derivative at its q1) = 3 (u - integral).
    for (std::size_t s = 0; s < alphabet_.size(); ++s) {
      int rx = row_of[static_cast<std::size_t>(g_.grid_index(g_.cell_origin(Word{alphabet_[s]})))];
      a[static_cast<std::size_t>(rx)][static_cast<std::size_t>(rx)] += 3;
      b[static_cast<std::size_t>(rx)][1 + base_mass_.size() + s] += 3;
    }
    coef_.assign(n, std::vector<Rational>(input_count()));
    for (std::size_t in = 0; in < input_count(); ++in) {
      std::vector<Rational> rhs(n);
      for (std::size_t r = 0; r < n; ++r) rhs[r] = b[r][in];
      auto x = solve_dense<Rational>(a, rhs);
      for (std::size_t r = 0; r < n; ++r) coef_[r][in] = x[r];
    }
  }

  Gasket g_;
  std::vector<Rational> ha_;
  std::vector<int> full_, alphabet_, unknowns_;
  std::vector<char> is_full_;
  std::vector<int> digit_slot_, attached_;
  std::vector<Rational> weights_, base_mass_;
  Rational weight_sum_ = 0, mass_sum_ = 0;
  std::vector<std::vector<Rational>> coef_;
};

/// Values of h_a on the closed half domain at level 1, from the closed-form extension.
inline std::vector<std::pair<LatticePoint, Rational>> antisymmetric_values(int l) {
  Gasket g(l);
  auto grid = harmonic_extend_cell(g, CellBoundaryValues<Rational>{0, 1, -1});
  std::vector<std::pair<LatticePoint, Rational>> out;
  for (auto p : g.grid_points()) {
    if (2 * p.u + p.v <= l) out.emplace_back(p, grid[static_cast<std::size_t>(g.grid_index(p))]);
  }
  return out;
}

/// Atom values c + a rho^|v| for all atoms p_{j,wv} below the tail word w.
template <Scalar T>
struct GeometricTail {
  T c = ratio<T>(0);
  T a = ratio<T>(0);
  T rho = ratio<T>(0);

  T at(std::size_t depth) const { return is_zero(a) ? c : c + a * power(rho, static_cast<long long>(depth)); }
  bool constant() const { return is_zero(a); }
};

/// Boundary data on {q1} and the atoms: explicit atoms, tails per cylinder, and a
/// default tail; or a callback with a sup bound.
template <Scalar T>
class HalfBoundaryData {
 public:
  using Callback = std::function<T(const Word&, int)>;

  HalfBoundaryData() = default;
  HalfBoundaryData(T q1, T default_tail) : q1_(std::move(q1)) { tails_[Word{}] = {std::move(default_tail)}; }

  static HalfBoundaryData constant(T c) { return HalfBoundaryData(c, c); }

  static HalfBoundaryData from_callback(T q1, std::optional<T> q0, Callback cb, double sup) {
    HalfBoundaryData d;
    d.q1_ = std::move(q1);
    d.q0_ = std::move(q0);
    d.callback_ = std::move(cb);
    d.sup_ = sup;
    return d;
  }

  void set_q1(T v) { q1_ = std::move(v); }
  void set_q0(T v) { q0_ = std::move(v); }
  void set_atom(const Word& w, int j, T v) { atoms_[{w, j}] = std::move(v); }
  void set_tail(const Word& w, GeometricTail<T> t) {
    if (!is_zero(t.a) && !(abs_value(t.rho) < ratio<T>(1))) throw DataError("geometric tail ratio must satisfy |rho| < 1");
    tails_[w] = std::move(t);
  }

  const T& q1() const { return q1_; }
  bool is_callback() const { return static_cast<bool>(callback_); }
  double sup() const { return sup_; }
  const std::map<std::pair<Word, int>, T>& atoms() const { return atoms_; }
  const std::map<Word, GeometricTail<T>>& tails() const { return tails_; }
  const std::optional<T>& explicit_q0() const { return q0_; }

  /// Longest tail word that is a prefix of w, with the remaining depth.
  std::pair<const GeometricTail<T>*, std::size_t> governing(const Word& w) const {
    for (std::size_t n = w.size() + 1; n-- > 0;) {
      auto it = tails_.find(w.prefix(n));
      if (it != tails_.end()) return {&it->second, w.size() - n};
    }
    throw DataError("boundary data has no default tail");
  }

  T atom(const Word& w, int j) const {
    if (callback_) return callback_(w, j);
    auto it = atoms_.find({w, j});
    if (it != atoms_.end()) return it->second;
    auto [tail, depth] = governing(w);
    return tail->at(depth);
  }

  /// True when some explicit atom or tail sits strictly below w.
  bool detail_below(const Word& w) const {
    if (callback_) return true;
    auto atom = atoms_.lower_bound({w, 0});
    if (atom != atoms_.end() && atom->first.first.starts_with(w)) return true;
    for (auto it = tails_.upper_bound(w); it != tails_.end() && it->first.starts_with(w); ++it) {
      if (it->first.size() > w.size()) return true;
    }
    return false;
  }

  bool cylinder_constant() const {
    if (callback_) return false;
    for (const auto& [w, t] : tails_) {
      if (!t.constant()) return false;
    }
    return true;
  }

  /// Depth below which the data is governed by tails alone.
  int depth() const {
    std::size_t d = 0;
    for (const auto& [key, v] : atoms_) d = std::max(d, key.first.size() + 1);
    for (const auto& [w, t] : tails_) d = std::max(d, w.size());
    return static_cast<int>(d);
  }

  /// Limit of the atom values toward q0 (along F_0^k).
  std::optional<T> q0_limit() const {
    if (callback_) return std::nullopt;
    Word zeros(std::vector<std::uint8_t>(static_cast<std::size_t>(depth()) + 1, 0));
    auto [tail, depth_left] = governing(zeros);
    (void)depth_left;
    return tail->c;
  }

 private:
  T q1_ = ratio<T>(0);
  std::optional<T> q0_;
  std::map<std::pair<Word, int>, T> atoms_;
  std::map<Word, GeometricTail<T>> tails_;
  Callback callback_;
  double sup_ = 0;
};

/// A value with an a-priori truncation bound (0 when exact).
template <Scalar T>
struct Estimate {
  T value = ratio<T>(0);
  double bound = 0;
};

struct IntegrationOptions {
  int max_depth = 24;
  /// Subtrees lighter than this are replaced by their first atom.
  double min_mass = 1e-10;
};

/// Continuous data constant on each depth-d cylinder F_w X; atoms above depth d
/// take the value of the cylinder they lie in (toward q0 when they meet none).
template <Scalar T>
HalfBoundaryData<T> cylinder_data(const HalfGeometry& geo, int d, T q1, const std::function<T(const Word&)>& value) {
  HalfBoundaryData<T> f(q1, ratio<T>(0));
  std::map<Word, T> cylinder;
  std::function<void(const Word&)> leaves = [&](const Word& w) {
    if (static_cast<int>(w.size()) == d) {
      cylinder.emplace(w, value(w));
      return;
    }
    for (int i : geo.alphabet()) leaves(w.then(i));
  };
  leaves(Word{});
  std::function<void(const Word&)> walk = [&](const Word& w) {
    if (static_cast<int>(w.size()) == d) {
      f.set_tail(w, {cylinder.at(w)});
      return;
    }
    for (int j = 1; j <= geo.atom_count(); ++j) {
      int attached = 0;
      for (int i : geo.alphabet()) {
        if (geo.attached_atom(i) == j) attached = i;
      }
      Word c = w.then(attached);
      while (static_cast<int>(c.size()) < d) c = c.then(0);
      f.set_atom(w, j, cylinder.at(c));
    }
    for (int i : geo.alphabet()) walk(w.then(i));
  };
  walk(Word{});
  return f;
}

/// Harmonic function on the half domain with the given boundary data.
///
/// Level-1 values of u o F_w are computed on demand and memoized; lookups are
/// safe from several threads.
template <Scalar T>
class HalfSolution {
 public:
  HalfSolution(std::shared_ptr<const HalfGeometry> geo, HalfBoundaryData<T> f, IntegrationOptions opt = {})
      : geo_(std::move(geo)), f_(std::move(f)), opt_(opt) {
    validate();
  }

  const HalfGeometry& geometry() const { return *geo_; }
  const HalfBoundaryData<T>& data() const { return f_; }
  /// Largest truncation bound met so far (0 for exactly integrable data).
  double error_bound() const { return max_bound_.load(); }

  T q0() const {
    if (f_.explicit_q0()) return *f_.explicit_q0();
    auto lim = f_.q0_limit();
    if (!lim) throw ContractViolation("value at q0 is not determined by the data");
    return *lim;
  }

  T boundary_value(const HalfLocation& loc) const {
    switch (loc.kind) {
      case HalfPoint::q1: return f_.q1();
      case HalfPoint::q0: return q0();
      case HalfPoint::atom: return f_.atom(loc.word, loc.j);
      default: throw ContractViolation("not a boundary point of the half domain");
    }
  }

  /// Integral of f o F_tau against mu.
  Estimate<T> integral(const Word& tau) const {
    geo_->check_word(tau);
    Estimate<T> e = f_.is_callback() ? truncated_integral(tau) : exact_integral(tau);
    note_bound(e.bound);
    return e;
  }

  /// 3 f(q1) - 3 (integral of f).
  T normal_derivative_q1() const { return 3 * f_.q1() - 3 * integral(Word{}).value; }

  /// u(F_w q1).
  T q1_image(const Word& w) const {
    if (w.empty()) return f_.q1();
    auto parent = cell_grid(w.prefix(w.size() - 1));
    const Gasket& g = geo_->gasket();
    return parent[static_cast<std::size_t>(g.grid_index(g.cell_origin(Word{w[w.size() - 1]})))];
  }

  /// Values of u o F_w on the level-1 grid points of the closed half domain
  /// (zero at q0 and at points outside).
  std::vector<T> cell_grid(const Word& w) const {
    {
      std::lock_guard<std::mutex> guard(lock_);
      auto it = grids_.find(w);
      if (it != grids_.end()) return it->second;
    }
    geo_->check_word(w);
    const Gasket& g = geo_->gasket();
    std::vector<T> in;
    in.reserve(geo_->input_count());
    in.push_back(q1_image(w));
    for (int j = 1; j <= geo_->atom_count(); ++j) in.push_back(f_.atom(w, j));
    for (int i : geo_->alphabet()) in.push_back(integral(w.then(i)).value);
    std::vector<T> grid(static_cast<std::size_t>(g.grid_size()), ratio<T>(0));
    grid[static_cast<std::size_t>(g.grid_index(0, 0))] = in[0];
    for (int j = 1; j <= geo_->atom_count(); ++j) {
      grid[static_cast<std::size_t>(g.grid_index(geo_->atom_point(j)))] = in[static_cast<std::size_t>(j)];
    }
    const auto& coef = geo_->extension_coefficients();
    for (std::size_t r = 0; r < geo_->unknowns().size(); ++r) {
      T acc = ratio<T>(0);
      for (std::size_t c = 0; c < in.size(); ++c) {
        if (!is_zero(coef[r][c])) acc += from_rational<T>(coef[r][c]) * in[c];
      }
      grid[static_cast<std::size_t>(geo_->unknowns()[r])] = acc;
    }
    std::lock_guard<std::mutex> guard(lock_);
    return grids_.emplace(w, std::move(grid)).first->second;
  }

  T value(LatticePoint p) const {
    auto loc = geo_->locate(p);
    if (loc.kind == HalfPoint::outside) throw AddressError("vertex lies outside the closed half domain");
    if (loc.kind != HalfPoint::interior) return boundary_value(loc);
    const Gasket& g = geo_->gasket();
    Word w;
    LatticePoint local = g.normalize(p);
    while (true) {
      auto grid = cell_grid(w);
      if (local.level <= 1) return grid[static_cast<std::size_t>(g.grid_index(local))];
      int i = *g.locate(local);
      LatticePoint sub = *g.to_local(i, local);
      if (geo_->is_full(i)) return harmonic_value_in_cell(g, subcell_corners(g, grid, i), sub);
      w = w.then(i);
      local = g.normalize(sub);
    }
  }

  T value(const VertexAddress& a) const { return value(geo_->gasket().resolve(a)); }

  /// E_{O_1}(u o F_w, v o F_w)-style cell pairing of two level-1 grids.
  T cell_pairing(const std::vector<T>& a, const std::vector<T>& b) const {
    const Gasket& g = geo_->gasket();
    T sum = ratio<T>(0);
    for (int c : geo_->full_cells()) {
      auto cs = g.cell_corners(Word{c});
      for (int x = 0; x < 3; ++x) {
        int p = g.grid_index(cs[static_cast<std::size_t>(x)]);
        int q = g.grid_index(cs[static_cast<std::size_t>((x + 1) % 3)]);
        sum += (a[static_cast<std::size_t>(p)] - a[static_cast<std::size_t>(q)]) *
               (b[static_cast<std::size_t>(p)] - b[static_cast<std::size_t>(q)]);
      }
    }
    return sum * from_rational<T>(1 / g.renorm());
  }

  /// E_{O_m}(u): energy on the cells F_w O_1 with w in W~_{<m}.
  T partial_energy(int m) const {
    T sum = ratio<T>(0);
    for_words(m, [&](const Word& w, const T& scale) {
      auto grid = cell_grid(w);
      sum += scale * cell_pairing(grid, grid);
    });
    return sum;
  }

  /// E_{O_m}(h_a, u).
  T antisymmetric_pairing(int m) const {
    const auto& ha = geo_->antisymmetric_grid();
    std::vector<T> base(ha.size());
    for (std::size_t i = 0; i < ha.size(); ++i) base[i] = from_rational<T>(ha[i]);
    const Gasket& g = geo_->gasket();
    T sum = ratio<T>(0);
    for_words(m, [&](const Word& w, const T& scale) {
      T amp = ratio<T>(1);
      for (std::size_t k = 0; k < w.size(); ++k) {
        amp *= from_rational<T>(ha[static_cast<std::size_t>(g.grid_index(g.cell_origin(Word{w[k]})))]);
      }
      std::vector<T> hw(base.size());
      for (std::size_t i = 0; i < base.size(); ++i) hw[i] = amp * base[i];
      sum += scale * cell_pairing(hw, cell_grid(w));
    });
    return sum;
  }

  /// E_Omega(u) for continuous cylinder-constant data: the cells above the data
  /// depth d plus 3 r^{-d} (u(F_w q1) - c_w)^2 for each depth-d cylinder.
  T energy() const {
    if (!f_.cylinder_constant()) throw CapabilityError("exact energy needs cylinder-constant boundary data");
    const int d = f_.depth();
    T sum = partial_energy(d);
    const T inv_r = from_rational<T>(1 / geo_->gasket().renorm());
    T scale = power(inv_r, d);
    for_depth(d, [&](const Word& w) {
      T c = f_.governing(w).first->c;
      auto corner = geo_->q0_image(w);
      if (boundary_value(corner) != c) throw DataError("boundary data is discontinuous at " + w.str() + "; energy is infinite");
      T t = q1_image(w) - c;
      sum += scale * 3 * t * t;
    });
    return sum;
  }

 private:
  void validate() const {
    for (const auto& [key, v] : f_.atoms()) {
      geo_->check_word(key.first);
      geo_->check_atom(key.second);
    }
    for (const auto& [w, t] : f_.tails()) geo_->check_word(w);
    if (!f_.is_callback() && f_.explicit_q0()) {
      auto lim = f_.q0_limit();
      if (lim && abs_value(*lim - *f_.explicit_q0()) > ratio<T>(0)) {
        if constexpr (is_exact_v<T>) {
          throw DataError("value at q0 differs from the limit of the atom values");
        } else if (std::abs(*lim - *f_.explicit_q0()) > 1e-12 * std::max(1.0, std::abs(*lim))) {
          throw DataError("value at q0 differs from the limit of the atom values");
        }
      }
    }
  }

  void note_bound(double b) const {
    double cur = max_bound_.load();
    while (b > cur && !max_bound_.compare_exchange_weak(cur, b)) {
    }
  }

  Estimate<T> exact_integral(const Word& tau) const {
    if (!f_.detail_below(tau)) {
      auto [tail, depth] = f_.governing(tau);
      if (tail->constant()) return {tail->c, 0};
      T m = from_rational<T>(geo_->base_mass_sum());
      T s = from_rational<T>(geo_->weight_sum());
      return {tail->c + tail->a * power(tail->rho, static_cast<long long>(depth)) * m / (1 - tail->rho * s), 0};
    }
    T acc = ratio<T>(0);
    for (int j = 1; j <= geo_->atom_count(); ++j) {
      acc += from_rational<T>(geo_->base_masses()[static_cast<std::size_t>(j - 1)]) * f_.atom(tau, j);
    }
    const auto& alpha = geo_->alphabet();
    for (std::size_t s = 0; s < alpha.size(); ++s) {
      acc += from_rational<T>(geo_->digit_weights()[s]) * exact_integral(tau.then(alpha[s])).value;
    }
    return {acc, 0};
  }

  Estimate<T> truncated_integral(const Word& tau) const {
    Estimate<T> e;
    const auto& alpha = geo_->alphabet();
    std::function<void(const Word&, const T&, double, int)> visit = [&](const Word& w, const T& mass, double mass_d,
                                                                        int depth) {
      for (int j = 1; j <= geo_->atom_count(); ++j) {
        e.value += mass * from_rational<T>(geo_->base_masses()[static_cast<std::size_t>(j - 1)]) * f_.atom(w, j);
      }
      for (std::size_t s = 0; s < alpha.size(); ++s) {
        T child = mass * from_rational<T>(geo_->digit_weights()[s]);
        double child_d = mass_d * to_double(geo_->digit_weights()[s]);
        Word next = w.then(alpha[s]);
        if (depth + 1 >= opt_.max_depth || child_d < opt_.min_mass) {
          e.value += child * f_.atom(next, 1);
          e.bound += 2 * child_d * f_.sup();
        } else {
          visit(next, child, child_d, depth + 1);
        }
      }
    };
    visit(tau, ratio<T>(1), 1.0, 0);
    return e;
  }

  template <class F>
  void for_words(int m, F&& fn) const {
    const T inv_r = from_rational<T>(1 / geo_->gasket().renorm());
    std::function<void(const Word&, const T&)> walk = [&](const Word& w, const T& scale) {
      if (static_cast<int>(w.size()) >= m) return;
      fn(w, scale);
      for (int i : geo_->alphabet()) walk(w.then(i), scale * inv_r);
    };
    walk(Word{}, ratio<T>(1));
  }

  template <class F>
  void for_depth(int d, F&& fn) const {
    std::function<void(const Word&)> walk = [&](const Word& w) {
      if (static_cast<int>(w.size()) == d) {
        fn(w);
        return;
      }
      for (int i : geo_->alphabet()) walk(w.then(i));
    };
    walk(Word{});
  }

  std::shared_ptr<const HalfGeometry> geo_;
  HalfBoundaryData<T> f_;
  IntegrationOptions opt_;
  mutable std::mutex lock_;
  mutable std::map<Word, std::vector<T>> grids_;
  mutable std::atomic<double> max_bound_{0.0};
};

/// SG_3 closed forms for (u(x), u(y), u(z)) with x = F_1 q2, y = F_1 q0, z = F_0 q1.
template <Scalar T>
std::array<T, 3> extend_step_sg3(const HalfSolution<T>& s) {
  if (s.geometry().l() != 3) throw CapabilityError("extend_step_sg3 needs the SG_3 half domain");
  const T fq = s.data().q1();
  const T fp = s.data().atom(Word{}, 1);
  const T i0 = s.integral(Word{0}).value;
  const T i3 = s.integral(Word{3}).value;
  auto q = [](long long a, long long b) { return ratio<T>(a, b); };
  return {q(4, 15) * fq + q(1, 15) * fp + q(1, 30) * i0 + q(19, 30) * i3,
          q(1, 3) * fq + q(1, 3) * fp + q(1, 6) * i0 + q(1, 6) * i3,
          q(1, 15) * fq + q(4, 15) * fp + q(19, 30) * i0 + q(1, 30) * i3};
}

/// SG closed form for u(F_0 q1).
template <Scalar T>
T extend_step_sg(const HalfSolution<T>& s) {
  if (s.geometry().l() != 2) throw CapabilityError("extend_step_sg needs the SG half domain");
  return ratio<T>(1, 5) * s.data().q1() + ratio<T>(1, 5) * s.data().atom(Word{}, 1) +
         ratio<T>(3, 5) * s.integral(Word{0}).value;
}

/// Partial sum of Q(f) over |w| < depth:
/// sum_j (f(q1) - f(p_j))^2 + sum_w sum_i sum_{j,j'} r^{-|w|} (f(p_{j,w}) - f(p_{j',wi}))^2.
template <Scalar T>
T energy_form_Q(const HalfGeometry& geo, const HalfBoundaryData<T>& f, int depth) {
  T sum = ratio<T>(0);
  for (int j = 1; j <= geo.atom_count(); ++j) {
    T d = f.q1() - f.atom(Word{}, j);
    sum += d * d;
  }
  const T inv_r = from_rational<T>(1 / geo.gasket().renorm());
  std::function<void(const Word&, const T&)> walk = [&](const Word& w, const T& scale) {
    if (static_cast<int>(w.size()) >= depth) return;
    for (int i : geo.alphabet()) {
      Word wi = w.then(i);
      for (int j = 1; j <= geo.atom_count(); ++j) {
        for (int k = 1; k <= geo.atom_count(); ++k) {
          T d = f.atom(w, j) - f.atom(wi, k);
          sum += scale * d * d;
        }
      }
      walk(wi, scale * inv_r);
    }
  };
  walk(Word{}, ratio<T>(1));
  return sum;
}

/// Q(f) in full for cylinder-constant data (the terms vanish below the data depth).
template <Scalar T>
T energy_form_Q(const HalfGeometry& geo, const HalfBoundaryData<T>& f) {
  if (!f.cylinder_constant()) throw CapabilityError("Q(f) in closed form needs cylinder-constant data");
  return energy_form_Q(geo, f, f.depth());
}

template <Scalar T>
struct DirichletToNeumann {
  /// (3/5)^{k+1} times the outward derivative at p_k, k = 0..K.
  std::vector<T> terms;
  /// The same terms from the telescoping identity.
  std::vector<T> identity_terms;
  std::vector<T> partial_sums;
  T limit = ratio<T>(0);
  /// Derivative at q1.
  T q1_derivative = ratio<T>(0);
};

/// Scaled normal derivatives at p_k on the SG half domain, k = 0..K.
template <Scalar T>
DirichletToNeumann<T> dirichlet_to_neumann_sg(const HalfSolution<T>& s, int K) {
  if (s.geometry().l() != 2) throw CapabilityError("the Dirichlet-to-Neumann map is implemented for SG only");
  DirichletToNeumann<T> out;
  std::vector<T> u;
  Word zeros;
  for (int k = 0; k <= K + 1; ++k) {
    u.push_back(s.q1_image(zeros));
    zeros = zeros.then(0);
  }
  zeros = Word{};
  T acc = ratio<T>(0);
  for (int k = 0; k <= K; ++k) {
    Word next = zeros.then(0);
    T t = 2 * s.data().atom(zeros, 1) - u[static_cast<std::size_t>(k)] - u[static_cast<std::size_t>(k + 1)];
    T id = ratio<T>(3, 2) * (u[static_cast<std::size_t>(k + 1)] - u[static_cast<std::size_t>(k)]) +
           ratio<T>(9, 4) * (s.integral(zeros).value - s.integral(next).value);
    acc += t;
    out.terms.push_back(t);
    out.identity_terms.push_back(id);
    out.partial_sums.push_back(acc);
    zeros = next;
  }
  T total = s.integral(Word{}).value;
  out.limit = ratio<T>(9, 4) * total - ratio<T>(3, 4) * s.q0() - ratio<T>(3, 2) * s.data().q1();
  out.q1_derivative = 3 * s.data().q1() - 3 * total;
  return out;
}

/// Boundary data on the SG half domain from scaled normal derivatives:
/// eta[0] is the derivative at q1, eta[k+1] the scaled outward derivative at p_k;
/// entries past the end are zero. Sets f(q1) = 0.
template <Scalar T>
HalfBoundaryData<T> neumann_inverse_sg(const std::vector<T>& eta) {
  const T three_fifths = ratio<T>(3, 5);
  const T four_thirds = ratio<T>(4, 3);
  const T em1 = eta.empty() ? ratio<T>(0) : eta[0];
  const int K = static_cast<int>(eta.size()) - 2;  // last explicit k
  T partial = ratio<T>(0);  // sum_{i=0}^k eta_i
  T geometric = em1;        // sum_{i=-1}^k (3/5)^{k-i} eta_i, starting at k = -1
  HalfBoundaryData<T> f(ratio<T>(0), ratio<T>(0));
  Word zeros;
  for (int k = 0; k <= K; ++k) {
    const T& ek = eta[static_cast<std::size_t>(k + 1)];
    partial += ek;
    geometric = three_fifths * geometric + ek;
    f.set_atom(zeros, 1, -em1 - four_thirds * partial + four_thirds * geometric + ek / 3);
    zeros = zeros.then(0);
  }
  // Beyond K: f(p_k) = c + (4/3) G_K (3/5)^{k-K}.
  T c = -em1 - four_thirds * partial;
  T a = four_thirds * three_fifths * geometric;
  f.set_tail(zeros, {c, a, three_fifths});
  f.set_q0(c);
  return f;
}

/// Boundary values for oracle solves on the half domain.
template <Scalar T>
std::function<T(LatticePoint)> half_boundary_function(const HalfSolution<T>& s) {
  return [&s](LatticePoint p) { return s.boundary_value(s.geometry().locate(p)); };
}

}  // namespace gasket
