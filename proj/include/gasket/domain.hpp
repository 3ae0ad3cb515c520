#pragma once

#include <optional>
#include <string>
#include <variant>

#include "gasket/geometry.hpp"
#include "gasket/lambda.hpp"

namespace gasket {

enum class BoundaryKind { interior, cantor_boundary, corner_boundary, outside };

inline const char* to_string(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::interior: return "interior";
    case BoundaryKind::cantor_boundary: return "cantor-boundary";
    case BoundaryKind::corner_boundary: return "corner-boundary";
    case BoundaryKind::outside: return "outside";
  }
  return "?";
}

/// Left of the symmetry line through q0 on SG_l: where h_a > 0.
struct HalfDomain {
  int l = 3;
};
/// Part of SG_3 above height 1 - lambda.
struct UpperDomain {
  TriadicLambda lambda;
};
/// Part of SG below height 1 - lambda.
struct LowerDomain {
  BinaryLambda lambda;
};

using DomainDescriptor = std::variant<HalfDomain, UpperDomain, LowerDomain>;

enum class CellRelation { inside, outside, straddle };

/// Exact membership tests for one domain.
class DomainGeometry {
 public:
  explicit DomainGeometry(DomainDescriptor d) : desc_(std::move(d)), gasket_(level_of(desc_)) {
    if (auto* up = std::get_if<UpperDomain>(&desc_)) {
      cut_ = 1 - require_value(up->lambda.value());
    } else if (auto* low = std::get_if<LowerDomain>(&desc_)) {
      cut_ = 1 - require_value(low->lambda.value());
    }
  }

  const DomainDescriptor& descriptor() const { return desc_; }
  const Gasket& gasket() const { return gasket_; }
  bool is_half() const { return std::holds_alternative<HalfDomain>(desc_); }
  bool is_upper() const { return std::holds_alternative<UpperDomain>(desc_); }
  bool is_lower() const { return std::holds_alternative<LowerDomain>(desc_); }
  /// Height 1 - lambda of the cut line (upper/lower).
  const Rational& cut() const { return cut_; }

  /// Signed side of p relative to the cut: negative inside, zero on the line.
  int side(LatticePoint p) const {
    if (is_half()) {
      std::int64_t n = gasket_.scale(p.level);
      std::int64_t s = 2 * p.u + p.v - n;
      return (s > 0) - (s < 0);
    }
    Rational height = Rational(p.v) / Rational(gasket_.scale(p.level));
    int cmp = height < cut_ ? -1 : (height > cut_ ? 1 : 0);
    return is_upper() ? -cmp : cmp;
  }

  CellRelation relation(const Word& w) const {
    gasket_.check_word(w);
    auto cs = gasket_.cell_corners(w);
    int lo = 1, hi = -1;
    for (const auto& c : cs) {
      int s = side(c);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    if (hi <= 0) return CellRelation::inside;
    if (lo >= 0) return CellRelation::outside;
    return CellRelation::straddle;
  }

  /// Inside cell meeting the boundary at most in its corners.
  bool condensable(const Word& w) const {
    if (relation(w) != CellRelation::inside) return false;
    if (!is_upper()) return true;
    auto cs = gasket_.cell_corners(w);
    return side(cs[1]) < 0;
  }

  BoundaryKind classify(const VertexAddress& a) const {
    gasket_.check_word(a.word);
    return classify(gasket_.resolve(a));
  }

  BoundaryKind classify(LatticePoint p) const {
    if (!gasket_.is_vertex(p)) throw AddressError("point is not a vertex of the gasket");
    p = gasket_.normalize(p);
    if (is_half()) {
      if (p == Gasket::corner(1)) return BoundaryKind::corner_boundary;
      int s = side(p);
      return s < 0 ? BoundaryKind::interior : (s == 0 ? BoundaryKind::cantor_boundary : BoundaryKind::outside);
    }
    if (is_upper() && p == Gasket::corner(0)) return BoundaryKind::corner_boundary;
    if (is_lower() && (p == Gasket::corner(1) || p == Gasket::corner(2))) {
      return side(p) <= 0 ? BoundaryKind::corner_boundary : BoundaryKind::outside;
    }
    int s = side(p);
    if (s < 0) return BoundaryKind::interior;
    if (s > 0) return BoundaryKind::outside;
    return on_line_in_closure(p) ? BoundaryKind::cantor_boundary : BoundaryKind::outside;
  }

  /// Level at which the cut line runs along grid points, if any.
  std::optional<int> cut_level() const {
    if (is_half()) return 0;
    Rational x = cut_;
    for (int k = 0; k <= 40; ++k) {
      if (boost::multiprecision::denominator(x) == 1) return k;
      x *= gasket_.l();
    }
    return std::nullopt;
  }

 private:
  static int level_of(const DomainDescriptor& d) {
    if (auto* h = std::get_if<HalfDomain>(&d)) return h->l;
    if (std::holds_alternative<UpperDomain>(d)) return 3;
    return 2;
  }

  static Rational require_value(const std::optional<Rational>& v) {
    if (!v) throw CapabilityError("domain geometry needs an eventually periodic lambda");
    return *v;
  }

  bool on_line_in_closure(LatticePoint p) const {
    auto k = cut_level();
    if (!k) return false;
    LatticePoint q = gasket_.lift(p, std::max(p.level, *k));
    if (is_upper()) {
      return gasket_.cell_word(q.level, q.u, q.v).has_value() || gasket_.cell_word(q.level, q.u - 1, q.v).has_value();
    }
    return gasket_.cell_word(q.level, q.u, q.v - 1).has_value();
  }

  DomainDescriptor desc_;
  Gasket gasket_;
  Rational cut_ = 0;
};

}  // namespace gasket
