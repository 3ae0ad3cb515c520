#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gasket/compare.hpp"
#include "gasket/half_domain.hpp"
#include "gasket/lower_domain.hpp"
#include "gasket/upper_domain.hpp"

using namespace gasket;
using json = nlohmann::json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Config {
  std::string domain = "half-sg3";
  std::string lambda;
  std::string data;
  int level = 2;
  int depth = -1;
  std::string mode = "float";
  std::string out;
  std::string format = "csv";
  std::string levels = "3..6";
  int probe = -2;
  std::string svg;
  int terms = 20;
  std::string inverse;
  bool check_closed_form = false;
  std::string seed = "2,1";
};

enum class Kind { half, upper, lower };

struct DomainSpec {
  Kind kind = Kind::half;
  int l = 3;
};

DomainSpec parse_domain(const std::string& s) {
  if (s == "upper") return {Kind::upper, 3};
  if (s == "lower") return {Kind::lower, 2};
  if (s.rfind("half-sg", 0) == 0) {
    try {
      std::size_t pos = 0;
      int l = std::stoi(s.substr(7), &pos);
      if (pos == s.size() - 7 && l >= 2) return {Kind::half, l};
    } catch (const std::exception&) {
    }
  }
  throw UsageError("unknown domain '" + s + "'; use half-sg<l>, upper or lower");
}

bool rational_mode(const Config& c) {
  if (c.mode == "rational") return true;
  if (c.mode == "float") return false;
  throw UsageError("mode must be rational or float");
}

/// Columns of rows plus metadata; CSV writes metadata as leading comments.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
  json meta = json::object();
};

json cell(double x) { return x; }
json cell(const Rational& x) { return format_number(x); }
json cell(int x) { return x; }
json cell(std::size_t x) { return x; }
json cell(bool x) { return x; }
json cell(const std::string& x) { return x; }
json cell(const char* x) { return std::string(x); }

std::string csv_text(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_float()) return format_number(j.get<double>());
  if (j.is_null()) return "";
  return j.dump();
}

void emit(const Table& t, const Config& c, const std::string& command) {
  std::ofstream file;
  if (!c.out.empty()) {
    file.open(c.out);
    if (!file) throw UsageError("cannot write '" + c.out + "'");
  }
  std::ostream& out = c.out.empty() ? std::cout : file;
  if (c.format == "json") {
    json doc;
    doc["schema"] = 1;
    doc["command"] = command;
    doc["meta"] = t.meta;
    doc["columns"] = t.columns;
    json rows = json::array();
    for (const auto& r : t.rows) {
      json o = json::object();
      for (std::size_t i = 0; i < t.columns.size(); ++i) o[t.columns[i]] = r[i];
      rows.push_back(o);
    }
    doc["rows"] = rows;
    out << doc.dump(2) << '\n';
    return;
  }
  if (c.format != "csv") throw UsageError("format must be csv or json for '" + command + "'");
  for (const auto& [k, v] : t.meta.items()) out << "# " << k << '=' << csv_text(v) << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_text(r[i]);
    out << '\n';
  }
}

std::string line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

json load_data(const Config& c) {
  if (c.data.empty()) throw UsageError("--data is required");
  std::ifstream in(c.data);
  if (!in) throw UsageError("cannot read '" + c.data + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw UsageError("data file '" + c.data + "' is empty");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(c.data + ": JSON parse error at " + line_column(text, e.byte));
  }
  if (!j.is_object()) throw DataError(c.data + ": top level must be an object");
  if (j.contains("schema") && j["schema"] != 1) throw DataError(c.data + ": unsupported schema version");
  return j;
}

template <Scalar T>
T number(const json& j, const std::string& what) {
  try {
    if (j.is_string()) return from_rational<T>(parse_rational(j.get<std::string>()));
    if (j.is_number_integer()) return from_rational<T>(Rational(j.get<long long>()));
    if (j.is_number_float()) {
      if constexpr (is_exact_v<T>) {
        return parse_rational(j.dump());
      } else {
        return j.get<double>();
      }
    }
  } catch (const DataError&) {
    throw DataError(what + ": write exponent forms as strings \"p/q\"");
  }
  throw DataError(what + " must be a number or a \"p/q\" string");
}

const json& field(const json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::string text_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) throw DataError(std::string("field '") + key + "' must be a string such as \"12\"");
  return v.get<std::string>();
}

/// Expands {w, v} cylinder entries to the words of a fixed depth by longest prefix.
template <Scalar T>
std::function<T(const Word&)> cylinder_lookup(const json& j, int map_count, int& depth) {
  std::map<Word, T> given;
  depth = 0;
  if (j.contains("cylinders")) {
    for (const auto& e : j.at("cylinders")) {
      Word w = Word::parse(text_field(e, "w"), map_count);
      given[w] = number<T>(field(e, "v"), "cylinder " + w.str());
      depth = std::max(depth, static_cast<int>(w.size()));
    }
  }
  std::optional<T> fallback;
  if (j.contains("default")) fallback = number<T>(j.at("default"), "default");
  return [given, fallback](const Word& w) {
    for (std::size_t n = w.size() + 1; n-- > 0;) {
      auto it = given.find(w.prefix(n));
      if (it != given.end()) return it->second;
    }
    if (fallback) return *fallback;
    throw DataError("no value for cylinder " + w.str() + " and no default");
  };
}

template <Scalar T>
HalfBoundaryData<T> half_data(const json& j) {
  HalfBoundaryData<T> f(number<T>(field(j, "q1"), "q1"), j.contains("default_tail") ? number<T>(j["default_tail"], "default_tail") : ratio<T>(0));
  if (j.contains("q0")) f.set_q0(number<T>(j["q0"], "q0"));
  if (j.contains("atoms")) {
    for (const auto& a : j["atoms"]) {
      Word w = Word::parse(text_field(a, "w"), 10);
      f.set_atom(w, a.value("j", 1), number<T>(field(a, "v"), "atom " + w.str()));
    }
  }
  if (j.contains("tails")) {
    for (const auto& t : j["tails"]) {
      Word w = Word::parse(text_field(t, "w"), 10);
      f.set_tail(w, {number<T>(field(t, "c"), "tail c"), number<T>(field(t, "a"), "tail a"), number<T>(field(t, "rho"), "tail rho")});
    }
  }
  return f;
}

UpperBoundaryData upper_data(const UpperGeometry& geo, const json& j) {
  int depth = 0;
  auto fn = cylinder_lookup<double>(j, 6, depth);
  return UpperBoundaryData::cylinders(geo, number<double>(field(j, "q0"), "q0"), depth, fn);
}

template <Scalar T>
LowerBoundaryData<T> lower_data(const LowerGeometry<T>& geo, const json& j) {
  int depth = 0;
  auto fn = cylinder_lookup<T>(j, 3, depth);
  return LowerBoundaryData<T>::cylinders(geo, number<T>(field(j, "q1"), "q1"), number<T>(field(j, "q2"), "q2"), depth, fn);
}

TriadicLambda triadic(const Config& c) {
  if (c.lambda.empty()) throw UsageError("--lambda is required for upper domains");
  return TriadicLambda::parse(c.lambda);
}

BinaryLambda binary(const Config& c) {
  if (c.lambda.empty()) throw UsageError("--lambda is required for lower domains");
  auto l = BinaryLambda::parse(c.lambda);
  if (auto v = l.value(); v && (*v < 0 || *v >= 1)) throw DataError("lower-domain lambda must lie in [0, 1)");
  return l;
}

DomainGeometry domain_geometry(const Config& c, const DomainSpec& d) {
  switch (d.kind) {
    case Kind::half: return DomainGeometry(HalfDomain{d.l});
    case Kind::upper: return DomainGeometry(UpperDomain{triadic(c)});
    case Kind::lower: return DomainGeometry(LowerDomain{binary(c)});
  }
  throw UsageError("unknown domain");
}

void require_float(const Config& c, const char* what) {
  if (rational_mode(c)) throw CapabilityError(std::string(what) + " needs float mode: eta(lambda) is an irrational limit");
}

std::vector<int> parse_levels(const std::string& s) {
  std::vector<int> out;
  auto dots = s.find("..");
  try {
    if (dots != std::string::npos) {
      int a = std::stoi(s.substr(0, dots)), b = std::stoi(s.substr(dots + 2));
      for (int m = a; m <= b; ++m) out.push_back(m);
    } else {
      std::stringstream in(s);
      std::string part;
      while (std::getline(in, part, ',')) out.push_back(std::stoi(part));
    }
  } catch (const std::exception&) {
    throw UsageError("levels must look like 3..8 or 3,5,7");
  }
  if (out.empty()) throw UsageError("no levels given");
  return out;
}

// ---- solve / oracle / graph ----

Table vertex_table(const DomainGraph& dg, const DomainGeometry& dom, const std::vector<json>& values) {
  Table t;
  t.columns = {"vertex_id", "word", "corner", "x", "y", "kind", "value"};
  const Graph& g = *dg.graph;
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto xy = dom.gasket().coordinates(g.points()[i]);
    t.rows.push_back({cell(i), cell(g.addresses()[i].word.str()), cell(g.addresses()[i].corner), cell(xy.x), cell(xy.y),
                      cell(to_string(dg.kinds[i])), values[i]});
  }
  t.meta["level"] = g.level();
  t.meta["vertices"] = g.size();
  return t;
}

template <Scalar T>
Table solve_with(const Config& c, const DomainSpec& d, bool oracle) {
  DomainGeometry dom = domain_geometry(c, d);
  auto dg = domain_restricted_graph(dom, c.level, {false, 0});
  json j = load_data(c);
  std::function<T(LatticePoint)> boundary, eval;
  std::shared_ptr<void> keep;
  if (d.kind == Kind::half) {
    auto s = std::make_shared<HalfSolution<T>>(std::make_shared<const HalfGeometry>(d.l), half_data<T>(j));
    keep = s;
    boundary = half_boundary_function(*s);
    eval = [s](LatticePoint p) { return s->value(p); };
  } else if (d.kind == Kind::lower) {
    auto geo = std::make_shared<const LowerGeometry<T>>(binary(c));
    auto s = std::make_shared<LowerSolution<T>>(geo, lower_data<T>(*geo, j));
    keep = s;
    boundary = lower_boundary_function(*s);
    eval = [s](LatticePoint p) { return s->value(p); };
  } else {
    if constexpr (is_exact_v<T>) {
      throw CapabilityError("upper domains need float mode: eta(lambda) is an irrational limit");
    } else {
      auto geo = std::make_shared<const UpperGeometry>(triadic(c));
      auto s = std::make_shared<UpperSolution>(geo, upper_data(*geo, j));
      keep = s;
      boundary = upper_boundary_function(*s);
      eval = [s](LatticePoint p) { return s->value(p); };
    }
  }
  std::vector<json> values(dg.graph->size());
  if (oracle) {
    auto sol = solve(dg.problem<T>(boundary));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = cell(sol.values[i]);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto p = dg.graph->points()[i];
      values[i] = cell(dg.is_boundary(static_cast<int>(i)) ? boundary(p) : eval(p));
    }
  }
  auto t = vertex_table(dg, dom, values);
  t.meta["mode"] = c.mode;
  t.meta["source"] = oracle ? "graph-solve" : "evaluator";
  return t;
}

Table cmd_solve(const Config& c, bool oracle) {
  auto d = parse_domain(c.domain);
  return rational_mode(c) ? solve_with<Rational>(c, d, oracle) : solve_with<double>(c, d, oracle);
}

void cmd_graph(const Config& c) {
  auto d = parse_domain(c.domain);
  auto dom = domain_geometry(c, d);
  auto dg = domain_restricted_graph(dom, c.level, {false, 0});
  if (c.out.empty()) throw UsageError("graph needs --out <prefix>; writes <prefix>.edges.csv and <prefix>.vertices.csv");
  std::ofstream e(c.out + ".edges.csv"), v(c.out + ".vertices.csv");
  if (!e || !v) throw UsageError("cannot write '" + c.out + "'");
  dg.graph->write_edges_csv(e);
  dg.graph->write_vertices_csv(v);
}

// ---- eta ----

Table cmd_eta(const Config& c) {
  auto d = parse_domain(c.domain);
  Table t;
  if (d.kind == Kind::upper) {
    require_float(c, "eta for upper domains");
    auto l = triadic(c);
    auto e = c.depth > 0 ? eta_alpha(l, c.depth) : eta_alpha(l);
    t.columns = {"alpha", "eta", "depth", "alpha_bound", "eta_bound"};
    t.rows.push_back({cell(e.alpha), cell(e.eta), cell(e.depth), cell(e.alpha_bound), cell(e.eta_bound)});
    if (c.check_closed_form) {
      // alpha(lambda) = alpha(1) whenever lambda = 3^{1 - m_1}.
      auto v = l.value();
      if (v && *v == power(Rational(1, 3), l.m1() - 1)) {
        double diff = std::abs(e.alpha - alpha_one());
        t.meta["closed_form"] = "(75 - sqrt(2353))/60";
        t.meta["closed_alpha"] = alpha_one();
        t.meta["difference"] = diff;
        t.meta["match"] = diff <= std::max(1e-9, e.alpha_bound);
      } else {
        t.meta["closed_form"] = "none for this lambda";
      }
    }
    return t;
  }
  if (d.kind != Kind::lower) throw UsageError("eta applies to upper and lower domains");
  auto l = binary(c);
  t.columns = {"eta1", "eta2", "depth", "bound"};
  if (rational_mode(c)) {
    auto e = eta_pair_dyadic<Rational>(l);
    t.rows.push_back({cell(e.eta1), cell(e.eta2), cell(e.depth), cell(0.0)});
  } else {
    auto comma = c.seed.find(',');
    if (comma == std::string::npos) throw UsageError("--seed must look like c1,c2");
    double c1 = to_double(parse_rational(c.seed.substr(0, comma))), c2 = to_double(parse_rational(c.seed.substr(comma + 1)));
    auto e = c.depth > 0 ? eta_pair(l, c.depth, c1, c2) : eta_pair(l);
    t.rows.push_back({cell(e.eta1), cell(e.eta2), cell(e.depth), cell(e.bound)});
  }
  if (c.check_closed_form) {
    LowerGeometry<double> geo(l);
    int first = geo.digit(1), m = 0;
    while (m < 30 && geo.digit(m + 1) == first) ++m;
    auto [e1, e2] = geo.eta(0);
    double p1 = 0, p2 = 0;
    if (first == 0) {
      auto z = zero_run_form(geo, m);
      p1 = z.eta1;
      p2 = z.eta2;
      t.meta["closed_form"] = "zero run of length " + std::to_string(m);
    } else {
      auto o = one_run_form(geo, m);
      p1 = o.eta1;
      p2 = o.eta2;
      t.meta["closed_form"] = "one run of length " + std::to_string(m);
      t.meta["x"] = o.x;
    }
    double diff = std::max(std::abs(p1 - e1), std::abs(p2 - e2));
    t.meta["closed_eta1"] = p1;
    t.meta["closed_eta2"] = p2;
    t.meta["difference"] = diff;
    t.meta["match"] = diff <= 1e-10;
  }
  return t;
}

// ---- measure ----

template <Scalar T>
Table lower_measure(const Config& c, int depth) {
  LowerGeometry<T> geo(binary(c));
  Table t;
  t.columns = {"word", "mu1", "mu2"};
  for (const auto& w : geo.words(depth)) {
    auto [a, b] = geo.measures(w);
    t.rows.push_back({cell(w.str()), cell(a), cell(b)});
  }
  return t;
}

Table cmd_measure(const Config& c) {
  auto d = parse_domain(c.domain);
  int depth = c.depth >= 0 ? c.depth : 2;
  Table t;
  if (d.kind == Kind::half) {
    HalfGeometry geo(d.l);
    t.columns = {"word", "j", "mass"};
    std::function<void(const Word&)> walk = [&](const Word& w) {
      if (static_cast<int>(w.size()) == depth) return;
      for (int j = 1; j <= geo.atom_count(); ++j) t.rows.push_back({cell(w.str()), cell(j), cell(geo.atom_mass(w, j))});
      for (int i : geo.alphabet()) walk(w.then(i));
    };
    walk(Word{});
    t.meta["residual_mass"] = format_number(geo.residual_mass(depth));
    return t;
  }
  if (d.kind == Kind::upper) {
    require_float(c, "upper measures");
    UpperGeometry geo(triadic(c));
    t.columns = {"word", "mass"};
    for (const auto& w : geo.words(depth)) t.rows.push_back({cell(w.str()), cell(geo.cylinder_mass(w))});
    return t;
  }
  return rational_mode(c) ? lower_measure<Rational>(c, depth) : lower_measure<double>(c, depth);
}

// ---- energy / haar ----

template <Scalar T>
Table half_energy(const Config& c, const DomainSpec& d) {
  auto geo = std::make_shared<const HalfGeometry>(d.l);
  auto f = half_data<T>(load_data(c));
  HalfSolution<T> s(geo, f);
  T e = s.energy();
  T q = energy_form_Q(*geo, f);
  Table t;
  t.columns = {"energy", "Q", "ratio", "cap"};
  t.rows.push_back({cell(e), cell(q), is_zero(q) ? json(nullptr) : cell(e / q), cell(Rational(225, 28))});
  return t;
}

Table cmd_energy(const Config& c) {
  auto d = parse_domain(c.domain);
  if (d.kind == Kind::lower) throw CapabilityError("energy estimates for lower domains are not implemented");
  if (d.kind == Kind::half) return rational_mode(c) ? half_energy<Rational>(c, d) : half_energy<double>(c, d);
  require_float(c, "upper energies");
  auto geo = std::make_shared<const UpperGeometry>(triadic(c));
  UpperSolution s(geo, upper_data(*geo, load_data(c)));
  int depth = c.depth >= 0 ? c.depth : s.data().depth;
  auto est = energy_estimate_upper(geo, s, depth);
  double scale = std::pow(upper_scale, static_cast<double>(geo->m(1)));
  Table t;
  t.columns = {"energy", "orthogonal_energy", "haar_sum", "ratio", "eta", "eta_band_low", "eta_band_high"};
  t.rows.push_back({cell(est.energy), cell(est.orthogonal_energy), cell(est.haar_sum), cell(est.ratio()), cell(geo->eta(0)),
                    cell(1.116924 * scale), cell(2 * scale)});
  return t;
}

Table cmd_haar(const Config& c) {
  auto d = parse_domain(c.domain);
  if (d.kind != Kind::upper) throw CapabilityError("Haar expansions are implemented for upper domains");
  require_float(c, "Haar expansions");
  auto geo = std::make_shared<const UpperGeometry>(triadic(c));
  UpperSolution s(geo, upper_data(*geo, load_data(c)));
  int depth = c.depth >= 0 ? c.depth : s.data().depth;
  auto h = haar_expand(s, depth);
  Table t;
  t.columns = {"word", "j", "coefficient"};
  for (const auto& k : h.coefficients) t.rows.push_back({cell(k.w.str()), cell(k.j), cell(k.c)});
  t.meta["b"] = h.b;
  auto back = haar_reconstruct(*geo, h, s.data().q0, depth);
  double err = 0;
  for (const auto& w : geo->words(depth)) err = std::max(err, std::abs(back.cylinder_value(w) - s.data().cylinder_value(w)));
  t.meta["reconstruction_error"] = err;
  return t;
}

// ---- dtn ----

template <Scalar T>
json half_data_json(const HalfBoundaryData<T>& f) {
  json j;
  j["schema"] = 1;
  j["q1"] = cell(f.q1());
  if (f.explicit_q0()) j["q0"] = cell(*f.explicit_q0());
  j["atoms"] = json::array();
  for (const auto& [k, v] : f.atoms()) j["atoms"].push_back({{"w", k.first.str()}, {"j", k.second}, {"v", cell(v)}});
  j["tails"] = json::array();
  for (const auto& [w, t] : f.tails()) j["tails"].push_back({{"w", w.str()}, {"c", cell(t.c)}, {"a", cell(t.a)}, {"rho", cell(t.rho)}});
  return j;
}

template <Scalar T>
void dtn_inverse(const Config& c) {
  std::vector<T> eta;
  std::stringstream in(c.inverse);
  std::string part;
  while (std::getline(in, part, ',')) eta.push_back(from_rational<T>(parse_rational(part)));
  auto f = neumann_inverse_sg(eta);
  std::ofstream file;
  if (!c.out.empty()) file.open(c.out);
  (c.out.empty() ? std::cout : file) << half_data_json(f).dump(2) << '\n';
}

template <Scalar T>
Table dtn_forward(const Config& c) {
  auto geo = std::make_shared<const HalfGeometry>(2);
  HalfSolution<T> s(geo, half_data<T>(load_data(c)));
  auto d = dirichlet_to_neumann_sg(s, c.terms);
  Table t;
  t.columns = {"k", "scaled_derivative", "telescoped", "partial_sum"};
  for (std::size_t k = 0; k < d.terms.size(); ++k) {
    t.rows.push_back({cell(k), cell(d.terms[k]), cell(d.identity_terms[k]), cell(d.partial_sums[k])});
  }
  t.meta["limit"] = cell(d.limit);
  t.meta["q1_derivative"] = cell(d.q1_derivative);
  return t;
}

// ---- compare ----

void write_svg(const std::string& path, const std::vector<LevelDiscrepancy>& r) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  const double w = 480, h = 320, pad = 48;
  std::vector<std::pair<double, double>> pts;
  for (const auto& l : r) {
    if (l.max_abs > 0) pts.emplace_back(l.level, std::log10(l.max_abs));
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"24\" font-size=\"14\">log10 max discrepancy by level</text>\n";
  if (!pts.empty()) {
    double x0 = r.front().level, x1 = std::max<double>(r.back().level, x0 + 1);
    double y0 = pts.front().second, y1 = y0;
    for (const auto& p : pts) {
      y0 = std::min(y0, p.second);
      y1 = std::max(y1, p.second);
    }
    if (y1 - y0 < 1) y1 = y0 + 1;
    auto sx = [&](double x) { return pad + (x - x0) / (x1 - x0) * (w - 2 * pad); };
    auto sy = [&](double y) { return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad); };
    out << "<polyline fill=\"none\" stroke=\"black\" points=\"";
    for (const auto& p : pts) out << format_number(sx(p.first)) << ',' << format_number(sy(p.second)) << ' ';
    out << "\"/>\n";
    for (const auto& p : pts) {
      out << "<circle cx=\"" << format_number(sx(p.first)) << "\" cy=\"" << format_number(sy(p.second)) << "\" r=\"3\"/>\n";
      out << "<text x=\"" << format_number(sx(p.first) - 6) << "\" y=\"" << h - pad + 16 << "\" font-size=\"11\">"
          << static_cast<int>(p.first) << "</text>\n";
    }
    out << "<text x=\"4\" y=\"" << format_number(sy(y1) + 4) << "\" font-size=\"11\">" << format_number(std::round(y1 * 10) / 10) << "</text>\n";
    out << "<text x=\"4\" y=\"" << format_number(sy(y0) + 4) << "\" font-size=\"11\">" << format_number(std::round(y0 * 10) / 10) << "</text>\n";
  }
  out << "</svg>\n";
}

template <Scalar T>
Table compare_with(const Config& c, const DomainSpec& d) {
  DomainGeometry dom = domain_geometry(c, d);
  json j = load_data(c);
  CompareOptions opt;
  std::function<T(LatticePoint)> boundary, eval;
  std::shared_ptr<void> keep;
  int probe = c.probe;
  if (d.kind == Kind::half) {
    auto s = std::make_shared<HalfSolution<T>>(std::make_shared<const HalfGeometry>(d.l), half_data<T>(j));
    keep = s;
    boundary = half_boundary_function(*s);
    eval = [s](LatticePoint p) { return s->value(p); };
    if (probe == -2) probe = s->data().depth() + 1;
  } else if (d.kind == Kind::lower) {
    auto geo = std::make_shared<const LowerGeometry<T>>(binary(c));
    auto s = std::make_shared<LowerSolution<T>>(geo, lower_data<T>(*geo, j));
    keep = s;
    boundary = lower_boundary_function(*s);
    eval = [s](LatticePoint p) { return s->value(p); };
    if (probe == -2) probe = -1;
  } else {
    if constexpr (is_exact_v<T>) {
      throw CapabilityError("upper domains need float mode: eta(lambda) is an irrational limit");
    } else {
      auto geo = std::make_shared<const UpperGeometry>(triadic(c));
      auto s = std::make_shared<UpperSolution>(geo, upper_data(*geo, j));
      keep = s;
      boundary = upper_boundary_function(*s);
      eval = [s](LatticePoint p) { return s->value(p); };
      if (probe == -2) probe = 1;
    }
  }
  opt.probe_level = probe;
  opt.graph = probe >= 0 ? DomainGraphOptions{true, probe} : DomainGraphOptions{false, 0};
  auto r = compare_levels<T>(dom, parse_levels(c.levels), boundary, eval, opt);
  Table t;
  t.columns = {"level", "points", "unknowns", "max_abs", "mean_abs", "exact"};
  for (const auto& l : r) t.rows.push_back({cell(l.level), cell(l.points), cell(l.unknowns), cell(l.max_abs), cell(l.mean_abs), cell(l.exact)});
  bool all_exact = std::all_of(r.begin(), r.end(), [](const LevelDiscrepancy& l) { return l.exact; });
  t.meta["decreasing"] = strictly_decreasing(r);
  t.meta["all_exact"] = all_exact;
  t.meta["probe_level"] = probe;
  t.meta["mode"] = c.mode;
  if (!c.svg.empty()) write_svg(c.svg, r);
  return t;
}

Table cmd_compare(const Config& c) {
  auto d = parse_domain(c.domain);
  return rational_mode(c) ? compare_with<Rational>(c, d) : compare_with<double>(c, d);
}

int run(int argc, char** argv) {
  CLI::App app{"Harmonic functions on Sierpinski gasket domains"};
  app.require_subcommand(1);
  Config c;
  auto common = [&](CLI::App* s, bool data) {
    s->add_option("--domain", c.domain, "half-sg<l>, upper or lower")->capture_default_str();
    s->add_option("--lambda", c.lambda, "cut parameter: p/q, digits:(m,i)...periodic:(m,i)..., or bits:...periodic:...");
    if (data) s->add_option("--data", c.data, "boundary data JSON file");
    s->add_option("--mode", c.mode, "rational or float")->capture_default_str();
    s->add_option("--out", c.out, "output path (default stdout)");
    s->add_option("--format", c.format, "csv or json")->capture_default_str();
  };
  auto* solve_cmd = app.add_subcommand("solve", "evaluate the harmonic extension at the level-m vertices");
  common(solve_cmd, true);
  solve_cmd->add_option("--level", c.level, "vertex level")->capture_default_str();
  auto* oracle_cmd = app.add_subcommand("oracle", "graph-harmonic solve on the domain graph");
  common(oracle_cmd, true);
  oracle_cmd->add_option("--level", c.level, "graph level")->capture_default_str();
  auto* graph_cmd = app.add_subcommand("graph", "export the domain graph as edge and vertex CSV");
  common(graph_cmd, false);
  graph_cmd->add_option("--level", c.level, "graph level")->capture_default_str();
  auto* eta_cmd = app.add_subcommand("eta", "eta(lambda) with its certified bound");
  common(eta_cmd, false);
  eta_cmd->add_option("--depth", c.depth, "fixed recursion depth (default adaptive)");
  eta_cmd->add_option("--seed", c.seed, "lower-domain seed c1,c2")->capture_default_str();
  eta_cmd->add_flag("--check-closed-form", c.check_closed_form, "cross-check against the closed forms");
  auto* measure_cmd = app.add_subcommand("measure", "boundary measure masses");
  common(measure_cmd, false);
  measure_cmd->add_option("--depth", c.depth, "cylinder depth (default 2)");
  auto* energy_cmd = app.add_subcommand("energy", "energy and its estimate");
  common(energy_cmd, true);
  energy_cmd->add_option("--depth", c.depth, "Haar depth for upper domains (default data depth)");
  auto* haar_cmd = app.add_subcommand("haar", "Haar coefficients of upper-domain data");
  common(haar_cmd, true);
  haar_cmd->add_option("--depth", c.depth, "expansion depth (default data depth)");
  auto* compare_cmd = app.add_subcommand("compare", "evaluator against graph solves across levels");
  common(compare_cmd, true);
  compare_cmd->add_option("--levels", c.levels, "levels, 3..8 or 3,5,7")->capture_default_str();
  compare_cmd->add_option("--probe", c.probe, "probe vertex level (-1 for all vertices)");
  compare_cmd->add_option("--svg", c.svg, "write a line plot of the max discrepancy");
  auto* dtn_cmd = app.add_subcommand("dtn", "Dirichlet-to-Neumann map on the SG half domain");
  common(dtn_cmd, true);
  dtn_cmd->add_option("--terms", c.terms, "number of p_k terms")->capture_default_str();
  dtn_cmd->add_option("--inverse", c.inverse, "comma-separated derivatives; writes boundary data JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*solve_cmd) emit(cmd_solve(c, false), c, "solve");
  if (*oracle_cmd) emit(cmd_solve(c, true), c, "oracle");
  if (*graph_cmd) cmd_graph(c);
  if (*eta_cmd) emit(cmd_eta(c), c, "eta");
  if (*measure_cmd) emit(cmd_measure(c), c, "measure");
  if (*energy_cmd) emit(cmd_energy(c), c, "energy");
  if (*haar_cmd) emit(cmd_haar(c), c, "haar");
  if (*compare_cmd) emit(cmd_compare(c), c, "compare");
  if (*dtn_cmd) {
    if (parse_domain(c.domain).kind != Kind::half || parse_domain(c.domain).l != 2) {
      throw CapabilityError("the Dirichlet-to-Neumann map is implemented for the SG half domain (half-sg2)");
    }
    if (!c.inverse.empty()) {
      rational_mode(c) ? dtn_inverse<Rational>(c) : dtn_inverse<double>(c);
    } else {
      emit(rational_mode(c) ? dtn_forward<Rational>(c) : dtn_forward<double>(c), c, "dtn");
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const AccuracyError& e) {
    std::cerr << "accuracy: " << e.what() << '\n';
    return 3;
  } catch (const DigitsExhausted& e) {
    std::cerr << "accuracy: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed data: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
