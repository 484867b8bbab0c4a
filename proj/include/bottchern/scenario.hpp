#pragma once
// Scenario files: parsing, validation, canonical serialization and the task
// runner behind the bcforms command line tool.

#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "conecalc.hpp"

namespace bc::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kLibraryVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Expression grammar: sums, products, integer powers and parentheses over
// literals and named atoms. Division is only by invertible values.

template <class V>
struct ExprContext {
  std::function<V(const std::string&)> ident;
  std::function<V(const GaussRational&)> literal;
  std::function<std::optional<V>(const V&)> inverse;
};

template <class V>
class ExprParser {
 public:
  ExprParser(std::string_view src, const ExprContext<V>& ctx) : s_(src), ctx_(ctx) {}

  V parse() {
    V v = sum();
    skip();
    if (pos_ < s_.size()) fail(std::string("unexpected '") + s_[pos_] + "'");
    return v;
  }

 private:
  std::string_view s_;
  const ExprContext<V>& ctx_;
  size_t pos_ = 0;

  void skip() {
    while (pos_ < s_.size() && std::isspace((unsigned char)s_[pos_])) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& w) const {
    throw ParseError("column " + std::to_string(pos_ + 1) + ": " + w);
  }

  V sum() {
    V v = product();
    for (;;) {
      if (eat('+')) v = v + product();
      else if (eat('-')) v = v - product();
      else return v;
    }
  }
  V product() {
    V v = unary();
    for (;;) {
      if (eat('*')) {
        v = v * unary();
      } else if (eat('/')) {
        size_t at = pos_;
        V d = unary();
        auto inv = ctx_.inverse(d);
        if (!inv) {
          pos_ = at;
          fail("can only divide by a nonzero constant or a Laurent parameter");
        }
        v = v * *inv;
      } else {
        return v;
      }
    }
  }
  V unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  V power() {
    V base = atom();
    if (!eat('^')) return base;
    bool neg = eat('-');
    skip();
    size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit((unsigned char)s_[pos_])) ++pos_;
    if (start == pos_) fail("integer exponent expected");
    if (pos_ - start > 3) fail("exponent too large");
    int e = std::stoi(std::string(s_.substr(start, pos_ - start)));
    if (neg) {
      auto inv = ctx_.inverse(base);
      if (!inv) fail("negative power of a non-invertible value");
      base = *inv;
    }
    V acc = ctx_.literal(GaussRational(Rational(1)));
    for (int k = 0; k < e; ++k) acc = acc * base;
    return acc;
  }
  V atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      V v = sum();
      if (!eat(')')) fail("')' expected");
      return v;
    }
    if (std::isdigit((unsigned char)c) || c == '.') {
      size_t start = pos_;
      std::string digits, frac;
      while (pos_ < s_.size() && std::isdigit((unsigned char)s_[pos_])) digits += s_[pos_++];
      if (pos_ < s_.size() && s_[pos_] == '.') {
        ++pos_;
        while (pos_ < s_.size() && std::isdigit((unsigned char)s_[pos_])) frac += s_[pos_++];
      }
      if (digits.empty() && frac.empty()) {
        pos_ = start;
        fail("malformed number");
      }
      std::string q = (digits.empty() ? "0" : digits) + frac + "/1" + std::string(frac.size(), '0');
      return ctx_.literal(GaussRational(Rational::parse(q)));
    }
    if (std::isalpha((unsigned char)c) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum((unsigned char)s_[pos_]) || s_[pos_] == '_')) ++pos_;
      std::string name(s_.substr(start, pos_ - start));
      try {
        return ctx_.ident(name);
      } catch (const ParseError& e) {
        pos_ = start;
        fail(e.what());
      }
    }
    fail(std::string("unexpected '") + c + "'");
  }
};

/// Polynomial in one variable T, as an expression value.
template <Scalar S>
struct PolyValue {
  std::vector<S> c;

  static PolyValue constant(const S& s) { return {{s}}; }
  PolyValue operator-() const {
    PolyValue r = *this;
    for (auto& x : r.c) x = -x;
    return r;
  }
  friend PolyValue operator+(const PolyValue& a, const PolyValue& b) {
    PolyValue r;
    r.c.assign(std::max(a.c.size(), b.c.size()), S(0));
    for (size_t k = 0; k < a.c.size(); ++k) r.c[k] = r.c[k] + a.c[k];
    for (size_t k = 0; k < b.c.size(); ++k) r.c[k] = r.c[k] + b.c[k];
    return r;
  }
  friend PolyValue operator-(const PolyValue& a, const PolyValue& b) { return a + (-b); }
  friend PolyValue operator*(const PolyValue& a, const PolyValue& b) {
    PolyValue r;
    if (a.c.empty() || b.c.empty()) return r;
    r.c.assign(a.c.size() + b.c.size() - 1, S(0));
    for (size_t i = 0; i < a.c.size(); ++i)
      for (size_t j = 0; j < b.c.size(); ++j) r.c[i + j] = r.c[i + j] + a.c[i] * b.c[j];
    return r;
  }
  Polynomial<S> polynomial() const {
    Polynomial<S> p;
    p.c = c;
    while (p.c.size() > 1 && scalar_traits<S>::is_zero(p.c.back())) p.c.pop_back();
    if (p.c.empty()) p.c.push_back(S(0));
    return p;
  }
};

template <Scalar S>
Polynomial<S> parse_polynomial(const std::string& src) {
  ExprContext<PolyValue<S>> ctx;
  ctx.ident = [](const std::string& name) -> PolyValue<S> {
    if (name == "T") return {{S(0), S(1)}};
    if (name == "i") return PolyValue<S>::constant(convert_scalar<S>(GaussRational(Rational(), Rational(1))));
    throw ParseError("unknown identifier '" + name + "' (polynomials are in T)");
  };
  ctx.literal = [](const GaussRational& q) { return PolyValue<S>::constant(convert_scalar<S>(q)); };
  ctx.inverse = [](const PolyValue<S>& v) -> std::optional<PolyValue<S>> {
    auto p = v.polynomial();
    if (p.degree() != 0 || scalar_traits<S>::is_zero(p.c[0])) return std::nullopt;
    return PolyValue<S>::constant(S(1) / p.c[0]);
  };
  return ExprParser<PolyValue<S>>(src, ctx).parse().polynomial();
}

// ---------------------------------------------------------------------------
// Scalars and forms in canonical JSON.

template <Scalar S>
Json scalar_json(const S& c) {
  if constexpr (scalar_traits<S>::exact) return c.str();
  else return Json::array({c.real(), c.imag()});
}

template <Scalar S>
S scalar_from_json(const Json& j) {
  if (j.is_string()) return convert_scalar<S>(GaussRational::parse(j.get<std::string>()));
  if (j.is_number_integer()) return S((long long)j.get<long long>());
  if constexpr (scalar_traits<S>::exact) {
    throw ParseError("floating-point coefficient in exact mode");
  } else {
    if (j.is_number()) return Complex(j.get<double>(), 0.0);
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
      return Complex(j[0].get<double>(), j[1].get<double>());
    throw ParseError("coefficient must be a string, a number or [re, im]");
  }
}

inline bool reserved_name(const std::string& s) {
  if (s == "i" || s == "T") return true;
  for (std::string p : {"zb", "z", "dzb", "dz"}) {
    if (s.rfind(p, 0) != 0) continue;
    std::string rest = s.substr(p.size());
    if (rest.empty() || std::all_of(rest.begin(), rest.end(), [](char c) { return std::isdigit((unsigned char)c); }))
      return true;
  }
  return false;
}

/// Named atoms of a jet ring: coordinates, their differentials, parameters.
template <Scalar S>
class FormAtoms {
 public:
  explicit FormAtoms(Ring r) : r_(std::move(r)) {
    const int n = r_->n();
    Form<S> w(r_);
    auto put = [&](const std::string& name, Form<S> f) { atoms_.emplace(name, std::move(f)); };
    auto one = Jet<S>::constant(r_, S(1));
    for (int k = 0; k < n; ++k) {
      std::string idx = std::to_string(k + 1);
      put("z" + idx, Form<S>(Jet<S>::variable(r_, k)));
      put("zb" + idx, Form<S>(Jet<S>::variable(r_, n + k)));
      put("dz" + idx, Form<S>::basis(one, w.gen_dz(k)));
      put("dzb" + idx, Form<S>::basis(one, w.gen_dzbar(k)));
    }
    if (n == 1)
      for (std::string s : {"z", "zb", "dz", "dzb"}) put(s, atoms_.at(s + "1"));
    for (int j = 0; j < r_->num_params(); ++j) {
      const auto& name = r_->param(j).name;
      put(name, Form<S>(Jet<S>::variable(r_, r_->param_var(j))));
      put("d" + name, Form<S>::basis(one, w.gen_dpi(j)));
    }
    put("i", Form<S>::constant(r_, convert_scalar<S>(GaussRational(Rational(), Rational(1)))));
  }

  const Ring& ring() const { return r_; }

  Form<S> parse(const std::string& src) const {
    ExprContext<Form<S>> ctx;
    ctx.ident = [&](const std::string& name) {
      auto it = atoms_.find(name);
      if (it == atoms_.end()) throw ParseError("unknown identifier '" + name + "'");
      return it->second;
    };
    ctx.literal = [&](const GaussRational& q) { return Form<S>::constant(r_, convert_scalar<S>(q)); };
    ctx.inverse = [&](const Form<S>& v) { return invert(v); };
    return ExprParser<Form<S>>(src, ctx).parse();
  }

  /// Inverse of a constant or of c * p for a Laurent parameter p.
  std::optional<Form<S>> invert(const Form<S>& v) const {
    if (v.terms().size() != 1 || v.terms()[0].first != 0) return std::nullopt;
    const auto& jet = v.terms()[0].second;
    if (jet.terms().size() != 1) return std::nullopt;
    const auto& t = jet.terms()[0];
    S inv = S(1) / t.c;
    if (t.m == Monomial{}) return Form<S>::constant(r_, inv);
    for (int j = 0; j < r_->num_params(); ++j) {
      if (t.m != Jet<S>::unit(r_->param_var(j)) || r_->param(j).laurent_floor >= 0) continue;
      return Form<S>::constant(r_, inv).shift_param(j, -1);
    }
    return std::nullopt;
  }

  /// Generator named in a canonical mask string such as "dz^dzb".
  Form<S> generators(const std::string& mask) const {
    Form<S> acc = Form<S>::constant(r_, S(1));
    if (mask == "1") return acc;
    std::stringstream ss(mask);
    std::string g;
    while (std::getline(ss, g, '^')) {
      auto it = atoms_.find(g);
      if (it == atoms_.end() || it->second.terms().empty() || it->second.terms()[0].first == 0)
        throw ParseError("unknown generator '" + g + "'");
      acc = acc * it->second;
    }
    return acc;
  }

 private:
  Ring r_;
  std::map<std::string, Form<S>> atoms_;
};

template <Scalar S>
Json form_json(const Form<S>& w) {
  Json out = Json::array();
  const Ring& r = w.ring();
  for (auto& [m, c] : w.terms())
    for (auto& t : c.terms()) {
      Json e = Json::array();
      for (int v = 0; v < r->num_vars(); ++v) e.push_back((int)t.m.e[v]);
      out.push_back(Json{{"d", w.mask_str(m)}, {"m", e}, {"c", scalar_json(t.c)}});
    }
  return out;
}

template <Scalar S>
Form<S> form_from_json(const Json& j, const FormAtoms<S>& atoms) {
  const Ring& r = atoms.ring();
  if (j.is_string()) return atoms.parse(j.get<std::string>());
  if (j.is_number()) return Form<S>::constant(r, scalar_from_json<S>(j));
  if (!j.is_array()) throw ParseError("form must be an expression string or a list of terms");
  Form<S> acc(r);
  for (const auto& t : j) {
    if (!t.is_object() || !t.contains("m") || !t.contains("c")) throw ParseError("term needs \"m\" and \"c\"");
    const auto& e = t.at("m");
    if (!e.is_array() || (int)e.size() != r->num_vars())
      throw ParseError("exponent vector must have " + std::to_string(r->num_vars()) + " entries");
    Monomial mono;
    for (int v = 0; v < r->num_vars(); ++v) {
      int x = e[v].get<int>();
      if (x < -64 || x > 64) throw ParseError("exponent out of range");
      if (x < 0 && (v < 2 * r->n() || x < r->param(v - 2 * r->n()).laurent_floor))
        throw ParseError("negative exponent below the Laurent floor");
      mono.e[v] = (int8_t)x;
    }
    Form<S> f = Form<S>(Jet<S>::monomial(r, mono, scalar_from_json<S>(t.at("c"))));
    acc += atoms.generators(t.value("d", std::string("1"))) * f;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Locations.

/// "block (src,tgt), monomial <form part> <jet part>" for the largest
/// coefficient of an End-valued form; blocks are named by source and target
/// degree.
template <Scalar S>
std::pair<double, std::string> locate(const EndForm<S>& a) {
  std::pair<double, std::string> best{0.0, ""};
  const auto& b = a.bundle();
  auto ranks = b.ranks();
  for (int i = 0; i < a.rank(); ++i)
    for (int j = 0; j < a.rank(); ++j) {
      auto [v, where] = a.at(i, j).max_abs();
      if (v <= best.first) continue;
      std::string mask = where.substr(0, where.find(" @ "));
      std::string mono = where.substr(where.find(" @ ") + 3);
      std::string term = mask == "1" ? mono : (mono == "1" ? mask : mask + " " + mono);
      std::string block = "block (" + std::to_string(b.degree(j)) + "," + std::to_string(b.degree(i)) + ")";
      if (ranks[b.degree(i)] > 1 || ranks[b.degree(j)] > 1)
        block += " entry (" + std::to_string(i) + "," + std::to_string(j) + ")";
      best = {v, block + ", monomial " + term};
    }
  return best;
}

// ---------------------------------------------------------------------------
// Resolved scenarios.

struct Overrides {
  std::optional<std::string> mode;
  std::optional<int> jet_order;
};

template <Scalar S>
struct ModuleDef {
  std::string name;
  GradedBundle bundle;
  EndForm<S> tail;
  std::optional<CohesiveModule<S>> module;
};

template <Scalar S>
struct MetricDef {
  std::string name, module;
  EndForm<S> H;
  bool family = false;
};

template <Scalar S>
struct GaugeDef {
  std::string name, module, param;
  EndForm<S> f;
};

template <Scalar S>
struct MorphismDef {
  std::string name, source, target;
  FormMatrix<S> phi;
};

template <Scalar S>
struct TaskDef {
  std::string task, label;
  Json canonical;
  Polynomial<S> f;
  std::string module, metric, gauge, morphism, source_metric, target_metric;
  std::vector<std::vector<Rational>> points;
  std::vector<double> times;
  double tol = 1e-9, T_max = 64, quad_tol = 1e-10;
  int max_deg = 1, cap = 2;
};

template <Scalar S>
struct Model {
  std::string name, mode;
  int n = 1, order = 0;
  Ring ring;
  std::vector<ParamSpec> params;
  std::vector<ModuleDef<S>> modules;
  std::vector<MetricDef<S>> metrics;
  std::vector<GaugeDef<S>> gauges;
  std::vector<MorphismDef<S>> morphisms;
  std::vector<TaskDef<S>> tasks;

  template <class T>
  static const T* find(const std::vector<T>& v, const std::string& name) {
    for (auto& x : v)
      if (x.name == name) return &x;
    return nullptr;
  }
  const CohesiveModule<S>& module(const std::string& name) const { return *find(modules, name)->module; }
  const MetricDef<S>& metric(const std::string& name) const { return *find(metrics, name); }
};

struct TaskKind {
  const char* name;
  enum Needs { Module, Metric, Family, Gauge, Morphism, Cone, Heat } needs;
  bool uses_f;
};

inline const std::vector<TaskKind>& task_kinds() {
  static const std::vector<TaskKind> k = {
      {"flatness", TaskKind::Module, false},
      {"rescale", TaskKind::Module, false},
      {"chern-structure", TaskKind::Metric, false},
      {"chern-weil-closedness", TaskKind::Metric, true},
      {"linear-transgression", TaskKind::Metric, true},
      {"oracle", TaskKind::Metric, false},
      {"bott-chern", TaskKind::Family, true},
      {"metric-transgression", TaskKind::Family, true},
      {"secondary-corollary", TaskKind::Family, true},
      {"path-independence", TaskKind::Family, true},
      {"gauge-moduli", TaskKind::Gauge, true},
      {"cone-flatness", TaskKind::Morphism, false},
      {"cone-gamma", TaskKind::Morphism, false},
      {"cone-transgression", TaskKind::Cone, true},
      {"cone-additivity", TaskKind::Cone, true},
      {"acyclic-integral", TaskKind::Heat, false},
      {"heat-corollary", TaskKind::Heat, false},
  };
  return k;
}

inline const TaskKind* find_task_kind(const std::string& s) {
  for (auto& k : task_kinds())
    if (s == k.name) return &k;
  return nullptr;
}

/// Collects located validation messages.
class Errors {
 public:
  void add(const std::string& where, const std::string& what) { list_.push_back(where + ": " + what); }
  const std::vector<std::string>& list() const { return list_; }
  bool empty() const { return list_.empty(); }

  /// Runs `fn`, recording any library or JSON error under `where`.
  template <class F>
  bool guard(const std::string& where, F&& fn) {
    try {
      fn();
      return true;
    } catch (const Error& e) {
      add(where, e.what());
    } catch (const nlohmann::json::exception& e) {
      add(where, std::string("malformed entry (") + e.what() + ")");
    }
    return false;
  }

 private:
  std::vector<std::string> list_;
};

inline std::string effective_mode(const Json& doc, const Overrides& ov) {
  if (ov.mode) return *ov.mode;
  if (doc.contains("chart") && doc["chart"].is_object()) return doc["chart"].value("mode", std::string("exact"));
  return "exact";
}

inline Rational rational_from_json(const Json& j) {
  if (j.is_number_integer()) return Rational(j.get<long long>());
  if (j.is_string()) {
    auto g = GaussRational::parse(j.get<std::string>());
    if (!g.im.is_zero()) throw ParseError("parameter values must be real");
    return g.re;
  }
  if (j.is_number()) return dyadic(j.get<double>());
  throw ParseError("parameter value must be a rational string or a number");
}

inline int degree_key(const std::string& s) {
  size_t used = 0;
  int d = 0;
  try {
    d = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ParseError("degree key '" + s + "' is not an integer");
  return d;
}

namespace detail {

template <Scalar S>
struct Resolver {
  const Json& doc;
  Errors& err;
  Model<S> m;
  std::optional<FormAtoms<S>> atoms;

  std::vector<int> indices_of(const GradedBundle& b, int deg) const {
    std::vector<int> out;
    for (int i = 0; i < b.rank(); ++i)
      if (b.degree(i) == deg) out.push_back(i);
    return out;
  }

  Json items(const char* key) const {
    if (!doc.contains(key)) return Json::array();
    return doc.at(key);
  }

  std::string item_name(const Json& it, const std::string& kind, size_t k) const {
    std::string loc = kind + "[" + std::to_string(k) + "]";
    if (it.is_object() && it.contains("name") && it["name"].is_string()) loc += " '" + it["name"].get<std::string>() + "'";
    return loc;
  }

  /// Reads [{"block": [src, tgt], "matrix": [[...]]}] into x (added on top).
  void read_blocks(const Json& blocks, const GradedBundle& src, const GradedBundle& tgt, FormMatrix<S>& x,
                   const std::string& where, std::optional<int>* k_of_block = nullptr) {
    if (!blocks.is_array()) {
      err.add(where, "expected a list of blocks");
      return;
    }
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
      const auto& blk = blocks[bi];
      std::string loc = where + "[" + std::to_string(bi) + "]";
      err.guard(loc, [&] {
        auto bd = blk.at("block");
        if (!bd.is_array() || bd.size() != 2) throw ParseError("\"block\" must be [source degree, target degree]");
        int sd = bd[0].get<int>(), td = bd[1].get<int>();
        auto cols = indices_of(src, sd), rows = indices_of(tgt, td);
        if (cols.empty()) throw StructureError("source degree " + std::to_string(sd) + " does not exist");
        if (rows.empty()) throw StructureError("target degree " + std::to_string(td) + " does not exist");
        const auto& mat = blk.at("matrix");
        if (!mat.is_array() || mat.size() != rows.size())
          throw StructureError("matrix must have " + std::to_string(rows.size()) + " rows");
        std::optional<int> k;
        if (k_of_block && blk.contains("k")) k = blk["k"].get<int>();
        for (size_t i = 0; i < rows.size(); ++i) {
          if (!mat[i].is_array() || mat[i].size() != cols.size())
            throw StructureError("row " + std::to_string(i) + " must have " + std::to_string(cols.size()) + " entries");
          for (size_t j = 0; j < cols.size(); ++j) {
            Form<S> w;
            try {
              w = form_from_json(mat[i][j], *atoms);
            } catch (const ParseError& e) {
              throw ParseError("matrix[" + std::to_string(i) + "][" + std::to_string(j) + "]: " + e.what());
            }
            if (k)
              for (auto& [mask, c] : w.terms()) {
                auto bdg = bidegree(mask, m.n);
                if (bdg.p != 0 || bdg.m != 0 || bdg.q != *k)
                  throw StructureError("matrix[" + std::to_string(i) + "][" + std::to_string(j) + "]: term " +
                                       w.mask_str(mask) + " is not a (0," + std::to_string(*k) + ") form");
              }
            x[rows[i]][cols[j]] += w;
          }
        }
      });
    }
  }

  FormMatrix<S> zero_matrix(int rows, int cols) const {
    return FormMatrix<S>(rows, std::vector<Form<S>>(cols, Form<S>(m.ring)));
  }
  EndForm<S> to_endform(const FormMatrix<S>& x, const GradedBundle& b) const {
    EndForm<S> a(b, m.ring);
    for (int i = 0; i < b.rank(); ++i)
      for (int j = 0; j < b.rank(); ++j) a.at(i, j) = x[i][j];
    return a;
  }

  bool chart(const Overrides& ov) {
    bool ok = err.guard("chart", [&] {
      const auto& c = doc.at("chart");
      m.n = c.value("n", 1);
      m.order = ov.jet_order ? *ov.jet_order : c.value("order", 4);
    });
    m.name = doc.value("name", std::string("scenario"));
    m.mode = effective_mode(doc, ov);
    if (m.mode != "exact" && m.mode != "numeric") err.add("chart.mode", "must be \"exact\" or \"numeric\"");
    if (!ok) return false;
    auto ps = items("parameters");
    for (size_t k = 0; k < ps.size(); ++k) {
      err.guard("parameters[" + std::to_string(k) + "]", [&] {
        ParamSpec p;
        p.name = ps[k].at("name").template get<std::string>();
        p.laurent_floor = ps[k].value("laurent_floor", 0);
        bool ident = !p.name.empty() && std::isalpha((unsigned char)p.name[0]) &&
                     std::all_of(p.name.begin(), p.name.end(), [](char c) { return std::isalnum((unsigned char)c) || c == '_'; });
        if (!ident || reserved_name(p.name)) throw ParseError("'" + p.name + "' cannot name a parameter");
        for (auto& q : m.params)
          if (q.name == p.name || "d" + q.name == p.name || q.name == "d" + p.name)
            throw ParseError("parameter name '" + p.name + "' clashes with '" + q.name + "'");
        m.params.push_back(p);
      });
    }
    return err.guard("chart", [&] {
      m.ring = make_ring(m.n, m.order, m.params);
      atoms.emplace(m.ring);
    });
  }

  void modules() {
    auto list = items("modules");
    for (size_t k = 0; k < list.size(); ++k) {
      std::string where = item_name(list[k], "modules", k);
      ModuleDef<S> d;
      bool ok = err.guard(where, [&] {
        d.name = list[k].at("name").template get<std::string>();
        if (Model<S>::find(m.modules, d.name)) throw StructureError("duplicate module name");
        std::map<int, int> ranks;
        for (auto& [key, r] : list[k].at("ranks").items()) ranks[degree_key(key)] = r.template get<int>();
        d.bundle = GradedBundle::from_ranks(ranks);
        if (d.bundle.rank() == 0) throw StructureError("bundle has rank zero");
      });
      if (!ok) continue;
      FormMatrix<S> x = zero_matrix(d.bundle.rank(), d.bundle.rank());
      size_t before = err.list().size();
      std::optional<int> kk;
      if (list[k].contains("tail")) read_blocks(list[k]["tail"], d.bundle, d.bundle, x, where + ".tail", &kk);
      if (err.list().size() != before) {
        m.modules.push_back(d);
        continue;
      }
      d.tail = to_endform(x, d.bundle);
      err.guard(where, [&] {
        Superconnection<S> s(Base::Delbar, d.tail);
        auto fl = is_flat(s);
        if (!fl.flat) throw StructureError("flatness defect at " + locate(fl.defect).second);
        d.module.emplace(d.bundle, d.tail);
      });
      m.modules.push_back(d);
    }
  }

  const ModuleDef<S>* module_ref(const Json& it, const char* key, const std::string& where) {
    std::string name;
    if (!err.guard(where, [&] { name = it.at(key).template get<std::string>(); })) return nullptr;
    auto* d = Model<S>::find(m.modules, name);
    if (!d) err.add(where, "unknown module '" + name + "'");
    else if (!d->module) err.add(where, "module '" + name + "' is invalid");
    return d && d->module ? d : nullptr;
  }

  bool depends_on_params(const EndForm<S>& a) const {
    for (int i = 0; i < a.rank(); ++i)
      for (int j = 0; j < a.rank(); ++j)
        for (auto& [mask, c] : a.at(i, j).terms())
          for (auto& t : c.terms())
            for (int p = 0; p < m.ring->num_params(); ++p)
              if (t.m.e[m.ring->param_var(p)] != 0) return true;
    return false;
  }

  /// Positivity of a metric (family) at one parameter point.
  void check_positive(const MetricDef<S>& d, const std::vector<Rational>& point, const std::string& where) {
    err.guard(where, [&] {
      EndForm<S> h = d.H;
      for (int p = 0; p < m.ring->num_params(); ++p)
        h = h.map([&](const Form<S>& w) { return w.substitute_param(p, convert_scalar<S>(GaussRational(point[p]))); });
      try {
        HermitianMetric<S> hm(h);
      } catch (const DomainError&) {
        std::string pt;
        for (auto& x : point) pt += (pt.empty() ? "" : ",") + x.str();
        throw DomainError("metric '" + d.name + "' is not positive definite at the base point" +
                          (point.empty() ? std::string() : " for parameters (" + pt + ")"));
      }
    });
  }

  void metrics() {
    auto list = items("metrics");
    for (size_t k = 0; k < list.size(); ++k) {
      std::string where = item_name(list[k], "metrics", k);
      const auto& it = list[k];
      MetricDef<S> d;
      if (!err.guard(where, [&] {
            d.name = it.at("name").template get<std::string>();
            if (Model<S>::find(m.metrics, d.name)) throw StructureError("duplicate metric name");
          }))
        continue;
      auto* md = module_ref(it, "module", where);
      if (!md) continue;
      d.module = md->name;
      const GradedBundle& b = md->bundle;
      FormMatrix<S> x = zero_matrix(b.rank(), b.rank());
      size_t before = err.list().size();
      err.guard(where + ".blocks", [&] {
        const auto& blocks = it.at("blocks");
        std::set<int> seen;
        for (auto& [key, mat] : blocks.items()) {
          int deg = degree_key(key);
          seen.insert(deg);
          Json wrapped = Json::array({Json{{"block", {deg, deg}}, {"matrix", mat}}});
          read_blocks(wrapped, b, b, x, where + ".blocks." + key);
        }
        for (auto [deg, r] : b.ranks())
          if (!seen.count(deg)) err.add(where + ".blocks", "no block for degree " + std::to_string(deg));
      });
      if (err.list().size() != before) continue;
      d.H = to_endform(x, b);
      bool fine = true;
      for (int i = 0; i < b.rank(); ++i)
        for (int j = 0; j < b.rank(); ++j) {
          for (auto& [mask, c] : d.H.at(i, j).terms())
            if (mask != 0) {
              err.add(where, "entry (" + std::to_string(i) + "," + std::to_string(j) + ") is not a function");
              fine = false;
              break;
            }
          if (j >= i && !agrees(d.H.at(i, j), d.H.at(j, i).star())) {
            err.add(where, "not Hermitian at entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
            fine = false;
          }
        }
      if (!fine) continue;
      d.family = depends_on_params(d.H);
      check_positive(d, std::vector<Rational>(m.ring->num_params()), where);
      m.metrics.push_back(d);
    }
  }

  void gauges() {
    auto list = items("gauge_families");
    for (size_t k = 0; k < list.size(); ++k) {
      std::string where = item_name(list[k], "gauge_families", k);
      const auto& it = list[k];
      GaugeDef<S> d;
      if (!err.guard(where, [&] {
            d.name = it.at("name").template get<std::string>();
            d.param = it.at("param").template get<std::string>();
            if (Model<S>::find(m.gauges, d.name)) throw StructureError("duplicate gauge family name");
            if (m.ring->param_index(d.param) < 0) throw StructureError("unknown parameter '" + d.param + "'");
          }))
        continue;
      auto* md = module_ref(it, "module", where);
      if (!md) continue;
      d.module = md->name;
      FormMatrix<S> x = zero_matrix(md->bundle.rank(), md->bundle.rank());
      size_t before = err.list().size();
      if (it.contains("blocks")) read_blocks(it["blocks"], md->bundle, md->bundle, x, where + ".blocks");
      if (err.list().size() != before) continue;
      d.f = EndForm<S>::identity(md->bundle, m.ring) + to_endform(x, md->bundle);
      if (err.guard(where, [&] {
            GaugeFamily<S> g(d.f, m.ring->param_index(d.param));
            gauge_tail(md->tail, d.f);
          }))
        m.gauges.push_back(d);
    }
  }

  void morphisms() {
    auto list = items("morphisms");
    for (size_t k = 0; k < list.size(); ++k) {
      std::string where = item_name(list[k], "morphisms", k);
      const auto& it = list[k];
      MorphismDef<S> d;
      if (!err.guard(where, [&] {
            d.name = it.at("name").template get<std::string>();
            if (Model<S>::find(m.morphisms, d.name)) throw StructureError("duplicate morphism name");
          }))
        continue;
      auto* src = module_ref(it, "source", where);
      auto* tgt = module_ref(it, "target", where);
      if (!src || !tgt) continue;
      d.source = src->name;
      d.target = tgt->name;
      d.phi = zero_matrix(tgt->bundle.rank(), src->bundle.rank());
      size_t before = err.list().size();
      if (it.contains("blocks")) read_blocks(it["blocks"], src->bundle, tgt->bundle, d.phi, where + ".blocks");
      if (err.list().size() != before) continue;
      if (err.guard(where, [&] {
            Morphism<S> mor(*src->module, *tgt->module, d.phi);
            auto def = Morphism<S>::max_abs(mor.closedness_defect());
            if (def.first > Tolerance::for_mode<S>().abs) throw StructureError("morphism is not closed: defect at " + def.second);
          }))
        m.morphisms.push_back(d);
    }
  }

  template <class T>
  const T* ref(const std::vector<T>& v, const Json& t, const char* key, const std::string& where, std::string& out) {
    if (!t.contains(key)) {
      err.add(where, std::string("missing \"") + key + "\"");
      return nullptr;
    }
    out = t[key].is_string() ? t[key].template get<std::string>() : std::string();
    auto* p = Model<S>::find(v, out);
    if (!p) err.add(where, std::string("unknown ") + key + " '" + out + "'");
    return p;
  }

  std::vector<Rational> point(const Json& j) const {
    if (!j.is_array() || (int)j.size() != m.ring->num_params())
      throw ParseError("a parameter point needs " + std::to_string(m.ring->num_params()) + " coordinates");
    std::vector<Rational> p;
    for (auto& x : j) p.push_back(rational_from_json(x));
    return p;
  }
  static Json point_json(const std::vector<Rational>& p) {
    Json j = Json::array();
    for (auto& x : p) j.push_back(x.str());
    return j;
  }

  void tasks() {
    auto list = items("tasks");
    if (!list.is_array()) {
      err.add("tasks", "expected a list");
      return;
    }
    for (size_t k = 0; k < list.size(); ++k) {
      const auto& t = list[k];
      std::string where = "tasks[" + std::to_string(k) + "]";
      TaskDef<S> d;
      const TaskKind* kind = nullptr;
      if (!err.guard(where, [&] {
            d.task = t.at("task").template get<std::string>();
            kind = find_task_kind(d.task);
            if (!kind) throw ParseError("unknown task '" + d.task + "'");
            d.label = t.value("label", d.task);
          }))
        continue;
      where += " (" + d.task + ")";
      size_t before = err.list().size();
      Json c{{"task", d.task}};
      if (d.label != d.task) c["label"] = d.label;
      const CohesiveModule<S>* mod = nullptr;
      switch (kind->needs) {
        case TaskKind::Module:
          if (auto* md = ref(m.modules, t, "module", where, d.module); md && md->module) mod = &*md->module;
          c["module"] = d.module;
          break;
        case TaskKind::Metric:
        case TaskKind::Family:
        case TaskKind::Heat:
          if (auto* h = ref(m.metrics, t, "metric", where, d.metric)) {
            d.module = h->module;
            if (kind->needs == TaskKind::Family && !h->family)
              err.add(where, "metric '" + d.metric + "' does not depend on any parameter");
            if (kind->needs != TaskKind::Family && h->family)
              err.add(where, "metric '" + d.metric + "' is a family; this task needs a fixed metric");
          }
          c["metric"] = d.metric;
          break;
        case TaskKind::Gauge:
          if (auto* g = ref(m.gauges, t, "gauge", where, d.gauge)) {
            d.module = g->module;
            if (auto* h = ref(m.metrics, t, "metric", where, d.metric)) {
              if (h->module != g->module) err.add(where, "metric and gauge family act on different modules");
              if (h->family) err.add(where, "metric '" + d.metric + "' must not depend on parameters");
            }
          }
          c["gauge"] = d.gauge;
          c["metric"] = d.metric;
          break;
        case TaskKind::Morphism:
        case TaskKind::Cone:
          if (auto* mo = ref(m.morphisms, t, "morphism", where, d.morphism); mo && kind->needs == TaskKind::Cone) {
            auto* hs = ref(m.metrics, t, "source_metric", where, d.source_metric);
            auto* hf = ref(m.metrics, t, "target_metric", where, d.target_metric);
            if (hs && hs->module != mo->source) err.add(where, "source_metric is not a metric on the source");
            if (hf && hf->module != mo->target) err.add(where, "target_metric is not a metric on the target");
            if ((hs && hs->family) || (hf && hf->family)) err.add(where, "cone metrics must not depend on parameters");
          }
          c["morphism"] = d.morphism;
          if (kind->needs == TaskKind::Cone) {
            c["source_metric"] = d.source_metric;
            c["target_metric"] = d.target_metric;
          }
          break;
      }
      (void)mod;
      err.guard(where, [&] {
        if (kind->uses_f) {
          const Json& f = t.contains("f") ? t["f"] : Json("T^2");
          if (f.is_string()) {
            d.f = parse_polynomial<S>(f.template get<std::string>());
          } else if (f.is_array()) {
            for (auto& x : f) d.f.c.push_back(scalar_from_json<S>(x));
            d.f = PolyValue<S>{d.f.c}.polynomial();
          } else {
            throw ParseError("\"f\" must be a polynomial in T or a coefficient list");
          }
          Json fc = Json::array();
          for (auto& x : d.f.c) fc.push_back(scalar_json(x));
          c["f"] = fc;
        }
        bool numeric_task = d.task == "secondary-corollary" || d.task == "path-independence" ||
                            kind->needs == TaskKind::Heat;
        d.tol = t.value("tol", d.task == "path-independence" ? 1e-10 : kind->needs == TaskKind::Heat ? 1e-6 : 1e-9);
        if (!(d.tol >= 0)) throw ParseError("\"tol\" must be non-negative");
        if (m.mode == "numeric" || numeric_task) c["tol"] = d.tol;
        if (d.task == "oracle") {
          d.max_deg = t.value("max_deg", 1);
          c["max_deg"] = d.max_deg;
        }
        if (d.task == "bott-chern" || d.task == "metric-transgression") {
          d.cap = t.value("cap", 2);
          if (d.cap < 2) throw ParseError("\"cap\" must be at least 2");
          c["cap"] = d.cap;
          if (!t.contains("points")) throw ParseError("missing \"points\"");
          for (auto& p : t["points"]) d.points.push_back(point(p));
          if (d.points.empty()) throw ParseError("\"points\" is empty");
        }
        if (d.task == "secondary-corollary") {
          for (auto& p : t.at("path")) d.points.push_back(point(p));
          if (d.points.size() < 2) throw ParseError("a path needs at least two points");
        }
        if (d.task == "path-independence") {
          for (auto& p : t.at("simplex")) d.points.push_back(point(p));
          if (d.points.size() != 3) throw ParseError("\"simplex\" needs three points");
        }
        if (!d.points.empty()) {
          Json ps = Json::array();
          for (auto& p : d.points) ps.push_back(point_json(p));
          c[d.task == "secondary-corollary" ? "path" : d.task == "path-independence" ? "simplex" : "points"] = ps;
          if (auto* h = Model<S>::find(m.metrics, d.metric))
            for (auto& p : d.points) check_positive(*h, p, where);
        }
        if (d.task == "acyclic-integral") {
          d.T_max = t.value("T_max", 64.0);
          d.quad_tol = t.value("quad_tol", 1e-10);
          if (!(d.T_max >= 2)) throw ParseError("\"T_max\" must be at least 2");
          c["T_max"] = d.T_max;
          c["quad_tol"] = d.quad_tol;
        }
        if (d.task == "heat-corollary") {
          d.times = t.value("t", std::vector<double>{1.0, 2.0});
          for (double x : d.times)
            if (!(x > 0)) throw ParseError("rescaling times must be positive");
          c["t"] = d.times;
        }
      });
      if (err.list().size() != before) continue;
      d.canonical = c;
      m.tasks.push_back(d);
    }
  }
};

}  // namespace detail

template <Scalar S>
struct Resolved {
  Model<S> model;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Resolves and validates a scenario document; every problem found is listed.
template <Scalar S>
Resolved<S> resolve(const Json& doc, const Overrides& ov = {}) {
  Errors err;
  if (!doc.is_object()) {
    err.add("scenario", "top level must be an object");
    return {{}, err.list()};
  }
  detail::Resolver<S> r{doc, err, {}, {}};
  if (r.chart(ov)) {
    r.modules();
    r.metrics();
    r.gauges();
    r.morphisms();
    r.tasks();
  }
  return {std::move(r.m), err.list()};
}

template <Scalar S>
Json blocks_json(const FormMatrix<S>& x, const GradedBundle& src, const GradedBundle& tgt) {
  Json out = Json::array();
  for (auto [sd, sr] : src.ranks())
    for (auto [td, tr] : tgt.ranks()) {
      Json mat = Json::array();
      bool any = false;
      for (int i = 0; i < tgt.rank(); ++i) {
        if (tgt.degree(i) != td) continue;
        Json row = Json::array();
        for (int j = 0; j < src.rank(); ++j) {
          if (src.degree(j) != sd) continue;
          any |= !x[i][j].is_zero();
          row.push_back(form_json(x[i][j]));
        }
        mat.push_back(row);
      }
      if (any) out.push_back(Json{{"block", {sd, td}}, {"matrix", mat}});
    }
  return out;
}

template <Scalar S>
FormMatrix<S> matrix_of(const EndForm<S>& a) {
  FormMatrix<S> x(a.rank());
  for (int i = 0; i < a.rank(); ++i)
    for (int j = 0; j < a.rank(); ++j) x[i].push_back(a.at(i, j));
  return x;
}

inline Json ranks_json(const GradedBundle& b) {
  Json r = Json::object();
  for (auto [d, k] : b.ranks()) r[std::to_string(d)] = k;
  return r;
}

/// Canonical serialization: every coefficient written out term by term, all
/// task options explicit.
template <Scalar S>
Json canonical(const Model<S>& m) {
  Json out;
  out["name"] = m.name;
  out["chart"] = Json{{"n", m.n}, {"order", m.order}, {"mode", m.mode}};
  Json ps = Json::array();
  for (auto& p : m.params) ps.push_back(Json{{"name", p.name}, {"laurent_floor", p.laurent_floor}});
  out["parameters"] = ps;
  Json mods = Json::array();
  for (auto& d : m.modules)
    mods.push_back(Json{{"name", d.name}, {"ranks", ranks_json(d.bundle)}, {"tail", blocks_json(matrix_of(d.tail), d.bundle, d.bundle)}});
  out["modules"] = mods;
  Json mets = Json::array();
  for (auto& d : m.metrics) {
    const auto& b = d.H.bundle();
    Json blocks = Json::object();
    for (auto [deg, r] : b.ranks()) {
      Json mat = Json::array();
      for (int i = 0; i < b.rank(); ++i) {
        if (b.degree(i) != deg) continue;
        Json row = Json::array();
        for (int j = 0; j < b.rank(); ++j)
          if (b.degree(j) == deg) row.push_back(form_json(d.H.at(i, j)));
        mat.push_back(row);
      }
      blocks[std::to_string(deg)] = mat;
    }
    mets.push_back(Json{{"name", d.name}, {"module", d.module}, {"blocks", blocks}});
  }
  out["metrics"] = mets;
  Json gs = Json::array();
  for (auto& d : m.gauges) {
    auto rest = d.f - EndForm<S>::identity(d.f.bundle(), d.f.ring());
    gs.push_back(Json{{"name", d.name}, {"module", d.module}, {"param", d.param},
                      {"blocks", blocks_json(matrix_of(rest), d.f.bundle(), d.f.bundle())}});
  }
  out["gauge_families"] = gs;
  Json ms = Json::array();
  for (auto& d : m.morphisms) {
    const auto& src = Model<S>::find(m.modules, d.source)->bundle;
    const auto& tgt = Model<S>::find(m.modules, d.target)->bundle;
    ms.push_back(Json{{"name", d.name}, {"source", d.source}, {"target", d.target}, {"blocks", blocks_json(d.phi, src, tgt)}});
  }
  out["morphisms"] = ms;
  Json ts = Json::array();
  for (auto& t : m.tasks) ts.push_back(t.canonical);
  out["tasks"] = ts;
  return out;
}

inline std::string fnv1a_hex(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Running tasks.

struct TaskResult {
  std::string status;  // pass, fail, error
  std::vector<IdentityCheck> checks;
  Json info = Json::object();
  std::string error;
  double ms = 0;
};

namespace detail {

template <Scalar S>
CohesiveModule<Complex> to_numeric(const CohesiveModule<S>& e) {
  if constexpr (std::is_same_v<S, Complex>) return e;
  else return CohesiveModule<Complex>(e.bundle(), e.tail().template convert<Complex>());
}
template <Scalar S>
EndForm<Complex> to_numeric(const EndForm<S>& a) {
  if constexpr (std::is_same_v<S, Complex>) return a;
  else return a.template convert<Complex>();
}
template <Scalar S>
Polynomial<Complex> to_numeric(const Polynomial<S>& f) {
  Polynomial<Complex> p;
  for (auto& c : f.c) p.c.push_back(convert_scalar<Complex>(c));
  return p;
}

inline std::string point_label(const std::vector<Rational>& p) {
  std::string s;
  for (auto& x : p) s += (s.empty() ? "" : ",") + x.str();
  return "(" + s + ")";
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

template <Scalar S>
std::vector<IdentityCheck> family_checks(const Model<S>& m, const TaskDef<S>& t, Tolerance tol) {
  MetricFamily<S> mf(m.module(t.module), m.metric(t.metric).H);
  std::vector<IdentityCheck> out;
  static const std::set<std::string> bc = {"first transgression", "first transgression del part", "second transgression",
                                           "bott-chern"};
  for (auto& p : t.points) {
    auto loc = mf.at(p, t.cap);
    for (auto& c : metric_transgression_checks(loc.e, loc.h, t.f, tol)) {
      if (t.task == "bott-chern" && !bc.count(c.name)) continue;
      c.name += " at " + point_label(p);
      out.push_back(c);
    }
  }
  return out;
}

template <Scalar S>
TaskResult execute(const Model<S>& m, const TaskDef<S>& t) {
  TaskResult r;
  const Tolerance tol = Tolerance::for_mode<S>(t.tol);
  const Tolerance ntol{t.tol};
  auto metric = [&](const std::string& name) { return HermitianMetric<S>(m.metric(name).H); };
  const std::string& k = t.task;
  if (k == "flatness") {
    auto fl = is_flat(m.module(t.module).E2(), tol);
    r.checks.push_back(make_check("flatness", locate(fl.defect), tol));
  } else if (k == "rescale") {
    r.checks.push_back(rescale(m.module(t.module), tol).check);
  } else if (k == "chern-structure") {
    r.checks = chern_structure_checks(m.module(t.module), metric(t.metric), tol);
  } else if (k == "chern-weil-closedness") {
    auto cf = char_form(m.module(t.module), metric(t.metric), t.f);
    r.checks.push_back(check_zero("characteristic form closed", cf.dchart(), tol));
    r.info["characteristic_form"] = form_json(cf);
  } else if (k == "linear-transgression") {
    r.checks.push_back(linear_transgression(m.module(t.module), metric(t.metric), t.f, tol).check);
  } else if (k == "oracle") {
    const auto& e = m.module(t.module);
    auto c = chern(e, metric(t.metric));
    r.checks.push_back(oracle_square_check("flatness oracle", e.E2(), EndForm<S>(e.bundle(), e.ring()), t.max_deg, tol));
    r.checks.push_back(oracle_square_check("curvature oracle", c.E(), c.R, t.max_deg, tol));
  } else if (k == "bott-chern" || k == "metric-transgression") {
    r.checks = family_checks(m, t, tol);
  } else if (k == "secondary-corollary" || k == "path-independence") {
    MetricFamily<Complex> mf(to_numeric<S>(m.module(t.module)), to_numeric<S>(m.metric(t.metric).H));
    auto f = to_numeric(t.f);
    if (k == "secondary-corollary") {
      r.checks.push_back(secondary_corollary_check(mf, t.points, f, ntol));
    } else {
      auto w = path_independence_witness(mf, t.points[0], t.points[1], t.points[2], f, ntol);
      r.checks.push_back(w.check);
    }
  } else if (k == "gauge-moduli") {
    const auto& g = *Model<S>::find(m.gauges, t.gauge);
    const auto& e = m.module(g.module);
    auto gr = exact_gamma(e, GaugeFamily<S>(g.f, m.ring->param_index(g.param)), tol);
    r.checks.push_back(gr.check);
    if (gr.sampled) {
      r.checks.push_back(skipped_check("moduli identities", "inverse gauge element is not polynomial in the parameter"));
    } else {
      for (auto& c : moduli_delta_checks(gr.tail, metric(t.metric), t.f, std::optional(gr.gamma), tol))
        r.checks.push_back(c);
    }
  } else if (k == "cone-flatness" || k == "cone-gamma" || k == "cone-transgression" || k == "cone-additivity") {
    const auto& d = *Model<S>::find(m.morphisms, t.morphism);
    Morphism<S> mor(m.module(d.source), m.module(d.target), d.phi);
    if (k == "cone-flatness") {
      r.checks.push_back(make_check("morphism closed", Morphism<S>::max_abs(mor.closedness_defect()), tol));
      r.checks.push_back(cone_flatness_check(mor, tol));
    } else if (k == "cone-gamma") {
      r.checks.push_back(cone_family_gamma(mor, tol).check);
    } else if (k == "cone-transgression") {
      auto ct = regularized_cone_transgression(mor, metric(t.source_metric), metric(t.target_metric), t.f, tol);
      r.checks = ct.checks;
      r.info["potential"] = form_json(ct.potential);
    } else {
      auto ca = cone_additivity(mor, metric(t.source_metric), metric(t.target_metric), t.f, tol);
      r.checks = ca.checks;
      r.info["potential"] = form_json(ca.potential);
    }
  } else if (k == "acyclic-integral") {
    auto e = to_numeric<S>(m.module(t.module));
    HermitianMetric<Complex> h(to_numeric<S>(m.metric(t.metric).H));
    auto res = acyclic_integral(e, h, t.T_max, t.quad_tol);
    IdentityCheck fit{"gaussian decay fit", res.decay_rate > 0 && res.fit_residual < 0.2, false, res.fit_residual, "",
                      "rate " + fmt(res.decay_rate)};
    bool dec = true;
    for (size_t i = 1; i < res.decay_samples.size(); ++i)
      dec &= res.decay_samples[i].second < res.decay_samples[i - 1].second;
    IdentityCheck mono{"decay samples decreasing", dec, false, 0, "", ""};
    auto rc = make_check("str exp(-R_1) = -2 del delbar I", res.corrected_residual.max_abs(), ntol);
    rc.note = "literal str exp(-R_1) = del delbar I has defect " + fmt(res.residual.max_abs().first);
    r.checks = {fit, mono, rc};
    r.info["I"] = form_json(res.I);
    r.info["T"] = res.T;
    r.info["tail_estimate"] = res.tail_estimate;
    Json samples = Json::array();
    for (auto& [x, y] : res.decay_samples) samples.push_back({x, y});
    r.info["decay_samples"] = samples;
  } else if (k == "heat-corollary") {
    auto e = to_numeric<S>(m.module(t.module));
    HermitianMetric<Complex> h(to_numeric<S>(m.metric(t.metric).H));
    for (double x : t.times) {
      auto hc = heat_corollary_defect(e, h, x);
      r.checks.push_back({"heat corollary at t=" + fmt(x), hc.corrected <= t.tol, false, hc.corrected, "",
                          "relative defect with -(2/t): " + fmt(hc.stated)});
    }
  }
  return r;
}

}  // namespace detail

struct RunOptions {
  std::vector<std::string> tasks;  // empty: all
  int jobs = 1;
};

inline Json check_json(const IdentityCheck& c) {
  Json j{{"name", c.name}, {"status", c.skipped ? "skipped" : c.passed ? "pass" : "fail"}, {"defect", c.defect}};
  if (!c.where.empty()) j["where"] = c.where;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

/// Runs the selected tasks (independent, so concurrently up to `jobs`) and
/// assembles the report in task order.
template <Scalar S>
Json run(const Model<S>& m, const RunOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  std::vector<size_t> sel;
  for (size_t k = 0; k < m.tasks.size(); ++k) {
    const auto& t = m.tasks[k];
    bool want = opt.tasks.empty() || std::find(opt.tasks.begin(), opt.tasks.end(), t.task) != opt.tasks.end() ||
                std::find(opt.tasks.begin(), opt.tasks.end(), t.label) != opt.tasks.end();
    if (want) sel.push_back(k);
  }
  std::vector<TaskResult> results(sel.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t s; (s = next++) < sel.size();) {
      auto start = clock::now();
      TaskResult& r = results[s];
      try {
        r = detail::execute(m, m.tasks[sel[s]]);
        bool ok = std::all_of(r.checks.begin(), r.checks.end(), [](auto& c) { return c.passed || c.skipped; });
        r.status = ok ? "pass" : "fail";
      } catch (const std::exception& e) {
        r = TaskResult{};
        r.status = "error";
        r.error = e.what();
      }
      r.ms = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    }
  };
  int jobs = std::max(1, std::min<int>(opt.jobs, (int)sel.size()));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  Json scen = canonical(m);
  Json body;
  body["format"] = 1;
  body["library_version"] = kLibraryVersion;
  body["scenario"] = m.name;
  body["scenario_hash"] = fnv1a_hex(scen.dump());
  body["mode"] = m.mode;
  body["jet_order"] = m.order;
  Json tasks = Json::array();
  Json timing = Json::array();
  int npass = 0, nfail = 0, nerr = 0;
  for (size_t s = 0; s < sel.size(); ++s) {
    const auto& t = m.tasks[sel[s]];
    const auto& r = results[s];
    Json j{{"index", sel[s]}, {"task", t.task}, {"label", t.label}, {"status", r.status}};
    if (r.status == "error") {
      j["error"] = r.error;
    } else {
      Json cs = Json::array();
      const IdentityCheck* worst = nullptr;
      for (auto& c : r.checks) {
        cs.push_back(check_json(c));
        if (!c.skipped && (!worst || c.defect > worst->defect)) worst = &c;
      }
      j["checks"] = cs;
      if (worst) j["defect"] = Json{{"max", worst->defect}, {"check", worst->name}, {"where", worst->where}};
      if (!r.info.empty()) j["info"] = r.info;
    }
    (r.status == "pass" ? npass : r.status == "fail" ? nfail : nerr)++;
    tasks.push_back(j);
    timing.push_back(Json{{"label", t.label}, {"ms", r.ms}});
  }
  body["tasks"] = tasks;
  body["summary"] = Json{{"pass", npass}, {"fail", nfail}, {"error", nerr}};
  Json out;
  out["report"] = body;
  out["body_hash"] = fnv1a_hex(body.dump());
  out["timing"] = Json{{"total_ms", std::chrono::duration<double, std::milli>(clock::now() - t0).count()}, {"tasks", timing}};
  return out;
}

inline bool report_passed(const Json& report) {
  const auto& s = report.at("report").at("summary");
  return s.at("fail").get<int>() == 0 && s.at("error").get<int>() == 0;
}

/// Differences between two report bodies, one line each.
inline std::vector<std::string> diff_reports(const Json& a, const Json& b) {
  std::vector<std::string> out;
  const Json& ra = a.at("report");
  const Json& rb = b.at("report");
  for (const char* key : {"library_version", "scenario", "scenario_hash", "mode", "jet_order"})
    if (ra.value(key, Json()) != rb.value(key, Json()))
      out.push_back(std::string(key) + ": " + ra.value(key, Json()).dump() + " -> " + rb.value(key, Json()).dump());
  std::map<std::string, const Json*> ta, tb;
  for (auto& t : ra.at("tasks")) ta[std::to_string(t.at("index").get<int>()) + " " + t.at("label").get<std::string>()] = &t;
  for (auto& t : rb.at("tasks")) tb[std::to_string(t.at("index").get<int>()) + " " + t.at("label").get<std::string>()] = &t;
  for (auto& [key, t] : ta) {
    auto it = tb.find(key);
    if (it == tb.end()) {
      out.push_back("task " + key + ": only in first report");
      continue;
    }
    const Json& u = *it->second;
    if ((*t)["status"] != u["status"])
      out.push_back("task " + key + ": status " + (*t)["status"].get<std::string>() + " -> " + u["status"].get<std::string>());
    if (t->value("error", Json()) != u.value("error", Json())) out.push_back("task " + key + ": error message differs");
    std::map<std::string, Json> ca, cb;
    for (auto& c : t->value("checks", Json::array())) ca[c["name"].get<std::string>()] = c;
    for (auto& c : u.value("checks", Json::array())) cb[c["name"].get<std::string>()] = c;
    for (auto& [name, c] : ca) {
      auto jt = cb.find(name);
      if (jt == cb.end()) out.push_back("task " + key + ": check '" + name + "' only in first report");
      else if (c != jt->second)
        out.push_back("task " + key + ": check '" + name + "' " + c["status"].get<std::string>() + " defect " +
                      c["defect"].dump() + " -> " + jt->second["status"].get<std::string>() + " defect " +
                      jt->second["defect"].dump());
    }
    for (auto& [name, c] : cb)
      if (!ca.count(name)) out.push_back("task " + key + ": check '" + name + "' only in second report");
    if (t->value("info", Json()) != u.value("info", Json())) out.push_back("task " + key + ": info differs");
  }
  for (auto& [key, t] : tb)
    if (!ta.count(key)) out.push_back("task " + key + ": only in second report");
  return out;
}

}  // namespace bc::cli
