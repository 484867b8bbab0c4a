#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bottchern/scalar.hpp"

namespace bc {

inline constexpr int kMaxChart = 3;
inline constexpr int kMaxParams = 6;
inline constexpr int kMaxVars = 2 * kMaxChart + kMaxParams;
inline constexpr int kUnbounded = 127;

/// A parameter coordinate. `cap` set means a truncated local coordinate
/// centred at `center`; otherwise a free (possibly Laurent) polynomial variable.
struct ParamSpec {
  std::string name;
  int laurent_floor = 0;
  std::optional<int> cap;
  Rational center;

  bool local() const { return cap.has_value(); }
  friend bool operator==(const ParamSpec& a, const ParamSpec& b) {
    return a.name == b.name && a.laurent_floor == b.laurent_floor && a.cap == b.cap && a.center == b.center;
  }
};

/// Describes the polynomial ring of a chart: n complex coordinates, chart
/// truncation order and parameter coordinates.
class JetRing {
 public:
  JetRing(int n, int order, std::vector<ParamSpec> params = {}) : n_(n), order_(order), params_(std::move(params)) {
    if (n < 1 || n > kMaxChart) throw DomainError("chart dimension must be in 1.." + std::to_string(kMaxChart));
    if (order < 0) throw DomainError("jet order must be non-negative");
    if ((int)params_.size() > kMaxParams) throw DomainError("too many parameters");
    for (size_t j = 0; j < params_.size(); ++j) {
      const auto& p = params_[j];
      if (p.name.empty()) throw DomainError("parameter without a name");
      if (p.laurent_floor > 0) throw DomainError("laurent floor must be <= 0");
      if (p.cap && (*p.cap < 0 || p.laurent_floor != 0)) throw DomainError("local parameter " + p.name + " must be polynomial with cap >= 0");
      if (p.cap && *p.cap >= kUnbounded) throw DomainError("cap too large");
      for (size_t k = 0; k < j; ++k)
        if (params_[k].name == p.name) throw DomainError("duplicate parameter " + p.name);
    }
  }

  int n() const { return n_; }
  int order() const { return order_; }
  int num_params() const { return (int)params_.size(); }
  int num_vars() const { return 2 * n_ + num_params(); }
  const std::vector<ParamSpec>& params() const { return params_; }
  const ParamSpec& param(int j) const { return params_.at(j); }
  int param_var(int j) const { return 2 * n_ + j; }
  int param_index(const std::string& name) const {
    for (int j = 0; j < num_params(); ++j)
      if (params_[j].name == name) return j;
    return -1;
  }

  friend bool operator==(const JetRing& a, const JetRing& b) {
    return a.n_ == b.n_ && a.order_ == b.order_ && a.params_ == b.params_;
  }

 private:
  int n_, order_;
  std::vector<ParamSpec> params_;
};

using Ring = std::shared_ptr<const JetRing>;

inline Ring make_ring(int n, int order, std::vector<ParamSpec> params = {}) {
  return std::make_shared<const JetRing>(n, order, std::move(params));
}
inline Ring ring_with_param(const Ring& r, ParamSpec p) {
  auto ps = r->params();
  ps.push_back(std::move(p));
  return make_ring(r->n(), r->order(), std::move(ps));
}
inline Ring ring_without_param(const Ring& r, int j) {
  auto ps = r->params();
  ps.erase(ps.begin() + j);
  return make_ring(r->n(), r->order(), std::move(ps));
}
inline bool same_ring(const Ring& a, const Ring& b) { return a == b || *a == *b; }
inline void require_same_ring(const Ring& a, const Ring& b) {
  if (!same_ring(a, b)) throw StructureError("operands live in different jet rings");
}

/// Orders to which a jet is known: chart total degree and, for local
/// parameters, per-parameter degree.
struct Validity {
  int chart = 0;
  std::array<int8_t, kMaxParams> param{};

  static Validity full(const JetRing& r) {
    Validity v;
    v.chart = r.order();
    v.param.fill(kUnbounded);
    for (int j = 0; j < r.num_params(); ++j)
      if (r.param(j).cap) v.param[j] = (int8_t)*r.param(j).cap;
    return v;
  }
  friend Validity min(const Validity& a, const Validity& b) {
    Validity v;
    v.chart = std::min(a.chart, b.chart);
    for (int j = 0; j < kMaxParams; ++j) v.param[j] = std::min(a.param[j], b.param[j]);
    return v;
  }
  friend bool operator==(const Validity&, const Validity&) = default;
};

struct Monomial {
  std::array<int8_t, kMaxVars> e{};
  friend auto operator<=>(const Monomial&, const Monomial&) = default;
  friend bool operator==(const Monomial&, const Monomial&) = default;
};

inline int chart_degree(const Monomial& m, int n) {
  int d = 0;
  for (int i = 0; i < 2 * n; ++i) d += m.e[i];
  return d;
}

inline std::string monomial_str(const Monomial& m, const JetRing& r) {
  std::string s;
  auto put = [&](const std::string& name, int e) {
    if (e == 0) return;
    if (!s.empty()) s += '*';
    s += name;
    if (e != 1) s += '^' + std::to_string(e);
  };
  for (int i = 0; i < r.n(); ++i) put(r.n() == 1 ? "z" : "z" + std::to_string(i + 1), m.e[i]);
  for (int i = 0; i < r.n(); ++i) put(r.n() == 1 ? "zb" : "zb" + std::to_string(i + 1), m.e[r.n() + i]);
  for (int j = 0; j < r.num_params(); ++j) put(r.param(j).name, m.e[r.param_var(j)]);
  return s.empty() ? "1" : s;
}

/// Truncated multivariate polynomial in z, zbar and parameters.
template <Scalar S>
class Jet {
 public:
  using traits = scalar_traits<S>;
  struct Term {
    Monomial m;
    int deg;  // chart degree
    S c;
  };

  Jet() = default;
  explicit Jet(Ring r) : ring_(std::move(r)), valid_(Validity::full(*ring_)) {}
  Jet(Ring r, Validity v) : ring_(std::move(r)), valid_(v) {}

  static Jet constant(Ring r, const S& c) {
    Jet j(std::move(r));
    if (!traits::is_zero(c)) j.terms_.push_back({Monomial{}, 0, c});
    return j;
  }
  static Jet variable(Ring r, int var) { return monomial(std::move(r), unit(var), S(1)); }
  static Jet monomial(Ring r, const Monomial& m, const S& c) {
    Jet j(std::move(r));
    j.push_checked(m, c);
    j.normalize();
    return j;
  }
  static Jet from_terms(Ring r, Validity v, const std::vector<std::pair<Monomial, S>>& ts) {
    Jet j(std::move(r), v);
    for (auto& [m, c] : ts) j.push_checked(m, c);
    j.normalize();
    return j;
  }
  static Monomial unit(int var) {
    Monomial m;
    m.e[var] = 1;
    return m;
  }

  const Ring& ring() const { return ring_; }
  const Validity& validity() const { return valid_; }
  int valid_order() const { return valid_.chart; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  size_t size() const { return terms_.size(); }

  S coefficient(const Monomial& m) const {
    for (auto& t : terms_)
      if (t.m == m) return t.c;
    return S(0);
  }
  S constant_term() const { return coefficient(Monomial{}); }

  Jet with_validity(const Validity& v) const {
    Jet j(ring_, min(valid_, v));
    for (auto& t : terms_)
      if (j.keeps(t.m, t.deg)) j.terms_.push_back(t);
    return j;
  }
  Jet truncated(int chart_order) const {
    Validity v = valid_;
    v.chart = std::min(v.chart, chart_order);
    return with_validity(v);
  }

  Jet operator-() const {
    Jet j(*this);
    for (auto& t : j.terms_) t.c = -t.c;
    return j;
  }
  friend Jet operator+(const Jet& a, const Jet& b) { return combine(a, b, false); }
  friend Jet operator-(const Jet& a, const Jet& b) { return combine(a, b, true); }
  Jet& operator+=(const Jet& b) { return *this = *this + b; }
  Jet& operator-=(const Jet& b) { return *this = *this - b; }

  friend Jet operator*(const S& s, const Jet& a) {
    Jet j(a.ring_, a.valid_);
    if (traits::is_zero(s)) return j;
    j.terms_.reserve(a.terms_.size());
    for (auto& t : a.terms_) j.terms_.push_back({t.m, t.deg, s * t.c});
    return j;
  }
  friend Jet operator*(const Jet& a, const S& s) { return s * a; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    require_same_ring(a.ring_, b.ring_);
    Jet j(a.ring_, min(a.valid_, b.valid_));
    if (a.terms_.empty() || b.terms_.empty()) return j;
    const int nv = a.ring_->num_vars();
    std::vector<std::pair<Monomial, S>> acc;
    acc.reserve(a.terms_.size() * 4);
    for (auto& x : a.terms_) {
      int room = j.valid_.chart - x.deg;
      if (room < 0) break;
      for (auto& y : b.terms_) {
        if (y.deg > room) break;
        Monomial m;
        for (int v = 0; v < nv; ++v) m.e[v] = int8_t(x.m.e[v] + y.m.e[v]);
        if (!j.params_ok(m)) continue;
        acc.emplace_back(m, x.c * y.c);
      }
    }
    j.absorb(std::move(acc));
    return j;
  }

  /// Partial derivative in variable `var`; lowers the matching validity.
  Jet derivative(int var) const {
    const int n = ring_->n();
    Validity v = valid_;
    if (var < 2 * n) {
      if (v.chart <= 0) throw ValidityError("chart derivative of a jet with exhausted valid order");
      --v.chart;
    } else {
      int p = var - 2 * n;
      if (ring_->param(p).cap) {
        if (v.param[p] <= 0) throw ValidityError("derivative in " + ring_->param(p).name + " exceeds its truncation");
        --v.param[p];
      }
    }
    Jet j(ring_, v);
    for (auto& t : terms_) {
      int e = t.m.e[var];
      if (e == 0) continue;
      Monomial m = t.m;
      --m.e[var];
      int d = var < 2 * n ? t.deg - 1 : t.deg;
      if (j.keeps(m, d)) j.terms_.push_back({m, d, S(e) * t.c});
    }
    j.normalize();
    return j;
  }

  /// Complex conjugation: z <-> zbar, coefficients conjugated, parameters real.
  Jet conj() const {
    const int n = ring_->n();
    Jet j(ring_, valid_);
    j.terms_.reserve(terms_.size());
    for (auto& t : terms_) {
      Monomial m = t.m;
      for (int i = 0; i < n; ++i) std::swap(m.e[i], m.e[n + i]);
      j.terms_.push_back({m, t.deg, traits::conj(t.c)});
    }
    j.normalize();
    return j;
  }

  /// Exact definite integral over a free, non-Laurent parameter; the result
  /// no longer depends on it (exponent zero everywhere).
  Jet integrate_param(int p, const S& lo, const S& hi) const {
    const auto& spec = ring_->param(p);
    if (spec.cap) throw DomainError("cannot integrate over truncated local parameter " + spec.name);
    int var = ring_->param_var(p);
    Jet j(ring_, valid_);
    std::vector<std::pair<Monomial, S>> acc;
    for (auto& t : terms_) {
      int e = t.m.e[var];
      if (e < 0) throw DomainError("integrand has a pole in " + spec.name);
      Monomial m = t.m;
      m.e[var] = 0;
      acc.emplace_back(m, t.c * (power(hi, e + 1) - power(lo, e + 1)) / S(e + 1));
    }
    j.absorb(std::move(acc));
    return j;
  }

  /// Substitute a value for a free parameter (which keeps exponent zero).
  Jet substitute_param(int p, const S& value) const {
    if (ring_->param(p).cap) throw DomainError("cannot substitute into a local parameter");
    int var = ring_->param_var(p);
    Jet j(ring_, valid_);
    std::vector<std::pair<Monomial, S>> acc;
    for (auto& t : terms_) {
      int e = t.m.e[var];
      Monomial m = t.m;
      m.e[var] = 0;
      if (e < 0 && traits::is_zero(value)) throw DomainError("substituting 0 into a Laurent term");
      acc.emplace_back(m, t.c * (e >= 0 ? power(value, e) : S(1) / power(value, -e)));
    }
    j.absorb(std::move(acc));
    return j;
  }

  /// Coefficient of p^k for a free parameter p, as a jet with exponent zero.
  Jet param_coefficient(int p, int k) const {
    int var = ring_->param_var(p);
    Jet j(ring_, valid_);
    for (auto& t : terms_)
      if (t.m.e[var] == k) {
        Term u = t;
        u.m.e[var] = 0;
        j.terms_.push_back(u);
      }
    j.normalize();
    return j;
  }

  /// Multiply by p^k for a free parameter (k may be negative within the floor).
  Jet shift_param(int p, int k) const {
    if (ring_->param(p).cap) throw DomainError("cannot shift a local parameter");
    int var = ring_->param_var(p);
    Jet j(ring_, valid_);
    std::vector<std::pair<Monomial, S>> acc;
    for (auto& t : terms_) {
      Monomial m = t.m;
      m.e[var] = int8_t(m.e[var] + k);
      acc.emplace_back(m, t.c);
    }
    j.absorb(std::move(acc));
    return j;
  }

  /// Re-express in another ring whose leading parameters coincide (`map[j]` is
  /// the target index of source parameter j; -1 means the exponent must vanish).
  Jet remap(const Ring& target, const std::vector<int>& map) const {
    if (target->n() != ring_->n()) throw StructureError("chart dimension mismatch");
    Validity v = Validity::full(*target);
    v.chart = std::min(valid_.chart, target->order());
    for (int j = 0; j < ring_->num_params(); ++j)
      if (map[j] >= 0 && ring_->param(j).cap && target->param(map[j]).cap)
        v.param[map[j]] = std::min<int8_t>(v.param[map[j]], valid_.param[j]);
    Jet out(target, v);
    const int n = ring_->n();
    for (auto& t : terms_) {
      Monomial m;
      for (int i = 0; i < 2 * n; ++i) m.e[i] = t.m.e[i];
      for (int j = 0; j < ring_->num_params(); ++j) {
        int e = t.m.e[ring_->param_var(j)];
        if (e == 0) continue;
        if (map[j] < 0) throw StructureError("dropping parameter " + ring_->param(j).name + " with nonzero exponent");
        m.e[target->param_var(map[j])] = int8_t(e);
      }
      out.push_checked(m, t.c);
    }
    out.normalize();
    return out;
  }

  /// Expand a free polynomial parameter around `center` as the local
  /// parameter of the same index in `target` (p = center + tau).
  Jet localize(const Ring& target, int p) const {
    const auto& spec = target->param(p);
    if (!spec.cap || ring_->param(p).cap) throw DomainError("localize maps a free parameter to a local one");
    int var = ring_->param_var(p);
    S c = traits::from_rational(spec.center);
    Validity v = valid_;
    v.param[p] = (int8_t)*spec.cap;
    Jet out(target, v);
    std::vector<std::pair<Monomial, S>> acc;
    for (auto& t : terms_) {
      int e = t.m.e[var];
      if (e < 0) throw DomainError("cannot localize a Laurent parameter");
      S binom(1);
      for (int k = 0; k <= std::min(e, *spec.cap); ++k) {
        Monomial m = t.m;
        m.e[var] = int8_t(k);
        acc.emplace_back(m, t.c * binom * power(c, e - k));
        binom = binom * S(e - k) / S(k + 1);
      }
    }
    out.absorb(std::move(acc));
    return out;
  }

  bool is_nilpotent_term(const Monomial& m) const { return nilpotent(m, chart_degree(m, ring_->n())); }

  /// Multiplicative inverse; the non-constant part must be nilpotent (every
  /// term of positive chart degree or involving a local parameter).
  Jet invert() const {
    S c0 = constant_term();
    if (traits::is_zero(c0)) throw DomainError("jet with zero constant term is not invertible");
    for (auto& t : terms_)
      if (!(t.m == Monomial{}) && !nilpotent(t.m, t.deg))
        throw DomainError("non-constant part of jet is not nilpotent: " + monomial_str(t.m, *ring_));
    S inv = S(1) / c0;
    Jet nil = *this - constant(ring_, c0);
    Jet step = (-inv) * nil;
    Jet result = constant(ring_, inv).with_validity(valid_);
    Jet pw = result;
    for (int k = 0; k < 4 * kUnbounded; ++k) {
      pw = pw * step;
      if (pw.is_zero()) return result;
      result += pw;
    }
    throw DomainError("inverse series did not terminate");
  }

  /// Max |coefficient| and its monomial (zero jet: 0 and "1").
  std::pair<double, Monomial> max_abs() const {
    std::pair<double, Monomial> best{0.0, Monomial{}};
    for (auto& t : terms_) {
      double a = traits::abs(t.c);
      if (a > best.first) best = {a, t.m};
    }
    return best;
  }

  template <Scalar T>
  Jet<T> convert() const {
    std::vector<std::pair<Monomial, T>> ts;
    for (auto& t : terms_) ts.emplace_back(t.m, convert_scalar<T>(t.c));
    return Jet<T>::from_terms(ring_, valid_, ts);
  }

  /// Equality of term maps (validity ignored); use `agrees` for truncated comparison.
  friend bool operator==(const Jet& a, const Jet& b) {
    if (!same_ring(a.ring_, b.ring_) || a.terms_.size() != b.terms_.size()) return false;
    for (size_t k = 0; k < a.terms_.size(); ++k)
      if (!(a.terms_[k].m == b.terms_[k].m) || !(a.terms_[k].c == b.terms_[k].c)) return false;
    return true;
  }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (auto& t : terms_) {
      if (!s.empty()) s += " + ";
      s += "(" + traits::str(t.c) + ")";
      if (!(t.m == Monomial{})) s += "*" + monomial_str(t.m, *ring_);
    }
    return s;
  }

  static S power(const S& x, int e) {
    S r(1);
    for (int k = 0; k < e; ++k) r = r * x;
    return r;
  }

 private:
  template <Scalar>
  friend class Jet;

  bool nilpotent(const Monomial& m, int deg) const {
    if (deg > 0) return true;
    for (int j = 0; j < ring_->num_params(); ++j)
      if (ring_->param(j).cap && m.e[ring_->param_var(j)] > 0) return true;
    return false;
  }
  bool params_ok(const Monomial& m) const {
    for (int j = 0; j < ring_->num_params(); ++j) {
      int e = m.e[ring_->param_var(j)];
      if (e > valid_.param[j]) return false;
      if (e < ring_->param(j).laurent_floor)
        throw DomainError("exponent of " + ring_->param(j).name + " below its laurent floor");
    }
    return true;
  }
  bool keeps(const Monomial& m, int deg) const { return deg <= valid_.chart && params_ok(m); }
  void push_checked(const Monomial& m, const S& c) {
    for (int i = 0; i < 2 * ring_->n(); ++i)
      if (m.e[i] < 0) throw DomainError("negative chart exponent");
    for (int i = ring_->num_vars(); i < kMaxVars; ++i)
      if (m.e[i] != 0) throw DomainError("monomial uses variables outside the ring");
    int d = chart_degree(m, ring_->n());
    if (keeps(m, d) && !traits::is_zero(c)) terms_.push_back({m, d, c});
  }
  static bool term_less(const Term& a, const Term& b) { return a.deg != b.deg ? a.deg < b.deg : a.m < b.m; }
  void normalize() {
    std::sort(terms_.begin(), terms_.end(), term_less);
    std::vector<Term> out;
    out.reserve(terms_.size());
    for (auto& t : terms_) {
      if (!out.empty() && out.back().m == t.m) out.back().c += t.c;
      else out.push_back(std::move(t));
    }
    std::erase_if(out, [](const Term& t) { return traits::is_zero(t.c); });
    terms_ = std::move(out);
  }
  void absorb(std::vector<std::pair<Monomial, S>>&& acc) {
    terms_.reserve(terms_.size() + acc.size());
    const int n = ring_->n();
    for (auto& [m, c] : acc) {
      int d = chart_degree(m, n);
      if (keeps(m, d)) terms_.push_back({m, d, std::move(c)});
    }
    normalize();
  }
  static Jet combine(const Jet& a, const Jet& b, bool sub) {
    require_same_ring(a.ring_, b.ring_);
    Jet j(a.ring_, min(a.valid_, b.valid_));
    j.terms_.reserve(a.terms_.size() + b.terms_.size());
    size_t x = 0, y = 0;
    auto emit = [&](const Term& t, bool neg) {
      if (j.keeps(t.m, t.deg)) j.terms_.push_back(neg ? Term{t.m, t.deg, -t.c} : t);
    };
    while (x < a.terms_.size() || y < b.terms_.size()) {
      if (y == b.terms_.size() || (x < a.terms_.size() && term_less(a.terms_[x], b.terms_[y]))) {
        emit(a.terms_[x++], false);
      } else if (x == a.terms_.size() || term_less(b.terms_[y], a.terms_[x])) {
        emit(b.terms_[y++], sub);
      } else {
        S c = sub ? a.terms_[x].c - b.terms_[y].c : a.terms_[x].c + b.terms_[y].c;
        if (!traits::is_zero(c) && j.keeps(a.terms_[x].m, a.terms_[x].deg))
          j.terms_.push_back({a.terms_[x].m, a.terms_[x].deg, c});
        ++x;
        ++y;
      }
    }
    return j;
  }

  Ring ring_;
  Validity valid_{};
  std::vector<Term> terms_;
};

/// True when the jets agree up to the smaller of their validities.
template <Scalar S>
bool agrees(const Jet<S>& a, const Jet<S>& b) {
  Validity v = min(a.validity(), b.validity());
  return a.with_validity(v) == b.with_validity(v);
}

}  // namespace bc
