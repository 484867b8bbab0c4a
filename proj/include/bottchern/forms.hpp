#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bottchern/jet.hpp"

namespace bc {

// Generator bits: dz_1..dz_n, dzbar_1..dzbar_n, dpi_1..dpi_m, in that order.
using Mask = uint32_t;

inline int popcount(Mask m) { return std::popcount(m); }

/// Sign of (generators of a)^(generators of b) rewritten in canonical order;
/// 0 when they overlap.
inline int wedge_sign(Mask a, Mask b) {
  if (a & b) return 0;
  int inv = 0;
  for (Mask bb = b; bb; bb &= bb - 1) {
    int y = std::countr_zero(bb);
    inv += popcount(a >> (y + 1));
  }
  return (inv & 1) ? -1 : 1;
}

struct Bidegree {
  int p = 0, q = 0, m = 0;
  int total() const { return p + q + m; }
};

inline Bidegree bidegree(Mask mask, int n) {
  Mask lo = (Mask(1) << n) - 1;
  return {popcount(mask & lo), popcount((mask >> n) & lo), popcount(mask >> (2 * n))};
}

enum class Diff { Del, Delbar, Chart, Param };

/// Differential form on the chart with jet coefficients; parameters contribute
/// their own anticommuting generators dpi_j.
template <Scalar S>
class Form {
 public:
  using J = Jet<S>;
  using Terms = std::vector<std::pair<Mask, J>>;

  Form() = default;
  explicit Form(Ring r) : ring_(std::move(r)), valid_(Validity::full(*ring_)) {}
  Form(Ring r, Validity v) : ring_(std::move(r)), valid_(v) {}
  explicit Form(const J& f) : ring_(f.ring()), valid_(f.validity()) {
    if (!f.is_zero()) terms_.emplace_back(0, f);
  }
  static Form basis(const J& coeff, Mask mask) {
    Form f(coeff.ring(), coeff.validity());
    f.check_mask(mask);
    if (!coeff.is_zero()) f.terms_.emplace_back(mask, coeff);
    return f;
  }
  static Form constant(Ring r, const S& c) { return Form(J::constant(std::move(r), c)); }

  const Ring& ring() const { return ring_; }
  const Validity& validity() const { return valid_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int n() const { return ring_->n(); }
  int generators() const { return 2 * n() + ring_->num_params(); }

  Mask gen_dz(int i) const { return Mask(1) << i; }
  Mask gen_dzbar(int i) const { return Mask(1) << (n() + i); }
  Mask gen_dpi(int j) const { return Mask(1) << (2 * n() + j); }

  J coefficient(Mask mask) const {
    for (auto& [m, c] : terms_)
      if (m == mask) return c;
    return J(ring_, valid_);
  }

  Form with_validity(const Validity& v) const {
    Form f(ring_, min(valid_, v));
    for (auto& [m, c] : terms_) f.push(m, c.with_validity(f.valid_));
    return f;
  }

  /// Keep only terms whose mask satisfies `pred`.
  Form filter(const std::function<bool(Mask)>& pred) const {
    Form f(ring_, valid_);
    for (auto& [m, c] : terms_)
      if (pred(m)) f.terms_.emplace_back(m, c);
    return f;
  }
  Form part(int p, int q) const {
    return filter([&](Mask m) { auto b = bidegree(m, n()); return b.p == p && b.q == q; });
  }
  Form degree_part(int k) const {
    return filter([&](Mask m) { return popcount(m) == k; });
  }
  Form parity_part(int parity) const {
    return filter([&](Mask m) { return (popcount(m) & 1) == parity; });
  }

  Form operator-() const {
    Form f(*this);
    for (auto& [m, c] : f.terms_) c = -c;
    return f;
  }
  friend Form operator+(const Form& a, const Form& b) { return combine(a, b, false); }
  friend Form operator-(const Form& a, const Form& b) { return combine(a, b, true); }
  Form& operator+=(const Form& b) { return *this = *this + b; }
  Form& operator-=(const Form& b) { return *this = *this - b; }

  friend Form operator*(const S& s, const Form& a) {
    Form f(a.ring_, a.valid_);
    if (scalar_traits<S>::is_zero(s)) return f;
    for (auto& [m, c] : a.terms_) f.terms_.emplace_back(m, s * c);
    return f;
  }
  friend Form operator*(const J& j, const Form& a) {
    Form f(a.ring_, min(a.valid_, j.validity()));
    for (auto& [m, c] : a.terms_) f.push(m, j * c);
    return f;
  }

  /// Wedge product.
  friend Form operator*(const Form& a, const Form& b) {
    require_same_ring(a.ring_, b.ring_);
    Form f(a.ring_, min(a.valid_, b.valid_));
    if (a.terms_.empty() || b.terms_.empty()) return f;
    std::vector<std::pair<Mask, J>> acc;
    for (auto& [ma, ca] : a.terms_)
      for (auto& [mb, cb] : b.terms_) {
        int s = wedge_sign(ma, mb);
        if (s == 0) continue;
        J p = ca * cb;
        if (p.is_zero()) continue;
        acc.emplace_back(ma | mb, s > 0 ? std::move(p) : -p);
      }
    f.absorb(std::move(acc));
    return f;
  }

  /// Exterior derivative of the requested kind; new generators enter on the left.
  Form d(Diff kind) const {
    const int nn = n();
    Validity v = valid_;
    std::vector<int> vars;
    if (kind == Diff::Del || kind == Diff::Chart)
      for (int i = 0; i < nn; ++i) vars.push_back(i);
    if (kind == Diff::Delbar || kind == Diff::Chart)
      for (int i = 0; i < nn; ++i) vars.push_back(nn + i);
    if (kind == Diff::Param)
      for (int j = 0; j < ring_->num_params(); ++j) vars.push_back(2 * nn + j);
    if (kind != Diff::Param) {
      if (v.chart <= 0) throw ValidityError("differentiating a form with exhausted valid order");
      --v.chart;
    } else {
      for (int j = 0; j < ring_->num_params(); ++j)
        if (ring_->param(j).cap) {
          if (v.param[j] <= 0) throw ValidityError("parameter derivative exceeds truncation of " + ring_->param(j).name);
          --v.param[j];
        }
    }
    Form f(ring_, v);
    std::vector<std::pair<Mask, J>> acc;
    for (int var : vars) {
      Mask g = Mask(1) << var;
      for (auto& [m, c] : terms_) {
        if (m & g) continue;
        J dc = c.derivative(var);
        if (dc.is_zero()) continue;
        int s = (popcount(m & (g - 1)) & 1) ? -1 : 1;
        acc.emplace_back(m | g, s > 0 ? std::move(dc) : -dc);
      }
    }
    f.absorb(std::move(acc));
    return f;
  }
  Form del() const { return d(Diff::Del); }
  Form delbar() const { return d(Diff::Delbar); }
  Form dchart() const { return d(Diff::Chart); }
  Form dparam() const { return d(Diff::Param); }

  /// Derivative of every coefficient in one variable (no generator added).
  Form coeff_derivative(int var) const {
    Form f(ring_, J(ring_, valid_).derivative(var).validity());
    for (auto& [m, c] : terms_) f.push(m, c.derivative(var));
    return f;
  }

  /// Conjugate-linear anti-automorphism: dz* = -dzbar, dzbar* = -dz,
  /// dpi* = dpi, coefficients conjugated.
  Form star() const {
    const int nn = n();
    Form f(ring_, valid_);
    std::vector<std::pair<Mask, J>> acc;
    for (auto& [m, c] : terms_) {
      std::vector<int> gens;
      for (Mask mm = m; mm; mm &= mm - 1) gens.push_back(std::countr_zero(mm));
      std::vector<int> img;
      int sign = 1;
      for (auto it = gens.rbegin(); it != gens.rend(); ++it) {
        int g = *it;
        if (g < nn) { img.push_back(g + nn); sign = -sign; }
        else if (g < 2 * nn) { img.push_back(g - nn); sign = -sign; }
        else img.push_back(g);
      }
      int inv = 0;
      for (size_t x = 0; x < img.size(); ++x)
        for (size_t y = x + 1; y < img.size(); ++y) inv += img[x] > img[y];
      if (inv & 1) sign = -sign;
      Mask out = 0;
      for (int g : img) out |= Mask(1) << g;
      J cc = c.conj();
      acc.emplace_back(out, sign > 0 ? std::move(cc) : -cc);
    }
    f.absorb(std::move(acc));
    return f;
  }

  /// Interior product with the coordinate vector field of parameter j.
  Form contract_param(int j) const {
    Mask g = gen_dpi(j);
    Form f(ring_, valid_);
    for (auto& [m, c] : terms_) {
      if (!(m & g)) continue;
      int s = (popcount(m & (g - 1)) & 1) ? -1 : 1;
      f.terms_.emplace_back(m & ~g, s > 0 ? c : -c);
    }
    f.sort_terms();
    return f;
  }

  /// Split by exotic degree -p+q.
  std::map<int, Form> exotic_parts() const {
    std::map<int, Form> out;
    for (auto& [m, c] : terms_) {
      auto b = bidegree(m, n());
      auto [it, _] = out.try_emplace(b.q - b.p, ring_, valid_);
      it->second.terms_.emplace_back(m, c);
    }
    return out;
  }

  Form map_coefficients(const std::function<J(const J&)>& fn, Validity v) const {
    Form f(ring_, v);
    for (auto& [m, c] : terms_) f.push(m, fn(c));
    return f;
  }
  Form integrate_param(int p, const S& lo, const S& hi) const {
    return map_coefficients([&](const J& c) { return c.integrate_param(p, lo, hi); }, valid_);
  }
  Form substitute_param(int p, const S& value) const {
    return map_coefficients([&](const J& c) { return c.substitute_param(p, value); }, valid_);
  }
  Form param_coefficient(int p, int k) const {
    return map_coefficients([&](const J& c) { return c.param_coefficient(p, k); }, valid_);
  }
  Form shift_param(int p, int k) const {
    return map_coefficients([&](const J& c) { return c.shift_param(p, k); }, valid_);
  }
  Form localize(const Ring& target, int p) const {
    Form f(target, J(ring_, valid_).localize(target, p).validity());
    for (auto& [m, c] : terms_) f.push(m, c.localize(target, p));
    return f;
  }
  /// Move into a ring with re-indexed parameters (see Jet::remap).
  Form remap(const Ring& target, const std::vector<int>& map) const {
    const int nn = n();
    for (size_t j = 1; j < map.size(); ++j)
      if (map[j] >= 0 && map[j - 1] >= map[j]) throw StructureError("parameter remap must be increasing");
    Form f(target, J(ring_, valid_).remap(target, map).validity());
    for (auto& [m, c] : terms_) {
      Mask out = m & ((Mask(1) << (2 * nn)) - 1);
      for (int j = 0; j < ring_->num_params(); ++j)
        if (m & gen_dpi(j)) {
          if (map[j] < 0) throw StructureError("dropping a parameter generator");
          out |= Mask(1) << (2 * nn + map[j]);
        }
      f.push(out, c.remap(target, map));
    }
    f.sort_terms();
    return f;
  }

  template <Scalar T>
  Form<T> convert() const {
    Form<T> f(ring_, valid_);
    for (auto& [m, c] : terms_) f.push_raw(m, c.template convert<T>());
    return f;
  }

  friend bool operator==(const Form& a, const Form& b) {
    if (a.terms_.size() != b.terms_.size()) return false;
    for (size_t k = 0; k < a.terms_.size(); ++k)
      if (a.terms_[k].first != b.terms_[k].first || !(a.terms_[k].second == b.terms_[k].second)) return false;
    return true;
  }

  /// Largest coefficient magnitude with a readable location.
  std::pair<double, std::string> max_abs() const {
    std::pair<double, std::string> best{0.0, ""};
    for (auto& [m, c] : terms_) {
      auto [a, mono] = c.max_abs();
      if (a > best.first) best = {a, mask_str(m) + " @ " + monomial_str(mono, *ring_)};
    }
    return best;
  }

  std::string mask_str(Mask m) const {
    const int nn = n();
    if (m == 0) return "1";
    std::string s;
    for (int g = 0; g < generators(); ++g) {
      if (!(m & (Mask(1) << g))) continue;
      if (!s.empty()) s += "^";
      std::string idx = nn == 1 ? "" : std::to_string(g % nn + 1);
      if (g < nn) s += "dz" + idx;
      else if (g < 2 * nn) s += "dzb" + idx;
      else s += "d" + ring_->param(g - 2 * nn).name;
    }
    return s;
  }
  std::string str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (auto& [m, c] : terms_) {
      if (!s.empty()) s += " + ";
      s += "[" + c.str() + "]" + (m ? " " + mask_str(m) : "");
    }
    return s;
  }

  void push_raw(Mask m, J c) {
    if (!c.is_zero()) terms_.emplace_back(m, std::move(c));
  }

 private:
  template <Scalar>
  friend class Form;

  void check_mask(Mask m) const {
    if (m >> generators()) throw StructureError("form generator outside the ring");
  }
  void push(Mask m, J c) {
    c = c.with_validity(valid_);
    if (!c.is_zero()) terms_.emplace_back(m, std::move(c));
  }
  void sort_terms() {
    std::sort(terms_.begin(), terms_.end(), [](auto& x, auto& y) { return x.first < y.first; });
  }
  void absorb(std::vector<std::pair<Mask, J>>&& acc) {
    std::stable_sort(acc.begin(), acc.end(), [](auto& x, auto& y) { return x.first < y.first; });
    for (size_t k = 0; k < acc.size();) {
      Mask m = acc[k].first;
      J sum = std::move(acc[k].second);
      size_t l = k + 1;
      for (; l < acc.size() && acc[l].first == m; ++l) sum += acc[l].second;
      push(m, std::move(sum));
      k = l;
    }
  }
  static Form combine(const Form& a, const Form& b, bool sub) {
    require_same_ring(a.ring_, b.ring_);
    Form f(a.ring_, min(a.valid_, b.valid_));
    size_t x = 0, y = 0;
    while (x < a.terms_.size() || y < b.terms_.size()) {
      if (y == b.terms_.size() || (x < a.terms_.size() && a.terms_[x].first < b.terms_[y].first)) {
        f.push(a.terms_[x].first, a.terms_[x].second);
        ++x;
      } else if (x == a.terms_.size() || b.terms_[y].first < a.terms_[x].first) {
        f.push(b.terms_[y].first, sub ? -b.terms_[y].second : b.terms_[y].second);
        ++y;
      } else {
        f.push(a.terms_[x].first, sub ? a.terms_[x].second - b.terms_[y].second : a.terms_[x].second + b.terms_[y].second);
        ++x;
        ++y;
      }
    }
    return f;
  }

  Ring ring_;
  Validity valid_{};
  Terms terms_;
};

template <Scalar S>
bool agrees(const Form<S>& a, const Form<S>& b) {
  Validity v = min(a.validity(), b.validity());
  return a.with_validity(v) == b.with_validity(v);
}

/// Defect a-b truncated to the common validity: magnitude and location.
template <Scalar S>
std::pair<double, std::string> form_defect(const Form<S>& a, const Form<S>& b) {
  Validity v = min(a.validity(), b.validity());
  return (a.with_validity(v) - b.with_validity(v)).max_abs();
}

}  // namespace bc
