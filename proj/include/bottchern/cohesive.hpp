#pragma once

#include <string>
#include <vector>

#include "bottchern/check.hpp"

namespace bc {

enum class Base { Delbar, Del, Total };

inline Diff diff_of(Base b) {
  switch (b) {
    case Base::Delbar: return Diff::Delbar;
    case Base::Del: return Diff::Del;
    default: return Diff::Chart;
  }
}
inline const char* base_name(Base b) {
  switch (b) {
    case Base::Delbar: return "delbar";
    case Base::Del: return "del";
    default: return "total";
  }
}

/// A base chart differential plus an End-valued coefficient tail.
template <Scalar S>
class Superconnection {
 public:
  Superconnection() = default;
  Superconnection(Base base, EndForm<S> tail) : base_(base), tail_(std::move(tail)) { validate(); }

  Base base() const { return base_; }
  const EndForm<S>& tail() const { return tail_; }
  const GradedBundle& bundle() const { return tail_.bundle(); }
  const Ring& ring() const { return tail_.ring(); }

  /// Tail pieces of form degree k (End-degree 1-k).
  EndForm<S> component(int k) const { return tail_.cohesive_part(k); }

  Section<S> apply(const Section<S>& s) const {
    Section<S> out = apply_base(bundle(), s, diff_of(base_));
    Section<S> t = tail_ * s;
    for (size_t i = 0; i < out.size(); ++i) out[i] += t[i];
    return out;
  }

 private:
  void validate() const {
    const int n = ring()->n();
    for (int i = 0; i < tail_.rank(); ++i)
      for (int j = 0; j < tail_.rank(); ++j)
        for (auto& [m, c] : tail_.at(i, j).terms()) {
          auto b = bidegree(m, n);
          int e = tail_.deg(i) - tail_.deg(j);
          bool anti = b.p == 0 && e == 1 - b.q, hol = b.q == 0 && e == b.p - 1;
          bool ok = b.m == 0 && (base_ == Base::Delbar ? anti : base_ == Base::Del ? hol : (anti || hol));
          if (!ok)
            throw StructureError(std::string("tail term ") + tail_.at(i, j).mask_str(m) + " at entry (" +
                                 std::to_string(i) + "," + std::to_string(j) + ") does not fit a " +
                                 base_name(base_) + "-superconnection");
        }
  }

  Base base_ = Base::Delbar;
  EndForm<S> tail_;
};

/// [D, X] for a superconnection D (odd) and an End-valued form X.
template <Scalar S>
EndForm<S> bracket(const Superconnection<S>& d, const EndForm<S>& x) {
  return ad_base(x, diff_of(d.base())) + supercommutator(d.tail(), x);
}

/// [D1, D2] for two superconnections, as an End-valued form.
template <Scalar S>
EndForm<S> bracket(const Superconnection<S>& a, const Superconnection<S>& b) {
  return ad_base(b.tail(), diff_of(a.base())) + ad_base(a.tail(), diff_of(b.base())) +
         supercommutator(a.tail(), b.tail());
}

/// D^2 in coefficients: d_base(A) + A^2.
template <Scalar S>
EndForm<S> square(const Superconnection<S>& d) {
  return ad_base(d.tail(), diff_of(d.base())) + d.tail() * d.tail();
}

template <Scalar S>
struct Flatness {
  bool flat;
  EndForm<S> defect;
};

template <Scalar S>
Flatness<S> is_flat(const Superconnection<S>& d, Tolerance tol = Tolerance::for_mode<S>()) {
  EndForm<S> def = square(d);
  return {def.max_abs().first <= tol.abs, def};
}

/// Graded bundle with a flat antiholomorphic superconnection.
template <Scalar S>
class CohesiveModule {
 public:
  CohesiveModule() = default;
  explicit CohesiveModule(Superconnection<S> e) : e_(std::move(e)) {
    if (e_.base() != Base::Delbar) throw StructureError("a cohesive module needs a delbar-superconnection");
    auto fl = is_flat(e_);
    if (!fl.flat) {
      auto [mag, where] = fl.defect.max_abs();
      throw StructureError("flatness defect at " + where);
    }
  }
  CohesiveModule(const GradedBundle& b, EndForm<S> tail) : CohesiveModule(Superconnection<S>(Base::Delbar, std::move(tail))) {
    if (!(b == e_.bundle())) throw StructureError("tail bundle mismatch");
  }

  const Superconnection<S>& E2() const { return e_; }
  const EndForm<S>& tail() const { return e_.tail(); }
  const GradedBundle& bundle() const { return e_.bundle(); }
  const Ring& ring() const { return e_.ring(); }

 private:
  Superconnection<S> e_;
};

/// Chern superconnection data: M'' (given tail), M' and M = M' + M'', with curvature.
template <Scalar S>
struct ChernData {
  EndForm<S> Mdd, Mp, M, R;

  Superconnection<S> E2() const { return Superconnection<S>(Base::Delbar, Mdd); }
  Superconnection<S> E1() const { return Superconnection<S>(Base::Del, Mp); }
  Superconnection<S> E() const { return Superconnection<S>(Base::Total, M); }
};

/// Tail of E': adjoint of the antiholomorphic tail plus the grading-signed
/// H^{-1} dH connection term.
template <Scalar S>
EndForm<S> chern_prime_tail(const EndForm<S>& mdd, const HermitianMetric<S>& h) {
  EndForm<S> dH = ad_base(h.H(), Diff::Del);  // S-hat * del H
  return adjoint(mdd, h) + h.inverse_matrix() * dH;
}

template <Scalar S>
Superconnection<S> chern_prime(const CohesiveModule<S>& e, const HermitianMetric<S>& h) {
  return Superconnection<S>(Base::Del, chern_prime_tail(e.tail(), h));
}

template <Scalar S>
EndForm<S> curvature_of(const EndForm<S>& m) {
  return ad_base(m, Diff::Chart) + m * m;
}

template <Scalar S>
ChernData<S> chern_from_tail(const EndForm<S>& mdd, const HermitianMetric<S>& h) {
  ChernData<S> c;
  c.Mdd = mdd;
  c.Mp = chern_prime_tail(mdd, h);
  c.M = c.Mp + c.Mdd;
  c.R = curvature_of(c.M);
  return c;
}

template <Scalar S>
ChernData<S> chern(const CohesiveModule<S>& e, const HermitianMetric<S>& h) {
  return chern_from_tail(e.tail(), h);
}

template <Scalar S>
EndForm<S> curvature(const CohesiveModule<S>& e, const HermitianMetric<S>& h) {
  return chern(e, h).R;
}

template <Scalar S>
Form<S> char_form(const CohesiveModule<S>& e, const HermitianMetric<S>& h, const Polynomial<S>& f) {
  return supertrace(series_eval(f, curvature(e, h)));
}

/// Split an End-valued form by exotic degree -p+q+d.
template <Scalar S>
std::map<int, EndForm<S>> exotic_parts(const EndForm<S>& a) {
  std::map<int, EndForm<S>> out;
  const int n = a.ring()->n();
  for (int i = 0; i < a.rank(); ++i)
    for (int j = 0; j < a.rank(); ++j)
      for (auto& [m, c] : a.at(i, j).terms()) {
        auto b = bidegree(m, n);
        int x = b.q - b.p + a.deg(i) - a.deg(j);
        auto [it, _] = out.try_emplace(x, a.bundle(), a.ring(), a.validity());
        it->second.at(i, j) += Form<S>::basis(c, m);
      }
  return out;
}

/// Structural identities of a Chern superconnection.
template <Scalar S>
std::vector<IdentityCheck> chern_structure_checks(const CohesiveModule<S>& e, const HermitianMetric<S>& h,
                                                  Tolerance tol = Tolerance::for_mode<S>()) {
  auto c = chern(e, h);
  std::vector<IdentityCheck> out;
  out.push_back(check_zero("E'^2 = 0", square(c.E1()), tol));
  out.push_back(check_equal("R* = R", adjoint(c.R, h), c.R, tol));
  out.push_back(check_equal("R = [E', E'']", bracket(c.E1(), c.E2()), c.R, tol));
  EndForm<S> off(c.R.bundle(), c.R.ring(), c.R.validity());
  for (auto& [k, part] : exotic_parts(c.R))
    if (k != 0) off += part;
  out.push_back(check_zero("exotic(R) in degree 0", off, tol));
  out.push_back(check_zero("[E, R] = 0", bracket(c.E(), c.R), tol));
  return out;
}

/// Unitarity (-1)^{|s|} d h(s,t) = -h(Es,t) + h(s,Et) on homogeneous s.
template <Scalar S>
IdentityCheck unitarity_check(const Superconnection<S>& E, const HermitianMetric<S>& h,
                              const std::vector<std::pair<Section<S>, int>>& homogeneous,
                              const std::vector<Section<S>>& others, Tolerance tol = Tolerance::for_mode<S>()) {
  std::pair<double, std::string> worst{0.0, ""};
  for (auto& [s, deg] : homogeneous)
    for (auto& t : others) {
      Form<S> lhs = pairing(s, t, h).dchart();
      if (deg & 1) lhs = -lhs;
      Form<S> rhs = pairing(s, E.apply(t), h) - pairing(E.apply(s), t, h);
      auto d = form_defect(lhs, rhs);
      if (d.first > worst.first) worst = d;
    }
  return make_check("unitarity", worst, tol);
}

/// Frame-times-monomial sections e_j * z^a * dw^I (chart generators only).
template <Scalar S>
std::vector<std::pair<Section<S>, int>> jet_basis_sections(const GradedBundle& b, const Ring& r, int max_deg) {
  const int n = r->n();
  std::vector<Monomial> monos{Monomial{}};
  for (int d = 1; d <= max_deg; ++d) {
    std::vector<Monomial> next;
    for (auto& m : monos)
      if (chart_degree(m, n) == d - 1)
        for (int v = 0; v < 2 * n; ++v) {
          Monomial x = m;
          ++x.e[v];
          if (std::find(next.begin(), next.end(), x) == next.end()) next.push_back(x);
        }
    monos.insert(monos.end(), next.begin(), next.end());
  }
  std::vector<std::pair<Section<S>, int>> out;
  for (int j = 0; j < b.rank(); ++j)
    for (auto& m : monos)
      for (Mask mask = 0; mask < (Mask(1) << (2 * n)); ++mask) {
        Section<S> s(b.rank(), Form<S>(r));
        s[j] = Form<S>::basis(Jet<S>::monomial(r, m, S(1)), mask);
        out.emplace_back(std::move(s), b.degree(j) + popcount(mask));
      }
  return out;
}

/// Operator oracle: D(D s) against (coefficient square) s on the jet basis.
template <Scalar S>
IdentityCheck oracle_square_check(std::string name, const Superconnection<S>& d, const EndForm<S>& coeff_square,
                                  int max_deg, Tolerance tol = Tolerance::for_mode<S>()) {
  std::pair<double, std::string> worst{0.0, ""};
  for (auto& [s, deg] : jet_basis_sections<S>(d.bundle(), d.ring(), max_deg)) {
    Section<S> lhs = d.apply(d.apply(s));
    Section<S> rhs = coeff_square * s;
    for (size_t i = 0; i < lhs.size(); ++i) {
      auto x = form_defect(lhs[i], rhs[i]);
      if (x.first > worst.first) worst = x;
    }
  }
  return make_check(std::move(name), worst, tol);
}

/// Name for an auxiliary parameter that does not clash with the ring's own.
inline std::string fresh_param_name(const Ring& r, std::string base) {
  while (r->param_index(base) >= 0) base += "_";
  return base;
}

/// Ring with one extra free polynomial parameter appended; returns its index.
inline std::pair<Ring, int> extend_free(const Ring& r, const std::string& name, int floor = 0) {
  ParamSpec p;
  p.name = fresh_param_name(r, name);
  p.laurent_floor = floor;
  Ring out = ring_with_param(r, p);
  return {out, out->num_params() - 1};
}
inline std::vector<int> identity_map(const Ring& r) {
  std::vector<int> m(r->num_params());
  for (int j = 0; j < r->num_params(); ++j) m[j] = j;
  return m;
}

template <Scalar S>
struct LinearTransgression {
  Form<S> potential, lhs, rhs;
  IdentityCheck check;
};

/// f(E, E) - f(E, nabla) = d of the integral of str{A f'(R_t)} over [0,1].
template <Scalar S>
LinearTransgression<S> linear_transgression(const CohesiveModule<S>& e, const HermitianMetric<S>& h,
                                            const Polynomial<S>& f, Tolerance tol = Tolerance::for_mode<S>()) {
  auto c = chern(e, h);
  EndForm<S> conn = c.M.filter([&](int i, int j, Mask m) { return popcount(m) == 1 && c.M.deg(i) == c.M.deg(j); });
  EndForm<S> A = c.M - conn;
  auto [rt, t] = extend_free(e.ring(), "t_lin");
  auto up = identity_map(e.ring());
  EndForm<S> connT = conn.remap(rt, up), AT = A.remap(rt, up);
  Form<S> tvar(Jet<S>::variable(rt, rt->param_var(t)));
  EndForm<S> Mt = connT + tvar * AT;
  EndForm<S> Rt = curvature_of(Mt);
  Form<S> integrand = supertrace(AT * series_eval(f.derivative(), Rt));
  std::vector<int> down(rt->num_params(), -1);
  for (int j = 0; j < e.ring()->num_params(); ++j) down[j] = j;
  LinearTransgression<S> out;
  out.potential = integrand.integrate_param(t, S(0), S(1)).remap(e.ring(), down);
  Form<S> f1 = supertrace(series_eval(f, c.R));
  Form<S> f0 = supertrace(series_eval(f, curvature_of(conn)));
  out.lhs = f1 - f0;
  out.rhs = out.potential.dchart();
  out.check = check_equal("linear transgression", out.lhs, out.rhs, tol);
  return out;
}

}  // namespace bc
