#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bottchern/cohesive.hpp"

namespace bc {

/// Rational approximation of a double on a 2^-60 grid; used for sample
/// points that are only known numerically (quadrature nodes).
inline Rational dyadic(double x) {
  return Rational((long long)std::llround(std::ldexp(x, 60)), 1LL << 60);
}

/// Ring in which the listed free parameters become local coordinates
/// centred at `point` and truncated at `cap`.
inline Ring local_ring(const Ring& r, const std::vector<int>& params, const std::vector<Rational>& point, int cap) {
  if (params.size() != point.size()) throw DomainError("sample point has the wrong number of coordinates");
  auto ps = r->params();
  for (size_t k = 0; k < params.size(); ++k) {
    auto& p = ps.at(params[k]);
    if (p.cap) throw DomainError("parameter " + p.name + " is already local");
    if (p.laurent_floor != 0) throw DomainError("cannot sample the Laurent parameter " + p.name);
    p.cap = cap;
    p.center = point[k];
  }
  return make_ring(r->n(), r->order(), ps);
}

/// Expand an EndForm around a parameter point (one parameter at a time).
template <Scalar S>
EndForm<S> localize_at(const EndForm<S>& a, const std::vector<int>& params, const std::vector<Rational>& point, int cap) {
  EndForm<S> cur = a;
  Ring r = a.ring();
  for (size_t k = 0; k < params.size(); ++k) {
    Ring next = local_ring(r, {params[k]}, {point[k]}, cap);
    cur = cur.localize(next, params[k]);
    r = next;
  }
  return cur;
}

/// Ring with every parameter removed (chart only).
inline Ring chart_ring(const Ring& r) { return make_ring(r->n(), r->order()); }

/// Constant term in all (local) parameters, moved into the chart ring.
template <Scalar S>
Form<S> at_center(const Form<S>& w) {
  Form<S> cur = w;
  for (int j = 0; j < w.ring()->num_params(); ++j) cur = cur.param_coefficient(j, 0);
  std::vector<int> drop(w.ring()->num_params(), -1);
  return cur.remap(chart_ring(w.ring()), drop);
}

/// Parameter exterior derivative d^M: Koszul d in the parameter directions.
template <Scalar S>
EndForm<S> dM(const EndForm<S>& x) {
  return ad_base(x, Diff::Param);
}
template <Scalar S>
Form<S> dM(const Form<S>& x) {
  return x.dparam();
}

/// A cohesive module together with a metric whose entries depend
/// polynomially on the ring's free parameters.
template <Scalar S>
class MetricFamily {
 public:
  MetricFamily(CohesiveModule<S> e, EndForm<S> h) : e_(std::move(e)), h_(std::move(h)) {
    require_same_ring(e_.ring(), h_.ring());
    if (!(h_.bundle() == e_.bundle())) throw StructureError("metric family bundle mismatch");
    if (!agrees(h_.star_transpose(), h_)) throw StructureError("metric family is not Hermitian in its parameters");
    for (int j = 0; j < ring()->num_params(); ++j) {
      if (ring()->param(j).cap) throw StructureError("metric family parameters must be free");
      dirs_.push_back(j);
    }
  }

  const CohesiveModule<S>& module() const { return e_; }
  const EndForm<S>& H() const { return h_; }
  const Ring& ring() const { return e_.ring(); }
  int dims() const { return (int)dirs_.size(); }

  struct Local {
    CohesiveModule<S> e;
    HermitianMetric<S> h;
  };

  /// Module and metric expanded to order `cap` around a parameter point.
  Local at(const std::vector<Rational>& point, int cap) const {
    EndForm<S> tail = localize_at(e_.tail(), dirs_, point, cap);
    EndForm<S> h = localize_at(h_, dirs_, point, cap);
    return {CohesiveModule<S>(e_.bundle(), tail), HermitianMetric<S>(h)};
  }

 private:
  CohesiveModule<S> e_;
  EndForm<S> h_;
  std::vector<int> dirs_;
};

/// Maurer-Cartan form h^{-1} d^M h.
template <Scalar S>
EndForm<S> theta(const HermitianMetric<S>& h) {
  return h.inverse_matrix() * dM(h.H());
}

/// Identities of the metric-variation calculus at one sample point.
template <Scalar S>
std::vector<IdentityCheck> metric_transgression_checks(const CohesiveModule<S>& e, const HermitianMetric<S>& h,
                                                       const Polynomial<S>& f,
                                                       Tolerance tol = Tolerance::for_mode<S>()) {
  std::vector<IdentityCheck> out;
  auto c = chern(e, h);
  auto E = c.E(), Ep = c.E1(), Edd = c.E2();
  EndForm<S> th = theta(h);
  Polynomial<S> g = f.derivative();
  const S half = S(1) / S(2);

  out.push_back(check_equal("theta hermitian", adjoint(th, h), th, tol));
  out.push_back(check_zero("maurer-cartan", dM(th) + th * th, tol));
  EndForm<S> Ept = bracket(Ep, th);
  out.push_back(check_equal("connection derivative", dM(c.M), -Ept, tol));
  out.push_back(check_equal("curvature derivative", dM(c.R), bracket(E, Ept), tol));

  Form<S> dchar = dM(supertrace(series_eval(f, c.R)));
  EndForm<S> gR = series_eval(g, c.R);
  Form<S> first = supertrace(gR * Ept);
  Form<S> sec = supertrace(gR * th);
  out.push_back(check_equal("first transgression", dchar, first.delbar(), tol));
  out.push_back(check_zero("first transgression del part", first.del(), tol));
  out.push_back(check_equal("second transgression", first, sec.del(), tol));
  out.push_back(check_equal("bott-chern", dchar, -sec.delbar().del(), tol));

  EndForm<S> Eddt = bracket(Edd, th);
  EndForm<S> gp = directional_eval(g, c.R, Ept), gd = directional_eval(g, c.R, Eddt);
  out.push_back(check_zero("prime pair trace", supertrace(gp * Ept), tol));
  out.push_back(check_zero("double-prime pair trace", supertrace(gd * Eddt), tol));
  Form<S> Xd = supertrace(gd * th);
  EndForm<S> gth = directional_eval(g, c.R, th);
  out.push_back(check_zero("delbar of double-prime trace", Xd.delbar() + supertrace(gth * bracket(Edd, Eddt)), tol));
  Form<S> Xp = supertrace(gp * th);
  out.push_back(check_equal("third transgression", dM(sec), half * Xp.delbar() - half * Xd.del(), tol));
  return out;
}

/// Gauss-Legendre nodes and weights on [0, 1].
inline const std::vector<std::pair<double, double>>& gauss_legendre_01() {
  static const std::vector<std::pair<double, double>> rule = [] {
    using G = boost::math::quadrature::gauss<double, 24>;
    std::vector<std::pair<double, double>> r;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    for (size_t k = 0; k < x.size(); ++k) {
      r.emplace_back((1 + x[k]) / 2, w[k] / 2);
      if (x[k] != 0) r.emplace_back((1 - x[k]) / 2, w[k] / 2);
    }
    std::sort(r.begin(), r.end());
    return r;
  }();
  return rule;
}

/// Integrand evaluated at a sampled metric: returns a parameter form.
template <Scalar S>
using FamilyIntegrand = std::function<Form<S>(const typename MetricFamily<S>::Local&)>;

namespace detail {

inline std::vector<Rational> affine_point(const std::vector<Rational>& p0, const std::vector<std::pair<Rational, std::vector<Rational>>>& steps) {
  std::vector<Rational> out = p0;
  for (auto& [c, dir] : steps)
    for (size_t j = 0; j < out.size(); ++j) out[j] = out[j] + c * dir[j];
  return out;
}

inline std::vector<Rational> diff(const std::vector<Rational>& a, const std::vector<Rational>& b) {
  std::vector<Rational> out(a.size());
  for (size_t j = 0; j < a.size(); ++j) out[j] = a[j] - b[j];
  return out;
}

/// Left interior product with a constant parameter vector.
template <Scalar S>
Form<S> contract(const Form<S>& w, const std::vector<Rational>& v) {
  Form<S> out(w.ring(), w.validity());
  for (size_t j = 0; j < v.size(); ++j)
    if (!(v[j] == Rational(0))) out += scalar_traits<S>::from_rational(v[j]) * w.contract_param((int)j);
  return out;
}

}  // namespace detail

/// Integral of a parameter 1-form along the segment p0 -> p1 (quadrature).
template <Scalar S>
Form<S> segment_integral(const MetricFamily<S>& mf, const std::vector<Rational>& p0, const std::vector<Rational>& p1,
                         const FamilyIntegrand<S>& w) {
  auto v = detail::diff(p1, p0);
  Form<S> acc(chart_ring(mf.ring()));
  bool first = true;
  for (auto [x, wt] : gauss_legendre_01()) {
    auto loc = mf.at(detail::affine_point(p0, {{dyadic(x), v}}), 1);
    Form<S> val = scalar_traits<S>::from_rational(dyadic(wt)) * at_center(detail::contract(w(loc), v));
    acc = first ? val : acc + val;
    first = false;
  }
  return acc;
}

/// Integral of a parameter 2-form over the triangle p0, p1, p2 (collapsed
/// Gauss-Legendre), oriented by (p1 - p0, p2 - p0).
template <Scalar S>
Form<S> triangle_integral(const MetricFamily<S>& mf, const std::vector<Rational>& p0, const std::vector<Rational>& p1,
                          const std::vector<Rational>& p2, const FamilyIntegrand<S>& w) {
  auto e1 = detail::diff(p1, p0), e2 = detail::diff(p2, p0);
  Form<S> acc(chart_ring(mf.ring()));
  bool first = true;
  for (auto [x, wx] : gauss_legendre_01())
    for (auto [y, wy] : gauss_legendre_01()) {
      Rational u = dyadic(x), s = dyadic((1 - x) * y);
      auto loc = mf.at(detail::affine_point(p0, {{u, e1}, {s, e2}}), 1);
      Form<S> val = detail::contract(detail::contract(w(loc), e1), e2);
      val = scalar_traits<S>::from_rational(dyadic(wx * wy * (1 - x))) * at_center(val);
      acc = first ? val : acc + val;
      first = false;
    }
  return acc;
}

template <Scalar S>
FamilyIntegrand<S> secondary_integrand(const Polynomial<S>& f) {
  return [g = f.derivative()](const typename MetricFamily<S>::Local& loc) {
    auto c = chern(loc.e, loc.h);
    return supertrace(series_eval(g, c.R) * theta(loc.h));
  };
}

template <Scalar S>
struct SecondaryForm {
  Form<S> value;
  std::vector<std::vector<Rational>> path;
};

/// Secondary form: integral of str{f'(R) theta} along a polygonal path.
template <Scalar S>
SecondaryForm<S> secondary_form(const MetricFamily<S>& mf, const std::vector<std::vector<Rational>>& path,
                                const Polynomial<S>& f) {
  if (path.size() < 2) throw DomainError("a path needs at least two points");
  SecondaryForm<S> out{Form<S>(chart_ring(mf.ring())), path};
  for (size_t k = 0; k + 1 < path.size(); ++k)
    out.value += segment_integral(mf, path[k], path[k + 1], secondary_integrand(f));
  return out;
}

/// Characteristic form of the family at a parameter point (chart ring).
template <Scalar S>
Form<S> char_form_at(const MetricFamily<S>& mf, const std::vector<Rational>& p, const Polynomial<S>& f) {
  auto loc = mf.at(p, 0);
  return at_center(char_form(loc.e, loc.h, f));
}

/// f(h(end)) - f(h(start)) = delbar del of the secondary form.
template <Scalar S>
IdentityCheck secondary_corollary_check(const MetricFamily<S>& mf, const std::vector<std::vector<Rational>>& path,
                                        const Polynomial<S>& f, Tolerance tol) {
  auto sf = secondary_form(mf, path, f);
  Form<S> lhs = char_form_at(mf, path.back(), f) - char_form_at(mf, path.front(), f);
  return check_equal("secondary corollary", lhs, sf.value.del().delbar(), tol);
}

template <Scalar S>
struct PathWitness {
  Form<S> X, Y, difference;
  IdentityCheck check;
};

/// Stokes witness for two paths p0 -> p1 (direct) and p0 -> p2 -> p1:
/// their difference equals delbar X - del Y.
template <Scalar S>
PathWitness<S> path_independence_witness(const MetricFamily<S>& mf, const std::vector<Rational>& p0,
                                         const std::vector<Rational>& p1, const std::vector<Rational>& p2,
                                         const Polynomial<S>& f, Tolerance tol) {
  const Polynomial<S> g = f.derivative();
  auto direct = secondary_form(mf, {p0, p1}, f).value;
  auto around = secondary_form(mf, {p0, p2, p1}, f).value;
  auto pair_integrand = [g](bool prime) -> FamilyIntegrand<S> {
    return [g, prime](const typename MetricFamily<S>::Local& loc) {
      auto c = chern(loc.e, loc.h);
      EndForm<S> th = theta(loc.h);
      EndForm<S> b = prime ? bracket(c.E1(), th) : bracket(c.E2(), th);
      return supertrace(directional_eval(g, c.R, b) * th);
    };
  };
  const S half = S(1) / S(2);
  PathWitness<S> out;
  out.X = half * triangle_integral(mf, p0, p1, p2, pair_integrand(true));
  out.Y = half * triangle_integral(mf, p0, p1, p2, pair_integrand(false));
  out.difference = direct - around;
  out.check = check_equal("path independence", out.difference, out.X.delbar() - out.Y.del(), tol);
  return out;
}

/// Gauge action E'' -> f^{-1} E'' f on the tail: f^{-1} delbar f + f^{-1} A f.
template <Scalar S>
EndForm<S> gauge_tail(const EndForm<S>& a, const EndForm<S>& f) {
  const int n = f.ring()->n();
  for (int i = 0; i < f.rank(); ++i)
    for (int j = 0; j < f.rank(); ++j)
      for (auto& [m, c] : f.at(i, j).terms()) {
        auto b = bidegree(m, n);
        if (b.p != 0 || b.m != 0 || f.deg(i) - f.deg(j) != -b.q)
          throw StructureError("gauge element entry (" + std::to_string(i) + "," + std::to_string(j) +
                               ") is not of type (0,k) with End-degree -k");
      }
  EndForm<S> fi = inverse(f);
  return fi * ad_base(f, Diff::Delbar) + fi * a * f;
}

template <Scalar S>
CohesiveModule<S> gauge_act(const CohesiveModule<S>& e, const EndForm<S>& f) {
  return CohesiveModule<S>(e.bundle(), gauge_tail(e.tail(), f));
}

/// One-parameter family of gauge transformations f(t), f(0) = Id, in a ring
/// whose parameter `param` is free.
template <Scalar S>
class GaugeFamily {
 public:
  GaugeFamily(EndForm<S> f, int param) : f_(std::move(f)), p_(param) {
    const auto& spec = f_.ring()->param(p_);
    if (spec.cap || spec.laurent_floor != 0) throw StructureError("gauge parameter must be a free polynomial parameter");
    EndForm<S> f0 = f_.map([&](const Form<S>& w) { return w.substitute_param(p_, S(0)); });
    if (!agrees(f0, EndForm<S>::identity(f_.bundle(), f_.ring()))) throw StructureError("gauge family must start at the identity");
  }
  const EndForm<S>& f() const { return f_; }
  int param() const { return p_; }
  EndForm<S> at(const S& t) const {
    return f_.map([&](const Form<S>& w) { return w.substitute_param(p_, t); });
  }

 private:
  EndForm<S> f_;
  int p_;
};

/// d/dt of every coefficient (no generator added).
template <Scalar S>
EndForm<S> param_derivative(const EndForm<S>& a, int p) {
  const int var = a.ring()->param_var(p);
  return a.map([&](const Form<S>& w) { return w.coeff_derivative(var); });
}

template <Scalar S>
struct GammaResult {
  EndForm<S> gamma_dt;  // f^{-1} df/dt
  EndForm<S> gamma;     // the parameter 1-form with [E''_t, gamma] = d^M E''_t
  EndForm<S> tail;      // E''_t = gauge action of f(t)
  IdentityCheck check;  // [E''_t, gamma_dt] = d/dt E''_t
  bool sampled = false;
};

/// Exactness data of the gauge family E''_t = f_t^{-1} E'' f_t.
template <Scalar S>
GammaResult<S> exact_gamma(const CohesiveModule<S>& e, const GaugeFamily<S>& g,
                           Tolerance tol = Tolerance::for_mode<S>()) {
  const int p = g.param();
  auto compute = [&](const EndForm<S>& f, const EndForm<S>& a) {
    GammaResult<S> out;
    EndForm<S> fi = inverse(f);
    out.tail = gauge_tail(a, f);
    out.gamma_dt = fi * param_derivative(f, p);
    out.gamma = -(fi * dM(f));
    Superconnection<S> Et(Base::Delbar, out.tail);
    out.check = check_equal("gauge exactness", bracket(Et, out.gamma_dt), param_derivative(out.tail, p), tol);
    return out;
  };
  try {
    return compute(g.f(), e.tail());
  } catch (const DomainError&) {
    // f^{-1} is not polynomial in t: check at sampled points instead
  }
  GammaResult<S> worst;
  bool have = false;
  for (Rational t : {Rational(1, 3), Rational(1, 2), Rational(1)}) {
    auto f = localize_at(g.f(), {p}, {t}, 1);
    auto a = localize_at(e.tail(), {p}, {t}, 1);
    auto r = compute(f, a);
    r.sampled = true;
    if (!have || r.check.defect > worst.check.defect) worst = r, have = true;
  }
  return worst;
}

/// Identities of the first transgression over a family of flat structures
/// E''_t with a fixed metric; `gamma` (a parameter 1-form with
/// [E''_t, gamma] = d^M E''_t) enables the exact-direction identities.
template <Scalar S>
std::vector<IdentityCheck> moduli_delta_checks(const EndForm<S>& tail, const HermitianMetric<S>& h,
                                               const Polynomial<S>& f, const std::optional<EndForm<S>>& gamma,
                                               Tolerance tol = Tolerance::for_mode<S>()) {
  std::vector<IdentityCheck> out;
  auto c = chern_from_tail(tail, h);
  auto fl = is_flat(c.E2(), tol);
  if (!fl.flat) throw StructureError("family is not flat: defect at " + fl.defect.max_abs().second);
  EndForm<S> dd = dM(c.Mdd), dp = dM(c.Mp);
  EndForm<S> gR = series_eval(f.derivative(), c.R);
  Form<S> dchar = dM(supertrace(series_eval(f, c.R)));
  Form<S> tdd = supertrace(gR * dd), tdp = supertrace(gR * dp);
  // as parameter 1-forms the adjoint picks up a sign from moving dt past an odd form
  out.push_back(check_equal("delta' from delta''", dp, -adjoint(dd, h), tol));
  out.push_back(check_equal("moduli first transgression", dchar, -tdd.del() - tdp.delbar(), tol));
  out.push_back(check_zero("del of delta' trace", tdp.del(), tol));
  out.push_back(check_zero("delbar of delta'' trace", tdd.delbar(), tol));
  if (!gamma) {
    for (auto name : {"gamma'' transgression", "gamma' transgression", "moduli double transgression"})
      out.push_back(skipped_check(name, "no gamma supplied"));
    return out;
  }
  EndForm<S> g2 = *gamma, g1 = adjoint(g2, h);
  out.push_back(check_equal("gamma'' lifts delta''", bracket(c.E2(), g2), dd, tol));
  Form<S> t2 = supertrace(gR * g2), t1 = supertrace(gR * g1);
  out.push_back(check_equal("gamma'' transgression", t2.delbar(), tdd, tol));
  out.push_back(check_equal("gamma' transgression", t1.del(), -tdp, tol));
  out.push_back(check_equal("moduli double transgression", dchar, -(t1 + t2).delbar().del(), tol));
  return out;
}

}  // namespace bc
