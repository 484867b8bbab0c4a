#pragma once

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bottchern/families.hpp"

namespace bc {

/// E[1]: every summand moves down one degree and the tail changes sign.
template <Scalar S>
CohesiveModule<S> shift(const CohesiveModule<S>& e) {
  GradedBundle b = e.bundle().shifted(1);
  EndForm<S> t(b, e.ring());
  for (int i = 0; i < t.rank(); ++i)
    for (int j = 0; j < t.rank(); ++j) t.at(i, j) = -e.tail().at(i, j);
  return CohesiveModule<S>(b, t);
}

/// Same matrix of forms on another bundle of equal rank.
template <Scalar S>
EndForm<S> rebundle(const EndForm<S>& a, const GradedBundle& b) {
  if (b.rank() != a.rank()) throw StructureError("rank mismatch");
  EndForm<S> x(b, a.ring(), a.validity());
  for (int i = 0; i < a.rank(); ++i)
    for (int j = 0; j < a.rank(); ++j) x.at(i, j) = a.at(i, j);
  return x;
}

/// Block diagonal EndForm on the direct sum of the two bundles given.
template <Scalar S>
EndForm<S> block_diag(const EndForm<S>& a, const EndForm<S>& b, const GradedBundle& sum) {
  require_same_ring(a.ring(), b.ring());
  EndForm<S> x(sum, a.ring());
  const int ra = a.rank();
  for (int i = 0; i < ra; ++i)
    for (int j = 0; j < ra; ++j) x.at(i, j) = a.at(i, j);
  for (int i = 0; i < b.rank(); ++i)
    for (int j = 0; j < b.rank(); ++j) x.at(ra + i, ra + j) = b.at(i, j);
  return x;
}

template <Scalar S>
using FormMatrix = std::vector<std::vector<Form<S>>>;

/// Degree-0 morphism phi: E -> F given as a (rank F) x (rank E) matrix of
/// forms, phi_k of type (0,k) lowering degree by k.
template <Scalar S>
class Morphism {
 public:
  Morphism(CohesiveModule<S> e, CohesiveModule<S> f, FormMatrix<S> phi)
      : e_(std::move(e)), f_(std::move(f)), phi_(std::move(phi)) {
    require_same_ring(e_.ring(), f_.ring());
    if ((int)phi_.size() != f_.bundle().rank()) throw StructureError("morphism row count must be the target rank");
    const int n = e_.ring()->n();
    for (int i = 0; i < (int)phi_.size(); ++i) {
      if ((int)phi_[i].size() != e_.bundle().rank()) throw StructureError("morphism column count must be the source rank");
      for (int j = 0; j < (int)phi_[i].size(); ++j)
        for (auto& [m, c] : phi_[i][j].terms()) {
          auto b = bidegree(m, n);
          if (b.p != 0 || b.m != 0 || f_.bundle().degree(i) - e_.bundle().degree(j) != -b.q)
            throw StructureError("morphism entry (" + std::to_string(i) + "," + std::to_string(j) +
                                 ") is not of total degree 0");
        }
    }
  }

  const CohesiveModule<S>& source() const { return e_; }
  const CohesiveModule<S>& target() const { return f_; }
  const FormMatrix<S>& phi() const { return phi_; }
  const Ring& ring() const { return e_.ring(); }

  /// phi placed in the (F rows, E columns) block of a bundle F + E'.
  EndForm<S> embedded(const GradedBundle& sum, const S& scale = S(1)) const {
    EndForm<S> x(sum, ring());
    const int rf = f_.bundle().rank();
    for (size_t i = 0; i < phi_.size(); ++i)
      for (size_t j = 0; j < phi_[i].size(); ++j) x.at((int)i, rf + (int)j) = scale * phi_[i][j];
    return x;
  }

  /// F'' phi - phi E'' as a (rank F) x (rank E) matrix.
  FormMatrix<S> closedness_defect() const {
    GradedBundle sum = GradedBundle::direct_sum(f_.bundle(), e_.bundle());
    Superconnection<S> d(Base::Delbar, block_diag(f_.tail(), e_.tail(), sum));
    return off_block(bracket(d, embedded(sum)));
  }
  bool closed(Tolerance tol = Tolerance::for_mode<S>()) const { return max_abs(closedness_defect()).first <= tol.abs; }

  FormMatrix<S> off_block(const EndForm<S>& a) const {
    const int rf = f_.bundle().rank(), re = e_.bundle().rank();
    FormMatrix<S> out(rf);
    for (int i = 0; i < rf; ++i)
      for (int j = 0; j < re; ++j) out[i].push_back(a.at(i, rf + j));
    return out;
  }
  static std::pair<double, std::string> max_abs(const FormMatrix<S>& m) {
    std::pair<double, std::string> best{0.0, ""};
    for (size_t i = 0; i < m.size(); ++i)
      for (size_t j = 0; j < m[i].size(); ++j) {
        auto [a, w] = m[i][j].max_abs();
        if (a > best.first) best = {a, "block (" + std::to_string(i) + "," + std::to_string(j) + ") " + w};
      }
    return best;
  }

  /// Zero morphism between the same modules.
  Morphism zero() const {
    FormMatrix<S> z = phi_;
    for (auto& row : z)
      for (auto& w : row) w = Form<S>(ring());
    return Morphism(e_, f_, z);
  }
  /// The same morphism with every coefficient moved into `r` (parameters appended).
  Morphism lifted(const Ring& r) const {
    auto up = identity_map(ring());
    auto lift_mod = [&](const CohesiveModule<S>& m) { return CohesiveModule<S>(m.bundle(), m.tail().remap(r, up)); };
    FormMatrix<S> p = phi_;
    for (auto& row : p)
      for (auto& w : row) w = w.remap(r, up);
    return Morphism(lift_mod(e_), lift_mod(f_), p);
  }

 private:
  CohesiveModule<S> e_, f_;
  FormMatrix<S> phi_;
};

template <Scalar S>
GradedBundle cone_bundle(const Morphism<S>& m) {
  return GradedBundle::direct_sum(m.target().bundle(), m.source().bundle().shifted(1));
}

/// Cone tail [[F'', scale phi], [0, -E'']] on F + E[1] (no flatness check).
template <Scalar S>
EndForm<S> cone_tail(const Morphism<S>& m, const Form<S>& scale) {
  GradedBundle b = cone_bundle(m);
  EndForm<S> x = block_diag(m.target().tail(), -m.source().tail(), b);
  const int rf = m.target().bundle().rank();
  for (size_t i = 0; i < m.phi().size(); ++i)
    for (size_t j = 0; j < m.phi()[i].size(); ++j) x.at((int)i, rf + (int)j) = scale * m.phi()[i][j];
  return x;
}

template <Scalar S>
CohesiveModule<S> cone(const Morphism<S>& m) {
  auto d = Morphism<S>::max_abs(m.closedness_defect());
  if (d.first > Tolerance::for_mode<S>().abs) throw StructureError("morphism is not closed: defect at " + d.second);
  return CohesiveModule<S>(cone_bundle(m), cone_tail(m, Form<S>::constant(m.ring(), S(1))));
}

/// Direct-sum metric h_F + h_E on the cone bundle.
template <Scalar S>
HermitianMetric<S> cone_metric(const Morphism<S>& m, const HermitianMetric<S>& he, const HermitianMetric<S>& hf) {
  return HermitianMetric<S>(block_diag(hf.H(), he.H(), cone_bundle(m)));
}

/// Flatness defect of the cone equals the closedness defect of phi in the
/// off-diagonal block (and nothing elsewhere).
template <Scalar S>
IdentityCheck cone_flatness_check(const Morphism<S>& m, Tolerance tol = Tolerance::for_mode<S>()) {
  GradedBundle b = cone_bundle(m);
  EndForm<S> sq = square(Superconnection<S>(Base::Delbar, cone_tail(m, Form<S>::constant(m.ring(), S(1)))));
  EndForm<S> expect(b, m.ring());
  auto def = m.closedness_defect();
  const int rf = m.target().bundle().rank();
  for (size_t i = 0; i < def.size(); ++i)
    for (size_t j = 0; j < def[i].size(); ++j) expect.at((int)i, rf + (int)j) = def[i][j];
  return check_equal("cone flatness is closedness", sq, expect, tol);
}

/// Identity on the E[1] summand of the cone.
template <Scalar S>
EndForm<S> cone_projection(const Morphism<S>& m, const Ring& r) {
  GradedBundle b = cone_bundle(m);
  EndForm<S> x(b, r);
  for (int i = m.target().bundle().rank(); i < b.rank(); ++i) x.at(i, i) = Form<S>::constant(r, S(1));
  return x;
}

template <Scalar S>
struct ConeFamily {
  Ring ring;  // chart ring plus a Laurent parameter t
  int t;
  EndForm<S> tail, gamma;
  IdentityCheck check;
};

/// C''_t for phi_t = t phi and gamma''_t = t^{-1} Id on E[1], with
/// [C''_t, gamma''_t] = d/dt C''_t checked exactly in t.
template <Scalar S>
ConeFamily<S> cone_family_gamma(const Morphism<S>& m, Tolerance tol = Tolerance::for_mode<S>()) {
  if (!m.closed(tol)) throw StructureError("morphism is not closed");
  auto [r, t] = extend_free(m.ring(), "t", -1);
  Morphism<S> ml = m.lifted(r);
  ConeFamily<S> out{r, t, {}, {}, {}};
  Form<S> tv(Jet<S>::variable(r, r->param_var(t)));
  out.tail = cone_tail(ml, tv);
  out.gamma = cone_projection(ml, r).map([&](const Form<S>& w) { return w.shift_param(t, -1); });
  Superconnection<S> c(Base::Delbar, out.tail);
  out.check = check_equal("cone gamma commutator", bracket(c, out.gamma), param_derivative(out.tail, t), tol);
  return out;
}

/// Divide by the free parameter t; the t^0 part must vanish.
template <Scalar S>
EndForm<S> divide_by_param(const EndForm<S>& a, int t, IdentityCheck* remainder = nullptr) {
  EndForm<S> rem = a.map([&](const Form<S>& w) { return w.param_coefficient(t, 0); });
  if (remainder) *remainder = check_zero("division remainder", rem, Tolerance::for_mode<S>());
  else if (!rem.is_zero()) throw DomainError("division by the parameter leaves a remainder");
  return (a - rem).map([&](const Form<S>& w) { return w.shift_param(t, -1); });
}

template <Scalar S>
struct CurvatureSplit {
  Ring ring;  // chart ring plus a polynomial parameter t
  int t;
  EndForm<S> Rt, R0, At;
  std::vector<IdentityCheck> checks;
};

/// Cone curvature along phi_t = t phi: R_t = R_0 + t A_t with R_0 the direct-sum curvature.
template <Scalar S>
CurvatureSplit<S> curvature_split(const Morphism<S>& m, const HermitianMetric<S>& he, const HermitianMetric<S>& hf,
                                  Tolerance tol = Tolerance::for_mode<S>()) {
  if (!m.closed(tol)) throw StructureError("morphism is not closed");
  auto [r, t] = extend_free(m.ring(), "t", 0);
  auto up = identity_map(m.ring());
  Morphism<S> ml = m.lifted(r);
  HermitianMetric<S> h(block_diag(hf.H().remap(r, up), he.H().remap(r, up), cone_bundle(ml)));
  CurvatureSplit<S> out{r, t, {}, {}, {}, {}};
  Form<S> tv(Jet<S>::variable(r, r->param_var(t)));
  out.Rt = chern_from_tail(cone_tail(ml, tv), h).R;
  out.R0 = out.Rt.map([&](const Form<S>& w) { return w.substitute_param(t, S(0)); });
  IdentityCheck rem;
  out.At = divide_by_param(out.Rt - out.R0, t, &rem);
  out.checks.push_back(rem);
  // independent: the direct-sum curvature from the two summands
  EndForm<S> rf = curvature(ml.target(), HermitianMetric<S>(hf.H().remap(r, up)));
  EndForm<S> re = curvature(ml.source(), HermitianMetric<S>(he.H().remap(r, up)));
  out.checks.push_back(check_equal("direct-sum curvature", out.R0, block_diag(rf, re, cone_bundle(ml)), tol));
  out.checks.push_back(check_equal("curvature split", out.Rt, out.R0 + tv * out.At, tol));
  return out;
}

template <Scalar S>
struct ConeTransgression {
  Form<S> potential, lhs, rhs;
  Form<S> full_trace_potential;  // int_0^1 str{R_{f'}(t)} dt, without the projection
  std::vector<IdentityCheck> checks;
};

/// f(Cone, C''_1) - f(Cone, C''_0) against the regularised potential
/// P = int_0^1 str{R_{f'}(t) gamma} dt, R_{f'} = (f'(R_0 + t A_t) - f'(R_0)) / t.
template <Scalar S>
ConeTransgression<S> regularized_cone_transgression(const Morphism<S>& m, const HermitianMetric<S>& he,
                                                    const HermitianMetric<S>& hf, const Polynomial<S>& f,
                                                    Tolerance tol = Tolerance::for_mode<S>()) {
  auto sp = curvature_split(m, he, hf, tol);
  ConeTransgression<S> out;
  out.checks = sp.checks;
  const int t = sp.t;
  Form<S> tv(Jet<S>::variable(sp.ring, sp.ring->param_var(t)));
  Polynomial<S> g = f.derivative();
  IdentityCheck rem;
  EndForm<S> Rg = divide_by_param(series_eval(g, sp.R0 + tv * sp.At) - series_eval(g, sp.R0), t, &rem);
  rem.name = "singular term cancels";
  out.checks.push_back(rem);
  Form<S> integrand = supertrace(Rg * cone_projection(m, sp.ring));
  std::vector<int> down(sp.ring->num_params(), -1);
  for (int j = 0; j < m.ring()->num_params(); ++j) down[j] = j;
  out.potential = integrand.integrate_param(t, S(0), S(1)).remap(m.ring(), down);
  out.full_trace_potential = supertrace(Rg).integrate_param(t, S(0), S(1)).remap(m.ring(), down);
  HermitianMetric<S> h = cone_metric(m, he, hf);
  out.lhs = char_form(cone(m), h, f) - char_form(cone(m.zero()), h, f);
  out.rhs = S(2) * out.potential.delbar().del();
  out.checks.push_back(check_equal("regularized cone transgression", out.lhs, out.rhs, tol));
  return out;
}

template <Scalar S>
struct ConeAdditivity {
  Form<S> defect;     // f(E) - f(F) + f(Cone(phi))
  Form<S> potential;  // defect = 2 del delbar potential
  std::vector<IdentityCheck> checks;
};

template <Scalar S>
ConeAdditivity<S> cone_additivity(const Morphism<S>& m, const HermitianMetric<S>& he, const HermitianMetric<S>& hf,
                                  const Polynomial<S>& f, Tolerance tol = Tolerance::for_mode<S>()) {
  ConeAdditivity<S> out;
  HermitianMetric<S> h = cone_metric(m, he, hf);
  Form<S> fe = char_form(m.source(), he, f), ff = char_form(m.target(), hf, f);
  Form<S> c0 = char_form(cone(m.zero()), h, f);
  out.checks.push_back(check_equal("additive property", c0, ff - fe, tol));
  auto tr = regularized_cone_transgression(m, he, hf, f, tol);
  out.checks.insert(out.checks.end(), tr.checks.begin(), tr.checks.end());
  out.defect = fe - ff + char_form(cone(m), h, f);
  out.potential = tr.potential;
  out.checks.push_back(check_equal("additivity witness", out.defect, S(2) * out.potential.delbar().del(), tol));
  return out;
}

/// Tail of the rescaled structure sum_k t^{1-k} A_k at a fixed t.
template <Scalar S>
EndForm<S> rescaled_tail(const EndForm<S>& tail, const S& t) {
  if (scalar_traits<S>::is_zero(t)) throw DomainError("rescaling needs t > 0");
  EndForm<S> out(tail.bundle(), tail.ring());
  for (int k = 0; k <= 2 * tail.ring()->n(); ++k) {
    EndForm<S> part = tail.cohesive_part(k);
    S c(1);
    for (int e = 0; e < std::abs(1 - k); ++e) c = c * t;
    out += (1 - k >= 0 ? c : S(1) / c) * part;
  }
  return out;
}

template <Scalar S>
struct RescaleFamily {
  Ring ring;
  int t;
  EndForm<S> tail, gamma;
  IdentityCheck check;
};

/// Laurent family E''_t = sum_k t^{1-k} E''_k with the check
/// [E''_t, gamma''_t] = d/dt E''_t. Since E''_k raises degree by 1-k,
/// [E''_k, N] = -(1-k) E''_k, so the generator is gamma''_t = -N/t.
template <Scalar S>
RescaleFamily<S> rescale(const CohesiveModule<S>& e, Tolerance tol = Tolerance::for_mode<S>()) {
  const int kmax = 2 * e.ring()->n();
  auto [r, t] = extend_free(e.ring(), "t", -kmax);
  auto up = identity_map(e.ring());
  EndForm<S> a = e.tail().remap(r, up);
  RescaleFamily<S> out{r, t, EndForm<S>(e.bundle(), r), {}, {}};
  for (int k = 0; k <= kmax; ++k)
    out.tail += a.cohesive_part(k).map([&](const Form<S>& w) { return w.shift_param(t, 1 - k); });
  out.gamma = grading_operator<S>(e.bundle(), r).map([&](const Form<S>& w) { return -w.shift_param(t, -1); });
  Superconnection<S> c(Base::Delbar, out.tail);
  out.check = check_equal("degree commutator", bracket(c, out.gamma), param_derivative(out.tail, t), tol);
  return out;
}

/// Left-regular representation of an End-valued form on sections whose
/// coefficients are truncated at the form's chart validity.
class RegularRep {
 public:
  RegularRep(const GradedBundle& b, const Ring& r, int order) : rank_(b.rank()), ring_(r), order_(order) {
    if (r->num_params() != 0) throw DomainError("matrix exponential needs a chart-only ring");
    const int nv = 2 * r->n();
    std::vector<Monomial> ms;
    std::function<void(int, int, Monomial)> rec = [&](int var, int left, Monomial m) {
      if (var == nv) {
        ms.push_back(m);
        return;
      }
      for (int e = 0; e <= left; ++e) {
        Monomial x = m;
        x.e[var] = int8_t(e);
        rec(var + 1, left - e, x);
      }
    };
    rec(0, order, Monomial{});
    for (int i = 0; i < rank_; ++i)
      for (Mask mk = 0; mk < (Mask(1) << nv); ++mk)
        for (auto& m : ms) {
          index_[key(i, mk, m)] = (int)basis_.size();
          basis_.push_back({i, mk, m});
        }
  }
  int dim() const { return (int)basis_.size(); }

  Eigen::MatrixXcd matrix(const EndForm<Complex>& a) const {
    const int N = dim();
    Eigen::MatrixXcd L = Eigen::MatrixXcd::Zero(N, N);
    Validity v = Validity::full(*ring_);
    v.chart = order_;
    for (int c = 0; c < N; ++c) {
      auto& bs = basis_[c];
      Section<Complex> s(rank_, Form<Complex>(ring_, v));
      s[bs.row] = Form<Complex>::basis(Jet<Complex>::monomial(ring_, bs.m, Complex(1)), bs.mask).with_validity(v);
      Section<Complex> out = a.with_validity(min(a.validity(), v)) * s;
      for (int i = 0; i < rank_; ++i)
        for (auto& [mk, jet] : out[i].terms())
          for (auto& t : jet.terms()) {
            auto it = index_.find(key(i, mk, t.m));
            if (it != index_.end()) L(it->second, c) += t.c;
          }
    }
    return L;
  }

  /// Columns acting on the frame sections e_j (unit coefficient) as an EndForm.
  EndForm<Complex> endform(const Eigen::MatrixXcd& M, const GradedBundle& b) const {
    Validity v = Validity::full(*ring_);
    v.chart = order_;
    EndForm<Complex> out(b, ring_, v);
    for (int j = 0; j < rank_; ++j) {
      int c = index_.at(key(j, 0, Monomial{}));
      for (int r = 0; r < dim(); ++r) {
        if (M(r, c) == Complex(0)) continue;
        auto& bs = basis_[r];
        out.at(bs.row, j) += Form<Complex>::basis(Jet<Complex>::monomial(ring_, bs.m, M(r, c)), bs.mask).with_validity(v);
      }
    }
    return out;
  }

 private:
  struct Basis {
    int row;
    Mask mask;
    Monomial m;
  };
  static std::string key(int i, Mask mk, const Monomial& m) {
    std::string k = std::to_string(i) + ":" + std::to_string(mk) + ":";
    for (int x = 0; x < kMaxVars; ++x) k += char('A' + m.e[x] + 8);
    return k;
  }
  int rank_;
  Ring ring_;
  int order_;
  std::vector<Basis> basis_;
  std::map<std::string, int> index_;
};

/// exp(A) for an End-valued form in numeric mode (scaling and squaring on the
/// left-regular representation).
inline EndForm<Complex> exp_form(const EndForm<Complex>& a) {
  int order = a.validity().chart;
  RegularRep rep(a.bundle(), a.ring(), order);
  Eigen::MatrixXcd E = rep.matrix(a).exp();
  return rep.endform(E, a.bundle());
}

struct HeatTraceResult {
  Form<Complex> I;
  std::vector<std::pair<double, double>> decay_samples;
  double T = 0;
  Form<Complex> residual;            // str exp(-R_1) - del delbar I
  Form<Complex> corrected_residual;  // str exp(-R_1) + 2 del delbar I
  double decay_rate = 0, fit_residual = 0;
  double tail_estimate = 0;
};

/// Rescaled Chern curvature R_t at a numeric t.
inline EndForm<Complex> rescaled_curvature(const CohesiveModule<Complex>& e, const HermitianMetric<Complex>& h, double t) {
  return chern_from_tail(rescaled_tail(e.tail(), Complex(t)), h).R;
}

/// str{exp(-R_t) N} as a chart form.
inline Form<Complex> heat_trace_N(const CohesiveModule<Complex>& e, const HermitianMetric<Complex>& h, double t) {
  auto R = rescaled_curvature(e, h, t);
  return supertrace(exp_form(-R) * grading_operator<Complex>(e.bundle(), R.ring()));
}

/// Largest coefficient of the form at the base point (constant jet terms).
inline double basepoint_magnitude(const Form<Complex>& w) {
  double m = 0;
  for (auto& [mk, jet] : w.terms()) m = std::max(m, std::abs(jet.constant_term()));
  return m;
}

/// Least-squares fit log m = a - c t^2; returns c and the relative residual
/// norm |r| / |log m - mean|.
inline std::pair<double, double> fit_gaussian_decay(const std::vector<std::pair<double, double>>& s) {
  Eigen::MatrixXd X(s.size(), 2);
  Eigen::VectorXd y(s.size());
  for (size_t k = 0; k < s.size(); ++k) {
    X(k, 0) = 1;
    X(k, 1) = -s[k].first * s[k].first;
    y(k) = std::log(s[k].second);
  }
  Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  double res = (X * beta - y).norm();
  double spread = (y.array() - y.mean()).matrix().norm();
  return {beta(1), spread > 0 ? res / spread : 0.0};
}

/// Adaptive Simpson for str{exp(-R_t) N}/t with cached samples.
class HeatQuadrature {
 public:
  HeatQuadrature(const CohesiveModule<Complex>& e, const HermitianMetric<Complex>& h, double tol)
      : e_(e), h_(h), tol_(tol) {}

  const Form<Complex>& g(double t) {
    auto it = cache_.find(t);
    if (it == cache_.end()) it = cache_.emplace(t, Complex(1.0 / t) * heat_trace_N(e_, h_, t)).first;
    return it->second;
  }
  Form<Complex> integrate(double a, double b) {
    Form<Complex> whole = Complex((b - a) / 6) * (g(a) + Complex(4) * g((a + b) / 2) + g(b));
    return simpson(a, b, whole, tol_ / 4, 30);
  }
  /// Gaussian tail beyond T fitted from samples at T/2, 3T/4, T.
  double tail_estimate(double T) {
    std::vector<std::pair<double, double>> last;
    for (double t : {T / 2, 3 * T / 4, T}) last.push_back({t, std::max(g(t).max_abs().first, 1e-300)});
    double mag = last.back().second;
    if (mag <= 1e-300) return 0;
    auto [c, res] = fit_gaussian_decay(last);
    return c > 0 ? mag / (2 * c * T) : INFINITY;
  }

 private:
  Form<Complex> simpson(double a, double b, const Form<Complex>& whole, double eps, int depth) {
    double m = (a + b) / 2;
    Form<Complex> left = Complex((m - a) / 6) * (g(a) + Complex(4) * g((a + m) / 2) + g(m));
    Form<Complex> right = Complex((b - m) / 6) * (g(m) + Complex(4) * g((m + b) / 2) + g(b));
    Form<Complex> both = left + right;
    double err = (both - whole).max_abs().first;
    if (depth <= 0 || err <= 15 * eps) return both + Complex(1.0 / 15) * (both - whole);
    return simpson(a, m, left, eps / 2, depth - 1) + simpson(m, b, right, eps / 2, depth - 1);
  }
  const CohesiveModule<Complex>& e_;
  const HermitianMetric<Complex>& h_;
  double tol_;
  std::map<double, Form<Complex>> cache_;
};

/// I_E = int_1^oo str{exp(-R_t) N} dt/t for an acyclic module (numeric).
inline HeatTraceResult acyclic_integral(const CohesiveModule<Complex>& e, const HermitianMetric<Complex>& h,
                                        double T_max, double tol) {
  // acyclicity at the base point: the form-degree-0 part of R_1 is positive
  auto R1 = rescaled_curvature(e, h, 1.0);
  const int r = R1.rank();
  Eigen::MatrixXcd D(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) D(i, j) = R1.at(i, j).coefficient(0).constant_term();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(D);
  if (es.eigenvalues().minCoeff() <= 1e-12) throw DomainError("complex is not acyclic at the base point (Laplacian singular)");

  HeatTraceResult out;
  for (double t : {1.0, 2.0, 3.0, 4.0}) out.decay_samples.push_back({t, basepoint_magnitude(heat_trace_N(e, h, t))});
  for (auto& s : out.decay_samples)
    if (!(s.second > 0)) throw DomainError("heat trace vanished exactly at a decay sample");
  std::tie(out.decay_rate, out.fit_residual) = fit_gaussian_decay(out.decay_samples);

  HeatQuadrature q(e, h, tol);
  double T = 2;
  Form<Complex> acc = q.integrate(1, T);
  while (true) {
    out.tail_estimate = q.tail_estimate(T);
    if (out.tail_estimate < tol) break;
    if (2 * T > T_max) throw DomainError("quadrature non-convergence by T_max = " + std::to_string(T_max));
    acc = acc + q.integrate(T, 2 * T);
    T *= 2;
  }
  out.T = T;
  out.I = acc;
  Form<Complex> lhs = supertrace(exp_form(-R1));
  Form<Complex> ddb = out.I.delbar().del();
  out.residual = lhs - ddb;
  out.corrected_residual = lhs + Complex(2) * ddb;
  return out;
}

/// int_1^T str{exp(-R_t) N} dt/t with no tail handling.
inline Form<Complex> heat_integral_to(const CohesiveModule<Complex>& e, const HermitianMetric<Complex>& h, double T,
                                      double tol) {
  HeatQuadrature q(e, h, tol);
  Form<Complex> acc = q.integrate(1, 2);
  for (double a = 2; a < T; a *= 2) acc = acc + q.integrate(a, std::min(2 * a, T));
  return acc;
}

struct HeatCorollary {
  double stated = 0;     // relative defect against -(2/t) del delbar str{exp(-R_t) N}
  double corrected = 0;  // relative defect against +(2/t) del delbar str{exp(-R_t) N}
};

/// Central difference of str exp(-R_t) against (2/t) del delbar str{exp(-R_t) N}
/// with both signs.
inline HeatCorollary heat_corollary_defect(const CohesiveModule<Complex>& e, const HermitianMetric<Complex>& h,
                                           double t, double step = 1e-4) {
  auto tr = [&](double s) { return supertrace(exp_form(-rescaled_curvature(e, h, s))); };
  Form<Complex> fd = Complex(1 / (2 * step)) * (tr(t + step) - tr(t - step));
  Form<Complex> rhs = Complex(2 / t) * heat_trace_N(e, h, t).delbar().del();
  // compare where both sides are valid, relative to the derivative there
  Form<Complex> fdv = fd.with_validity(rhs.validity());
  double scale = std::max(fdv.max_abs().first, 1e-300);
  return {form_defect(fd, -rhs).first / scale, form_defect(fd, rhs).first / scale};
}

}  // namespace bc
