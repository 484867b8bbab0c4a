#include <gtest/gtest.h>

#include "bottchern/conecalc.hpp"
#include "support/random.hpp"

using namespace bc;
using namespace bc::testing;

namespace {

CohesiveModule<Q> koszul(const Ring& r) {
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  EndForm<Q> a(b, r);
  a.at(1, 0) = Form<Q>(Jet<Q>::variable(r, 0));
  return CohesiveModule<Q>(b, a);
}

FormMatrix<Q> identity_matrix(const Ring& r, int n) {
  FormMatrix<Q> m(n, std::vector<Form<Q>>(n, Form<Q>(r)));
  for (int i = 0; i < n; ++i) m[i][i] = Form<Q>::constant(r, Q(1));
  return m;
}

void expect_all(const std::vector<IdentityCheck>& cs) {
  for (auto& c : cs) EXPECT_TRUE(c.passed) << c.name << " defect " << c.defect << " at " << c.where;
}

/// Koszul complex for multiplication by a polynomial g (source of a random
/// cone test): degree 0 -> degree 1.
CohesiveModule<Q> two_term(const Ring& r, const Jet<Q>& g) {
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  EndForm<Q> a(b, r);
  a.at(1, 0) = Form<Q>(g);
  return CohesiveModule<Q>(b, a);
}

}  // namespace

TEST(Shift, TwiceAndFlatness) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  auto s = shift(e);
  EXPECT_TRUE(is_flat(Superconnection<Q>(Base::Delbar, s.tail())).flat);
  auto ss = shift(s);
  EXPECT_EQ(ss.bundle(), e.bundle().shifted(2));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_EQ(ss.tail().at(i, j), e.tail().at(i, j));
  Rng rng(3);
  // even forms: every diagonal sign flips
  auto x = random_endform(rng, e.bundle(), r).map([](const Form<Q>& w) { return w.parity_part(0); });
  EXPECT_EQ(supertrace(rebundle(x, s.bundle())), -supertrace(x));
}

TEST(Cone, ZeroMorphismIsBlockDiagonal) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  Morphism<Q> m(e, e, identity_matrix(r, 2));
  auto c = cone(m.zero());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_TRUE(c.tail().at(i, 2 + j).is_zero());
  EXPECT_EQ(c.bundle().degrees(), (std::vector<int>{0, 1, -1, 0}));
}

TEST(Cone, IdentityIsAcyclicAtBasePoint) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  auto c = cone(Morphism<Q>(e, e, identity_matrix(r, 2)));
  // degree-0 part of the tail at z = 0: connecting map has full rank
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      d(i, j) = scalar_traits<Q>::to_complex(c.tail().at(i, j).coefficient(0).constant_term()).real();
  EXPECT_EQ((d * d).norm(), 0.0);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(d);
  EXPECT_EQ(lu.rank(), 2);  // image = kernel in a 4-dimensional complex
}

TEST(Cone, RejectsOpenMorphism) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  FormMatrix<Q> phi = identity_matrix(r, 2);
  phi[1][1] = Form<Q>(r);  // kills commutation with z
  Morphism<Q> m(e, e, phi);
  EXPECT_FALSE(m.closed());
  EXPECT_THROW(cone(m), StructureError);
  EXPECT_TRUE(cone_flatness_check(m).passed);
}

TEST(Cone, FlatnessDefectIsClosednessDefectRandom) {
  Rng rng(41);
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  for (int k = 0; k < 10; ++k) {
    FormMatrix<Q> phi(2, std::vector<Form<Q>>(2, Form<Q>(r)));
    // degree-0 entries are functions, the degree 0 <- degree 1 entry is a (0,1)-form
    phi[0][0] = Form<Q>(random_jet(rng, r, 2));
    phi[1][1] = Form<Q>(random_jet(rng, r, 2));
    phi[0][1] = Form<Q>::basis(random_jet(rng, r, 2), Form<Q>(r).gen_dzbar(0));
    Morphism<Q> m(e, e, phi);
    auto c = cone_flatness_check(m);
    EXPECT_TRUE(c.passed) << c.where;
  }
}

TEST(Cone, RejectsWrongDegreeEntries) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  FormMatrix<Q> phi(2, std::vector<Form<Q>>(2, Form<Q>(r)));
  phi[1][0] = Form<Q>::constant(r, Q(1));  // degree 0 -> degree 1 is not degree 0
  EXPECT_THROW(Morphism<Q>(e, e, phi), StructureError);
}

TEST(ConeFamily, GammaCommutator) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  Morphism<Q> m(e, e, identity_matrix(r, 2));
  auto cf = cone_family_gamma(m);
  EXPECT_TRUE(cf.check.passed) << cf.check.where;
  auto zero = cone_family_gamma(m.zero());
  EXPECT_TRUE(zero.check.passed);
  FormMatrix<Q> twice = identity_matrix(r, 2);
  for (auto& row : twice)
    for (auto& w : row) w = Q(2) * w;
  EXPECT_TRUE(cone_family_gamma(Morphism<Q>(e, e, twice)).check.passed);
}

TEST(CurvatureSplit, KoszulIdentityMorphism) {
  auto r = make_ring(1, 5);
  auto e = koszul(r);
  auto h = HermitianMetric<Q>::identity(e.bundle(), r);
  auto sp = curvature_split(Morphism<Q>(e, e, identity_matrix(r, 2)), h, h);
  expect_all(sp.checks);
  // the diagonal blocks of A_t are t Id (phi phi* and phi* phi)
  Form<Q> t(Jet<Q>::variable(sp.ring, sp.ring->param_var(sp.t)));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(sp.At.at(i, i).coefficient(0), t.coefficient(0)) << i;
  auto sp0 = curvature_split(Morphism<Q>(e, e, identity_matrix(r, 2)).zero(), h, h);
  EXPECT_TRUE(sp0.At.is_zero());
}

TEST(ConeTransgression, KoszulIdentityMorphism) {
  auto r = make_ring(1, 5);
  auto e = koszul(r);
  Rng rng(43);
  auto he = random_metric(rng, e.bundle(), r);
  auto hf = random_metric(rng, e.bundle(), r);
  Morphism<Q> m(e, e, identity_matrix(r, 2));
  for (int k = 1; k <= 3; ++k) {
    auto tr = regularized_cone_transgression(m, he, hf, Polynomial<Q>::monomial(k));
    expect_all(tr.checks);
    if (k == 1) {
      EXPECT_TRUE(tr.potential.is_zero());
    }
  }
  auto z = regularized_cone_transgression(m.zero(), he, hf, Polynomial<Q>::monomial(2));
  EXPECT_TRUE(z.potential.is_zero());
  EXPECT_TRUE(z.lhs.is_zero());
}

TEST(ConeAdditivity, RandomMorphisms) {
  Rng rng(44);
  auto r = make_ring(1, 4);
  for (int k = 0; k < 4; ++k) {
    Jet<Q> a = Jet<Q>::variable(r, 0) + Q(rng.uniform(0, 2)) * Jet<Q>::variable(r, 0) * Jet<Q>::variable(r, 0);
    auto e = two_term(r, a);
    auto f = two_term(r, a);
    auto c = Form<Q>::constant(r, rng.small_scalar());
    FormMatrix<Q> phi{{c, Form<Q>(r)}, {Form<Q>(r), c}};
    Morphism<Q> m(e, f, phi);
    ASSERT_TRUE(m.closed());
    auto he = random_metric(rng, e.bundle(), r), hf = random_metric(rng, f.bundle(), r);
    auto ad = cone_additivity(m, he, hf, Polynomial<Q>::monomial(2));
    expect_all(ad.checks);
    auto ad0 = cone_additivity(m.zero(), he, hf, Polynomial<Q>::monomial(3));
    expect_all(ad0.checks);
  }
}

TEST(ConeAdditivity, EulerCharacteristic) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  auto h = HermitianMetric<Q>::identity(e.bundle(), r);
  Polynomial<Q> one{{Q(1)}};
  auto ad = cone_additivity(Morphism<Q>(e, e, identity_matrix(r, 2)), h, h, one);
  EXPECT_TRUE(ad.defect.is_zero());
}

TEST(Rescale, DegreeCommutator) {
  auto r = make_ring(1, 4);
  auto e = koszul(r);
  auto rs = rescale(e);
  EXPECT_TRUE(rs.check.passed) << rs.check.where;
  // Koszul: E''_t = t A_0 and [E''_t, -N/t] = A_0
  Superconnection<Q> c(Base::Delbar, rs.tail);
  auto lifted = e.tail().remap(rs.ring, identity_map(r));
  EXPECT_TRUE(agrees(bracket(c, rs.gamma), lifted));

  // a tail with only an A_1 part is unchanged
  GradedBundle b({0});
  EndForm<Q> a(b, r);
  a.at(0, 0) = Form<Q>::basis(Jet<Q>::variable(r, 0), Form<Q>(r).gen_dzbar(0));
  auto r1 = rescale(CohesiveModule<Q>(b, a));
  EXPECT_TRUE(r1.check.passed);
  EXPECT_TRUE(agrees(r1.tail, a.remap(r1.ring, identity_map(r))));
}

TEST(Rescale, TwoTermTail) {
  // A_0 and A_2 on a three-step bundle in two variables
  auto r = make_ring(2, 4);
  GradedBundle b = GradedBundle::from_ranks({{-1, 1}, {0, 1}, {1, 1}});
  EndForm<Q> a(b, r);
  Form<Q> w(r);
  a.at(1, 0) = Form<Q>(Jet<Q>::variable(r, 0));
  a.at(1, 2) = Form<Q>::basis(Jet<Q>::variable(r, 1), w.gen_dzbar(0) | w.gen_dzbar(1));
  auto rs = rescale(CohesiveModule<Q>(b, a));
  EXPECT_TRUE(rs.check.passed) << rs.check.where;
}

TEST(ExpForm, MatchesFiniteSeriesForNilpotent) {
  using C = Complex;
  auto r = make_ring(1, 3);
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  EndForm<C> x(b, r);
  Form<C> w(r);
  auto z = Jet<C>::variable(r, 0), zb = Jet<C>::variable(r, 1), one = Jet<C>::constant(r, C(1));
  x.at(0, 0) = Form<C>::basis(one + z, w.gen_dz(0) | w.gen_dzbar(0));
  x.at(1, 0) = Form<C>::basis(C(0.5) * zb, w.gen_dz(0));
  x.at(0, 1) = Form<C>::basis(C(0, 1) * one, w.gen_dzbar(0));
  x.at(1, 1) = Form<C>(C(0.25) * z * zb);
  auto ex = exp_form(-x);
  EndForm<C> series = EndForm<C>::identity(b, r), term = series;
  for (int k = 1; k <= 8; ++k) {
    term = C(-1.0 / k) * (term * x);
    series += term;
  }
  EXPECT_LT(endform_defect(ex, series).first, 1e-12);
}

TEST(ExpForm, ScalarExponential) {
  using C = Complex;
  auto r = make_ring(1, 2);
  GradedBundle b({0});
  auto x = EndForm<C>::diagonal(b, r, {C(1.5)});
  EXPECT_NEAR(std::abs(exp_form(x).at(0, 0).coefficient(0).constant_term() - std::exp(1.5)), 0, 1e-12);
}

TEST(HeatTrace, RejectsNonAcyclic) {
  using C = Complex;
  auto r = make_ring(1, 4);
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  CohesiveModule<C> e(b, EndForm<C>(b, r));
  EXPECT_THROW(acyclic_integral(e, HermitianMetric<C>::identity(b, r), 16, 1e-8), DomainError);
}

TEST(HeatTrace, KoszulAtBasePointOne) {
  using C = Complex;
  auto r = make_ring(1, 4);
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  auto one = Jet<C>::constant(r, C(1)), z = Jet<C>::variable(r, 0), zb = Jet<C>::variable(r, 1);
  EndForm<C> a(b, r);
  a.at(1, 0) = Form<C>(one + z);
  CohesiveModule<C> e(b, a);
  EndForm<C> H(b, r);
  H.at(0, 0) = Form<C>(one + z * zb);
  H.at(1, 1) = Form<C>(one + C(0.5) * z * zb + C(0.25) * (z + zb));
  HermitianMetric<C> h(H);
  auto res = acyclic_integral(e, h, 64, 1e-10);
  EXPECT_GT(res.decay_rate, 0);
  EXPECT_LT(res.fit_residual, 0.2);
  for (size_t k = 1; k < res.decay_samples.size(); ++k)
    EXPECT_LT(res.decay_samples[k].second, res.decay_samples[k - 1].second);
  // str exp(-R_1) = -2 del delbar I_E
  EXPECT_LT(res.corrected_residual.max_abs().first, 1e-8);
  auto c = heat_corollary_defect(e, h, 2.0);
  EXPECT_LT(c.corrected, 1e-6);
  EXPECT_THROW(acyclic_integral(e, h, 2, 1e-10), DomainError);
}
