#include <gtest/gtest.h>

#include "support/random.hpp"

using namespace bc;
using namespace bc::testing;

namespace {

Ring chart(int order, std::vector<ParamSpec> ps = {}) { return make_ring(1, order, std::move(ps)); }
Jet<Q> z(const Ring& r) { return Jet<Q>::variable(r, 0); }
Jet<Q> zb(const Ring& r) { return Jet<Q>::variable(r, 1); }
Jet<Q> c(const Ring& r, long long n, long long d = 1) { return Jet<Q>::constant(r, Q(Rational(n, d))); }

}  // namespace

TEST(Rational, FastPathAndPromotion) {
  Rational a(1, 3), b(1, 6);
  EXPECT_EQ(a + b, Rational(1, 2));
  EXPECT_EQ((a - a), Rational(0));
  Rational big(1LL << 62);
  Rational sq = big * big;
  EXPECT_EQ(sq.str(), "21267647932558653966460912964485513216");
  EXPECT_EQ(sq / big, big);  // demotes back to the small representation
  EXPECT_EQ(Rational::parse("-6/4"), Rational(-3, 2));
  EXPECT_THROW(Rational::parse("1/0"), ParseError);
}

TEST(GaussRational, ParsePrint) {
  for (std::string s : {"3/4", "-1/2 i", "1/3+2 i", "-5-7/2 i", "0"})
    EXPECT_EQ(GaussRational::parse(GaussRational::parse(s).str()), GaussRational::parse(s)) << s;
  EXPECT_EQ(GaussRational::parse("1/3+2 i").str(), "1/3+2 i");
  EXPECT_EQ((Q(0, 1) * Q(0, 1)), Q(-1));
}

TEST(JetArith, MonomialProduct) {
  auto r = chart(4);
  Jet<Q> p = z(r) * zb(r);
  Monomial m;
  m.e[0] = 1;
  m.e[1] = 1;
  EXPECT_EQ(p.coefficient(m), Q(1));
  EXPECT_EQ(p.size(), 1u);
  EXPECT_EQ(p.valid_order(), 4);
}

TEST(JetArith, TruncationAtCap) {
  auto r = chart(1);
  EXPECT_EQ((c(r, 1) + z(r)) * (c(r, 1) - z(r)), c(r, 1));
}

TEST(JetArith, LaurentCancellation) {
  auto r = chart(2, {{"t", -2, {}, {}}});
  auto t = Jet<Q>::variable(r, 2);
  Monomial inv;
  inv.e[2] = -1;
  auto tinv = Jet<Q>::monomial(r, inv, Q(1));
  EXPECT_EQ(tinv * t, c(r, 1));
  Monomial m3;
  m3.e[2] = -3;
  EXPECT_THROW(Jet<Q>::monomial(r, m3, Q(1)), DomainError);
  EXPECT_THROW(tinv * tinv * tinv, DomainError);
}

TEST(JetArith, RingMismatch) {
  EXPECT_THROW(z(chart(2)) + z(chart(3)), StructureError);
}

TEST(JetInvert, GeometricSeries) {
  auto r = chart(4);
  Jet<Q> a = c(r, 1) + z(r) * zb(r);
  Jet<Q> expect = c(r, 1) - z(r) * zb(r) + z(r) * z(r) * zb(r) * zb(r);
  EXPECT_EQ(a.invert(), expect);
  EXPECT_EQ(a * a.invert(), c(r, 1));
  EXPECT_EQ(c(r, 1).invert(), c(r, 1));
  EXPECT_THROW(z(r).invert(), DomainError);
}

TEST(JetInvert, FreeParameterIsNotNilpotent) {
  auto r = chart(3, {{"t", 0, {}, {}}});
  auto t = Jet<Q>::variable(r, 2);
  EXPECT_THROW((c(r, 1) + t).invert(), DomainError);
  EXPECT_NO_THROW((c(r, 1) + t * z(r)).invert());
}

TEST(JetInvert, LocalParameterInverse) {
  auto r = chart(2, {{"t", 0, 2, Rational(1, 2)}});
  auto tau = Jet<Q>::variable(r, 2);
  Jet<Q> a = c(r, 3, 2) + tau;  // 1 + t at t = 1/2 + tau
  Jet<Q> inv = a.invert();
  EXPECT_EQ(a * inv, c(r, 1));
  EXPECT_EQ(inv.constant_term(), Q(Rational(2, 3)));
}

TEST(JetInvert, RandomInvertible) {
  Rng rng(11);
  auto r = make_ring(2, 4, {{"s", 0, 1, Rational(1, 3)}});
  for (int k = 0; k < 100; ++k) {
    Jet<Q> a = random_jet(rng, r, 5);
    a = a - Jet<Q>::constant(r, a.constant_term()) + Jet<Q>::constant(r, Q(rng.uniform(1, 4)));
    EXPECT_EQ(a * a.invert(), c(r, 1));
  }
}

TEST(JetDerivative, Examples) {
  auto r = chart(4, {{"t", -2, {}, {}}});
  Jet<Q> d = (z(r) * zb(r) * zb(r)).derivative(1);
  EXPECT_EQ(d, Jet<Q>::constant(r, Q(2)) * z(r) * zb(r));
  EXPECT_EQ(d.valid_order(), 3);
  Monomial inv, inv2;
  inv.e[2] = -1;
  inv2.e[2] = -2;
  EXPECT_EQ(Jet<Q>::monomial(r, inv, Q(1)).derivative(2), Jet<Q>::monomial(r, inv2, Q(-1)));
  EXPECT_TRUE(c(r, 5).derivative(0).is_zero());
  EXPECT_THROW(z(chart(0)).derivative(0), ValidityError);
}

TEST(JetConj, Examples) {
  auto r = chart(3, {{"t", 0, {}, {}}});
  auto t = Jet<Q>::variable(r, 2);
  EXPECT_EQ((Q(0, 1) * z(r)).conj(), Q(0, -1) * zb(r));
  EXPECT_EQ((t * z(r) * zb(r)).conj(), t * z(r) * zb(r));
}

TEST(JetIntegrate, Examples) {
  auto r = chart(3, {{"t", -1, {}, {}}});
  auto t = Jet<Q>::variable(r, 2);
  EXPECT_EQ((t * t).integrate_param(0, Q(0), Q(1)), c(r, 1, 3));
  EXPECT_EQ((z(r) + t * zb(r)).integrate_param(0, Q(0), Q(1)), z(r) + Q(Rational(1, 2)) * zb(r));
  Monomial inv;
  inv.e[2] = -1;
  EXPECT_THROW(Jet<Q>::monomial(r, inv, Q(1)).integrate_param(0, Q(0), Q(1)), DomainError);
}

TEST(JetLocalize, BinomialExpansion) {
  auto free = chart(2, {{"t", 0, {}, {}}});
  auto local = chart(2, {{"t", 0, 2, Rational(2)}});
  auto t = Jet<Q>::variable(free, 2);
  Jet<Q> l = (t * t * t).localize(local, 0);  // (2 + tau)^3 = 8 + 12 tau + 6 tau^2 + ...
  auto tau = Jet<Q>::variable(local, 2);
  EXPECT_EQ(l, c(local, 8) + Q(12) * tau + Q(6) * tau * tau);
}

TEST(JetProperties, RingAxioms) {
  Rng rng(1);
  auto r = make_ring(2, 4, {{"t", -3, {}, {}}});
  for (int k = 0; k < 100; ++k) {
    auto a = random_jet(rng, r, 4), b = random_jet(rng, r, 4), d = random_jet(rng, r, 4);
    EXPECT_EQ((a * b) * d, a * (b * d));
    EXPECT_EQ(a * (b + d), a * b + a * d);
    EXPECT_EQ(a * b, b * a);
    EXPECT_EQ((a * b).conj(), a.conj() * b.conj());
    EXPECT_EQ(a.conj().conj(), a);
  }
}

TEST(JetProperties, MixedPartialsCommute) {
  Rng rng(2);
  auto r = make_ring(2, 5);
  for (int k = 0; k < 50; ++k) {
    auto a = random_jet(rng, r, 6);
    for (int u = 0; u < 4; ++u)
      for (int v = 0; v < 4; ++v) EXPECT_EQ(a.derivative(u).derivative(v), a.derivative(v).derivative(u));
  }
}

TEST(JetProperties, TruncationConsistency) {
  Rng rng(3);
  auto r6 = chart(6), r3 = chart(3);
  for (int k = 0; k < 50; ++k) {
    auto a = random_jet(rng, r6, 5), b = random_jet(rng, r6, 5);
    a = a - Jet<Q>::constant(r6, a.constant_term()) + c(r6, 2);
    auto at = a.remap(r3, {}), bt = b.remap(r3, {});
    Jet<Q> big = (a * b + a.invert() * b.derivative(0)).remap(r3, {});
    Jet<Q> small = at * bt + at.invert() * bt.derivative(0);
    EXPECT_TRUE(agrees(big, small));
  }
}
