// Acceptance run: one line per criterion. Criteria listed in kKnownFailures
// are reported as failures and do not change the exit status; any other
// failure, or a known failure that starts passing, does.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>

#include "bottchern/scenario.hpp"
#include "support/corpus.hpp"

using namespace bc;
using namespace bc::testing;

namespace {

const std::set<int> kKnownFailures = {11};

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Tally {
  int cases = 0, failed = 0;
  std::string first;
  void add(const IdentityCheck& c, const std::string& ctx = "") {
    ++cases;
    if (!c.passed && !c.skipped && failed++ == 0)
      first = ctx + c.name + " defect " + std::to_string(c.defect) + " at " + c.where;
  }
  void add(const std::vector<IdentityCheck>& cs, const std::string& ctx = "") {
    for (auto& c : cs) add(c, ctx);
  }
  void expect(bool ok, const std::string& what) {
    ++cases;
    if (!ok && failed++ == 0) first = what;
  }
  Outcome outcome(const std::string& what) const {
    if (failed == 0) return {true, std::to_string(cases) + " " + what + ", all exact"};
    return {false, std::to_string(failed) + "/" + std::to_string(cases) + " failed; first: " + first};
  }
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

CohesiveModule<Q> koszul(const Ring& r, Jet<Q> g) {
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  EndForm<Q> a(b, r);
  a.at(1, 0) = Form<Q>(std::move(g));
  return CohesiveModule<Q>(b, a);
}

HermitianMetric<Q> diagonal_metric(const GradedBundle& b, const Ring& r, std::vector<Jet<Q>> d) {
  EndForm<Q> h(b, r);
  for (int i = 0; i < b.rank(); ++i) h.at(i, i) = Form<Q>(d[i]);
  return HermitianMetric<Q>(h);
}

GradedBundle random_bundle(Rng& rng) {
  switch (rng.uniform(0, 2)) {
    case 0: return GradedBundle::from_ranks({{0, 1}, {1, 2}});
    case 1: return GradedBundle::from_ranks({{-1, 1}, {0, 1}, {1, 1}});
    default: return GradedBundle::from_ranks({{0, 2}, {1, 2}});
  }
}

// 1. star and adjoint algebra
Outcome star_adjoint() {
  Rng rng(101);
  auto r = make_ring(1, 4, {{"s", 0, {}, {}}});
  Tally t;
  for (int k = 0; k < 100; ++k) {
    auto a = random_form(rng, r, 3, true), b = random_form(rng, r, 3, true);
    t.add(check_equal("(a b)* = b* a*", (a * b).star(), b.star() * a.star()));
    t.add(check_equal("a** = a", a.star().star(), a));
    auto bu = random_bundle(rng);
    auto h = random_metric(rng, bu, r);
    auto x = random_endform(rng, bu, r), y = random_endform(rng, bu, r);
    t.add(check_equal("(xy)* = y* x*", adjoint(x * y, h), adjoint(y, h) * adjoint(x, h)));
    auto s = random_section(rng, bu, r), u = random_section(rng, bu, r);
    t.add(check_equal("h(As, t) = h(s, A*t)", pairing(x * s, u, h), pairing(s, adjoint(x, h) * u, h)));
  }
  return t.outcome("identities");
}

struct Sample {
  CohesiveModule<Q> e;
  HermitianMetric<Q> h;
};

std::vector<Sample>& corpus() {
  static std::vector<Sample> c = [] {
    Rng rng(202);
    auto r = make_ring(1, 4);
    std::vector<Sample> out;
    for (int k = 0; k < 100; ++k) {
      auto e = random_flat_module(rng, r);
      out.push_back({e, random_metric(rng, e.bundle(), r)});
    }
    return out;
  }();
  return c;
}

// 2. Chern superconnection structure
Outcome chern_suite() {
  Tally t;
  for (auto& s : corpus()) t.add(chern_structure_checks(s.e, s.h));
  return t.outcome("checks on 100 random flat modules");
}

// 3. closedness of characteristic forms
Outcome chern_weil() {
  Tally t;
  for (auto& s : corpus())
    for (int k = 1; k <= 3; ++k)
      t.add(check_zero("d str f(R)", char_form(s.e, s.h, Polynomial<Q>::monomial(k)).dchart()), "T^" + std::to_string(k) + ": ");
  return t.outcome("forms closed");
}

// 4. linear transgression
Outcome linear() {
  Tally t;
  auto r = make_ring(1, 4);
  auto e = koszul(r, Jet<Q>::variable(r, 0));
  auto one = Jet<Q>::constant(r, Q(1)), zz = Jet<Q>::variable(r, 0) * Jet<Q>::variable(r, 1);
  t.add(linear_transgression(e, diagonal_metric(e.bundle(), r, {one + zz, one + Q(2) * zz}), Polynomial<Q>::monomial(2)).check,
        "koszul: ");
  for (int k = 0; k < 10; ++k) {
    auto& s = corpus()[k];
    t.add(linear_transgression(s.e, s.h, Polynomial<Q>::monomial(2)).check);
  }
  return t.outcome("modules");
}

EndForm<Q> param_times(const Ring& r, int p, const EndForm<Q>& a) {
  Form<Q> v(Jet<Q>::variable(r, r->param_var(p)));
  return v * a;
}

// 5. Bott-Chern formula on one-parameter families
Outcome bott_chern() {
  Rng rng(505);
  auto r = make_ring(1, 5, {{"s", 0, {}, {}}});
  static const std::set<std::string> names = {"first transgression", "first transgression del part", "second transgression",
                                              "bott-chern"};
  Tally t;
  for (int k = 0; k < 20; ++k) {
    auto e = random_flat_module(rng, r);
    auto h0 = random_metric(rng, e.bundle(), r).H(), h1 = random_metric(rng, e.bundle(), r).H();
    MetricFamily<Q> mf(e, h0 + param_times(r, 0, h1 - h0));
    for (int d = 1; d <= 2; ++d)
      for (Rational s : {Rational(1, 3), Rational(1)}) {
        auto loc = mf.at({s}, 2);
        for (auto& c : metric_transgression_checks(loc.e, loc.h, Polynomial<Q>::monomial(d)))
          if (names.count(c.name)) t.add(c);
      }
  }
  return t.outcome("checks on 20 families (f = T, T^2; s = 1/3, 1)");
}

// 6. third transgression and its auxiliary identities
Outcome third() {
  Rng rng(606);
  auto r = make_ring(1, 5, {{"s", 0, {}, {}}, {"u", 0, {}, {}}});
  Tally t;
  int fam = 0;
  for (int k = 0; k < 10; ++k, ++fam) {
    auto e = random_flat_module(rng, r);
    auto h0 = random_metric(rng, e.bundle(), r).H(), h1 = random_metric(rng, e.bundle(), r).H(),
         h2 = random_metric(rng, e.bundle(), r).H();
    MetricFamily<Q> mf(e, h0 + param_times(r, 0, h1 - h0) + param_times(r, 1, h2 - h0));
    auto loc = mf.at({Rational(1, 4), Rational(1, 3)}, 2);
    for (int d = 2; d <= 3; ++d) t.add(metric_transgression_checks(loc.e, loc.h, Polynomial<Q>::monomial(d)));
  }
  return t.outcome("checks on 10 two-parameter families (f = T^2, T^3)");
}

// 7. path independence of secondary forms
Outcome path_independence() {
  Rng rng(707);
  auto r = make_ring(1, 5, {{"s", 0, {}, {}}, {"u", 0, {}, {}}});
  double worst = 0;
  int fails = 0, cases = 0;
  std::string first;
  for (int k = 0; k < 4; ++k) {
    auto e = random_flat_module(rng, r);
    auto h0 = random_metric(rng, e.bundle(), r).H(), h1 = random_metric(rng, e.bundle(), r).H(),
         h2 = random_metric(rng, e.bundle(), r).H();
    EndForm<Q> H = h0 + param_times(r, 0, h1 - h0) + param_times(r, 1, h2 - h0);
    MetricFamily<Complex> mf(CohesiveModule<Complex>(e.bundle(), e.tail().convert<Complex>()), H.convert<Complex>());
    for (int d = 2; d <= 3; ++d) {
      auto f = Polynomial<Complex>::monomial(d);
      auto w = path_independence_witness(mf, {Rational(0), Rational(0)}, {Rational(1), Rational(0)},
                                         {Rational(0), Rational(1)}, f, Tolerance{1e-10});
      ++cases;
      worst = std::max(worst, w.check.defect);
      bool nontrivial = w.difference.max_abs().first > 1e-6;
      if ((!w.check.passed || !nontrivial) && fails++ == 0)
        first = w.check.passed ? "paths agree trivially" : "defect " + sci(w.check.defect);
    }
  }
  if (fails) return {false, std::to_string(fails) + "/" + std::to_string(cases) + " failed; first: " + first};
  return {true, std::to_string(cases) + " simplex witnesses, max defect " + sci(worst) + " <= 1e-10"};
}

// 8. gauge and moduli identities
Outcome gauge_moduli() {
  auto r = make_ring(1, 6, {{"t", 0, {}, {}}});
  auto one = Jet<Q>::constant(r, Q(1)), z = Jet<Q>::variable(r, 0), zb = Jet<Q>::variable(r, 1),
       t = Jet<Q>::variable(r, 2);
  auto e = koszul(r, z);
  auto h = diagonal_metric(e.bundle(), r, {Q(2) * one + z * zb, one + Q(Rational(1, 2)) * z * zb});
  Form<Q> w(r);
  std::vector<EndForm<Q>> fams;
  auto id = EndForm<Q>::identity(e.bundle(), r);
  auto f1 = id;
  f1.at(0, 1) = Form<Q>::basis(t * (z + one), w.gen_dzbar(0));
  f1.at(0, 0) = Form<Q>(one + t * z * zb);
  f1.at(1, 1) = Form<Q>(one + t * t * zb);
  fams.push_back(f1);
  auto f2 = id;
  f2.at(0, 0) = Form<Q>(one + t * zb);
  fams.push_back(f2);
  auto f3 = id;
  f3.at(0, 1) = Form<Q>::basis(t * z * z + t * t * zb, w.gen_dzbar(0));
  fams.push_back(f3);
  Tally tally;
  for (auto& f : fams) {
    auto g = exact_gamma(e, GaugeFamily<Q>(f, 0));
    tally.add(g.check);
    tally.expect(!g.sampled, "gauge inverse not polynomial");
    tally.add(moduli_delta_checks(g.tail, h, Polynomial<Q>::monomial(2), std::optional(g.gamma)));
  }
  return tally.outcome("checks on 3 Koszul gauge families");
}

// 9. cone algebra
Outcome cone_algebra() {
  Rng rng(909);
  auto r = make_ring(1, 4);
  Tally t;
  int open = 0;
  for (int k = 0; k < 10; ++k) {
    auto e = random_flat_module(rng, r), f = random_flat_module(rng, r);
    auto m = random_morphism(rng, e, f);
    t.add(cone_flatness_check(m));
    bool flat = is_flat(Superconnection<Q>(Base::Delbar, cone_tail(m, Form<Q>::constant(r, Q(1))))).flat;
    t.expect(flat == m.closed(), "flatness and closedness disagree");
    open += !m.closed();
  }
  t.expect(open > 0, "no open morphism sampled");
  for (int k = 0; k < 10; ++k) {
    auto m = random_closed_morphism(rng, r);
    t.expect(m.closed(), "constructed morphism not closed");
    t.add(cone_flatness_check(m));
    t.add(cone_family_gamma(m).check);
    auto he = random_metric(rng, m.source().bundle(), r), hf = random_metric(rng, m.target().bundle(), r);
    t.add(cone_additivity(m, he, hf, Polynomial<Q>::monomial(2)).checks);
  }
  return t.outcome("checks on 20 random (E, F, phi)");
}

// 10. regularized cone transgression
Outcome cone_transgression() {
  auto r = make_ring(1, 5);
  auto one = Jet<Q>::constant(r, Q(1)), z = Jet<Q>::variable(r, 0), zb = Jet<Q>::variable(r, 1);
  auto e = koszul(r, z);
  FormMatrix<Q> id{{Form<Q>(one), Form<Q>(r)}, {Form<Q>(r), Form<Q>(one)}};
  Morphism<Q> m(e, e, id);
  auto he = diagonal_metric(e.bundle(), r, {one + z * zb, one});
  auto hf = diagonal_metric(e.bundle(), r, {Q(2) * one, one + Q(Rational(1, 3)) * z * zb});
  auto ct = regularized_cone_transgression(m, he, hf, Polynomial<Q>::monomial(2));
  Tally t;
  for (auto& c : ct.checks)
    if (c.name == "singular term cancels" || c.name == "regularized cone transgression") t.add(c);
  t.expect(!ct.lhs.is_zero(), "difference of characteristic forms vanishes");
  auto lit = check_equal("literal", ct.lhs, Q(-2) * ct.potential.delbar().del());
  auto lit_full = check_equal("literal, full trace", ct.lhs, Q(-2) * ct.full_trace_potential.delbar().del());
  auto o = t.outcome("checks (remainder zero; f(C_1) - f(C_0) = 2 del delbar P with P projected to E[1])");
  o.detail += "; literal -2 del delbar P: defect " + sci(lit.defect) + ", without projection " + sci(lit_full.defect);
  return o;
}

// 11. acyclic heat trace
Outcome heat_trace() {
  auto r = make_ring(1, 4);
  auto one = Jet<Complex>::constant(r, 1.0), z = Jet<Complex>::variable(r, 0), zb = Jet<Complex>::variable(r, 1);
  GradedBundle b = GradedBundle::from_ranks({{0, 1}, {1, 1}});
  EndForm<Complex> a(b, r), H(b, r);
  a.at(1, 0) = Form<Complex>(one + z);  // Koszul map z at the base point z0 = 1
  H.at(0, 0) = Form<Complex>(one + z * zb);
  H.at(1, 1) = Form<Complex>(one + 0.5 * z * zb + 0.25 * (z + zb));
  CohesiveModule<Complex> e(b, a);
  HermitianMetric<Complex> h(H);
  auto res = acyclic_integral(e, h, 64, 1e-12);
  bool pa = res.decay_rate > 0 && res.fit_residual < 0.2;
  auto I8 = heat_integral_to(e, h, 8, 1e-12), I16 = heat_integral_to(e, h, 16, 1e-12);
  double dT = (I16 - I8).max_abs().first;
  bool pb = dT < 1e-8;
  double rc = res.residual.max_abs().first, rc_fix = res.corrected_residual.max_abs().first;
  bool pc = rc < 1e-6;
  double d_stated = 0, d_fixed = 0;
  for (double t : {1.0, 2.0}) {
    auto hc = heat_corollary_defect(e, h, t);
    d_stated = std::max(d_stated, hc.stated);
    d_fixed = std::max(d_fixed, hc.corrected);
  }
  bool pd = d_stated < 1e-6;
  auto mark = [](bool p) { return p ? "pass" : "FAIL"; };
  std::string s = "(a) " + std::string(mark(pa)) + " c = " + sci(res.decay_rate) + ", fit residual " + sci(res.fit_residual) +
                  "; (b) " + mark(pb) + " |I(16) - I(8)| = " + sci(dT) + "; (c) " + mark(pc) +
                  " |str exp(-R_1) - del delbar I| = " + sci(rc) + " (with -2 del delbar I: " + sci(rc_fix) + "); (d) " +
                  mark(pd) + " relative defect " + sci(d_stated) + " (with +2/t: " + sci(d_fixed) + ")";
  return {pa && pb && pc && pd, s};
}

// 12. oracle equivalence on the golden scenarios
Outcome oracle() {
  Tally t;
  int files = 0;
  for (auto& entry : std::filesystem::directory_iterator(BC_SCENARIO_DIR)) {
    if (entry.path().extension() != ".json") continue;
    ++files;
    auto res = cli::resolve<Q>(cli::load_json(entry.path().string()), {std::string("exact"), std::nullopt});
    std::string ctx = entry.path().filename().string() + ": ";
    t.expect(res.ok(), ctx + "does not validate");
    if (!res.ok()) continue;
    const auto& m = res.model;
    for (auto& d : m.modules)
      t.add(oracle_square_check("flatness oracle", d.module->E2(), EndForm<Q>(d.bundle, m.ring), 1), ctx);
    for (auto& d : m.metrics) {
      EndForm<Q> H = d.H;
      for (int p = 0; p < m.ring->num_params(); ++p)
        H = H.map([&](const Form<Q>& w) { return w.substitute_param(p, Q(0)); });
      const auto& e = m.module(d.module);
      auto c = chern(e, HermitianMetric<Q>(H));
      t.add(oracle_square_check("curvature oracle", c.E(), c.R, 1), ctx);
    }
  }
  auto o = t.outcome("oracle comparisons");
  o.detail += " over " + std::to_string(files) + " golden scenarios";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> all = {
      {1, "star/adjoint algebra", 30, star_adjoint},
      {2, "Chern superconnection suite", 120, chern_suite},
      {3, "Chern-Weil closedness", 60, chern_weil},
      {4, "linear transgression", 60, linear},
      {5, "Bott-Chern formula", 120, bott_chern},
      {6, "third transgression", 300, third},
      {7, "secondary path independence", 120, path_independence},
      {8, "gauge/moduli suite", 120, gauge_moduli},
      {9, "cone algebra", 120, cone_algebra},
      {10, "regularized cone transgression", 60, cone_transgression},
      {11, "acyclic heat trace", 300, heat_trace},
      {12, "oracle equivalence", 60, oracle},
  };
  int unexpected = 0, passed = 0, known = 0;
  for (auto& c : all) {
    auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool in_time = sec < c.limit;
    bool ok = o.pass && in_time;
    bool is_known = kKnownFailures.count(c.id) > 0;
    const char* tag = ok ? (is_known ? "XPASS" : "PASS") : (is_known ? "FAIL (known)" : "FAIL");
    std::printf("[%s] %2d %s: %s (%.1f s, limit %.0f s%s)\n", tag, c.id, c.name, o.detail.c_str(), sec, c.limit,
                in_time ? "" : ", exceeded");
    std::fflush(stdout);
    if (ok) ++passed;
    if (ok == is_known) ++unexpected;
    if (!ok && is_known) ++known;
  }
  std::printf("acceptance: %d passed, %d known failures, %d unexpected\n", passed, known, unexpected);
  return unexpected == 0 ? 0 : 1;
}
