#include <gtest/gtest.h>

#include <filesystem>

#include "bottchern/scenario.hpp"

using namespace bc;
using namespace bc::cli;

namespace {

using Q = GaussRational;

std::string scenario_path(const std::string& name) { return std::string(BC_SCENARIO_DIR) + "/" + name; }

Json koszul_doc() { return load_json(scenario_path("koszul.json")); }

std::vector<std::string> golden_files() {
  std::vector<std::string> out;
  for (auto& e : std::filesystem::directory_iterator(BC_SCENARIO_DIR))
    if (e.path().extension() == ".json") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

template <Scalar S>
Resolved<S> must_resolve(const Json& doc, Overrides ov = {}) {
  auto r = resolve<S>(doc, ov);
  for (auto& e : r.errors) ADD_FAILURE() << e;
  return r;
}

const Json& task_named(const Json& rep, const std::string& label) {
  for (auto& t : rep["report"]["tasks"])
    if (t["label"] == label) return t;
  throw std::runtime_error("no task " + label);
}

}  // namespace

TEST(Expression, PrecedenceAndPowers) {
  auto r = make_ring(1, 4);
  FormAtoms<Q> a(r);
  auto z = a.parse("z"), zb = a.parse("zb");
  EXPECT_EQ(a.parse("1 + 2*z^2"), Form<Q>::constant(r, Q(1)) + Q(2) * (z * z));
  EXPECT_EQ(a.parse("-z^2"), -(z * z));
  EXPECT_EQ(a.parse("(1 + z)*(1 - z)"), Form<Q>::constant(r, Q(1)) - z * z);
  EXPECT_EQ(a.parse("z*zb/3"), Q(Rational(1, 3)) * (z * zb));
  EXPECT_EQ(a.parse("0.25*z"), Q(Rational(1, 4)) * z);
  EXPECT_EQ(a.parse("i*z"), Q(Rational(), Rational(1)) * z);
  EXPECT_EQ(a.parse("dz*dzb"), -a.parse("dzb*dz"));
  EXPECT_TRUE(a.parse("dz*dz").is_zero());
  EXPECT_EQ(a.parse("z1"), z);
}

TEST(Expression, LaurentInverse) {
  auto r = make_ring(1, 3, {{"t", -2, {}, {}}});
  FormAtoms<Q> a(r);
  auto inv = a.parse("1/t");
  EXPECT_EQ(inv * a.parse("t"), Form<Q>::constant(r, Q(1)));
  EXPECT_EQ(a.parse("t^-2") * a.parse("t^2"), Form<Q>::constant(r, Q(1)));
}

TEST(Expression, Errors) {
  auto r = make_ring(1, 3);
  FormAtoms<Q> a(r);
  auto message = [&](const std::string& s) {
    try {
      a.parse(s);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message("1 + w"), "column 5: unknown identifier 'w'");
  EXPECT_EQ(message("z/zb"), "column 3: can only divide by a nonzero constant or a Laurent parameter");
  EXPECT_NE(message("(z"), "");
  EXPECT_NE(message("z^"), "");
  EXPECT_NE(message("z zb"), "");
  EXPECT_NE(message("1/0"), "");
}

TEST(Expression, Polynomial) {
  auto p = parse_polynomial<Q>("T^3 - 2*T + 1/2");
  ASSERT_EQ(p.degree(), 3);
  EXPECT_EQ(p.c[0], Q(Rational(1, 2)));
  EXPECT_EQ(p.c[1], Q(-2));
  EXPECT_EQ(p.c[2], Q(0));
  EXPECT_EQ(p.c[3], Q(1));
  EXPECT_THROW(parse_polynomial<Q>("z"), ParseError);
}

TEST(Canonical, FormRoundTrip) {
  auto r = make_ring(2, 3, {{"s", 0, {}, {}}});
  FormAtoms<Q> a(r);
  auto w = a.parse("(1/3 + 2*i)*z1*zb2*dz2*dzb1 - s*ds + 7");
  EXPECT_EQ(form_from_json(form_json(w), a), w);
  FormAtoms<Complex> an(r);
  auto wn = an.parse("0.1*z1*dzb2 + i*s");
  EXPECT_EQ(form_from_json(form_json(wn), an), wn);
}

TEST(Canonical, GoldenScenariosRoundTrip) {
  for (auto& path : golden_files()) {
    SCOPED_TRACE(path);
    Json doc = load_json(path);
    Json c1, c2;
    if (effective_mode(doc, {}) == "exact") {
      c1 = canonical(must_resolve<Q>(doc).model);
      c2 = canonical(must_resolve<Q>(c1).model);
    } else {
      c1 = canonical(must_resolve<Complex>(doc).model);
      c2 = canonical(must_resolve<Complex>(c1).model);
    }
    EXPECT_EQ(c1.dump(), c2.dump());
  }
}

TEST(Validation, FlatnessDefectIsLocated) {
  auto r = resolve<Q>(load_json(scenario_path("invalid/koszul_zbar.json")));
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0], "modules[0] 'K': flatness defect at block (0,1), monomial dzb");
}

TEST(Validation, ListsEveryViolation) {
  auto r = resolve<Q>(load_json(scenario_path("invalid/non_hermitian.json")));
  ASSERT_EQ(r.errors.size(), 4u);
  EXPECT_NE(r.errors[0].find("not Hermitian at entry (0,1)"), std::string::npos);
  EXPECT_NE(r.errors[1].find("not positive definite"), std::string::npos);
  EXPECT_NE(r.errors[3].find("unknown task 'bogus'"), std::string::npos);
}

TEST(Validation, StructuralErrors) {
  Json doc = koszul_doc();
  doc["modules"][0]["tail"][0]["block"] = {0, 2};
  auto r = resolve<Q>(doc);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.errors[0].find("target degree 2 does not exist"), std::string::npos);

  doc = koszul_doc();
  doc["modules"][0]["tail"][0]["matrix"] = {{"z*dzb"}};
  r = resolve<Q>(doc);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.errors[0].find("is not a (0,0) form"), std::string::npos);

  doc = koszul_doc();
  doc["metrics"][0]["blocks"].erase("1");
  r = resolve<Q>(doc);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.errors[0].find("no block for degree 1"), std::string::npos);
}

TEST(Validation, OpenMorphismRejected) {
  Json doc = load_json(scenario_path("cone_identity.json"));
  doc["morphisms"][0]["blocks"][0]["matrix"] = {{"z"}};
  auto r = resolve<Q>(doc);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.errors[0].find("morphism is not closed"), std::string::npos);
}

TEST(Run, KoszulFlatnessAndClosedness) {
  auto m = must_resolve<Q>(koszul_doc()).model;
  RunOptions opt;
  opt.tasks = {"flatness", "chern-weil-closedness"};
  Json rep = run(m, opt);
  ASSERT_EQ(rep["report"]["tasks"].size(), 2u);
  for (auto& t : rep["report"]["tasks"]) EXPECT_EQ(t["status"], "pass");
  EXPECT_TRUE(report_passed(rep));
}

TEST(Run, BottChernExactZeroDefect) {
  auto m = must_resolve<Q>(load_json(scenario_path("metric_simplex.json"))).model;
  Json rep = run(m, {{"bott-chern"}, 1});
  const Json& t = task_named(rep, "bott-chern");
  EXPECT_EQ(t["status"], "pass");
  for (auto& c : t["checks"]) EXPECT_EQ(c["defect"].get<double>(), 0.0);
}

TEST(Run, QuadratureErrorIsContained) {
  Json doc = load_json(scenario_path("koszul_acyclic.json"));
  doc["tasks"][0]["T_max"] = 4;
  auto m = must_resolve<Complex>(doc).model;
  Json rep = run(m, {{"acyclic-integral", "rescale"}, 2});
  const Json& t = task_named(rep, "acyclic-integral");
  EXPECT_EQ(t["status"], "error");
  EXPECT_NE(t["error"].get<std::string>().find("quadrature non-convergence"), std::string::npos);
  EXPECT_EQ(task_named(rep, "rescale")["status"], "pass");
  EXPECT_FALSE(report_passed(rep));
}

TEST(Run, FailingCheckReportsDefect) {
  Json doc = load_json(scenario_path("koszul_acyclic.json"));
  // the finite-difference defect is about 1e-8, far above this tolerance
  doc["tasks"][1]["tol"] = 1e-12;
  auto m = must_resolve<Complex>(doc).model;
  Json rep = run(m, {{"heat-corollary"}, 1});
  const Json& t = task_named(rep, "heat-corollary");
  EXPECT_EQ(t["status"], "fail");
  EXPECT_GT(t["defect"]["max"].get<double>(), 1e-12);
  EXPECT_EQ(t["defect"]["check"].get<std::string>().rfind("heat corollary", 0), 0u);
}

TEST(Run, DeterministicAcrossJobCounts) {
  for (auto& path : golden_files()) {
    Json doc = load_json(path);
    if (effective_mode(doc, {}) != "exact") continue;
    SCOPED_TRACE(path);
    auto m = must_resolve<Q>(doc).model;
    Json a = run(m, {{}, 1}), b = run(m, {{}, 4});
    EXPECT_EQ(a["report"].dump(), b["report"].dump());
    EXPECT_EQ(a["body_hash"], b["body_hash"]);
    EXPECT_TRUE(diff_reports(a, b).empty());
  }
}

TEST(Run, NumericModeOverride) {
  auto r = must_resolve<Complex>(koszul_doc(), {std::string("numeric"), 5});
  EXPECT_EQ(r.model.mode, "numeric");
  EXPECT_EQ(r.model.order, 5);
  Json rep = run(r.model);
  EXPECT_TRUE(report_passed(rep));
  EXPECT_EQ(rep["report"]["mode"], "numeric");
}

TEST(ReportDiff, DetectsStatusChange) {
  auto m = must_resolve<Q>(koszul_doc()).model;
  Json a = run(m);
  Json b = a;
  b["report"]["tasks"][0]["status"] = "fail";
  auto d = diff_reports(a, b);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].find("status pass -> fail"), std::string::npos);
}
