// bcforms: validate and run scenario files, compare reports.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "bottchern/scenario.hpp"

namespace {

using namespace bc;
using namespace bc::cli;

enum Exit { kPass = 0, kCheckFailure = 1, kUsage = 2, kInternal = 3 };

struct Common {
  std::string scenario, mode, out;
  int jet_order = -1;
  int jobs = 1;
  std::string tasks;
};

Overrides overrides(const Common& c) {
  Overrides o;
  if (!c.mode.empty()) o.mode = c.mode;
  if (c.jet_order >= 0) o.jet_order = c.jet_order;
  return o;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s + ",") {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  return out;
}

void write_json(const Json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write " + path);
  f << j.dump(2) << "\n";
}

template <Scalar S>
int validate(const Json& doc, const Common& c) {
  auto r = resolve<S>(doc, overrides(c));
  if (!r.ok()) {
    for (auto& e : r.errors) std::cerr << "error: " << e << "\n";
    return kUsage;
  }
  Json canon = canonical(r.model);
  if (!c.out.empty()) write_json(canon, c.out);
  std::cerr << "valid: " << r.model.name << " (" << r.model.tasks.size() << " tasks, hash " << fnv1a_hex(canon.dump())
            << ")\n";
  return kPass;
}

template <Scalar S>
int run_scenario(const Json& doc, const Common& c) {
  auto r = resolve<S>(doc, overrides(c));
  if (!r.ok()) {
    for (auto& e : r.errors) std::cerr << "error: " << e << "\n";
    return kUsage;
  }
  RunOptions opt;
  opt.tasks = split_list(c.tasks);
  opt.jobs = c.jobs;
  for (auto& name : opt.tasks)
    if (!find_task_kind(name) &&
        std::none_of(r.model.tasks.begin(), r.model.tasks.end(), [&](auto& t) { return t.label == name; })) {
      std::cerr << "error: --tasks: unknown task '" << name << "'\n";
      return kUsage;
    }
  Json rep = run(r.model, opt);
  write_json(rep, c.out);
  for (auto& t : rep["report"]["tasks"]) {
    std::string line = t["status"].get<std::string>() + "  " + t["label"].get<std::string>();
    if (t.contains("error")) line += "  (" + t["error"].get<std::string>() + ")";
    else if (t.contains("defect") && t["status"] == "fail")
      line += "  (" + t["defect"]["check"].get<std::string>() + ": " + t["defect"]["max"].dump() + ")";
    std::cerr << line << "\n";
  }
  return report_passed(rep) ? kPass : kCheckFailure;
}

template <class F>
int dispatch(const Common& c, F&& body) {
  Json doc = load_json(c.scenario);
  std::string mode = effective_mode(doc, overrides(c));
  if (mode == "exact") return body.template operator()<GaussRational>(doc);
  if (mode == "numeric") return body.template operator()<Complex>(doc);
  std::cerr << "error: mode must be exact or numeric\n";
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bott-Chern form calculus on cohesive modules"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", c.scenario, "scenario file")->required()->check(CLI::ExistingFile);
    sub->add_option("--mode", c.mode, "scalar mode override")->check(CLI::IsMember({"exact", "numeric"}));
    sub->add_option("--jet-order", c.jet_order, "jet order override")->check(CLI::Range(0, 40));
    sub->add_option("--out", c.out, "output file (default stdout)");
  };
  auto* val = app.add_subcommand("validate", "check a scenario and optionally write its canonical form");
  add_common(val);
  auto* runc = app.add_subcommand("run", "run the tasks of a scenario and write a report");
  add_common(runc);
  runc->add_option("--tasks", c.tasks, "comma separated task names or labels");
  runc->add_option("--jobs", c.jobs, "concurrent tasks")->check(CLI::Range(1, 256));
  auto* diff = app.add_subcommand("report-diff", "compare two reports");
  std::string ra, rb;
  diff->add_option("first", ra)->required()->check(CLI::ExistingFile);
  diff->add_option("second", rb)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (*val)
      return dispatch(c, [&]<Scalar S>(const Json& doc) { return validate<S>(doc, c); });
    if (*runc)
      return dispatch(c, [&]<Scalar S>(const Json& doc) { return run_scenario<S>(doc, c); });
    Json a = load_json(ra), b = load_json(rb);
    auto d = diff_reports(a, b);
    for (auto& line : d) std::cout << line << "\n";
    if (d.empty()) std::cout << "reports agree\n";
    return d.empty() ? kPass : kCheckFailure;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed report or scenario: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
