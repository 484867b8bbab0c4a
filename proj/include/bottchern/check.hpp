#pragma once

#include <string>
#include <vector>

#include "bottchern/gbundle.hpp"

namespace bc {

/// Outcome of one identity: exact mode passes only on a zero defect.
struct IdentityCheck {
  std::string name;
  bool passed = false;
  bool skipped = false;
  double defect = 0;
  std::string where;
  std::string note;
};

struct Tolerance {
  double abs = 0;

  template <Scalar S>
  static Tolerance for_mode(double numeric_abs = 1e-9) {
    return {scalar_traits<S>::exact ? 0.0 : numeric_abs};
  }
};

inline IdentityCheck make_check(std::string name, std::pair<double, std::string> d, Tolerance tol) {
  IdentityCheck c;
  c.name = std::move(name);
  c.defect = d.first;
  c.where = std::move(d.second);
  c.passed = c.defect <= tol.abs;
  return c;
}

template <Scalar S>
IdentityCheck check_equal(std::string name, const Form<S>& a, const Form<S>& b, Tolerance tol = {}) {
  return make_check(std::move(name), form_defect(a, b), tol);
}
template <Scalar S>
IdentityCheck check_equal(std::string name, const EndForm<S>& a, const EndForm<S>& b, Tolerance tol = {}) {
  return make_check(std::move(name), endform_defect(a, b), tol);
}
template <Scalar S>
IdentityCheck check_zero(std::string name, const Form<S>& a, Tolerance tol = {}) {
  return make_check(std::move(name), a.max_abs(), tol);
}
template <Scalar S>
IdentityCheck check_zero(std::string name, const EndForm<S>& a, Tolerance tol = {}) {
  return make_check(std::move(name), a.max_abs(), tol);
}
inline IdentityCheck skipped_check(std::string name, std::string why) {
  IdentityCheck c;
  c.name = std::move(name);
  c.passed = true;
  c.skipped = true;
  c.note = std::move(why);
  return c;
}

inline bool all_passed(const std::vector<IdentityCheck>& cs) {
  for (auto& c : cs)
    if (!c.passed) return false;
  return true;
}

}  // namespace bc
