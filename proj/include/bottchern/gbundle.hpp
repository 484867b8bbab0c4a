#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

#include "bottchern/forms.hpp"

namespace bc {

/// Finite graded frame: an ordered list of basis vectors, each with a degree.
class GradedBundle {
 public:
  GradedBundle() = default;
  explicit GradedBundle(std::vector<int> degrees) : deg_(std::move(degrees)) {}

  static GradedBundle from_ranks(const std::map<int, int>& ranks) {
    std::vector<int> d;
    for (auto [deg, r] : ranks) {
      if (r < 0) throw DomainError("negative rank in degree " + std::to_string(deg));
      d.insert(d.end(), r, deg);
    }
    return GradedBundle(std::move(d));
  }
  static GradedBundle direct_sum(const GradedBundle& a, const GradedBundle& b) {
    auto d = a.deg_;
    d.insert(d.end(), b.deg_.begin(), b.deg_.end());
    return GradedBundle(std::move(d));
  }
  /// E[k]: the summand of degree d moves to degree d - k.
  GradedBundle shifted(int k) const {
    auto d = deg_;
    for (auto& x : d) x -= k;
    return GradedBundle(std::move(d));
  }

  int rank() const { return (int)deg_.size(); }
  int degree(int i) const { return deg_.at(i); }
  const std::vector<int>& degrees() const { return deg_; }
  std::map<int, int> ranks() const {
    std::map<int, int> r;
    for (int d : deg_) ++r[d];
    return r;
  }
  std::vector<int> indices_of_degree(int d) const {
    std::vector<int> out;
    for (int i = 0; i < rank(); ++i)
      if (deg_[i] == d) out.push_back(i);
    return out;
  }
  friend bool operator==(const GradedBundle&, const GradedBundle&) = default;

 private:
  std::vector<int> deg_;
};

inline int sign_of(int k) { return (k & 1) ? -1 : 1; }

template <Scalar S>
using Section = std::vector<Form<S>>;

/// End(E)-valued form in frame representation: a square matrix of forms that
/// acts on column sections by left multiplication.
template <Scalar S>
class EndForm {
 public:
  using F = Form<S>;

  EndForm() = default;
  EndForm(GradedBundle b, Ring r) : EndForm(std::move(b), r, Validity::full(*r)) {}
  EndForm(GradedBundle b, Ring r, Validity v) : bundle_(std::move(b)), ring_(std::move(r)) {
    e_.assign(size_t(rank()) * rank(), F(ring_, v));
  }
  static EndForm identity(const GradedBundle& b, const Ring& r) {
    EndForm x(b, r);
    for (int i = 0; i < x.rank(); ++i) x.at(i, i) = F::constant(r, S(1));
    return x;
  }
  /// Diagonal operator with scalar entries.
  static EndForm diagonal(const GradedBundle& b, const Ring& r, const std::vector<S>& d) {
    EndForm x(b, r);
    for (int i = 0; i < x.rank(); ++i) x.at(i, i) = F::constant(r, d.at(i));
    return x;
  }

  const GradedBundle& bundle() const { return bundle_; }
  const Ring& ring() const { return ring_; }
  int rank() const { return bundle_.rank(); }
  int deg(int i) const { return bundle_.degree(i); }
  F& at(int i, int j) { return e_[size_t(i) * rank() + j]; }
  const F& at(int i, int j) const { return e_[size_t(i) * rank() + j]; }
  const std::vector<F>& entries() const { return e_; }

  Validity validity() const {
    Validity v = Validity::full(*ring_);
    for (auto& f : e_) v = min(v, f.validity());
    return v;
  }
  bool is_zero() const {
    for (auto& f : e_)
      if (!f.is_zero()) return false;
    return true;
  }

  EndForm map(const std::function<F(const F&)>& fn) const {
    EndForm x(*this);
    for (auto& f : x.e_) f = fn(f);
    return x;
  }
  /// Keep terms with pred(row, col, mask).
  EndForm filter(const std::function<bool(int, int, Mask)>& pred) const {
    EndForm x(*this);
    for (int i = 0; i < rank(); ++i)
      for (int j = 0; j < rank(); ++j) x.at(i, j) = at(i, j).filter([&](Mask m) { return pred(i, j, m); });
    return x;
  }
  /// Total-degree parity split (form degree plus End-degree).
  EndForm parity_part(int parity) const {
    return filter([&](int i, int j, Mask m) { return ((popcount(m) + deg(i) + deg(j)) & 1) == parity; });
  }
  /// Terms of form degree k and End-degree 1-k.
  EndForm cohesive_part(int k) const {
    return filter([&](int i, int j, Mask m) { return popcount(m) == k && deg(i) - deg(j) == 1 - k; });
  }
  EndForm with_validity(const Validity& v) const {
    return map([&](const F& f) { return f.with_validity(v); });
  }

  EndForm operator-() const { return map([](const F& f) { return -f; }); }
  friend EndForm operator+(const EndForm& a, const EndForm& b) { return zip(a, b, false); }
  friend EndForm operator-(const EndForm& a, const EndForm& b) { return zip(a, b, true); }
  EndForm& operator+=(const EndForm& b) { return *this = *this + b; }
  EndForm& operator-=(const EndForm& b) { return *this = *this - b; }
  friend EndForm operator*(const S& s, const EndForm& a) {
    return a.map([&](const F& f) { return s * f; });
  }
  friend EndForm operator*(const F& w, const EndForm& a) {
    return a.map([&](const F& f) { return w * f; });
  }

  friend EndForm operator*(const EndForm& a, const EndForm& b) {
    if (!(a.bundle_ == b.bundle_)) throw StructureError("EndForm product over different bundles");
    require_same_ring(a.ring_, b.ring_);
    const int r = a.rank();
    EndForm x(a.bundle_, a.ring_);
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < r; ++k) {
        F acc(a.ring_, min(a.at(i, 0).validity(), b.at(0, k).validity()));
        for (int j = 0; j < r; ++j) {
          const F& u = a.at(i, j);
          const F& w = b.at(j, k);
          if (u.is_zero() || w.is_zero()) {
            acc = acc.with_validity(min(u.validity(), w.validity()));
            continue;
          }
          acc += u * w;
        }
        x.at(i, k) = std::move(acc);
      }
    return x;
  }

  friend Section<S> operator*(const EndForm& a, const Section<S>& s) {
    if ((int)s.size() != a.rank()) throw StructureError("section length does not match rank");
    Section<S> out;
    for (int i = 0; i < a.rank(); ++i) {
      F acc(a.ring_, a.at(i, 0).validity());
      for (int j = 0; j < a.rank(); ++j) acc += a.at(i, j) * s[j];
      out.push_back(std::move(acc));
    }
    return out;
  }

  /// Entrywise star followed by transpose.
  EndForm star_transpose() const {
    EndForm x(bundle_, ring_);
    for (int i = 0; i < rank(); ++i)
      for (int j = 0; j < rank(); ++j) x.at(j, i) = at(i, j).star();
    return x;
  }
  /// Rows scaled by (-1)^deg: the grading involution applied on the left.
  EndForm graded_sign() const {
    EndForm x(*this);
    for (int i = 0; i < rank(); ++i)
      if (deg(i) & 1)
        for (int j = 0; j < rank(); ++j) x.at(i, j) = -x.at(i, j);
    return x;
  }

  /// Block mapping degree `source` to degree `target` as a dense form matrix.
  std::vector<std::vector<F>> block(int target, int source) const {
    auto ri = bundle_.indices_of_degree(target), ci = bundle_.indices_of_degree(source);
    std::vector<std::vector<F>> b(ri.size());
    for (size_t x = 0; x < ri.size(); ++x)
      for (int j : ci) b[x].push_back(at(ri[x], j));
    return b;
  }
  void set_block(int target, int source, const std::vector<std::vector<F>>& b) {
    auto ri = bundle_.indices_of_degree(target), ci = bundle_.indices_of_degree(source);
    if (b.size() != ri.size()) throw StructureError("block row count mismatch");
    for (size_t x = 0; x < ri.size(); ++x) {
      if (b[x].size() != ci.size()) throw StructureError("block column count mismatch");
      for (size_t y = 0; y < ci.size(); ++y) at(ri[x], ci[y]) = b[x][y];
    }
  }

  template <Scalar T>
  EndForm<T> convert() const {
    EndForm<T> x(bundle_, ring_);
    for (int i = 0; i < rank(); ++i)
      for (int j = 0; j < rank(); ++j) x.at(i, j) = at(i, j).template convert<T>();
    return x;
  }
  EndForm<S> in_ring(const Ring& target, const std::function<F(const F&)>& fn) const {
    EndForm x(bundle_, target);
    for (int i = 0; i < rank(); ++i)
      for (int j = 0; j < rank(); ++j) x.at(i, j) = fn(at(i, j));
    return x;
  }
  EndForm remap(const Ring& target, const std::vector<int>& m) const {
    return in_ring(target, [&](const F& f) { return f.remap(target, m); });
  }
  EndForm localize(const Ring& target, int p) const {
    return in_ring(target, [&](const F& f) { return f.localize(target, p); });
  }

  friend bool operator==(const EndForm& a, const EndForm& b) { return a.bundle_ == b.bundle_ && a.e_ == b.e_; }

  std::pair<double, std::string> max_abs() const {
    std::pair<double, std::string> best{0.0, ""};
    for (int i = 0; i < rank(); ++i)
      for (int j = 0; j < rank(); ++j) {
        auto [a, where] = at(i, j).max_abs();
        if (a > best.first) best = {a, "(" + std::to_string(i) + "," + std::to_string(j) + ") " + where};
      }
    return best;
  }
  std::string str() const {
    std::string s;
    for (int i = 0; i < rank(); ++i)
      for (int j = 0; j < rank(); ++j)
        if (!at(i, j).is_zero()) s += "(" + std::to_string(i) + "," + std::to_string(j) + "): " + at(i, j).str() + "\n";
    return s.empty() ? "0\n" : s;
  }

 private:
  static EndForm zip(const EndForm& a, const EndForm& b, bool sub) {
    if (!(a.bundle_ == b.bundle_)) throw StructureError("EndForm sum over different bundles");
    EndForm x(a.bundle_, a.ring_);
    for (size_t k = 0; k < a.e_.size(); ++k) x.e_[k] = sub ? a.e_[k] - b.e_[k] : a.e_[k] + b.e_[k];
    return x;
  }

  GradedBundle bundle_;
  Ring ring_;
  std::vector<F> e_;
};

template <Scalar S>
bool agrees(const EndForm<S>& a, const EndForm<S>& b) {
  for (size_t k = 0; k < a.entries().size(); ++k)
    if (!agrees(a.entries()[k], b.entries()[k])) return false;
  return true;
}

template <Scalar S>
std::pair<double, std::string> endform_defect(const EndForm<S>& a, const EndForm<S>& b) {
  std::pair<double, std::string> best{0.0, ""};
  for (int i = 0; i < a.rank(); ++i)
    for (int j = 0; j < a.rank(); ++j) {
      auto [m, where] = form_defect(a.at(i, j), b.at(i, j));
      if (m > best.first) best = {m, "(" + std::to_string(i) + "," + std::to_string(j) + ") " + where};
    }
  return best;
}

/// Supertrace: sum over i of (-1)^{d_i} (-1)^{d_i |w|} times the diagonal entry,
/// per homogeneous form term w.
template <Scalar S>
Form<S> supertrace(const EndForm<S>& a) {
  Form<S> acc(a.ring(), a.validity());
  for (int i = 0; i < a.rank(); ++i) {
    int d = a.deg(i);
    const Form<S>& x = a.at(i, i);
    Form<S> even = x.parity_part(0), odd = x.parity_part(1);
    acc += S(sign_of(d)) * (even + S(sign_of(d)) * odd);
  }
  return acc;
}

/// Graded commutator AB - (-1)^{|A||B|} BA on total parity.
template <Scalar S>
EndForm<S> supercommutator(const EndForm<S>& a, const EndForm<S>& b) {
  EndForm<S> be = b.parity_part(0), bo = b.parity_part(1);
  EndForm<S> ae = a.parity_part(0), ao = a.parity_part(1);
  return a * b - be * a - bo * (ae - ao);
}

/// Coefficient derivative: [D^, X] for a base differential D, i.e.
/// (-1)^{d_i} D X_ij entrywise.
template <Scalar S>
EndForm<S> ad_base(const EndForm<S>& x, Diff kind) {
  EndForm<S> out(x.bundle(), x.ring());
  for (int i = 0; i < x.rank(); ++i)
    for (int j = 0; j < x.rank(); ++j) {
      Form<S> f = x.at(i, j).d(kind);
      out.at(i, j) = (x.deg(i) & 1) ? -f : f;
    }
  return out;
}

/// Base differential applied to a section: (-1)^{d_j} D s_j.
template <Scalar S>
Section<S> apply_base(const GradedBundle& b, const Section<S>& s, Diff kind) {
  Section<S> out;
  for (int j = 0; j < b.rank(); ++j) {
    Form<S> f = s.at(j).d(kind);
    out.push_back((b.degree(j) & 1) ? -f : f);
  }
  return out;
}

/// Grading operator N = diag(d_i).
template <Scalar S>
EndForm<S> grading_operator(const GradedBundle& b, const Ring& r) {
  std::vector<S> d;
  for (int x : b.degrees()) d.push_back(S(x));
  return EndForm<S>::diagonal(b, r, d);
}

namespace detail {

template <Scalar S>
std::vector<std::vector<S>> invert_dense(std::vector<std::vector<S>> a) {
  using T = scalar_traits<S>;
  const size_t r = a.size();
  std::vector<std::vector<S>> inv(r, std::vector<S>(r, S(0)));
  for (size_t i = 0; i < r; ++i) inv[i][i] = S(1);
  for (size_t c = 0; c < r; ++c) {
    size_t piv = r;
    double best = 0;
    for (size_t k = c; k < r; ++k) {
      double m = T::abs(a[k][c]);
      if (T::is_zero(a[k][c])) continue;
      if (piv == r || (!T::exact && m > best)) { piv = k; best = m; }
      if (T::exact) break;
    }
    if (piv == r) throw DomainError("constant part of matrix is singular");
    std::swap(a[c], a[piv]);
    std::swap(inv[c], inv[piv]);
    S p = S(1) / a[c][c];
    for (size_t k = 0; k < r; ++k) { a[c][k] = a[c][k] * p; inv[c][k] = inv[c][k] * p; }
    for (size_t row = 0; row < r; ++row) {
      if (row == c || T::is_zero(a[row][c])) continue;
      S f = a[row][c];
      for (size_t k = 0; k < r; ++k) {
        a[row][k] -= f * a[c][k];
        inv[row][k] -= f * inv[c][k];
      }
    }
  }
  return inv;
}

}  // namespace detail

/// Inverse of an EndForm whose non-constant part is nilpotent.
template <Scalar S>
EndForm<S> inverse(const EndForm<S>& a) {
  const int r = a.rank();
  std::vector<std::vector<S>> c(r, std::vector<S>(r, S(0)));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      for (auto& [m, jet] : a.at(i, j).terms()) {
        if (m != 0) continue;
        for (auto& t : jet.terms()) {
          if (t.m == Monomial{}) c[i][j] = t.c;
          else if (!jet.is_nilpotent_term(t.m))
            throw DomainError("matrix has non-nilpotent non-constant part: " + monomial_str(t.m, *a.ring()));
        }
      }
    }
  auto ci = detail::invert_dense(c);
  EndForm<S> c0inv(a.bundle(), a.ring());
  EndForm<S> c0(a.bundle(), a.ring());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      c0inv.at(i, j) = Form<S>::constant(a.ring(), ci[i][j]);
      c0.at(i, j) = Form<S>::constant(a.ring(), c[i][j]);
    }
  EndForm<S> step = -(c0inv * (a - c0));
  EndForm<S> result = c0inv.with_validity(a.validity());
  EndForm<S> pw = result;
  for (int k = 0; k < 4 * kUnbounded; ++k) {
    pw = step * pw;
    if (pw.is_zero()) return result;
    result += pw;
  }
  throw DomainError("matrix inverse series did not terminate");
}

/// Hermitian metric: block diagonal in degree, made of 0-forms, Hermitian and
/// positive definite at the base point.
template <Scalar S>
class HermitianMetric {
 public:
  HermitianMetric() = default;
  explicit HermitianMetric(EndForm<S> h) : h_(std::move(h)) {
    const int r = h_.rank();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) {
        const auto& e = h_.at(i, j);
        for (auto& [m, c] : e.terms())
          if (m != 0) throw StructureError("metric entries must be functions");
        if (h_.deg(i) != h_.deg(j) && !e.is_zero()) throw StructureError("metric must be block diagonal in degree");
        if (!agrees(e.coefficient(0), h_.at(j, i).coefficient(0).conj()))
          throw StructureError("metric is not Hermitian at entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    Eigen::MatrixXcd c(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) c(i, j) = scalar_traits<S>::to_complex(h_.at(i, j).coefficient(0).constant_term());
    if (r > 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(c);
      double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
      if (es.eigenvalues().minCoeff() <= 1e-12 * scale) throw DomainError("metric is not positive definite at the base point");
    }
    hinv_ = inverse(h_);
  }

  const EndForm<S>& H() const { return h_; }
  const EndForm<S>& inverse_matrix() const { return hinv_; }
  const GradedBundle& bundle() const { return h_.bundle(); }
  const Ring& ring() const { return h_.ring(); }

  static HermitianMetric identity(const GradedBundle& b, const Ring& r) {
    return HermitianMetric(EndForm<S>::identity(b, r));
  }

 private:
  EndForm<S> h_, hinv_;
};

/// Adjoint with respect to the metric: H^{-1} (A^*)^T H.
template <Scalar S>
EndForm<S> adjoint(const EndForm<S>& a, const HermitianMetric<S>& h) {
  return h.inverse_matrix() * a.star_transpose() * h.H();
}

/// h(s, t) = sum s_i^* H_ij t_j.
template <Scalar S>
Form<S> pairing(const Section<S>& s, const Section<S>& t, const HermitianMetric<S>& h) {
  const auto& H = h.H();
  Form<S> acc(H.ring(), H.validity());
  for (int i = 0; i < H.rank(); ++i) {
    Form<S> si = s.at(i).star();
    for (int j = 0; j < H.rank(); ++j)
      if (!H.at(i, j).is_zero()) acc += si * H.at(i, j) * t.at(j);
  }
  return acc;
}

/// Polynomial f(T) = sum c_k T^k.
template <Scalar S>
struct Polynomial {
  std::vector<S> c;

  static Polynomial monomial(int k, S coef = S(1)) {
    Polynomial p;
    p.c.assign(k + 1, S(0));
    p.c[k] = coef;
    return p;
  }
  int degree() const { return (int)c.size() - 1; }
  Polynomial derivative() const {
    Polynomial p;
    for (size_t k = 1; k < c.size(); ++k) p.c.push_back(S((long long)k) * c[k]);
    if (p.c.empty()) p.c.push_back(S(0));
    return p;
  }
  std::string str() const {
    std::string s;
    for (size_t k = 0; k < c.size(); ++k) {
      if (scalar_traits<S>::is_zero(c[k])) continue;
      if (!s.empty()) s += " + ";
      s += "(" + scalar_traits<S>::str(c[k]) + ")" + (k ? "T^" + std::to_string(k) : "");
    }
    return s.empty() ? "0" : s;
  }
};

/// f(A) for a polynomial f.
template <Scalar S>
EndForm<S> series_eval(const Polynomial<S>& f, const EndForm<S>& a) {
  auto id = EndForm<S>::identity(a.bundle(), a.ring());
  if (f.c.empty()) return EndForm<S>(a.bundle(), a.ring());
  EndForm<S> acc = f.c.back() * id;
  for (int k = f.degree() - 1; k >= 0; --k) acc = acc * a + f.c[k] * id;
  return acc;
}

/// Directional evaluation g(A; B) = sum_k c_k sum_i A^{i-1} B A^{k-i}.
template <Scalar S>
EndForm<S> directional_eval(const Polynomial<S>& g, const EndForm<S>& a, const EndForm<S>& b) {
  EndForm<S> acc(a.bundle(), a.ring(), min(a.validity(), b.validity()));
  EndForm<S> dk = b, pw = EndForm<S>::identity(a.bundle(), a.ring());
  for (int k = 1; k <= g.degree(); ++k) {
    if (k > 1) {
      pw = pw * a;
      dk = dk * a + pw * b;
    }
    if (!scalar_traits<S>::is_zero(g.c[k])) acc += g.c[k] * dk;
  }
  return acc;
}

}  // namespace bc
