#pragma once

#include <gmpxx.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bc {

/// Base of every error raised by the library. `kind()` is a stable short tag.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error("parse", w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct ValidityError : Error {
  explicit ValidityError(const std::string& w) : Error("validity", w) {}
};
struct StructureError : Error {
  explicit StructureError(const std::string& w) : Error("structure", w) {}
};

// Rational number with an int64 fast path; promotes to GMP on overflow and
// demotes back whenever the value fits again, so equality stays structural.
class Rational {
 public:
  Rational() = default;
  Rational(long long n) : n_(n) { if (!small_ok(n)) promote_from(n, 1); }  // NOLINT
  Rational(long long n, long long d) { assign128(n, d); }
  explicit Rational(const mpq_class& q) { assign_big(q); }

  Rational(const Rational& o) : n_(o.n_), d_(o.d_) {
    if (o.big_) big_ = std::make_unique<mpq_class>(*o.big_);
  }
  Rational(Rational&&) noexcept = default;
  Rational& operator=(const Rational& o) {
    if (this != &o) {
      n_ = o.n_;
      d_ = o.d_;
      big_ = o.big_ ? std::make_unique<mpq_class>(*o.big_) : nullptr;
    }
    return *this;
  }
  Rational& operator=(Rational&&) noexcept = default;

  static Rational parse(std::string_view s) {
    std::string t(s);
    if (t.empty()) throw ParseError("empty rational");
    mpq_class q;
    if (q.set_str(t, 10) != 0 || q.get_den() == 0) throw ParseError("bad rational '" + t + "'");
    q.canonicalize();
    return Rational(q);
  }

  bool is_zero() const { return !big_ && n_ == 0; }
  bool is_one() const { return !big_ && n_ == 1 && d_ == 1; }
  int sign() const { return big_ ? sgn(*big_) : (n_ > 0) - (n_ < 0); }
  bool is_integer() const { return big_ ? big_->get_den() == 1 : d_ == 1; }

  mpq_class to_mpq() const {
    if (big_) return *big_;
    mpq_class q;
    mpz_set_si(q.get_num_mpz_t(), n_);
    mpz_set_si(q.get_den_mpz_t(), d_);
    return q;
  }
  double to_double() const { return big_ ? big_->get_d() : double(n_) / double(d_); }
  std::string str() const { return to_mpq().get_str(); }

  friend bool operator==(const Rational& a, const Rational& b) {
    if (!a.big_ && !b.big_) return a.n_ == b.n_ && a.d_ == b.d_;
    if (a.big_ && b.big_) return *a.big_ == *b.big_;
    return false;  // canonical: a big value never fits int64
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    if (!a.big_ && !b.big_) return __int128(a.n_) * b.d_ < __int128(b.n_) * a.d_;
    return a.to_mpq() < b.to_mpq();
  }

  Rational operator-() const {
    Rational r(*this);
    if (r.big_) *r.big_ = -*r.big_; else r.n_ = -r.n_;
    return r;
  }
  friend Rational operator+(const Rational& a, const Rational& b) {
    if (a.big_ || b.big_) return Rational(mpq_class(a.to_mpq() + b.to_mpq()));
    if (b.n_ == 0) return a;
    if (a.n_ == 0) return b;
    Rational r;
    if (a.d_ == b.d_) r.assign128(__int128(a.n_) + b.n_, a.d_);
    else r.assign128(__int128(a.n_) * b.d_ + __int128(b.n_) * a.d_, __int128(a.d_) * b.d_);
    return r;
  }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    if (a.big_ || b.big_) return Rational(mpq_class(a.to_mpq() * b.to_mpq()));
    if (a.n_ == 0 || b.n_ == 0) return Rational();
    long long g1 = std::gcd(a.n_, b.d_), g2 = std::gcd(b.n_, a.d_);
    Rational r;
    r.assign_reduced(__int128(a.n_ / g1) * (b.n_ / g2), __int128(a.d_ / g2) * (b.d_ / g1));
    return r;
  }
  Rational inverse() const {
    if (is_zero()) throw DomainError("division by zero");
    if (big_) return Rational(mpq_class(1 / *big_));
    Rational r;
    r.assign_reduced(n_ < 0 ? -__int128(d_) : __int128(d_), n_ < 0 ? -__int128(n_) : __int128(n_));
    return r;
  }
  friend Rational operator/(const Rational& a, const Rational& b) { return a * b.inverse(); }
  Rational& operator+=(const Rational& b) { return *this = *this + b; }
  Rational& operator-=(const Rational& b) { return *this = *this - b; }
  Rational& operator*=(const Rational& b) { return *this = *this * b; }

 private:
  static constexpr long long kLim = 0x7fffffffffffffffLL;
  static bool small_ok(__int128 v) { return v <= kLim && v >= -kLim; }

  static unsigned __int128 gcd128(unsigned __int128 a, unsigned __int128 b) {
    while (b) {
      if ((a >> 64) == 0 && (b >> 64) == 0) return std::gcd(uint64_t(a), uint64_t(b));
      unsigned __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }
  void assign128(__int128 n, __int128 d) {
    if (d == 0) throw DomainError("division by zero");
    if (d < 0) { n = -n; d = -d; }
    if (n == 0) { n_ = 0; d_ = 1; big_.reset(); return; }
    unsigned __int128 g = gcd128(n < 0 ? -n : n, d);
    assign_reduced(n / __int128(g), d / __int128(g));
  }
  void assign_reduced(__int128 n, __int128 d) {
    if (small_ok(n) && small_ok(d)) {
      n_ = (long long)n;
      d_ = (long long)d;
      big_.reset();
    } else {
      promote_from(n, d);
    }
  }
  static void set_mpz(mpz_t z, __int128 v) {
    bool neg = v < 0;
    unsigned __int128 u = neg ? -(unsigned __int128)v : (unsigned __int128)v;
    mpz_set_ui(z, (unsigned long)(u >> 64));
    mpz_mul_2exp(z, z, 64);
    mpz_add_ui(z, z, (unsigned long)(uint64_t)u);
    if (neg) mpz_neg(z, z);
  }
  void promote_from(__int128 n, __int128 d) {
    mpq_class q;
    set_mpz(q.get_num_mpz_t(), n);
    set_mpz(q.get_den_mpz_t(), d);
    q.canonicalize();
    assign_big(q);
  }
  void assign_big(const mpq_class& q) {
    if (mpz_fits_slong_p(q.get_num_mpz_t()) && mpz_fits_slong_p(q.get_den_mpz_t()) &&
        small_ok(mpz_get_si(q.get_num_mpz_t()))) {
      n_ = mpz_get_si(q.get_num_mpz_t());
      d_ = mpz_get_si(q.get_den_mpz_t());
      big_.reset();
    } else {
      n_ = 0;
      d_ = 1;
      big_ = std::make_unique<mpq_class>(q);
    }
  }

  long long n_ = 0, d_ = 1;
  std::unique_ptr<mpq_class> big_;
};

/// Gaussian rational re + im*i; the exact scalar.
struct GaussRational {
  Rational re, im;

  GaussRational() = default;
  GaussRational(long long r) : re(r) {}  // NOLINT
  GaussRational(Rational r, Rational i = Rational()) : re(std::move(r)), im(std::move(i)) {}  // NOLINT

  bool is_zero() const { return re.is_zero() && im.is_zero(); }
  GaussRational conj() const { return {re, -im}; }
  double abs() const { return std::hypot(re.to_double(), im.to_double()); }

  friend bool operator==(const GaussRational& a, const GaussRational& b) { return a.re == b.re && a.im == b.im; }
  GaussRational operator-() const { return {-re, -im}; }
  friend GaussRational operator+(const GaussRational& a, const GaussRational& b) { return {a.re + b.re, a.im + b.im}; }
  friend GaussRational operator-(const GaussRational& a, const GaussRational& b) { return {a.re - b.re, a.im - b.im}; }
  friend GaussRational operator*(const GaussRational& a, const GaussRational& b) {
    if (a.im.is_zero() && b.im.is_zero()) return {a.re * b.re};
    if (a.im.is_zero()) return {a.re * b.re, a.re * b.im};
    if (b.im.is_zero()) return {a.re * b.re, a.im * b.re};
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
  }
  GaussRational inverse() const {
    if (is_zero()) throw DomainError("division by zero");
    if (im.is_zero()) return {re.inverse()};
    Rational n = (re * re + im * im).inverse();
    return {re * n, -im * n};
  }
  friend GaussRational operator/(const GaussRational& a, const GaussRational& b) { return a * b.inverse(); }
  GaussRational& operator+=(const GaussRational& b) { re += b.re; im += b.im; return *this; }
  GaussRational& operator-=(const GaussRational& b) { re -= b.re; im -= b.im; return *this; }
  GaussRational& operator*=(const GaussRational& b) { return *this = *this * b; }

  // "a/b", "c/d i", "a/b+c/d i"
  std::string str() const {
    if (im.is_zero()) return re.str();
    std::string s = re.is_zero() ? std::string() : re.str();
    std::string is = im.str();
    if (!s.empty() && is[0] != '-') s += '+';
    return s + is + " i";
  }
  static GaussRational parse(std::string_view s) {
    std::string t;
    for (char c : s)
      if (c != ' ') t += c;
    if (t.empty()) throw ParseError("empty scalar");
    if (t.back() != 'i') return {Rational::parse(t)};
    t.pop_back();
    size_t split = std::string::npos;
    for (size_t k = t.size(); k-- > 1;)
      if ((t[k] == '+' || t[k] == '-') && t[k - 1] != 'e') { split = k; break; }
    auto imag = [](std::string u) {
      if (u.empty() || u == "+") return Rational(1);
      if (u == "-") return Rational(-1);
      if (u[0] == '+') u.erase(0, 1);
      return Rational::parse(u);
    };
    if (split == std::string::npos) return {Rational(), imag(t)};
    return {Rational::parse(t.substr(0, split)), imag(t.substr(split))};
  }
};

using Complex = std::complex<double>;

template <class S>
struct scalar_traits;

template <>
struct scalar_traits<GaussRational> {
  static constexpr bool exact = true;
  static constexpr const char* name = "exact";
  static GaussRational from_rational(const Rational& re, const Rational& im = Rational()) { return {re, im}; }
  static GaussRational conj(const GaussRational& a) { return a.conj(); }
  static bool is_zero(const GaussRational& a) { return a.is_zero(); }
  static double abs(const GaussRational& a) { return a.abs(); }
  static Complex to_complex(const GaussRational& a) { return {a.re.to_double(), a.im.to_double()}; }
  static std::string str(const GaussRational& a) { return a.str(); }
  static GaussRational parse(std::string_view s) { return GaussRational::parse(s); }
};

template <>
struct scalar_traits<Complex> {
  static constexpr bool exact = false;
  static constexpr const char* name = "numeric";
  static Complex from_rational(const Rational& re, const Rational& im = Rational()) {
    return {re.to_double(), im.to_double()};
  }
  static Complex conj(const Complex& a) { return std::conj(a); }
  static bool is_zero(const Complex& a) { return a == Complex(0.0); }
  static double abs(const Complex& a) { return std::abs(a); }
  static Complex to_complex(const Complex& a) { return a; }
  static std::string str(const Complex& a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g%+.17g i", a.real(), a.imag());
    return buf;
  }
  static Complex parse(std::string_view s) { return scalar_traits<GaussRational>::to_complex(GaussRational::parse(s)); }
};

template <class S>
concept Scalar = requires { scalar_traits<S>::exact; };

template <Scalar S>
S rat(long long n, long long d = 1) {
  return scalar_traits<S>::from_rational(Rational(n, d));
}

template <Scalar T, Scalar S>
T convert_scalar(const S& s) {
  if constexpr (std::is_same_v<T, S>) return s;
  else if constexpr (std::is_same_v<T, Complex>) return scalar_traits<S>::to_complex(s);
  else static_assert(sizeof(T) == 0, "numeric values cannot be made exact");
}

}  // namespace bc
