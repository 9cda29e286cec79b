#pragma once

// Second-order forward-mode derivatives in two variables. Used to apply
// the phase-space differential operators to test functions exactly.

#include <array>
#include <complex>

namespace dctwa {

/// Value with first and second partial derivatives with respect to (u, v).
/// `second` holds (d2/du2, d2/dudv, d2/dv2).
struct Jet {
  using cplx = std::complex<double>;

  cplx value{};
  std::array<cplx, 2> first{};
  std::array<cplx, 3> second{};

  Jet() = default;
  Jet(cplx c) : value(c) {}  // NOLINT(google-explicit-constructor)
  Jet(double c) : value(c) {}  // NOLINT(google-explicit-constructor)

  static Jet variable(double x, int which) {
    Jet j(x);
    j.first[static_cast<std::size_t>(which)] = 1.0;
    return j;
  }

  cplx du() const { return first[0]; }
  cplx dv() const { return first[1]; }
  cplx duu() const { return second[0]; }
  cplx duv() const { return second[1]; }
  cplx dvv() const { return second[2]; }

  Jet& operator+=(const Jet& o) {
    value += o.value;
    for (int k = 0; k < 2; ++k) first[k] += o.first[k];
    for (int k = 0; k < 3; ++k) second[k] += o.second[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) { return *this += -o; }

  friend Jet operator-(Jet a) {
    a.value = -a.value;
    for (auto& f : a.first) f = -f;
    for (auto& s : a.second) s = -s;
    return a;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    r.value = a.value * b.value;
    r.first[0] = a.first[0] * b.value + a.value * b.first[0];
    r.first[1] = a.first[1] * b.value + a.value * b.first[1];
    r.second[0] = a.second[0] * b.value + 2.0 * a.first[0] * b.first[0] + a.value * b.second[0];
    r.second[1] = a.second[1] * b.value + a.first[0] * b.first[1] + a.first[1] * b.first[0] + a.value * b.second[1];
    r.second[2] = a.second[2] * b.value + 2.0 * a.first[1] * b.first[1] + a.value * b.second[2];
    return r;
  }

  friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

  /// Chain rule for a scalar function with derivatives (f, f', f'') at value.
  static Jet compose(const Jet& x, cplx f0, cplx f1, cplx f2) {
    Jet r;
    r.value = f0;
    r.first[0] = f1 * x.first[0];
    r.first[1] = f1 * x.first[1];
    r.second[0] = f2 * x.first[0] * x.first[0] + f1 * x.second[0];
    r.second[1] = f2 * x.first[0] * x.first[1] + f1 * x.second[1];
    r.second[2] = f2 * x.first[1] * x.first[1] + f1 * x.second[2];
    return r;
  }

  friend Jet reciprocal(const Jet& x) {
    const cplx inv = 1.0 / x.value;
    return compose(x, inv, -inv * inv, 2.0 * inv * inv * inv);
  }
  friend Jet sin(const Jet& x) {
    const cplx s = std::sin(x.value), c = std::cos(x.value);
    return compose(x, s, c, -s);
  }
  friend Jet cos(const Jet& x) {
    const cplx s = std::sin(x.value), c = std::cos(x.value);
    return compose(x, c, -s, -c);
  }
  friend Jet exp(const Jet& x) {
    const cplx e = std::exp(x.value);
    return compose(x, e, e, e);
  }
  friend Jet pow(const Jet& x, int n) {
    Jet r(1.0);
    for (int k = 0; k < n; ++k) r = r * x;
    return r;
  }
};

}  // namespace dctwa
