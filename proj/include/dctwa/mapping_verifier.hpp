#pragma once

// Numerical certification of the operator <-> differential-operator mappings
// for the continuous spin-1/2 kernel, in the angular (theta, phi) chart and
// the complex stereographic chart, plus the l >= 2 gauge orthogonality.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dctwa/error.hpp"
#include "dctwa/jet.hpp"
#include "dctwa/phase_space.hpp"
#include "dctwa/quadrature.hpp"

namespace dctwa::mapping {

enum class PauliOp { X, Y, Z };
enum class Side { Left, Right };
enum class Representation { Angular, Stereographic };

struct MappingSpec {
  PauliOp op = PauliOp::Z;
  Side side = Side::Left;
  Representation representation = Representation::Angular;
};

inline std::string to_string(const MappingSpec& m) {
  static constexpr const char* kOps[] = {"sigma_x", "sigma_y", "sigma_z"};
  const std::string op = kOps[static_cast<int>(m.op)];
  std::string s = m.side == Side::Left ? op + " rho" : "rho " + op;
  return s + (m.representation == Representation::Angular ? " [angular]" : " [stereographic]");
}

/// The six angular and six stereographic mappings.
inline std::vector<MappingSpec> all_mappings() {
  std::vector<MappingSpec> out;
  for (auto rep : {Representation::Angular, Representation::Stereographic}) {
    for (auto op : {PauliOp::X, PauliOp::Y, PauliOp::Z}) {
      for (auto side : {Side::Left, Side::Right}) out.push_back({op, side, rep});
    }
  }
  return out;
}

inline Mat2 pauli_matrix(PauliOp op) {
  switch (op) {
    case PauliOp::X: return pauli::x();
    case PauliOp::Y: return pauli::y();
    case PauliOp::Z: return pauli::z();
  }
  return pauli::z();
}

inline Mat2 apply_operator(const MappingSpec& m, const Mat2& rho) {
  const Mat2 p = pauli_matrix(m.op);
  return m.side == Side::Left ? Mat2(p * rho) : Mat2(rho * p);
}

struct ResidualReport {
  std::vector<std::array<double, 2>> grid;
  double max_abs_residual = 0.0;
  double mean_abs_residual = 0.0;
};

inline double max_entry(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------
// Pointwise identity with derivatives acting on the kernel.

struct KernelDerivatives {
  Mat2 value, d_theta, d_phi, d_phi2;
};

inline Mat2 traceless_part(double x, double y, double z) {
  Mat2 m;
  m << 0.5 * z, 0.5 * cplx(x, -y), 0.5 * cplx(x, y), -0.5 * z;
  return m;
}

inline KernelDerivatives kernel_derivatives(AngularCoordinate c) {
  const double st = std::sin(c.theta), ct = std::cos(c.theta);
  const double sp = std::sin(c.phi), cp = std::cos(c.phi);
  KernelDerivatives d;
  d.value = kernel_matrix(c);
  d.d_theta = traceless_part(kSqrt3 * ct * cp, -kSqrt3 * ct * sp, kSqrt3 * st);
  d.d_phi = traceless_part(-kSqrt3 * st * sp, -kSqrt3 * st * cp, 0.0);
  d.d_phi2 = traceless_part(-kSqrt3 * st * cp, kSqrt3 * st * sp, 0.0);
  return d;
}

inline constexpr double kSafeThetaBand = 0.05;

/// max |sigma_z A - D[A]| for the kernel-side identity
/// sigma_z A = [-sqrt3 cos t + (3 sin t - 2 csc t)/sqrt3 d_t - i d_p - 2 cot t csc t / sqrt3 d_p^2] A.
inline double kernel_identity_residual_sigma_z(AngularCoordinate c) {
  if (c.theta < kSafeThetaBand || c.theta > kPi - kSafeThetaBand) {
    throw Error(ErrorCode::SingularRegion, "theta = " + std::to_string(c.theta) + " outside [0.05, pi - 0.05]");
  }
  const auto d = kernel_derivatives(c);
  const double st = std::sin(c.theta), ct = std::cos(c.theta);
  const double csc = 1.0 / st, cot = ct / st;
  const Mat2 lhs = pauli::z() * d.value;
  const Mat2 rhs = -kSqrt3 * ct * d.value + ((3.0 * st - 2.0 * csc) / kSqrt3) * d.d_theta -
                   cplx(0.0, 1.0) * d.d_phi - (2.0 * cot * csc / kSqrt3) * d.d_phi2;
  return max_entry(lhs - rhs);
}

/// Residual over an n x n grid covering theta in [0.05, pi - 0.05], phi in [0, 2 pi).
inline ResidualReport kernel_identity_grid(int n = 32) {
  ResidualReport rep;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double th = kSafeThetaBand + (kPi - 2.0 * kSafeThetaBand) * i / (n - 1);
    for (int j = 0; j < n; ++j) {
      const double ph = kTwoPi * j / n;
      const double r = kernel_identity_residual_sigma_z({th, ph});
      rep.grid.push_back({th, ph});
      rep.max_abs_residual = std::max(rep.max_abs_residual, r);
      sum += r;
    }
  }
  rep.mean_abs_residual = sum / (n * n);
  return rep;
}

// ---------------------------------------------------------------------------
// Mappings with derivatives acting on the flattened Wigner function.
//
// Angular form:        D chi = a0 chi - d_t(Ct chi) + d_p(Cp chi) + d_p^2(Cpp chi)
// Stereographic form:  D chi = a0 chi - d_b(Cb chi) - d_b*(Cb* chi) + d_b* d_b(Cbb chi)

struct Coefficients {
  Jet a0, c1, c2, c11;
};

inline Coefficients angular_coefficients(const MappingSpec& m, const Jet& th, const Jet& ph) {
  const Jet i(cplx(0.0, 1.0));
  const Jet st = sin(th), ct = cos(th), sp = sin(ph), cp = cos(ph);
  const Jet csc = reciprocal(st);
  const Jet cot = ct * csc;
  const double sgn = m.side == Side::Left ? 1.0 : -1.0;
  switch (m.op) {
    case PauliOp::X:
      return {kSqrt3 * st * cp, kSqrt3 * ct * cp - sgn * (i * sp), csc * sp / kSqrt3 + sgn * (i * cot * cp),
              2.0 * csc * cp / kSqrt3};
    case PauliOp::Y:
      return {-kSqrt3 * st * sp, -(kSqrt3 * ct * sp + sgn * (i * cp)), csc * cp / kSqrt3 - sgn * (i * cot * sp),
              -2.0 * csc * sp / kSqrt3};
    case PauliOp::Z:
      return {-kSqrt3 * ct, (3.0 * st - 2.0 * csc) / kSqrt3, sgn * i, -2.0 * cot * csc / kSqrt3};
  }
  return {};
}

/// beta, beta* treated as independent functions of (x, y) with beta = x + i y.
inline Coefficients stereographic_coefficients(const MappingSpec& m, const Jet& x, const Jet& y) {
  const Jet i(cplx(0.0, 1.0));
  const Jet b = x + i * y;
  const Jet bs = x - i * y;
  const Jet nb = b * bs;
  const Jet one(1.0);
  const double c_plus = kSqrt3 + 3.0, c_minus = kSqrt3 - 3.0;
  const bool left = m.side == Side::Left;
  const double c_first = left ? c_plus : c_minus;
  const double c_second = left ? c_minus : c_plus;
  switch (m.op) {
    case PauliOp::X:
      return {kSqrt3 * (b + bs) / (one + nb), (c_first / 6.0) * (one - b * b), (c_second / 6.0) * (one - bs * bs),
              (b + bs) * (one + nb) / kSqrt3};
    case PauliOp::Y:
      return {-i * kSqrt3 * (b - bs) / (one + nb), i * (c_first / 6.0) * (one + b * b),
              -i * (c_second / 6.0) * (one + bs * bs), -i * (b - bs) * (one + nb) / kSqrt3};
    case PauliOp::Z:
      return {kSqrt3 * (one - nb) / (one + nb), -(c_first / 3.0) * b, -(c_second / 3.0) * bs,
              (one - nb * nb) / kSqrt3};
  }
  return {};
}

/// Test function chi(u, v) on the chart; must vanish at the boundary fast enough.
using TestFunction = std::function<Jet(const Jet&, const Jet&)>;

inline Jet apply_differential(const MappingSpec& m, const TestFunction& chi, double u, double v) {
  const Jet ju = Jet::variable(u, 0);
  const Jet jv = Jet::variable(v, 1);
  const Jet f = chi(ju, jv);
  if (m.representation == Representation::Angular) {
    const auto c = angular_coefficients(m, ju, jv);
    const Jet g1 = c.c1 * f, g2 = c.c2 * f, g11 = c.c11 * f;
    return Jet(c.a0.value * f.value - g1.du() + g2.dv() + g11.dvv());
  }
  const auto c = stereographic_coefficients(m, ju, jv);
  const Jet g1 = c.c1 * f, g2 = c.c2 * f, g11 = c.c11 * f;
  const cplx i(0.0, 1.0);
  const cplx d_beta = 0.5 * (g1.du() - i * g1.dv());
  const cplx d_beta_star = 0.5 * (g2.du() + i * g2.dv());
  const cplx laplace = 0.25 * (g11.duu() + g11.dvv());
  return Jet(c.a0.value * f.value - d_beta - d_beta_star + laplace);
}

/// Kernel in the stereographic chart used by the mapping table. Equivalent to
/// the angular kernel under beta = cot(theta / 2) exp(-i phi).
inline Mat2 stereographic_mapping_kernel(cplx beta) {
  const double n = std::norm(beta);
  const double k = kSqrt3 / (1.0 + n);
  return kernel_from_vector({k * 2.0 * beta.real(), k * 2.0 * beta.imag(), k * (1.0 - n)});
}

struct QuadratureOptions {
  double abs_tol = 1e-9;
  int order = 20;
  int phi_nodes = 64;
  double radius = 9.0;  // stereographic cutoff; test functions carry Gaussian decay
};

struct AdjointResult {
  Mat2 lhs;  // operator applied to rho[chi]
  Mat2 rhs;  // integral of A D[chi]
  Mat2 rho;  // rho[chi]
  double residual = 0.0;
};

/// Compares sigma rho[chi] (or rho[chi] sigma) with int A (D chi), where
/// rho[chi] = int chi A over the chart with flat measure.
inline AdjointResult adjoint_mapping_check(const MappingSpec& m, const TestFunction& chi,
                                           const QuadratureOptions& opt = {}) {
  quad::AdaptiveOptions ao;
  ao.abs_tol = opt.abs_tol;
  ao.order = opt.order;
  using Pair = Eigen::Matrix<cplx, 2, 4>;
  auto pack = [](const Mat2& a, const Mat2& b) {
    Pair p;
    p.leftCols<2>() = a;
    p.rightCols<2>() = b;
    return p;
  };
  Pair total;
  if (m.representation == Representation::Angular) {
    auto over_theta = [&](double th) {
      return quad::periodic_trapezoid(
          [&](double ph) {
            const Mat2 a = kernel_matrix({th, ph});
            const cplx c = chi(Jet(th), Jet(ph)).value;
            const cplx d = apply_differential(m, chi, th, ph).value;
            return Pair(pack(c * a, d * a));
          },
          kTwoPi, opt.phi_nodes);
    };
    total = quad::adaptive(over_theta, 0.0, kPi, ao);
  } else {
    auto over_radius = [&](double r) {
      return quad::periodic_trapezoid(
          [&](double ang) {
            const double x = r * std::cos(ang), y = r * std::sin(ang);
            const Mat2 a = stereographic_mapping_kernel({x, y});
            const cplx c = chi(Jet(x), Jet(y)).value;
            const cplx d = apply_differential(m, chi, x, y).value;
            return Pair(pack((c * r) * a, (d * r) * a));
          },
          kTwoPi, opt.phi_nodes);
    };
    total = quad::adaptive(over_radius, 0.0, opt.radius, ao);
  }
  AdjointResult res;
  res.rho = total.leftCols<2>();
  res.rhs = total.rightCols<2>();
  res.lhs = apply_operator(m, res.rho);
  res.residual = max_entry(res.lhs - res.rhs);
  return res;
}

inline double adjoint_mapping_residual(const MappingSpec& m, const TestFunction& chi,
                                       const QuadratureOptions& opt = {}) {
  return adjoint_mapping_check(m, chi, opt).residual;
}

// ---------------------------------------------------------------------------
// Test-function families.

/// sin^k(theta) (a + b cos(n phi) + c sin(n phi)) on the angular stripe.
inline TestFunction angular_test_function(int k, int n, double a, double b, double c) {
  return [=](const Jet& th, const Jet& ph) {
    const Jet fourier = Jet(a) + b * cos(double(n) * ph) + c * sin(double(n) * ph);
    return pow(sin(th), k) * fourier;
  };
}

/// Flattened Wigner function sin(theta) W(theta, phi) / 2pi of the Bloch vector b,
/// multiplied by a sin^2 envelope so that boundary terms vanish. Its rho[chi] is a
/// valid (unnormalized) operator; only the identity between both sides is checked.
inline TestFunction smoothed_state_test_function(std::array<double, 3> bloch) {
  return [=](const Jet& th, const Jet& ph) {
    const Jet st = sin(th);
    const Jet w = Jet(1.0) + kSqrt3 * (bloch[0] * st * cos(ph) - bloch[1] * st * sin(ph) - bloch[2] * cos(th));
    return (1.0 / kTwoPi) * pow(st, 3) * w;
  };
}

/// exp(-|beta|^2) times a low-order polynomial in (x, y) on the stereographic plane.
inline TestFunction stereographic_test_function(double c0, double cx, double cy, double cxy, double width = 1.0) {
  return [=](const Jet& x, const Jet& y) {
    const Jet r2 = x * x + y * y;
    return exp(-(1.0 / (width * width)) * r2) * (Jet(c0) + cx * x + cy * y + cxy * x * y);
  };
}

inline std::vector<TestFunction> standard_angular_suite() {
  return {
      angular_test_function(2, 0, 1.0, 0.0, 0.0),  angular_test_function(3, 1, 0.2, 1.0, 0.0),
      angular_test_function(3, 1, 0.0, 0.3, -0.7), angular_test_function(4, 2, 0.5, -0.4, 0.6),
      angular_test_function(5, 3, 1.0, 0.25, 0.5), smoothed_state_test_function({0.0, 0.0, -1.0}),
  };
}

inline std::vector<TestFunction> standard_stereographic_suite() {
  return {
      stereographic_test_function(1.0, 0.0, 0.0, 0.0),     stereographic_test_function(0.5, 1.0, 0.0, 0.0),
      stereographic_test_function(0.0, 0.3, -0.8, 0.0),    stereographic_test_function(0.2, 0.0, 0.0, 1.0, 1.5),
      stereographic_test_function(1.0, -0.5, 0.25, 0.3, 0.7),
  };
}

// ---------------------------------------------------------------------------
// Stereographic chart used for the discrete points: beta = tan(theta/2) exp(-i phi).

inline cplx stereographic_from_angles(AngularCoordinate c) {
  if (std::abs(c.theta - kPi) < 1e-12) {
    throw Error(ErrorCode::PoleError, "beta is singular at theta = pi");
  }
  return std::tan(0.5 * c.theta) * std::exp(cplx(0.0, -c.phi));
}

inline AngularCoordinate angles_from_stereographic(cplx beta) {
  AngularCoordinate c;
  c.theta = 2.0 * std::atan(std::abs(beta));
  c.phi = std::abs(beta) == 0.0 ? 0.0 : wrap_phi(-std::arg(beta));
  return c;
}

/// s(beta) = sqrt3 / (1 + |beta|^2) (beta + beta*, -i (beta - beta*), -1 + |beta|^2).
inline CartesianSpin cartesian_from_stereographic(cplx beta) {
  const double n = std::norm(beta);
  const double k = kSqrt3 / (1.0 + n);
  return {k * 2.0 * beta.real(), k * 2.0 * beta.imag(), k * (n - 1.0)};
}

/// Returns beta for the coordinate; throws PoleError at theta = pi.
inline cplx stereographic_roundtrip(AngularCoordinate c) { return stereographic_from_angles(c); }

/// beta_alpha = (-1)^(a1 + a2) (-1)^((1 + 2 a1) / 4) ((-1)^a1 + sqrt3) / sqrt2.
inline cplx discrete_stereographic_point(BitPair alpha) {
  const double sign = ((alpha.a1 + alpha.a2) & 1) ? -1.0 : 1.0;
  const cplx root = std::exp(cplx(0.0, kPi * (1.0 + 2.0 * alpha.a1) / 4.0));
  const double mag = ((alpha.a1 & 1) ? -1.0 : 1.0) + kSqrt3;
  return sign * root * (mag / std::sqrt(2.0));
}

// ---------------------------------------------------------------------------
// Gauge orthogonality against spherical harmonics.

inline cplx spherical_harmonic(int l, int m, double theta, double phi) {
  const int am = std::abs(m);
  const double p = std::sph_legendre(static_cast<unsigned>(l), static_cast<unsigned>(am), theta);
  cplx y = p * std::exp(cplx(0.0, am * phi));
  if (m < 0) y = ((am & 1) ? -1.0 : 1.0) * std::conj(y);
  return y;
}

/// int dOmega A Y_lm with dOmega = sin t dt dp / 2pi, Gauss-Legendre in cos t (64) x trapezoid in p (128).
inline Mat2 kernel_harmonic_overlap(int l, int m) {
  const auto& rule = quad::gauss_legendre(64);
  Mat2 acc = Mat2::Zero();
  const int nphi = 128;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double th = std::acos(rule.nodes[k]);
    for (int j = 0; j < nphi; ++j) {
      const double ph = kTwoPi * j / nphi;
      acc += (rule.weights[k] / nphi) * spherical_harmonic(l, m, th, ph) * kernel_matrix({th, ph});
    }
  }
  return acc;
}

inline double gauge_orthogonality_residual(int l, int m) {
  if (l < 0 || std::abs(m) > l) throw Error(ErrorCode::InvalidArgument, "require |m| <= l");
  return max_entry(kernel_harmonic_overlap(l, m));
}

/// int dOmega A(theta, phi); equals the identity.
inline Mat2 kernel_sphere_integral() {
  const auto& rule = quad::gauss_legendre(64);
  Mat2 acc = Mat2::Zero();
  const int nphi = 128;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double th = std::acos(rule.nodes[k]);
    for (int j = 0; j < nphi; ++j) acc += (rule.weights[k] / nphi) * kernel_matrix({th, kTwoPi * j / nphi});
  }
  return acc;
}

}  // namespace dctwa::mapping
