#pragma once

// Spin-1/2 phase spaces: Wootters' discrete phase points and the continuous
// SU(2) kernel on the sphere of radius sqrt(3).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Core>

#include "dctwa/error.hpp"

namespace dctwa {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;

inline constexpr double kSqrt3 = std::numbers::sqrt3;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

namespace pauli {
inline Mat2 identity() { return Mat2::Identity(); }
inline Mat2 x() {
  Mat2 m;
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}
inline Mat2 y() {
  Mat2 m;
  m << 0.0, cplx(0.0, -1.0), cplx(0.0, 1.0), 0.0;
  return m;
}
inline Mat2 z() {
  Mat2 m;
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}
/// sigma^- = |down><up| in the (up, down) basis.
inline Mat2 lower() {
  Mat2 m;
  m << 0.0, 0.0, 1.0, 0.0;
  return m;
}
inline Mat2 raise() { return lower().adjoint(); }
}  // namespace pauli

/// Pair of bits (alpha_1, alpha_2) labelling one of the four discrete points.
struct BitPair {
  int a1 = 0;
  int a2 = 0;

  constexpr int index() const { return 2 * a1 + a2; }
  static constexpr BitPair from_index(int i) { return {(i >> 1) & 1, i & 1}; }
  friend constexpr bool operator==(BitPair, BitPair) = default;
};

inline constexpr std::array<BitPair, 4> kAllBitPairs{BitPair{0, 0}, BitPair{0, 1}, BitPair{1, 0},
                                                     BitPair{1, 1}};

struct CartesianSpin {
  double sx = 0.0;
  double sy = 0.0;
  double sz = 0.0;

  double norm() const { return std::sqrt(sx * sx + sy * sy + sz * sz); }
  double operator[](int axis) const { return axis == 0 ? sx : (axis == 1 ? sy : sz); }
};

/// Polar angle theta in [0, pi], azimuth phi in [0, 2pi).
struct AngularCoordinate {
  double theta = 0.0;
  double phi = 0.0;
};

inline double wrap_phi(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

/// r_alpha = ((-1)^a2, (-1)^(a1+a2), (-1)^a1).
constexpr CartesianSpin discrete_phase_vector(BitPair alpha) {
  const double x = (alpha.a2 & 1) ? -1.0 : 1.0;
  const double z = (alpha.a1 & 1) ? -1.0 : 1.0;
  return {x, x * z, z};
}

/// sqrt(3) (sin t cos p, -sin t sin p, -cos t).
inline CartesianSpin cartesian_from_angles(AngularCoordinate c) {
  const double st = std::sin(c.theta);
  return {kSqrt3 * st * std::cos(c.phi), -kSqrt3 * st * std::sin(c.phi), -kSqrt3 * std::cos(c.theta)};
}

/// Inverse of cartesian_from_angles on the radius-sqrt(3) sphere. phi = 0 at the poles.
inline AngularCoordinate angles_from_cartesian(CartesianSpin s, double tol = 1e-9) {
  const double r = s.norm();
  if (!(std::abs(r - kSqrt3) <= tol)) {
    throw Error(ErrorCode::NormMismatch, "|s| = " + std::to_string(r) + ", expected sqrt(3)");
  }
  const double rho = std::hypot(s.sx, s.sy);
  AngularCoordinate c;
  c.theta = std::atan2(rho, -s.sz);
  c.phi = rho <= 1e-15 * r ? 0.0 : wrap_phi(std::atan2(-s.sy, s.sx));
  return c;
}

/// Angles of the discrete phase point alpha on the continuous sphere.
inline AngularCoordinate discrete_point_angles(BitPair alpha) {
  const double t_small = std::acos(1.0 / kSqrt3);
  static constexpr std::array<double, 4> kPhiQuarter{7.0, 3.0, 1.0, 5.0};
  AngularCoordinate c;
  c.theta = alpha.a1 == 0 ? kPi - t_small : t_small;
  c.phi = kPhiQuarter[static_cast<std::size_t>(alpha.index())] * kPi / 4.0;
  return c;
}

inline Mat2 kernel_from_vector(const CartesianSpin& s) {
  Mat2 m;
  m << 0.5 * (1.0 + s.sz), 0.5 * cplx(s.sx, -s.sy), 0.5 * cplx(s.sx, s.sy), 0.5 * (1.0 - s.sz);
  return m;
}

/// Continuous kernel A(theta, phi) = (1 + s . sigma) / 2.
inline Mat2 kernel_matrix(AngularCoordinate c) { return kernel_from_vector(cartesian_from_angles(c)); }

/// Discrete phase-point operator A_alpha.
inline Mat2 discrete_kernel(BitPair alpha) { return kernel_from_vector(discrete_phase_vector(alpha)); }

/// Decomposition O = a0 1 + a . sigma of a 2x2 matrix (complex coefficients in general).
struct PauliDecomposition {
  cplx a0, ax, ay, az;
};

inline PauliDecomposition pauli_decompose(const Mat2& o) {
  return {0.5 * (o(0, 0) + o(1, 1)), 0.5 * (o(0, 1) + o(1, 0)), 0.5 * cplx(0.0, 1.0) * (o(0, 1) - o(1, 0)),
          0.5 * (o(0, 0) - o(1, 1))};
}

/// Weyl symbol Tr[A(theta, phi) O] = a0 + a . s(theta, phi) for Hermitian O.
inline double weyl_symbol(const Mat2& observable, AngularCoordinate c) {
  const auto d = pauli_decompose(observable);
  const auto s = cartesian_from_angles(c);
  return (d.a0 + d.ax * s.sx + d.ay * s.sy + d.az * s.sz).real();
}

/// Bloch vector (<sigma_x>, <sigma_y>, <sigma_z>) of a 2x2 density matrix.
inline std::array<double, 3> bloch_vector(const Mat2& rho) {
  const auto d = pauli_decompose(rho);
  return {2.0 * d.ax.real(), 2.0 * d.ay.real(), 2.0 * d.az.real()};
}

inline void validate_density_matrix(const Mat2& rho, double tol = 1e-9) {
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) {
    throw Error(ErrorCode::InvalidDensityMatrix, "not Hermitian");
  }
  if (std::abs(rho.trace() - 1.0) > tol) {
    throw Error(ErrorCode::InvalidDensityMatrix, "trace differs from one");
  }
  const auto b = bloch_vector(rho);
  if (std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]) > 1.0 + tol) {
    throw Error(ErrorCode::InvalidDensityMatrix, "negative eigenvalue");
  }
}

/// Four real weights W_alpha = Tr[A_alpha rho] / 2, indexed by BitPair::index().
struct DiscreteWignerDistribution {
  std::array<double, 4> weights{};

  double operator[](BitPair a) const { return weights[static_cast<std::size_t>(a.index())]; }
  double sum() const { return weights[0] + weights[1] + weights[2] + weights[3]; }

  Mat2 reconstruct() const {
    Mat2 rho = Mat2::Zero();
    for (auto a : kAllBitPairs) rho += (*this)[a] * discrete_kernel(a);
    return rho;
  }
};

inline DiscreteWignerDistribution discrete_wigner_coeffs(const Mat2& rho) {
  validate_density_matrix(rho);
  DiscreteWignerDistribution w;
  for (auto a : kAllBitPairs) {
    w.weights[static_cast<std::size_t>(a.index())] = 0.5 * (discrete_kernel(a) * rho).trace().real();
  }
  return w;
}

inline Mat2 density_from_bloch(const std::array<double, 3>& b) {
  return kernel_from_vector({b[0], b[1], b[2]});
}

}  // namespace dctwa
