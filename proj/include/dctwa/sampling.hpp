#pragma once

// Initial-state sampling on the discrete and continuous phase spaces.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dctwa/error.hpp"
#include "dctwa/phase_space.hpp"

namespace dctwa {

using Rng = std::mt19937_64;

/// Independent stream for trajectory `index` under `seed`.
inline Rng trajectory_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5eedU};
  return Rng(seq);
}

enum class SamplingScheme { TwoPoint, FourPoint, ContinuousRing };

inline const char* to_string(SamplingScheme s) {
  switch (s) {
    case SamplingScheme::TwoPoint: return "2p";
    case SamplingScheme::FourPoint: return "4p";
    case SamplingScheme::ContinuousRing: return "inf-p";
  }
  return "?";
}

/// Single-spin state as a convex mixture of pure states given by unit Bloch vectors.
struct SpinState {
  struct Component {
    double weight = 1.0;
    std::array<double, 3> bloch{0.0, 0.0, -1.0};
  };
  std::vector<Component> components{Component{}};

  static SpinState pure(std::array<double, 3> n) {
    const double r = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (!(std::abs(r - 1.0) <= 1e-9)) throw Error(ErrorCode::InvalidDensityMatrix, "pure state needs a unit Bloch vector");
    SpinState s;
    s.components = {{1.0, {n[0] / r, n[1] / r, n[2] / r}}};
    return s;
  }
  static SpinState down() { return pure({0.0, 0.0, -1.0}); }
  static SpinState up() { return pure({0.0, 0.0, 1.0}); }

  /// Spectral decomposition of the state with Bloch vector b, |b| <= 1.
  static SpinState from_bloch(std::array<double, 3> b) {
    const double r = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    if (r > 1.0 + 1e-9) throw Error(ErrorCode::InvalidDensityMatrix, "Bloch vector longer than one");
    std::array<double, 3> n{0.0, 0.0, 1.0};
    if (r > 1e-15) n = {b[0] / r, b[1] / r, b[2] / r};
    SpinState s;
    s.components = {{0.5 * (1.0 + std::min(r, 1.0)), n}, {0.5 * (1.0 - std::min(r, 1.0)), {-n[0], -n[1], -n[2]}}};
    if (s.components[1].weight <= 0.0) s.components.pop_back();
    return s;
  }

  std::array<double, 3> bloch() const {
    std::array<double, 3> b{};
    for (const auto& c : components) {
      for (int k = 0; k < 3; ++k) b[static_cast<std::size_t>(k)] += c.weight * c.bloch[static_cast<std::size_t>(k)];
    }
    return b;
  }
};

/// Discrete points of the set rotated by pi/2 about z: (x, y, z) -> (-y, x, z).
inline CartesianSpin rotated_phase_vector(BitPair alpha) {
  const auto r = discrete_phase_vector(alpha);
  return {-r.sy, r.sx, r.sz};
}

/// Weights 1/4 (1 + r . b) of a state over a four-point set.
inline std::array<double, 4> point_set_weights(const std::array<double, 3>& b, bool rotated) {
  std::array<double, 4> w{};
  for (auto a : kAllBitPairs) {
    const auto r = rotated ? rotated_phase_vector(a) : discrete_phase_vector(a);
    w[static_cast<std::size_t>(a.index())] = 0.25 * (1.0 + r.sx * b[0] + r.sy * b[1] + r.sz * b[2]);
  }
  return w;
}

namespace detail {

inline bool non_negative(const std::array<double, 4>& w) {
  for (double v : w) {
    if (v < -1e-12) return false;
  }
  return true;
}

inline int draw_index(const std::array<double, 4>& w, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = 0;
  for (int k = 0; k < 4; ++k) {
    const double p = std::max(0.0, w[static_cast<std::size_t>(k)]);
    if (p <= 0.0) continue;
    last = k;
    acc += p;
    if (u < acc) return k;
  }
  return last;
}

/// Rotation matrix R with R (0, 0, -1) = n.
inline std::array<std::array<double, 3>, 3> rotation_from_down(const std::array<double, 3>& n) {
  if (n[2] <= -1.0 + 1e-15) return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (n[2] >= 1.0 - 1e-15) return {{{1, 0, 0}, {0, -1, 0}, {0, 0, -1}}};
  // axis k = (-z) x n normalized, angle = acos(-n_z)
  const double kx = n[1], ky = -n[0];
  const double s = std::hypot(kx, ky);
  const double ux = kx / s, uy = ky / s;
  const double c = -n[2];
  const double sn = s;  // sin(angle) = |(-z) x n|
  const double t = 1.0 - c;
  return {{{t * ux * ux + c, t * ux * uy, sn * uy},
           {t * ux * uy, t * uy * uy + c, -sn * ux},
           {-sn * uy, sn * ux, c}}};
}

inline CartesianSpin rotate(const std::array<std::array<double, 3>, 3>& r, const CartesianSpin& v) {
  return {r[0][0] * v.sx + r[0][1] * v.sy + r[0][2] * v.sz, r[1][0] * v.sx + r[1][1] * v.sy + r[1][2] * v.sz,
          r[2][0] * v.sx + r[2][1] * v.sy + r[2][2] * v.sz};
}

/// Sample for a pure state with unit Bloch vector n.
inline CartesianSpin sample_pure(const std::array<double, 3>& n, SamplingScheme scheme, Rng& rng) {
  if (scheme == SamplingScheme::TwoPoint) {
    const auto w = point_set_weights(n, false);
    if (non_negative(w)) return discrete_phase_vector(BitPair::from_index(draw_index(w, rng)));
    const auto wr = point_set_weights(n, true);
    if (non_negative(wr)) return rotated_phase_vector(BitPair::from_index(draw_index(wr, rng)));
  }
  CartesianSpin local;
  switch (scheme) {
    case SamplingScheme::TwoPoint: {
      // the two points of |down> with anti-correlated x and y signs
      const bool first = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
      local = first ? CartesianSpin{1.0, -1.0, -1.0} : CartesianSpin{-1.0, 1.0, -1.0};
      break;
    }
    case SamplingScheme::FourPoint: {
      const int k = std::uniform_int_distribution<int>(0, 3)(rng);
      local = {(k & 1) ? -1.0 : 1.0, (k & 2) ? -1.0 : 1.0, -1.0};
      break;
    }
    case SamplingScheme::ContinuousRing: {
      const double psi = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
      local = {std::sqrt(2.0) * std::cos(psi), std::sqrt(2.0) * std::sin(psi), -1.0};
      break;
    }
  }
  return rotate(rotation_from_down(n), local);
}

}  // namespace detail

/// One phase-space sample of a single spin, as a Cartesian vector of norm sqrt(3).
inline CartesianSpin sample_spin(const SpinState& state, SamplingScheme scheme, Rng& rng) {
  const SpinState::Component* pick = &state.components.front();
  if (state.components.size() > 1) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    for (const auto& c : state.components) {
      acc += c.weight;
      pick = &c;
      if (u < acc) break;
    }
  }
  return detail::sample_pure(pick->bloch, scheme, rng);
}

/// Sample from the discrete Wigner function of rho on the original point set,
/// falling back to the z-rotated set. Throws NegativeWeight if both have a
/// negative weight.
inline CartesianSpin sample_discrete(const Mat2& rho, Rng& rng) {
  validate_density_matrix(rho);
  const auto b = bloch_vector(rho);
  const auto w = point_set_weights(b, false);
  if (detail::non_negative(w)) return discrete_phase_vector(BitPair::from_index(detail::draw_index(w, rng)));
  const auto wr = point_set_weights(b, true);
  if (detail::non_negative(wr)) return rotated_phase_vector(BitPair::from_index(detail::draw_index(wr, rng)));
  throw Error(ErrorCode::NegativeWeight, "state has negative weights on every discrete point set");
}

/// Per-site Cartesian samples for one trajectory of a product state.
inline std::vector<CartesianSpin> sample_configuration(const std::vector<SpinState>& sites, SamplingScheme scheme,
                                                       Rng& rng) {
  std::vector<CartesianSpin> out;
  out.reserve(sites.size());
  for (const auto& s : sites) out.push_back(sample_spin(s, scheme, rng));
  return out;
}

/// `count` angular configurations; configuration k is drawn from trajectory_rng(seed, k).
inline std::vector<std::vector<AngularCoordinate>> sample_initial(const std::vector<SpinState>& sites,
                                                                  SamplingScheme scheme, std::size_t count,
                                                                  std::uint64_t seed) {
  std::vector<std::vector<AngularCoordinate>> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    Rng rng = trajectory_rng(seed, k);
    for (const auto& s : sample_configuration(sites, scheme, rng)) out[k].push_back(angles_from_cartesian(s, 1e-9));
  }
  return out;
}

}  // namespace dctwa
