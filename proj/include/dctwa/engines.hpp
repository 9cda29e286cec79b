#pragma once

// Semiclassical dynamics: mean field, Cartesian DTWA, angular DCTWA and the
// OSDTWA jump scheme, plus the ensemble driver and its deterministic reduction.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dctwa/error.hpp"
#include "dctwa/model.hpp"
#include "dctwa/phase_space.hpp"
#include "dctwa/sampling.hpp"

namespace dctwa {

using Vec3 = std::array<double, 3>;

inline constexpr double kThetaClamp = 1e-6;

enum class Engine { MeanField, DTWA, DCTWA, OSDTWA, Exact };

inline const char* to_string(Engine e) {
  switch (e) {
    case Engine::MeanField: return "mean_field";
    case Engine::DTWA: return "dtwa";
    case Engine::DCTWA: return "dctwa";
    case Engine::OSDTWA: return "osdtwa";
    case Engine::Exact: return "exact";
  }
  return "?";
}

/// Per-site coefficients of the mean field h_n = dH/ds_n derived from a model.
/// h_n = field_n + z_hat * (zconst_n + sum_links w * s_other^z).
struct CompiledModel {
  struct Link {
    int other = 0;
    double w = 0.0;
  };
  int n = 0;
  std::vector<Vec3> field;
  std::vector<double> zconst;
  std::vector<std::vector<Link>> links;
  std::vector<double> kappa, decay, pump;
  bool any_dephasing = false, any_decay = false, any_pump = false;

  explicit CompiledModel(const LindbladModel& m) {
    m.validate();
    n = m.n_spins;
    const auto un = static_cast<std::size_t>(n);
    field.assign(un, Vec3{0.0, 0.0, 0.0});
    zconst.assign(un, 0.0);
    links.assign(un, {});
    kappa.assign(un, 0.0);
    decay.assign(un, 0.0);
    pump.assign(un, 0.0);
    for (const auto& f : m.fields) field[static_cast<std::size_t>(f.site)][static_cast<std::size_t>(f.axis)] += f.coeff;
    auto add_link = [&](int a, int b, double w) {
      auto& l = links[static_cast<std::size_t>(a)];
      for (auto& x : l) {
        if (x.other == b) {
          x.w += w;
          return;
        }
      }
      l.push_back({b, w});
    };
    for (const auto& t : m.zz) {
      add_link(t.i, t.j, t.coeff);
      add_link(t.j, t.i, t.coeff);
    }
    // c (1 + s_i^z)(1 + s_j^z) / 4
    for (const auto& t : m.projectors) {
      zconst[static_cast<std::size_t>(t.i)] += 0.25 * t.coeff;
      zconst[static_cast<std::size_t>(t.j)] += 0.25 * t.coeff;
      add_link(t.i, t.j, 0.25 * t.coeff);
      add_link(t.j, t.i, 0.25 * t.coeff);
    }
    for (const auto& c : m.channels) {
      const auto s = static_cast<std::size_t>(c.site);
      switch (c.kind) {
        case ChannelKind::Dephasing: kappa[s] += c.rate; break;
        case ChannelKind::Decay: decay[s] += c.rate; break;
        case ChannelKind::Pump: pump[s] += c.rate; break;
      }
    }
    for (std::size_t s = 0; s < un; ++s) {
      any_dephasing = any_dephasing || kappa[s] > 0.0;
      any_decay = any_decay || decay[s] > 0.0;
      any_pump = any_pump || pump[s] > 0.0;
    }
  }

  /// h for site k given all z components.
  Vec3 mean_field(std::size_t k, const double* sz) const {
    Vec3 h = field[k];
    double hz = zconst[k];
    for (const auto& l : links[k]) hz += l.w * sz[l.other];
    h[2] += hz;
    return h;
  }
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Vec3 to_vec(const CartesianSpin& s) { return {s.sx, s.sy, s.sz}; }
inline CartesianSpin to_spin(const Vec3& v) { return {v[0], v[1], v[2]}; }

// ---------------------------------------------------------------------------
// Cartesian (DTWA / mean-field) drift

namespace detail {

inline void hamiltonian_drift(const CompiledModel& cm, const std::vector<Vec3>& s, std::vector<Vec3>& ds,
                              std::vector<double>& sz) {
  const auto n = static_cast<std::size_t>(cm.n);
  sz.resize(n);
  ds.resize(n);
  for (std::size_t k = 0; k < n; ++k) sz[k] = s[k][2];
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 c = cross(cm.mean_field(k, sz.data()), s[k]);
    ds[k] = {2.0 * c[0], 2.0 * c[1], 2.0 * c[2]};
  }
}

}  // namespace detail

/// ds_n/dt = 2 h_n x s_n with h_n = dH_W/ds_n; Hamiltonian part only.
inline std::vector<Vec3> dtwa_drift(const std::vector<CartesianSpin>& state, const LindbladModel& model) {
  if (static_cast<int>(state.size()) != model.n_spins) throw Error(ErrorCode::DimensionMismatch, "state size");
  const CompiledModel cm(model);
  std::vector<Vec3> s, ds;
  std::vector<double> sz;
  for (const auto& x : state) s.push_back(to_vec(x));
  detail::hamiltonian_drift(cm, s, ds, sz);
  return ds;
}

// ---------------------------------------------------------------------------
// Angular (DCTWA) drift and diffusion

struct AngularDrift {
  double a_theta = 0.0;
  double a_phi = 0.0;
  double b_phi = 0.0;
};

namespace detail {

/// With dissipative_theta = false the decay/pump part of A_theta is left out
/// (it is then applied separately by relax_theta).
inline void angular_drift(const CompiledModel& cm, const double* theta, const double* phi, AngularDrift* out,
                          std::vector<double>& sz, bool dissipative_theta = true) {
  const auto n = static_cast<std::size_t>(cm.n);
  sz.resize(2 * n);
  double* cos_theta = sz.data() + n;
  for (std::size_t k = 0; k < n; ++k) {
    cos_theta[k] = std::cos(theta[k]);
    sz[k] = -kSqrt3 * cos_theta[k];
  }
  constexpr double inv_sqrt3 = 1.0 / kSqrt3;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 h = cm.mean_field(k, sz.data());
    const double st = std::sin(theta[k]);
    const double ct = cos_theta[k];
    const double sp = std::sin(phi[k]);
    const double cp = std::cos(phi[k]);
    const double csc = 1.0 / st;
    const double cot = ct * csc;
    double at = -2.0 * h[0] * sp - 2.0 * h[1] * cp;
    const double ap = -2.0 * h[0] * cot * cp + 2.0 * h[1] * cot * sp - 2.0 * h[2];
    double b2 = 4.0 * cm.kappa[k];
    if (cm.decay[k] > 0.0) {
      if (dissipative_theta) at += cm.decay[k] * (cot - csc * inv_sqrt3);
      b2 += cm.decay[k] * (1.0 + 2.0 * cot * cot - 2.0 * cot * csc * inv_sqrt3);
    }
    if (cm.pump[k] > 0.0) {
      if (dissipative_theta) at += cm.pump[k] * (cot + csc * inv_sqrt3);
      b2 += cm.pump[k] * (1.0 + 2.0 * cot * cot + 2.0 * cot * csc * inv_sqrt3);
    }
    out[k] = {at, ap, std::sqrt(std::max(0.0, b2))};
  }
}

inline void check_theta(double theta) {
  if (!(theta > 0.0 && theta < kPi)) {
    throw Error(ErrorCode::SingularCoordinate, "theta = " + std::to_string(theta) + " outside (0, pi)");
  }
}

}  // namespace detail

/// Per-spin (A_theta, A_phi, B_phi) of the truncated angular SDE.
inline std::vector<AngularDrift> dctwa_drift_diffusion(const std::vector<AngularCoordinate>& state,
                                                       const LindbladModel& model) {
  if (static_cast<int>(state.size()) != model.n_spins) throw Error(ErrorCode::DimensionMismatch, "state size");
  const CompiledModel cm(model);
  std::vector<double> th, ph, sz;
  for (const auto& c : state) {
    detail::check_theta(c.theta);
    th.push_back(c.theta);
    ph.push_back(c.phi);
  }
  std::vector<AngularDrift> out(state.size());
  detail::angular_drift(cm, th.data(), ph.data(), out.data(), sz);
  return out;
}

/// Maps theta back into [eps, pi - eps]. Excursions past a pole continue on
/// the sphere (theta -> -theta, phi -> phi + pi); the band edge reflects.
inline void clamp_angles(double& theta, double& phi, double eps = kThetaClamp) {
  if (theta < 0.0) {
    theta = -theta;
    phi += kPi;
  } else if (theta > kPi) {
    theta = kTwoPi - theta;
    phi += kPi;
  }
  if (theta < eps) theta = std::min(2.0 * eps - theta, kPi - eps);
  if (theta > kPi - eps) theta = std::max(2.0 * (kPi - eps) - theta, eps);
  if (phi < 0.0 && phi >= -kTwoPi) {
    phi += kTwoPi;
  } else if (phi >= kTwoPi && phi < 2.0 * kTwoPi) {
    phi -= kTwoPi;
  }
  if (!(phi >= 0.0 && phi < kTwoPi)) phi = wrap_phi(phi);
}

/// Exact flow of the decay/pump theta drift over dt. In s_z = -sqrt3 cos(theta)
/// that drift is linear: ds_z = [-gamma (1 + s_z) + pump (1 - s_z)] dt.
inline double relax_theta(double theta, double decay, double pump, double dt) {
  const double rate = decay + pump;
  if (rate <= 0.0) return theta;
  const double target = (pump - decay) / rate;
  const double sz = target + (-kSqrt3 * std::cos(theta) - target) * std::exp(-rate * dt);
  return std::acos(std::clamp(-sz / kSqrt3, -1.0, 1.0));
}

/// Ito Euler-Maruyama step, noise on phi only.
inline AngularCoordinate step_euler_maruyama(AngularCoordinate c, const AngularDrift& d, double dt, Rng& rng) {
  std::normal_distribution<double> normal;
  double th = c.theta + d.a_theta * dt;
  double ph = c.phi + d.a_phi * dt;
  if (d.b_phi != 0.0) ph += d.b_phi * std::sqrt(dt) * normal(rng);
  clamp_angles(th, ph);
  return {th, ph};
}

// ---------------------------------------------------------------------------
// Cartesian dephasing and OSDTWA

/// Euler-Maruyama step of ds_x = -2 s_x dtau - 2 s_y dW, ds_y = -2 s_y dtau + 2 s_x dW
/// in the rescaled time tau = kappa t, where kappa is the rate of sqrt(kappa) sigma^z.
inline CartesianSpin cartesian_dephasing_step(CartesianSpin s, double kappa, double dt, Rng& rng) {
  if (kappa <= 0.0) return s;
  const double dtau = kappa * dt;
  const double dw = std::sqrt(dtau) * std::normal_distribution<double>()(rng);
  return {s.sx - 2.0 * s.sx * dtau - 2.0 * s.sy * dw, s.sy - 2.0 * s.sy * dtau + 2.0 * s.sx * dw, s.sz};
}

/// (S^x, S^y, S^z, S^0) of one spin.
struct OsdtwaState {
  double sx = 0.0, sy = 0.0, sz = -1.0, s0 = 1.0;
};

/// gamma / 2 (S^0 + S^z), before clamping.
inline double osdtwa_jump_probability(const OsdtwaState& s, double gamma) { return 0.5 * gamma * (s.s0 + s.sz); }

/// Explicit Euler step of the four equations for H = h . sigma with decay gamma.
inline OsdtwaState osdtwa_deterministic_step(const OsdtwaState& s, const Vec3& h, double gamma, double dt) {
  const Vec3 c = cross(h, {s.sx, s.sy, s.sz});
  const double loss = 0.5 * gamma * (s.s0 + s.sz);
  return {s.sx + dt * (2.0 * c[0] - 0.5 * gamma * s.sx), s.sy + dt * (2.0 * c[1] - 0.5 * gamma * s.sy),
          s.sz + dt * (2.0 * c[2] - loss), s.s0 - dt * loss};
}

struct OsdtwaStepInfo {
  double raw_probability = 0.0;  // gamma/2 (S^0 + S^z) after the deterministic step
  bool jumped = false;
};

/// Deterministic step, then a decay jump with probability max(0, dp) dt. The
/// post-jump state is (0, 0, -1, 1); without a jump the quadruple is rescaled
/// so that S^0 = 1.
inline OsdtwaState osdtwa_step(const OsdtwaState& s, const Vec3& h, double gamma, double dt, Rng& rng,
                               OsdtwaStepInfo* info = nullptr) {
  OsdtwaState next = osdtwa_deterministic_step(s, h, gamma, dt);
  const double dp = osdtwa_jump_probability(next, gamma);
  bool jumped = false;
  if (gamma > 0.0) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    jumped = u < std::max(0.0, dp) * dt;
  }
  if (info != nullptr) *info = {dp, jumped};
  if (jumped) return {0.0, 0.0, -1.0, 1.0};
  if (next.s0 > 0.0) {
    next.sx /= next.s0;
    next.sy /= next.s0;
    next.sz /= next.s0;
    next.s0 = 1.0;
  }
  return next;
}

/// Convenience overload for the single-spin model H = (g/2) sigma^x.
inline OsdtwaState osdtwa_step(const OsdtwaState& s, double g, double gamma, double dt, Rng& rng,
                               OsdtwaStepInfo* info = nullptr) {
  return osdtwa_step(s, Vec3{0.5 * g, 0.0, 0.0}, gamma, dt, rng, info);
}

// ---------------------------------------------------------------------------
// Observables and reduction

enum class ObservableKind { CollectiveX, CollectiveY, CollectiveZ, SiteZ, RydbergCorrelator };

struct Observable {
  ObservableKind kind = ObservableKind::CollectiveZ;
  int index = 0;  // site for SiteZ, distance for RydbergCorrelator

  std::string name() const {
    switch (kind) {
      case ObservableKind::CollectiveX: return "Sx";
      case ObservableKind::CollectiveY: return "Sy";
      case ObservableKind::CollectiveZ: return "Sz";
      case ObservableKind::SiteZ: return "sz_" + std::to_string(index);
      case ObservableKind::RydbergCorrelator: return "rr_corr_d" + std::to_string(index);
    }
    return "?";
  }
  friend bool operator==(const Observable&, const Observable&) = default;
};

inline std::vector<Observable> collective_observables() {
  return {{ObservableKind::CollectiveX, 0}, {ObservableKind::CollectiveY, 0}, {ObservableKind::CollectiveZ, 0}};
}

/// Site pairs (i, j) at lattice distance d.
inline std::vector<std::pair<int, int>> pairs_at_distance(int n, int d, Boundary b) {
  std::vector<std::pair<int, int>> out;
  if (d < 1 || d >= n) return out;
  if (b == Boundary::Periodic) {
    if (2 * d > n) return out;
    for (int i = 0; i < n; ++i) out.emplace_back(i, (i + d) % n);
  } else {
    for (int i = 0; i + d < n; ++i) out.emplace_back(i, i + d);
  }
  return out;
}

struct ObservableSeries {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> means;       // [observable][time]
  std::vector<std::vector<double>> std_errors;  // [observable][time]
  std::size_t n_traj = 0;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
      if (names[k] == name) return k;
    }
    throw Error(ErrorCode::InvalidArgument, "no observable named " + name);
  }
  const std::vector<double>& mean(const std::string& name) const { return means[index_of(name)]; }
  const std::vector<double>& std_error(const std::string& name) const { return std_errors[index_of(name)]; }
};

/// Running sums of a per-trajectory quantity vector q(t) and of q q^T. The
/// quantity vector is (S_x, S_y, S_z, s^z_0..s^z_{N-1}, P_1..P_D) where P_d is
/// the pair average of X_i X_j with X = (1 + s^z)/2.
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  MomentAccumulator(int n_sites, std::size_t n_times, Boundary boundary) : n_(n_sites), boundary_(boundary) {
    for (int d = 1; d < n_sites; ++d) {
      auto p = pairs_at_distance(n_sites, d, boundary);
      if (p.empty()) break;
      pairs_.push_back(std::move(p));
    }
    k_ = 3 + static_cast<std::size_t>(n_sites) + pairs_.size();
    t_ = n_times;
    sum_.assign(t_ * k_, 0.0);
    cross_.assign(t_ * k_ * k_, 0.0);
    q_.resize(k_);
  }

  int n_sites() const { return n_; }
  std::size_t n_times() const { return t_; }
  std::size_t count() const { return count_; }
  std::size_t max_distance() const { return pairs_.size(); }

  /// Adds the configuration of one trajectory at time slot t.
  void add(std::size_t t, const double* sx, const double* sy, const double* sz) {
    const auto n = static_cast<std::size_t>(n_);
    double ax = 0.0, ay = 0.0, az = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ax += sx[i];
      ay += sy[i];
      az += sz[i];
    }
    q_[0] = ax / n_;
    q_[1] = ay / n_;
    q_[2] = az / n_;
    for (std::size_t i = 0; i < n; ++i) q_[3 + i] = sz[i];
    for (std::size_t d = 0; d < pairs_.size(); ++d) {
      double acc = 0.0;
      for (const auto& [i, j] : pairs_[d]) acc += 0.25 * (1.0 + sz[i]) * (1.0 + sz[j]);
      q_[3 + n + d] = acc / static_cast<double>(pairs_[d].size());
    }
    double* s = &sum_[t * k_];
    double* c = &cross_[t * k_ * k_];
    for (std::size_t a = 0; a < k_; ++a) {
      s[a] += q_[a];
      for (std::size_t b = a; b < k_; ++b) c[a * k_ + b] += q_[a] * q_[b];
    }
  }

  void finish_trajectory() { ++count_; }

  void merge(const MomentAccumulator& o) {
    for (std::size_t k = 0; k < sum_.size(); ++k) sum_[k] += o.sum_[k];
    for (std::size_t k = 0; k < cross_.size(); ++k) cross_[k] += o.cross_[k];
    count_ += o.count_;
  }

  void clear() {
    std::fill(sum_.begin(), sum_.end(), 0.0);
    std::fill(cross_.begin(), cross_.end(), 0.0);
    count_ = 0;
  }

  /// Mean and delta-method standard error of each observable at each time.
  ObservableSeries finalize(const std::vector<double>& times, const std::vector<Observable>& obs) const {
    ObservableSeries out;
    out.times = times;
    out.n_traj = count_;
    const double n = static_cast<double>(count_);
    std::vector<double> mu(k_), grad(k_);
    for (const auto& o : obs) {
      if (o.kind == ObservableKind::SiteZ && (o.index < 0 || o.index >= n_)) {
        throw Error(ErrorCode::InvalidArgument, "site observable out of range: " + o.name());
      }
      if (o.kind == ObservableKind::RydbergCorrelator &&
          (o.index < 1 || static_cast<std::size_t>(o.index) > pairs_.size())) {
        throw Error(ErrorCode::InvalidArgument, "correlator distance out of range: " + o.name());
      }
      out.names.push_back(o.name());
      out.means.emplace_back(t_, 0.0);
      out.std_errors.emplace_back(t_, 0.0);
    }
    for (std::size_t t = 0; t < t_; ++t) {
      for (std::size_t a = 0; a < k_; ++a) mu[a] = sum_[t * k_ + a] / n;
      const double* c = &cross_[t * k_ * k_];
      auto cov = [&](std::size_t a, std::size_t b) {
        if (a > b) std::swap(a, b);
        if (count_ < 2) return 0.0;
        return (c[a * k_ + b] - n * mu[a] * mu[b]) / (n - 1.0);
      };
      for (std::size_t q = 0; q < obs.size(); ++q) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double value = 0.0;
        const auto& o = obs[q];
        switch (o.kind) {
          case ObservableKind::CollectiveX:
          case ObservableKind::CollectiveY:
          case ObservableKind::CollectiveZ: {
            const auto a = static_cast<std::size_t>(o.kind);
            value = mu[a];
            grad[a] = 1.0;
            break;
          }
          case ObservableKind::SiteZ: {
            const auto a = 3 + static_cast<std::size_t>(o.index);
            value = mu[a];
            grad[a] = 1.0;
            break;
          }
          case ObservableKind::RydbergCorrelator: {
            const auto d = static_cast<std::size_t>(o.index - 1);
            const auto& pr = pairs_[d];
            const double inv = 1.0 / static_cast<double>(pr.size());
            const std::size_t ap = 3 + static_cast<std::size_t>(n_) + d;
            value = mu[ap];
            grad[ap] = 1.0;
            for (const auto& [i, j] : pr) {
              const double xi = 0.5 * (1.0 + mu[3 + static_cast<std::size_t>(i)]);
              const double xj = 0.5 * (1.0 + mu[3 + static_cast<std::size_t>(j)]);
              value -= inv * xi * xj;
              grad[3 + static_cast<std::size_t>(i)] -= inv * 0.5 * xj;
              grad[3 + static_cast<std::size_t>(j)] -= inv * 0.5 * xi;
            }
            break;
          }
        }
        double var = 0.0;
        for (std::size_t a = 0; a < k_; ++a) {
          if (grad[a] == 0.0) continue;
          for (std::size_t b = 0; b < k_; ++b) {
            if (grad[b] != 0.0) var += grad[a] * grad[b] * cov(a, b);
          }
        }
        out.means[q][t] = value;
        out.std_errors[q][t] = count_ > 1 ? std::sqrt(std::max(0.0, var) / n) : 0.0;
      }
    }
    return out;
  }

 private:
  int n_ = 0;
  Boundary boundary_ = Boundary::Periodic;
  std::size_t k_ = 0, t_ = 0, count_ = 0;
  std::vector<std::vector<std::pair<int, int>>> pairs_;
  std::vector<double> sum_, cross_, q_;
};

// ---------------------------------------------------------------------------
// Ensemble driver

struct EnsembleConfig {
  Engine engine = Engine::DCTWA;
  SamplingScheme scheme = SamplingScheme::ContinuousRing;
  std::size_t n_traj = 1000;
  double dt = 1e-3;
  double t_max = 1.0;
  double output_dt = 0.1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Boundary geometry = Boundary::Periodic;  // pair definition for correlators
  // DCTWA: integrate the decay/pump theta drift exactly after each
  // Euler-Maruyama step instead of inside it
  bool split_dissipation = true;
};

struct TimeGrid {
  std::size_t n_steps = 0;
  std::size_t stride = 1;
  std::vector<double> times;
};

inline TimeGrid make_time_grid(double dt, double t_max, double output_dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  if (!(t_max >= 0.0)) throw Error(ErrorCode::InvalidArgument, "t_max must be non-negative");
  if (!(output_dt >= dt)) throw Error(ErrorCode::InvalidArgument, "output_dt must be >= dt");
  TimeGrid g;
  const double stride = output_dt / dt;
  g.stride = static_cast<std::size_t>(std::llround(stride));
  if (std::abs(stride - static_cast<double>(g.stride)) > 1e-6 * stride) {
    throw Error(ErrorCode::InvalidArgument, "output_dt must be a multiple of dt");
  }
  const double outs = t_max / output_dt;
  const auto n_out = static_cast<std::size_t>(std::llround(outs));
  if (std::abs(outs - static_cast<double>(n_out)) > 1e-6 * std::max(1.0, outs)) {
    throw Error(ErrorCode::InvalidArgument, "t_max must be a multiple of output_dt");
  }
  g.n_steps = n_out * g.stride;
  for (std::size_t k = 0; k <= n_out; ++k) g.times.push_back(static_cast<double>(k * g.stride) * dt);
  return g;
}

/// Rejects engine/channel combinations without a valid stochastic description.
inline void check_engine_channels(Engine e, const LindbladModel& m) {
  if (e == Engine::DTWA && (m.has_channel(ChannelKind::Decay) || m.has_channel(ChannelKind::Pump))) {
    throw Error(ErrorCode::UnsupportedChannel,
                "Cartesian DTWA has no positive diffusion for decay or pump; use dctwa or osdtwa");
  }
  if (e == Engine::OSDTWA && (m.has_channel(ChannelKind::Dephasing) || m.has_channel(ChannelKind::Pump))) {
    throw Error(ErrorCode::UnsupportedChannel, "osdtwa supports decay only");
  }
}

namespace detail {

struct Workspace {
  std::vector<double> th, ph, sz_buf, sx, sy, sz;
  std::vector<AngularDrift> drift;
  std::vector<Vec3> s, k1, k2, k3, k4, tmp;
  std::vector<OsdtwaState> os;
};

inline void record_cartesian(MomentAccumulator& acc, std::size_t slot, Workspace& w, const std::vector<Vec3>& s) {
  const std::size_t n = s.size();
  w.sx.resize(n);
  w.sy.resize(n);
  w.sz.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.sx[i] = s[i][0];
    w.sy[i] = s[i][1];
    w.sz[i] = s[i][2];
  }
  acc.add(slot, w.sx.data(), w.sy.data(), w.sz.data());
}

inline void record_angles(MomentAccumulator& acc, std::size_t slot, Workspace& w) {
  const std::size_t n = w.th.size();
  w.sx.resize(n);
  w.sy.resize(n);
  w.sz.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double st = std::sin(w.th[i]);
    w.sx[i] = kSqrt3 * st * std::cos(w.ph[i]);
    w.sy[i] = -kSqrt3 * st * std::sin(w.ph[i]);
    w.sz[i] = -kSqrt3 * std::cos(w.th[i]);
  }
  acc.add(slot, w.sx.data(), w.sy.data(), w.sz.data());
}

/// Classical RK4 step of the Hamiltonian flow ds/dt = 2 h x s.
inline void rk4_step(const CompiledModel& cm, std::vector<Vec3>& s, double dt, Workspace& w) {
  const std::size_t n = s.size();
  auto axpy = [&](const std::vector<Vec3>& k, double a) {
    w.tmp.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) w.tmp[i][c] = s[i][c] + a * k[i][c];
    }
  };
  hamiltonian_drift(cm, s, w.k1, w.sz_buf);
  axpy(w.k1, 0.5 * dt);
  hamiltonian_drift(cm, w.tmp, w.k2, w.sz_buf);
  axpy(w.k2, 0.5 * dt);
  hamiltonian_drift(cm, w.tmp, w.k3, w.sz_buf);
  axpy(w.k3, dt);
  hamiltonian_drift(cm, w.tmp, w.k4, w.sz_buf);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) s[i][c] += dt / 6.0 * (w.k1[i][c] + 2.0 * w.k2[i][c] + 2.0 * w.k3[i][c] + w.k4[i][c]);
  }
}

/// Mean-field Bloch dissipation for the single-site channels, Euler-free
/// exact relaxation over dt.
inline void bloch_dissipation(const CompiledModel& cm, std::vector<Vec3>& s, double dt) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double g = cm.decay[i], p = cm.pump[i], k = cm.kappa[i];
    const double transverse = std::exp(-(0.5 * (g + p) + 2.0 * k) * dt);
    s[i][0] *= transverse;
    s[i][1] *= transverse;
    if (g + p > 0.0) {
      const double target = (p - g) / (g + p);
      s[i][2] = target + (s[i][2] - target) * std::exp(-(g + p) * dt);
    }
  }
}

inline void run_trajectory(const CompiledModel& cm, const std::vector<SpinState>& initial, const EnsembleConfig& cfg,
                           const TimeGrid& grid, std::uint64_t index, MomentAccumulator& acc, Workspace& w) {
  Rng rng = trajectory_rng(cfg.seed, index);
  const auto n = static_cast<std::size_t>(cm.n);
  const std::vector<CartesianSpin> start = sample_configuration(initial, cfg.scheme, rng);
  std::normal_distribution<double> normal;
  const double sqdt = std::sqrt(cfg.dt);

  switch (cfg.engine) {
    case Engine::DCTWA: {
      w.th.resize(n);
      w.ph.resize(n);
      w.drift.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = angles_from_cartesian(start[i], 1e-9);
        w.th[i] = c.theta;
        w.ph[i] = c.phi;
        clamp_angles(w.th[i], w.ph[i]);
      }
      record_angles(acc, 0, w);
      const bool split = cfg.split_dissipation && (cm.any_decay || cm.any_pump);
      for (std::size_t step = 1; step <= grid.n_steps; ++step) {
        angular_drift(cm, w.th.data(), w.ph.data(), w.drift.data(), w.sz_buf, !split);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& d = w.drift[i];
          w.th[i] += d.a_theta * cfg.dt;
          w.ph[i] += d.a_phi * cfg.dt;
          if (d.b_phi != 0.0) w.ph[i] += d.b_phi * sqdt * normal(rng);
          clamp_angles(w.th[i], w.ph[i]);
          if (split) {
            w.th[i] = relax_theta(w.th[i], cm.decay[i], cm.pump[i], cfg.dt);
            clamp_angles(w.th[i], w.ph[i]);
          }
        }
        if (step % grid.stride == 0) record_angles(acc, step / grid.stride, w);
      }
      break;
    }
    case Engine::DTWA:
    case Engine::MeanField: {
      w.s.resize(n);
      for (std::size_t i = 0; i < n; ++i) w.s[i] = to_vec(start[i]);
      if (cfg.engine == Engine::MeanField) {
        for (std::size_t i = 0; i < n; ++i) w.s[i] = initial[i].bloch();
      }
      record_cartesian(acc, 0, w, w.s);
      for (std::size_t step = 1; step <= grid.n_steps; ++step) {
        if (cfg.engine == Engine::MeanField) {
          // Strang splitting
          bloch_dissipation(cm, w.s, 0.5 * cfg.dt);
          rk4_step(cm, w.s, cfg.dt, w);
          bloch_dissipation(cm, w.s, 0.5 * cfg.dt);
        } else {
          rk4_step(cm, w.s, cfg.dt, w);
        }
        if (cfg.engine == Engine::DTWA && cm.any_dephasing) {
          for (std::size_t i = 0; i < n; ++i) {
            w.s[i] = to_vec(cartesian_dephasing_step(to_spin(w.s[i]), cm.kappa[i], cfg.dt, rng));
          }
        }
        if (step % grid.stride == 0) record_cartesian(acc, step / grid.stride, w, w.s);
      }
      break;
    }
    case Engine::OSDTWA: {
      w.os.resize(n);
      w.s.resize(n);
      w.sz_buf.resize(n);
      for (std::size_t i = 0; i < n; ++i) w.os[i] = {start[i].sx, start[i].sy, start[i].sz, 1.0};
      auto record = [&](std::size_t slot) {
        for (std::size_t i = 0; i < n; ++i) w.s[i] = {w.os[i].sx, w.os[i].sy, w.os[i].sz};
        record_cartesian(acc, slot, w, w.s);
      };
      record(0);
      std::vector<OsdtwaState> next(n);
      for (std::size_t step = 1; step <= grid.n_steps; ++step) {
        for (std::size_t i = 0; i < n; ++i) w.sz_buf[i] = w.os[i].sz;
        for (std::size_t i = 0; i < n; ++i) {
          next[i] = osdtwa_step(w.os[i], cm.mean_field(i, w.sz_buf.data()), cm.decay[i], cfg.dt, rng);
        }
        w.os.swap(next);
        if (step % grid.stride == 0) record(step / grid.stride);
      }
      break;
    }
    case Engine::Exact:
      throw Error(ErrorCode::InvalidArgument, "exact engine is not an ensemble engine");
  }
  acc.finish_trajectory();
}

}  // namespace detail

inline constexpr std::size_t kReductionBlock = 64;

/// Runs cfg.n_traj trajectories and reduces them in fixed blocks of
/// kReductionBlock, merged in block order, so the result does not depend on
/// cfg.threads.
inline ObservableSeries run_ensemble(const LindbladModel& model, const std::vector<SpinState>& initial,
                                     const EnsembleConfig& cfg, const std::vector<Observable>& observables) {
  if (static_cast<int>(initial.size()) != model.n_spins) {
    throw Error(ErrorCode::DimensionMismatch, "initial state has " + std::to_string(initial.size()) +
                                                  " sites, model has " + std::to_string(model.n_spins));
  }
  if (cfg.n_traj < 1) throw Error(ErrorCode::InvalidArgument, "n_traj must be >= 1");
  check_engine_channels(cfg.engine, model);
  const CompiledModel cm(model);
  const TimeGrid grid = make_time_grid(cfg.dt, cfg.t_max, cfg.output_dt);
  const std::size_t n_traj = cfg.engine == Engine::MeanField ? 1 : cfg.n_traj;

  MomentAccumulator total(model.n_spins, grid.times.size(), cfg.geometry);
  const std::size_t n_blocks = (n_traj + kReductionBlock - 1) / kReductionBlock;
  const unsigned threads = std::max(1U, std::min<unsigned>(cfg.threads, static_cast<unsigned>(n_blocks)));
  const std::size_t wave = static_cast<std::size_t>(threads) * 2;
  std::vector<MomentAccumulator> blocks(std::min(wave, n_blocks),
                                        MomentAccumulator(model.n_spins, grid.times.size(), cfg.geometry));

  for (std::size_t first = 0; first < n_blocks; first += wave) {
    const std::size_t count = std::min(wave, n_blocks - first);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&]() {
      detail::Workspace w;
      for (;;) {
        const std::size_t b = next.fetch_add(1);
        if (b >= count) return;
        MomentAccumulator& acc = blocks[b];
        acc.clear();
        const std::size_t lo = (first + b) * kReductionBlock;
        const std::size_t hi = std::min(n_traj, lo + kReductionBlock);
        try {
          for (std::size_t k = lo; k < hi; ++k) detail::run_trajectory(cm, initial, cfg, grid, k, acc, w);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    for (std::size_t b = 0; b < count; ++b) total.merge(blocks[b]);
  }
  return total.finalize(grid.times, observables);
}

/// Single deterministic trajectory from the exact initial expectation values.
inline ObservableSeries mean_field_run(const LindbladModel& model, const std::vector<SpinState>& initial,
                                       EnsembleConfig cfg, const std::vector<Observable>& observables) {
  cfg.engine = Engine::MeanField;
  cfg.n_traj = 1;
  return run_ensemble(model, initial, cfg, observables);
}

}  // namespace dctwa
