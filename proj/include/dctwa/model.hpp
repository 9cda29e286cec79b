#pragma once

// Lindblad model description shared by the exact integrator and the
// semiclassical engines. Hamiltonian terms are restricted to what both sides
// can represent: local Pauli fields, sigma^z sigma^z couplings and products
// of Rydberg projectors sigma^rr = (1 + sigma^z) / 2.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dctwa/error.hpp"

namespace dctwa {

enum class Axis { X = 0, Y = 1, Z = 2 };

/// coeff * sigma^axis_site
struct FieldTerm {
  int site = 0;
  Axis axis = Axis::X;
  double coeff = 0.0;
};

/// coeff * sigma^z_i sigma^z_j, i != j
struct ZZTerm {
  int i = 0;
  int j = 1;
  double coeff = 0.0;
};

/// coeff * sigma^rr_i sigma^rr_j, i != j
struct ProjectorTerm {
  int i = 0;
  int j = 1;
  double coeff = 0.0;
};

enum class ChannelKind { Dephasing, Decay, Pump };

/// Jump operator sqrt(rate) * {sigma^z, sigma^-, sigma^+} on one site.
struct Channel {
  ChannelKind kind = ChannelKind::Decay;
  int site = 0;
  double rate = 0.0;
};

inline const char* to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::Dephasing: return "dephasing";
    case ChannelKind::Decay: return "decay";
    case ChannelKind::Pump: return "pump";
  }
  return "?";
}

enum class Boundary { Periodic, Open };

inline const char* to_string(Boundary b) { return b == Boundary::Periodic ? "periodic" : "open"; }

struct LindbladModel {
  int n_spins = 1;
  std::vector<FieldTerm> fields;
  std::vector<ZZTerm> zz;
  std::vector<ProjectorTerm> projectors;
  std::vector<Channel> channels;

  void validate() const {
    if (n_spins < 1) throw Error(ErrorCode::InvalidArgument, "n_spins must be >= 1");
    auto check_site = [&](int s) {
      if (s < 0 || s >= n_spins) throw Error(ErrorCode::InvalidArgument, "site " + std::to_string(s) + " out of range");
    };
    for (const auto& f : fields) check_site(f.site);
    for (const auto& t : zz) {
      check_site(t.i);
      check_site(t.j);
      if (t.i == t.j) throw Error(ErrorCode::InvalidArgument, "zz term on a single site");
    }
    for (const auto& t : projectors) {
      check_site(t.i);
      check_site(t.j);
      if (t.i == t.j) throw Error(ErrorCode::InvalidArgument, "projector term on a single site");
    }
    for (const auto& c : channels) {
      check_site(c.site);
      if (!(c.rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative channel rate");
    }
  }

  bool has_channel(ChannelKind k) const {
    for (const auto& c : channels) {
      if (c.kind == k && c.rate > 0.0) return true;
    }
    return false;
  }

  /// Canonical text form; the checksum is computed from it.
  std::string canonical() const {
    std::ostringstream os;
    os << std::setprecision(17) << "n=" << n_spins << ";";
    for (const auto& f : fields) os << "f" << f.site << ":" << static_cast<int>(f.axis) << ":" << f.coeff << ";";
    for (const auto& t : zz) os << "zz" << t.i << "," << t.j << ":" << t.coeff << ";";
    for (const auto& t : projectors) os << "rr" << t.i << "," << t.j << ":" << t.coeff << ";";
    for (const auto& c : channels) os << "L" << static_cast<int>(c.kind) << "@" << c.site << ":" << c.rate << ";";
    return os.str();
  }

  /// 64-bit FNV-1a of canonical().
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

inline std::string checksum_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Lattice distance on a chain; minimum image for periodic boundaries.
inline int lattice_distance(int m, int n, int n_sites, Boundary b) {
  const int d = std::abs(m - n);
  return b == Boundary::Periodic ? std::min(d, n_sites - d) : d;
}

struct RydbergParams {
  int n = 1;
  double omega = 0.3;
  double j = 1.0;
  double alpha = 6.0;
  Boundary boundary = Boundary::Periodic;
  double gamma = 0.0;
  double kappa = 0.0;
};

/// H = omega sum_n sigma^x_n + (1/2) sum_{m != n} J / |m - n|^alpha sigma^rr_m sigma^rr_n,
/// with decay sqrt(gamma) sigma^- and dephasing sqrt(kappa) sigma^z on every site.
inline LindbladModel rydberg_model(const RydbergParams& p) {
  LindbladModel m;
  m.n_spins = p.n;
  for (int s = 0; s < p.n; ++s) {
    if (p.omega != 0.0) m.fields.push_back({s, Axis::X, p.omega});
  }
  if (p.j != 0.0) {
    for (int a = 0; a < p.n; ++a) {
      for (int b = a + 1; b < p.n; ++b) {
        const int d = lattice_distance(a, b, p.n, p.boundary);
        m.projectors.push_back({a, b, p.j / std::pow(static_cast<double>(d), p.alpha)});
      }
    }
  }
  for (int s = 0; s < p.n; ++s) {
    if (p.gamma > 0.0) m.channels.push_back({ChannelKind::Decay, s, p.gamma});
    if (p.kappa > 0.0) m.channels.push_back({ChannelKind::Dephasing, s, p.kappa});
  }
  return m;
}

/// H = -(1/2) sum_{m<n} J_mn sigma^z_m sigma^z_n.
inline LindbladModel ising_model(const Eigen::MatrixXd& couplings) {
  const auto n = couplings.rows();
  if (couplings.cols() != n) throw Error(ErrorCode::AsymmetricCouplings, "coupling matrix not square");
  for (Eigen::Index a = 0; a < n; ++a) {
    if (couplings(a, a) != 0.0) throw Error(ErrorCode::AsymmetricCouplings, "non-zero diagonal coupling");
    for (Eigen::Index b = 0; b < n; ++b) {
      if (std::abs(couplings(a, b) - couplings(b, a)) > 1e-14 * (1.0 + std::abs(couplings(a, b)))) {
        throw Error(ErrorCode::AsymmetricCouplings, "J is not symmetric");
      }
    }
  }
  LindbladModel m;
  m.n_spins = static_cast<int>(n);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (couplings(a, b) != 0.0) m.zz.push_back({a, b, -0.5 * couplings(a, b)});
    }
  }
  return m;
}

inline Eigen::MatrixXd all_to_all_couplings(int n, double j) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(n, n, j);
  c.diagonal().setZero();
  return c;
}

}  // namespace dctwa
