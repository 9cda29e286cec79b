#pragma once

// Exact Lindblad integration for small spin systems. The Liouvillian is
// applied matrix-free using bit operations on the computational basis, where
// bit n of a basis index is 0 for spin up and 1 for spin down on site n.

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>
#include <json.hpp>

#include "dctwa/error.hpp"
#include "dctwa/model.hpp"
#include "dctwa/phase_space.hpp"

namespace dctwa::exact {

using DensityMatrix = Eigen::MatrixXcd;
using Operator = Eigen::MatrixXcd;

inline constexpr int kMaxSpins = 12;

inline std::size_t hilbert_dim(int n) { return std::size_t{1} << n; }

inline void check_spin_count(int n) {
  if (n > kMaxSpins) {
    throw Error(ErrorCode::DimensionTooLarge,
                std::to_string(n) + " spins exceeds the exact-oracle limit of " + std::to_string(kMaxSpins));
  }
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "need at least one spin");
}

inline void check_dim(const DensityMatrix& rho, int n) {
  const auto d = static_cast<Eigen::Index>(hilbert_dim(n));
  if (rho.rows() != d || rho.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "density matrix is " + std::to_string(rho.rows()) + "x" +
                                                  std::to_string(rho.cols()) + ", model needs " + std::to_string(d));
  }
}

inline int bit(std::size_t index, int site) { return static_cast<int>((index >> site) & 1U); }
inline double zsign(std::size_t index, int site) { return bit(index, site) == 0 ? 1.0 : -1.0; }

/// Diagonal of the zz and projector part of H in the computational basis.
inline Eigen::VectorXd diagonal_energies(const LindbladModel& m) {
  const std::size_t d = hilbert_dim(m.n_spins);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t a = 0; a < d; ++a) {
    double acc = 0.0;
    for (const auto& f : m.fields) {
      if (f.axis == Axis::Z) acc += f.coeff * zsign(a, f.site);
    }
    for (const auto& t : m.zz) acc += t.coeff * zsign(a, t.i) * zsign(a, t.j);
    for (const auto& t : m.projectors) {
      if (bit(a, t.i) == 0 && bit(a, t.j) == 0) acc += t.coeff;
    }
    e(static_cast<Eigen::Index>(a)) = acc;
  }
  return e;
}

/// Dense Hamiltonian of a model.
inline Operator build_hamiltonian(const LindbladModel& m) {
  check_spin_count(m.n_spins);
  m.validate();
  const std::size_t d = hilbert_dim(m.n_spins);
  Operator h = Operator::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  h.diagonal() = diagonal_energies(m).cast<cplx>();
  for (std::size_t a = 0; a < d; ++a) {
    for (const auto& f : m.fields) {
      const std::size_t b = a ^ (std::size_t{1} << f.site);
      const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
      if (f.axis == Axis::X) h(ia, ib) += f.coeff;
      if (f.axis == Axis::Y) h(ia, ib) += f.coeff * (bit(a, f.site) == 0 ? cplx(0, -1) : cplx(0, 1));
    }
  }
  return h;
}

inline Operator build_rydberg_hamiltonian(int n, double omega, double j, double alpha, Boundary boundary) {
  check_spin_count(n);
  RydbergParams p;
  p.n = n;
  p.omega = omega;
  p.j = j;
  p.alpha = alpha;
  p.boundary = boundary;
  return build_hamiltonian(rydberg_model(p));
}

inline Operator build_ising_hamiltonian(const Eigen::MatrixXd& couplings) {
  check_spin_count(static_cast<int>(couplings.rows()));
  return build_hamiltonian(ising_model(couplings));
}

/// Precomputed data for repeated Liouvillian application.
class Liouvillian {
 public:
  explicit Liouvillian(const LindbladModel& m) : model_(m) {
    check_spin_count(m.n_spins);
    m.validate();
    dim_ = hilbert_dim(m.n_spins);
    energies_ = diagonal_energies(m);
    for (const auto& f : m.fields) {
      if (f.axis != Axis::Z) offdiag_.push_back(f);
    }
  }

  std::size_t dim() const { return dim_; }
  const LindbladModel& model() const { return model_; }

  /// out = L[rho], both column-major dim x dim complex arrays.
  void apply(const cplx* rho, cplx* out) const {
    const std::size_t d = dim_;
    const cplx mi(0.0, -1.0);
    auto at = [&](std::size_t r, std::size_t c) { return rho[c * d + r]; };
    for (std::size_t b = 0; b < d; ++b) {
      for (std::size_t a = 0; a < d; ++a) {
        const cplx r_ab = at(a, b);
        cplx acc = mi * (energies_(static_cast<Eigen::Index>(a)) - energies_(static_cast<Eigen::Index>(b))) * r_ab;
        for (const auto& f : offdiag_) {
          const std::size_t mask = std::size_t{1} << f.site;
          // (sigma rho)_ab - (rho sigma)_ab
          cplx left = at(a ^ mask, b);
          cplx right = at(a, b ^ mask);
          if (f.axis == Axis::Y) {
            left *= bit(a, f.site) == 0 ? cplx(0, -1) : cplx(0, 1);
            right *= bit(b, f.site) == 0 ? cplx(0, 1) : cplx(0, -1);
          }
          acc += mi * f.coeff * (left - right);
        }
        for (const auto& c : model_.channels) {
          if (c.rate == 0.0) continue;
          const int ba = bit(a, c.site), bb = bit(b, c.site);
          const std::size_t mask = std::size_t{1} << c.site;
          switch (c.kind) {
            case ChannelKind::Dephasing:
              if (ba != bb) acc += -2.0 * c.rate * r_ab;
              break;
            case ChannelKind::Decay: {
              if (ba == 1 && bb == 1) acc += c.rate * at(a ^ mask, b ^ mask);
              const double p = 0.5 * ((ba == 0) + (bb == 0));
              acc -= c.rate * p * r_ab;
              break;
            }
            case ChannelKind::Pump: {
              if (ba == 0 && bb == 0) acc += c.rate * at(a ^ mask, b ^ mask);
              const double p = 0.5 * ((ba == 1) + (bb == 1));
              acc -= c.rate * p * r_ab;
              break;
            }
          }
        }
        out[b * d + a] = acc;
      }
    }
  }

 private:
  LindbladModel model_;
  std::size_t dim_ = 0;
  Eigen::VectorXd energies_;
  std::vector<FieldTerm> offdiag_;
};

/// d rho / dt under the Lindblad equation of the model.
inline DensityMatrix lindblad_rhs(const DensityMatrix& rho, const LindbladModel& model) {
  check_spin_count(model.n_spins);
  check_dim(rho, model.n_spins);
  Liouvillian l(model);
  DensityMatrix out(rho.rows(), rho.cols());
  l.apply(rho.data(), out.data());
  return out;
}

struct DensityCheck {
  double hermiticity = 0.0;
  double trace_error = 0.0;
  double min_eigenvalue = 0.0;
};

inline DensityCheck check_density(const DensityMatrix& rho, bool eigen = true) {
  DensityCheck c;
  c.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  c.trace_error = std::abs(rho.trace() - 1.0);
  if (eigen) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
    c.min_eigenvalue = es.eigenvalues().minCoeff();
  }
  return c;
}

inline void validate_density(const DensityMatrix& rho, bool eigen = true) {
  const auto c = check_density(rho, eigen);
  if (c.hermiticity > 1e-10) throw Error(ErrorCode::InvalidDensityMatrix, "not Hermitian");
  if (c.trace_error > 1e-10) throw Error(ErrorCode::InvalidDensityMatrix, "trace differs from one");
  if (eigen && c.min_eigenvalue < -1e-8) throw Error(ErrorCode::InvalidDensityMatrix, "negative eigenvalue");
}

struct EvolveOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  double initial_dt = 1e-3;
};

/// Integrates the master equation and returns rho at every time in `times`.
inline std::vector<DensityMatrix> evolve_exact(const DensityMatrix& rho0, const LindbladModel& model,
                                               const std::vector<double>& times, const EvolveOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  check_spin_count(model.n_spins);
  check_dim(rho0, model.n_spins);
  if (times.empty() || times.front() != 0.0) throw Error(ErrorCode::InvalidArgument, "time grid must start at 0");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw Error(ErrorCode::InvalidArgument, "time grid must be increasing");
  }
  validate_density(rho0, rho0.rows() <= 256);

  const Liouvillian l(model);
  const std::size_t n = 2 * l.dim() * l.dim();
  using State = std::vector<double>;
  State x(n);
  std::copy_n(reinterpret_cast<const double*>(rho0.data()), n, x.begin());

  auto rhs = [&l](const State& s, State& ds, double) {
    l.apply(reinterpret_cast<const cplx*>(s.data()), reinterpret_cast<cplx*>(ds.data()));
  };

  std::vector<DensityMatrix> out;
  out.reserve(times.size());
  const auto d = static_cast<Eigen::Index>(l.dim());
  auto observer = [&](const State& s, double t) {
    for (double v : s) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::IntegratorDivergence, "non-finite state at t = " + std::to_string(t));
      }
    }
    DensityMatrix r(d, d);
    std::copy_n(s.data(), n, reinterpret_cast<double*>(r.data()));
    out.push_back(std::move(r));
  };

  if (times.size() == 1) {
    observer(x, 0.0);
    return out;
  }
  try {
    auto stepper = odeint::make_dense_output(opt.abs_tol, opt.rel_tol, odeint::runge_kutta_dopri5<State>());
    odeint::integrate_times(stepper, rhs, x, times.begin(), times.end(), opt.initial_dt, observer);
  } catch (const odeint::step_adjustment_error& e) {
    throw Error(ErrorCode::IntegratorDivergence, e.what());
  } catch (const odeint::no_progress_error& e) {
    throw Error(ErrorCode::IntegratorDivergence, e.what());
  }
  return out;
}

/// Closed-form stationary <sigma^z> of one driven spin with decay and dephasing.
inline double steady_state_driven_spin(double omega, double gamma, double kappa) {
  const double num = gamma * kappa + 0.25 * gamma * gamma;
  const double den = 2.0 * omega * omega + num;
  if (den == 0.0) throw Error(ErrorCode::AllRatesZero, "steady state undefined without dissipation");
  return -num / den;
}

// ---------------------------------------------------------------------------
// States and observables

/// Tensor product of single-site density matrices, site 0 in the lowest bit.
inline DensityMatrix product_state(const std::vector<Mat2>& sites) {
  const int n = static_cast<int>(sites.size());
  check_spin_count(n);
  const std::size_t d = hilbert_dim(n);
  DensityMatrix rho(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t b = 0; b < d; ++b) {
    for (std::size_t a = 0; a < d; ++a) {
      cplx v = 1.0;
      for (int s = 0; s < n && v != 0.0; ++s) v *= sites[static_cast<std::size_t>(s)](bit(a, s), bit(b, s));
      rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
    }
  }
  return rho;
}

inline DensityMatrix product_state(int n, const Mat2& site) {
  return product_state(std::vector<Mat2>(static_cast<std::size_t>(n), site));
}

inline DensityMatrix pure_state(const Eigen::VectorXcd& psi) { return psi * psi.adjoint(); }

/// Tr[rho O] for a dense operator.
inline double expectation(const DensityMatrix& rho, const Operator& o) {
  if (o.rows() != rho.rows() || o.cols() != rho.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "operator and density matrix differ in size");
  }
  return (rho * o).trace().real();
}

/// Tr[rho prod_k O_k] for single-site operators on distinct sites.
inline double product_expectation(const DensityMatrix& rho, int n, const std::vector<std::pair<int, Mat2>>& ops) {
  check_dim(rho, n);
  for (const auto& [s, op] : ops) {
    if (s < 0 || s >= n) throw Error(ErrorCode::DimensionMismatch, "site " + std::to_string(s) + " out of range");
  }
  const std::size_t d = hilbert_dim(n);
  const std::size_t k = ops.size();
  cplx acc = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    // sum over c differing from a only on the operator sites: rho_{a c} (prod O)_{c a}
    for (std::size_t pattern = 0; pattern < (std::size_t{1} << k); ++pattern) {
      std::size_t c = a;
      cplx w = 1.0;
      for (std::size_t q = 0; q < k; ++q) {
        const int s = ops[q].first;
        const int ca = ((pattern >> q) & 1U) ? 1 - bit(a, s) : bit(a, s);
        if (ca != bit(a, s)) c ^= std::size_t{1} << s;
        w *= ops[q].second(ca, bit(a, s));
      }
      if (w != 0.0) acc += rho(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) * w;
    }
  }
  return acc.real();
}

enum class LocalOp { X, Y, Z, RR };

inline Mat2 local_matrix(LocalOp op) {
  switch (op) {
    case LocalOp::X: return pauli::x();
    case LocalOp::Y: return pauli::y();
    case LocalOp::Z: return pauli::z();
    case LocalOp::RR: return 0.5 * (pauli::identity() + pauli::z());
  }
  return pauli::identity();
}

inline double site_expectation(const DensityMatrix& rho, int n, int site, LocalOp op) {
  return product_expectation(rho, n, {{site, local_matrix(op)}});
}

/// <O_i O_j> - <O_i><O_j>.
inline double connected_correlator(const DensityMatrix& rho, int n, int i, int j, LocalOp op) {
  const Mat2 m = local_matrix(op);
  if (i == j) throw Error(ErrorCode::InvalidArgument, "connected correlator needs distinct sites");
  return product_expectation(rho, n, {{i, m}, {j, m}}) - product_expectation(rho, n, {{i, m}}) *
                                                             product_expectation(rho, n, {{j, m}});
}

/// (1/N) sum_n <sigma^mu_n>.
inline double collective_moment(const DensityMatrix& rho, int n, LocalOp op) {
  double acc = 0.0;
  for (int s = 0; s < n; ++s) acc += site_expectation(rho, n, s, op);
  return acc / n;
}

/// Writes snapshots as raw little-endian complex<double> column-major arrays
/// to `<prefix>.bin` and metadata to `<prefix>.json`.
inline void export_snapshots(const std::string& prefix, const std::vector<DensityMatrix>& snaps,
                             const std::vector<double>& times, const LindbladModel& model,
                             const EvolveOptions& opt) {
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoError, "cannot open " + prefix + ".bin");
  for (const auto& r : snaps) {
    bin.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(sizeof(cplx) * r.size()));
  }
  nlohmann::json meta;
  meta["n_spins"] = model.n_spins;
  meta["dim"] = hilbert_dim(model.n_spins);
  meta["layout"] = "complex128 column-major, one matrix per time";
  meta["times"] = times;
  meta["rel_tol"] = opt.rel_tol;
  meta["abs_tol"] = opt.abs_tol;
  meta["model"] = model.canonical();
  meta["model_checksum"] = checksum_hex(model.checksum());
  std::ofstream js(prefix + ".json");
  if (!js) throw Error(ErrorCode::IoError, "cannot open " + prefix + ".json");
  js << meta.dump(2) << "\n";
}

}  // namespace dctwa::exact
