#include <cmath>
#include <filesystem>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "dctwa/exact_oracle.hpp"
#include "dctwa/exact_series.hpp"
#include "test_support.hpp"

using namespace dctwa;
using namespace dctwa::exact;

namespace {

LindbladModel single_spin(double hx, double gamma, double kappa = 0.0) {
  LindbladModel m;
  m.n_spins = 1;
  if (hx != 0.0) m.fields.push_back({0, Axis::X, hx});
  if (gamma > 0.0) m.channels.push_back({ChannelKind::Decay, 0, gamma});
  if (kappa > 0.0) m.channels.push_back({ChannelKind::Dephasing, 0, kappa});
  return m;
}

Mat2 up() {
  Mat2 r = Mat2::Zero();
  r(0, 0) = 1.0;
  return r;
}
Mat2 down() {
  Mat2 r = Mat2::Zero();
  r(1, 1) = 1.0;
  return r;
}

DensityMatrix random_density(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const auto d = static_cast<Eigen::Index>(hilbert_dim(n));
  Eigen::MatrixXcd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = cplx(g(rng), g(rng));
  }
  DensityMatrix r = a * a.adjoint();
  return r / r.trace();
}

}  // namespace

TEST(RydbergHamiltonian, SingleSite) {
  const Operator h = build_rydberg_hamiltonian(1, 0.3, 1.0, 6.0, Boundary::Periodic);
  EXPECT_LT((h - 0.3 * Operator(pauli::x())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RydbergHamiltonian, TwoSitesOpen) {
  const double om = 0.3, j = 1.7;
  const Operator h = build_rydberg_hamiltonian(2, om, j, 6.0, Boundary::Open);
  const Eigen::Matrix2cd i2 = Eigen::Matrix2cd::Identity();
  const Eigen::Matrix2cd rr = 0.5 * (i2 + pauli::z());
  // site 0 is the lowest bit: kron(site1, site0)
  auto kron = [](const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
    Operator k(4, 4);
    for (int i = 0; i < 2; ++i)
      for (int jj = 0; jj < 2; ++jj) k.block(2 * i, 2 * jj, 2, 2) = a(i, jj) * b;
    return k;
  };
  const Operator expected = om * (kron(i2, pauli::x()) + kron(pauli::x(), i2)) + j * kron(rr, rr);
  EXPECT_LT((h - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RydbergHamiltonian, RingOfThree) {
  const auto m = rydberg_model({3, 0.0, 2.0, 6.0, Boundary::Periodic, 0.0, 0.0});
  ASSERT_EQ(m.projectors.size(), 3U);
  for (const auto& p : m.projectors) EXPECT_DOUBLE_EQ(p.coeff, 2.0);
  const Operator h = build_hamiltonian(m);
  // |up up up> has three excited pairs
  EXPECT_NEAR(h(0, 0).real(), 6.0, 1e-14);
}

TEST(RydbergHamiltonian, MinimumImageDistance) {
  const auto m = rydberg_model({6, 0.3, 1.0, 6.0, Boundary::Periodic, 0.0, 0.0});
  for (const auto& p : m.projectors) {
    const int d = std::min(std::abs(p.i - p.j), 6 - std::abs(p.i - p.j));
    EXPECT_DOUBLE_EQ(p.coeff, 1.0 / std::pow(d, 6.0));
  }
}

TEST(RydbergHamiltonian, TooLarge) {
  try {
    build_rydberg_hamiltonian(13, 0.3, 1.0, 6.0, Boundary::Periodic);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionTooLarge);
  }
}

TEST(IsingHamiltonian, Examples) {
  const double j = 0.8;
  Operator h = build_ising_hamiltonian(all_to_all_couplings(2, j));
  Eigen::VectorXd diag(4);
  diag << -j / 2, j / 2, j / 2, -j / 2;
  EXPECT_LT((h - Operator(diag.cast<cplx>().asDiagonal())).cwiseAbs().maxCoeff(), 1e-15);
  h = build_ising_hamiltonian(all_to_all_couplings(3, j));
  for (std::size_t a = 0; a < 8; ++a) {
    double e = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int q = p + 1; q < 3; ++q) e += -0.5 * j * zsign(a, p) * zsign(a, q);
    EXPECT_NEAR(h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)).real(), e, 1e-15);
  }
  EXPECT_EQ(build_ising_hamiltonian(Eigen::MatrixXd::Zero(3, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(IsingHamiltonian, Asymmetric) {
  Eigen::MatrixXd c = all_to_all_couplings(3, 1.0);
  c(0, 1) = 2.0;
  try {
    build_ising_hamiltonian(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AsymmetricCouplings);
  }
}

TEST(LindbladRhs, DecayOfExcitedState) {
  const double g = 0.7;
  const DensityMatrix d = lindblad_rhs(up(), single_spin(0.0, g));
  EXPECT_NEAR(std::abs(d(0, 0) + g), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(d(1, 1) - g), 0.0, 1e-15);
  EXPECT_EQ(std::abs(d(0, 1)), 0.0);
}

TEST(LindbladRhs, NoDynamics) {
  LindbladModel m;
  m.n_spins = 2;
  const DensityMatrix rho = random_density(2, 4);
  EXPECT_EQ(lindblad_rhs(rho, m).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LindbladRhs, DephasingCoherence) {
  const double k = 0.4;
  const DensityMatrix rho = density_from_bloch({1.0, 0.0, 0.0});
  const DensityMatrix d = lindblad_rhs(rho, single_spin(0.0, 0.0, k));
  EXPECT_NEAR(std::abs(d(0, 1) - (-2.0 * k * rho(0, 1))), 0.0, 1e-15);
}

TEST(LindbladRhs, DimensionMismatch) {
  try {
    lindblad_rhs(DensityMatrix::Identity(4, 4) / 4.0, single_spin(1.0, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(LindbladRhs, MatchesDenseConstruction) {
  // dense reference: -i[H, rho] + sum_mu L rho L^+ - 1/2 {L^+ L, rho}
  RydbergParams p{3, 0.37, 1.3, 6.0, Boundary::Open, 0.2, 0.15};
  LindbladModel m = rydberg_model(p);
  m.fields.push_back({1, Axis::Y, -0.45});
  m.fields.push_back({2, Axis::Z, 0.21});
  m.zz.push_back({0, 2, 0.33});
  m.channels.push_back({ChannelKind::Pump, 1, 0.05});
  const Operator h = build_hamiltonian(m);
  const DensityMatrix rho = random_density(3, 8);
  DensityMatrix ref = cplx(0, -1) * (h * rho - rho * h);
  auto site_op = [](const Mat2& o, int site) {
    Operator full = Operator::Identity(1, 1);
    for (int s = 2; s >= 0; --s) {
      const Mat2 f = s == site ? o : Mat2(Mat2::Identity());
      Operator next(full.rows() * 2, full.cols() * 2);
      for (Eigen::Index i = 0; i < full.rows(); ++i)
        for (Eigen::Index j = 0; j < full.cols(); ++j) next.block(2 * i, 2 * j, 2, 2) = full(i, j) * f;
      full = next;
    }
    return full;
  };
  for (const auto& c : m.channels) {
    Mat2 l = c.kind == ChannelKind::Dephasing ? pauli::z() : (c.kind == ChannelKind::Decay ? pauli::lower() : pauli::raise());
    const Operator big = std::sqrt(c.rate) * site_op(l, c.site);
    ref += big * rho * big.adjoint() - 0.5 * (big.adjoint() * big * rho + rho * big.adjoint() * big);
  }
  EXPECT_LT((lindblad_rhs(rho, m) - ref).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(LindbladRhs, LinearTracelessHermitian) {
  const auto m = rydberg_model({3, 0.3, 1.0, 6.0, Boundary::Periodic, 0.1, 0.05});
  const DensityMatrix a = random_density(3, 1), b = random_density(3, 2);
  const cplx x(0.3, 0.0), y(-1.7, 0.0);
  const DensityMatrix lhs = lindblad_rhs(x * a + y * b, m);
  const DensityMatrix rhs = x * lindblad_rhs(a, m) + y * lindblad_rhs(b, m);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  const DensityMatrix d = lindblad_rhs(a, m);
  EXPECT_LT(std::abs(d.trace()), 1e-12);
  EXPECT_LT((d - d.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EvolveExact, PureDecay) {
  const double g = 0.5;
  std::vector<double> times;
  for (int k = 0; k <= 20; ++k) times.push_back(0.5 * k);
  const auto snaps = evolve_exact(up(), single_spin(0.0, g), times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    EXPECT_NEAR(site_expectation(snaps[k], 1, 0, LocalOp::Z), -1.0 + 2.0 * std::exp(-g * times[k]), 1e-8);
    validate_density(snaps[k]);
  }
}

TEST(EvolveExact, DampedRabi) {
  const double g = 2.0, gamma = 1.0;
  std::vector<double> times;
  for (int k = 0; k <= 30; ++k) times.push_back(0.5 * k);
  const auto snaps = evolve_exact(down(), single_spin(0.5 * g, gamma), times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto b = test_support::bloch_solution({0, 0, -1}, g, gamma, 0.0, times[k]);
    EXPECT_NEAR(site_expectation(snaps[k], 1, 0, LocalOp::X), b[0], 1e-7);
    EXPECT_NEAR(site_expectation(snaps[k], 1, 0, LocalOp::Y), b[1], 1e-7);
    EXPECT_NEAR(site_expectation(snaps[k], 1, 0, LocalOp::Z), b[2], 1e-7);
  }
}

TEST(EvolveExact, NoDynamicsConstant) {
  LindbladModel m;
  m.n_spins = 2;
  const DensityMatrix rho = random_density(2, 6);
  const auto snaps = evolve_exact(rho, m, {0.0, 1.0, 5.0});
  for (const auto& s : snaps) EXPECT_LT((s - rho).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EvolveExact, InvariantsAlongTrajectory) {
  const auto m = rydberg_model({4, 0.3, 1.0, 6.0, Boundary::Periodic, 0.05, 0.02});
  std::vector<double> times;
  for (int k = 0; k <= 20; ++k) times.push_back(1.0 * k);
  const auto snaps = evolve_exact(product_state(4, down()), m, times);
  for (const auto& s : snaps) {
    const auto c = check_density(s);
    EXPECT_LT(c.hermiticity, 1e-10);
    EXPECT_LT(c.trace_error, 1e-10);
    EXPECT_GT(c.min_eigenvalue, -1e-8);
  }
}

TEST(EvolveExact, NonInteractingFactorizes) {
  const double om = 0.3, gamma = 0.2, kappa = 0.05;
  const auto m = rydberg_model({3, om, 0.0, 6.0, Boundary::Periodic, gamma, kappa});
  std::vector<double> times;
  for (int k = 0; k <= 20; ++k) times.push_back(1.5 * k);
  const auto snaps = evolve_exact(product_state(3, down()), m, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto b = test_support::bloch_solution({0, 0, -1}, 2.0 * om, gamma, kappa, times[k]);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(site_expectation(snaps[k], 3, s, LocalOp::Z), b[2], 1e-7);
  }
}

TEST(EvolveExact, BadGrid) {
  EXPECT_THROW(evolve_exact(up(), single_spin(1, 0), {0.5, 1.0}), Error);
  EXPECT_THROW(evolve_exact(up(), single_spin(1, 0), {0.0, 1.0, 1.0}), Error);
}

TEST(SteadyState, Examples) {
  EXPECT_DOUBLE_EQ(steady_state_driven_spin(0.0, 0.1, 0.3), -1.0);
  EXPECT_NEAR(steady_state_driven_spin(0.3, 0.01, 0.01), -6.94e-4, 5e-7);
  EXPECT_NEAR(steady_state_driven_spin(0.3, 1e6, 0.01), -1.0, 1e-9);
  try {
    steady_state_driven_spin(0.0, 0.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllRatesZero);
  }
}

TEST(SteadyState, MatchesLongTimeEvolution) {
  const double om = 0.3, gamma = 0.2, kappa = 0.1;
  const double t = 20.0 / std::min({gamma, kappa, om});
  const auto snaps = evolve_exact(down(), single_spin(om, gamma, kappa), {0.0, t});
  EXPECT_NEAR(site_expectation(snaps.back(), 1, 0, LocalOp::Z), steady_state_driven_spin(om, gamma, kappa), 1e-6);
}

TEST(Expectation, ProductStates) {
  const DensityMatrix all_down = product_state(3, down());
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(site_expectation(all_down, 3, s, LocalOp::Z), -1.0, 1e-15);
  EXPECT_NEAR(connected_correlator(all_down, 3, 0, 1, LocalOp::Z), 0.0, 1e-15);
  const DensityMatrix plus = product_state(3, density_from_bloch({1, 0, 0}));
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(site_expectation(plus, 3, s, LocalOp::X), 1.0, 1e-15);
  EXPECT_NEAR(connected_correlator(plus, 3, 0, 2, LocalOp::X), 0.0, 1e-15);
}

TEST(Expectation, BellPair) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(4);
  psi(0) = psi(3) = 1.0 / std::sqrt(2.0);
  const DensityMatrix rho = pure_state(psi);
  EXPECT_NEAR(connected_correlator(rho, 2, 0, 1, LocalOp::Z), 1.0, 1e-15);
  EXPECT_NEAR(connected_correlator(rho, 2, 0, 1, LocalOp::X), 1.0, 1e-15);
  EXPECT_NEAR(connected_correlator(rho, 2, 0, 1, LocalOp::Y), -1.0, 1e-15);
  EXPECT_THROW(site_expectation(rho, 3, 0, LocalOp::Z), Error);
}

TEST(Expectation, MatchesDenseOperators) {
  const DensityMatrix rho = random_density(3, 12);
  const auto m = rydberg_model({3, 0.0, 1.0, 6.0, Boundary::Open, 0.0, 0.0});
  const Operator h = build_hamiltonian(m);
  double e = 0.0;
  for (const auto& p : m.projectors) {
    e += p.coeff * product_expectation(rho, 3, {{p.i, local_matrix(LocalOp::RR)}, {p.j, local_matrix(LocalOp::RR)}});
  }
  EXPECT_NEAR(expectation(rho, h), e, 1e-13);
}

TEST(Snapshots, ExportWritesBinaryAndMetadata) {
  const auto dir = std::filesystem::temp_directory_path() / "dctwa_snap_test";
  std::filesystem::create_directories(dir);
  const auto m = single_spin(0.5, 0.1);
  const std::vector<double> times{0.0, 1.0};
  const auto snaps = evolve_exact(down(), m, times);
  export_snapshots((dir / "snap").string(), snaps, times, m, {});
  EXPECT_EQ(std::filesystem::file_size(dir / "snap.bin"), 2 * 4 * sizeof(cplx));
  std::ifstream js(dir / "snap.json");
  const auto meta = nlohmann::json::parse(js);
  EXPECT_EQ(meta["n_spins"], 1);
  EXPECT_EQ(meta["model_checksum"], checksum_hex(m.checksum()));
  std::filesystem::remove_all(dir);
}
