#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "dctwa/sampling.hpp"

using namespace dctwa;

namespace {

std::vector<CartesianSpin> draw(const SpinState& s, SamplingScheme scheme, int count, std::uint64_t seed = 5) {
  std::vector<CartesianSpin> out;
  for (int k = 0; k < count; ++k) {
    Rng rng = trajectory_rng(seed, static_cast<std::uint64_t>(k));
    out.push_back(sample_spin(s, scheme, rng));
  }
  return out;
}

std::array<double, 3> mean_of(const std::vector<CartesianSpin>& v) {
  std::array<double, 3> m{};
  for (const auto& s : v) {
    m[0] += s.sx;
    m[1] += s.sy;
    m[2] += s.sz;
  }
  for (auto& x : m) x /= static_cast<double>(v.size());
  return m;
}

}  // namespace

TEST(Sampling, TwoPointDownUsesAntiCorrelatedPoints) {
  const auto cfgs = sample_initial({SpinState::down()}, SamplingScheme::TwoPoint, 4000, 17);
  int first = 0;
  for (const auto& c : cfgs) {
    EXPECT_NEAR(c[0].theta, std::acos(1 / kSqrt3), 1e-12);
    const bool a = std::abs(c[0].phi - kPi / 4) < 1e-12;
    const bool b = std::abs(c[0].phi - 5 * kPi / 4) < 1e-12;
    EXPECT_TRUE(a || b);
    first += a;
    const auto s = cartesian_from_angles(c[0]);
    EXPECT_NEAR(s.sx * s.sy, -1.0, 1e-12);
    EXPECT_NEAR(s.sz, -1.0, 1e-12);
  }
  EXPECT_NEAR(first / 4000.0, 0.5, 0.03);
}

TEST(Sampling, FourPointDownIndependentSigns) {
  const auto v = draw(SpinState::down(), SamplingScheme::FourPoint, 20000);
  std::map<std::pair<int, int>, int> counts;
  double cov = 0.0;
  for (const auto& s : v) {
    EXPECT_NEAR(std::abs(s.sx), 1.0, 1e-15);
    EXPECT_NEAR(std::abs(s.sy), 1.0, 1e-15);
    EXPECT_EQ(s.sz, -1.0);
    counts[{s.sx > 0, s.sy > 0}]++;
    cov += s.sx * s.sy;
  }
  EXPECT_EQ(counts.size(), 4U);
  for (const auto& [k, c] : counts) EXPECT_NEAR(c / 20000.0, 0.25, 0.02);
  EXPECT_NEAR(cov / 20000.0, 0.0, 0.03);
}

TEST(Sampling, FourPointAnglesOnQuarterGrid) {
  const auto cfgs = sample_initial({SpinState::down()}, SamplingScheme::FourPoint, 400, 3);
  for (const auto& c : cfgs) {
    const double q = c[0].phi / (kPi / 4);
    EXPECT_NEAR(q, std::round(q), 1e-10);
    EXPECT_EQ(static_cast<int>(std::round(q)) % 2, 1);
  }
}

TEST(Sampling, ContinuousRingUniformPhi) {
  const auto cfgs = sample_initial({SpinState::down()}, SamplingScheme::ContinuousRing, 40000, 9);
  std::array<int, 8> bins{};
  for (const auto& c : cfgs) {
    EXPECT_NEAR(c[0].theta, std::acos(1 / kSqrt3), 1e-12);
    bins[static_cast<std::size_t>(c[0].phi / (kTwoPi / 8)) % 8]++;
  }
  for (int b : bins) EXPECT_NEAR(b / 40000.0, 0.125, 0.01);
}

TEST(Sampling, DownHasExactMeanSz) {
  for (auto scheme : {SamplingScheme::TwoPoint, SamplingScheme::FourPoint, SamplingScheme::ContinuousRing}) {
    const auto m = mean_of(draw(SpinState::down(), scheme, 1000));
    EXPECT_NEAR(m[2], -1.0, 1e-12);
  }
}

TEST(Sampling, FirstMomentsConverge) {
  const std::array<double, 3> n{std::sin(1.0) * std::cos(0.4), std::sin(1.0) * std::sin(0.4), std::cos(1.0)};
  const std::vector<SpinState> states{SpinState::pure(n), SpinState::from_bloch({0.3, -0.2, 0.5}),
                                      SpinState::pure({0, -1, 0}), SpinState::pure({1, 0, 0})};
  for (const auto& st : states) {
    const auto b = st.bloch();
    for (auto scheme : {SamplingScheme::TwoPoint, SamplingScheme::FourPoint, SamplingScheme::ContinuousRing}) {
      const auto m = mean_of(draw(st, scheme, 60000, 21));
      // single-sample standard deviation is at most sqrt(3)
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(m[k], b[k], 5 * kSqrt3 / std::sqrt(60000.0));
    }
  }
}

TEST(Sampling, SamplesLieOnSphere) {
  const std::array<double, 3> n{0.6, 0.0, 0.8};
  for (auto scheme : {SamplingScheme::TwoPoint, SamplingScheme::FourPoint, SamplingScheme::ContinuousRing}) {
    for (const auto& s : draw(SpinState::pure(n), scheme, 200)) EXPECT_NEAR(s.norm(), kSqrt3, 1e-12);
  }
}

TEST(Sampling, PauliEigenstatesUseDiscretePoints) {
  for (const auto& s : draw(SpinState::pure({0, -1, 0}), SamplingScheme::TwoPoint, 200)) {
    EXPECT_EQ(std::abs(s.sx), 1.0);
    EXPECT_EQ(s.sy, -1.0);
    EXPECT_EQ(std::abs(s.sz), 1.0);
  }
}

TEST(Sampling, Deterministic) {
  const auto a = sample_initial({SpinState::down(), SpinState::up()}, SamplingScheme::ContinuousRing, 50, 77);
  const auto b = sample_initial({SpinState::down(), SpinState::up()}, SamplingScheme::ContinuousRing, 50, 77);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(a[k][i].theta, b[k][i].theta);
      EXPECT_EQ(a[k][i].phi, b[k][i].phi);
    }
  }
}

TEST(Sampling, DiscreteDensityOverload) {
  Rng rng = trajectory_rng(1, 0);
  Mat2 down = Mat2::Zero();
  down(1, 1) = 1.0;
  for (int k = 0; k < 50; ++k) EXPECT_EQ(sample_discrete(down, rng).sz, -1.0);
  // a pure state along (1, 1, 1)/sqrt(3) rotated off both point sets
  const double c = 1.0 / std::sqrt(2.0);
  const Mat2 rho = density_from_bloch({c, 0.0, -c});
  const auto w0 = point_set_weights({c, 0.0, -c}, false);
  const auto w1 = point_set_weights({c, 0.0, -c}, true);
  const bool neg0 = *std::min_element(w0.begin(), w0.end()) < 0;
  const bool neg1 = *std::min_element(w1.begin(), w1.end()) < 0;
  ASSERT_TRUE(neg0 && neg1);
  try {
    sample_discrete(rho, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeWeight);
  }
}

TEST(Sampling, RotatedSetIsZRotation) {
  for (auto a : kAllBitPairs) {
    const auto r = discrete_phase_vector(a);
    const auto q = rotated_phase_vector(a);
    EXPECT_EQ(q.sx, -r.sy);
    EXPECT_EQ(q.sy, r.sx);
    EXPECT_EQ(q.sz, r.sz);
    EXPECT_EQ(q.sx * q.sy * q.sz, -1.0);
  }
}
