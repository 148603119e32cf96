#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "hopperlab/errors.hpp"
#include "hopperlab/simulator.hpp"
#include "hopperlab/terrain.hpp"

using namespace hopperlab;

TEST(PenetrationDepth, AboveAtAndBelowSurface) {
  const TerrainParams p;
  EXPECT_EQ(penetration_depth(0.05, p), 0.0);
  EXPECT_EQ(penetration_depth(0.0, p), 0.0);
  EXPECT_DOUBLE_EQ(penetration_depth(-0.03, p), 0.03);
}

TEST(AddedMass, ValueAndGradientAtSurface) {
  const TerrainParams p;
  const auto [m, dm] = added_mass_profile(0.0, p);
  EXPECT_EQ(m, 0.0);
  EXPECT_DOUBLE_EQ(dm, p.m_a_inf / p.z_c);
}

TEST(AddedMass, SaturatesByTenDecayLengths) {
  const TerrainParams p;
  EXPECT_LT(std::abs(added_mass_profile(10 * p.z_c, p).first - p.m_a_inf) / p.m_a_inf, 5e-5);
}

TEST(AddedMass, GradientMatchesDifference) {
  const TerrainParams p;
  const double h = 1e-7;
  for (double z = 1e-4; z < 0.06; z += 0.0025) {
    const double fd = (added_mass_profile(z + h, p).first - added_mass_profile(z - h, p).first) / (2 * h);
    EXPECT_LT(std::abs(added_mass_profile(z, p).second - fd) / fd, 1e-6);
  }
}

TEST(AddedMass, Nondecreasing) {
  const TerrainParams p;
  double prev = 0.0;
  for (double z = 0.0; z < 0.1; z += 0.001) {
    const double m = added_mass_profile(z, p).first;
    EXPECT_GE(m, prev);
    prev = m;
  }
}

TEST(TerrainForce, StaticTermsOnly) {
  const auto f = terrain_force(0.02, 0.0, 0.0, TerrainParams{});
  EXPECT_DOUBLE_EQ(f.f_total, 16.0);
  EXPECT_EQ(f.f_drag, 0.0);
  EXPECT_EQ(f.f_added, 0.0);
}

TEST(TerrainForce, NoContactIsZero) {
  const auto f = terrain_force(0.0, -0.7, 3.0, TerrainParams{});
  EXPECT_EQ(f.f_static, 0.0);
  EXPECT_EQ(f.f_drag, 0.0);
  EXPECT_EQ(f.f_added, 0.0);
  EXPECT_EQ(f.f_total, 0.0);
}

TEST(TerrainForce, TermsMatchIndependentClosedForms) {
  // k = 800, m_inf = 0.15, z_c = 0.015 at z = 0.01, zd = 1, zdd = -50.
  const double e = std::exp(-0.01 / 0.015);
  const double f_static = 800.0 * 0.01;
  const double f_drag = 0.15 / 0.015 * e * 1.0;
  const double f_added = 0.15 * (1.0 - e) * -50.0;
  const auto f = terrain_force(0.01, 1.0, -50.0, TerrainParams{});
  EXPECT_NEAR(f.f_static, f_static, 1e-12);
  EXPECT_NEAR(f.f_drag, f_drag, 1e-12);
  EXPECT_NEAR(f.f_added, f_added, 1e-12);
  EXPECT_NEAR(f.f_total, f_static + f_drag + f_added, 1e-12);
  EXPECT_FALSE(f.clamped);
}

TEST(TerrainForce, ClampsInsteadOfPulling) {
  const auto f = terrain_force(0.001, 0.1, -500.0, TerrainParams{});
  EXPECT_TRUE(f.clamped);
  EXPECT_EQ(f.f_total, 0.0);
}

TEST(TerrainForce, WithdrawalDropsMomentumFlux) {
  const auto f = terrain_force(0.02, -0.5, 20.0, TerrainParams{});
  EXPECT_EQ(f.f_drag, 0.0);
  EXPECT_EQ(f.f_added, 0.0);
  EXPECT_DOUBLE_EQ(f.f_total, 16.0);
}

TEST(TerrainForce, UnloadingBranchBelowPeak) {
  const TerrainParams p;
  const double z_peak = 0.03;
  // Stiff elastic recovery: force falls by k_u per unit of backing out.
  const double z = 0.0295;
  const double expect = p.k_stiff * z_peak - p.unload_stiffness_ratio * p.k_stiff * (z_peak - z);
  EXPECT_NEAR(static_resistance(z, p, z_peak), expect, 1e-12);
  EXPECT_EQ(static_resistance(0.028, p, z_peak), 0.0);
  EXPECT_DOUBLE_EQ(static_resistance(0.035, p, z_peak), p.k_stiff * 0.035);
}

TEST(TerrainForce, ConstantSpeedAndStaticDegeneracy) {
  const TerrainParams p;
  for (double z : {0.001, 0.01, 0.04}) {
    EXPECT_EQ(terrain_force(z, 0.7, 0.0, p).f_added, 0.0);
    EXPECT_EQ(terrain_force(z, 0.0, 0.0, p).f_total, p.k_stiff * z);
  }
}

TEST(TerrainForce, NegativeDepthThrows) { EXPECT_THROW(terrain_force(-1e-3, 0.0, 0.0, TerrainParams{}), DomainError); }

TEST(InertialThreshold, QuotedAndHandValues) {
  EXPECT_NEAR(inertial_threshold(300e-6), 0.0767, 5e-5);
  EXPECT_NEAR(inertial_threshold(1e-3), 0.1401, 5e-5);
  EXPECT_NEAR(inertial_threshold(1e-12), 0.0, 1e-5);
  EXPECT_THROW(inertial_threshold(0.0), DomainError);
}

TEST(InertialThreshold, StrictlyIncreasing) {
  double prev = 0.0;
  for (double d = 1e-5; d < 0.01; d *= 1.5) {
    const double v = inertial_threshold(d);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(TerrainParams, Validation) {
  TerrainParams p;
  EXPECT_NO_THROW(validate(p));
  p.d_grain = 0.02;
  EXPECT_THROW(validate(p), DomainError);
  p = TerrainParams{};
  p.k_stiff = 0.0;
  EXPECT_THROW(validate(p), DomainError);
}

TEST(ForceMap, ZeroSpeedColumnIsDepthLaw) {
  const TerrainParams p;
  const std::vector<double> depth{0.0, 0.01, 0.02, 0.05}, speed{0.0, 0.5, 1.0};
  const auto m = force_map(p, std::span<const double>(depth), std::span<const double>(speed));
  for (std::size_t i = 0; i < depth.size(); ++i) EXPECT_DOUBLE_EQ(m(static_cast<Eigen::Index>(i), 0), p.k_stiff * depth[i]);
}

TEST(ForceMap, NondecreasingAlongBothAxes) {
  const TerrainParams p;
  std::vector<double> depth, speed;
  for (int i = 0; i <= 25; ++i) depth.push_back(0.002 * i);
  for (int j = 0; j <= 20; ++j) speed.push_back(0.06 * j);
  const auto m = force_map(p, std::span<const double>(depth), std::span<const double>(speed));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (i) EXPECT_GE(m(i, j), m(i - 1, j));
      if (j) EXPECT_GE(m(i, j), m(i, j - 1));
    }
}

TEST(ForceMap, MatchesIntrusionRig) {
  const TerrainParams p;
  for (double v : {0.022, 0.3, 1.1}) {
    const auto log = run_constant_speed_intrusion(v, 0.05, p);
    for (const auto& s : log.samples) {
      if (s.depth <= 0.0) continue;
      const std::vector<double> d{s.depth}, sp{v};
      const double map = force_map(p, std::span<const double>(d), std::span<const double>(sp))(0, 0);
      EXPECT_LE(std::abs(map - s.force), 0.005 * map);
    }
  }
}

TEST(ForceMap, RejectsBadGrids) {
  const TerrainParams p;
  const std::vector<double> empty, ok{0.0, 0.01}, unsorted{0.02, 0.01};
  EXPECT_THROW(force_map(p, std::span<const double>(empty), std::span<const double>(ok)), DomainError);
  EXPECT_THROW(force_map(p, std::span<const double>(unsorted), std::span<const double>(ok)), DomainError);
}
