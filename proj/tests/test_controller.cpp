#include <gtest/gtest.h>

#include <cmath>

#include "hopperlab/controller.hpp"
#include "hopperlab/errors.hpp"

using namespace hopperlab;

namespace {

LegSignals flight_signals() {
  LegSignals s;
  s.L = 0.275;
  s.x_f = 0.02;
  s.v_f = -0.5;
  return s;
}

}  // namespace

TEST(NextPhase, FlightStaysFlightAboveSurface) {
  const ControllerConfig c;
  const Phase p{PhaseKind::kFlight, 0.0};
  EXPECT_EQ(next_phase(p, flight_signals(), c, 0.1).kind, PhaseKind::kFlight);
}

TEST(NextPhase, GeometricTouchdownNeedsDownwardMotion) {
  const ControllerConfig c;
  auto s = flight_signals();
  s.penetration = 1e-4;
  const auto next = next_phase({PhaseKind::kFlight, 0.0}, s, c, 0.13);
  EXPECT_EQ(next.kind, PhaseKind::kCompression);
  EXPECT_EQ(next.entered_at, 0.13);
  s.v_f = 0.1;
  EXPECT_EQ(next_phase({PhaseKind::kFlight, 0.0}, s, c, 0.13).kind, PhaseKind::kFlight);
}

TEST(NextPhase, ForceThresholdTouchdown) {
  ControllerConfig c;
  c.touchdown = ContactDetector::kForceThreshold;
  auto s = flight_signals();
  s.F_c = 5.0;
  EXPECT_EQ(next_phase({PhaseKind::kFlight, 0.0}, s, c, 0.0).kind, PhaseKind::kCompression);
  s.F_c = 0.5;
  s.penetration = 0.01;
  EXPECT_EQ(next_phase({PhaseKind::kFlight, 0.0}, s, c, 0.0).kind, PhaseKind::kFlight);
}

TEST(NextPhase, CompressionEndsAtRateZeroCrossing) {
  const ControllerConfig c;
  LegSignals s;
  s.L = 0.25;
  s.L_dot = -0.2;
  const Phase comp{PhaseKind::kCompression, 0.1};
  EXPECT_EQ(next_phase(comp, s, c, 0.2).kind, PhaseKind::kCompression);
  s.L_dot = 0.01;
  const auto next = next_phase(comp, s, c, 0.21);
  EXPECT_EQ(next.kind, PhaseKind::kExtension);
  EXPECT_EQ(next.entered_at, 0.21);
}

TEST(NextPhase, TouchdownRippleIsNotEndOfCompression) {
  const ControllerConfig c;
  LegSignals s;
  s.L = c.L0_compress - 0.5 * c.min_compression;
  s.L_dot = 0.01;
  EXPECT_EQ(next_phase({PhaseKind::kCompression, 0.1}, s, c, 0.11).kind, PhaseKind::kCompression);
}

TEST(NextPhase, LiftoffRules) {
  ControllerConfig c;
  LegSignals s;
  s.L = 0.27;
  s.v_f = 0.3;
  s.F_c = 0.0;
  const Phase ext{PhaseKind::kExtension, 0.2};
  EXPECT_EQ(next_phase(ext, s, c, 0.3).kind, PhaseKind::kFlight);
  s.F_c = 3.0;
  EXPECT_EQ(next_phase(ext, s, c, 0.3).kind, PhaseKind::kExtension);

  c.liftoff = LiftoffRule::kLegAtNeutral;
  EXPECT_EQ(next_phase(ext, s, c, 0.3).kind, PhaseKind::kExtension);
  s.L = c.L0_extend;
  EXPECT_EQ(next_phase(ext, s, c, 0.3).kind, PhaseKind::kFlight);
}

TEST(VirtualLegForce, NeutralPointIsZero) {
  const ControllerConfig c;
  EXPECT_EQ(virtual_leg_force(PhaseKind::kCompression, c.L0_compress, 0.0, c), 0.0);
}

TEST(VirtualLegForce, PhaseStiffnesses) {
  ControllerConfig c;
  c.L0_extend = c.L0_compress;
  const double L = c.L0_compress - 0.02;
  EXPECT_NEAR(virtual_leg_force(PhaseKind::kCompression, L, 0.0, c), 7.5, 1e-12);
  EXPECT_NEAR(virtual_leg_force(PhaseKind::kExtension, L, 0.0, c), 10.0, 1e-12);
}

TEST(VirtualLegForce, ExtensionAtLeastCompressionBelowNeutral) {
  const ControllerConfig c;
  for (double L = 0.2; L < c.L0_compress; L += 0.005)
    EXPECT_GE(virtual_leg_force(PhaseKind::kExtension, L, 0.0, c), virtual_leg_force(PhaseKind::kCompression, L, 0.0, c));
}

TEST(VirtualLegForce, DampingByPhase) {
  const ControllerConfig c;
  EXPECT_DOUBLE_EQ(virtual_leg_force(PhaseKind::kFlight, c.L0_compress, 0.1, c), -c.b_flight * 0.1);
  EXPECT_DOUBLE_EQ(virtual_leg_force(PhaseKind::kCompression, c.L0_compress, 0.1, c), -c.b_stance * 0.1);
}

TEST(MotorTorque, HandValueAndRoundTrip) {
  const LinkageParams p;
  EXPECT_EQ(motor_torque(0.0, 0.8, p), 0.0);
  // Bisect for |dL/dtheta| = 0.06; F = 10 N there needs 0.3 N m per motor.
  double lo = p.theta_min, hi = p.theta_max;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::abs(leg_jacobian(mid, p)) < 0.06 ? lo : hi) = mid;
  }
  EXPECT_NEAR(motor_torque(10.0, 0.5 * (lo + hi), p), 0.3, 1e-12);
  for (double th = p.theta_min; th <= p.theta_max; th += 0.05) {
    EXPECT_NEAR(quasi_static_force(motor_torque(20.0, th, p), th, p), 20.0, 1e-9);
    EXPECT_NEAR(motor_torque(10.0, th, p), 10.0 * std::abs(leg_jacobian(th, p)) / 2.0, 1e-15);
  }
}

TEST(MotorTorque, SingularJacobianThrows) {
  LinkageParams p;
  p.theta_min = 1e-6;
  EXPECT_THROW(motor_torque(5.0, 1e-5, p), SingularityError);
}

TEST(ControllerConfig, Validation) {
  const LinkageParams p;
  ControllerConfig c;
  EXPECT_NO_THROW(validate(c, p));
  c.k_extend = 100.0;
  EXPECT_THROW(validate(c, p), DomainError);
  c = ControllerConfig{};
  c.L0_compress = 0.5;
  EXPECT_THROW(validate(c, p), DomainError);
}

TEST(PhaseKind, Names) {
  EXPECT_EQ(to_string(PhaseKind::kFlight), "flight");
  EXPECT_EQ(to_string(PhaseKind::kCompression), "compression");
  EXPECT_EQ(to_string(PhaseKind::kExtension), "extension");
}
