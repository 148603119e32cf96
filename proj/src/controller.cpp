#include "hopperlab/controller.hpp"

#include <cmath>

#include "hopperlab/errors.hpp"

namespace hopperlab {

std::string_view to_string(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::kFlight:
      return "flight";
    case PhaseKind::kCompression:
      return "compression";
    case PhaseKind::kExtension:
      return "extension";
  }
  return "unknown";
}

void validate(const ControllerConfig& c, const LinkageParams& linkage) {
  if (!(c.k_compress > 0) || !(c.k_extend >= c.k_compress))
    throw DomainError("controller: require k_extend >= k_compress > 0");
  if (!(c.b_stance >= 0) || !(c.b_flight >= 0)) throw DomainError("controller: damping must be nonnegative");
  if (!(c.contact_force_threshold >= 0)) throw DomainError("controller: contact threshold must be nonnegative");
  const double L_max = leg_length(linkage.theta_min, linkage);
  const double L_min = leg_length(linkage.theta_max, linkage);
  for (double L0 : {c.L0_compress, c.L0_extend}) {
    if (!(L0 > L_min && L0 < L_max)) throw DomainError("controller: neutral length outside linkage workspace");
  }
}

Phase next_phase(const Phase& phase, const LegSignals& s, const ControllerConfig& c, double t) {
  switch (phase.kind) {
    case PhaseKind::kFlight: {
      const bool contact = c.touchdown == ContactDetector::kGeometric
                               ? (s.penetration > 0.0 && s.v_f < 0.0)
                               : s.F_c > c.contact_force_threshold;
      if (contact) return {PhaseKind::kCompression, t};
      break;
    }
    case PhaseKind::kCompression:
      if (s.L_dot >= 0.0 && s.L < c.L0_compress - c.min_compression) return {PhaseKind::kExtension, t};
      break;
    case PhaseKind::kExtension: {
      const bool lifted = c.liftoff == LiftoffRule::kForceThreshold
                              ? (s.F_c < c.contact_force_threshold && s.v_f > 0.0)
                              : s.L >= c.L0_extend;
      if (lifted) return {PhaseKind::kFlight, t};
      break;
    }
  }
  return phase;
}

double virtual_leg_force(PhaseKind phase, double L, double L_dot, const ControllerConfig& c) {
  switch (phase) {
    case PhaseKind::kCompression:
      return c.k_compress * (c.L0_compress - L) - c.b_stance * L_dot;
    case PhaseKind::kExtension:
      return c.k_extend * (c.L0_extend - L) - c.b_stance * L_dot;
    case PhaseKind::kFlight:
      break;
  }
  return c.k_compress * (c.L0_compress - L) - c.b_flight * L_dot;
}

double motor_torque(double F_leg, double theta, const LinkageParams& params) {
  const double J = leg_jacobian(theta, params);
  if (std::abs(J) < kJacobianEpsilon<double>) throw SingularityError("motor_torque: leg Jacobian near singular");
  return F_leg * std::abs(J) / 2.0;
}

}  // namespace hopperlab
