#pragma once

// Raibert-style stance/flight state machine with a phase-dependent virtual
// leg spring. Stiffnesses are stored in N/m.

#include <string_view>

#include "hopperlab/linkage.hpp"

namespace hopperlab {

enum class PhaseKind { kFlight, kCompression, kExtension };

std::string_view to_string(PhaseKind kind);

struct Phase {
  PhaseKind kind = PhaseKind::kFlight;
  double entered_at = 0.0;
};

// How touchdown is recognized: foot below the surface moving down, or load
// above the force threshold.
enum class ContactDetector { kGeometric, kForceThreshold };

// How liftoff is recognized: unloaded foot moving up, or leg back at its
// extension neutral length.
enum class LiftoffRule { kForceThreshold, kLegAtNeutral };

struct ControllerConfig {
  double k_compress = 375.0;
  double k_extend = 500.0;
  double L0_compress = 0.275;
  double L0_extend = 0.29;
  double b_stance = 5.0;
  double b_flight = 20.0;
  double contact_force_threshold = 1.0;
  // Leg shortening required before a rate sign change counts as end of compression.
  double min_compression = 0.002;
  ContactDetector touchdown = ContactDetector::kGeometric;
  LiftoffRule liftoff = LiftoffRule::kForceThreshold;
};

void validate(const ControllerConfig& config, const LinkageParams& linkage);

struct LegSignals {
  double L = 0.0;
  double L_dot = 0.0;
  double x_f = 0.0;
  double v_f = 0.0;
  double penetration = 0.0;
  double F_c = 0.0;
};

Phase next_phase(const Phase& phase, const LegSignals& signals, const ControllerConfig& config, double t);

// Axial virtual-spring force, positive pushing body and foot apart.
double virtual_leg_force(PhaseKind phase, double L, double L_dot, const ControllerConfig& config);

// Per-motor torque producing axial force F_leg through the Jacobian transpose.
double motor_torque(double F_leg, double theta, const LinkageParams& params);

}  // namespace hopperlab
