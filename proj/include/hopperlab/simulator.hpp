#pragma once

// Truth simulation of a single vertical hop onto granular terrain, the
// constant-speed intrusion rig, and the 1 kHz proprioceptive sensor model.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

#include "hopperlab/controller.hpp"
#include "hopperlab/linkage.hpp"
#include "hopperlab/terrain.hpp"

namespace hopperlab {

struct HopperState {
  double x_b = 0.0;
  double v_b = 0.0;
  double x_f = 0.0;
  double v_f = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
  Phase phase;
  double t = 0.0;
  double z_peak = 0.0;  // deepest penetration so far; selects the unloading branch
};

// Integrated coordinates [x_f, v_f, theta, theta_dot].
using StateVector = Eigen::Vector4d;

StateVector to_vector(const HopperState& s);
// Rebuilds the derived body coordinates from the integrated ones.
HopperState from_vector(const StateVector& q, const HopperState& meta, const LinkageParams& linkage);

struct DynamicsEval {
  StateVector derivative;
  double body_acc = 0.0;
  double z = 0.0;
  double z_dot = 0.0;
  double z_ddot = 0.0;
  ForceDecomposition force;
};

// Time derivative of [x_f, v_f, theta, theta_dot] under per-motor torque tau.
// The added mass is carried on the inertia side of the foot channel.
DynamicsEval dynamics_derivative(const HopperState& state, double tau, const TerrainParams& terrain,
                                 const LinkageParams& linkage);

struct SimConfig {
  double dt = 1e-4;
  double sensor_period = 1e-3;
  double touchdown_speed = 1.0;  // sets the release height v^2 / (2 g)
  double release_height = -1.0;  // foot height above the surface; overrides touchdown_speed when >= 0
  double t_max = 2.0;
  double post_liftoff = 0.1;

  double drop_height() const;
};

struct NoiseConfig {
  double encoder_resolution = 2.0 * 3.14159265358979323846 / 4096.0;
  double encoder_sigma = 1e-3;
  int encoder_rate_window = 5;
  double imu_sigma = 0.2;
  double imu_bias_max = 0.05;  // per-trial biases drawn uniformly in [-max, max]
  double tof_sigma = 0.005;
  double current_sigma = 0.05;
  double loadcell_sigma = 0.5;

  static NoiseConfig none();
};

struct SensorFrame {
  double t = 0.0;
  double encoder_theta = 0.0;
  double encoder_theta_dot = 0.0;
  double imu_body_acc = 0.0;
  double imu_foot_acc = 0.0;
  double tof_height = 0.0;
  double motor_current = 0.0;
  double loadcell_force = 0.0;
};

struct TruthSample {
  HopperState state;
  bool contact = false;  // foot at or below the undisturbed surface
  double tau = 0.0;
  double leg_force_command = 0.0;
  double foot_acc = 0.0;
  double body_acc = 0.0;
  double theta_acc = 0.0;
  double z = 0.0;
  double z_dot = 0.0;
  double z_ddot = 0.0;
  ForceDecomposition force;
};

struct TrialEvents {
  double t_td = 0.0;
  double t_ce = 0.0;
  double t_lo = 0.0;
  double v_td = 0.0;  // foot speed at touchdown (positive downward)
};

struct TrialSetup {
  SimConfig sim;
  ControllerConfig controller;
  TerrainParams terrain;
  LinkageParams linkage;
  NoiseConfig noise;
};

struct TrialLog {
  std::vector<SensorFrame> frames;
  std::vector<TruthSample> truth;
  TrialEvents events;
  TrialSetup setup;
  std::uint64_t seed = 0;
};

// Per-trial sensor state: random stream, IMU biases, encoder history.
class SensorModel {
 public:
  SensorModel(const NoiseConfig& noise, double period, std::uint64_t seed);

  SensorFrame sample(const TruthSample& truth, const LinkageParams& linkage);

  double bias_body() const { return bias_body_; }
  double bias_foot() const { return bias_foot_; }

 private:
  double gaussian(double sigma);

  NoiseConfig noise_;
  double period_;
  std::mt19937_64 rng_;
  double bias_body_ = 0.0;
  double bias_foot_ = 0.0;
  std::vector<double> encoder_history_;
};

SensorFrame sample_sensors(const TruthSample& truth, SensorModel& model, const LinkageParams& linkage);

TrialLog run_hop_trial(const TrialSetup& setup, std::uint64_t seed);

TrialEvents detect_events(const std::vector<TruthSample>& truth);

struct IntrusionSample {
  double t = 0.0;
  double depth = 0.0;
  double speed = 0.0;
  double force = 0.0;
};

struct IntrusionLog {
  double speed = 0.0;
  std::uint64_t seed = 0;
  std::vector<IntrusionSample> samples;
};

IntrusionLog run_constant_speed_intrusion(double speed, double z_max, const TerrainParams& terrain,
                                          double loadcell_sigma = 0.0, std::uint64_t seed = 0,
                                          double sample_period = 1e-3);

}  // namespace hopperlab
