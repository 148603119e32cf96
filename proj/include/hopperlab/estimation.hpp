#pragma once

// Onboard-style estimation: a four-state Kalman filter over body and foot
// height/velocity driven by the two IMUs, and a momentum observer on the foot
// channel that reconstructs the foot-terrain contact force.

#include <Eigen/Core>

#include <span>
#include <vector>

#include "hopperlab/linkage.hpp"
#include "hopperlab/simulator.hpp"

namespace hopperlab {

using KfVector = Eigen::Vector4d;  // [x_b, v_b, x_f, v_f]
using KfMatrix = Eigen::Matrix4d;

struct KalmanConfig {
  KfMatrix Q = KfMatrix::Identity() * 1e-8;
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity() * 1e-4;
  KfMatrix P0 = KfMatrix::Identity() * 1e-2;
  KfVector x0 = KfVector::Zero();
  // Seed x0 from the first frame (ToF height, encoder leg length, at rest).
  bool init_from_first_frame = true;
};

void validate(const KalmanConfig& config);

// Q from white IMU noise through the input matrix, R from sensor variances at
// a representative leg Jacobian.
KalmanConfig default_kalman_config(const NoiseConfig& noise, const LinkageParams& linkage, double dt);

struct KalmanState {
  KfVector x_hat = KfVector::Zero();
  KfMatrix P = KfMatrix::Identity();
  double t = 0.0;
};

KfMatrix kf_transition(double dt);
Eigen::Matrix<double, 4, 2> kf_input(double dt);
Eigen::Matrix<double, 3, 4> kf_measurement();

// One predict/update cycle; u = IMU accelerations (body, foot), z = (ToF height,
// body-foot displacement, body-foot rate).
KalmanState kf_step(const KalmanState& state, const Eigen::Vector2d& u, const Eigen::Vector3d& z, double dt,
                    const KalmanConfig& config);

// Momentum-observer right-hand side: dM_f/dtheta thd v_f - M_f g - beta tau - C thd^2.
double psi(double theta, double theta_dot, double v_f, double tau, const LinkageParams& linkage);

enum class ObserverDiscretization {
  // Residual propagated exactly over a sample under a piecewise-constant force.
  kExact,
  // p_hat += dt (psi + r); r = k (p - p_hat).
  kEuler,
};

struct ObserverState {
  double p_hat = 0.0;
  double r = 0.0;
  double k_obs = 200.0;
  double psi_prev = 0.0;
  bool initialized = false;
};

ObserverState mo_step(const ObserverState& obs, double theta, double theta_dot, double v_f, double tau, double dt,
                      const LinkageParams& linkage,
                      ObserverDiscretization scheme = ObserverDiscretization::kExact);

// Jacobian-transpose force per frame; NaN where the Jacobian is singular or the
// encoder angle leaves the linkage bounds.
std::vector<double> quasi_static_series(std::span<const SensorFrame> frames, const LinkageParams& linkage);

struct EstimationConfig {
  KalmanConfig kalman;
  double k_obs = 200.0;
  ObserverDiscretization scheme = ObserverDiscretization::kExact;
};

EstimationConfig default_estimation_config(const NoiseConfig& noise, const LinkageParams& linkage,
                                           double sensor_period);

struct EstimateRow {
  double t = 0.0;
  KfVector x_hat = KfVector::Zero();
  double F_qs = 0.0;
  double F_mo = 0.0;
  // Truth at the frame instant, when the trial is simulated.
  bool has_truth = false;
  double x_b = 0.0, v_b = 0.0, x_f = 0.0, v_f = 0.0, F_true = 0.0;
};

struct ForceEstimateSeries {
  std::vector<EstimateRow> rows;
  std::size_t singular_frames = 0;
};

ForceEstimateSeries run_estimation(std::span<const SensorFrame> frames, const LinkageParams& linkage,
                                   const EstimationConfig& config);

// Attaches decimated truth to each estimate row.
void attach_truth(ForceEstimateSeries& series, const TrialLog& log);

// Observer driven by truth kinematics, stepped at the frame instants or at
// every integrator step; returns r at the frame instants.
std::vector<double> observer_on_truth(const TrialLog& log, double k_obs,
                                      ObserverDiscretization scheme = ObserverDiscretization::kExact,
                                      bool integrator_rate = false);

}  // namespace hopperlab
