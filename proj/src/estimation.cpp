#include "hopperlab/estimation.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "hopperlab/errors.hpp"

namespace hopperlab {

namespace {

bool symmetric_psd(const Eigen::MatrixXd& m, double tol) {
  if (!m.isApprox(m.transpose(), 1e-12) && (m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff() >= -tol;
}

double clamp_angle(double theta, const LinkageParams& linkage) {
  return std::clamp(theta, linkage.theta_min, linkage.theta_max);
}

}  // namespace

void validate(const KalmanConfig& c) {
  if (!symmetric_psd(c.Q, 1e-15)) throw DomainError("kalman: Q must be symmetric positive semidefinite");
  if (!symmetric_psd(c.P0, 1e-15)) throw DomainError("kalman: P0 must be symmetric positive semidefinite");
  Eigen::LLT<Eigen::Matrix3d> llt(c.R);
  if (llt.info() != Eigen::Success || !c.R.isApprox(c.R.transpose()))
    throw DomainError("kalman: R must be symmetric positive definite");
}

KfMatrix kf_transition(double dt) {
  KfMatrix A = KfMatrix::Identity();
  A(0, 1) = dt;
  A(2, 3) = dt;
  return A;
}

Eigen::Matrix<double, 4, 2> kf_input(double dt) {
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  B(0, 0) = 0.5 * dt * dt;
  B(1, 0) = dt;
  B(2, 1) = 0.5 * dt * dt;
  B(3, 1) = dt;
  return B;
}

Eigen::Matrix<double, 3, 4> kf_measurement() {
  Eigen::Matrix<double, 3, 4> H;
  H << 1, 0, 0, 0,
       1, 0, -1, 0,
       0, 1, 0, -1;
  return H;
}

constexpr double kBiasCorrelationTime = 1.0;  // [s]
constexpr double kRestVelocityVar = 1e-6;     // [m^2/s^2]

KalmanConfig default_kalman_config(const NoiseConfig& noise, const LinkageParams& linkage, double dt) {
  KalmanConfig c;
  // IMU bias is not a filter state. Over a trial it acts like white noise with
  // PSD b^2 T_c, so its spread enters the per-step variance scaled by T_c / dt.
  const double bias_var = noise.imu_bias_max * noise.imu_bias_max / 3.0;
  const double sigma_u2 = noise.imu_sigma * noise.imu_sigma + bias_var * kBiasCorrelationTime / dt;
  const auto B = kf_input(dt);
  c.Q = B * (Eigen::Vector2d::Constant(std::max(sigma_u2, 1e-12)).asDiagonal()) * B.transpose();

  const double theta_mid = 0.5 * (linkage.theta_min + linkage.theta_max);
  const double J = std::abs(leg_jacobian(theta_mid, linkage));
  const double sigma_theta2 =
      noise.encoder_sigma * noise.encoder_sigma + noise.encoder_resolution * noise.encoder_resolution / 12.0;
  const double window = std::max(1, noise.encoder_rate_window) * dt;
  constexpr double kFloor = 1e-12;
  c.R = Eigen::Vector3d(std::max(noise.tof_sigma * noise.tof_sigma, kFloor),
                        std::max(J * J * sigma_theta2, kFloor),
                        std::max(2.0 * J * J * sigma_theta2 / (window * window), kFloor))
            .asDiagonal();
  // Trials are released from rest, so the velocity prior is tight.
  c.P0 = KfVector(1e-2, kRestVelocityVar, 1e-2, kRestVelocityVar).asDiagonal();
  return c;
}

KalmanState kf_step(const KalmanState& state, const Eigen::Vector2d& u, const Eigen::Vector3d& z, double dt,
                    const KalmanConfig& config) {
  if (!(dt > 0.0)) throw DomainError("kf_step: dt must be positive");
  const KfMatrix A = kf_transition(dt);
  const auto B = kf_input(dt);
  const auto H = kf_measurement();

  KalmanState next;
  next.t = state.t + dt;
  const KfVector x_pred = A * state.x_hat + B * u;
  const KfMatrix P_pred = A * state.P * A.transpose() + config.Q;

  const Eigen::Matrix3d S = H * P_pred * H.transpose() + config.R;
  Eigen::LDLT<Eigen::Matrix3d> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
    throw NumericError("kf_step: innovation covariance not invertible");
  const Eigen::Matrix<double, 4, 3> K = ldlt.solve(H * P_pred).transpose();

  next.x_hat = x_pred + K * (z - H * x_pred);
  // Joseph form keeps P positive semidefinite under round-off.
  const KfMatrix I_KH = KfMatrix::Identity() - K * H;
  const KfMatrix P = I_KH * P_pred * I_KH.transpose() + K * config.R * K.transpose();
  next.P = 0.5 * (P + P.transpose());
  return next;
}

double psi(double theta, double theta_dot, double v_f, double tau, const LinkageParams& linkage) {
  const auto c = reduced_dynamics_coeffs(theta, linkage);
  return c.dMf_dtheta * theta_dot * v_f - c.M_f * kGravity<double> - c.beta * tau -
         c.C_coef * theta_dot * theta_dot;
}

ObserverState mo_step(const ObserverState& obs, double theta, double theta_dot, double v_f, double tau, double dt,
                      const LinkageParams& linkage, ObserverDiscretization scheme) {
  if (!(obs.k_obs > 0.0)) throw ConfigError("momentum observer: k_obs must be positive");
  if (!(dt > 0.0)) throw ConfigError("momentum observer: dt must be positive");
  if (dt * obs.k_obs >= 1.0) throw ConfigError("momentum observer: dt * k_obs must be below 1");

  const double p = reduced_dynamics_coeffs(theta, linkage).M_f * v_f;
  const double psi_now = psi(theta, theta_dot, v_f, tau, linkage);

  ObserverState next = obs;
  next.psi_prev = psi_now;
  if (!obs.initialized) {
    next.p_hat = p;
    next.r = 0.0;
    next.initialized = true;
    return next;
  }
  switch (scheme) {
    case ObserverDiscretization::kExact: {
      const double p_prev = obs.p_hat + obs.r / obs.k_obs;
      const double gamma = std::exp(-obs.k_obs * dt);
      const double mean_force = (p - p_prev) / dt - 0.5 * (psi_now + obs.psi_prev);
      next.r = gamma * obs.r + (1.0 - gamma) * mean_force;
      next.p_hat = p - next.r / obs.k_obs;
      break;
    }
    case ObserverDiscretization::kEuler:
      next.p_hat = obs.p_hat + dt * (psi_now + obs.r);
      next.r = obs.k_obs * (p - next.p_hat);
      break;
  }
  return next;
}

std::vector<double> quasi_static_series(std::span<const SensorFrame> frames, const LinkageParams& linkage) {
  if (frames.empty()) throw DomainError("quasi_static_series: no frames");
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    try {
      out.push_back(quasi_static_force(linkage.torque_constant * f.motor_current, f.encoder_theta, linkage));
    } catch (const DomainError&) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    } catch (const SingularityError&) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

EstimationConfig default_estimation_config(const NoiseConfig& noise, const LinkageParams& linkage,
                                           double sensor_period) {
  EstimationConfig c;
  c.kalman = default_kalman_config(noise, linkage, sensor_period);
  return c;
}

ForceEstimateSeries run_estimation(std::span<const SensorFrame> frames, const LinkageParams& linkage,
                                   const EstimationConfig& config) {
  validate(config.kalman);
  const auto qs = quasi_static_series(frames, linkage);

  ForceEstimateSeries series;
  series.rows.reserve(frames.size());
  KalmanState kf;
  ObserverState mo;
  mo.k_obs = config.k_obs;

  for (std::size_t k = 0; k < frames.size(); ++k) {
    const SensorFrame& f = frames[k];
    const double theta = clamp_angle(f.encoder_theta, linkage);
    const double J = leg_jacobian(theta, linkage);
    const Eigen::Vector3d z(f.tof_height, leg_length(theta, linkage) + linkage.mount_offset,
                            J * f.encoder_theta_dot);
    if (k == 0) {
      kf.P = config.kalman.P0;
      kf.t = f.t;
      if (config.kalman.init_from_first_frame) {
        kf.x_hat << z(0), 0.0, z(0) - z(1), 0.0;
      } else {
        kf.x_hat = config.kalman.x0;
      }
    } else {
      const SensorFrame& prev = frames[k - 1];
      // Mean of the bracketing IMU samples approximates the interval-average acceleration.
      const Eigen::Vector2d u(0.5 * (prev.imu_body_acc + f.imu_body_acc), 0.5 * (prev.imu_foot_acc + f.imu_foot_acc));
      kf = kf_step(kf, u, z, f.t - prev.t, config.kalman);
      kf.t = f.t;
    }
    const double dt = k == 0 ? 1.0 / (2.0 * config.k_obs) : f.t - frames[k - 1].t;
    mo = mo_step(mo, theta, f.encoder_theta_dot, kf.x_hat(3), linkage.torque_constant * f.motor_current, dt,
                 linkage, config.scheme);

    EstimateRow row;
    row.t = f.t;
    row.x_hat = kf.x_hat;
    row.F_qs = qs[k];
    row.F_mo = mo.r;
    if (std::isnan(qs[k])) ++series.singular_frames;
    series.rows.push_back(row);
  }
  return series;
}

void attach_truth(ForceEstimateSeries& series, const TrialLog& log) {
  const long decimation = std::lround(log.setup.sim.sensor_period / log.setup.sim.dt);
  for (std::size_t k = 0; k < series.rows.size(); ++k) {
    const auto idx = static_cast<std::size_t>(k * decimation);
    if (idx >= log.truth.size()) break;
    const auto& t = log.truth[idx];
    auto& row = series.rows[k];
    row.has_truth = true;
    row.x_b = t.state.x_b;
    row.v_b = t.state.v_b;
    row.x_f = t.state.x_f;
    row.v_f = t.state.v_f;
    row.F_true = t.force.f_total;
  }
}

std::vector<double> observer_on_truth(const TrialLog& log, double k_obs, ObserverDiscretization scheme,
                                      bool integrator_rate) {
  const long decimation = std::lround(log.setup.sim.sensor_period / log.setup.sim.dt);
  const std::size_t stride = integrator_rate ? 1 : static_cast<std::size_t>(decimation);
  std::vector<double> out;
  ObserverState mo;
  mo.k_obs = k_obs;
  double t_prev = 0.0;
  for (std::size_t idx = 0; idx < log.truth.size(); idx += stride) {
    const auto& t = log.truth[idx];
    const double dt = idx == 0 ? 1.0 / (2.0 * k_obs) : t.state.t - t_prev;
    mo = mo_step(mo, t.state.theta, t.state.theta_dot, t.state.v_f, t.tau, dt, log.setup.linkage, scheme);
    if (idx % static_cast<std::size_t>(decimation) == 0) out.push_back(mo.r);
    t_prev = t.state.t;
  }
  return out;
}

}  // namespace hopperlab
