#include "hopperlab/simulator.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hopperlab/errors.hpp"

namespace hopperlab {

StateVector to_vector(const HopperState& s) { return StateVector(s.x_f, s.v_f, s.theta, s.theta_dot); }

HopperState from_vector(const StateVector& q, const HopperState& meta, const LinkageParams& linkage) {
  HopperState s = meta;
  s.x_f = q(0);
  s.v_f = q(1);
  s.theta = q(2);
  s.theta_dot = q(3);
  s.x_b = s.x_f + leg_length(s.theta, linkage) + linkage.mount_offset;
  s.v_b = s.v_f + leg_jacobian(s.theta, linkage) * s.theta_dot;
  return s;
}

DynamicsEval dynamics_derivative(const HopperState& state, double tau, const TerrainParams& terrain,
                                 const LinkageParams& linkage) {
  const auto gd = generalized_dynamics(state.theta, linkage);
  const double thd2 = state.theta_dot * state.theta_dot;
  const Eigen::Vector2d rhs_free = gd.torque_map * tau - gd.centrifugal * thd2 - gd.gravity;

  DynamicsEval out;
  out.z = penetration_depth(state.x_f, terrain);
  out.z_dot = -state.v_f;

  auto solve = [&](double added_mass, double contact_force) {
    Eigen::Matrix2d M = gd.mass;
    M(0, 0) += added_mass;
    Eigen::Vector2d rhs = rhs_free;
    rhs(0) += contact_force;
    return Eigen::Vector2d(M.partialPivLu().solve(rhs));
  };

  Eigen::Vector2d qdd;
  if (out.z > 0.0 && out.z_dot >= 0.0) {
    // Penetrating: m_a zdd = -m_a xdd_f moves onto the inertia side.
    const auto [m_a, dm_a] = added_mass_profile(out.z, terrain);
    const double explicit_force = static_resistance(out.z, terrain, state.z_peak) + dm_a * out.z_dot * out.z_dot;
    qdd = solve(m_a, explicit_force);
    out.force = terrain_force(out.z, out.z_dot, -qdd(0), terrain, state.z_peak);
    if (out.force.clamped) {
      // Granular media cannot pull; the foot moves freely and the law clamps
      // at the free acceleration as well.
      qdd = solve(0.0, 0.0);
      out.force = terrain_force(out.z, out.z_dot, -qdd(0), terrain, state.z_peak);
    }
  } else if (out.z > 0.0) {
    out.force = terrain_force(out.z, out.z_dot, 0.0, terrain, state.z_peak);
    qdd = solve(0.0, out.force.f_total);
  } else {
    qdd = solve(0.0, 0.0);
  }
  out.z_ddot = -qdd(0);

  const double J = leg_jacobian(state.theta, linkage);
  const double Jd = leg_jacobian_rate(state.theta, linkage);
  out.derivative << state.v_f, qdd(0), state.theta_dot, qdd(1);
  out.body_acc = qdd(0) + J * qdd(1) + Jd * thd2;
  return out;
}

double SimConfig::drop_height() const {
  if (release_height >= 0.0) return release_height;
  return touchdown_speed * touchdown_speed / (2.0 * kGravity<double>);
}

NoiseConfig NoiseConfig::none() {
  NoiseConfig n;
  n.encoder_resolution = 0.0;
  n.encoder_sigma = 0.0;
  n.imu_sigma = 0.0;
  n.imu_bias_max = 0.0;
  n.tof_sigma = 0.0;
  n.current_sigma = 0.0;
  n.loadcell_sigma = 0.0;
  return n;
}

SensorModel::SensorModel(const NoiseConfig& noise, double period, std::uint64_t seed)
    : noise_(noise), period_(period), rng_(seed) {
  if (noise_.imu_bias_max > 0.0) {
    std::uniform_real_distribution<double> bias(-noise_.imu_bias_max, noise_.imu_bias_max);
    bias_body_ = bias(rng_);
    bias_foot_ = bias(rng_);
  }
}

double SensorModel::gaussian(double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng_);
}

SensorFrame SensorModel::sample(const TruthSample& truth, const LinkageParams& linkage) {
  const HopperState& s = truth.state;
  SensorFrame f;
  f.t = s.t;

  double theta = s.theta + gaussian(noise_.encoder_sigma);
  if (noise_.encoder_resolution > 0.0) theta = std::round(theta / noise_.encoder_resolution) * noise_.encoder_resolution;
  f.encoder_theta = theta;

  // Driver-side rate: backward difference over the last `window` samples,
  // identical to a moving average of one-step differences.
  encoder_history_.push_back(theta);
  const int window = std::max(1, noise_.encoder_rate_window);
  if (static_cast<int>(encoder_history_.size()) > window + 1) encoder_history_.erase(encoder_history_.begin());
  const auto span = static_cast<double>(encoder_history_.size() - 1);
  f.encoder_theta_dot = span > 0 ? (encoder_history_.back() - encoder_history_.front()) / (span * period_) : 0.0;

  f.imu_body_acc = truth.body_acc + bias_body_ + gaussian(noise_.imu_sigma);
  f.imu_foot_acc = truth.foot_acc + bias_foot_ + gaussian(noise_.imu_sigma);
  f.tof_height = s.x_b + gaussian(noise_.tof_sigma);
  f.motor_current = truth.tau / linkage.torque_constant + gaussian(noise_.current_sigma);
  f.loadcell_force = truth.force.f_total + gaussian(noise_.loadcell_sigma);
  return f;
}

SensorFrame sample_sensors(const TruthSample& truth, SensorModel& model, const LinkageParams& linkage) {
  return model.sample(truth, linkage);
}

namespace {

LegSignals leg_signals(const HopperState& s, double contact_force, const TerrainParams& terrain,
                       const LinkageParams& linkage) {
  LegSignals sig;
  sig.L = leg_length(s.theta, linkage);
  sig.L_dot = leg_jacobian(s.theta, linkage) * s.theta_dot;
  sig.x_f = s.x_f;
  sig.v_f = s.v_f;
  sig.penetration = penetration_depth(s.x_f, terrain);
  sig.F_c = contact_force;
  return sig;
}

bool finite(const StateVector& q) { return q.allFinite(); }

}  // namespace

TrialLog run_hop_trial(const TrialSetup& setup, std::uint64_t seed) {
  const auto& sim = setup.sim;
  const auto& linkage = setup.linkage;
  const auto& terrain = setup.terrain;
  validate(linkage);
  validate(terrain);
  validate(setup.controller, linkage);
  if (!(sim.dt > 0.0) || !(sim.sensor_period >= sim.dt)) throw DomainError("sim: invalid time steps");
  const long decimation = std::lround(sim.sensor_period / sim.dt);
  if (std::abs(decimation * sim.dt - sim.sensor_period) > 1e-12)
    throw DomainError("sim: sensor period must be an integer multiple of dt");
  if (sim.release_height < 0.0 && !(sim.touchdown_speed >= 0.0)) throw DomainError("sim: touchdown speed must be >= 0");

  TrialLog log;
  log.setup = setup;
  log.seed = seed;

  HopperState state;
  state.theta = leg_angle_for_length(setup.controller.L0_compress, linkage);
  state.x_f = terrain.surface_height + sim.drop_height();
  state = from_vector(to_vector(state), state, linkage);

  SensorModel sensors(setup.noise, sim.sensor_period, seed);
  double last_contact_force = 0.0;
  double t_liftoff = -1.0;
  const long max_steps = std::lround(sim.t_max / sim.dt);

  for (long n = 0; n <= max_steps; ++n) {
    state.t = static_cast<double>(n) * sim.dt;
    try {
      const Phase previous = state.phase;
      state.phase = next_phase(state.phase, leg_signals(state, last_contact_force, terrain, linkage),
                               setup.controller, state.t);
      if (previous.kind == PhaseKind::kExtension && state.phase.kind == PhaseKind::kFlight) t_liftoff = state.t;

      const double L = leg_length(state.theta, linkage);
      const double L_dot = leg_jacobian(state.theta, linkage) * state.theta_dot;
      const double F_leg = virtual_leg_force(state.phase.kind, L, L_dot, setup.controller);
      const double tau = motor_torque(F_leg, state.theta, linkage);

      const DynamicsEval eval = dynamics_derivative(state, tau, terrain, linkage);
      TruthSample sample;
      sample.state = state;
      sample.contact = state.x_f <= terrain.surface_height;
      sample.tau = tau;
      sample.leg_force_command = F_leg;
      sample.foot_acc = eval.derivative(1);
      sample.theta_acc = eval.derivative(3);
      sample.body_acc = eval.body_acc;
      sample.z = eval.z;
      sample.z_dot = eval.z_dot;
      sample.z_ddot = eval.z_ddot;
      sample.force = eval.force;
      log.truth.push_back(sample);
      if (n % decimation == 0) {
        SensorFrame frame = sensors.sample(sample, linkage);
        frame.t = static_cast<double>(n / decimation) * sim.sensor_period;
        log.frames.push_back(frame);
      }
      last_contact_force = eval.force.f_total;

      if (t_liftoff >= 0.0 && state.t >= t_liftoff + sim.post_liftoff) break;
      if (n == max_steps) break;

      // Classical RK4 with zero-order-hold torque.
      auto f = [&](const StateVector& q) {
        return dynamics_derivative(from_vector(q, state, linkage), tau, terrain, linkage).derivative;
      };
      const StateVector q0 = to_vector(state);
      const StateVector k1 = eval.derivative;
      const StateVector k2 = f(q0 + 0.5 * sim.dt * k1);
      const StateVector k3 = f(q0 + 0.5 * sim.dt * k2);
      const StateVector k4 = f(q0 + sim.dt * k3);
      const StateVector q1 = q0 + sim.dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!finite(q1)) {
        std::ostringstream os;
        os << "non-finite state at t = " << state.t + sim.dt << " s";
        throw IntegrationError(os.str(), state.t + sim.dt);
      }
      state = from_vector(q1, state, linkage);
      state.z_peak = std::max(state.z_peak, penetration_depth(state.x_f, terrain));
    } catch (const DomainError& e) {
      std::ostringstream os;
      os << "integration left the valid domain at t = " << state.t << " s: " << e.what();
      throw IntegrationError(os.str(), state.t);
    }
  }

  log.events = detect_events(log.truth);
  return log;
}

TrialEvents detect_events(const std::vector<TruthSample>& truth) {
  const auto td = std::find_if(truth.begin(), truth.end(), [](const TruthSample& s) { return s.contact; });
  if (td == truth.end()) throw TrialMalformedError("trial has no touchdown");
  const auto ce = std::find_if(td, truth.end(),
                               [](const TruthSample& s) { return s.state.phase.kind == PhaseKind::kExtension; });
  if (ce == truth.end()) throw TrialMalformedError("trial has no compression-extension transition");
  const auto flight = std::find_if(ce, truth.end(),
                                   [](const TruthSample& s) { return s.state.phase.kind == PhaseKind::kFlight; });
  if (flight == truth.end()) throw TrialMalformedError("trial has no liftoff");
  auto lo = flight;
  while (lo != ce && !(lo->force.f_total > 0.0)) --lo;
  if (lo == ce) throw TrialMalformedError("trial has no loaded stance after the compression-extension transition");

  TrialEvents ev;
  ev.t_td = td->state.t;
  ev.t_ce = ce->state.phase.entered_at;
  ev.t_lo = lo->state.t;
  ev.v_td = -td->state.v_f;
  if (!(ev.t_td < ev.t_ce && ev.t_ce < ev.t_lo)) throw TrialMalformedError("trial events out of order");
  return ev;
}

IntrusionLog run_constant_speed_intrusion(double speed, double z_max, const TerrainParams& terrain,
                                          double loadcell_sigma, std::uint64_t seed, double sample_period) {
  if (!(speed > 0.0)) throw DomainError("intrusion: speed must be positive");
  if (!(z_max > 0.0)) throw DomainError("intrusion: z_max must be positive");
  if (!(sample_period > 0.0)) throw DomainError("intrusion: sample period must be positive");
  validate(terrain);

  IntrusionLog log;
  log.speed = speed;
  log.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, loadcell_sigma > 0.0 ? loadcell_sigma : 1.0);

  const double t_end = z_max / speed;
  const auto n_samples = static_cast<long>(std::floor(t_end / sample_period + 1e-9));
  for (long k = 0; k <= n_samples + 1; ++k) {
    double t = static_cast<double>(k) * sample_period;
    if (k == n_samples + 1) {
      if (t_end - static_cast<double>(n_samples) * sample_period < 1e-12) break;
      t = t_end;  // final sample exactly at the maximum depth
    }
    IntrusionSample s;
    s.t = t;
    s.depth = std::min(speed * t, z_max);
    s.speed = speed;
    s.force = terrain_force(s.depth, speed, 0.0, terrain).f_total;
    if (loadcell_sigma > 0.0) s.force += noise(rng);
    log.samples.push_back(s);
  }
  return log;
}

}  // namespace hopperlab
