#pragma once

// Reduced kinematics and dynamics of the symmetric five-bar leg.
//
// Each side of the leg is a two-bar chain: an actuated upper link of length
// l_upper at joint angle theta (measured from the vertical) and a passive
// lower link of length l_lower meeting the opposite chain at the foot. The
// vertical hip-to-foot distance is
//
//   L(theta) = l_upper cos(theta) + sqrt(l_lower^2 - l_upper^2 sin^2(theta)),
//
// which is strictly decreasing on (0, pi/2). Generalized coordinates are
// q = [x_f, theta]; the body sits at x_b = x_f + L(theta) + mount_offset.

#include <Eigen/Core>
#include <Eigen/LU>

#include <cassert>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hopperlab/errors.hpp"

namespace hopperlab {

template <typename Scalar>
inline constexpr Scalar kGravity = Scalar(9.81);

template <typename Scalar>
inline constexpr Scalar kJacobianEpsilon = Scalar(1e-4);

template <typename Scalar>
struct LinkageParamsT {
  Scalar l_upper = Scalar(0.10);
  Scalar l_lower = Scalar(0.20);
  Scalar theta_min = Scalar(0.10);
  Scalar theta_max = Scalar(1.50);
  Scalar rotor_inertia = Scalar(5e-4);  // per motor, reflected [kg m^2]
  Scalar torque_constant = Scalar(0.14);
  Scalar m_body = Scalar(0.8);
  Scalar m_foot = Scalar(0.3);
  Scalar mount_offset = Scalar(0.05);  // body datum above the hip joint [m]
};

using LinkageParams = LinkageParamsT<double>;

template <typename Scalar>
struct DynamicsCoeffsT {
  Scalar M_f;
  Scalar dMf_dtheta;
  Scalar beta;
  Scalar C_coef;
};

using DynamicsCoeffs = DynamicsCoeffsT<double>;

// Full two-coordinate model  M(q) qdd + h(q, qd) + g(q) = s tau + [F_c, 0]^T
// with tau the per-motor torque (positive extends the leg).
template <typename Scalar>
struct GeneralizedDynamicsT {
  Eigen::Matrix<Scalar, 2, 2> mass;
  Eigen::Matrix<Scalar, 2, 2> dmass_dtheta;
  Eigen::Matrix<Scalar, 2, 1> centrifugal;  // coefficient of theta_dot^2
  Eigen::Matrix<Scalar, 2, 1> gravity;
  Eigen::Matrix<Scalar, 2, 1> torque_map;
};

template <typename Scalar>
void validate(const LinkageParamsT<Scalar>& p) {
  auto fail = [](const char* msg) { throw DomainError(std::string("linkage: ") + msg); };
  if (!(p.l_upper > 0) || !(p.l_lower > p.l_upper)) fail("require l_lower > l_upper > 0");
  if (!(p.theta_min > 0) || !(p.theta_max > p.theta_min) ||
      !(p.theta_max < std::numbers::pi_v<Scalar> / 2))
    fail("require 0 < theta_min < theta_max < pi/2");
  if (!(p.rotor_inertia > 0) || !(p.m_body > 0) || !(p.m_foot > 0))
    fail("masses and inertias must be positive");
  if (!(p.torque_constant > 0)) fail("torque_constant must be positive");
}

namespace detail {

template <typename Scalar>
void check_angle(Scalar theta, const LinkageParamsT<Scalar>& p) {
  if (!(theta >= p.theta_min && theta <= p.theta_max)) {
    std::ostringstream os;
    os << "joint angle " << theta << " rad outside [" << p.theta_min << ", " << p.theta_max << "]";
    throw DomainError(os.str());
  }
}

template <typename Scalar>
Scalar lower_root(Scalar theta, const LinkageParamsT<Scalar>& p) {
  using std::sin;
  using std::sqrt;
  const Scalar s = sin(theta);
  return sqrt(p.l_lower * p.l_lower - p.l_upper * p.l_upper * s * s);
}

}  // namespace detail

template <typename Scalar>
Scalar leg_length(Scalar theta, const LinkageParamsT<Scalar>& p) {
  using std::cos;
  detail::check_angle(theta, p);
  return p.l_upper * cos(theta) + detail::lower_root(theta, p);
}

// dL/dtheta.
template <typename Scalar>
Scalar leg_jacobian(Scalar theta, const LinkageParamsT<Scalar>& p) {
  using std::cos;
  using std::sin;
  detail::check_angle(theta, p);
  const Scalar s = sin(theta), c = cos(theta);
  const Scalar l1 = p.l_upper;
  return -l1 * s - l1 * l1 * s * c / detail::lower_root(theta, p);
}

// d^2L/dtheta^2.
template <typename Scalar>
Scalar leg_jacobian_rate(Scalar theta, const LinkageParamsT<Scalar>& p) {
  using std::cos;
  using std::sin;
  detail::check_angle(theta, p);
  const Scalar s = sin(theta), c = cos(theta);
  const Scalar l1 = p.l_upper, l1sq = l1 * l1;
  const Scalar r = detail::lower_root(theta, p);
  return -l1 * c - l1sq * (c * c - s * s) / r - l1sq * l1sq * s * s * c * c / (r * r * r);
}

// Inverse of leg_length (law of cosines on the lower link).
template <typename Scalar>
Scalar leg_angle_for_length(Scalar length, const LinkageParamsT<Scalar>& p) {
  using std::acos;
  const Scalar l1 = p.l_upper, l2 = p.l_lower;
  const Scalar c = (length * length - l2 * l2 + l1 * l1) / (Scalar(2) * length * l1);
  if (!(c >= Scalar(-1) && c <= Scalar(1))) throw DomainError("leg length outside linkage workspace");
  const Scalar theta = acos(c);
  detail::check_angle(theta, p);
  return theta;
}

template <typename Scalar>
GeneralizedDynamicsT<Scalar> generalized_dynamics(Scalar theta, const LinkageParamsT<Scalar>& p) {
  const Scalar J = leg_jacobian(theta, p);
  const Scalar Jd = leg_jacobian_rate(theta, p);
  const Scalar mb = p.m_body;
  const Scalar g = kGravity<Scalar>;

  GeneralizedDynamicsT<Scalar> out;
  out.mass << p.m_foot + mb, mb * J,
              mb * J, mb * J * J + Scalar(2) * p.rotor_inertia;
  out.dmass_dtheta << Scalar(0), mb * Jd,
                      mb * Jd, Scalar(2) * mb * J * Jd;
  out.centrifugal << mb * Jd, mb * J * Jd;
  out.gravity << (p.m_foot + mb) * g, mb * g * J;
  out.torque_map << Scalar(0), Scalar(-2);
  return out;
}

// Foot-channel coefficients of
//   M_f xdd_f + M_f g = F_c - beta tau - C theta_dot^2,
// obtained by eliminating theta_dd from the two-coordinate model.
template <typename Scalar>
DynamicsCoeffsT<Scalar> reduced_dynamics_coeffs(Scalar theta, const LinkageParamsT<Scalar>& p) {
  const auto gd = generalized_dynamics(theta, p);
  const Scalar m11 = gd.mass(0, 0), m12 = gd.mass(0, 1), m22 = gd.mass(1, 1);
  if (!(std::abs(gd.mass.determinant()) > Scalar(0)) || !(m22 > Scalar(0)))
    throw NumericError("singular linkage mass matrix");
  const Scalar ratio = m12 / m22;
  const Scalar dm12 = gd.dmass_dtheta(0, 1), dm22 = gd.dmass_dtheta(1, 1);

  DynamicsCoeffsT<Scalar> c;
  c.M_f = m11 - m12 * ratio;
  c.dMf_dtheta = -(Scalar(2) * m12 * dm12 * m22 - m12 * m12 * dm22) / (m22 * m22);
  c.beta = -(gd.torque_map(0) - ratio * gd.torque_map(1));
  c.C_coef = gd.centrifugal(0) - ratio * gd.centrifugal(1);
  return c;
}

// Jacobian-transpose map from per-motor torque to vertical foot force.
template <typename Scalar>
Scalar quasi_static_force_from_jacobian(Scalar tau_per_motor, Scalar jacobian) {
  using std::abs;
  if (abs(jacobian) < kJacobianEpsilon<Scalar>) throw SingularityError("leg Jacobian near singular");
  return Scalar(2) * tau_per_motor / abs(jacobian);
}

template <typename Scalar>
Scalar quasi_static_force(Scalar tau_per_motor, Scalar theta, const LinkageParamsT<Scalar>& p) {
  return quasi_static_force_from_jacobian(tau_per_motor, leg_jacobian(theta, p));
}

}  // namespace hopperlab
