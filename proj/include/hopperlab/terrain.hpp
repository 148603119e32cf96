#pragma once

// Granular reaction law for vertical intrusion of the foot:
//
//   F_g(z, zd, zdd) = k z + (dm_a/dz) zd^2 + m_a(z) zdd,
//   m_a(z) = m_a_inf (1 - exp(-z / z_c)).
//
// Momentum-flux terms act only while the foot penetrates (zd >= 0). Once the
// foot backs out of its deepest point the depth term follows a stiff elastic
// unloading branch, so the foot separates below the undisturbed surface.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>

#include "hopperlab/errors.hpp"
#include "hopperlab/linkage.hpp"

namespace hopperlab {

template <typename Scalar>
struct TerrainParamsT {
  Scalar k_stiff = Scalar(800.0);
  Scalar m_a_inf = Scalar(0.15);
  Scalar z_c = Scalar(0.015);
  Scalar d_grain = Scalar(300e-6);
  Scalar surface_height = Scalar(0.0);
  Scalar unload_stiffness_ratio = Scalar(20.0);  // unloading stiffness / k_stiff
};

using TerrainParams = TerrainParamsT<double>;

template <typename Scalar>
struct ForceDecompositionT {
  Scalar f_static = Scalar(0);
  Scalar f_drag = Scalar(0);
  Scalar f_added = Scalar(0);
  Scalar f_total = Scalar(0);
  bool clamped = false;  // components summed below zero; f_total held at 0
};

using ForceDecomposition = ForceDecompositionT<double>;

template <typename Scalar>
void validate(const TerrainParamsT<Scalar>& p) {
  auto fail = [](const char* msg) { throw DomainError(std::string("terrain: ") + msg); };
  if (!(p.k_stiff > 0)) fail("k_stiff must be positive");
  if (!(p.m_a_inf >= 0)) fail("m_a_inf must be nonnegative");
  if (!(p.z_c > 0)) fail("z_c must be positive");
  if (!(p.d_grain > 0 && p.d_grain < Scalar(0.01))) fail("d_grain must lie in (0, 0.01) m");
  if (!(p.unload_stiffness_ratio >= 1)) fail("unload_stiffness_ratio must be >= 1");
}

template <typename Scalar>
Scalar penetration_depth(Scalar x_f, const TerrainParamsT<Scalar>& p) {
  return std::max(Scalar(0), p.surface_height - x_f);
}

// Returns (m_a, dm_a/dz).
template <typename Scalar>
std::pair<Scalar, Scalar> added_mass_profile(Scalar z, const TerrainParamsT<Scalar>& p) {
  using std::exp;
  if (z < Scalar(0)) throw DomainError("added_mass_profile: negative depth");
  const Scalar decay = exp(-z / p.z_c);
  return {p.m_a_inf * (Scalar(1) - decay), p.m_a_inf / p.z_c * decay};
}

// Depth term including the unloading branch below the deepest point z_peak.
template <typename Scalar>
Scalar static_resistance(Scalar z, const TerrainParamsT<Scalar>& p, Scalar z_peak = Scalar(0)) {
  if (z <= Scalar(0)) return Scalar(0);
  if (z >= z_peak) return p.k_stiff * z;
  const Scalar k_unload = p.unload_stiffness_ratio * p.k_stiff;
  return std::max(Scalar(0), p.k_stiff * z_peak - k_unload * (z_peak - z));
}

template <typename Scalar>
ForceDecompositionT<Scalar> terrain_force(Scalar z, Scalar z_dot, Scalar z_ddot,
                                          const TerrainParamsT<Scalar>& p,
                                          Scalar z_peak = Scalar(0)) {
  if (z < Scalar(0)) throw DomainError("terrain_force: negative depth");
  ForceDecompositionT<Scalar> out;
  if (z == Scalar(0)) return out;
  out.f_static = static_resistance(z, p, z_peak);
  if (z_dot >= Scalar(0)) {
    const auto [m_a, dm_a] = added_mass_profile(z, p);
    out.f_drag = dm_a * z_dot * z_dot;
    out.f_added = m_a * z_ddot;
  }
  out.f_total = out.f_static + out.f_drag + out.f_added;
  if (out.f_total < Scalar(0)) {
    out.f_total = Scalar(0);
    out.clamped = true;
  }
  return out;
}

// Speed above which velocity-dependent granular forces matter.
template <typename Scalar>
Scalar inertial_threshold(Scalar d_grain) {
  using std::sqrt;
  if (!(d_grain > Scalar(0))) throw DomainError("inertial_threshold: grain diameter must be positive");
  return sqrt(Scalar(2) * d_grain * kGravity<Scalar>);
}

// Constant-speed force surface; rows follow depth_grid, columns speed_grid.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> force_map(const TerrainParamsT<Scalar>& p,
                                                                std::span<const Scalar> depth_grid,
                                                                std::span<const Scalar> speed_grid) {
  if (depth_grid.empty() || speed_grid.empty()) throw DomainError("force_map: empty grid");
  if (!std::is_sorted(depth_grid.begin(), depth_grid.end()) ||
      !std::is_sorted(speed_grid.begin(), speed_grid.end()))
    throw DomainError("force_map: grids must be sorted ascending");
  if (depth_grid.front() < Scalar(0) || speed_grid.front() < Scalar(0))
    throw DomainError("force_map: grids must be nonnegative");

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> surface(depth_grid.size(), speed_grid.size());
  for (Eigen::Index i = 0; i < surface.rows(); ++i)
    for (Eigen::Index j = 0; j < surface.cols(); ++j)
      surface(i, j) = terrain_force(depth_grid[i], speed_grid[j], Scalar(0), p).f_total;
  return surface;
}

}  // namespace hopperlab
