#pragma once

// Terrain-parameter recovery from stance data and intrusion sweeps.
//
// Hop trials are reduced to (z, zd, zdd, F) samples and fitted with a
// depth-linear model F = k z + c. The acceleration-aware fit assigns each
// sample an inverse-variance weight that grows from 1/sigma_bad^2 to
// 1/sigma_good^2 as |zdd| falls below a0.

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hopperlab/estimation.hpp"
#include "hopperlab/simulator.hpp"
#include "hopperlab/terrain.hpp"

namespace hopperlab {

enum class ForceSource { kQS, kMO, kLoadcell };

std::string_view to_string(ForceSource source);

struct RegressionSample {
  double z = 0.0;
  double z_dot = 0.0;
  double z_ddot = 0.0;
  double F = 0.0;
  double t = 0.0;
  ForceSource source = ForceSource::kMO;
};

struct WeightConfig {
  double sigma_good = 1.0;  // [N]
  double sigma_bad = 20.0;  // [N]
  double k_w = 0.5;         // sigmoid slope [s^2/m]
  double a0 = 5.0;          // acceleration threshold [m/s^2]
};

void validate(const WeightConfig& config);

enum class Treatment { kNoMoNoGd, kMoNoGd, kMoGd };

std::string_view to_string(Treatment treatment);

struct FitResult {
  double k_est = 0.0;
  double intercept = 0.0;
  double rmse = 0.0;  // weighted
  std::size_t n_samples = 0;
  Treatment treatment = Treatment::kNoMoNoGd;
};

// Which part of stance feeds the fit. kLoading keeps samples up to the deepest
// estimated penetration. kVirgin keeps only advancing samples at a new maximum
// depth, the only ones where the intrusion law holds term by term.
enum class WindowPolicy { kStance, kLoading, kVirgin };

// Samples in [TD, LO] with positive estimated penetration. z comes from the KF
// foot height, zd and zdd from a local-quadratic smoother over the KF foot
// velocity. Loadcell forces are read from `frames` (same indexing as the rows).
std::vector<RegressionSample> extract_samples(const ForceEstimateSeries& series,
                                              std::span<const SensorFrame> frames, const TrialEvents& events,
                                              ForceSource source, WindowPolicy policy,
                                              const TerrainParams& terrain, int smoothing_window = 11);

// Same windowing over the truth trajectory; F is the truth contact force.
std::vector<RegressionSample> truth_samples(const TrialLog& log, WindowPolicy policy);

// Least-squares value (order 0) or first derivative (order 1) of a local
// quadratic over `window` samples at uniform spacing dt. Ends use the nearest
// full window.
std::vector<double> savitzky_golay(std::span<const double> y, double dt, int window, int order);

FitResult ols_linear_fit(std::span<const RegressionSample> samples);
double acceleration_weight(double z_ddot, const WeightConfig& config);
FitResult wls_linear_fit(std::span<const RegressionSample> samples, const WeightConfig& config);
// Weighted fit with caller-supplied weights.
FitResult weighted_linear_fit(std::span<const RegressionSample> samples, std::span<const double> weights);

struct DepthSpeedFit {
  double k_fit = 0.0;
  double m_a_inf_fit = 0.0;
  double z_c_fit = 0.0;
  double rmse = 0.0;
  double max_abs_residual = 0.0;
  std::size_t n_samples = 0;

  double added_mass_gradient(double z) const;
};

// F = k z + g_a(z) v^2 with g_a(z) = (m_inf / z_c) exp(-z / z_c), over
// constant-speed intrusion samples. Linear in (k, m_inf) for fixed z_c; z_c is
// found by a bracketed 1-D search on the projected residual.
DepthSpeedFit fit_depth_speed_model(std::span<const IntrusionLog> logs);

struct AddedMassSeries {
  std::vector<double> t;
  std::vector<double> predicted;  // m_a(z) zdd
  std::vector<double> residual;   // F - k z - g_a(z) zd^2
};

// m_a(z) is the trapezoid integral of the fitted gradient from the surface.
AddedMassSeries added_mass_reconstruction(const DepthSpeedFit& fit, std::span<const RegressionSample> samples,
                                          int quadrature_intervals = 200);

// Copies of the samples with the fitted velocity-squared term removed from F.
std::vector<RegressionSample> subtract_drag(std::span<const RegressionSample> samples, const DepthSpeedFit& fit);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
  std::size_t n = 0;
};

MeanSem mean_sem(std::span<const double> values);

// Regression inputs of one hop trial.
struct TrialSamples {
  double v_td = 0.0;  // nominal touchdown speed of the condition
  double k_c = 0.0;   // [N/m]
  std::uint64_t seed = 0;
  std::vector<RegressionSample> qs;
  std::vector<RegressionSample> mo;
};

struct TreatmentEstimate {
  double v_td = 0.0;
  double k_c = 0.0;
  std::uint64_t seed = 0;
  Treatment treatment = Treatment::kNoMoNoGd;
  double k_est = 0.0;
};

struct TreatmentSummary {
  double v_td = 0.0;
  double k_c = 0.0;
  Treatment treatment = Treatment::kNoMoNoGd;
  double mean_k = 0.0;
  double sem_k = 0.0;
  double rel_err = 0.0;  // |mean_k - k_gt| / k_gt
  std::size_t n = 0;
};

struct TreatmentReport {
  double k_gt = 0.0;
  std::vector<TreatmentSummary> summaries;  // sorted by (v_td, k_c, treatment)
  std::vector<TreatmentEstimate> estimates;  // sorted by (v_td, k_c, treatment, seed)

  const TreatmentSummary& find(double v_td, double k_c, Treatment treatment) const;
};

// noMO_noGD: OLS on QS samples; MO_noGD: OLS on MO samples; MO_GD: WLS on MO
// samples. With `drag` set, the fitted velocity-squared term is removed from
// every sample first.
TreatmentReport treatment_comparison(std::span<const TrialSamples> trials, double k_gt, const WeightConfig& weights,
                                     const DepthSpeedFit* drag = nullptr);

}  // namespace hopperlab
