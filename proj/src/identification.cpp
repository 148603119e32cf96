#include "hopperlab/identification.hpp"

#include <Eigen/QR>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "hopperlab/errors.hpp"

namespace hopperlab {

std::string_view to_string(ForceSource source) {
  switch (source) {
    case ForceSource::kQS: return "QS";
    case ForceSource::kMO: return "MO";
    case ForceSource::kLoadcell: return "loadcell";
  }
  return "?";
}

std::string_view to_string(Treatment treatment) {
  switch (treatment) {
    case Treatment::kNoMoNoGd: return "noMO_noGD";
    case Treatment::kMoNoGd: return "MO_noGD";
    case Treatment::kMoGd: return "MO_GD";
  }
  return "?";
}

void validate(const WeightConfig& c) {
  if (!(c.sigma_good > 0.0 && c.sigma_good <= c.sigma_bad))
    throw ConfigError("weight: need 0 < sigma_good <= sigma_bad");
  if (!(c.k_w > 0.0)) throw ConfigError("weight: k_w must be positive");
  if (!(c.a0 > 0.0)) throw ConfigError("weight: a0 must be positive");
}

std::vector<double> savitzky_golay(std::span<const double> y, double dt, int window, int order) {
  if (order != 0 && order != 1) throw DomainError("savitzky_golay: order must be 0 or 1");
  if (!(dt > 0.0)) throw DomainError("savitzky_golay: dt must be positive");
  const int n = static_cast<int>(y.size());
  if (n < 3) throw DomainError("savitzky_golay: need at least 3 samples");
  const int w = std::min(std::max(window, 3), n);

  // Row `order` of the local-quadratic pseudo-inverse, one per evaluation offset.
  std::vector<Eigen::VectorXd> rows(static_cast<std::size_t>(w));
  for (int p = 0; p < w; ++p) {
    Eigen::MatrixXd V(w, 3);
    for (int j = 0; j < w; ++j) {
      const double x = (j - p) * dt;
      V(j, 0) = 1.0;
      V(j, 1) = x;
      V(j, 2) = x * x;
    }
    const Eigen::MatrixXd pinv = V.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(w, w));
    rows[static_cast<std::size_t>(p)] = pinv.row(order).transpose();
  }

  std::vector<double> out(y.size());
  const int half = w / 2;
  for (int i = 0; i < n; ++i) {
    const int start = std::clamp(i - half, 0, n - w);
    const auto& c = rows[static_cast<std::size_t>(i - start)];
    double acc = 0.0;
    for (int j = 0; j < w; ++j) acc += c(j) * y[static_cast<std::size_t>(start + j)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

namespace {

// Index one past the last sample kept by the window policy.
std::size_t loading_end(const std::vector<double>& z) {
  const auto it = std::max_element(z.begin(), z.end());
  return static_cast<std::size_t>(it - z.begin()) + 1;
}

void apply_window(std::vector<RegressionSample>& samples, WindowPolicy policy) {
  if (policy == WindowPolicy::kStance) return;
  if (policy == WindowPolicy::kLoading) {
    std::vector<double> depth(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) depth[i] = samples[i].z;
    samples.resize(loading_end(depth));
    return;
  }
  // Fresh material only: advancing and at least as deep as anything seen before.
  double z_peak = 0.0;
  std::vector<RegressionSample> kept;
  for (const auto& s : samples) {
    if (s.z_dot >= 0.0 && s.z >= z_peak) kept.push_back(s);
    z_peak = std::max(z_peak, s.z);
  }
  samples = std::move(kept);
}

}  // namespace

std::vector<RegressionSample> extract_samples(const ForceEstimateSeries& series,
                                              std::span<const SensorFrame> frames, const TrialEvents& events,
                                              ForceSource source, WindowPolicy policy,
                                              const TerrainParams& terrain, int smoothing_window) {
  if (!(events.t_td < events.t_ce && events.t_ce < events.t_lo))
    throw TrialMalformedError("extract_samples: events out of order");
  if (source == ForceSource::kLoadcell && frames.size() < series.rows.size())
    throw MissingInputError("extract_samples: loadcell source needs the sensor frames");
  const auto& rows = series.rows;
  if (rows.size() < 3) throw TrialMalformedError("extract_samples: too few rows");

  // Smooth over the whole record so the stance edges see full windows.
  std::vector<double> v_f(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) v_f[k] = rows[k].x_hat(3);
  const double dt = (rows.back().t - rows.front().t) / static_cast<double>(rows.size() - 1);
  const auto v_smooth = savitzky_golay(v_f, dt, smoothing_window, 0);
  const auto a_smooth = savitzky_golay(v_f, dt, smoothing_window, 1);

  std::vector<RegressionSample> out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.t < events.t_td || r.t > events.t_lo) continue;
    const double z = penetration_depth(r.x_hat(2), terrain);
    if (!(z > 0.0)) continue;
    double F = 0.0;
    switch (source) {
      case ForceSource::kQS: F = r.F_qs; break;
      case ForceSource::kMO: F = r.F_mo; break;
      case ForceSource::kLoadcell: F = frames[k].loadcell_force; break;
    }
    if (!std::isfinite(F)) continue;
    out.push_back({z, -v_smooth[k], -a_smooth[k], F, r.t, source});
  }
  apply_window(out, policy);
  if (out.empty()) throw TrialMalformedError("extract_samples: empty stance window");
  return out;
}

std::vector<RegressionSample> truth_samples(const TrialLog& log, WindowPolicy policy) {
  const auto& ev = log.events;
  if (!(ev.t_td < ev.t_ce && ev.t_ce < ev.t_lo)) throw TrialMalformedError("truth_samples: events out of order");
  const auto decimation = static_cast<std::size_t>(std::lround(log.setup.sim.sensor_period / log.setup.sim.dt));
  std::vector<RegressionSample> out;
  for (std::size_t idx = 0; idx < log.truth.size(); idx += decimation) {
    const auto& s = log.truth[idx];
    if (s.state.t < ev.t_td || s.state.t > ev.t_lo || !(s.z > 0.0)) continue;
    out.push_back({s.z, s.z_dot, s.z_ddot, s.force.f_total, s.state.t, ForceSource::kLoadcell});
  }
  apply_window(out, policy);
  if (out.empty()) throw TrialMalformedError("truth_samples: empty stance window");
  return out;
}

FitResult weighted_linear_fit(std::span<const RegressionSample> samples, std::span<const double> weights) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n < 2) throw DegenerateFitError("linear fit: need at least 2 samples");
  if (weights.size() != samples.size()) throw DomainError("linear fit: one weight per sample");
  double w_sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("linear fit: weights must be finite and nonnegative");
    w_sum += w;
  }
  if (!(w_sum > 0.0)) throw DegenerateFitError("linear fit: total weight is zero");

  const auto [zmin, zmax] = std::minmax_element(samples.begin(), samples.end(),
                                                [](const auto& a, const auto& b) { return a.z < b.z; });
  if (!(zmax->z > zmin->z)) throw DegenerateFitError("linear fit: all samples share one depth");

  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sw = std::sqrt(weights[static_cast<std::size_t>(i)]);
    X(i, 0) = sw * samples[static_cast<std::size_t>(i)].z;
    X(i, 1) = sw;
    y(i) = sw * samples[static_cast<std::size_t>(i)].F;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 2) throw DegenerateFitError("linear fit: weighted design is rank deficient");
  const Eigen::Vector2d beta = qr.solve(y);

  FitResult fit;
  fit.k_est = beta(0);
  fit.intercept = beta(1);
  fit.n_samples = samples.size();
  double ss = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double r = samples[i].F - fit.k_est * samples[i].z - fit.intercept;
    ss += weights[i] * r * r;
  }
  fit.rmse = std::sqrt(ss / w_sum);
  if (!std::isfinite(fit.k_est)) throw DegenerateFitError("linear fit: non-finite slope");
  return fit;
}

FitResult ols_linear_fit(std::span<const RegressionSample> samples) {
  const std::vector<double> w(samples.size(), 1.0);
  return weighted_linear_fit(samples, w);
}

double acceleration_weight(double z_ddot, const WeightConfig& c) {
  const double s = 1.0 / (1.0 + std::exp(-c.k_w * (std::abs(z_ddot) - c.a0)));
  const double sigma = c.sigma_good + (c.sigma_bad - c.sigma_good) * s;
  return 1.0 / (sigma * sigma);
}

FitResult wls_linear_fit(std::span<const RegressionSample> samples, const WeightConfig& config) {
  validate(config);
  std::vector<double> w;
  w.reserve(samples.size());
  for (const auto& s : samples) w.push_back(acceleration_weight(s.z_ddot, config));
  FitResult fit = weighted_linear_fit(samples, w);
  fit.treatment = Treatment::kMoGd;
  return fit;
}

double DepthSpeedFit::added_mass_gradient(double z) const {
  return m_a_inf_fit / z_c_fit * std::exp(-z / z_c_fit);
}

namespace {

struct Flattened {
  Eigen::VectorXd z, v2, F;
};

struct Projection {
  double k = 0.0;
  double m_inf = 0.0;
  double sse = 0.0;
};

// Least-squares (k, m_inf) at fixed z_c.
Projection project(const Flattened& d, double z_c) {
  const Eigen::Index n = d.z.size();
  Eigen::MatrixXd X(n, 2);
  X.col(0) = d.z;
  X.col(1) = ((-d.z.array() / z_c).exp() * d.v2.array() / z_c).matrix();
  const Eigen::Vector2d beta = X.colPivHouseholderQr().solve(d.F);
  return {beta(0), beta(1), (d.F - X * beta).squaredNorm()};
}

}  // namespace

DepthSpeedFit fit_depth_speed_model(std::span<const IntrusionLog> logs) {
  std::vector<double> speeds;
  std::size_t n = 0;
  // Samples at the surface carry no contact force and sit off the model.
  auto in_contact = [](const IntrusionSample& s) { return s.depth > 0.0; };
  for (const auto& log : logs) {
    const auto m = static_cast<std::size_t>(std::count_if(log.samples.begin(), log.samples.end(), in_contact));
    if (m == 0) continue;
    speeds.push_back(log.speed);
    n += m;
  }
  std::sort(speeds.begin(), speeds.end());
  speeds.erase(std::unique(speeds.begin(), speeds.end()), speeds.end());
  if (speeds.size() < 2) throw DegenerateFitError("depth-speed fit: need at least two distinct speeds");

  Flattened d{Eigen::VectorXd(static_cast<Eigen::Index>(n)), Eigen::VectorXd(static_cast<Eigen::Index>(n)),
              Eigen::VectorXd(static_cast<Eigen::Index>(n))};
  Eigen::Index i = 0;
  double z_max = 0.0;
  for (const auto& log : logs) {
    for (const auto& s : log.samples) {
      if (!in_contact(s)) continue;
      d.z(i) = s.depth;
      d.v2(i) = s.speed * s.speed;
      d.F(i) = s.force;
      z_max = std::max(z_max, s.depth);
      ++i;
    }
  }
  if (!(z_max > 0.0)) throw DegenerateFitError("depth-speed fit: no penetration in the data");

  // Coarse log-spaced scan brackets the minimum, Brent refines it.
  const double lo = z_max * 1e-3;
  const double hi = z_max * 10.0;
  constexpr int kGrid = 60;
  auto sse = [&](double log_zc) { return project(d, std::exp(log_zc)).sse; };
  std::vector<double> grid(kGrid + 1);
  int best = 0;
  for (int g = 0; g <= kGrid; ++g) {
    grid[static_cast<std::size_t>(g)] = std::log(lo) + (std::log(hi) - std::log(lo)) * g / kGrid;
    if (sse(grid[static_cast<std::size_t>(g)]) < sse(grid[static_cast<std::size_t>(best)])) best = g;
  }
  const double a = grid[static_cast<std::size_t>(std::max(best - 1, 0))];
  const double b = grid[static_cast<std::size_t>(std::min(best + 1, kGrid))];
  const auto [log_zc, min_sse] = boost::math::tools::brent_find_minima(sse, a, b, 52);

  DepthSpeedFit fit;
  fit.z_c_fit = std::exp(log_zc);
  const auto p = project(d, fit.z_c_fit);
  fit.k_fit = p.k;
  fit.m_a_inf_fit = p.m_inf;
  fit.n_samples = n;
  fit.rmse = std::sqrt(min_sse / static_cast<double>(n));
  for (Eigen::Index j = 0; j < d.z.size(); ++j) {
    const double r = d.F(j) - fit.k_fit * d.z(j) - fit.added_mass_gradient(d.z(j)) * d.v2(j);
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(r));
  }
  if (!(fit.k_fit > 0.0)) throw DegenerateFitError("depth-speed fit: non-positive stiffness");
  return fit;
}

AddedMassSeries added_mass_reconstruction(const DepthSpeedFit& fit, std::span<const RegressionSample> samples,
                                          int quadrature_intervals) {
  const int m = std::max(quadrature_intervals, 1);
  AddedMassSeries out;
  out.t.reserve(samples.size());
  out.predicted.reserve(samples.size());
  out.residual.reserve(samples.size());
  for (const auto& s : samples) {
    const double h = s.z / m;
    double m_a = 0.5 * (fit.added_mass_gradient(0.0) + fit.added_mass_gradient(s.z));
    for (int j = 1; j < m; ++j) m_a += fit.added_mass_gradient(j * h);
    m_a *= h;
    const double drag = s.z_dot >= 0.0 ? fit.added_mass_gradient(s.z) * s.z_dot * s.z_dot : 0.0;
    out.t.push_back(s.t);
    out.predicted.push_back(m_a * s.z_ddot);
    out.residual.push_back(s.F - fit.k_fit * s.z - drag);
  }
  return out;
}

std::vector<RegressionSample> subtract_drag(std::span<const RegressionSample> samples, const DepthSpeedFit& fit) {
  std::vector<RegressionSample> out(samples.begin(), samples.end());
  for (auto& s : out) {
    if (s.z_dot > 0.0) s.F -= fit.added_mass_gradient(s.z) * s.z_dot * s.z_dot;
  }
  return out;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson_correlation: need two equal series of length >= 2");
  const auto n = static_cast<Eigen::Index>(a.size());
  const Eigen::Map<const Eigen::VectorXd> x(a.data(), n), y(b.data(), n);
  const Eigen::VectorXd dx = x.array() - x.mean();
  const Eigen::VectorXd dy = y.array() - y.mean();
  const double denom = dx.norm() * dy.norm();
  if (!(denom > 0.0)) throw DegenerateFitError("pearson_correlation: constant series");
  return dx.dot(dy) / denom;
}

MeanSem mean_sem(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean_sem: no values");
  MeanSem out;
  out.n = values.size();
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sem = std::sqrt(ss / static_cast<double>(out.n - 1)) / std::sqrt(static_cast<double>(out.n));
  }
  return out;
}

const TreatmentSummary& TreatmentReport::find(double v_td, double k_c, Treatment treatment) const {
  for (const auto& s : summaries) {
    if (s.v_td == v_td && s.k_c == k_c && s.treatment == treatment) return s;
  }
  throw MissingInputError("treatment report: no such condition");
}

TreatmentReport treatment_comparison(std::span<const TrialSamples> trials, double k_gt, const WeightConfig& weights,
                                     const DepthSpeedFit* drag) {
  if (trials.empty()) throw MissingInputError("treatment_comparison: no trials");
  if (!(k_gt > 0.0)) throw DomainError("treatment_comparison: k_gt must be positive");
  validate(weights);

  TreatmentReport report;
  report.k_gt = k_gt;
  using Key = std::tuple<double, double, Treatment>;
  std::map<Key, std::vector<double>> groups;

  for (const auto& trial : trials) {
    if (trial.qs.empty() || trial.mo.empty())
      throw MissingInputError("treatment_comparison: trial " + std::to_string(trial.seed) + " lacks QS or MO samples");
    std::vector<RegressionSample> qs(trial.qs), mo(trial.mo);
    if (drag) {
      qs = subtract_drag(qs, *drag);
      mo = subtract_drag(mo, *drag);
    }
    const double k[3] = {ols_linear_fit(qs).k_est, ols_linear_fit(mo).k_est, wls_linear_fit(mo, weights).k_est};
    const Treatment labels[3] = {Treatment::kNoMoNoGd, Treatment::kMoNoGd, Treatment::kMoGd};
    for (int j = 0; j < 3; ++j) {
      report.estimates.push_back({trial.v_td, trial.k_c, trial.seed, labels[j], k[j]});
      groups[{trial.v_td, trial.k_c, labels[j]}].push_back(k[j]);
    }
  }

  std::sort(report.estimates.begin(), report.estimates.end(), [](const auto& a, const auto& b) {
    return std::tie(a.v_td, a.k_c, a.treatment, a.seed) < std::tie(b.v_td, b.k_c, b.treatment, b.seed);
  });
  for (const auto& [key, values] : groups) {
    const auto ms = mean_sem(values);
    TreatmentSummary s;
    std::tie(s.v_td, s.k_c, s.treatment) = key;
    s.mean_k = ms.mean;
    s.sem_k = ms.sem;
    s.n = ms.n;
    s.rel_err = std::abs(ms.mean - k_gt) / k_gt;
    report.summaries.push_back(s);
  }
  return report;
}

}  // namespace hopperlab
