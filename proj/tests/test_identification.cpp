#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hopperlab/errors.hpp"
#include "hopperlab/identification.hpp"

using namespace hopperlab;

namespace {

std::vector<RegressionSample> line(double k, double c, int n, double z0, double z1, double zdd = 0.0) {
  std::vector<RegressionSample> out;
  for (int i = 0; i < n; ++i) {
    const double z = z0 + (z1 - z0) * i / (n - 1);
    out.push_back({z, 0.0, zdd, k * z + c});
  }
  return out;
}

// Shallow, high-acceleration samples biased upward on top of a clean line.
std::vector<RegressionSample> two_populations() {
  auto good = line(400.0, 2.0, 30, 0.005, 0.03);
  for (int i = 0; i < 30; ++i) {
    const double z = 0.01 * i / 29.0;
    good.push_back({z, 0.0, 80.0, 400.0 * z + 2.0 + 6.0});
  }
  return good;
}

double weighted_sse(std::span<const RegressionSample> s, std::span<const double> w, double k) {
  // Best intercept for the slope, then the objective.
  double sw = 0, swr = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sw += w[i];
    swr += w[i] * (s[i].F - k * s[i].z);
  }
  const double c = swr / sw;
  double sse = 0;
  for (std::size_t i = 0; i < s.size(); ++i) sse += w[i] * std::pow(s[i].F - k * s[i].z - c, 2);
  return sse;
}

TrialLog noisy_trial(double v, std::uint64_t seed) {
  TrialSetup s;
  s.sim.touchdown_speed = v;
  return run_hop_trial(s, seed);
}

}  // namespace

TEST(LinearFit, ExactLine) {
  const auto s = line(375.0, -1.5, 20, 0.0, 0.04);
  const auto f = ols_linear_fit(s);
  EXPECT_NEAR(f.k_est, 375.0, 1e-9);
  EXPECT_NEAR(f.intercept, -1.5, 1e-10);
  EXPECT_NEAR(f.rmse, 0.0, 1e-10);
  EXPECT_EQ(f.n_samples, 20u);
}

TEST(LinearFit, MatchesNormalEquations) {
  std::vector<RegressionSample> s;
  std::vector<double> w;
  for (int i = 0; i < 15; ++i) {
    const double z = 0.002 * i;
    s.push_back({z, 0.0, 0.0, 300.0 * z + 0.7 * std::sin(3.0 * i)});
    w.push_back(0.5 + 0.1 * (i % 4));
  }
  Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Eigen::Vector2d x(s[i].z, 1.0);
    A += w[i] * x * x.transpose();
    b += w[i] * x * s[i].F;
  }
  const Eigen::Vector2d beta = A.inverse() * b;
  const auto f = weighted_linear_fit(s, w);
  EXPECT_NEAR(f.k_est, beta(0), 1e-9);
  EXPECT_NEAR(f.intercept, beta(1), 1e-11);
}

TEST(LinearFit, Degenerate) {
  const auto one = line(1.0, 0.0, 2, 0.01, 0.02);
  EXPECT_THROW(ols_linear_fit(std::span(one).first(1)), DegenerateFitError);
  const std::vector<RegressionSample> flat{{0.01, 0, 0, 1.0}, {0.01, 0, 0, 2.0}, {0.01, 0, 0, 3.0}};
  EXPECT_THROW(ols_linear_fit(flat), DegenerateFitError);
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_THROW(weighted_linear_fit(one, zero), DegenerateFitError);
  const std::vector<double> negative{1.0, -1.0};
  EXPECT_THROW(weighted_linear_fit(one, negative), DomainError);
}

TEST(Weights, MidpointAndTails) {
  const WeightConfig c;
  const double mid_sigma = 0.5 * (c.sigma_good + c.sigma_bad);
  EXPECT_NEAR(acceleration_weight(c.a0, c), 1.0 / (mid_sigma * mid_sigma), 1e-12);
  EXPECT_NEAR(acceleration_weight(-c.a0, c), acceleration_weight(c.a0, c), 1e-15);
  EXPECT_NEAR(acceleration_weight(0.0, c), 1.0 / std::pow(c.sigma_good + (c.sigma_bad - c.sigma_good) / (1 + std::exp(2.5)), 2),
              1e-12);
  EXPECT_NEAR(acceleration_weight(200.0, c), 1.0 / (c.sigma_bad * c.sigma_bad), 1e-9);
}

TEST(Weights, BoundedAndNonincreasing) {
  const WeightConfig c;
  double prev = std::numeric_limits<double>::infinity();
  for (double a = 0.0; a < 100.0; a += 0.25) {
    const double w = acceleration_weight(a, c);
    EXPECT_LE(w, prev);
    EXPECT_GE(w, 1.0 / (c.sigma_bad * c.sigma_bad));
    EXPECT_LE(w, 1.0 / (c.sigma_good * c.sigma_good));
    prev = w;
  }
  WeightConfig bad;
  bad.sigma_bad = 0.5;
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(WeightedFit, UniformWeightsReduceToOls) {
  const auto s = two_populations();
  const std::vector<double> w(s.size(), 3.0);
  EXPECT_NEAR(weighted_linear_fit(s, w).k_est, ols_linear_fit(s).k_est, 1e-9);
  WeightConfig flat;
  flat.sigma_bad = flat.sigma_good;
  EXPECT_NEAR(wls_linear_fit(s, flat).k_est, ols_linear_fit(s).k_est, 1e-9);
}

TEST(WeightedFit, DownweightsHighAccelerationSamples) {
  const auto s = two_populations();
  EXPECT_GT(std::abs(ols_linear_fit(s).k_est - 400.0) / 400.0, 0.10);
  const double ols_err = std::abs(ols_linear_fit(s).k_est - 400.0);
  EXPECT_LT(std::abs(wls_linear_fit(s, WeightConfig{}).k_est - 400.0), 0.1 * ols_err);
  // Distrusting the shallow population more pulls the fit toward the clean line.
  WeightConfig c;
  double prev = ols_err;
  for (double sigma_bad : {5.0, 20.0, 100.0, 1000.0}) {
    c.sigma_bad = sigma_bad;
    const double err = std::abs(wls_linear_fit(s, c).k_est - 400.0);
    EXPECT_LT(err, prev);
    prev = err;
  }
}

TEST(WeightedFit, AgreesWithGridSearch) {
  const auto s = two_populations();
  const WeightConfig c;
  std::vector<double> w;
  for (const auto& x : s) w.push_back(acceleration_weight(x.z_ddot, c));
  double best_k = 0.0, best = std::numeric_limits<double>::infinity();
  for (double k = 200.0; k <= 500.0; k += 0.01) {
    const double e = weighted_sse(s, w, k);
    if (e < best) best = e, best_k = k;
  }
  EXPECT_NEAR(wls_linear_fit(s, c).k_est, best_k, 0.01);
}

TEST(WeightedFit, ForceScaleEquivariance) {
  auto s = two_populations();
  const WeightConfig c;
  const double k = wls_linear_fit(s, c).k_est;
  std::vector<double> w;
  for (const auto& x : s) w.push_back(acceleration_weight(x.z_ddot, c));
  for (auto& x : s) x.F *= 2.5;
  EXPECT_NEAR(weighted_linear_fit(s, w).k_est, 2.5 * k, 1e-9);
}

TEST(SavitzkyGolay, ExactOnQuadratics) {
  const double dt = 1e-3;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    const double t = i * dt;
    y.push_back(0.3 - 2.0 * t + 40.0 * t * t);
  }
  const auto v = savitzky_golay(y, dt, 11, 0);
  const auto d = savitzky_golay(y, dt, 11, 1);
  for (int i = 0; i < 40; ++i) {
    EXPECT_NEAR(v[i], y[i], 1e-12);
    EXPECT_NEAR(d[i], -2.0 + 80.0 * i * dt, 1e-9);
  }
}

TEST(SavitzkyGolay, RejectsBadArguments) {
  const std::vector<double> y{1.0, 2.0, 3.0, 4.0};
  EXPECT_THROW(savitzky_golay(y, 1e-3, 3, 2), DomainError);
  EXPECT_THROW(savitzky_golay(y, 0.0, 3, 0), DomainError);
  EXPECT_THROW(savitzky_golay(std::span(y).first(2), 1e-3, 3, 0), DomainError);
}

TEST(DepthSpeedFit, RecoversModelFromCleanSweep) {
  const TerrainParams p;
  std::vector<IntrusionLog> logs;
  for (double v : {0.05, 0.3, 0.6, 0.9, 1.2}) logs.push_back(run_constant_speed_intrusion(v, 0.05, p));
  const auto fit = fit_depth_speed_model(logs);
  EXPECT_NEAR(fit.k_fit / p.k_stiff, 1.0, 1e-6);
  EXPECT_NEAR(fit.m_a_inf_fit / p.m_a_inf, 1.0, 1e-6);
  EXPECT_NEAR(fit.z_c_fit / p.z_c, 1.0, 1e-6);
  EXPECT_LT(fit.max_abs_residual, 1e-6);
}

TEST(DepthSpeedFit, SingleSpeedIsDegenerate) {
  const TerrainParams p;
  const std::vector<IntrusionLog> logs{run_constant_speed_intrusion(0.5, 0.05, p), run_constant_speed_intrusion(0.5, 0.05, p, 0.1, 2)};
  EXPECT_THROW(fit_depth_speed_model(logs), DegenerateFitError);
}

namespace {

DepthSpeedFit exact_fit(const TerrainParams& p) {
  DepthSpeedFit f;
  f.k_fit = p.k_stiff;
  f.m_a_inf_fit = p.m_a_inf;
  f.z_c_fit = p.z_c;
  return f;
}

}  // namespace

TEST(AddedMass, QuadratureMatchesClosedForm) {
  const TerrainParams p;
  const auto fit = exact_fit(p);
  for (double z : {0.001, 0.01, 0.03, 0.05}) {
    const std::vector<RegressionSample> s{{z, 0.0, 1.0, 0.0}};
    const double closed = p.m_a_inf * (1.0 - std::exp(-z / p.z_c));
    // Trapezoid bound z h^2 max|g''| / 12, largest curvature at the surface.
    const double h = z / 200.0;
    const double bound = z * h * h * p.m_a_inf / std::pow(p.z_c, 3) / 12.0;
    const double e200 = added_mass_reconstruction(fit, s, 200).predicted[0] - closed;
    const double e400 = added_mass_reconstruction(fit, s, 400).predicted[0] - closed;
    EXPECT_LE(std::abs(e200), bound);
    EXPECT_NEAR(e200 / e400, 4.0, 0.01);
  }
}

TEST(AddedMass, ConstantSpeedPredictsNothing) {
  const TerrainParams p;
  const auto log = run_constant_speed_intrusion(0.8, 0.05, p);
  std::vector<RegressionSample> s;
  for (const auto& x : log.samples)
    if (x.depth > 0.0) s.push_back({x.depth, x.speed, 0.0, x.force, x.t});
  const auto r = added_mass_reconstruction(exact_fit(p), s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(r.predicted[i], 0.0);
    EXPECT_NEAR(r.residual[i], 0.0, 1e-9);
  }
}

TEST(AddedMass, NoiselessResidualIsInertialTerm) {
  TrialSetup setup;
  setup.sim.touchdown_speed = 1.0;
  setup.noise = NoiseConfig::none();
  const auto log = run_hop_trial(setup, 1);
  const auto s = truth_samples(log, WindowPolicy::kVirgin);
  ASSERT_GT(s.size(), 10u);
  const auto r = added_mass_reconstruction(exact_fit(setup.terrain), s);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(r.residual[i], r.predicted[i], 1e-4);
}

TEST(SubtractDrag, OnlyAdvancingSamples) {
  const TerrainParams p;
  const auto fit = exact_fit(p);
  const std::vector<RegressionSample> s{{0.01, 0.5, 0.0, 10.0}, {0.01, -0.5, 0.0, 10.0}, {0.01, 0.0, 0.0, 10.0}};
  const auto out = subtract_drag(s, fit);
  EXPECT_NEAR(out[0].F, 10.0 - p.m_a_inf / p.z_c * std::exp(-0.01 / p.z_c) * 0.25, 1e-12);
  EXPECT_EQ(out[1].F, 10.0);
  EXPECT_EQ(out[2].F, 10.0);
}

TEST(Statistics, PearsonKnownValues) {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4}, c{2, 4, 6, 8}, d{-1, -2, -3, -4}, flat{5, 5, 5, 5};
  EXPECT_NEAR(pearson_correlation(a, b), 0.8, 1e-15);
  EXPECT_NEAR(pearson_correlation(a, c), 1.0, 1e-15);
  EXPECT_NEAR(pearson_correlation(a, d), -1.0, 1e-15);
  EXPECT_THROW(pearson_correlation(a, flat), DegenerateFitError);
  EXPECT_THROW(pearson_correlation(a, std::span(b).first(3)), DomainError);
}

TEST(Statistics, MeanAndStandardError) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto m = mean_sem(v);
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.sem, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  const std::vector<double> same{7, 7, 7};
  EXPECT_EQ(mean_sem(same).sem, 0.0);
  EXPECT_EQ(mean_sem(std::span(v).first(1)).sem, 0.0);
  EXPECT_THROW(mean_sem(std::span<const double>()), DomainError);
}

TEST(TreatmentComparison, GroupsAndOrders) {
  std::vector<TrialSamples> trials;
  for (double v : {1.2, 0.5})
    for (std::uint64_t seed : {3, 1, 2}) {
      TrialSamples t;
      t.v_td = v;
      t.k_c = 375.0;
      t.seed = seed;
      t.qs = line(300.0 + seed, 0.0, 10, 0.0, 0.03);
      t.mo = line(375.0, 1.0, 10, 0.0, 0.03);
      trials.push_back(t);
    }
  const auto r = treatment_comparison(trials, 375.0, WeightConfig{});
  ASSERT_EQ(r.summaries.size(), 6u);
  ASSERT_EQ(r.estimates.size(), 18u);
  EXPECT_EQ(r.summaries.front().v_td, 0.5);
  EXPECT_EQ(r.estimates[0].seed, 1u);
  EXPECT_EQ(r.estimates[2].seed, 3u);
  const auto& qs = r.find(1.2, 375.0, Treatment::kNoMoNoGd);
  EXPECT_NEAR(qs.mean_k, 302.0, 1e-9);
  EXPECT_NEAR(qs.sem_k, 1.0 / std::sqrt(3.0), 1e-9);
  EXPECT_NEAR(qs.rel_err, 73.0 / 375.0, 1e-12);
  EXPECT_EQ(qs.n, 3u);
  EXPECT_NEAR(r.find(0.5, 375.0, Treatment::kMoGd).mean_k, 375.0, 1e-9);
  EXPECT_NEAR(r.find(0.5, 375.0, Treatment::kMoGd).sem_k, 0.0, 1e-9);
  EXPECT_THROW(r.find(0.8, 375.0, Treatment::kMoGd), MissingInputError);
}

TEST(TreatmentComparison, MissingInputs) {
  EXPECT_THROW(treatment_comparison({}, 375.0, WeightConfig{}), MissingInputError);
  TrialSamples t;
  t.qs = line(300.0, 0.0, 10, 0.0, 0.03);
  const std::vector<TrialSamples> trials{t};
  EXPECT_THROW(treatment_comparison(trials, 375.0, WeightConfig{}), MissingInputError);
}

TEST(ExtractSamples, StanceWindowAtFrameRate) {
  const auto log = noisy_trial(1.0, 2);
  auto est = run_estimation(log.frames, log.setup.linkage, default_estimation_config(log.setup.noise, log.setup.linkage, 1e-3));
  const auto s = extract_samples(est, log.frames, log.events, ForceSource::kMO, WindowPolicy::kStance, log.setup.terrain);
  const double expected = (log.events.t_lo - log.events.t_td) / 1e-3;
  EXPECT_GT(static_cast<double>(s.size()), 0.8 * expected);
  EXPECT_LE(static_cast<double>(s.size()), expected + 1);
  for (const auto& x : s) {
    EXPECT_GT(x.z, 0.0);
    EXPECT_GE(x.t, log.events.t_td);
    EXPECT_LE(x.t, log.events.t_lo);
  }
}

TEST(ExtractSamples, LoadingWindowEndsAtDeepestPoint) {
  const auto log = noisy_trial(1.2, 1);
  auto est = run_estimation(log.frames, log.setup.linkage, default_estimation_config(log.setup.noise, log.setup.linkage, 1e-3));
  const auto all = extract_samples(est, log.frames, log.events, ForceSource::kMO, WindowPolicy::kStance, log.setup.terrain);
  const auto load = extract_samples(est, log.frames, log.events, ForceSource::kMO, WindowPolicy::kLoading, log.setup.terrain);
  const auto deepest = std::max_element(all.begin(), all.end(), [](auto& a, auto& b) { return a.z < b.z; });
  ASSERT_LT(load.size(), all.size());
  EXPECT_EQ(load.back().t, deepest->t);
  EXPECT_EQ(load.front().t, all.front().t);
}

TEST(ExtractSamples, VirginWindowAdvancesMonotonically) {
  const auto log = noisy_trial(1.2, 1);
  auto est = run_estimation(log.frames, log.setup.linkage, default_estimation_config(log.setup.noise, log.setup.linkage, 1e-3));
  const auto s = extract_samples(est, log.frames, log.events, ForceSource::kLoadcell, WindowPolicy::kVirgin, log.setup.terrain);
  ASSERT_GT(s.size(), 5u);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_GE(s[i].z_dot, 0.0);
    if (i) EXPECT_GE(s[i].z, s[i - 1].z);
  }
}

TEST(ExtractSamples, BadInputs) {
  const auto log = noisy_trial(0.5, 1);
  auto est = run_estimation(log.frames, log.setup.linkage, default_estimation_config(log.setup.noise, log.setup.linkage, 1e-3));
  TrialEvents flight = log.events;
  flight.t_td = flight.t_lo + 1.0;
  EXPECT_THROW(extract_samples(est, log.frames, flight, ForceSource::kMO, WindowPolicy::kStance, log.setup.terrain),
               TrialMalformedError);
  EXPECT_THROW(extract_samples(est, {}, log.events, ForceSource::kLoadcell, WindowPolicy::kStance, log.setup.terrain),
               MissingInputError);
  TerrainParams deep = log.setup.terrain;
  deep.surface_height = -1.0;  // foot never reaches it
  EXPECT_THROW(extract_samples(est, log.frames, log.events, ForceSource::kMO, WindowPolicy::kStance, deep),
               TrialMalformedError);
}
