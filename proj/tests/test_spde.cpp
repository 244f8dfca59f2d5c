#include <gtest/gtest.h>

#include <cmath>

#include "exlab/spde.hpp"
#include "exlab/stats.hpp"
#include "oracles.hpp"

using namespace exlab;

namespace {

SamplePath mean_start(const TimeGrid& g, double c) {
  SamplePath x = discrete_mean_a(g);
  for (double& v : x.values) v *= c;
  return x;
}

SpdeConfig short_config(double eps, double t_end = 0.01) {
  SpdeConfig cfg;
  cfg.epsilon = eps;
  cfg.t_end = t_end;
  cfg.n_snapshots = 5;
  return cfg;
}

// Admissible test function h = 140 int_0^t s^3 (1-s)^3 ds: h' = h'' = 0 at both ends.
SamplePath bump(const TimeGrid& g) {
  return SamplePath::from_function(g, [](double t) {
    const double t4 = t * t * t * t;
    return 140.0 * t4 * (0.25 - 0.6 * t + 0.5 * t * t - t * t * t / 7.0);
  });
}

double l2_norm(const SamplePath& h) { return std::sqrt(l2_inner(h, h)); }

}  // namespace

TEST(Penalty, Examples) {
  const TimeGrid g = TimeGrid::unit(33);
  const double eps = 0.01, alpha = 0.05;
  for (double v : penalty(SamplePath(g, -alpha), eps, alpha).values) EXPECT_EQ(v, 0.0);
  for (double v : penalty(SamplePath(g, 0.3), eps, alpha).values) EXPECT_EQ(v, 0.0);
  for (double v : penalty(SamplePath(g, -alpha - eps), eps, alpha).values) EXPECT_NEAR(v, 1.0, 1e-12);
  RandomSource rs(1);
  const SamplePath u = sample_brownian_bridge(g, 0, 0, rs);
  SamplePath up = u;
  for (double& v : up.values) v += 0.01;
  const SamplePath a = penalty(u, eps, alpha), b = penalty(up, eps, alpha);
  for (int i = 0; i < g.n_points; ++i) EXPECT_LE(b.values[i], a.values[i]);
  EXPECT_THROW(penalty(u, 0.0, alpha), domain_error);
  for (double v : penalty(u, kLinear, alpha).values) EXPECT_EQ(v, 0.0);
}

TEST(SpdeConfig, Validation) {
  SpdeConfig c;
  c.dt = 0;
  EXPECT_THROW(c.validate(), domain_error);
  c = SpdeConfig{};
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), domain_error);
  c = SpdeConfig{};
  c.t_end = 1.5e-5;
  EXPECT_THROW(c.validate(), domain_error);
  c = SpdeConfig{};
  c.alpha = -0.1;
  EXPECT_THROW(c.validate(), domain_error);
  EXPECT_NO_THROW(SpdeConfig{}.validate());
}

TEST(SpdeStep, ConservesMassAndEtaIsNonnegative) {
  for (double eps : {kLinear, 1e-2, 1e-3}) {
    SpdeConfig cfg = short_config(eps);
    cfg.c = 0.1;  // low average so the penalty is active
    SpdeSolver solver(cfg);
    SpdeState s = SpdeState::initial(mean_start(cfg.grid, cfg.c));
    const double m0 = interior_mass(s.u);
    RandomSource rs(2);
    for (int k = 0; k < 1000; ++k) {
      const SamplePath before = s.u;
      const std::vector<double> eta0 = s.eta_accum;
      solver.step(s, rs);
      for (int i = 0; i < cfg.grid.n_points; ++i) {
        EXPECT_GE(s.eta_accum[i], eta0[i]);
        if (s.eta_accum[i] > eta0[i]) EXPECT_LT(before.values[i], -cfg.alpha);
      }
    }
    EXPECT_LT(std::abs(interior_mass(s.u) - m0), 1e-10 * s.time + 1e-14);
    EXPECT_EQ(s.u.values.front(), 0.0);
    EXPECT_EQ(s.u.values.back(), 0.0);
    if (std::isfinite(eps)) EXPECT_GT(*std::max_element(s.eta_accum.begin(), s.eta_accum.end()), 0.0);
  }
}

TEST(SpdeStep, InactivePenaltyEqualsLinearStep) {
  SpdeConfig lin = short_config(kLinear), pen = short_config(1e-2);
  lin.c = pen.c = 3.0;
  SpdeSolver a(lin), b(pen);
  SpdeState sa = SpdeState::initial(mean_start(lin.grid, 3.0)), sb = sa;
  RandomSource rs(3);
  std::vector<double> dW(a.n_faces());
  for (int k = 0; k < 200; ++k) {
    for (double& w : dW) w = std::sqrt(lin.dt * lin.grid.spacing()) * rs.normal();
    a.step_with_increments(sa, dW);
    b.step_with_increments(sb, dW);
  }
  EXPECT_EQ(sa.u.values, sb.u.values);
  for (double e : sb.eta_accum) EXPECT_EQ(e, 0.0);
}

TEST(SpdeStep, FreeFunctionMatchesSolver) {
  const SpdeConfig cfg = short_config(1e-2);
  const SpdeState s0 = SpdeState::initial(mean_start(cfg.grid, cfg.c));
  RandomSource r1(4), r2(4);
  const SpdeState s1 = step(s0, cfg, r1);
  SpdeSolver solver(cfg);
  SpdeState s2 = s0;
  solver.step(s2, r2);
  EXPECT_EQ(s1.u.values, s2.u.values);
  EXPECT_EQ(s1.time, cfg.dt);
}

TEST(SpdeRun, LinearAverageAndSnapshots) {
  SpdeConfig cfg = short_config(kLinear, 0.05);
  cfg.n_snapshots = 7;
  RandomSource rs(5);
  const TrajectoryLog log = run(mean_start(cfg.grid, cfg.c), cfg, rs);
  ASSERT_EQ(log.times.size(), 8u);
  EXPECT_EQ(log.times.front(), 0.0);
  EXPECT_NEAR(log.times.back(), 0.05, 1e-12);
  for (std::size_t k = 1; k < log.times.size(); ++k) EXPECT_GT(log.times[k], log.times[k - 1]);
  for (double a : log.average) EXPECT_NEAR(a, cfg.c, 1e-8);
  EXPECT_LT(log.avg_drift_max, 1e-8);
}

TEST(SpdeRun, RejectsBadStart) {
  const SpdeConfig cfg = short_config(kLinear);
  RandomSource rs(6);
  SamplePath x = mean_start(cfg.grid, cfg.c);
  x.values[0] = 0.1;
  EXPECT_THROW(run(x, cfg, rs), domain_error);
  EXPECT_THROW(run(mean_start(cfg.grid, 0.5), cfg, rs), domain_error);
  EXPECT_THROW(run(mean_start(TimeGrid::unit(65), cfg.c), cfg, rs), domain_error);
}

TEST(SpdeRun, Reproducible) {
  const SpdeConfig cfg = short_config(1e-2);
  RandomSource a(7), b(7);
  const TrajectoryLog la = run(mean_start(cfg.grid, cfg.c), cfg, a), lb = run(mean_start(cfg.grid, cfg.c), cfg, b);
  EXPECT_EQ(la.u.back().values, lb.u.back().values);
  EXPECT_EQ(la.contact.back(), lb.contact.back());
}

// Linear mode relaxes to mu_c: stationary covariance against Q_inf.
TEST(SpdeRun, LinearCovarianceMatchesQinf) {
  SpdeConfig cfg;
  cfg.epsilon = kLinear;
  cfg.grid = TimeGrid::unit(33);
  cfg.dt = 1e-4;
  cfg.t_end = 0.2;
  cfg.n_snapshots = 1;
  const int pairs[][2] = {{8, 8}, {16, 16}, {8, 16}, {8, 24}, {4, 28}};
  const long n = 1000;
  std::vector<double> col[33];
  SpdeSolver solver(cfg);
  const RandomSource rs(8);
  for (long k = 0; k < n; ++k) {
    RandomSource r = rs.split(k);
    const TrajectoryLog log = solver.run(mean_start(cfg.grid, cfg.c), r);
    for (int i = 0; i < 33; ++i) col[i].push_back(log.u.back().values[i]);
  }
  for (const auto& p : pairs) {
    const CovEstimate c = covariance_with_se(col[p[0]], col[p[1]]);
    EXPECT_LT(std::abs(c.value - oracle::qinf(cfg.grid.point(p[0]), cfg.grid.point(p[1]))), 3 * c.std_error)
        << p[0] << "," << p[1] << ": " << c.value;
  }
}

TEST(WeakForm, LinearResidualConstantsAndLinearity) {
  SpdeConfig cfg = short_config(kLinear, 0.1);
  cfg.n_snapshots = 10;
  RandomSource rs(9);
  const TrajectoryLog log = run(mean_start(cfg.grid, cfg.c), cfg, rs);
  const SamplePath h = bump(cfg.grid);
  const double r = weak_form_residual(log, h, 0.01, 0.1);
  EXPECT_LT(r, 5 * std::sqrt(cfg.dt) * l2_norm(h) * 0.09);
  EXPECT_LT(weak_form_residual(log, SamplePath(cfg.grid, 1.0), 0.01, 0.1), 1e-8);
  SamplePath h2 = h;
  for (double& v : h2.values) v *= 2;
  EXPECT_EQ(weak_form_residual(log, h2, 0.01, 0.1), 2 * r);
}

TEST(WeakForm, Errors) {
  const SpdeConfig cfg = short_config(kLinear, 0.01);
  RandomSource rs(10);
  const TrajectoryLog log = run(mean_start(cfg.grid, cfg.c), cfg, rs);
  const SamplePath line = SamplePath::from_function(cfg.grid, [](double t) { return t; });
  EXPECT_THROW(weak_form_residual(log, line, 0.002, 0.01), domain_error);
  EXPECT_THROW(weak_form_residual(log, bump(cfg.grid), 0.01, 0.002), domain_error);
  EXPECT_THROW(weak_form_residual(log, bump(cfg.grid), 0.003, 0.01), domain_error);
}

TEST(Pcn, LinearTargetAcceptsEverything) {
  PcnOptions opt;
  opt.grid = TimeGrid::unit(65);
  opt.burn_in = 500;
  opt.n_chains = 4;
  const auto ens = pcn_sample_nu(kLinear, 0.05, 0.6, 2000, 0.5, RandomSource(11), opt);
  EXPECT_EQ(ens.acceptance_rate, 1.0);
  ASSERT_EQ(ens.samples.size(), 2000u);
  Moments a, b;
  for (const auto& s : ens.samples) a.add(s.at(0.5));
  const GaussianMeasureSpec mu = gaussian_mu_c(opt.grid, 0.6);
  RandomSource rs(12);
  for (int k = 0; k < 2000; ++k) b.add(sample_gaussian(mu, rs).at(0.5));
  EXPECT_LT(std::abs(a.mean - b.mean), 3 * std::hypot(a.std_error(), b.std_error()));
}

TEST(Pcn, SamplesKeepAverage) {
  PcnOptions opt;
  opt.burn_in = 1000;
  const auto ens = pcn_sample_nu(1e-2, 0.05, 0.6, 200, 0.1, RandomSource(13), opt);
  EXPECT_GT(ens.acceptance_rate, 0.01);
  for (const auto& s : ens.samples) EXPECT_NEAR(path_average(s), 0.6, 1e-6);
}

TEST(Pcn, Errors) {
  EXPECT_THROW(pcn_sample_nu(1e-2, 0.05, 0.6, 10, 0.0, RandomSource(14)), domain_error);
  EXPECT_THROW(pcn_sample_nu(1e-2, 0.05, 0.6, 10, 1.5, RandomSource(14)), domain_error);
  PcnOptions opt;
  opt.burn_in = 200;
  // a huge penalty with full-size proposals rejects almost everything
  EXPECT_THROW(pcn_sample_nu(1e-9, 0.0, 0.05, 10, 1.0, RandomSource(14), opt), domain_error);
}

TEST(Pcn, ThreadCountIndependent) {
  PcnOptions one, three;
  one.burn_in = three.burn_in = 300;
  one.n_chains = three.n_chains = 6;
  one.threads = 1;
  three.threads = 3;
  const auto a = pcn_sample_nu(1e-2, 0.05, 0.6, 30, 0.1, RandomSource(15), one);
  const auto b = pcn_sample_nu(1e-2, 0.05, 0.6, 30, 0.1, RandomSource(15), three);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) EXPECT_EQ(a.samples[k].values, b.samples[k].values);
}

// Frozen from a pilot at these settings (observed 0.30-0.41 for eps in
// {1e-1, 1e-2, 1e-3}, 0.375 without penalty).
TEST(Pcn, CalibratedDeepViolationProbability) {
  constexpr double kFrozen = 0.45;
  PcnOptions opt;
  opt.n_chains = 10;
  const double alpha = 0.05;
  const auto ens = pcn_sample_nu(1e-3, alpha, 0.6, 200, 0.1, RandomSource(16), opt);
  int hits = 0;
  for (const auto& s : ens.samples) hits += *std::min_element(s.values.begin(), s.values.end()) < -3 * alpha;
  EXPECT_LT(double(hits) / ens.samples.size(), kFrozen);
}

// Frozen from a pilot at these settings (observed 1.5%).
TEST(SpdeRun, CalibratedViolationFraction) {
  constexpr double kFrozen = 0.025;
  SpdeConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.t_end = 1.0;
  cfg.stats_from = 0.5;
  cfg.n_snapshots = 1;
  cfg.violation_levels = {-2 * cfg.alpha};
  SpdeSolver solver(cfg);
  const RandomSource rs(17);
  long hits = 0, samples = 0;
  for (int k = 0; k < 4; ++k) {
    RandomSource r = rs.split(k);
    const TrajectoryLog log = solver.run(mean_start(cfg.grid, cfg.c), r);
    hits += log.violation_counts[0];
    samples += log.window_samples;
    EXPECT_LT(log.avg_drift_max, 1e-8);
  }
  EXPECT_LT(double(hits) / samples, kFrozen);
}

TEST(Invariance, LinearModeSmall) {
  SpdeConfig cfg;
  cfg.epsilon = kLinear;
  cfg.grid = TimeGrid::unit(33);
  cfg.dt = 1e-4;
  InvarianceOptions opt;
  opt.t_run = 0.1;
  opt.burn_in = 500;
  const InvarianceReport rep = invariance_check(cfg, 300, RandomSource(18), opt);
  EXPECT_EQ(rep.stats.size(), 14u);
  EXPECT_EQ(rep.pcn_acceptance, 1.0);
  EXPECT_LT(rep.max_avg_error, 1e-6);
  EXPECT_LT(rep.max_avg_drift, 1e-8);
  EXPECT_TRUE(rep.passed) << rep.max_abs_z;
}
