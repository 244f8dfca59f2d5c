#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "exlab/checks.hpp"
#include "exlab/operators.hpp"
#include "exlab/stats.hpp"
#include "oracles.hpp"

using namespace exlab;

namespace {

constexpr double kPi = std::numbers::pi;

SamplePath fn(const TimeGrid& g, double (*f)(double)) { return SamplePath::from_function(g, f); }

double max_abs(const SamplePath& a, const SamplePath& b, int from = 0, int skip_end = 0) {
  double d = 0;
  for (int i = from; i + skip_end < a.grid.n_points; ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
  return d;
}

// Random smooth path vanishing at both ends.
SamplePath random_path(const TimeGrid& g, RandomSource& rs) {
  double c[5];
  for (double& x : c) x = rs.normal();
  return SamplePath::from_function(g, [&](double t) {
    double s = 0;
    for (int k = 0; k < 5; ++k) s += c[k] * std::sin((k + 1) * kPi * t);
    return s;
  });
}

}  // namespace

TEST(KernelQ, Values) {
  const TimeGrid g = TimeGrid::unit();
  const KernelOperator q = kernel_Q(g);
  EXPECT_DOUBLE_EQ(q(0, 0), 4.0 / 3.0);
  const SamplePath q1 = q.apply(SamplePath(g, 1.0));
  EXPECT_LT(max_abs(q1, SamplePath(g, 1.0)), 1e-4);
  const SamplePath c = fn(g, [](double t) { return std::cos(kPi * t); });
  SamplePath expect = c;
  for (double& v : expect.values) v /= kPi * kPi;
  EXPECT_LT(max_abs(q.apply(c), expect), 1e-3);
}

TEST(KernelQ, ConservesAverage) {
  const TimeGrid g = TimeGrid::unit(257);
  const KernelOperator q = kernel_Q(g);
  RandomSource rs(1);
  for (int k = 0; k < 20; ++k) {
    const SamplePath h = sample_brownian_motion(g, rs);
    EXPECT_NEAR(path_average(q.apply(h)), path_average(h), 1e-4);
  }
}

// The trapezoid-weighted kernel is piecewise quadratic between nodes, so the
// discrete identity is exact and the defect is roundoff growing like 1/h^2.
TEST(KernelQ, InverseOfMinusNeumannLaplacian) {
  for (int n : {65, 257, 1025})
    for (int k = 0; k <= 4; ++k) {
      const double h = 1.0 / (n - 1), kp = std::max(k, 1) * kPi;
      const double d = poisson_defect(TimeGrid::unit(n), k);
      EXPECT_LT(d, 2 * std::pow(kp, 4) * h * h) << n << " " << k;
      EXPECT_LT(d, 1e-15 / (h * h)) << n << " " << k;
    }
}

TEST(KernelQD, Values) {
  const TimeGrid g = TimeGrid::unit();
  const KernelOperator qd = kernel_QD(g);
  EXPECT_DOUBLE_EQ(qd(512, 512), 0.25);
  const auto one = SignedMeasureOnUnit::lebesgue();
  EXPECT_NEAR(kernel_pairing(qd.fn, one, one), 1.0 / 12.0, 1e-6);
  const SamplePath s = fn(g, [](double t) { return std::sin(kPi * t); });
  SamplePath expect = s;
  for (double& v : expect.values) v /= kPi * kPi;
  EXPECT_LT(max_abs(qd.apply(s), expect), 1e-3);
}

TEST(KernelQinf, Values) {
  const TimeGrid g = TimeGrid::unit();
  const KernelOperator qi = kernel_Qinf(g);
  EXPECT_NEAR(qi(512, 512), 1.0 / 16.0, 1e-6);
  for (double v : q_transform(qi, SignedMeasureOnUnit::lebesgue()).values) EXPECT_NEAR(v, 0.0, 1e-6);
  EXPECT_LT(max_abs_diff(kernel_Qinf_rank_one(g).kernel, qi.kernel), 1e-8);
}

TEST(KernelOperator, SymmetricAndPsd) {
  const TimeGrid g = TimeGrid::unit(257);
  for (const KernelOperator& k : {kernel_Q(g), kernel_QD(g), kernel_Qinf(g), kernel_Qinf_rank_one(g)}) {
    EXPECT_LE(k.symmetry_defect(), 1e-12);
    EXPECT_GT(k.min_eigen_ratio(), -1e-8);
  }
  EXPECT_THROW(KernelOperator::from_matrix(g, Eigen::MatrixXd::Zero(3, 3)), domain_error);
}

TEST(MeanA, Values) {
  const SamplePath a = mean_a(TimeGrid::unit());
  EXPECT_DOUBLE_EQ(a.at(0.5), 1.5);
  EXPECT_EQ(a.values[0], 0.0);
  EXPECT_NEAR(path_average(a), 1.0, 1e-6);
  const SamplePath ad = discrete_mean_a(TimeGrid::unit());
  EXPECT_NEAR(path_average(ad), 1.0, 1e-12);
  EXPECT_LT(max_abs(a, ad), 1e-5);
}

TEST(HInner, Properties) {
  const TimeGrid g = TimeGrid::unit(257);
  const KernelOperator q = kernel_Q(g);
  EXPECT_NEAR(h_inner(SamplePath(g, 1.0), SamplePath(g, 1.0), q), 1.0, 1e-4);
  RandomSource rs(2);
  for (int k = 0; k < 100; ++k) {
    const SamplePath h = sample_brownian_motion(g, rs), j = sample_brownian_motion(g, rs);
    EXPECT_NEAR(h_inner(h, j, q), h_inner(j, h, q), 1e-10);
    EXPECT_GE(h_inner(h, h, q), 0.0);
  }
  EXPECT_THROW(h_inner(SamplePath(TimeGrid::unit(9)), SamplePath(g), q), domain_error);
}

TEST(Laplacian, NeumannAnnihilatesConstantsAndConservesSum) {
  const TimeGrid g = TimeGrid::unit(129);
  const DiscreteLaplacian A = laplacian(g, LaplacianVariant::Neumann);
  for (double v : A.apply(SamplePath(g, 3.7)).values) EXPECT_EQ(v, 0.0);
  const Eigen::VectorXd w = trapezoid_weights(g);
  RandomSource rs(3);
  for (int k = 0; k < 20; ++k) {
    const SamplePath u = sample_brownian_motion(g, rs);
    const double scale = to_eigen(A.apply(u)).cwiseAbs().maxCoeff();
    EXPECT_LT(std::abs(w.dot(to_eigen(A.apply(u)))), 1e-13 * scale);
  }
  EXPECT_THROW(laplacian(TimeGrid::unit(3), LaplacianVariant::Neumann), domain_error);
}

// A_D Q_D h = -h at interior nodes; exact up to roundoff for the same reason.
TEST(Laplacian, DirichletInvertsQD) {
  for (int n : {65, 129, 257}) {
    const TimeGrid g = TimeGrid::unit(n);
    const SamplePath h = fn(g, [](double t) { return std::cos(3 * kPi * t) + t * t; });
    const SamplePath r = laplacian(g, LaplacianVariant::Dirichlet).apply(kernel_QD(g).apply(h));
    double err = 0;
    for (int i = 1; i + 1 < n; ++i) err = std::max(err, std::abs(r.values[i] + h.values[i]));
    EXPECT_LT(err, g.spacing() * g.spacing());
  }
}

TEST(Semigroup, IdentityAtZeroAndAdjointFixesOne) {
  const TimeGrid g = TimeGrid::unit(129);
  RandomSource rs(4);
  const SamplePath h = random_path(g, rs);
  EXPECT_LT(max_abs(semigroup_apply(0.0, h), h), 1e-10);
  const auto sg = Semigroup::cached(g);
  for (double t : {1e-4, 1e-2, 1.0}) {
    const SamplePath s = sg->apply_adjoint(t, SamplePath(g, 1.0));
    EXPECT_LT(max_abs(s, SamplePath(g, 1.0), 1, 1), 1e-9) << t;
  }
  EXPECT_THROW(sg->matrix(-1), domain_error);
}

// <S_t h, k> tends to <h,1><a,k>: the flow projects onto the discrete a.
TEST(Semigroup, LongTimeLimit) {
  const TimeGrid g = TimeGrid::unit(129);
  const SamplePath ad = discrete_mean_a(g), a = mean_a(g);
  RandomSource rs(5);
  for (int k = 0; k < 10; ++k) {
    const SamplePath h = random_path(g, rs), j = random_path(g, rs);
    const double lhs = l2_inner(semigroup_apply(50.0, h), j);
    EXPECT_NEAR(lhs, path_average(h) * l2_inner(ad, j), 1e-6);
    EXPECT_NEAR(lhs, path_average(h) * l2_inner(a, j), 1e-3);
  }
}

TEST(CovarianceQt, LimitsAndMonotonicity) {
  const TimeGrid g = TimeGrid::unit(129);
  EXPECT_LT(covariance_Qt(g, 0.0).kernel.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(max_abs_diff(covariance_Qt(g, 50.0).kernel, discrete_Qinf(g).kernel), 1e-10);
  EXPECT_LT(max_abs_diff(covariance_Qt(g, 50.0).kernel, kernel_Qinf(g).kernel), 1e-4);
  double prev_trace = -1, prev_dist = 1e300;
  for (double t : {1e-4, 1e-3, 1e-2, 0.1, 1.0, 5.0, 20.0, 50.0}) {
    const KernelOperator qt = covariance_Qt(g, t);
    const double tr = qt.kernel.trace(), dist = max_abs_diff(qt.kernel, discrete_Qinf(g).kernel);
    EXPECT_GE(tr, prev_trace - 1e-12) << t;
    EXPECT_LE(dist, prev_dist + 1e-12) << t;
    prev_trace = tr;
    prev_dist = dist;
  }
}

TEST(GaussianMeasure, MuCSamplesHaveAverageC) {
  const TimeGrid g = TimeGrid::unit(257);
  const GaussianMeasureSpec spec = gaussian_mu_c(g, 0.6);
  RandomSource rs(6);
  for (int k = 0; k < 100; ++k) EXPECT_NEAR(path_average(sample_gaussian(spec, rs)), 0.6, 1e-4);
}

TEST(GaussianMeasure, RejectsIndefinite) {
  const TimeGrid g = TimeGrid::unit(5);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(5, 5);
  m(2, 2) = -1;
  EXPECT_THROW(GaussianMeasureSpec(SamplePath(g), KernelOperator::from_matrix(g, m)), numerical_error);
}

// N(0,Q_D) against the bridge sampler, and N(0,Q_inf) against its kernel.
TEST(GaussianMeasure, EnsembleMomentsMatchBridge) {
  const TimeGrid g = TimeGrid::unit(65);
  const GaussianMeasureSpec mu = gaussian_mu(g), mu0 = gaussian_mu_c(g, 0.0);
  const int idx[] = {8, 16, 32, 48, 56};
  const long n = 40000;
  std::vector<double> a[5], b[5], z[5];
  RandomSource rs(7);
  for (long k = 0; k < n; ++k) {
    const SamplePath x = sample_gaussian(mu, rs), y = sample_brownian_bridge(g, 0, 0, rs),
                     w = sample_gaussian(mu0, rs);
    for (int j = 0; j < 5; ++j) {
      a[j].push_back(x.values[idx[j]]);
      b[j].push_back(y.values[idx[j]]);
      z[j].push_back(w.values[idx[j]]);
    }
  }
  for (int j = 0; j < 5; ++j) {
    Moments ma, mb;
    for (long k = 0; k < n; ++k) {
      ma.add(a[j][k]);
      mb.add(b[j][k]);
    }
    EXPECT_LT(std::abs(ma.mean - mb.mean), 3 * std::hypot(ma.std_error(), mb.std_error()));
    for (int l = j; l < 5; ++l) {
      const CovEstimate ca = covariance_with_se(a[j], a[l]), cb = covariance_with_se(b[j], b[l]);
      EXPECT_LT(std::abs(ca.value - cb.value), 3 * std::hypot(ca.std_error, cb.std_error)) << j << "," << l;
    }
  }
  const CovEstimate q = covariance_with_se(a[1], a[2]);
  EXPECT_LT(std::abs(q.value - 0.125), 3 * q.std_error);
  const CovEstimate h = covariance_with_se(z[2], z[2]);
  EXPECT_LT(std::abs(h.value - 1.0 / 16.0), 3 * h.std_error);
}

TEST(Checks, OperatorSuitePasses) {
  for (const auto& l : operator_checks(257, false)) EXPECT_TRUE(l.pass) << l.name << " = " << l.value;
}
