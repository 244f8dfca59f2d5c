#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "exlab/measure.hpp"
#include "exlab/path_core.hpp"

namespace exlab {

namespace kernels {

inline double q(double t, double s) { return std::min(t, s) + 0.5 * (t * t + s * s) - t - s + 4.0 / 3.0; }
inline double q_dirichlet(double t, double s) { return std::min(t, s) - t * s; }
inline double q_inf(double t, double s) { return q_dirichlet(t, s) - 3.0 * t * (1 - t) * s * (1 - s); }
inline double q_brownian(double t, double s) { return std::min(t, s); }

}  // namespace kernels

inline Eigen::VectorXd trapezoid_weights(const TimeGrid& g) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(g.n_points, g.spacing());
  w[0] *= 0.5;
  w[g.n_points - 1] *= 0.5;
  return w;
}

inline Eigen::VectorXd to_eigen(const SamplePath& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.values.data(), p.values.size());
}

inline SamplePath to_path(const TimeGrid& g, const Eigen::VectorXd& v) {
  return SamplePath(g, std::vector<double>(v.data(), v.data() + v.size()));
}

struct KernelOperator {
  TimeGrid grid;
  Eigen::MatrixXd kernel;
  Eigen::VectorXd quad_weights;
  KernelFn fn;  // empty when the kernel has no closed form (e.g. Q_t)

  static KernelOperator from_function(const TimeGrid& g, KernelFn f) {
    KernelOperator k;
    k.grid = g;
    k.quad_weights = trapezoid_weights(g);
    k.kernel.resize(g.n_points, g.n_points);
    const auto t = g.points();
    for (int i = 0; i < g.n_points; ++i)
      for (int j = 0; j <= i; ++j) k.kernel(i, j) = k.kernel(j, i) = f(t[i], t[j]);
    k.fn = std::move(f);
    return k;
  }

  static KernelOperator from_matrix(const TimeGrid& g, Eigen::MatrixXd m) {
    if (m.rows() != g.n_points || m.cols() != g.n_points) throw domain_error("KernelOperator: matrix size mismatch");
    KernelOperator k;
    k.grid = g;
    k.quad_weights = trapezoid_weights(g);
    k.kernel = std::move(m);
    return k;
  }

  double operator()(int i, int j) const { return kernel(i, j); }

  // (Qh)(t_i) = sum_j q(t_i,t_j) w_j h_j
  SamplePath apply(const SamplePath& h) const {
    if (!(h.grid == grid)) throw domain_error("KernelOperator::apply: grid mismatch");
    return to_path(grid, kernel * quad_weights.cwiseProduct(to_eigen(h)));
  }

  double symmetry_defect() const { return (kernel - kernel.transpose()).cwiseAbs().maxCoeff(); }

  // Smallest eigenvalue divided by the largest.
  double min_eigen_ratio() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return ev[0] / std::max(std::abs(ev[ev.size() - 1]), 1e-300);
  }
};

inline KernelOperator kernel_Q(const TimeGrid& g) { return KernelOperator::from_function(g, kernels::q); }
inline KernelOperator kernel_QD(const TimeGrid& g) { return KernelOperator::from_function(g, kernels::q_dirichlet); }
inline KernelOperator kernel_Qinf(const TimeGrid& g) { return KernelOperator::from_function(g, kernels::q_inf); }
inline KernelOperator kernel_brownian(const TimeGrid& g) { return KernelOperator::from_function(g, kernels::q_brownian); }

// (Q measure)(t_i) at every grid point; atoms and the diagonal kink exact.
inline SamplePath q_transform(const KernelOperator& q, const SignedMeasureOnUnit& m) {
  if (!q.fn) throw domain_error("q_transform: kernel has no closed form");
  for (const auto& s : m.segments)
    if (!q.grid.contains(s.a) || !q.grid.contains(s.b)) throw domain_error("q_transform: measure outside kernel grid");
  for (const auto& a : m.atoms)
    if (!q.grid.contains(a.t)) throw domain_error("q_transform: atom outside kernel grid");
  SamplePath out(q.grid);
  for (int i = 0; i < q.grid.n_points; ++i) out.values[i] = kernel_against(q.fn, m, q.grid.point(i));
  return out;
}

// Q_inf = Q_D - (Q_D 1 (x) Q_D 1) / <Q_D 1, 1>, with Q_D 1 and <Q_D 1,1> integrated exactly.
inline KernelOperator kernel_Qinf_rank_one(const TimeGrid& g) {
  KernelOperator qd = kernel_QD(g);
  const auto one = SignedMeasureOnUnit::lebesgue();
  const Eigen::VectorXd v = to_eigen(q_transform(qd, one));
  const double norm = kernel_pairing(qd.fn, one, one);
  Eigen::MatrixXd k = qd.kernel - v * v.transpose() / norm;
  return KernelOperator::from_matrix(g, std::move(k));
}

inline SamplePath mean_a(const TimeGrid& g) {
  return SamplePath::from_function(g, [](double t) { return 6.0 * t * (1.0 - t); });
}

inline double l2_inner(const SamplePath& h, const SamplePath& k) {
  if (!(h.grid == k.grid)) throw domain_error("l2_inner: grid mismatch");
  return trapezoid_weights(h.grid).dot(to_eigen(h).cwiseProduct(to_eigen(k)));
}

// (h,k)_H = <Qh, k>_L
inline double h_inner(const SamplePath& h, const SamplePath& k, const KernelOperator& q) {
  if (!(h.grid == q.grid) || !(k.grid == q.grid)) throw domain_error("h_inner: grid mismatch");
  return l2_inner(q.apply(h), k);
}

enum class LaplacianVariant {
  Neumann,          // full grid, reflected ghost nodes
  Dirichlet,        // interior nodes, zero boundary values
  NeumannInterior,  // interior nodes, zero flux across the first and last faces
};

// Tridiagonal second-difference operator acting on a contiguous block of grid nodes.
struct DiscreteLaplacian {
  TimeGrid grid;
  LaplacianVariant variant;
  int first = 0, count = 0;  // unknowns are nodes first .. first+count-1
  std::vector<double> lower, diag, upper;

  SamplePath apply(const SamplePath& u) const {
    if (!(u.grid == grid)) throw domain_error("DiscreteLaplacian::apply: grid mismatch");
    SamplePath out(grid);
    for (int r = 0; r < count; ++r) {
      const int i = first + r;
      double s = diag[r] * u.values[i];
      if (r > 0) s += lower[r] * u.values[i - 1];
      if (r + 1 < count) s += upper[r] * u.values[i + 1];
      out.values[i] = s;
    }
    return out;
  }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(count, count);
    for (int r = 0; r < count; ++r) {
      m(r, r) = diag[r];
      if (r > 0) m(r, r - 1) = lower[r];
      if (r + 1 < count) m(r, r + 1) = upper[r];
    }
    return m;
  }
};

inline DiscreteLaplacian laplacian(const TimeGrid& g, LaplacianVariant v) {
  if (g.n_points < 4) throw domain_error("laplacian: need at least 4 grid points");
  const double ih2 = 1.0 / (g.spacing() * g.spacing());
  DiscreteLaplacian L;
  L.grid = g;
  L.variant = v;
  if (v == LaplacianVariant::Neumann) {
    L.first = 0;
    L.count = g.n_points;
  } else {
    L.first = 1;
    L.count = g.n_points - 2;
  }
  L.lower.assign(L.count, ih2);
  L.upper.assign(L.count, ih2);
  L.diag.assign(L.count, -2 * ih2);
  L.lower[0] = 0;
  L.upper[L.count - 1] = 0;
  if (v == LaplacianVariant::Neumann) {
    L.upper[0] = 2 * ih2;
    L.lower[L.count - 1] = 2 * ih2;
  } else if (v == LaplacianVariant::NeumannInterior) {
    L.diag[0] = -ih2;
    L.diag[L.count - 1] = -ih2;
  }
  return L;
}

// Discrete conditioned Gaussian on the grid: bridge kernel G at the nodes,
// conditioned on zero trapezoid mass. Exactly conserved by the discrete flow.
inline KernelOperator discrete_Qinf(const TimeGrid& g) {
  const Eigen::MatrixXd G = kernel_QD(g).kernel;
  const Eigen::VectorXd g1 = G.rowwise().sum();
  const double s = g1.sum();
  return KernelOperator::from_matrix(g, G - g1 * g1.transpose() / s);
}

inline SamplePath discrete_mean_a(const TimeGrid& g) {
  const Eigen::MatrixXd G = kernel_QD(g).kernel;
  const Eigen::VectorXd g1 = G.rowwise().sum();
  return to_path(g, g1 / (g.spacing() * g1.sum()));
}

// S_t = exp(-t N M) on interior nodes, N = -A (zero-flux), M = -A_D.
// With M = L L^T, N M = L^{-T} (L^T N L) L^T and L^T N L = V diag(lam) V^T.
class Semigroup {
 public:
  explicit Semigroup(const TimeGrid& g) : grid_(g) {
    const Eigen::MatrixXd N = -laplacian(g, LaplacianVariant::NeumannInterior).matrix();
    const Eigen::MatrixXd M = -laplacian(g, LaplacianVariant::Dirichlet).matrix();
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L.transpose() * N * L);
    lambda_ = es.eigenvalues().cwiseMax(0.0);
    left_ = L.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
    right_ = es.eigenvectors().transpose() * L.transpose();
  }

  const TimeGrid& grid() const { return grid_; }
  const Eigen::VectorXd& eigenvalues() const { return lambda_; }
  // Columns: right eigenvectors of N M. Rows of right_basis(): left eigenvectors.
  const Eigen::MatrixXd& left_basis() const { return left_; }
  const Eigen::MatrixXd& right_basis() const { return right_; }

  Eigen::MatrixXd matrix(double t) const {
    if (t < 0) throw domain_error("Semigroup: t must be nonnegative");
    const Eigen::VectorXd e = (-t * lambda_).array().exp();
    return left_ * e.asDiagonal() * right_;
  }

  // Full-grid path in and out; boundary values are pinned to 0.
  SamplePath apply(double t, const SamplePath& h) const {
    if (!(h.grid == grid_)) throw domain_error("Semigroup::apply: grid mismatch");
    const int m = grid_.n_points - 2;
    const Eigen::VectorXd x = to_eigen(h).segment(1, m);
    const Eigen::VectorXd e = (-t * lambda_).array().exp();
    const Eigen::VectorXd y = left_ * e.cwiseProduct(right_ * x);
    SamplePath out(grid_);
    for (int i = 0; i < m; ++i) out.values[i + 1] = y[i];
    return out;
  }

  // Adjoint in the trapezoid inner product (uniform interior weights): the transpose.
  SamplePath apply_adjoint(double t, const SamplePath& h) const {
    const int m = grid_.n_points - 2;
    const Eigen::VectorXd x = to_eigen(h).segment(1, m);
    const Eigen::VectorXd e = (-t * lambda_).array().exp();
    const Eigen::VectorXd y = right_.transpose() * e.cwiseProduct(left_.transpose() * x);
    SamplePath out(grid_);
    for (int i = 0; i < m; ++i) out.values[i + 1] = y[i];
    return out;
  }

  // Q_t = Q_D - S_t Q_D S_t^*, as a full-grid kernel with zero boundary rows.
  KernelOperator covariance(double t) const {
    const int m = grid_.n_points - 2;
    const Eigen::MatrixXd G = kernel_QD(grid_).kernel.block(1, 1, m, m);
    const Eigen::MatrixXd S = matrix(t);
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(m + 2, m + 2);
    full.block(1, 1, m, m) = G - S * G * S.transpose();
    full = 0.5 * (full + full.transpose()).eval();
    return KernelOperator::from_matrix(grid_, std::move(full));
  }

  static std::shared_ptr<const Semigroup> cached(const TimeGrid& g) {
    static std::mutex mu;
    static std::map<std::tuple<double, double, int>, std::shared_ptr<const Semigroup>> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto key = std::make_tuple(g.t_start, g.t_end, g.n_points);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto sg = std::make_shared<const Semigroup>(g);
    cache.emplace(key, sg);
    return sg;
  }

 private:
  TimeGrid grid_;
  Eigen::VectorXd lambda_;
  Eigen::MatrixXd left_, right_;
};

inline SamplePath semigroup_apply(double t, const SamplePath& h) { return Semigroup::cached(h.grid)->apply(t, h); }

inline KernelOperator covariance_Qt(const TimeGrid& g, double t) { return Semigroup::cached(g)->covariance(t); }

struct GaussianMeasureSpec {
  SamplePath mean;
  KernelOperator covariance;
  Eigen::MatrixXd factor;  // covariance.kernel = factor * factor^T

  GaussianMeasureSpec(SamplePath m, KernelOperator cov) : mean(std::move(m)), covariance(std::move(cov)) {
    if (!(mean.grid == covariance.grid)) throw domain_error("GaussianMeasureSpec: grid mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance.kernel);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double top = ev[ev.size() - 1];
    if (top < 0) throw numerical_error("GaussianMeasureSpec: covariance is negative definite");
    std::vector<int> keep;
    for (int i = 0; i < ev.size(); ++i) {
      if (ev[i] < -1e-8 * top)
        throw numerical_error("GaussianMeasureSpec: covariance not positive semidefinite (eigenvalue " +
                              std::to_string(ev[i]) + ")");
      if (ev[i] > 0) keep.push_back(i);
    }
    factor.resize(ev.size(), keep.size());
    for (std::size_t c = 0; c < keep.size(); ++c)
      factor.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(ev[keep[c]]);
  }

  int rank() const { return static_cast<int>(factor.cols()); }
};

inline SamplePath sample_gaussian(const GaussianMeasureSpec& spec, RandomSource& rs) {
  Eigen::VectorXd xi(spec.rank());
  for (int i = 0; i < xi.size(); ++i) xi[i] = rs.normal();
  return to_path(spec.mean.grid, to_eigen(spec.mean) + spec.factor * xi);
}

// mu = N(0, Q_D)
inline GaussianMeasureSpec gaussian_mu(const TimeGrid& g) { return GaussianMeasureSpec(SamplePath(g), kernel_QD(g)); }

// mu_c = N(c a, Q_inf) in its exactly mass-conserving discrete form.
inline GaussianMeasureSpec gaussian_mu_c(const TimeGrid& g, double c) {
  SamplePath m = discrete_mean_a(g);
  for (double& v : m.values) v *= c;
  return GaussianMeasureSpec(std::move(m), discrete_Qinf(g));
}

}  // namespace exlab
