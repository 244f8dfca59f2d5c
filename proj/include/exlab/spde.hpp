#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <lapacke.h>

#include "exlab/operators.hpp"
#include "exlab/parallel.hpp"
#include "exlab/path_core.hpp"
#include "exlab/stats.hpp"

namespace exlab {

inline constexpr double kLinear = std::numeric_limits<double>::infinity();

struct SpdeConfig {
  double epsilon = 1e-2;  // kLinear selects the linear equation
  double alpha = 0.05;
  double c = 0.6;
  TimeGrid grid = TimeGrid::unit(129);
  double dt = 1e-5;
  double t_end = 2.0;
  std::uint64_t seed = 1;
  int n_snapshots = 20;
  double delta = 0.1;       // compact [delta, 1-delta] for eta mass and contact
  double stats_from = 0.0;  // running statistics start here
  std::vector<double> violation_levels;  // count grid-time samples with u below each level

  bool linear() const { return !std::isfinite(epsilon); }
  long n_steps() const { return std::lround(t_end / dt); }
  // Crank-Nicolson with a linearly implicit penalty is unconditionally stable
  // for the linear part; recorded for reports.
  bool stable() const { return dt > 0; }

  void validate() const {
    if (!(dt > 0)) throw domain_error("SpdeConfig: dt must be positive");
    if (!(t_end > 0)) throw domain_error("SpdeConfig: t_end must be positive");
    if (!(epsilon > 0)) throw domain_error("SpdeConfig: epsilon must be positive");
    if (alpha < 0) throw domain_error("SpdeConfig: alpha must be nonnegative");
    if (grid.t_start != 0.0 || grid.t_end != 1.0 || grid.n_points < 5)
      throw domain_error("SpdeConfig: grid must be [0,1] with at least 5 points");
    if (std::abs(n_steps() * dt - t_end) > 1e-9 * t_end) throw domain_error("SpdeConfig: t_end must be a multiple of dt");
    if (n_snapshots < 1) throw domain_error("SpdeConfig: need at least one snapshot");
  }
};

// pointwise (u + alpha)^- / eps
inline SamplePath penalty(const SamplePath& u, double epsilon, double alpha) {
  if (!(epsilon > 0)) throw domain_error("penalty: epsilon must be positive");
  SamplePath out(u.grid);
  if (!std::isfinite(epsilon)) return out;
  for (std::size_t i = 0; i < u.size(); ++i) out.values[i] = std::max(-(u.values[i] + alpha), 0.0) / epsilon;
  return out;
}

struct SpdeState {
  SamplePath u;
  double time = 0;
  long steps = 0;
  std::vector<double> eta_accum;       // per node, mass of (u+alpha)^-/eps dt dtheta
  double contact_accum = 0;            // int u d eta over the whole domain
  double contact_compact_accum = 0;    // same, restricted to [delta, 1-delta]
  std::vector<double> u_time_integral;  // per node, int u dt (trapezoid in time)
  std::vector<double> face_W;          // cumulative noise per interior face

  static SpdeState initial(const SamplePath& x0) {
    SpdeState s;
    s.u = x0;
    const int n = x0.grid.n_points;
    s.eta_accum.assign(n, 0.0);
    s.u_time_integral.assign(n, 0.0);
    s.face_W.assign(n - 3, 0.0);
    return s;
  }
};

inline double interior_mass(const SamplePath& u) {
  double s = 0;
  for (std::size_t i = 1; i + 1 < u.size(); ++i) s += u.values[i];
  return s * u.grid.spacing();
}

struct TrajectoryLog {
  SpdeConfig config;
  std::vector<double> times;
  std::vector<SamplePath> u;
  std::vector<std::vector<double>> u_time_integral, eta, face_W;
  std::vector<double> min_u, average, eta_mass_compact, contact, contact_compact;

  // Running statistics from config.stats_from on.
  double avg_drift_max = 0;  // max over steps of |<u,1> - <x0,1>|
  double window_min_u = std::numeric_limits<double>::infinity();
  double window_contact = 0, window_contact_compact = 0;
  std::vector<long> violation_counts;
  long window_samples = 0;

  std::vector<double> violation_fractions() const {
    std::vector<double> f;
    for (long c : violation_counts) f.push_back(window_samples ? double(c) / window_samples : 0.0);
    return f;
  }

  int snapshot_index(double t) const {
    for (std::size_t k = 0; k < times.size(); ++k)
      if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, t)) return static_cast<int>(k);
    return -1;
  }
};

// Time stepper for
//   du = -N (M u - f(u)) dt + sqrt2 d_theta dW,   f(u) = (u+alpha)^-/eps,
// on interior nodes, N = -A (zero flux), M = -A_D. Crank-Nicolson for the
// linear part, the penalty linearly implicit with its active set frozen at u_n:
//   (I + dt/2 N M') u+ = (I - dt/2 N M') u - dt N (alpha chi/eps) + noise,
// M' = M + diag(chi)/eps. Solved as the SPD banded system
//   (M' + dt/2 M' N M') u+ = M' rhs,
// then u+ is rebuilt in flux form so the interior mass is conserved to rounding.
class SpdeSolver {
 public:
  static constexpr int kd = 3;

  explicit SpdeSolver(const SpdeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    m_ = cfg_.grid.n_points - 2;
    h_ = cfg_.grid.spacing();
    ih2_ = 1.0 / (h_ * h_);
    noise_scale_ = std::sqrt(2.0) / (h_ * h_);
    dw_scale_ = std::sqrt(cfg_.dt * h_);
    chi_.assign(m_, 0);
    compact_.assign(m_, 0);
    for (int r = 0; r < m_; ++r) {
      const double t = cfg_.grid.point(r + 1);
      compact_[r] = t >= cfg_.delta - 1e-12 && t <= 1 - cfg_.delta + 1e-12;
    }
    factor(chi_, lin_band_);
  }

  const SpdeConfig& config() const { return cfg_; }
  int n_faces() const { return m_ - 1; }

  void step(SpdeState& s, RandomSource& rs) {
    dw_.resize(n_faces());
    for (double& w : dw_) w = dw_scale_ * rs.normal();
    step_with_increments(s, dw_);
  }

  // dW: one Brownian increment per interior face, variance dt*h.
  void step_with_increments(SpdeState& s, const std::vector<double>& dW) {
    const int m = m_;
    const double dt = cfg_.dt;
    const double* u0 = s.u.values.data() + 1;

    bool any = false;
    std::vector<char>& chi = chi_;
    std::fill(chi.begin(), chi.end(), 0);
    if (!cfg_.linear())
      for (int r = 0; r < m; ++r)
        if (u0[r] < -cfg_.alpha) chi[r] = 1, any = true;

    // noise_r = sqrt2 (dW_r - dW_{r-1}) / h^2, zero flux at the outer faces
    noise_.assign(m, 0.0);
    for (int f = 0; f < m - 1; ++f) {
      noise_[f] += noise_scale_ * dW[f];
      noise_[f + 1] -= noise_scale_ * dW[f];
    }

    // pen_r = alpha chi_r / eps
    pen_.assign(m, 0.0);
    if (any)
      for (int r = 0; r < m; ++r)
        if (chi[r]) pen_[r] = cfg_.alpha / cfg_.epsilon;

    // rhs = u - dt/2 N M' u - dt N pen + noise
    mp_u_.resize(m);
    apply_Mprime(chi, u0, mp_u_.data());
    work_.resize(m);
    for (int r = 0; r < m; ++r) work_[r] = 0.5 * mp_u_[r] + pen_[r];
    apply_N(work_.data(), tmp_);
    rhs_.resize(m);
    for (int r = 0; r < m; ++r) rhs_[r] = u0[r] - dt * tmp_[r] + noise_[r];

    // solve (M' + dt/2 M' N M') x = M' rhs
    sol_.resize(m);
    apply_Mprime(chi, rhs_.data(), sol_.data());
    const std::vector<double>* band = &lin_band_;
    if (any) {
      if (!(cached_ok_ && chi == cached_chi_)) {
        factor(chi, cached_band_);
        cached_chi_ = chi;
        cached_ok_ = true;
      }
      band = &cached_band_;
    }
    const lapack_int info =
        LAPACKE_dpbtrs(LAPACK_COL_MAJOR, 'U', m, kd, 1, band->data(), kd + 1, sol_.data(), m);
    if (info != 0)
      throw numerical_error("SpdeSolver: banded solve failed (info " + std::to_string(info) + ") at t = " +
                            std::to_string(s.time) + ", dt = " + std::to_string(dt));

    // flux-form rebuild: u+ = u - dt N (M'(u + x)/2 + pen) + noise
    apply_Mprime(chi, sol_.data(), work_.data());
    for (int r = 0; r < m; ++r) work_[r] = 0.5 * (mp_u_[r] + work_[r]) + pen_[r];
    apply_N(work_.data(), tmp_);

    // bookkeeping with u_n before overwriting
    const double wdt = dt * h_;
    if (any) {
      for (int r = 0; r < m; ++r) {
        if (!chi[r]) continue;
        const double f = -(u0[r] + cfg_.alpha) / cfg_.epsilon;
        const double eta = f * wdt;
        s.eta_accum[r + 1] += eta;
        s.contact_accum += u0[r] * eta;
        if (compact_[r]) s.contact_compact_accum += u0[r] * eta;
      }
    }
    for (int f = 0; f < m - 1; ++f) s.face_W[f] += dW[f];

    std::vector<double>& u = s.u.values;
    for (int r = 0; r < m; ++r) {
      const double un = u[r + 1];
      const double up = un - dt * tmp_[r] + noise_[r];
      if (!std::isfinite(up))
        throw numerical_error("SpdeSolver: non-finite field at t = " + std::to_string(s.time) +
                              ", dt = " + std::to_string(dt));
      s.u_time_integral[r + 1] += 0.5 * dt * (un + up);
      u[r + 1] = up;
    }
    s.steps += 1;
    s.time = s.steps * dt;
  }

  TrajectoryLog run(const SamplePath& x0, RandomSource& rs) {
    return run_impl(x0, [&](SpdeState& s) { step(s, rs); });
  }

  // Drives the trajectory with caller-supplied face increments (one vector per step).
  template <class NoiseFn>
  TrajectoryLog run_with_noise(const SamplePath& x0, NoiseFn&& next_increments) {
    return run_impl(x0, [&](SpdeState& s) { step_with_increments(s, next_increments()); });
  }

 private:
  // y = N x, N = -(zero-flux second difference) on interior nodes
  void apply_N(const double* x, std::vector<double>& y) const {
    const int m = m_;
    y.assign(m, 0.0);
    for (int f = 0; f < m - 1; ++f) {
      const double flux = (x[f + 1] - x[f]) * ih2_;
      y[f] -= flux;
      y[f + 1] += flux;
    }
  }

  // y = M' x, M' = -(Dirichlet second difference) + diag(chi)/eps
  void apply_Mprime(const std::vector<char>& chi, const double* x, double* y) const {
    const int m = m_;
    const double pe = cfg_.linear() ? 0.0 : 1.0 / cfg_.epsilon;
    for (int r = 0; r < m; ++r) {
      double v = 2.0 * x[r];
      if (r > 0) v -= x[r - 1];
      if (r + 1 < m) v -= x[r + 1];
      y[r] = v * ih2_ + (chi[r] ? pe * x[r] : 0.0);
    }
  }

  // Cholesky factor of M' + dt/2 M' N M' in LAPACK upper band storage.
  void factor(const std::vector<char>& chi, std::vector<double>& band) const {
    const int m = m_;
    const double pe = cfg_.linear() ? 0.0 : 1.0 / cfg_.epsilon;
    const double o = -ih2_;  // off-diagonal of both M' and N
    md_.resize(m);
    nd_.resize(m);
    for (int r = 0; r < m; ++r) {
      md_[r] = 2 * ih2_ + (chi[r] ? pe : 0.0);
      nd_[r] = (r == 0 || r == m - 1) ? ih2_ : 2 * ih2_;
    }
    // P = N M', five diagonals: P(i, i+d) at pd_[(d+2) + 5i]
    pd_.assign(static_cast<std::size_t>(5) * m, 0.0);
    for (int i = 0; i < m; ++i) {
      for (int k = std::max(0, i - 1); k <= std::min(m - 1, i + 1); ++k) {
        const double nik = k == i ? nd_[i] : o;
        for (int j = std::max(0, k - 1); j <= std::min(m - 1, k + 1); ++j)
          pd_[(j - i + 2) + 5 * static_cast<std::size_t>(i)] += nik * (j == k ? md_[k] : o);
      }
    }
    band.assign(static_cast<std::size_t>(kd + 1) * m, 0.0);
    const double hdt = 0.5 * cfg_.dt;
    for (int i = 0; i < m; ++i) {
      for (int j = i; j <= std::min(m - 1, i + kd); ++j) {
        double s = 0;
        for (int k = std::max(0, i - 1); k <= std::min(m - 1, i + 1); ++k)
          if (std::abs(j - k) <= 2) s += (k == i ? md_[i] : o) * pd_[(j - k + 2) + 5 * static_cast<std::size_t>(k)];
        double a = hdt * s;
        if (j == i) a += md_[i];
        if (j == i + 1) a += o;
        band[(kd + i - j) + static_cast<std::size_t>(j) * (kd + 1)] = a;
      }
    }
    const lapack_int info = LAPACKE_dpbtrf(LAPACK_COL_MAJOR, 'U', m, kd, band.data(), kd + 1);
    if (info != 0) throw numerical_error("SpdeSolver: banded Cholesky failed (info " + std::to_string(info) + ")");
  }

  template <class StepFn>
  TrajectoryLog run_impl(const SamplePath& x0, StepFn&& do_step) {
    const TimeGrid& g = cfg_.grid;
    if (!(x0.grid == g)) throw domain_error("run: x0 grid differs from the config grid");
    if (std::abs(x0.values.front()) > 1e-12 || std::abs(x0.values.back()) > 1e-12)
      throw domain_error("run: x0 must vanish at both endpoints");
    if (std::abs(path_average(x0) - cfg_.c) > 1e-6)
      throw domain_error("run: path_average(x0) = " + std::to_string(path_average(x0)) + " differs from c = " +
                         std::to_string(cfg_.c));

    TrajectoryLog log;
    log.config = cfg_;
    log.violation_counts.assign(cfg_.violation_levels.size(), 0);
    SpdeState s = SpdeState::initial(x0);
    const double mass0 = interior_mass(x0);
    const long n_steps = cfg_.n_steps();
    const int n = g.n_points;
    std::vector<char> in_compact(n, 0);
    for (int i = 0; i < n; ++i) {
      const double t = g.point(i);
      in_compact[i] = t >= cfg_.delta - 1e-12 && t <= 1 - cfg_.delta + 1e-12;
    }

    auto snapshot = [&] {
      log.times.push_back(s.time);
      log.u.push_back(s.u);
      log.u_time_integral.push_back(s.u_time_integral);
      log.eta.push_back(s.eta_accum);
      log.face_W.push_back(s.face_W);
      double mn = std::numeric_limits<double>::infinity(), em = 0;
      for (int i = 1; i + 1 < n; ++i) mn = std::min(mn, s.u.values[i]);
      for (int i = 0; i < n; ++i)
        if (in_compact[i]) em += s.eta_accum[i];
      log.min_u.push_back(mn);
      log.average.push_back(path_average(s.u));
      log.eta_mass_compact.push_back(em);
      log.contact.push_back(s.contact_accum);
      log.contact_compact.push_back(s.contact_compact_accum);
    };

    snapshot();
    long next_snap = 1;
    auto snap_step = [&](long k) { return (k * n_steps + cfg_.n_snapshots / 2) / cfg_.n_snapshots; };
    const std::size_t n_levels = cfg_.violation_levels.size();
    for (long k = 0; k < n_steps; ++k) {
      const bool in_window = s.time >= cfg_.stats_from - 1e-12;
      const double c0 = s.contact_accum, cc0 = s.contact_compact_accum;
      do_step(s);
      if (in_window) {
        log.window_contact += s.contact_accum - c0;
        log.window_contact_compact += s.contact_compact_accum - cc0;
      }
      const double* u = s.u.values.data();
      double mass = 0;
      for (int i = 1; i + 1 < n; ++i) mass += u[i];
      log.avg_drift_max = std::max(log.avg_drift_max, std::abs(mass * g.spacing() - mass0));
      if (in_window) {
        for (int i = 1; i + 1 < n; ++i) {
          const double v = u[i];
          if (v < log.window_min_u) log.window_min_u = v;
          for (std::size_t l = 0; l < n_levels; ++l)
            if (v < cfg_.violation_levels[l]) ++log.violation_counts[l];
        }
        log.window_samples += n - 2;
      }
      while (next_snap <= cfg_.n_snapshots && s.steps == snap_step(next_snap)) {
        snapshot();
        ++next_snap;
      }
    }
    return log;
  }

  SpdeConfig cfg_;
  int m_ = 0;
  double h_ = 0, ih2_ = 0, noise_scale_ = 0, dw_scale_ = 0;
  std::vector<char> chi_, cached_chi_, compact_;
  std::vector<double> lin_band_, cached_band_;
  bool cached_ok_ = false;
  std::vector<double> dw_, noise_, pen_, mp_u_, work_, tmp_, rhs_, sol_;
  mutable std::vector<double> md_, nd_, pd_;
};

inline SpdeState step(const SpdeState& state, const SpdeConfig& cfg, RandomSource& rs) {
  SpdeSolver solver(cfg);
  SpdeState s = state;
  solver.step(s, rs);
  return s;
}

inline TrajectoryLog run(const SamplePath& x0, const SpdeConfig& cfg, RandomSource& rs) {
  SpdeSolver solver(cfg);
  return solver.run(x0, rs);
}

// ---------------------------------------------------------------------------
// Weak form

// Throws if h violates h'(0) = h'(1) = h''(0) = h''(1) = 0 beyond grid tolerance.
inline void check_test_function(const SamplePath& h) {
  const auto& v = h.values;
  const int n = static_cast<int>(v.size());
  const double d = h.grid.spacing();
  double S = 0;
  for (double x : v) S = std::max(S, std::abs(x));
  S = std::max(S, 1e-300);
  const double d1[2] = {(v[1] - v[0]) / d, (v[n - 1] - v[n - 2]) / d};
  const double d2[2] = {(v[2] - 2 * v[1] + v[0]) / (d * d), (v[n - 1] - 2 * v[n - 2] + v[n - 3]) / (d * d)};
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d1[k]) > 2.0 * S * d || std::abs(d2[k]) > 2.0 * S)
      throw domain_error("weak_form_residual: test function violates h' = h'' = 0 at the boundary");
  }
}

// |<u_t - u_delta, h> + int <u, M N h> ds - sum (N h) eta + sqrt2 sum h' dW| over [delta, t],
// with every term in the same discretization as the scheme.
inline double weak_form_residual(const TrajectoryLog& log, const SamplePath& h, double delta, double t) {
  check_test_function(h);
  const TimeGrid& g = log.config.grid;
  if (!(h.grid == g)) throw domain_error("weak_form_residual: grid mismatch");
  if (!(delta < t)) throw domain_error("weak_form_residual: need delta < t");
  const int a = log.snapshot_index(delta), b = log.snapshot_index(t);
  if (a < 0 || b < 0) throw domain_error("weak_form_residual: delta and t must be snapshot times");
  const int n = g.n_points, m = n - 2;
  const double dx = g.spacing(), ih2 = 1.0 / (dx * dx);
  const auto& hv = h.values;

  // N h on interior nodes (zero flux), then M (N h) with zero boundary values.
  std::vector<double> Nh(m, 0.0), MNh(m, 0.0);
  for (int f = 0; f < m - 1; ++f) {
    const double flux = (hv[f + 2] - hv[f + 1]) * ih2;
    Nh[f] -= flux;
    Nh[f + 1] += flux;
  }
  for (int r = 0; r < m; ++r) {
    double v = 2 * Nh[r];
    if (r > 0) v -= Nh[r - 1];
    if (r + 1 < m) v -= Nh[r + 1];
    MNh[r] = v * ih2;
  }

  double res = 0;
  for (int r = 0; r < m; ++r) {
    const int i = r + 1;
    res += dx * (log.u[b].values[i] - log.u[a].values[i]) * hv[i];
    res += dx * (log.u_time_integral[b][i] - log.u_time_integral[a][i]) * MNh[r];
    res -= Nh[r] * (log.eta[b][i] - log.eta[a][i]);
  }
  for (int f = 0; f < m - 1; ++f) {
    const double hp = (hv[f + 2] - hv[f + 1]) / dx;
    res += std::sqrt(2.0) * hp * (log.face_W[b][f] - log.face_W[a][f]);
  }
  return std::abs(res);
}

// ---------------------------------------------------------------------------
// pCN sampler of nu_c^{eps,alpha} = exp(-U) mu_c / Z

struct PcnOptions {
  TimeGrid grid = TimeGrid::unit(129);
  long burn_in = 10000;
  long thin = 10;
  int n_chains = 1;
  int threads = 0;
};

struct PcnEnsemble {
  std::vector<SamplePath> samples;
  double acceptance_rate = 0;
};

// U(x) = ||(x+alpha)^-||^2_L / (2 eps), trapezoid weights (endpoints are zero)
inline double pcn_potential(const SamplePath& x, double epsilon, double alpha) {
  if (!std::isfinite(epsilon)) return 0.0;
  double s = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const double v = std::max(-(x.values[i] + alpha), 0.0);
    s += v * v;
  }
  return s * x.grid.spacing() / (2.0 * epsilon);
}

inline PcnEnsemble pcn_sample_nu(double epsilon, double alpha, double c, long n, double step_size,
                                 const RandomSource& rs, const PcnOptions& opt = {}) {
  if (!(step_size > 0 && step_size <= 1)) throw domain_error("pcn_sample_nu: step_size must lie in (0,1]");
  if (!(epsilon > 0)) throw domain_error("pcn_sample_nu: epsilon must be positive");
  if (n < 1 || opt.n_chains < 1) throw domain_error("pcn_sample_nu: need n >= 1 and n_chains >= 1");
  const GaussianMeasureSpec mu_c = gaussian_mu_c(opt.grid, c);
  const Eigen::VectorXd mean = to_eigen(mu_c.mean);
  const double keep = std::sqrt(1.0 - step_size * step_size);
  const int chains = static_cast<int>(std::min<long>(opt.n_chains, n));

  struct Out {
    std::vector<SamplePath> samples;
    long accepted = 0, proposed = 0;
  };
  // one work item per chain
  auto parts = map_chunks<Out>(
      chains, rs,
      [&](RandomSource& r, std::size_t b, std::size_t) {
        Out o;
        const long per = n / chains + (static_cast<long>(b) < n % chains ? 1 : 0);
        SamplePath x = mu_c.mean, y(opt.grid);
        double Ux = pcn_potential(x, epsilon, alpha);
        Eigen::VectorXd xi(mu_c.rank());
        const long total = opt.burn_in + per * opt.thin;
        for (long k = 1; k <= total; ++k) {
          for (int i = 0; i < xi.size(); ++i) xi[i] = r.normal();
          const Eigen::VectorXd noise = mu_c.factor * xi;
          for (int i = 0; i < opt.grid.n_points; ++i)
            y.values[i] = mean[i] + keep * (x.values[i] - mean[i]) + step_size * noise[i];
          const double Uy = pcn_potential(y, epsilon, alpha);
          ++o.proposed;
          if (Uy <= Ux || r.uniform() < std::exp(Ux - Uy)) {
            std::swap(x, y);
            Ux = Uy;
            ++o.accepted;
          }
          if (k > opt.burn_in && (k - opt.burn_in) % opt.thin == 0) o.samples.push_back(x);
        }
        return o;
      },
      opt.threads, 1);

  PcnEnsemble out;
  long acc = 0, prop = 0;
  for (auto& p : parts) {
    for (auto& s : p.samples) out.samples.push_back(std::move(s));
    acc += p.accepted;
    prop += p.proposed;
  }
  out.acceptance_rate = prop ? double(acc) / prop : 0.0;
  if (out.acceptance_rate < 0.01)
    throw domain_error("pcn_sample_nu: acceptance rate " + std::to_string(out.acceptance_rate) +
                       " below 1%; reduce step_size");
  return out;
}

// ---------------------------------------------------------------------------
// Invariance check

struct InvarianceStat {
  std::string name;
  double evolved = 0, evolved_se = 0;
  double fresh = 0, fresh_se = 0;
  double z = 0;
};

struct InvarianceReport {
  std::vector<InvarianceStat> stats;
  double max_abs_z = 0;
  double max_avg_error = 0;  // max |<u_t,1> - c| over evolved trajectories
  double max_avg_drift = 0;  // max drift along any trajectory
  double pcn_acceptance = 0;
  long n_traj = 0;
  bool passed = false;
};

struct InvarianceOptions {
  double t_run = 1.0;
  double step_size = 0.1;
  long burn_in = 10000;
  double z_limit = 3.0;
  double avg_tolerance = 1e-6;
  int threads = 0;
};

inline std::vector<int> invariance_mean_nodes(const TimeGrid& g) {
  std::vector<int> idx;
  for (int k = 1; k <= 9; ++k) idx.push_back(static_cast<int>(std::lround(k * (g.n_points - 1) / 10.0)));
  return idx;
}

inline std::vector<std::pair<int, int>> invariance_cov_pairs(const TimeGrid& g) {
  const auto at = [&](double t) { return static_cast<int>(std::lround(t * (g.n_points - 1))); };
  return {{at(0.25), at(0.25)}, {at(0.5), at(0.5)}, {at(0.25), at(0.5)}, {at(0.25), at(0.75)}, {at(0.1), at(0.9)}};
}

inline InvarianceReport invariance_check(const SpdeConfig& cfg_in, long n_traj, const RandomSource& rs,
                                         const InvarianceOptions& opt = {}) {
  SpdeConfig cfg = cfg_in;
  cfg.t_end = opt.t_run;
  cfg.n_snapshots = 1;
  cfg.validate();
  PcnOptions po;
  po.grid = cfg.grid;
  po.burn_in = opt.burn_in;
  po.thin = 1;
  po.n_chains = static_cast<int>(n_traj);
  po.threads = opt.threads;

  const PcnEnsemble start = pcn_sample_nu(cfg.epsilon, cfg.alpha, cfg.c, n_traj, opt.step_size, rs.split(0), po);
  const PcnEnsemble fresh = pcn_sample_nu(cfg.epsilon, cfg.alpha, cfg.c, n_traj, opt.step_size, rs.split(1), po);

  struct Run {
    std::vector<SamplePath> finals;
    double max_drift = 0;
  };
  auto parts = map_chunks<Run>(
      n_traj, rs.split(2),
      [&](RandomSource& r, std::size_t b, std::size_t) {
        SpdeSolver solver(cfg);
        Run o;
        TrajectoryLog log = solver.run(start.samples[b], r);
        o.finals.push_back(log.u.back());
        o.max_drift = log.avg_drift_max;
        return o;
      },
      opt.threads, 1);

  std::vector<SamplePath> evolved;
  InvarianceReport rep;
  rep.n_traj = n_traj;
  rep.pcn_acceptance = 0.5 * (start.acceptance_rate + fresh.acceptance_rate);
  for (auto& p : parts) {
    for (auto& f : p.finals) evolved.push_back(std::move(f));
    rep.max_avg_drift = std::max(rep.max_avg_drift, p.max_drift);
  }
  for (const auto& u : evolved) rep.max_avg_error = std::max(rep.max_avg_error, std::abs(path_average(u) - cfg.c));

  const auto column = [](const std::vector<SamplePath>& ps, int i) {
    std::vector<double> x;
    for (const auto& p : ps) x.push_back(p.values[i]);
    return x;
  };
  const TimeGrid& g = cfg.grid;
  for (int i : invariance_mean_nodes(g)) {
    Moments a, b;
    for (double v : column(evolved, i)) a.add(v);
    for (double v : column(fresh.samples, i)) b.add(v);
    InvarianceStat s{"mean(" + std::to_string(g.point(i)) + ")", a.mean, a.std_error(), b.mean, b.std_error(), 0};
    s.z = z_score(s.evolved, s.evolved_se, s.fresh, s.fresh_se);
    rep.stats.push_back(s);
  }
  for (auto [i, j] : invariance_cov_pairs(g)) {
    const CovEstimate a = covariance_with_se(column(evolved, i), column(evolved, j));
    const CovEstimate b = covariance_with_se(column(fresh.samples, i), column(fresh.samples, j));
    InvarianceStat s{"cov(" + std::to_string(g.point(i)) + "," + std::to_string(g.point(j)) + ")", a.value,
                     a.std_error, b.value, b.std_error, 0};
    s.z = z_score(s.evolved, s.evolved_se, s.fresh, s.fresh_se);
    rep.stats.push_back(s);
  }
  for (const auto& s : rep.stats) rep.max_abs_z = std::max(rep.max_abs_z, std::abs(s.z));
  rep.passed = rep.max_abs_z < opt.z_limit && rep.max_avg_error <= opt.avg_tolerance;
  return rep;
}

}  // namespace exlab
