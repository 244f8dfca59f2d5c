#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "exlab/measure.hpp"
#include "exlab/operators.hpp"
#include "exlab/parallel.hpp"
#include "exlab/path_core.hpp"

namespace exlab {

struct constraint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Gaussian linear conditioning

struct AbcoKit {
  SignedMeasureOnUnit lambda, mu;
  double kappa = 0;
  SamplePath Lambda, M;
  double I = 0;
  double residual_cross = 0;  // <Q lambda, mu>
  double residual_total = 0;  // <Q lambda, lambda> + <Q mu, mu> - 1
};

inline constexpr double kIndeTolerance = 1e-6;

inline AbcoKit abco_build(const KernelOperator& q, const SignedMeasureOnUnit& lambda, const SignedMeasureOnUnit& mu,
                          double kappa) {
  if (!q.fn) throw domain_error("abco_build: kernel has no closed form");
  AbcoKit k;
  k.lambda = lambda;
  k.mu = mu;
  k.kappa = kappa;
  k.I = kernel_pairing(q.fn, lambda, lambda);
  const double J = kernel_pairing(q.fn, mu, mu);
  k.residual_cross = kernel_pairing(q.fn, lambda, mu);
  k.residual_total = k.I + J - 1.0;
  if (std::abs(k.residual_cross) > kIndeTolerance || std::abs(k.residual_total) > kIndeTolerance)
    throw constraint_error("abco_build: independence condition violated: <Q lambda,mu> = " +
                           std::to_string(k.residual_cross) +
                           ", <Q lambda,lambda> + <Q mu,mu> - 1 = " + std::to_string(k.residual_total));
  if (k.I >= 1.0) throw degenerate_error("abco_build: I = " + std::to_string(k.I) + " >= 1");
  k.Lambda = q_transform(q, lambda);
  k.M = q_transform(q, mu);
  return k;
}

// lambda = sqrt12 (1_{[0,1/3] u [2/3,1]} dt + (d_{1/3} + d_{2/3})/6)
inline SignedMeasureOnUnit excursion_lambda() {
  const double r = std::sqrt(12.0);
  SignedMeasureOnUnit m;
  m.add_segment(0, 1.0 / 3, r).add_segment(2.0 / 3, 1, r).add_atom(1.0 / 3, r / 6).add_atom(2.0 / 3, r / 6);
  return m;
}

// mu = sqrt12 (1_{[1/3,2/3]} dt - (d_{1/3} + d_{2/3})/6)
inline SignedMeasureOnUnit excursion_mu() {
  const double r = std::sqrt(12.0);
  SignedMeasureOnUnit m;
  m.add_segment(1.0 / 3, 2.0 / 3, r).add_atom(1.0 / 3, -r / 6).add_atom(2.0 / 3, -r / 6);
  return m;
}

// lambda = sqrt3 (1_{[0,1/2]} dt + d_{1/2}/2)
inline SignedMeasureOnUnit meander_lambda() {
  const double r = std::sqrt(3.0);
  SignedMeasureOnUnit m;
  m.add_segment(0, 0.5, r).add_atom(0.5, r / 2);
  return m;
}

// mu = sqrt3 (1_{[1/2,1]} dt - d_{1/2}/2)
inline SignedMeasureOnUnit meander_mu() {
  const double r = std::sqrt(3.0);
  SignedMeasureOnUnit m;
  m.add_segment(0.5, 1, r).add_atom(0.5, -r / 2);
  return m;
}

// X = Brownian bridge, kappa = sqrt12 c
inline AbcoKit excursion_kit(const TimeGrid& g, double c) {
  return abco_build(kernel_QD(g), excursion_lambda(), excursion_mu(), std::sqrt(12.0) * c);
}

// X = Brownian motion, kappa = sqrt3 c
inline AbcoKit meander_kit(const TimeGrid& g, double c) {
  return abco_build(kernel_brownian(g), meander_lambda(), meander_mu(), std::sqrt(3.0) * c);
}

inline double abco_gamma(const AbcoKit& k, const SamplePath& x) { return pair(k.lambda, x); }
inline double abco_a(const AbcoKit& k, const SamplePath& x) { return pair(k.mu, x); }

inline SamplePath abco_Y(const AbcoKit& k, const SamplePath& x) {
  const double s = k.kappa - abco_a(k, x) - abco_gamma(k, x);
  SamplePath y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += (k.Lambda.values[i] + k.M.values[i]) * s;
  return y;
}

inline SamplePath abco_Z(const AbcoKit& k, const SamplePath& x) {
  const double s = (k.kappa - abco_a(k, x) - abco_gamma(k, x)) / (1.0 - k.I);
  SamplePath z = x;
  for (std::size_t i = 0; i < z.size(); ++i) z.values[i] += k.M.values[i] * s;
  return z;
}

inline double abco_rho(const AbcoKit& k, const SamplePath& p) {
  const double d = abco_gamma(k, p) - k.kappa;
  return std::exp(-0.5 * d * d / (1.0 - k.I) + 0.5 * k.kappa * k.kappa) / std::sqrt(1.0 - k.I);
}

// E[exp(-(alpha+c)^2/2)] for alpha ~ N(0, sigma^2)
inline double gaussian_shift_identity(double sigma, double c) {
  if (sigma < 0) throw domain_error("gaussian_shift_identity: sigma must be nonnegative");
  const double v = 1.0 + sigma * sigma;
  return std::exp(-0.5 * c * c / v) / std::sqrt(v);
}

// ---------------------------------------------------------------------------
// Average-correcting profiles. Each is rescaled so its trapezoid integral on
// the grid is exactly 1; the rescaling is O(h^2) and keeps averages exact.

namespace detail {

template <class F>
SamplePath unit_mass_profile(const TimeGrid& g, F&& f) {
  SamplePath p = SamplePath::from_function(g, f);
  const double s = path_average(p);
  for (double& v : p.values) v /= s;
  return p;
}

inline void require_unit(const SamplePath& p, const char* who) {
  if (p.grid.t_start != 0.0 || p.grid.t_end != 1.0) throw domain_error(std::string(who) + ": path must live on [0,1]");
}

}  // namespace detail

// 18 (9 t (1-t) - 2) on [1/3, 2/3], zero elsewhere
inline SamplePath excursion_profile(const TimeGrid& g) {
  return detail::unit_mass_profile(g, [](double t) {
    return (t > 1.0 / 3 && t < 2.0 / 3) ? 18.0 * (9.0 * t * (1 - t) - 2.0) : 0.0;
  });
}

// 12 t (2-t) - 9 on [1/2, 1], zero elsewhere
inline SamplePath meander_profile(const TimeGrid& g) {
  return detail::unit_mass_profile(g, [](double t) { return t > 0.5 ? 12.0 * t * (2 - t) - 9.0 : 0.0; });
}

// 6 t (1-t)
inline SamplePath bridge_profile(const TimeGrid& g) {
  return detail::unit_mass_profile(g, [](double t) { return 6.0 * t * (1 - t); });
}

namespace detail {

inline SamplePath add_profile(const SamplePath& w, const SamplePath& prof, double c) {
  const double s = c - path_average(w);
  SamplePath out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += prof.values[i] * s;
  return out;
}

}  // namespace detail

inline SamplePath gamma_transform(const SamplePath& omega, double c) {
  detail::require_unit(omega, "gamma_transform");
  return detail::add_profile(omega, excursion_profile(omega.grid), c);
}

inline SamplePath beta_c(const SamplePath& beta, double c) {
  detail::require_unit(beta, "beta_c");
  return detail::add_profile(beta, bridge_profile(beta.grid), c);
}

// B + (12t(2-t) - 9)(c - int B) on [1/2,1]
inline SamplePath s_transform(const SamplePath& b, double c) {
  detail::require_unit(b, "s_transform");
  return detail::add_profile(b, meander_profile(b.grid), c);
}

namespace detail {

struct Junctions {
  int n, left, right;  // left = last node <= 1/3, right = first node >= 2/3
};

inline Junctions thirds(const TimeGrid& g) {
  const int last = g.n_points - 1;
  return {g.n_points, last / 3, last - last / 3};
}

inline int half_index(const TimeGrid& g) {
  if ((g.n_points - 1) % 2 != 0) throw domain_error("meander construction needs an even number of grid cells");
  return (g.n_points - 1) / 2;
}

// v from Eq. (v1): meander pieces on the outer thirds, bridge in the middle.
// m_left(j), m_right(j) give the meanders at time 3 j h; m1, mh1 are their endpoints.
template <class ML, class MR>
void assemble_v(const TimeGrid& g, ML&& m_left, MR&& m_right, double m1, double mh1, RandomSource& rs, double* v) {
  const Junctions J = thirds(g);
  const double s3 = std::sqrt(3.0);
  for (int i = 0; i <= J.left; ++i) v[i] = m_left(i) / s3;
  for (int i = J.right; i < J.n; ++i) v[i] = m_right(J.n - 1 - i) / s3;
  std::vector<double> times;
  for (int i = J.left + 1; i < J.right; ++i) times.push_back(g.point(i));
  const auto mid = sample_bridge_at(times, 1.0 / 3, 2.0 / 3, m1 / s3, mh1 / s3, rs);
  for (std::size_t k = 0; k < mid.size(); ++k) v[J.left + 1 + k] = mid[k];
}

}  // namespace detail

// V^c from two meander paths on [0,1] sharing the output grid.
inline SamplePath build_Vc(const SamplePath& m, const SamplePath& m_hat, double c, RandomSource& rs) {
  if (c < 0) throw domain_error("build_Vc: c must be nonnegative");
  detail::require_unit(m, "build_Vc");
  if (!(m.grid == m_hat.grid)) throw domain_error("build_Vc: meander grids differ");
  const TimeGrid& g = m.grid;
  SamplePath v(g);
  detail::assemble_v(
      g, [&](int j) { return m.values[3 * j]; }, [&](int j) { return m_hat.values[3 * j]; }, m.values.back(),
      m_hat.values.back(), rs, v.values.data());
  return detail::add_profile(v, excursion_profile(g), c);
}

// U^c from a meander on [0,1] and a Brownian motion on [0,1/2] with matching spacing.
inline SamplePath build_Uc(const SamplePath& m, const SamplePath& B, double c) {
  if (c < 0) throw domain_error("build_Uc: c must be nonnegative");
  detail::require_unit(m, "build_Uc");
  const TimeGrid& g = m.grid;
  const int ih = detail::half_index(g);
  if (B.grid.n_points != ih + 1 || std::abs(B.grid.spacing() - g.spacing()) > 1e-15)
    throw domain_error("build_Uc: B must live on [0,1/2] with the meander's spacing");
  SamplePath u(g);
  const double s2 = std::sqrt(2.0);
  for (int i = 0; i <= ih; ++i) u.values[i] = m.values[2 * i] / s2;
  for (int i = ih; i < g.n_points; ++i) u.values[i] = m.values.back() / s2 + B.values[i - ih];
  return detail::add_profile(u, meander_profile(g), c);
}

// ---------------------------------------------------------------------------
// Radon-Nikodym weights

namespace detail {

// int_0^{1/3} (w_r + w_{1-r}) dr + (w_{1/3} + w_{2/3})/6
inline double outer_mass(const SamplePath& w) {
  return path_integral(w, 0, 1.0 / 3) + path_integral(w, 2.0 / 3, 1) + (w.at(1.0 / 3) + w.at(2.0 / 3)) / 6.0;
}

inline double third_jump(const SamplePath& w) { return w.at(2.0 / 3) - w.at(1.0 / 3); }

// int_0^{1/2} (w_r + w_{1/2}) dr
inline double half_mass(const SamplePath& w) { return path_integral(w, 0, 0.5) + 0.5 * w.at(0.5); }

}  // namespace detail

inline double weight_rho_c(const SamplePath& omega, double c) {
  const double s1 = detail::outer_mass(omega) - c, s2 = detail::third_jump(omega);
  return std::exp(-162.0 * s1 * s1 - 1.5 * s2 * s2);
}

inline double weight_rho1(const SamplePath& omega, double c) {
  const double s1 = detail::outer_mass(omega) - c;
  return std::sqrt(27.0) * std::exp(-162.0 * s1 * s1 + 6.0 * c * c);
}

inline double weight_rho2(const SamplePath& omega) {
  const double s2 = detail::third_jump(omega);
  return std::sqrt(3.0) * std::exp(-1.5 * s2 * s2);
}

// exp(-12 (int_0^{1/2}(w_r + w_{1/2}) dr - c)^2)
inline double weight_meander(const SamplePath& omega, double c) {
  const double s = detail::half_mass(omega) - c;
  return std::exp(-12.0 * s * s);
}

// How 1{path >= 0} is evaluated on a grid.
enum class Monitoring {
  grid,    // nonnegativity at grid points only
  bridge,  // times the Brownian-bridge probability of no crossing inside each cell
};

inline const char* to_string(Monitoring m) { return m == Monitoring::grid ? "grid" : "bridge"; }

namespace detail {

// Probability that a unit-diffusion bridge between x and y over a cell of
// width h stays nonnegative: 1 - exp(-2xy/h). Terms that round to 1 are skipped.
template <class V>
double bridge_survival(V&& value, int i0, int i1, double h) {
  double p = 1.0;
  for (int i = i0; i < i1; ++i) {
    const double x = value(i), y = value(i + 1);
    if (x < 0 || y < 0) return 0.0;
    const double z = 2.0 * x * y / h;
    if (z < 38.0) p *= -std::expm1(-z);
  }
  return p;
}

}  // namespace detail

// Nonnegativity factor of a conditioned path on [0,1]: the grid indicator, and
// for Monitoring::bridge the crossing correction on the Brownian cells
// [i0, i1) (cells where the path is a bridge or a Brownian motion).
inline double nonneg_factor(const SamplePath& p, Monitoring mon, int i0, int i1) {
  for (double v : p.values)
    if (v < 0) return 0.0;
  if (mon == Monitoring::grid) return 1.0;
  return detail::bridge_survival([&](int i) { return p.values[i]; }, i0, i1, p.grid.spacing());
}

inline double nonneg_factor_excursion(const SamplePath& v, Monitoring mon) {
  const auto J = detail::thirds(v.grid);
  return nonneg_factor(v, mon, J.left, J.right);
}

inline double nonneg_factor_meander(const SamplePath& u, Monitoring mon) {
  return nonneg_factor(u, mon, detail::half_index(u.grid), u.grid.n_points - 1);
}

// ---------------------------------------------------------------------------
// Monte Carlo estimators

struct DensityEstimate {
  double c = 0;
  double value = 0;
  double std_error = 0;
  long n_samples = 0;
};

struct WeightedEnsemble {
  std::vector<SamplePath> paths;
  std::vector<double> weights;
};

struct EstimatorOptions {
  int n_points = 1025;
  Monitoring monitoring = Monitoring::bridge;
  int threads = 0;
};

inline const double kExcursionPrefactor = 27.0 * std::sqrt(6.0 / (std::numbers::pi * std::numbers::pi * std::numbers::pi));
inline const double kMeanderPrefactor = std::sqrt(24.0 / std::numbers::pi);

namespace detail {

// One draw of v (the unconditioned skeleton of V^c), sampling the meanders
// only at the times the grid needs.
inline void draw_v(const TimeGrid& g, RandomSource& rs, std::vector<double>& v) {
  const Junctions J = thirds(g);
  std::vector<double> tau(J.left + 2);
  for (int j = 0; j <= J.left; ++j) tau[j] = 3.0 * j / (g.n_points - 1);
  tau[J.left + 1] = 1.0;
  const auto ml = sample_meander_at(tau, rs);
  const auto mr = sample_meander_at(tau, rs);
  v.resize(g.n_points);
  assemble_v(
      g, [&](int j) { return ml[j]; }, [&](int j) { return mr[j]; }, ml.back(), mr.back(), rs, v.data());
}

// One draw of u (the unconditioned skeleton of U^c).
inline void draw_u(const TimeGrid& g, RandomSource& rs, std::vector<double>& u) {
  const int ih = half_index(g);
  std::vector<double> tau(ih + 1);
  for (int j = 0; j <= ih; ++j) tau[j] = 2.0 * j / (g.n_points - 1);
  tau[ih] = 1.0;
  const auto m = sample_meander_at(tau, rs);
  u.resize(g.n_points);
  const double s2 = std::sqrt(2.0), sd = std::sqrt(g.spacing());
  for (int i = 0; i <= ih; ++i) u[i] = m[i] / s2;
  for (int i = ih + 1; i < g.n_points; ++i) u[i] = u[i - 1] + sd * rs.normal();
}

// Everything about one skeleton that the c-dependence needs: V(c) = v + prof (c - I).
struct AffineSample {
  double I = 0;       // trapezoid average of the skeleton
  double c_min = 0;   // grid nonnegativity holds iff c >= c_min
  double A = 0;       // weight functional of the skeleton
  double D = 0;       // jump functional of the skeleton (excursion only)
};

struct Sums {
  std::vector<double> w, w2;
};

inline Sums merge_sums(Sums a, const Sums& b) {
  if (a.w.empty()) return b;
  for (std::size_t i = 0; i < a.w.size(); ++i) {
    a.w[i] += b.w[i];
    a.w2[i] += b.w2[i];
  }
  return a;
}

inline std::vector<DensityEstimate> finish(const std::vector<double>& cs, const Sums& s, long n, double pref) {
  std::vector<DensityEstimate> out(cs.size());
  for (std::size_t k = 0; k < cs.size(); ++k) {
    const double mean = s.w[k] / n;
    const double var = n > 1 ? std::max(0.0, (s.w2[k] / n - mean * mean) * n / (n - 1.0)) : 0.0;
    out[k] = {cs[k], pref * mean, pref * std::sqrt(var / n), n};
  }
  return out;
}

// c_min over nodes where the profile is positive; -inf if none constrains.
inline double affine_c_min(const std::vector<double>& v, const SamplePath& prof, double I) {
  double cm = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double g = prof.values[i];
    if (g > 0) {
      cm = std::max(cm, I - v[i] / g);
    } else if (v[i] < 0) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return cm;
}

}  // namespace detail

// p_<e,1>(c) on a c-grid, common random numbers across c.
inline std::vector<DensityEstimate> density_curve_excursion(const std::vector<double>& cs, long n, const RandomSource& rs,
                                                            const EstimatorOptions& opt = {}) {
  if (n < 1) throw domain_error("density estimate needs n >= 1");
  for (double c : cs)
    if (c < 0) throw domain_error("density estimate: c must be nonnegative");
  const TimeGrid g = TimeGrid::unit(opt.n_points);
  const SamplePath prof = excursion_profile(g);
  const double Ag = detail::outer_mass(prof), Dg = detail::third_jump(prof);
  const auto J = detail::thirds(g);
  const double h = g.spacing();

  auto parts = map_chunks<detail::Sums>(
      n, rs,
      [&](RandomSource& r, std::size_t b, std::size_t e) {
        detail::Sums s{std::vector<double>(cs.size(), 0.0), std::vector<double>(cs.size(), 0.0)};
        SamplePath v(g);
        for (std::size_t it = b; it < e; ++it) {
          detail::draw_v(g, r, v.values);
          const double I = path_average(v);
          const double cmin = detail::affine_c_min(v.values, prof, I);
          const double A = detail::outer_mass(v), D = detail::third_jump(v);
          for (std::size_t k = 0; k < cs.size(); ++k) {
            const double c = cs[k];
            if (c < cmin) continue;
            const double d = c - I;
            const double s1 = A + d * Ag - c, s2 = D + d * Dg;
            double w = std::exp(-162.0 * s1 * s1 - 1.5 * s2 * s2);
            if (w == 0.0) continue;
            if (opt.monitoring == Monitoring::bridge)
              w *= detail::bridge_survival([&](int i) { return v.values[i] + prof.values[i] * d; }, J.left, J.right, h);
            s.w[k] += w;
            s.w2[k] += w * w;
          }
        }
        return s;
      },
      opt.threads);
  return detail::finish(cs, reduce_chunks(parts, detail::Sums{}, detail::merge_sums), n, kExcursionPrefactor);
}

// p_<m,1>(c) on a c-grid, common random numbers across c.
inline std::vector<DensityEstimate> density_curve_meander(const std::vector<double>& cs, long n, const RandomSource& rs,
                                                          const EstimatorOptions& opt = {}) {
  if (n < 1) throw domain_error("density estimate needs n >= 1");
  for (double c : cs)
    if (c < 0) throw domain_error("density estimate: c must be nonnegative");
  const TimeGrid g = TimeGrid::unit(opt.n_points);
  const SamplePath prof = meander_profile(g);
  const int ih = detail::half_index(g);
  const double h = g.spacing();

  auto parts = map_chunks<detail::Sums>(
      n, rs,
      [&](RandomSource& r, std::size_t b, std::size_t e) {
        detail::Sums s{std::vector<double>(cs.size(), 0.0), std::vector<double>(cs.size(), 0.0)};
        SamplePath u(g);
        for (std::size_t it = b; it < e; ++it) {
          detail::draw_u(g, r, u.values);
          const double I = path_average(u);
          const double cmin = detail::affine_c_min(u.values, prof, I);
          const double A = detail::half_mass(u);
          for (std::size_t k = 0; k < cs.size(); ++k) {
            const double c = cs[k];
            if (c < cmin) continue;
            const double s1 = A - c;
            double w = std::exp(-12.0 * s1 * s1);
            if (w == 0.0) continue;
            if (opt.monitoring == Monitoring::bridge) {
              const double d = c - I;
              w *= detail::bridge_survival([&](int i) { return u.values[i] + prof.values[i] * d; }, ih, g.n_points - 1,
                                           h);
            }
            s.w[k] += w;
            s.w2[k] += w * w;
          }
        }
        return s;
      },
      opt.threads);
  return detail::finish(cs, reduce_chunks(parts, detail::Sums{}, detail::merge_sums), n, kMeanderPrefactor);
}

inline DensityEstimate estimate_density_excursion(double c, long n, const RandomSource& rs,
                                                  const EstimatorOptions& opt = {}) {
  return density_curve_excursion({c}, n, rs, opt)[0];
}

inline DensityEstimate estimate_density_meander(double c, long n, const RandomSource& rs,
                                                const EstimatorOptions& opt = {}) {
  return density_curve_meander({c}, n, rs, opt)[0];
}

// V^c paths with weights rho^c(V^c) times the nonnegativity factor.
inline WeightedEnsemble weighted_Vc(double c, long n, const RandomSource& rs, const EstimatorOptions& opt = {}) {
  if (c < 0) throw domain_error("weighted_Vc: c must be nonnegative");
  const TimeGrid g = TimeGrid::unit(opt.n_points);
  const SamplePath prof = excursion_profile(g);
  auto parts = map_chunks<WeightedEnsemble>(
      n, rs,
      [&](RandomSource& r, std::size_t b, std::size_t e) {
        WeightedEnsemble out;
        SamplePath v(g);
        for (std::size_t it = b; it < e; ++it) {
          detail::draw_v(g, r, v.values);
          SamplePath V = detail::add_profile(v, prof, c);
          out.weights.push_back(weight_rho_c(V, c) * nonneg_factor_excursion(V, opt.monitoring));
          out.paths.push_back(std::move(V));
        }
        return out;
      },
      opt.threads);
  WeightedEnsemble all;
  for (auto& p : parts) {
    for (auto& x : p.paths) all.paths.push_back(std::move(x));
    all.weights.insert(all.weights.end(), p.weights.begin(), p.weights.end());
  }
  return all;
}

struct ConditionalEstimate {
  double value = 0;
  double std_error = 0;
  double ess = 0;  // effective sample size (sum w)^2 / sum w^2
};

using PathFunctional = std::function<double(const SamplePath&)>;

// E[phi(e) | <e,1> = c] as a self-normalized weighted mean over V^c draws.
inline ConditionalEstimate conditional_expectation(const PathFunctional& phi, double c, long n, const RandomSource& rs,
                                                   const EstimatorOptions& opt = {}) {
  if (!(c > 0)) throw domain_error("conditional_expectation: c must be positive");
  if (n < 1) throw domain_error("conditional_expectation: n must be >= 1");
  const TimeGrid g = TimeGrid::unit(opt.n_points);
  const SamplePath prof = excursion_profile(g);
  struct S {
    double w = 0, wf = 0, w2 = 0, w2f = 0, w2ff = 0;
  };
  auto parts = map_chunks<S>(
      n, rs,
      [&](RandomSource& r, std::size_t b, std::size_t e) {
        S s;
        SamplePath v(g);
        for (std::size_t it = b; it < e; ++it) {
          detail::draw_v(g, r, v.values);
          const SamplePath V = detail::add_profile(v, prof, c);
          const double w = weight_rho_c(V, c) * nonneg_factor_excursion(V, opt.monitoring);
          if (w == 0.0) continue;
          const double f = phi(V);
          s.w += w;
          s.wf += w * f;
          s.w2 += w * w;
          s.w2f += w * w * f;
          s.w2ff += w * w * f * f;
        }
        return s;
      },
      opt.threads);
  S t = reduce_chunks(parts, S{}, [](S a, const S& b) {
    a.w += b.w;
    a.wf += b.wf;
    a.w2 += b.w2;
    a.w2f += b.w2f;
    a.w2ff += b.w2ff;
    return a;
  });
  if (!(t.w > 0))
    throw degenerate_error("conditional_expectation: all weights are zero (c = " + std::to_string(c) +
                           ", n = " + std::to_string(n) + ")");
  ConditionalEstimate out;
  out.value = t.wf / t.w;
  const double r = out.value;
  out.std_error = std::sqrt(std::max(0.0, t.w2ff - 2 * r * t.w2f + r * r * t.w2)) / t.w;
  out.ess = t.w * t.w / t.w2;
  return out;
}

}  // namespace exlab
