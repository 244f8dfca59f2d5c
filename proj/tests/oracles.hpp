#pragma once

// Reference samplers and closed forms used only by the tests. They draw from
// the standard library generators, not from exlab::RandomSource.

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

struct Rng {
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double normal() { return nd(eng); }
  double uniform() { return ud(eng); }
  std::mt19937_64 eng;
  std::normal_distribution<double> nd{0.0, 1.0};
  std::uniform_real_distribution<double> ud{0.0, 1.0};
};

inline double trapezoid(const std::vector<double>& v, double h) {
  double s = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
  return s * h;
}

// Brownian bridge 0 -> 0 on [0,1] by sequential conditional steps.
inline std::vector<double> brownian_bridge(int n_points, Rng& r) {
  const double h = 1.0 / (n_points - 1);
  std::vector<double> x(n_points, 0.0);
  for (int i = 0; i + 2 < n_points; ++i) {
    const double rem = 1.0 - i * h, next = rem - h;
    x[i + 1] = x[i] * next / rem + std::sqrt(h * next / rem) * r.normal();
  }
  return x;
}

// A Brownian path started at 0 and kept above -eps along the whole
// continuous path: grid values are stepped sequentially and each cell is
// accepted with the bridge no-crossing probability. Returns nothing on
// rejection; the first offending step ends the attempt.
inline std::optional<std::vector<double>> conditioned_path(double eps, int n_points, bool pinned, Rng& r) {
  const double h = 1.0 / (n_points - 1);
  std::vector<double> x(n_points, 0.0);
  for (int i = 0; i + 1 < n_points; ++i) {
    double y;
    if (pinned) {
      const double rem = 1.0 - i * h, next = rem - h;
      y = (i + 2 == n_points) ? 0.0 : x[i] * next / rem + std::sqrt(h * next / rem) * r.normal();
    } else {
      y = x[i] + std::sqrt(h) * r.normal();
    }
    if (y < -eps) return std::nullopt;
    const double cross = std::exp(-2.0 * (x[i] + eps) * (y + eps) / h);
    if (r.uniform() < cross) return std::nullopt;
    x[i + 1] = y;
  }
  return x;
}

// Averages of n accepted paths of the Brownian bridge conditioned on {w >= -eps}.
inline std::vector<double> rejection_excursion_averages(double eps, int n_points, long n, Rng& r) {
  std::vector<double> out;
  const double h = 1.0 / (n_points - 1);
  while (static_cast<long>(out.size()) < n)
    if (auto p = conditioned_path(eps, n_points, true, r)) out.push_back(trapezoid(*p, h));
  return out;
}

// Averages of n accepted paths of Brownian motion conditioned on {w >= -eps} over [0,1].
inline std::vector<double> rejection_meander_averages(double eps, int n_points, long n, Rng& r) {
  std::vector<double> out;
  const double h = 1.0 / (n_points - 1);
  while (static_cast<long>(out.size()) < n)
    if (auto p = conditioned_path(eps, n_points, false, r)) out.push_back(trapezoid(*p, h));
  return out;
}

// E<e,1> = sqrt(pi/8), E<e,1>^2 = 5/12 for the normalized excursion.
inline double excursion_average_mean() { return std::sqrt(std::numbers::pi / 8.0); }
inline double excursion_average_second_moment() { return 5.0 / 12.0; }

// E<m,1> for the meander.
inline double meander_average_mean() { return 0.75 * std::sqrt(std::numbers::pi / 2.0); }

// e_t^2 / (t(1-t)) is chi-square with 3 degrees of freedom.
inline double excursion_mean_at(double t) { return 2.0 * std::sqrt(2.0 * t * (1 - t) / std::numbers::pi); }
inline double excursion_second_moment_at(double t) { return 3.0 * t * (1 - t); }

// Rayleigh CDF of the meander endpoint.
inline double rayleigh_cdf(double r) { return r <= 0 ? 0.0 : 1.0 - std::exp(-0.5 * r * r); }

// Kernels in closed form.
inline double bridge_cov(double t, double s) { return std::min(t, s) - t * s; }
inline double qinf(double t, double s) { return bridge_cov(t, s) - 3.0 * t * (1 - t) * s * (1 - s); }

// Standard error of a sample variance from the fourth central moment.
inline double variance_se(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0;
  for (double v : x) m += v;
  m /= n;
  double m2 = 0, m4 = 0;
  for (double v : x) {
    const double d = (v - m) * (v - m);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  return std::sqrt(std::max(0.0, (m4 - m2 * m2) / n));
}

}  // namespace oracle
