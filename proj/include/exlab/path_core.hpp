#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <random>

namespace exlab {

struct domain_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Uniform grid on [t_start, t_end], both endpoints included.
struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  int n_points = 2;

  TimeGrid() = default;
  TimeGrid(double a, double b, int n) : t_start(a), t_end(b), n_points(n) {
    if (!(a < b)) throw domain_error("TimeGrid: t_start must be < t_end");
    if (n < 2) throw domain_error("TimeGrid: n_points must be >= 2");
  }

  static TimeGrid unit(int n = 1025) { return TimeGrid(0.0, 1.0, n); }

  double spacing() const { return (t_end - t_start) / (n_points - 1); }
  double point(int i) const {
    return i == n_points - 1 ? t_end : t_start + i * spacing();
  }
  std::vector<double> points() const {
    std::vector<double> t(n_points);
    for (int i = 0; i < n_points; ++i) t[i] = point(i);
    return t;
  }
  bool contains(double t) const {
    const double tol = 1e-12 * (t_end - t_start);
    return t >= t_start - tol && t <= t_end + tol;
  }
  bool operator==(const TimeGrid& o) const {
    return t_start == o.t_start && t_end == o.t_end && n_points == o.n_points;
  }
};

struct SamplePath {
  TimeGrid grid;
  std::vector<double> values;

  SamplePath() = default;
  explicit SamplePath(const TimeGrid& g, double fill = 0.0)
      : grid(g), values(g.n_points, fill) {}
  SamplePath(const TimeGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (static_cast<int>(values.size()) != grid.n_points)
      throw domain_error("SamplePath: values length differs from n_points");
  }

  template <class F>
  static SamplePath from_function(const TimeGrid& g, F&& f) {
    SamplePath p(g);
    for (int i = 0; i < g.n_points; ++i) p.values[i] = f(g.point(i));
    return p;
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  // Linear interpolation; t must lie in the grid span.
  double at(double t) const {
    if (!grid.contains(t)) throw domain_error("SamplePath::at: time outside grid span");
    const double x = (t - grid.t_start) / grid.spacing();
    int i = static_cast<int>(std::floor(x));
    if (i < 0) i = 0;
    if (i > grid.n_points - 2) i = grid.n_points - 2;
    const double f = x - i;
    return values[i] * (1.0 - f) + values[i + 1] * f;
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// Seeded stream. Same (seed, stream) gives the same sequence.
class RandomSource {
 public:
  RandomSource(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform on (0,1], safe for logarithms.
  double uniform_pos() { return 1.0 - uniform_(engine_); }

  // Independent child stream k.
  RandomSource split(std::uint64_t k) const { return RandomSource(seed_, mix(stream_, k)); }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t s, std::uint64_t k) {
    std::uint64_t z = s * 0xbf58476d1ce4e5b9ULL + (k + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
  boost::random::uniform_01<double> uniform_;
};

// Trapezoid rule over the grid.
inline double path_average(const SamplePath& p) {
  const auto& v = p.values;
  double s = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i) s += v[i];
  return s * p.grid.spacing();
}

// Exact integral of the piecewise-linear interpolant over [a, b].
inline double path_integral(const SamplePath& p, double a, double b) {
  const TimeGrid& g = p.grid;
  if (!g.contains(a) || !g.contains(b)) throw domain_error("path_integral: bounds outside grid span");
  if (b < a) return -path_integral(p, b, a);
  const double h = g.spacing();
  const auto cell = [&](double t) {
    int i = static_cast<int>(std::floor((t - g.t_start) / h));
    return std::min(std::max(i, 0), g.n_points - 2);
  };
  const int ia = cell(a), ib = cell(b);
  const double va = p.at(a), vb = p.at(b);
  if (ia == ib) return 0.5 * (va + vb) * (b - a);
  double s = 0.5 * (va + p.values[ia + 1]) * (g.point(ia + 1) - a);
  for (int i = ia + 1; i < ib; ++i) s += 0.5 * (p.values[i] + p.values[i + 1]) * h;
  s += 0.5 * (p.values[ib] + vb) * (b - g.point(ib));
  return s;
}

namespace detail {

// Sequential exact sampling of a d-dim Brownian bridge from x0 at t0 to x1 at t1,
// evaluated at increasing times in (t0, t1]. Returns Euclidean norms.
template <int D>
void bessel_bridge_norms(const std::vector<double>& times, double t0, double t1, double a, double b,
                         RandomSource& rs, double* out) {
  double x[D] = {a};
  double tp = t0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    if (t >= t1) {
      out[k] = b;
      continue;
    }
    const double rem = t1 - tp;
    const double f = (t - tp) / rem;
    const double sd = std::sqrt((t - tp) * (t1 - t) / rem);
    double r2 = 0.0;
    for (int d = 0; d < D; ++d) {
      const double target = d == 0 ? b : 0.0;
      x[d] += f * (target - x[d]) + sd * rs.normal();
      r2 += x[d] * x[d];
    }
    out[k] = std::sqrt(r2);
    tp = t;
  }
}

}  // namespace detail

// Brownian bridge from a at t0 to b at t1 at increasing times in [t0, t1].
inline std::vector<double> sample_bridge_at(const std::vector<double>& times, double t0, double t1, double a,
                                            double b, RandomSource& rs) {
  std::vector<double> out(times.size());
  double x = a, tp = t0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    if (t <= t0) {
      out[k] = a;
      continue;
    }
    if (t >= t1) {
      out[k] = b;
      continue;
    }
    const double rem = t1 - tp;
    x += (t - tp) / rem * (b - x) + std::sqrt((t - tp) * (t1 - t) / rem) * rs.normal();
    out[k] = x;
    tp = t;
  }
  return out;
}

inline SamplePath sample_brownian_motion(const TimeGrid& grid, RandomSource& rs) {
  SamplePath p(grid);
  const double sd = std::sqrt(grid.spacing());
  for (int i = 1; i < grid.n_points; ++i) p.values[i] = p.values[i - 1] + sd * rs.normal();
  return p;
}

// Pinned Brownian motion: a + W_t - (t-s)/(T-s) (W_T - (b - a)).
inline SamplePath sample_brownian_bridge(const TimeGrid& grid, double a, double b, RandomSource& rs) {
  SamplePath w = sample_brownian_motion(grid, rs);
  const double wT = w.values.back();
  const double span = grid.t_end - grid.t_start;
  for (int i = 0; i < grid.n_points; ++i) {
    const double f = (grid.point(i) - grid.t_start) / span;
    w.values[i] = a + w.values[i] - f * (wT - (b - a));
  }
  w.values.front() = a;
  w.values.back() = b;
  return w;
}

// Bessel(3) bridge from a at t_start to b at t_end, evaluated at arbitrary
// increasing times inside [t_start, t_end].
inline std::vector<double> sample_bessel3_bridge_at(const std::vector<double>& times, double t_start,
                                                    double t_end, double a, double b, RandomSource& rs) {
  if (a < 0 || b < 0) throw domain_error("sample_bessel3_bridge: endpoints must be nonnegative");
  std::vector<double> out(times.size());
  std::size_t k0 = 0;
  while (k0 < times.size() && times[k0] <= t_start) out[k0++] = a;
  std::vector<double> rest(times.begin() + k0, times.end());
  detail::bessel_bridge_norms<3>(rest, t_start, t_end, a, b, rs, out.data() + k0);
  return out;
}

inline SamplePath sample_bessel3_bridge(const TimeGrid& grid, double a, double b, RandomSource& rs) {
  SamplePath p(grid);
  p.values = sample_bessel3_bridge_at(grid.points(), grid.t_start, grid.t_end, a, b, rs);
  p.values.front() = a;
  p.values.back() = b;
  return p;
}

inline double sample_rayleigh(RandomSource& rs) { return std::sqrt(-2.0 * std::log(rs.uniform_pos())); }

// Meander on [0,1] at given times: m_1 ~ Rayleigh, then Bessel(3) bridge 0 -> m_1.
inline std::vector<double> sample_meander_at(const std::vector<double>& times, RandomSource& rs) {
  const double m1 = sample_rayleigh(rs);
  return sample_bessel3_bridge_at(times, 0.0, 1.0, 0.0, m1, rs);
}

inline SamplePath sample_meander(const TimeGrid& grid, RandomSource& rs) {
  if (grid.t_start != 0.0 || grid.t_end != 1.0) throw domain_error("sample_meander: grid must be [0,1]");
  SamplePath p(grid);
  p.values = sample_meander_at(grid.points(), rs);
  p.values.front() = 0.0;
  return p;
}

inline SamplePath sample_excursion(const TimeGrid& grid, RandomSource& rs) {
  return sample_bessel3_bridge(grid, 0.0, 0.0, rs);
}

}  // namespace exlab
