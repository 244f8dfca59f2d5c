#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace exlab {

// Running mean/variance with pairwise merge (Chan et al.).
struct Moments {
  double n = 0;
  double mean = 0;
  double m2 = 0;

  void add(double x) {
    n += 1;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  Moments& merge(const Moments& o) {
    if (o.n == 0) return *this;
    if (n == 0) return *this = o;
    const double tot = n + o.n;
    const double d = o.mean - mean;
    mean += d * o.n / tot;
    m2 += o.m2 + d * d * n * o.n / tot;
    n = tot;
    return *this;
  }
  double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
  double std_error() const { return n > 1 ? std::sqrt(variance() / n) : 0.0; }
};

// Running covariance of a pair.
struct CoMoments {
  double n = 0, mx = 0, my = 0, cxy = 0;

  void add(double x, double y) {
    n += 1;
    const double dx = x - mx;
    mx += dx / n;
    my += (y - my) / n;
    cxy += dx * (y - my);
  }
  CoMoments& merge(const CoMoments& o) {
    if (o.n == 0) return *this;
    if (n == 0) return *this = o;
    const double tot = n + o.n;
    const double dx = o.mx - mx, dy = o.my - my;
    cxy += o.cxy + dx * dy * n * o.n / tot;
    mx += dx * o.n / tot;
    my += dy * o.n / tot;
    n = tot;
    return *this;
  }
  double covariance() const { return n > 1 ? cxy / (n - 1) : 0.0; }
};

// Sample covariance estimate of (x, y) with a standard error from the
// variance of the centered products.
struct CovEstimate {
  double value = 0;
  double std_error = 0;
};

inline CovEstimate covariance_with_se(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Moments prod;
  for (std::size_t i = 0; i < n; ++i) prod.add((x[i] - mx) * (y[i] - my));
  return {prod.mean * n / (n - 1.0), prod.std_error()};
}

inline double z_score(double a, double se_a, double b, double se_b) {
  const double s = std::sqrt(se_a * se_a + se_b * se_b);
  if (s == 0) return a == b ? 0.0 : INFINITY;
  return (a - b) / s;
}

// sup |F_n - F| for a sample against a continuous CDF.
inline double ks_distance(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

// CDF of a density given on an increasing grid, integrating its
// piecewise-linear interpolant exactly and normalizing by the total.
struct TabulatedCdf {
  std::vector<double> x, p, cum;

  TabulatedCdf(std::vector<double> xs, std::vector<double> ps) : x(std::move(xs)), p(std::move(ps)) {
    cum.assign(x.size(), 0.0);
    for (std::size_t i = 1; i < x.size(); ++i) cum[i] = cum[i - 1] + 0.5 * (p[i - 1] + p[i]) * (x[i] - x[i - 1]);
  }
  double total() const { return cum.back(); }
  double operator()(double t) const {
    if (t <= x.front()) return 0.0;
    if (t >= x.back()) return 1.0;
    const std::size_t i = std::upper_bound(x.begin(), x.end(), t) - x.begin() - 1;
    const double h = x[i + 1] - x[i], s = t - x[i];
    const double slope = (p[i + 1] - p[i]) / h;
    return (cum[i] + p[i] * s + 0.5 * slope * s * s) / total();
  }
};

}  // namespace exlab
