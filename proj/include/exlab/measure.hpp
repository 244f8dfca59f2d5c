#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "exlab/path_core.hpp"

namespace exlab {

// Signed measure on [0,1]: piecewise-constant Lebesgue density plus atoms.
// Segments are stored exactly rather than sampled on a grid, so pairings with
// kernels can be integrated to machine precision.
struct SignedMeasureOnUnit {
  struct Segment {
    double a, b, density;
  };
  struct Atom {
    double t, w;
  };

  std::vector<Segment> segments;
  std::vector<Atom> atoms;

  static SignedMeasureOnUnit lebesgue(double a = 0.0, double b = 1.0, double density = 1.0) {
    SignedMeasureOnUnit m;
    m.add_segment(a, b, density);
    return m;
  }

  SignedMeasureOnUnit& add_segment(double a, double b, double density) {
    if (a < 0 || b > 1 || !(a < b)) throw domain_error("SignedMeasureOnUnit: segment outside [0,1]");
    segments.push_back({a, b, density});
    return *this;
  }
  SignedMeasureOnUnit& add_atom(double t, double w) {
    if (t < 0 || t > 1) throw domain_error("SignedMeasureOnUnit: atom outside [0,1]");
    atoms.push_back({t, w});
    return *this;
  }

  SignedMeasureOnUnit scaled(double k) const {
    SignedMeasureOnUnit m = *this;
    for (auto& s : m.segments) s.density *= k;
    for (auto& a : m.atoms) a.w *= k;
    return m;
  }

  double total_mass() const {
    double s = 0;
    for (const auto& g : segments) s += g.density * (g.b - g.a);
    for (const auto& a : atoms) s += a.w;
    return s;
  }

  // Upper bound (exact when segments do not overlap).
  double total_variation() const {
    double s = 0;
    for (const auto& g : segments) s += std::abs(g.density) * (g.b - g.a);
    for (const auto& a : atoms) s += std::abs(a.w);
    return s;
  }

  // Points where a kernel integral against this measure may lose smoothness.
  std::vector<double> breakpoints() const {
    std::vector<double> p{0.0, 1.0};
    for (const auto& g : segments) {
      p.push_back(g.a);
      p.push_back(g.b);
    }
    for (const auto& a : atoms) p.push_back(a.t);
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    return p;
  }
};

using KernelFn = std::function<double(double, double)>;

namespace detail {

template <class F>
double gl(F&& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss<double, 10>::integrate(f, a, b);
}

// Integral over [a,b] split at interior points of `cuts`.
template <class F>
double gl_split(F&& f, double a, double b, const std::vector<double>& cuts) {
  double s = 0, lo = a;
  for (double c : cuts) {
    if (c > lo && c < b) {
      s += gl(f, lo, c);
      lo = c;
    }
  }
  return s + gl(f, lo, b);
}

}  // namespace detail

// <measure, p>: exact integral of p's piecewise-linear interpolant against the
// density, plus atom weights times interpolated values.
inline double pair(const SignedMeasureOnUnit& m, const SamplePath& p) {
  double s = 0;
  for (const auto& g : m.segments) {
    if (!p.grid.contains(g.a) || !p.grid.contains(g.b)) throw domain_error("pair: segment outside path grid span");
    s += g.density * path_integral(p, g.a, g.b);
  }
  for (const auto& a : m.atoms) {
    if (!p.grid.contains(a.t)) throw domain_error("pair: atom outside path grid span");
    s += a.w * p.at(a.t);
  }
  return s;
}

// (Q m)(t) = int q(t,s) m(ds), with the kernel kink at s = t handled exactly.
inline double kernel_against(const KernelFn& q, const SignedMeasureOnUnit& m, double t) {
  double s = 0;
  const std::vector<double> cut{t};
  for (const auto& g : m.segments) s += g.density * detail::gl_split([&](double x) { return q(t, x); }, g.a, g.b, cut);
  for (const auto& a : m.atoms) s += a.w * q(t, a.t);
  return s;
}

// int int q(t,s) l(dt) m(ds) for piecewise-polynomial kernels with a kink on the diagonal.
inline double kernel_pairing(const KernelFn& q, const SignedMeasureOnUnit& l, const SignedMeasureOnUnit& m) {
  const std::vector<double> cuts = m.breakpoints();
  double s = 0;
  for (const auto& g : l.segments)
    s += g.density * detail::gl_split([&](double t) { return kernel_against(q, m, t); }, g.a, g.b, cuts);
  for (const auto& a : l.atoms) s += a.w * kernel_against(q, m, a.t);
  return s;
}

}  // namespace exlab
