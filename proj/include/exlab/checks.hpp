#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "exlab/conditioning.hpp"
#include "exlab/operators.hpp"

namespace exlab {

struct CheckLine {
  std::string name;
  double value = 0;
  double target = 0;
  double tolerance = 0;
  bool pass = false;
};

inline CheckLine check_close(std::string name, double value, double target, double tol) {
  return {std::move(name), value, target, tol, std::abs(value - target) <= tol};
}

inline bool all_pass(const std::vector<CheckLine>& lines) {
  for (const auto& l : lines)
    if (!l.pass) return false;
  return true;
}

// I = 26/27 and 7/8, and the independence residuals of both kits.
inline std::vector<CheckLine> abco_checks(int n_points = 1025) {
  const TimeGrid g = TimeGrid::unit(n_points);
  std::vector<CheckLine> out;
  const AbcoKit e = excursion_kit(g, 0.0), m = meander_kit(g, 0.0);
  out.push_back(check_close("excursion I", e.I, 26.0 / 27.0, 1e-6));
  out.push_back(check_close("excursion <Q lambda,mu>", e.residual_cross, 0.0, 1e-6));
  out.push_back(check_close("excursion <Q lambda,lambda>+<Q mu,mu>-1", e.residual_total, 0.0, 1e-6));
  out.push_back(check_close("meander I", m.I, 7.0 / 8.0, 1e-6));
  out.push_back(check_close("meander <Q lambda,mu>", m.residual_cross, 0.0, 1e-6));
  out.push_back(check_close("meander <Q lambda,lambda>+<Q mu,mu>-1", m.residual_total, 0.0, 1e-6));
  return out;
}

// max over nodes of |-A Q h - (h - mean h)| for h = cos(k pi t).
inline double poisson_defect(const TimeGrid& g, int k) {
  const SamplePath h = SamplePath::from_function(g, [k](double t) { return std::cos(k * std::numbers::pi * t); });
  const SamplePath qh = kernel_Q(g).apply(h);
  const SamplePath aqh = laplacian(g, LaplacianVariant::Neumann).apply(qh);
  const double mean = path_average(h);
  double d = 0;
  for (int i = 0; i < g.n_points; ++i) d = std::max(d, std::abs(-aqh.values[i] - (h.values[i] - mean)));
  return d;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline std::vector<CheckLine> operator_checks(int n_points = 1025, bool with_semigroup = true) {
  const TimeGrid g = TimeGrid::unit(n_points);
  std::vector<CheckLine> out;
  const auto one = SignedMeasureOnUnit::lebesgue();

  const SamplePath q1 = kernel_Q(g).apply(SamplePath(g, 1.0));
  double dq = 0;
  for (double v : q1.values) dq = std::max(dq, std::abs(v - 1.0));
  out.push_back(check_close("max |Q1 - 1|", dq, 0.0, 1e-4));

  // second-order consistency: defect within 2 (k pi)^4 h^2
  const double h = g.spacing();
  for (int k = 1; k <= 4; ++k) {
    const double kp = k * std::numbers::pi;
    out.push_back(check_close("max |-AQh - (h - mean h)|, h = cos(" + std::to_string(k) + " pi t)", poisson_defect(g, k),
                              0.0, 2.0 * kp * kp * kp * kp * h * h));
  }

  const KernelOperator qd = kernel_QD(g);
  out.push_back(check_close("<Q_D 1, 1>", kernel_pairing(qd.fn, one, one), 1.0 / 12.0, 1e-6));

  const SamplePath qi1 = q_transform(kernel_Qinf(g), one);
  double d0 = 0;
  for (double v : qi1.values) d0 = std::max(d0, std::abs(v));
  out.push_back(check_close("max |Q_inf 1|", d0, 0.0, 1e-6));

  out.push_back(check_close("rank-one vs closed-form Q_inf",
                            max_abs_diff(kernel_Qinf_rank_one(g).kernel, kernel_Qinf(g).kernel), 0.0, 1e-8));

  if (with_semigroup)
    out.push_back(check_close("covariance_Qt(50) vs Q_inf",
                              max_abs_diff(covariance_Qt(g, 50.0).kernel, kernel_Qinf(g).kernel), 0.0, 1e-6));
  return out;
}

}  // namespace exlab
