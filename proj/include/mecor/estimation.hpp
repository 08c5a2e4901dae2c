#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mecor/errors.hpp"
#include "mecor/optimize.hpp"
#include "mecor/types.hpp"

namespace mecor {

// Moment-matching statistics:
//   zeta1 = n^-1 sum Y_i W_i - n^-1 sum psi_ue,i
//   zeta2 = n^-1 sum Y_i
//   zeta3 = n^-1 sum W_i
//   zeta4 = n^-1 sum W_i W_i' - n^-1 sum psi_uu,i
struct MomentStats {
  Eigen::VectorXd zeta1;
  double zeta2 = 0.0;
  Eigen::VectorXd zeta3;
  Eigen::MatrixXd zeta4;
};

struct FitResult {
  ModelParams params;
  double sigma2_b_yl = 0.0;  // untruncated moment estimate, diagnostic only
  double loglik_at_optimum = 0.0;
  int n_areas = 0;
  std::map<std::string, double> diagnostics;
};

inline MomentStats compute_moments(const Dataset& ds) {
  const int n = ds.n();
  const int p = ds.p();
  if (n < p + 2) throw TooFewAreas("need at least p + 2 areas, have " + std::to_string(n));

  MomentStats m;
  m.zeta1 = Eigen::VectorXd::Zero(p);
  m.zeta3 = Eigen::VectorXd::Zero(p);
  m.zeta4 = Eigen::MatrixXd::Zero(p, p);
  m.zeta2 = 0.0;
  for (const auto& a : ds) {
    m.zeta1 += a.y * a.w - a.psi.psi_ue;
    m.zeta2 += a.y;
    m.zeta3 += a.w;
    m.zeta4 += a.w * a.w.transpose() - a.psi.psi_uu;
  }
  const double inv_n = 1.0 / n;
  m.zeta1 *= inv_n;
  m.zeta2 *= inv_n;
  m.zeta3 *= inv_n;
  m.zeta4 *= inv_n;
  return m;
}

// (beta0, beta1')' = [[1, zeta3'], [zeta3, zeta4]]^-1 (zeta2, zeta1')'
// Also reports the condition number of the moment matrix.
inline std::pair<double, Eigen::VectorXd> estimate_beta(const MomentStats& m,
                                                        double* condition_out = nullptr) {
  const int p = static_cast<int>(m.zeta3.size());
  Eigen::MatrixXd a(p + 1, p + 1);
  a(0, 0) = 1.0;
  a.block(0, 1, 1, p) = m.zeta3.transpose();
  a.block(1, 0, p, 1) = m.zeta3;
  a.bottomRightCorner(p, p) = m.zeta4;

  Eigen::VectorXd rhs(p + 1);
  rhs(0) = m.zeta2;
  rhs.segment(1, p) = m.zeta1;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  const double cond = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
  if (condition_out) *condition_out = cond;
  if (!(cond < 1e12)) {
    throw SingularMomentMatrix(
        "moment matrix is numerically singular (no covariate variation after "
        "measurement-error correction)");
  }
  Eigen::VectorXd sol = svd.solve(rhs);
  if (!sol.allFinite()) throw SingularMomentMatrix("moment system solve produced non-finite values");
  return {sol(0), sol.segment(1, p)};
}

// Untruncated moment estimator of sigma2_b:
//   (n-p-1)^-1 sum{ v_i^2 - psi_ee,i - beta1' psi_uu,i beta1 + 2 beta1' psi_ue,i }
inline double sigma2_b_yl(const Dataset& ds, double beta0, const Eigen::VectorXd& beta1) {
  const int n = ds.n();
  const int p = ds.p();
  if (n <= p + 1) throw TooFewAreas("need more than p + 1 areas for the moment variance estimator");
  double acc = 0.0;
  for (const auto& a : ds) {
    const double v = a.y - beta0 - beta1.dot(a.w);
    acc += v * v - a.psi.psi_ee - beta1.dot(a.psi.psi_uu * beta1) + 2.0 * beta1.dot(a.psi.psi_ue);
  }
  return acc / (n - p - 1);
}

namespace detail {

// sigma2_delta,i = psi_ee,i + beta1' psi_uu,i beta1 - 2 beta1' psi_ue,i
inline Eigen::VectorXd delta_variances(const Dataset& ds, const Eigen::VectorXd& beta1) {
  Eigen::VectorXd d(ds.n());
  for (int i = 0; i < ds.n(); ++i) {
    const auto& a = ds[i];
    d(i) = a.psi.psi_ee + beta1.dot(a.psi.psi_uu * beta1) - 2.0 * beta1.dot(a.psi.psi_ue);
  }
  return d;
}

inline Eigen::VectorXd residuals(const Dataset& ds, double beta0, const Eigen::VectorXd& beta1) {
  Eigen::VectorXd v(ds.n());
  for (int i = 0; i < ds.n(); ++i) v(i) = ds[i].y - beta0 - beta1.dot(ds[i].w);
  return v;
}

constexpr double kMinTotalVariance = 1e-12;

// Log of the profile objective; -inf where some total variance is
// non-positive (used by the optimizer, which never picks such points).
inline double loglik_guarded(double sigma2_b, const Eigen::VectorXd& v,
                             const Eigen::VectorXd& delta) {
  constexpr double log_2pi = 1.8378770664093454836;
  double ll = 0.0;
  for (int i = 0; i < v.size(); ++i) {
    const double total = sigma2_b + delta(i);
    if (total <= kMinTotalVariance) return -std::numeric_limits<double>::infinity();
    ll -= 0.5 * (log_2pi + std::log(total)) + 0.5 * v(i) * v(i) / total;
  }
  return ll;
}

inline double search_upper_bound(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  double var = 0.0;
  if (n > 1) {
    const double mean = v.mean();
    var = (v.array() - mean).square().sum() / (n - 1);
  }
  return std::max(1.0, 10.0 * var);
}

// Maximizer of the guarded profile log likelihood on [0, U].
inline double argmax_sigma2_b(const Eigen::VectorXd& v, const Eigen::VectorXd& delta,
                              double upper, int* iterations = nullptr) {
  constexpr double tol = 1e-9;
  auto obj = [&](double s) { return loglik_guarded(s, v, delta); };
  ScalarMaxResult r = maximize_scalar(obj, 0.0, upper, tol);
  if (iterations) *iterations = r.evaluations;
  // Compare against the endpoints so boundary solutions are representable.
  double best_x = r.x, best_f = r.fx;
  for (double s : {0.0, upper}) {
    const double fs = obj(s);
    if (fs > best_f) { best_f = fs; best_x = s; }
  }
  if (!std::isfinite(best_f)) {
    // Degenerate case: every admissible variance is non-positive except
    // possibly an interval shrinking to the lower boundary.
    if (delta.minCoeff() >= -kMinTotalVariance && v.cwiseAbs().maxCoeff() == 0.0) return 0.0;
    throw NonPositiveTotalVariance(
        "profile likelihood undefined on the whole search interval");
  }
  // Brent guarantees the incumbent within 2 xtol of the bracket; anything
  // inside that band of the lower boundary is the boundary.
  return (best_x < 2.0 * tol) ? 0.0 : best_x;
}

}  // namespace detail

// Log of the Gaussian profile objective L(sigma2_b | beta0, beta1).
inline double profile_loglik(double sigma2_b, const Dataset& ds, double beta0,
                             const Eigen::VectorXd& beta1) {
  const Eigen::VectorXd v = detail::residuals(ds, beta0, beta1);
  const Eigen::VectorXd delta = detail::delta_variances(ds, beta1);
  for (int i = 0; i < ds.n(); ++i) {
    if (sigma2_b + delta(i) <= detail::kMinTotalVariance) {
      throw NonPositiveTotalVariance("sigma2_b + sigma2_delta," + std::to_string(i) +
                                     " <= 1e-12");
    }
  }
  return detail::loglik_guarded(sigma2_b, v, delta);
}

// argmax of the profile likelihood over [0, U], U = max(1, 10 var(v)),
// to absolute tolerance 1e-9.
inline double estimate_sigma2_b_ml(const Dataset& ds, double beta0,
                                   const Eigen::VectorXd& beta1) {
  const Eigen::VectorXd v = detail::residuals(ds, beta0, beta1);
  const Eigen::VectorXd delta = detail::delta_variances(ds, beta1);
  return detail::argmax_sigma2_b(v, delta, detail::search_upper_bound(v));
}

// Full one-step fit: beta by moment matching, sigma2_b by profile ML.
// sigma2_delta,i estimated below the floor 1e-8 * median(psi_ee) is
// clamped; the clamp count is recorded in diagnostics.
inline FitResult fit_mecor(const Dataset& ds) {
  FitResult fit;
  fit.n_areas = ds.n();

  double cond = 0.0;
  const MomentStats m = compute_moments(ds);
  auto [beta0, beta1] = estimate_beta(m, &cond);
  fit.diagnostics["moment_condition"] = cond;

  const Eigen::VectorXd v = detail::residuals(ds, beta0, beta1);
  Eigen::VectorXd delta = detail::delta_variances(ds, beta1);

  std::vector<double> psi_ee(static_cast<size_t>(ds.n()));
  for (int i = 0; i < ds.n(); ++i) psi_ee[static_cast<size_t>(i)] = ds[i].psi.psi_ee;
  std::nth_element(psi_ee.begin(), psi_ee.begin() + psi_ee.size() / 2, psi_ee.end());
  const double floor = 1e-8 * psi_ee[psi_ee.size() / 2];
  int clamped = 0;
  for (int i = 0; i < ds.n(); ++i) {
    if (delta(i) < floor) { delta(i) = floor; ++clamped; }
  }
  fit.diagnostics["delta_clamped"] = clamped;

  int iters = 0;
  const double s2b = detail::argmax_sigma2_b(v, delta, detail::search_upper_bound(v), &iters);
  fit.diagnostics["optimizer_iterations"] = iters;

  fit.params = ModelParams{beta0, beta1, s2b};
  fit.sigma2_b_yl = sigma2_b_yl(ds, beta0, beta1);
  fit.loglik_at_optimum = detail::loglik_guarded(s2b, v, delta);
  return fit;
}

}  // namespace mecor
