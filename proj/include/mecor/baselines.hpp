#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mecor/errors.hpp"
#include "mecor/estimation.hpp"
#include "mecor/mspe.hpp"
#include "mecor/prediction.hpp"
#include "mecor/types.hpp"

namespace mecor {

struct FhResult {
  FitResult fit;
  std::vector<PredictionRecord> predictions;
  std::vector<MspeRecord> mspe;
};

struct YlResult {
  FitResult fit;
  std::vector<PredictionRecord> predictions;
};

// Naive Fay-Herriot: W_i treated as fixed, measurement error ignored.
// sigma2_v by profile ML (same scalar search as the main fit), beta by GLS,
// EBLUP theta_hat = gamma Y + (1 - gamma) x'beta, and the first-order
// Prasad-Rao g1 + g2 + 2 g3 MSPE estimator with the ML variance of
// sigma2_v_hat. This approximates the R package estimators used for
// comparison; it does not bit-match them.
inline FhResult fit_fh(const Dataset& ds) {
  const int n = ds.n();
  const int p = ds.p();
  if (n < p + 2) throw TooFewAreas("need at least p + 2 areas");

  Eigen::MatrixXd x(n, p + 1);
  Eigen::VectorXd y(n), psi_ee(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x.row(i).segment(1, p) = ds[i].w.transpose();
    y(i) = ds[i].y;
    psi_ee(i) = ds[i].psi.psi_ee;
  }

  auto gls = [&](double s) -> Eigen::VectorXd {
    const Eigen::ArrayXd wgt = 1.0 / (s + psi_ee.array());
    const Eigen::MatrixXd xtv = x.transpose() * wgt.matrix().asDiagonal();
    const Eigen::MatrixXd xtvx = xtv * x;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtvx);
    if (!lu.isInvertible()) throw SingularMomentMatrix("FH normal-equations matrix is singular");
    return lu.solve(xtv * y);
  };

  constexpr double log_2pi = 1.8378770664093454836;
  auto profile = [&](double s) -> double {
    Eigen::VectorXd beta;
    try {
      beta = gls(s);
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
    const Eigen::ArrayXd total = s + psi_ee.array();
    const Eigen::ArrayXd r = (y - x * beta).array();
    return -0.5 * (log_2pi + total.log() + r.square() / total).sum();
  };

  // Bound the search by the OLS residual scale.
  const Eigen::VectorXd beta_ols = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd r_ols = y - x * beta_ols;
  const double var_r = r_ols.squaredNorm() / std::max(1, n - 1);
  const double upper = std::max(1.0, 10.0 * var_r);

  ScalarMaxResult opt = maximize_scalar(profile, 0.0, upper, 1e-9);
  double s2v = opt.x;
  double best = opt.fx;
  for (double s : {0.0, upper}) {
    const double fs = profile(s);
    if (fs > best) { best = fs; s2v = s; }
  }
  if (s2v < 1e-9) s2v = 0.0;

  const Eigen::VectorXd beta = gls(s2v);
  const Eigen::ArrayXd wgt = 1.0 / (s2v + psi_ee.array());
  const Eigen::MatrixXd xtvx_inv =
      (x.transpose() * wgt.matrix().asDiagonal() * x).inverse();
  // Asymptotic ML variance of sigma2_v_hat.
  const double var_s2v = 2.0 / wgt.square().sum();

  FhResult out;
  out.fit.n_areas = n;
  out.fit.params = ModelParams{beta(0), beta.segment(1, p), s2v};
  out.fit.sigma2_b_yl = s2v;
  out.fit.loglik_at_optimum = best;
  out.fit.diagnostics["optimizer_iterations"] = opt.evaluations;

  out.predictions.reserve(static_cast<size_t>(n));
  out.mspe.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double total = s2v + psi_ee(i);
    const double gamma = total > 0.0 ? s2v / total : 0.0;
    const double xb = x.row(i).dot(beta);

    PredictionRecord pr;
    pr.area_id = ds[i].area_id;
    pr.y = y(i);
    pr.v = y(i) - xb;
    pr.shrink_coef = 1.0 - gamma;
    pr.e_hat = pr.shrink_coef * pr.v;
    pr.theta_hat = gamma * y(i) + (1.0 - gamma) * xb;
    const double g1 = gamma * psi_ee(i);
    pr.m1 = g1;
    out.predictions.push_back(pr);

    const double g2 = (1.0 - gamma) * (1.0 - gamma) *
                      (x.row(i) * xtvx_inv * x.row(i).transpose())(0, 0);
    const double g3 = total > 0.0
                          ? psi_ee(i) * psi_ee(i) / (total * total * total) * var_s2v
                          : 0.0;
    MspeRecord mr;
    mr.area_id = ds[i].area_id;
    mr.theta_hat = pr.theta_hat;
    mr.m1_hat = g1;
    mr.m2_jk = g2;
    mr.bias_jk = -2.0 * g3;
    mr.mspe = g1 + g2 + 2.0 * g3;
    mr.mspe_lb = mr.mspe;
    mr.lb_applied = false;
    out.mspe.push_back(mr);
  }
  return out;
}

inline Dataset zero_psi_ue(const Dataset& ds) {
  std::vector<AreaObservation> obs(ds.areas());
  for (auto& a : obs) a.psi.psi_ue.setZero();
  return validate_dataset(std::move(obs));
}

// Ybarra-Lohr: the correlated-error pipeline with every psi_ue forced to
// zero, and sigma2_b from the moment estimator truncated at zero.
inline YlResult fit_yl(const Dataset& ds) {
  const Dataset zeroed = zero_psi_ue(ds);

  YlResult out;
  double cond = 0.0;
  const MomentStats m = compute_moments(zeroed);
  auto [beta0, beta1] = estimate_beta(m, &cond);
  const double s2b_raw = sigma2_b_yl(zeroed, beta0, beta1);
  const double s2b = std::max(0.0, s2b_raw);

  out.fit.n_areas = ds.n();
  out.fit.params = ModelParams{beta0, beta1, s2b};
  out.fit.sigma2_b_yl = s2b_raw;
  out.fit.diagnostics["moment_condition"] = cond;
  {
    const Eigen::VectorXd v = detail::residuals(zeroed, beta0, beta1);
    const Eigen::VectorXd delta = detail::delta_variances(zeroed, beta1);
    out.fit.loglik_at_optimum = detail::loglik_guarded(s2b, v, delta);
  }

  out.predictions.reserve(static_cast<size_t>(ds.n()));
  for (const auto& a : zeroed) out.predictions.push_back(predict_theta(a, out.fit.params));
  return out;
}

}  // namespace mecor
