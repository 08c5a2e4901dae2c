#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "mecor/errors.hpp"
#include "mecor/estimation.hpp"
#include "mecor/prediction.hpp"
#include "mecor/types.hpp"

namespace mecor {

// The M2 and covariance formulas are implemented exactly as plain sums of
// squared deviations, with no (n-1)/n factor. Classic applies the
// conventional jackknife factor and is opt-in.
enum class JackknifeScale { Paper, Classic };

struct JackknifeSet {
  ModelParams omega_full;
  std::vector<ModelParams> omega_deleted;      // one per successful deletion
  std::vector<std::string> deleted_area_ids;   // aligned with omega_deleted
  std::vector<std::string> failed_deletions;
};

struct MspeRecord {
  std::string area_id;
  double theta_hat = 0.0;
  double m1_hat = 0.0;
  double m2_jk = 0.0;
  double bias_jk = 0.0;
  double mspe = 0.0;
  double mspe_lb = 0.0;
  bool lb_applied = false;
};

struct JackknifeCovariance {
  Eigen::MatrixXd cov;  // (p+2) x (p+2), order (beta0, beta1..., sigma2_b)
  Eigen::VectorXd se;
};

// Delete-one refits. Deletions are processed in area_id order so that all
// downstream sums are independent of the input ordering. Individual
// failures are recorded; more than 5% failing is degenerate.
inline JackknifeSet jackknife_refits(const Dataset& ds) {
  const int n = ds.n();
  if (n < ds.p() + 3) throw TooFewAreas("need at least p + 3 areas for delete-one refits");

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return ds[a].area_id < ds[b].area_id; });

  JackknifeSet jk;
  jk.omega_full = fit_mecor(ds).params;
  jk.omega_deleted.reserve(static_cast<size_t>(n));
  for (int k : order) {
    try {
      jk.omega_deleted.push_back(fit_mecor(ds.without(k)).params);
      jk.deleted_area_ids.push_back(ds[k].area_id);
    } catch (const Error&) {
      jk.failed_deletions.push_back(ds[k].area_id);
    }
  }
  if (20 * jk.failed_deletions.size() > static_cast<size_t>(n)) {
    throw JackknifeDegenerate("more than 5% of delete-one refits failed");
  }
  return jk;
}

// MSPE_i = M1i(omega_hat) + M2i,JK - b_i,JK with
//   M2i,JK = sum_k (e_i(omega^(k)) - mean_k e_i(omega^(k)))^2
//   b_i,JK = mean_k M1i(omega^(k)) - M1i(omega_hat)
// When MSPE_i <= 0 the lower-bounded variant M1i(omega_hat) + M2i,JK is
// reported in mspe_lb.
inline std::vector<MspeRecord> mspe_estimate(const Dataset& ds, const JackknifeSet& jk,
                                             JackknifeScale scale = JackknifeScale::Paper) {
  const size_t m = jk.omega_deleted.size();
  if (m < 2) throw JackknifeDegenerate("fewer than 2 successful deletions");

  std::vector<MspeRecord> out;
  out.reserve(static_cast<size_t>(ds.n()));
  for (const auto& obs : ds) {
    const PredictionRecord full = predict_theta(obs, jk.omega_full);

    std::vector<double> e_del(m), m1_del(m);
    for (size_t k = 0; k < m; ++k) {
      const PredictionRecord pr = predict_theta(obs, jk.omega_deleted[k]);
      e_del[k] = pr.e_hat;
      m1_del[k] = pr.m1;
    }
    const double e_mean = std::accumulate(e_del.begin(), e_del.end(), 0.0) / m;
    double m2 = 0.0;
    for (double e : e_del) m2 += (e - e_mean) * (e - e_mean);
    if (scale == JackknifeScale::Classic) m2 *= static_cast<double>(m - 1) / m;
    const double m1_mean = std::accumulate(m1_del.begin(), m1_del.end(), 0.0) / m;

    MspeRecord rec;
    rec.area_id = obs.area_id;
    rec.theta_hat = full.theta_hat;
    rec.m1_hat = full.m1;
    rec.m2_jk = m2;
    rec.bias_jk = m1_mean - full.m1;
    rec.mspe = rec.m1_hat + rec.m2_jk - rec.bias_jk;
    rec.lb_applied = rec.mspe <= 0.0;
    rec.mspe_lb = rec.lb_applied ? rec.m1_hat + rec.m2_jk : rec.mspe;
    out.push_back(std::move(rec));
  }
  return out;
}

// V_JK(omega_hat) = sum_k (omega^(k) - mean)(omega^(k) - mean)'
inline JackknifeCovariance jackknife_covariance(const JackknifeSet& jk,
                                                JackknifeScale scale = JackknifeScale::Paper) {
  const size_t m = jk.omega_deleted.size();
  if (m < 2) throw JackknifeDegenerate("fewer than 2 successful deletions");
  const int dim = static_cast<int>(jk.omega_deleted.front().as_vector().size());

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& w : jk.omega_deleted) mean += w.as_vector();
  mean /= static_cast<double>(m);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& w : jk.omega_deleted) {
    const Eigen::VectorXd d = w.as_vector() - mean;
    cov += d * d.transpose();
  }
  if (scale == JackknifeScale::Classic) cov *= static_cast<double>(m - 1) / m;

  JackknifeCovariance out;
  out.cov = cov;
  out.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace mecor
