#pragma once

#include <Eigen/Dense>
#include <string>

#include "mecor/errors.hpp"
#include "mecor/types.hpp"

namespace mecor {

struct PredictionRecord {
  std::string area_id;
  double y = 0.0;
  double v = 0.0;           // Y_i - beta0 - beta1' W_i
  double e_hat = 0.0;       // predicted sampling error
  double theta_hat = 0.0;   // Y_i - e_hat
  double m1 = 0.0;          // leading MSPE term at the supplied parameters
  double shrink_coef = 0.0; // (psi_ee - beta1' psi_ue) / (sigma2_b + sigma2_delta)
};

inline double residual_v(const AreaObservation& obs, const ModelParams& params) {
  if (obs.w.size() != params.beta1.size()) {
    throw DimensionMismatch("area " + obs.area_id + ": beta1 dimension mismatch");
  }
  return obs.y - params.beta0 - params.beta1.dot(obs.w);
}

// e_hat = [(psi_ee - beta1' psi_ue) / (sigma2_b + sigma2_delta)] v
// m1    = psi_ee - (psi_ee - beta1' psi_ue)^2 / (sigma2_b + sigma2_delta)
// m1 is reported raw; it can be negative under plugged-in estimates and
// negativity is handled downstream by the MSPE lower bound.
inline PredictionRecord predict_theta(const AreaObservation& obs, const ModelParams& params) {
  const Eigen::VectorXd& b1 = params.beta1;
  const double bpb = b1.dot(obs.psi.psi_uu * b1);
  const double bpe = b1.dot(obs.psi.psi_ue);
  const double sigma2_delta = bpb + obs.psi.psi_ee - 2.0 * bpe;
  const double total = params.sigma2_b + sigma2_delta;
  if (total <= 1e-12) {
    throw NonPositiveTotalVariance("area " + obs.area_id +
                                   ": sigma2_b + sigma2_delta is not positive");
  }
  PredictionRecord r;
  r.area_id = obs.area_id;
  r.y = obs.y;
  r.v = residual_v(obs, params);
  r.shrink_coef = (obs.psi.psi_ee - bpe) / total;
  r.e_hat = r.shrink_coef * r.v;
  r.theta_hat = obs.y - r.e_hat;
  r.m1 = obs.psi.psi_ee - (obs.psi.psi_ee - bpe) * (obs.psi.psi_ee - bpe) / total;
  return r;
}

}  // namespace mecor
