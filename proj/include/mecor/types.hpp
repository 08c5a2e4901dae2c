#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mecor/errors.hpp"

namespace mecor {

// Partitioned sampling/measurement error covariance of (u_i', e_i)':
//   [[psi_uu, psi_ue], [psi_ue', psi_ee]]
// psi_uu is p x p, psi_ue is a p-vector, psi_ee a nonnegative scalar.
struct ErrorCov {
  Eigen::MatrixXd psi_uu;
  Eigen::VectorXd psi_ue;
  double psi_ee = 0.0;

  int dim() const { return static_cast<int>(psi_ue.size()); }

  static ErrorCov zero(int p) {
    return ErrorCov{Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p), 0.0};
  }

  // Assemble the full (p+1) x (p+1) matrix with the covariate block first.
  Eigen::MatrixXd full() const {
    const int p = dim();
    Eigen::MatrixXd m(p + 1, p + 1);
    m.topLeftCorner(p, p) = psi_uu;
    m.block(0, p, p, 1) = psi_ue;
    m.block(p, 0, 1, p) = psi_ue.transpose();
    m(p, p) = psi_ee;
    return m;
  }

  static ErrorCov from_full(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols() || m.rows() < 2) {
      throw DimensionMismatch("full covariance must be square with dim >= 2");
    }
    const int p = static_cast<int>(m.rows()) - 1;
    ErrorCov c;
    c.psi_uu = m.topLeftCorner(p, p);
    c.psi_ue = m.block(0, p, p, 1);
    c.psi_ee = m(p, p);
    return c;
  }
};

// One area's direct estimates: response Y_i, observed covariate W_i, and
// the known error covariance Psi_i.
struct AreaObservation {
  std::string area_id;
  double y = 0.0;
  Eigen::VectorXd w;
  ErrorCov psi;
};

// omega = (beta0, beta1', sigma2_b)'
struct ModelParams {
  double beta0 = 0.0;
  Eigen::VectorXd beta1;
  double sigma2_b = 0.0;

  Eigen::VectorXd as_vector() const {
    Eigen::VectorXd v(beta1.size() + 2);
    v(0) = beta0;
    v.segment(1, beta1.size()) = beta1;
    v(v.size() - 1) = sigma2_b;
    return v;
  }
};

// Simulation-only record of the latent state behind one area.
struct LatentTruth {
  Eigen::VectorXd x;
  double b = 0.0;
  double theta = 0.0;
};

namespace detail {

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

inline void check_psd(const ErrorCov& psi, const std::string& area_id) {
  if (psi.psi_ee < 0.0) {
    throw NonPSDCovariance("area " + area_id + ": psi_ee < 0");
  }
  if ((psi.psi_uu.diagonal().array() < 0.0).any()) {
    throw NonPSDCovariance("area " + area_id + ": psi_uu has a negative diagonal element");
  }
  const Eigen::MatrixXd full = psi.full();
  if ((full - full.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * (1.0 + full.cwiseAbs().maxCoeff())) {
    throw NonPSDCovariance("area " + area_id + ": covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full, Eigen::EigenvaluesOnly);
  // Survey-estimated covariances are often borderline; allow a small
  // trace-relative negative eigenvalue.
  const double tol = -1e-10 * std::max(full.trace(), 0.0);
  if (es.eigenvalues().minCoeff() < tol) {
    throw NonPSDCovariance("area " + area_id + ": covariance not positive semi-definite");
  }
}

}  // namespace detail

// Validated collection of areas with a common covariate dimension p.
// Constructed only through validate_dataset.
class Dataset {
public:
  int n() const { return static_cast<int>(obs_.size()); }
  int p() const { return p_; }

  const AreaObservation& operator[](int i) const { return obs_[static_cast<size_t>(i)]; }
  const std::vector<AreaObservation>& areas() const { return obs_; }
  auto begin() const { return obs_.begin(); }
  auto end() const { return obs_.end(); }

  // Copy with area k removed (delete-one jackknife). No revalidation:
  // subsets of a valid dataset remain valid.
  Dataset without(int k) const {
    std::vector<AreaObservation> sub;
    sub.reserve(obs_.size() - 1);
    for (int i = 0; i < n(); ++i) {
      if (i != k) sub.push_back(obs_[static_cast<size_t>(i)]);
    }
    return Dataset(std::move(sub), p_);
  }

  friend Dataset validate_dataset(std::vector<AreaObservation> obs);

private:
  Dataset(std::vector<AreaObservation> obs, int p) : obs_(std::move(obs)), p_(p) {}

  std::vector<AreaObservation> obs_;
  int p_ = 0;
};

inline Dataset validate_dataset(std::vector<AreaObservation> obs) {
  if (obs.empty()) throw EmptyDataset("dataset has no areas");
  const int p = static_cast<int>(obs.front().w.size());
  for (const auto& a : obs) {
    if (static_cast<int>(a.w.size()) != p || a.psi.dim() != p ||
        a.psi.psi_uu.rows() != p || a.psi.psi_uu.cols() != p) {
      throw DimensionMismatch("area " + a.area_id + ": covariate dimension differs from p=" +
                              std::to_string(p));
    }
    if (!std::isfinite(a.y) || !detail::all_finite(a.w) ||
        !detail::all_finite(a.psi.psi_uu) || !detail::all_finite(a.psi.psi_ue) ||
        !std::isfinite(a.psi.psi_ee)) {
      throw NonFiniteValue("area " + a.area_id + ": non-finite value");
    }
    detail::check_psd(a.psi, a.area_id);
  }
  return Dataset(std::move(obs), p);
}

}  // namespace mecor
