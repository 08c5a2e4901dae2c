#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mecor/errors.hpp"
#include "mecor/types.hpp"

namespace mecor {

// One unit-level survey record: positive covariate and response values
// (positivity is required by the log/delta-method pipeline).
struct UnitRecord {
  std::string area_id;
  double w_raw = 0.0;
  double y_raw = 0.0;
};

struct AreaMeans {
  std::string area_id;
  double w_mean = 0.0;
  double y_mean = 0.0;
  int n_units = 0;
};

struct PreparedArea {
  std::string area_id;
  int n_units = 0;
  double y = 0.0;   // log of the area mean response
  double w = 0.0;   // log of the area mean covariate
  ErrorCov psi;     // pooled within-area covariance / n_i
};

struct PreparedData {
  std::vector<PreparedArea> areas;
  Eigen::Matrix2d pooled_psi;  // (w, y) ordering
  double cor_ue = 0.0;
  double var_ratio = 0.0;      // V(u) / V(e) estimate
  std::vector<std::string> singleton_areas;  // kept, but excluded from pooling
};

inline AreaMeans area_means(const std::string& area_id, const std::vector<UnitRecord>& units) {
  if (units.empty()) throw EmptyArea("area " + area_id + " has no units");
  AreaMeans m;
  m.area_id = area_id;
  m.n_units = static_cast<int>(units.size());
  for (const auto& u : units) {
    m.w_mean += u.w_raw;
    m.y_mean += u.y_raw;
  }
  m.w_mean /= m.n_units;
  m.y_mean /= m.n_units;
  return m;
}

// Sample covariance of (w, y) with divisor n_i - 1.
inline Eigen::Matrix2d within_area_cov(const std::vector<UnitRecord>& units) {
  const int n = static_cast<int>(units.size());
  if (n < 2) {
    throw SingletonArea("within-area covariance needs at least 2 units");
  }
  double wm = 0.0, ym = 0.0;
  for (const auto& u : units) { wm += u.w_raw; ym += u.y_raw; }
  wm /= n;
  ym /= n;
  Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
  for (const auto& u : units) {
    const double dw = u.w_raw - wm, dy = u.y_raw - ym;
    s(0, 0) += dw * dw;
    s(0, 1) += dw * dy;
    s(1, 1) += dy * dy;
  }
  s(1, 0) = s(0, 1);
  return s / (n - 1);
}

// Delta-method transform to the log scale:
//   psi_tilde = diag(1/W, 1/Y) Sigma diag(1/W, 1/Y)
inline Eigen::Matrix2d delta_transform(const Eigen::Matrix2d& sigma, double w_mean,
                                       double y_mean) {
  if (!(w_mean > 0.0) || !(y_mean > 0.0)) {
    throw NonPositiveMean("delta-method transform requires positive area means");
  }
  const Eigen::Vector2d d(1.0 / w_mean, 1.0 / y_mean);
  return d.asDiagonal() * sigma * d.asDiagonal();
}

// Degrees-of-freedom weighted pool over areas; singletons carry weight 0.
inline Eigen::Matrix2d pool_psi(const std::vector<Eigen::Matrix2d>& psis,
                                const std::vector<int>& n_units) {
  if (psis.size() != n_units.size()) throw DimensionMismatch("pool_psi input size mismatch");
  double dof = 0.0;
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (size_t i = 0; i < psis.size(); ++i) {
    dof += n_units[i] - 1;
    acc += (n_units[i] - 1) * psis[i];
  }
  if (!(dof > 0.0)) {
    throw InsufficientDegreesOfFreedom("pooled within-area covariance has no degrees of freedom");
  }
  return acc / dof;
}

// Full pipeline: group units by area, pool the delta-method covariances,
// and emit log-scale area observations with psi_i = pooled / n_i.
inline PreparedData prepare(const std::vector<UnitRecord>& units) {
  std::map<std::string, std::vector<UnitRecord>> by_area;
  for (const auto& u : units) {
    if (!std::isfinite(u.w_raw) || !std::isfinite(u.y_raw)) {
      throw NonFiniteValue("unit in area " + u.area_id + " has a non-finite value");
    }
    if (!(u.w_raw > 0.0) || !(u.y_raw > 0.0)) {
      throw NonPositiveMean("unit in area " + u.area_id + " has a non-positive value");
    }
    by_area[u.area_id].push_back(u);
  }
  if (by_area.size() < 2) throw TooFewAreas("survey preparation requires at least 2 areas");

  PreparedData out;
  std::vector<Eigen::Matrix2d> psis;
  std::vector<int> dof_counts;
  std::vector<AreaMeans> means;
  for (const auto& [id, au] : by_area) {
    const AreaMeans m = area_means(id, au);
    means.push_back(m);
    if (m.n_units >= 2) {
      psis.push_back(delta_transform(within_area_cov(au), m.w_mean, m.y_mean));
      dof_counts.push_back(m.n_units);
    } else {
      out.singleton_areas.push_back(id);
    }
  }

  out.pooled_psi = pool_psi(psis, dof_counts);
  out.cor_ue = out.pooled_psi(0, 1) /
               std::sqrt(out.pooled_psi(0, 0) * out.pooled_psi(1, 1));
  out.var_ratio = out.pooled_psi(0, 0) / out.pooled_psi(1, 1);

  out.areas.reserve(means.size());
  for (const auto& m : means) {
    PreparedArea a;
    a.area_id = m.area_id;
    a.n_units = m.n_units;
    a.w = std::log(m.w_mean);
    a.y = std::log(m.y_mean);
    const Eigen::Matrix2d scaled = out.pooled_psi / m.n_units;
    a.psi.psi_uu = Eigen::MatrixXd::Constant(1, 1, scaled(0, 0));
    a.psi.psi_ue = Eigen::VectorXd::Constant(1, scaled(0, 1));
    a.psi.psi_ee = scaled(1, 1);
    out.areas.push_back(std::move(a));
  }
  return out;
}

inline std::vector<AreaObservation> to_area_observations(const PreparedData& prep) {
  std::vector<AreaObservation> obs;
  obs.reserve(prep.areas.size());
  for (const auto& a : prep.areas) {
    AreaObservation o;
    o.area_id = a.area_id;
    o.y = a.y;
    o.w = Eigen::VectorXd::Constant(1, a.w);
    o.psi = a.psi;
    obs.push_back(std::move(o));
  }
  return obs;
}

}  // namespace mecor
