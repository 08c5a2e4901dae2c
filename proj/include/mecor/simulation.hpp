#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mecor/baselines.hpp"
#include "mecor/errors.hpp"
#include "mecor/estimation.hpp"
#include "mecor/mspe.hpp"
#include "mecor/prediction.hpp"
#include "mecor/types.hpp"

namespace mecor {

enum class SimDist { Normal, T5 };
enum class PsiPattern { Unequal, Equal };

// One Monte Carlo configuration. The covariate is univariate; psi blocks
// follow (0.75 + 0.25 j)^2 diag(sqrt(a), sqrt(b)) [[1, rho], [rho, 1]]
// diag(sqrt(a), sqrt(b)) for j = 0..3.
struct SimConfig {
  double a = 0.25;
  double b = 0.75;
  double rho = 0.2;
  int n = 100;
  SimDist dist = SimDist::Normal;
  PsiPattern psi_pattern = PsiPattern::Unequal;
  int mc_reps = 1000;
  std::uint64_t seed = 1;
  ModelParams true_params{1.0, Eigen::VectorXd::Constant(1, 2.0), 0.36};

  void validate() const {
    if (!(a > 0.0) || !(b > 0.0)) throw BadInputFile("simulation config requires a, b > 0");
    if (!(rho > -1.0 && rho < 1.0)) throw BadInputFile("simulation config requires rho in (-1, 1)");
    if (mc_reps < 1) throw BadInputFile("mc_reps must be >= 1");
    if (n < 4) throw BadInputFile("n must be >= 4");
    if (psi_pattern == PsiPattern::Unequal && n % 4 != 0) {
      throw BadInputFile("n must be divisible by 4 for the unequal psi pattern");
    }
  }
};

struct MethodStats {
  Eigen::VectorXd mc_mean;          // (beta0, beta1, sigma2_b)
  Eigen::VectorXd mc_sd;
  double mc_mspe = 0.0;             // average over replicates and areas of (theta_hat - theta)^2
  double mc_mean_est_mspe = std::numeric_limits<double>::quiet_NaN();
  int failures = 0;
};

struct SimResult {
  MethodStats mecor, yl, fh;
  double direct_mspe = 0.0;
  std::vector<double> per_area_mspe_mecor;   // diagnostics
  std::vector<double> per_area_mspe_direct;
  int replicates = 0;
};

struct SimMethods {
  bool mecor = true;
  bool yl = true;
  bool fh = true;
  bool mecor_mspe = false;  // delete-one jackknife per replicate; expensive
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based stream derivation: replicate engines depend only on
// (seed, stream), never on scheduling.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 1)));
}

}  // namespace detail

// Block scale factors 0.75, 1.0, 1.25, 1.5 for j = 0..3. The equal pattern
// uses the j = 1 block (unit scale) for every area.
inline ErrorCov build_psi(int j, double a, double b, double rho) {
  const double c = (0.75 + 0.25 * j) * (0.75 + 0.25 * j);
  ErrorCov psi;
  psi.psi_uu = Eigen::MatrixXd::Constant(1, 1, c * a);
  psi.psi_ue = Eigen::VectorXd::Constant(1, c * rho * std::sqrt(a * b));
  psi.psi_ee = c * b;
  return psi;
}

// Fixed chi-squared(5) population, drawn once per configuration and shared
// across all replicates. Chi-squared(5) is generated as a sum of 5 squared
// standard normals.
inline Eigen::VectorXd generate_population(const SimConfig& config) {
  std::mt19937_64 eng = detail::make_engine(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x(config.n);
  for (int i = 0; i < config.n; ++i) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) {
      const double z = normal(eng);
      s += z * z;
    }
    x(i) = s;
  }
  return x;
}

struct Replicate {
  Dataset dataset;
  std::vector<LatentTruth> truths;
};

inline Replicate generate_replicate(const SimConfig& config, const Eigen::VectorXd& x,
                                    int rep_index) {
  std::mt19937_64 eng = detail::make_engine(config.seed, static_cast<std::uint64_t>(rep_index) + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::student_t_distribution<double> t5(5.0);
  const double t_scale = 1.0 / std::sqrt(5.0 / 3.0);

  const double beta0 = config.true_params.beta0;
  const double beta1 = config.true_params.beta1(0);
  const double sigma_b = std::sqrt(config.true_params.sigma2_b);

  // Per-block factors: lower Cholesky for the normal generator, symmetric
  // principal square root for the standardized-t generator.
  Eigen::Matrix2d chol[4], sym_sqrt[4];
  for (int j = 0; j < 4; ++j) {
    const ErrorCov psi = build_psi(j, config.a, config.b, config.rho);
    Eigen::Matrix2d full;
    full << psi.psi_uu(0, 0), psi.psi_ue(0), psi.psi_ue(0), psi.psi_ee;
    const double l11 = std::sqrt(full(0, 0));
    const double l21 = full(1, 0) / l11;
    chol[j] << l11, 0.0, l21, std::sqrt(std::max(0.0, full(1, 1) - l21 * l21));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(full);
    sym_sqrt[j] = es.operatorSqrt();
  }

  std::vector<AreaObservation> obs;
  std::vector<LatentTruth> truths;
  obs.reserve(static_cast<size_t>(config.n));
  truths.reserve(static_cast<size_t>(config.n));

  const int block = config.n / 4;
  for (int i = 0; i < config.n; ++i) {
    const int j = (config.psi_pattern == PsiPattern::Equal) ? 1 : std::min(i / block, 3);

    double u, e, b;
    if (config.dist == SimDist::Normal) {
      const double z1 = normal(eng), z2 = normal(eng);
      u = chol[j](0, 0) * z1;
      e = chol[j](1, 0) * z1 + chol[j](1, 1) * z2;
      b = sigma_b * normal(eng);
    } else {
      const double tu = t5(eng) * t_scale, te = t5(eng) * t_scale, tb = t5(eng) * t_scale;
      u = sym_sqrt[j](0, 0) * tu + sym_sqrt[j](0, 1) * te;
      e = sym_sqrt[j](1, 0) * tu + sym_sqrt[j](1, 1) * te;
      b = sigma_b * tb;
    }

    LatentTruth lt;
    lt.x = Eigen::VectorXd::Constant(1, x(i));
    lt.b = b;
    lt.theta = beta0 + beta1 * x(i) + b;
    truths.push_back(lt);

    AreaObservation a;
    a.area_id = "a" + std::to_string(i + 1000);  // fixed width, sorts numerically
    a.y = lt.theta + e;
    a.w = Eigen::VectorXd::Constant(1, x(i) + u);
    a.psi = build_psi(j, config.a, config.b, config.rho);
    obs.push_back(std::move(a));
  }
  return Replicate{validate_dataset(std::move(obs)), std::move(truths)};
}

namespace detail {

struct RepMethodOut {
  Eigen::Vector3d params = Eigen::Vector3d::Zero();
  double sse = 0.0;           // sum over areas of (theta_hat - theta)^2
  double est_mspe_sum = 0.0;  // sum over areas of estimated MSPE
  bool has_est = false;
  bool failed = false;
};

struct RepOut {
  RepMethodOut mecor, yl, fh;
  std::vector<double> mecor_sq, direct_sq;  // per-area squared errors
  double direct_sse = 0.0;
};

inline void finalize_method(const std::vector<RepOut>& reps, RepMethodOut RepOut::*member,
                            int n_areas, MethodStats& out) {
  int ok = 0;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sumsq = Eigen::Vector3d::Zero();
  double sse = 0.0, est = 0.0;
  int est_count = 0;
  for (const auto& r : reps) {
    const RepMethodOut& m = r.*member;
    if (m.failed) { ++out.failures; continue; }
    ++ok;
    sum += m.params;
    sumsq += m.params.cwiseProduct(m.params);
    sse += m.sse;
    if (m.has_est) { est += m.est_mspe_sum; ++est_count; }
  }
  if (ok > 0) {
    out.mc_mean = sum / ok;
    Eigen::Vector3d var = (sumsq - sum.cwiseProduct(sum) / ok) / std::max(1, ok - 1);
    out.mc_sd = var.cwiseMax(0.0).cwiseSqrt();
    out.mc_mspe = sse / (static_cast<double>(ok) * n_areas);
    if (est_count > 0) out.mc_mean_est_mspe = est / (static_cast<double>(est_count) * n_areas);
  }
}

}  // namespace detail

// Full MC loop. Replicates are independent work units; results are reduced
// in replicate order so output is identical for any thread count.
inline SimResult run_simulation(const SimConfig& config, const SimMethods& methods = {},
                                int threads = 1) {
  config.validate();
  const Eigen::VectorXd x = generate_population(config);
  const int reps = config.mc_reps;
  const int n = config.n;

  std::vector<detail::RepOut> outs(static_cast<size_t>(reps));

  auto run_one = [&](int rep) {
    detail::RepOut& out = outs[static_cast<size_t>(rep)];
    const Replicate r = generate_replicate(config, x, rep);
    out.direct_sq.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double d = r.dataset[i].y - r.truths[static_cast<size_t>(i)].theta;
      out.direct_sq[static_cast<size_t>(i)] = d * d;
      out.direct_sse += d * d;
    }

    if (methods.mecor) {
      try {
        const FitResult fit = fit_mecor(r.dataset);
        out.mecor.params << fit.params.beta0, fit.params.beta1(0), fit.params.sigma2_b;
        out.mecor_sq.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
          const PredictionRecord pr = predict_theta(r.dataset[i], fit.params);
          const double d = pr.theta_hat - r.truths[static_cast<size_t>(i)].theta;
          out.mecor_sq[static_cast<size_t>(i)] = d * d;
          out.mecor.sse += d * d;
        }
        if (methods.mecor_mspe) {
          const JackknifeSet jk = jackknife_refits(r.dataset);
          for (const MspeRecord& mr : mspe_estimate(r.dataset, jk)) {
            out.mecor.est_mspe_sum += mr.mspe_lb;
          }
          out.mecor.has_est = true;
        }
      } catch (const Error&) {
        out.mecor.failed = true;
      }
    }
    if (methods.yl) {
      try {
        const YlResult yl = fit_yl(r.dataset);
        out.yl.params << yl.fit.params.beta0, yl.fit.params.beta1(0), yl.fit.params.sigma2_b;
        for (int i = 0; i < n; ++i) {
          const double d = yl.predictions[static_cast<size_t>(i)].theta_hat -
                           r.truths[static_cast<size_t>(i)].theta;
          out.yl.sse += d * d;
        }
      } catch (const Error&) {
        out.yl.failed = true;
      }
    }
    if (methods.fh) {
      try {
        const FhResult fh = fit_fh(r.dataset);
        out.fh.params << fh.fit.params.beta0, fh.fit.params.beta1(0), fh.fit.params.sigma2_b;
        for (int i = 0; i < n; ++i) {
          const double d = fh.predictions[static_cast<size_t>(i)].theta_hat -
                           r.truths[static_cast<size_t>(i)].theta;
          out.fh.sse += d * d;
          out.fh.est_mspe_sum += fh.mspe[static_cast<size_t>(i)].mspe;
        }
        out.fh.has_est = true;
      } catch (const Error&) {
        out.fh.failed = true;
      }
    }
  };

  if (threads <= 1) {
    for (int rep = 0; rep < reps; ++rep) run_one(rep);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < reps; rep = next.fetch_add(1)) run_one(rep);
      });
    }
    for (auto& th : pool) th.join();
  }

  SimResult result;
  result.replicates = reps;
  if (methods.mecor) detail::finalize_method(outs, &detail::RepOut::mecor, n, result.mecor);
  if (methods.yl) detail::finalize_method(outs, &detail::RepOut::yl, n, result.yl);
  if (methods.fh) detail::finalize_method(outs, &detail::RepOut::fh, n, result.fh);

  double direct_sse = 0.0;
  result.per_area_mspe_direct.assign(static_cast<size_t>(n), 0.0);
  result.per_area_mspe_mecor.assign(static_cast<size_t>(n), 0.0);
  int mecor_ok = 0;
  for (const auto& o : outs) {
    direct_sse += o.direct_sse;
    for (int i = 0; i < n; ++i) result.per_area_mspe_direct[static_cast<size_t>(i)] += o.direct_sq[static_cast<size_t>(i)];
    if (methods.mecor && !o.mecor.failed) {
      ++mecor_ok;
      for (int i = 0; i < n; ++i) result.per_area_mspe_mecor[static_cast<size_t>(i)] += o.mecor_sq[static_cast<size_t>(i)];
    }
  }
  result.direct_mspe = direct_sse / (static_cast<double>(reps) * n);
  for (auto& v : result.per_area_mspe_direct) v /= reps;
  if (mecor_ok > 0) {
    for (auto& v : result.per_area_mspe_mecor) v /= mecor_ok;
  }

  const int failures = std::max({result.mecor.failures, result.yl.failures, result.fh.failures});
  if (100 * failures > reps) {
    throw SimulationUnstable("more than 1% of replicates failed to fit");
  }
  return result;
}

}  // namespace mecor
