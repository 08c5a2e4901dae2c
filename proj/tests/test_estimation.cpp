#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mecor/estimation.hpp"

using namespace mecor;

namespace {

AreaObservation make_area(const std::string& id, double y, double w, double puu, double pue,
                          double pee) {
  AreaObservation a;
  a.area_id = id;
  a.y = y;
  a.w = Eigen::VectorXd::Constant(1, w);
  a.psi.psi_uu = Eigen::MatrixXd::Constant(1, 1, puu);
  a.psi.psi_ue = Eigen::VectorXd::Constant(1, pue);
  a.psi.psi_ee = pee;
  return a;
}

Dataset random_dataset(int n, unsigned seed, double pue_scale = 0.3) {
  std::mt19937 eng(seed);
  std::uniform_real_distribution<double> unif(0.2, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<AreaObservation> obs;
  for (int i = 0; i < n; ++i) {
    const double puu = unif(eng);
    const double pee = unif(eng);
    const double pue = pue_scale * std::sqrt(puu * pee);
    obs.push_back(make_area("a" + std::to_string(100 + i), normal(eng) * 3.0,
                            normal(eng) * 2.0, puu, pue, pee));
  }
  return validate_dataset(std::move(obs));
}

}  // namespace

TEST_CASE("moment statistics match hand-computed sums") {
  // y = w = (1, 2, 3), zero error covariance:
  //   zeta1 = mean(y w) = 14/3, zeta2 = zeta3 = 2, zeta4 = mean(w^2) = 14/3
  const Dataset ds = validate_dataset({make_area("a1", 1.0, 1.0, 0.0, 0.0, 0.0),
                                       make_area("a2", 2.0, 2.0, 0.0, 0.0, 0.0),
                                       make_area("a3", 3.0, 3.0, 0.0, 0.0, 0.0)});
  const MomentStats m = compute_moments(ds);
  CHECK(m.zeta1(0) == Catch::Approx(14.0 / 3.0).margin(1e-14));
  CHECK(m.zeta2 == Catch::Approx(2.0).margin(1e-14));
  CHECK(m.zeta3(0) == Catch::Approx(2.0).margin(1e-14));
  CHECK(m.zeta4(0, 0) == Catch::Approx(14.0 / 3.0).margin(1e-14));
}

TEST_CASE("moment statistics subtract the error covariance corrections") {
  const Dataset ds = validate_dataset({make_area("a1", 1.0, 1.0, 0.5, 0.2, 1.0),
                                       make_area("a2", 2.0, 2.0, 0.3, 0.1, 1.0),
                                       make_area("a3", 3.0, 3.0, 0.1, 0.0, 1.0)});
  const MomentStats m = compute_moments(ds);
  CHECK(m.zeta1(0) == Catch::Approx(14.0 / 3.0 - 0.1).margin(1e-14));
  CHECK(m.zeta4(0, 0) == Catch::Approx(14.0 / 3.0 - 0.3).margin(1e-14));
}

TEST_CASE("moment statistics agree with brute-force loops on random data") {
  const Dataset ds = random_dataset(23, 911);
  const MomentStats m = compute_moments(ds);
  double z1 = 0.0, z2 = 0.0, z3 = 0.0, z4 = 0.0;
  for (const auto& a : ds) {
    z1 += a.y * a.w(0) - a.psi.psi_ue(0);
    z2 += a.y;
    z3 += a.w(0);
    z4 += a.w(0) * a.w(0) - a.psi.psi_uu(0, 0);
  }
  CHECK(m.zeta1(0) == Catch::Approx(z1 / 23).margin(1e-12));
  CHECK(m.zeta2 == Catch::Approx(z2 / 23).margin(1e-12));
  CHECK(m.zeta3(0) == Catch::Approx(z3 / 23).margin(1e-12));
  CHECK(m.zeta4(0, 0) == Catch::Approx(z4 / 23).margin(1e-12));
}

TEST_CASE("beta solve reduces to ordinary least squares without measurement error") {
  const Dataset ds = random_dataset(15, 4242, 0.0);
  std::vector<AreaObservation> zeroed(ds.areas());
  for (auto& a : zeroed) {
    a.psi.psi_uu.setZero();
    a.psi.psi_ue.setZero();
  }
  const Dataset clean = validate_dataset(std::move(zeroed));

  auto [b0, b1] = estimate_beta(compute_moments(clean));

  Eigen::MatrixXd x(clean.n(), 2);
  Eigen::VectorXd y(clean.n());
  for (int i = 0; i < clean.n(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = clean[i].w(0);
    y(i) = clean[i].y;
  }
  const Eigen::VectorXd ols = x.colPivHouseholderQr().solve(y);
  CHECK(b0 == Catch::Approx(ols(0)).margin(1e-10));
  CHECK(b1(0) == Catch::Approx(ols(1)).margin(1e-10));
}

TEST_CASE("measurement-error correction recovers the latent regression exactly") {
  // Construct data whose corrected moments equal the latent moments:
  // y = 1 + 2 x with x = (1, 2, 3, 4) and deterministic noise u, where each
  // psi_uu,i is the realized mean of 2 x u + u^2 and psi_ue,i the realized
  // mean of y u. The solve must then return (1, 2) exactly.
  const Eigen::Vector4d x(1.0, 2.0, 3.0, 4.0);
  const Eigen::Vector4d u(-0.5, 0.5, -0.5, 0.5);
  const Eigen::Vector4d y = (1.0 + 2.0 * x.array()).matrix();
  double mean_uu = 0.0, mean_ue = 0.0;
  for (int i = 0; i < 4; ++i) {
    mean_uu += 2.0 * x(i) * u(i) + u(i) * u(i);
    mean_ue += y(i) * u(i);
  }
  mean_uu /= 4.0;
  mean_ue /= 4.0;
  const double pee = 1.0 + mean_ue * mean_ue / mean_uu;  // keep each block PSD
  std::vector<AreaObservation> obs;
  for (int i = 0; i < 4; ++i) {
    obs.push_back(make_area("a" + std::to_string(i), y(i), x(i) + u(i), mean_uu, mean_ue, pee));
  }
  auto [b0, b1] = estimate_beta(compute_moments(validate_dataset(std::move(obs))));
  CHECK(b0 == Catch::Approx(1.0).margin(1e-10));
  CHECK(b1(0) == Catch::Approx(2.0).margin(1e-10));
}

TEST_CASE("singular moment systems are reported, not solved") {
  // Constant observed covariate with no measurement-error correction.
  std::vector<AreaObservation> obs;
  for (int i = 0; i < 5; ++i) {
    obs.push_back(make_area("a" + std::to_string(i), i, 1.0, 0.0, 0.0, 0.5));
  }
  CHECK_THROWS_AS(estimate_beta(compute_moments(validate_dataset(std::move(obs)))),
                  SingularMomentMatrix);
}

TEST_CASE("too few areas is rejected before any arithmetic") {
  const Dataset ds = validate_dataset({make_area("a1", 1.0, 1.0, 0.0, 0.0, 0.0),
                                       make_area("a2", 2.0, 2.0, 0.0, 0.0, 0.0)});
  CHECK_THROWS_AS(compute_moments(ds), TooFewAreas);
  CHECK_THROWS_AS(sigma2_b_yl(ds, 0.0, Eigen::VectorXd::Constant(1, 1.0)), TooFewAreas);
}

TEST_CASE("moment variance estimator matches a hand-expanded sum") {
  const Dataset ds = validate_dataset({make_area("a1", 1.0, 1.0, 0.5, 0.2, 1.0),
                                       make_area("a2", 3.0, 2.0, 0.3, 0.1, 0.8),
                                       make_area("a3", 2.0, 3.0, 0.1, 0.0, 0.6)});
  const double b0 = 0.5;
  const Eigen::VectorXd b1 = Eigen::VectorXd::Constant(1, 1.0);
  double acc = 0.0;
  for (const auto& a : ds) {
    const double v = a.y - b0 - a.w(0);
    acc += v * v - a.psi.psi_ee - a.psi.psi_uu(0, 0) + 2.0 * a.psi.psi_ue(0);
  }
  // divisor n - p - 1 = 1
  CHECK(sigma2_b_yl(ds, b0, b1) == Catch::Approx(acc).margin(1e-12));
}

TEST_CASE("profile log likelihood equals a product of normal densities") {
  const Dataset ds = random_dataset(9, 77);
  const double b0 = 0.3;
  const Eigen::VectorXd b1 = Eigen::VectorXd::Constant(1, 1.4);
  const double s2b = 0.7;

  double expected = 0.0;
  for (const auto& a : ds) {
    const double v = a.y - b0 - b1(0) * a.w(0);
    const double delta = a.psi.psi_ee + b1(0) * b1(0) * a.psi.psi_uu(0, 0) -
                         2.0 * b1(0) * a.psi.psi_ue(0);
    const double total = s2b + delta;
    expected += -0.5 * std::log(2.0 * M_PI * total) - 0.5 * v * v / total;
  }
  CHECK(profile_loglik(s2b, ds, b0, b1) == Catch::Approx(expected).margin(1e-10));
}

TEST_CASE("profile log likelihood rejects non-positive total variance") {
  const Dataset ds = validate_dataset({make_area("a1", 1.0, 1.0, 0.0, 0.0, 0.0)});
  CHECK_THROWS_AS(profile_loglik(0.0, ds, 0.0, Eigen::VectorXd::Constant(1, 0.0)),
                  NonPositiveTotalVariance);
}

TEST_CASE("homoscedastic variance estimate matches the closed form") {
  // Equal sigma2_delta = d across areas: the profile maximum over [0, U]
  // is max(0, mean(v^2) - d).
  std::mt19937 eng(314);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = 0.4;
  std::vector<AreaObservation> obs;
  for (int i = 0; i < 40; ++i) {
    obs.push_back(make_area("a" + std::to_string(100 + i), normal(eng), 0.0, 0.0, 0.0, d));
  }
  const Dataset ds = validate_dataset(std::move(obs));
  const double b0 = 0.0;
  const Eigen::VectorXd b1 = Eigen::VectorXd::Constant(1, 0.0);

  double mean_v2 = 0.0;
  for (const auto& a : ds) mean_v2 += a.y * a.y;
  mean_v2 /= ds.n();

  const double expected = std::max(0.0, mean_v2 - d);
  CHECK(estimate_sigma2_b_ml(ds, b0, b1) == Catch::Approx(expected).margin(1e-8));
}

TEST_CASE("homoscedastic closed form hits the zero boundary") {
  // Small residuals relative to d force the truncated estimate to 0.
  const double d = 5.0;
  std::vector<AreaObservation> obs;
  for (int i = 0; i < 10; ++i) {
    obs.push_back(make_area("a" + std::to_string(i), 0.01 * i, 0.0, 0.0, 0.0, d));
  }
  const Dataset ds = validate_dataset(std::move(obs));
  CHECK(estimate_sigma2_b_ml(ds, 0.0, Eigen::VectorXd::Constant(1, 0.0)) == 0.0);
}

TEST_CASE("noiseless data yields an exact fit") {
  std::vector<AreaObservation> obs;
  for (int i = 0; i < 6; ++i) {
    const double x = 1.0 + i;
    obs.push_back(make_area("a" + std::to_string(i), 1.0 + 2.0 * x, x, 0.0, 0.0, 0.0));
  }
  const FitResult fit = fit_mecor(validate_dataset(std::move(obs)));
  CHECK(fit.params.beta0 == Catch::Approx(1.0).margin(1e-8));
  CHECK(fit.params.beta1(0) == Catch::Approx(2.0).margin(1e-8));
  CHECK(fit.params.sigma2_b == 0.0);
}

TEST_CASE("fit is invariant to area ordering") {
  const Dataset ds = random_dataset(12, 555);
  std::vector<AreaObservation> rev(ds.areas());
  std::reverse(rev.begin(), rev.end());
  const FitResult a = fit_mecor(ds);
  const FitResult b = fit_mecor(validate_dataset(std::move(rev)));
  CHECK(a.params.beta0 == Catch::Approx(b.params.beta0).margin(1e-12));
  CHECK(a.params.beta1(0) == Catch::Approx(b.params.beta1(0)).margin(1e-12));
  CHECK(a.params.sigma2_b == Catch::Approx(b.params.sigma2_b).margin(1e-9));
}

TEST_CASE("fit is equivariant under response rescaling") {
  // y -> c y maps (beta0, beta1, sigma2_b) to (c beta0, c beta1, c^2 sigma2_b)
  // when psi_ee -> c^2 psi_ee and psi_ue -> c psi_ue.
  const double c = 3.0;
  const Dataset ds = random_dataset(25, 808);
  std::vector<AreaObservation> scaled(ds.areas());
  for (auto& a : scaled) {
    a.y *= c;
    a.psi.psi_ue *= c;
    a.psi.psi_ee *= c * c;
  }
  const FitResult base = fit_mecor(ds);
  const FitResult got = fit_mecor(validate_dataset(std::move(scaled)));
  CHECK(got.params.beta0 == Catch::Approx(c * base.params.beta0).margin(1e-8));
  CHECK(got.params.beta1(0) == Catch::Approx(c * base.params.beta1(0)).margin(1e-8));
  CHECK(got.params.sigma2_b == Catch::Approx(c * c * base.params.sigma2_b).margin(1e-6));
}

TEST_CASE("fit is equivariant under covariate rescaling") {
  // w -> w / c maps beta1 to c beta1 and leaves beta0, sigma2_b unchanged
  // when psi_uu -> psi_uu / c^2 and psi_ue -> psi_ue / c.
  const double c = 4.0;
  const Dataset ds = random_dataset(25, 808);
  std::vector<AreaObservation> scaled(ds.areas());
  for (auto& a : scaled) {
    a.w /= c;
    a.psi.psi_uu /= c * c;
    a.psi.psi_ue /= c;
  }
  const FitResult base = fit_mecor(ds);
  const FitResult got = fit_mecor(validate_dataset(std::move(scaled)));
  CHECK(got.params.beta0 == Catch::Approx(base.params.beta0).margin(1e-8));
  CHECK(got.params.beta1(0) == Catch::Approx(c * base.params.beta1(0)).margin(1e-8));
  CHECK(got.params.sigma2_b == Catch::Approx(base.params.sigma2_b).margin(1e-7));
}

TEST_CASE("fit diagnostics are populated") {
  const FitResult fit = fit_mecor(random_dataset(10, 9));
  CHECK(fit.n_areas == 10);
  CHECK(fit.diagnostics.count("moment_condition") == 1);
  CHECK(fit.diagnostics.count("delta_clamped") == 1);
  CHECK(fit.diagnostics.count("optimizer_iterations") == 1);
  CHECK(fit.diagnostics.at("moment_condition") >= 1.0);
}
