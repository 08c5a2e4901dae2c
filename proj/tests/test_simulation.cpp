#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mecor/simulation.hpp"

using namespace mecor;

TEST_CASE("error covariance blocks scale as (0.75 + 0.25 j)^2") {
  // j = 1 is the unit-scale block.
  const ErrorCov p1 = build_psi(1, 0.25, 0.75, 0.2);
  CHECK(p1.psi_uu(0, 0) == Catch::Approx(0.25).margin(1e-14));
  CHECK(p1.psi_ee == Catch::Approx(0.75).margin(1e-14));
  CHECK(p1.psi_ue(0) == Catch::Approx(0.2 * std::sqrt(0.25 * 0.75)).margin(1e-14));

  // j = 0: factor 0.75^2 = 0.5625.
  const ErrorCov p0 = build_psi(0, 0.25, 0.75, 0.2);
  CHECK(p0.psi_uu(0, 0) == Catch::Approx(0.5625 * 0.25).margin(1e-14));
  CHECK(p0.psi_ee == Catch::Approx(0.5625 * 0.75).margin(1e-14));

  // j = 3: factor 1.5^2 = 2.25.
  const ErrorCov p3 = build_psi(3, 0.75, 0.25, 0.8);
  CHECK(p3.psi_uu(0, 0) == Catch::Approx(2.25 * 0.75).margin(1e-14));
  CHECK(p3.psi_ee == Catch::Approx(2.25 * 0.25).margin(1e-14));
  CHECK(p3.psi_ue(0) == Catch::Approx(2.25 * 0.8 * std::sqrt(0.75 * 0.25)).margin(1e-12));
}

TEST_CASE("population draws have chi-squared(5) moments") {
  SimConfig cfg;
  cfg.n = 100000;
  cfg.seed = 99;
  const Eigen::VectorXd x = generate_population(cfg);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / (cfg.n - 1);
  CHECK(mean == Catch::Approx(5.0).margin(0.05));
  CHECK(var == Catch::Approx(10.0).margin(0.3));
  CHECK(x.minCoeff() > 0.0);
}

TEST_CASE("population is fixed across replicates but moves with the seed") {
  SimConfig cfg;
  cfg.n = 100;
  cfg.seed = 7;
  const Eigen::VectorXd a = generate_population(cfg);
  const Eigen::VectorXd b = generate_population(cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  cfg.seed = 8;
  const Eigen::VectorXd c = generate_population(cfg);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("replicates are deterministic in (seed, index) and differ across indices") {
  SimConfig cfg;
  cfg.n = 16;
  cfg.seed = 11;
  const Eigen::VectorXd x = generate_population(cfg);
  const Replicate r0a = generate_replicate(cfg, x, 0);
  const Replicate r0b = generate_replicate(cfg, x, 0);
  const Replicate r1 = generate_replicate(cfg, x, 1);
  for (int i = 0; i < cfg.n; ++i) {
    CHECK(r0a.dataset[i].y == r0b.dataset[i].y);
    CHECK(r0a.dataset[i].w(0) == r0b.dataset[i].w(0));
  }
  bool differs = false;
  for (int i = 0; i < cfg.n; ++i) differs = differs || r0a.dataset[i].y != r1.dataset[i].y;
  CHECK(differs);
}

TEST_CASE("unequal pattern assigns quarter blocks in order") {
  SimConfig cfg;
  cfg.n = 16;
  cfg.seed = 3;
  const Replicate r = generate_replicate(cfg, generate_population(cfg), 0);
  for (int i = 0; i < 16; ++i) {
    const int j = i / 4;
    const double factor = (0.75 + 0.25 * j) * (0.75 + 0.25 * j);
    CHECK(r.dataset[i].psi.psi_ee == Catch::Approx(factor * cfg.b).margin(1e-12));
  }
}

TEST_CASE("equal pattern repeats the unit-scale block") {
  SimConfig cfg;
  cfg.n = 10;
  cfg.psi_pattern = PsiPattern::Equal;
  const Replicate r = generate_replicate(cfg, generate_population(cfg), 0);
  for (int i = 0; i < 10; ++i) {
    CHECK(r.dataset[i].psi.psi_ee == Catch::Approx(cfg.b).margin(1e-14));
    CHECK(r.dataset[i].psi.psi_uu(0, 0) == Catch::Approx(cfg.a).margin(1e-14));
  }
}

TEST_CASE("realized error moments match the target covariance") {
  SimConfig cfg;
  cfg.n = 40000;
  cfg.rho = 0.8;
  cfg.psi_pattern = PsiPattern::Equal;
  cfg.seed = 21;
  const Eigen::VectorXd x = generate_population(cfg);
  const Replicate r = generate_replicate(cfg, x, 0);

  double suu = 0.0, see = 0.0, sue = 0.0;
  for (int i = 0; i < cfg.n; ++i) {
    const double u = r.dataset[i].w(0) - r.truths[static_cast<size_t>(i)].x(0);
    const double e = r.dataset[i].y - r.truths[static_cast<size_t>(i)].theta;
    suu += u * u;
    see += e * e;
    sue += u * e;
  }
  suu /= cfg.n;
  see /= cfg.n;
  sue /= cfg.n;
  CHECK(suu == Catch::Approx(cfg.a).epsilon(0.03));
  CHECK(see == Catch::Approx(cfg.b).epsilon(0.03));
  CHECK(sue / std::sqrt(suu * see) == Catch::Approx(0.8).margin(0.01));
}

TEST_CASE("heavy-tailed draws are standardized to the same covariance") {
  SimConfig cfg;
  cfg.n = 40000;
  cfg.rho = 0.5;
  cfg.dist = SimDist::T5;
  cfg.psi_pattern = PsiPattern::Equal;
  cfg.seed = 33;
  const Eigen::VectorXd x = generate_population(cfg);
  const Replicate r = generate_replicate(cfg, x, 0);

  double suu = 0.0, see = 0.0, sue = 0.0, kurt = 0.0;
  for (int i = 0; i < cfg.n; ++i) {
    const double u = r.dataset[i].w(0) - r.truths[static_cast<size_t>(i)].x(0);
    const double e = r.dataset[i].y - r.truths[static_cast<size_t>(i)].theta;
    suu += u * u;
    see += e * e;
    sue += u * e;
    kurt += e * e * e * e;
  }
  suu /= cfg.n;
  see /= cfg.n;
  sue /= cfg.n;
  kurt = kurt / cfg.n / (see * see);
  // Variances still match psi; tails are heavier than normal.
  CHECK(suu == Catch::Approx(cfg.a).epsilon(0.08));
  CHECK(see == Catch::Approx(cfg.b).epsilon(0.08));
  CHECK(sue / std::sqrt(suu * see) == Catch::Approx(0.5).margin(0.03));
  CHECK(kurt > 4.0);
}

TEST_CASE("latent truths are consistent with the observations") {
  SimConfig cfg;
  cfg.n = 20;
  const Replicate r = generate_replicate(cfg, generate_population(cfg), 2);
  for (int i = 0; i < cfg.n; ++i) {
    const auto& t = r.truths[static_cast<size_t>(i)];
    CHECK(t.theta == Catch::Approx(1.0 + 2.0 * t.x(0) + t.b).margin(1e-12));
  }
}

TEST_CASE("simulation summaries are identical for any thread count") {
  SimConfig cfg;
  cfg.n = 40;
  cfg.mc_reps = 60;
  cfg.seed = 17;
  SimMethods methods;
  const SimResult one = run_simulation(cfg, methods, 1);
  const SimResult four = run_simulation(cfg, methods, 4);
  CHECK((one.mecor.mc_mean - four.mecor.mc_mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((one.mecor.mc_sd - four.mecor.mc_sd).cwiseAbs().maxCoeff() == 0.0);
  CHECK(one.mecor.mc_mspe == four.mecor.mc_mspe);
  CHECK(one.yl.mc_mspe == four.yl.mc_mspe);
  CHECK(one.fh.mc_mspe == four.fh.mc_mspe);
  CHECK(one.direct_mspe == four.direct_mspe);
}

TEST_CASE("small study lands near the generating parameters") {
  SimConfig cfg;
  cfg.n = 100;
  cfg.mc_reps = 200;
  cfg.seed = 5;
  const SimResult r = run_simulation(cfg, SimMethods{}, 1);
  CHECK(r.replicates == 200);
  CHECK(r.mecor.failures == 0);
  CHECK(r.mecor.mc_mean(0) == Catch::Approx(1.0).margin(0.1));
  CHECK(r.mecor.mc_mean(1) == Catch::Approx(2.0).margin(0.02));
  CHECK(r.mecor.mc_mean(2) == Catch::Approx(0.36).margin(0.06));
  CHECK(r.direct_mspe > r.mecor.mc_mspe);
  CHECK(static_cast<int>(r.per_area_mspe_direct.size()) == cfg.n);
}

TEST_CASE("per-replicate jackknife summaries populate the estimated MSPE") {
  SimConfig cfg;
  cfg.n = 40;
  cfg.mc_reps = 20;
  cfg.seed = 29;
  SimMethods methods;
  methods.mecor_mspe = true;
  const SimResult r = run_simulation(cfg, methods, 1);
  CHECK(std::isfinite(r.mecor.mc_mean_est_mspe));
  CHECK(r.mecor.mc_mean_est_mspe > 0.0);
  // FH's analytic estimate is always present.
  CHECK(std::isfinite(r.fh.mc_mean_est_mspe));
}

TEST_CASE("bad configurations are rejected") {
  SimConfig cfg;
  cfg.n = 10;  // not divisible by 4 with unequal blocks
  CHECK_THROWS_AS(cfg.validate(), BadInputFile);
  cfg.psi_pattern = PsiPattern::Equal;
  CHECK_NOTHROW(cfg.validate());
  cfg.rho = 1.0;
  CHECK_THROWS_AS(cfg.validate(), BadInputFile);
}
