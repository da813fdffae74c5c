#include "oumix/dynamics.hpp"
#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace oumix;
using Catch::Approx;

namespace {

SimConfig noisy_config(int m = 32) {
  SimConfig cfg;
  cfg.grid = m;
  cfg.kappa = 0.05;
  cfg.nu = 1.0;
  cfg.alpha = 100.0;
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, m);
  cfg.dt = 2e-4;
  cfg.horizon = 0.1;
  cfg.seed = 11;
  return cfg;
}

SimConfig quiet_config(int m = 32) {
  SimConfig cfg;
  cfg.grid = m;
  cfg.kappa = 0.01;
  cfg.nu = 0.0;
  cfg.dt = 1e-3;
  cfg.horizon = 0.1;
  return cfg;
}

double heat_factor(double visc, double t) {
  return std::exp(-4.0 * std::numbers::pi * std::numbers::pi * visc * t);
}

} // namespace

TEST_CASE("scheme and initial data names round-trip") {
  for (Scheme s : {Scheme::if_rk2, Scheme::if_euler}) {
    CHECK(parse_scheme(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_scheme("RK4"), ConfigError);
  for (InitialData d : {InitialData::single_mode, InitialData::random12, InitialData::bar}) {
    CHECK(parse_initial_data(to_string(d)) == d);
  }
  CHECK_THROWS_AS(parse_initial_data("blob"), ConfigError);
}

TEST_CASE("random-12 initial data") {
  const auto a = make_initial(InitialData::random12, 32);
  const auto b = make_initial(InitialData::random12, 64);
  CHECK(a.l2_norm() == Approx(1.0).epsilon(1e-14));
  int count = 0;
  for (int k1 = -4; k1 <= 4; ++k1) {
    for (int k2 = -4; k2 <= 4; ++k2) {
      const Wavevector k{k1, k2};
      if (in_upper_half(k) && a.at(k) != cplx{}) {
        ++count;
        CHECK(a.at(k) == b.at(k));
      }
    }
  }
  CHECK(count == 12);
  CHECK(a.mean() == cplx{});
  CHECK_THROWS_AS(make_initial(InitialData::random12, 8), ConfigError);
}

TEST_CASE("config validation") {
  SimConfig cfg = noisy_config();
  CHECK_NOTHROW(cfg.validate());

  SECTION("dt * alpha = 1") {
    cfg.dt = 0.01;
    cfg.horizon = 1.0;
    try {
      cfg.validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError &e) {
      CHECK(std::string(e.what()).find("dt must satisfy dt <= 0.1/alpha") != std::string::npos);
    }
  }
  SECTION("dt * alpha = 0.1 is allowed") {
    cfg.dt = 1e-3;
    CHECK_NOTHROW(cfg.validate());
  }
  SECTION("kappa") {
    cfg.kappa = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("nu") {
    cfg.nu = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("non-integral T/dt") {
    cfg.horizon = 0.10003;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("theta on another grid") {
    cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 64);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("noise without theta") {
    cfg.theta = ThetaSpec{};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("no noise ignores alpha") {
    cfg.nu = 0.0;
    cfg.alpha = 0.5;
    cfg.dt = 0.01;
    cfg.horizon = 1.0;
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("step bounds") {
  SimConfig cfg = noisy_config(64);
  cfg.nu = 4.0;
  cfg.alpha = 200.0;
  const double sigma3 = 3.0 * std::sqrt(2.0 * 4.0 * 200.0);
  CHECK(cfl_dt_bound(cfg, 0.0) == Approx(1.0 / (64 * sigma3)));
  CHECK(cfl_dt_bound(cfg, 1.0, 0.5) == Approx(0.5 / (64 * (sigma3 + 1.0))));
  cfg.nu = 0.0;
  CHECK(std::isinf(cfl_dt_bound(cfg, 0.0)));
  CHECK(fit_step(3e-3, 0.01) == Approx(0.01 / 4));
  CHECK(fit_step(2.5e-3, 0.01) == Approx(2.5e-3));
  CHECK(fit_step(1.0, 0.01) == Approx(0.01));
}

TEST_CASE("single mode, nu = 0: one step is the heat solution") {
  for (Scheme s : {Scheme::if_rk2, Scheme::if_euler}) {
    SimConfig cfg = quiet_config(64);
    cfg.scheme = s;
    const auto xi0 = make_initial(InitialData::single_mode, 64);
    const PathState p = step_spde(make_path(xi0, cfg), cfg);
    SpectralField exact = xi0;
    exact *= heat_factor(cfg.kappa, cfg.dt);
    CHECK(testing::max_coeff_diff(p.xi, exact) < 1e-15);
    CHECK(p.step == 1);
    CHECK(p.t == cfg.dt);
  }
}

TEST_CASE("zero data stays zero under noise") {
  SimConfig cfg = noisy_config();
  PathState p = make_path(SpectralField(cfg.grid), cfg);
  for (int i = 0; i < 20; ++i) {
    p = step_spde(std::move(p), cfg);
  }
  CHECK(p.xi.max_abs_coeff() == 0.0);
}

TEST_CASE("limit equation: exact single-mode decay") {
  SimConfig cfg = quiet_config(64);
  cfg.nu = 1.0;
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 64);
  cfg.horizon = 0.05;
  RunOptions opts;
  opts.record_every = 5;
  const auto traj = run_limit(make_initial(InitialData::single_mode, 64), cfg, opts);
  REQUIRE(traj.size() == 11);
  const double l20 = traj[0].l2_norm();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = static_cast<double>(i) * 5 * cfg.dt;
    CHECK(traj[i].l2_norm() == Approx(l20 * heat_factor(1.01, t)).epsilon(1e-13));
  }
}

TEST_CASE("limit equation: multi-mode energy bound") {
  SimConfig cfg = quiet_config(32);
  cfg.nu = 0.2;
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 32);
  cfg.horizon = 0.2;
  RunOptions opts;
  opts.record_every = 10;
  const auto xi0 = make_initial(InitialData::random12, 32);
  const auto traj = run_limit(xi0, cfg, opts);
  const double lambda1 = 8.0 * std::numbers::pi * std::numbers::pi * (cfg.kappa + cfg.nu);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = static_cast<double>(i) * 10 * cfg.dt;
    CHECK(traj[i].l2_norm_squared() <= std::exp(-lambda1 * t) * xi0.l2_norm_squared() * (1 + 1e-12));
  }
}

TEST_CASE("limit stride") {
  SimConfig cfg = quiet_config(32);
  cfg.nu = 0.5;
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 32);
  const auto xi0 = make_initial(InitialData::random12, 32);
  RunOptions fine;
  fine.record_every = 10;
  RunOptions coarse = fine;
  coarse.limit_stride = 5;
  const auto a = run_limit(xi0, cfg, fine);
  const auto b = run_limit(xi0, cfg, coarse);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(testing::max_coeff_diff(a[i], b[i]) < 1e-4 * xi0.max_abs_coeff());
  }
  coarse.limit_stride = 3;
  CHECK_THROWS_AS(run_limit(xi0, cfg, coarse), ConfigError);
}

TEST_CASE("SPDE L2 norm is nonincreasing") {
  SimConfig cfg = noisy_config();
  cfg.nu = 2.0;
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 4, 32);
  RunOptions opts;
  for (Scheme s : {Scheme::if_rk2, Scheme::if_euler}) {
    cfg.scheme = s;
    if (s == Scheme::if_euler) {
      cfg.dt = 5e-5; // forward Euler transport needs the diffusion to win per step
    }
    const auto r = run_coupled(make_initial(InitialData::random12, 32), cfg, opts);
    INFO(to_string(s));
    CHECK(r.max_step_growth <= 1e-10);
    CHECK(r.max_step_growth > -1.0);
    CHECK(r.cfl_warnings == 0);
    CHECK(r.max_courant > 0.0);
  }
}

TEST_CASE("coupled run with nu = 0 has zero distance") {
  SimConfig cfg = quiet_config(32);
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 32);
  RunOptions opts;
  opts.sobolev = {1.0, 2.0};
  const auto r = run_coupled(make_initial(InitialData::random12, 32), cfg, opts);
  REQUIRE(r.rows.size() == 11);
  for (const auto &row : r.rows) {
    CHECK(row.dist == std::vector<double>{0.0, 0.0});
    CHECK(row.l2 == row.l2_limit);
  }
  CHECK(r.sup_dist == std::vector<double>{0.0, 0.0});
}

TEST_CASE("coupled run records") {
  SimConfig cfg = noisy_config();
  RunOptions opts;
  opts.record_every = 100;
  opts.keep_snapshots = true;
  const auto xi0 = make_initial(InitialData::random12, 32);
  const auto r = run_coupled(xi0, cfg, opts);
  REQUIRE(r.rows.size() == 6);
  CHECK(r.rows.front().t == 0.0);
  CHECK(r.rows.front().dist[0] == 0.0);
  CHECK(r.rows.back().t == Approx(cfg.horizon));
  CHECK(r.snapshots.size() == r.rows.size());
  CHECK(r.rows.back().l2 == Approx(r.snapshots.back().l2_norm()));
  CHECK(r.sup_dist[0] > 0.0);
  double sup = 0.0;
  for (const auto &row : r.rows) {
    sup = std::max(sup, row.dist[0]);
  }
  CHECK(r.sup_dist[0] == sup);

  // a cached limit gives the same record
  const auto limit = run_limit(xi0, cfg, opts);
  const auto r2 = run_coupled(xi0, cfg, opts, &limit);
  CHECK(r2.sup_dist == r.sup_dist);
}

TEST_CASE("restarted runs") {
  SECTION("nu = 0: restarts coincide with the path") {
    SimConfig cfg = quiet_config(32);
    cfg.dt = 0.01;
    cfg.horizon = 2.0;
    const auto r = run_restarted(make_initial(InitialData::random12, 32), cfg, RunOptions{});
    REQUIRE(r.intervals.size() == 2);
    for (const auto &iv : r.intervals) {
      CHECK(iv.sup_dist == 0.0);
      CHECK(iv.ratio <= 1.0);
      CHECK(iv.ratio > 0.0);
    }
    CHECK(r.intervals[0].n == 0);
    CHECK(r.intervals[1].n == 1);
  }
  SECTION("noisy") {
    SimConfig cfg = noisy_config();
    cfg.dt = 1e-4;
    cfg.horizon = 2.0;
    RunOptions opts;
    opts.record_every = 100;
    opts.limit_stride = 10;
    const auto r = run_restarted(make_initial(InitialData::random12, 32), cfg, opts);
    REQUIRE(r.intervals.size() == 2);
    for (const auto &iv : r.intervals) {
      CHECK(iv.ratio <= 1.0);
      CHECK(iv.sup_dist > 0.0);
    }
    CHECK(r.max_step_growth <= 1e-10);
  }
  SECTION("horizon must be an integer") {
    SimConfig cfg = quiet_config(32);
    cfg.horizon = 1.5;
    CHECK_THROWS_AS(run_restarted(make_initial(InitialData::single_mode, 32), cfg, RunOptions{}),
                    ConfigError);
  }
}

TEST_CASE("global convergence order, deterministic Navier-Stokes") {
  // The single mode is exact for both schemes, so the order is measured on
  // the 12-mode datum against a fine reference.
  const auto xi0 = make_initial(InitialData::random12, 32);
  auto final_state = [&](Scheme s, double dt) {
    SimConfig cfg = quiet_config(32);
    cfg.scheme = s;
    cfg.dt = dt;
    cfg.horizon = 0.2;
    PathState p = make_path(xi0, cfg);
    Integrator integ(cfg.grid, cfg.kappa, dt, s, cfg.dealias);
    for (std::size_t i = 0; i < cfg.steps(); ++i) {
      integ.step(p.xi, nullptr, nullptr, 0.0);
    }
    return p.xi;
  };
  for (auto [s, order] : {std::pair{Scheme::if_euler, 1.0}, std::pair{Scheme::if_rk2, 2.0}}) {
    const auto ref = final_state(Scheme::if_rk2, 1e-3 / 32);
    std::vector<double> err;
    for (double dt : {4e-3, 2e-3, 1e-3}) {
      err.push_back((final_state(s, dt) - ref).l2_norm());
    }
    INFO(to_string(s));
    CHECK(std::log2(err[0] / err[1]) == Approx(order).margin(0.15));
    CHECK(std::log2(err[1] / err[2]) == Approx(order).margin(0.15));
  }
}

TEST_CASE("energy balance residual halves for IF-Euler on a shared noise path") {
  SimConfig cfg = noisy_config();
  cfg.scheme = Scheme::if_euler;
  cfg.horizon = 0.2;
  const auto xi0 = make_initial(InitialData::random12, 32);
  std::vector<double> res;
  for (int refine : {4, 2, 1}) {
    cfg.dt = 5e-5 * refine;
    RunOptions opts;
    opts.record_every = 50;
    opts.ou_refine = refine;
    res.push_back(energy_balance_residual(run_coupled(xi0, cfg, opts)));
  }
  CHECK(res[0] / res[1] == Approx(2.0).margin(0.25));
  CHECK(res[1] / res[2] == Approx(2.0).margin(0.25));
}

TEST_CASE("ou_refine shares the noise path") {
  SimConfig cfg = noisy_config();
  PathState a = make_path(make_initial(InitialData::single_mode, 32), cfg);
  PathState b = a;
  Integrator coarse(cfg.grid, cfg.kappa, 2 * cfg.dt, cfg.scheme, true);
  coarse.set_ou_refine(2);
  Integrator fine(cfg.grid, cfg.kappa, cfg.dt, cfg.scheme, true);
  for (int i = 0; i < 10; ++i) {
    coarse.step(a.xi, &a.ens, &cfg.theta, cfg.nu);
    fine.step(b.xi, &b.ens, &cfg.theta, cfg.nu);
    fine.step(b.xi, &b.ens, &cfg.theta, cfg.nu);
  }
  for (std::size_t i = 0; i < a.ens.modes().size(); ++i) {
    CHECK(a.ens.cos_state(i) == b.ens.cos_state(i));
    CHECK(a.ens.sin_state(i) == b.ens.sin_state(i));
  }
  CHECK_THROWS_AS(coarse.set_ou_refine(0), std::invalid_argument);
}

TEST_CASE("runs are bit-reproducible and replicas differ") {
  SimConfig cfg = noisy_config();
  RunOptions opts;
  opts.keep_snapshots = true;
  const auto xi0 = make_initial(InitialData::random12, 32);
  const auto a = run_coupled(xi0, cfg, opts);
  const auto b = run_coupled(xi0, cfg, opts);
  CHECK(testing::max_coeff_diff(a.snapshots.back(), b.snapshots.back()) == 0.0);
  CHECK(a.sup_dist == b.sup_dist);
  opts.replica = 1;
  const auto c = run_coupled(xi0, cfg, opts);
  CHECK(testing::max_coeff_diff(a.snapshots.back(), c.snapshots.back()) > 0.0);
}

TEST_CASE("non-finite state aborts with the step index") {
  SimConfig cfg = noisy_config();
  SECTION("NaN input") {
    SpectralField xi(cfg.grid);
    xi.set({1, 0}, cplx(std::numeric_limits<double>::quiet_NaN(), 0.0));
    try {
      step_spde(make_path(xi, cfg), cfg);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError &e) {
      CHECK(e.step() == 1);
    }
  }
  SECTION("blow-up from an unstable step") {
    cfg.grid = 16;
    cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 16);
    cfg.nu = 50.0;
    cfg.alpha = 100.0;
    cfg.dt = 1e-3;
    cfg.horizon = 2.0;
    cfg.scheme = Scheme::if_euler;
    cfg.kappa = 1e-4;
    RunOptions opts;
    opts.record_every = 1000;
    try {
      run_coupled(make_initial(InitialData::random12, 16), cfg, opts);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError &e) {
      CHECK(e.step() > 1);
      CHECK(e.step() <= cfg.steps());
    }
  }
}

TEST_CASE("CFL violations are counted") {
  SimConfig cfg = noisy_config(16);
  cfg.theta = make_theta(ThetaFamily::lowpass, 0.5, 2, 16);
  cfg.nu = 20.0;
  cfg.dt = 1e-3;
  cfg.horizon = 2e-3;
  RunOptions opts;
  opts.record_every = 1;
  const auto r = run_coupled(make_initial(InitialData::random12, 16), cfg, opts);
  CHECK(r.max_courant > 1.0);
  CHECK(r.cfl_warnings > 0);
}
