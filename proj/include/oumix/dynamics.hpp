#pragma once

// Time integration of the transport-noise vorticity equation
//     d_t xi + (u + b) . grad xi = kappa Lap xi,     u = BiotSavart(xi),
// and of the deterministic equation with enhanced viscosity
//     d_t xi + u . grad xi = (kappa + nu) Lap xi.
//
// Diffusion is integrated exactly by the factor e^{-4 pi^2 visc |k|^2 h};
// transport is explicit (midpoint RK2 or forward Euler). The OU states are
// advanced exactly in two half steps per step, so b is sampled at t, t + dt/2
// and t + dt regardless of the scheme.

#include "oumix/errors.hpp"
#include "oumix/noise.hpp"
#include "oumix/rng.hpp"
#include "oumix/spectral.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace oumix {

enum class Scheme { if_rk2, if_euler };

inline std::string_view to_string(Scheme s) {
  return s == Scheme::if_rk2 ? "IF-RK2" : "IF-Euler";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "IF-RK2") {
    return Scheme::if_rk2;
  }
  if (name == "IF-Euler") {
    return Scheme::if_euler;
  }
  throw ConfigError("unknown scheme '" + std::string(name) + "' (expected IF-RK2 or IF-Euler)");
}

struct SimConfig {
  double kappa = 0.01;
  double nu = 0.0;
  double alpha = 100.0;
  ThetaSpec theta;
  int grid = 64;
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::if_rk2;
  bool dealias = true;

  bool has_noise() const { return nu > 0.0; }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

  void validate() const {
    if (!valid_grid_size(grid)) {
      throw ConfigError("grid must be even, >= 4 and 7-smooth, got " + std::to_string(grid));
    }
    if (!(kappa > 0.0) || !std::isfinite(kappa)) {
      throw ConfigError("kappa must be > 0");
    }
    if (!(nu >= 0.0) || !std::isfinite(nu)) {
      throw ConfigError("nu must be >= 0");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw ConfigError("dt must be > 0");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
      throw ConfigError("T must be > 0");
    }
    const double n = horizon / dt;
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
      throw ConfigError("T/dt must be an integer, got " + std::to_string(n));
    }
    if (has_noise()) {
      if (!(alpha > 1.0) || !std::isfinite(alpha)) {
        throw ConfigError("alpha must be > 1");
      }
      if (dt * alpha > 0.1 * (1.0 + 1e-12)) {
        throw ConfigError("dt must satisfy dt <= 0.1/alpha (dt*alpha = " +
                          std::to_string(dt * alpha) + ")");
      }
      if (theta.support().empty()) {
        throw ConfigError("noise enabled but theta is empty");
      }
    }
    if (!theta.support().empty() && theta.grid_size() != grid) {
      throw ConfigError("theta was built for grid " + std::to_string(theta.grid_size()) +
                        ", simulation grid is " + std::to_string(grid));
    }
  }
};

/// Nominal step bound max|u + b| dt M <= courant, with |b| estimated as three
/// standard deviations of its one-point magnitude sqrt(2 nu alpha).
inline double cfl_dt_bound(const SimConfig &cfg, double fluid_speed, double courant = 1.0) {
  const double noise = cfg.has_noise() ? 3.0 * std::sqrt(2.0 * cfg.nu * cfg.alpha) : 0.0;
  const double speed = fluid_speed + noise;
  if (speed <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return courant / (cfg.grid * speed);
}

/// Largest dt' <= dt_max such that period / dt' is an integer.
inline double fit_step(double dt_max, double period) {
  const double n = std::ceil(period / dt_max * (1.0 - 1e-12));
  return period / std::max(1.0, n);
}

// ---------------------------------------------------------------------------
// initial data

enum class InitialData { single_mode, random12, bar };

inline std::string_view to_string(InitialData d) {
  switch (d) {
  case InitialData::single_mode:
    return "single-mode";
  case InitialData::random12:
    return "random-12";
  case InitialData::bar:
    return "bar";
  }
  return "?";
}

inline InitialData parse_initial_data(std::string_view name) {
  if (name == "single-mode") {
    return InitialData::single_mode;
  }
  if (name == "random-12") {
    return InitialData::random12;
  }
  if (name == "bar") {
    return InitialData::bar;
  }
  throw ConfigError("unknown initial data '" + std::string(name) +
                    "' (expected single-mode, random-12 or bar)");
}

/// Seed of the random-12 preset.
inline constexpr std::uint64_t random12_seed = 20240611;

/// single-mode: cos(2 pi x1).
/// bar:         cos(2 pi x1) + cos(2 pi x2).
/// random-12:   12 distinct half-lattice modes with 1 <= max(|k1|,|k2|) <= 4,
///              complex Gaussian amplitudes from mt19937_64(random12_seed),
///              rescaled to unit L2 norm. Identical on every grid M >= 16.
inline SpectralField make_initial(InitialData kind, int m) {
  SpectralField f(m);
  switch (kind) {
  case InitialData::single_mode:
    f.set({1, 0}, 0.5);
    break;
  case InitialData::bar:
    f.set({1, 0}, 0.5);
    f.set({0, 1}, 0.5);
    break;
  case InitialData::random12: {
    if (m < 16) {
      throw ConfigError("random-12 initial data needs grid >= 16");
    }
    std::mt19937_64 gen(random12_seed);
    std::uniform_int_distribution<int> pick(-4, 4);
    std::normal_distribution<double> amp;
    int placed = 0;
    while (placed < 12) {
      const Wavevector k{pick(gen), pick(gen)};
      if (!in_upper_half(k) || f.at(k) != cplx{}) {
        continue;
      }
      const double re = amp(gen);
      const double im = amp(gen);
      f.set(k, {re, im});
      ++placed;
    }
    f *= 1.0 / f.l2_norm();
    break;
  }
  }
  return f;
}

// ---------------------------------------------------------------------------
// stepping

namespace detail {

/// Sets FTZ/DAZ for the current thread while alive. Decaying high modes would
/// otherwise spend most of the run in denormal arithmetic.
class FlushDenormals {
public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

private:
  unsigned saved_;
#endif
};

} // namespace detail

struct StepInfo {
  double max_speed = 0.0; // max |u + b| over the stages
};

/// b's coefficients at the half-lattice modes of theta, for Advector.
inline void noise_modes(const ThetaSpec &theta, const OUEnsemble &ens, double nu,
                        std::vector<ModeVelocity> &out) {
  const auto half = theta.half_support();
  if (half.size() != ens.modes().size()) {
    throw std::invalid_argument("noise_modes: OU modes do not match the theta support");
  }
  out.clear();
  const double amp = std::sqrt(2.0 * nu);
  for (std::size_t i = 0; i < half.size(); ++i) {
    const Wavevector k = half[i].k;
    const cplx c = (amp * half[i].theta / k.norm()) * cplx(ens.cos_state(i), -ens.sin_state(i));
    out.push_back({k, static_cast<double>(k.k2) * c, static_cast<double>(-k.k1) * c});
  }
}

/// Integrating-factor stepper for one viscosity and step size. Holds scratch
/// buffers, so one instance per thread.
class Integrator {
public:
  Integrator(int m, double viscosity, double dt, Scheme scheme, bool dealias)
      : dt_(dt), scheme_(scheme), adv_(m, dealias), n0_(m), mid_(m), n1_(m) {
    full_.resize(n0_.raw_data().size());
    half_.resize(full_.size());
    std::size_t i = 0;
    n0_.for_each([&](Wavevector k, double, cplx &) {
      const double rate = two_pi * two_pi * viscosity * k.norm_squared();
      full_[i] = std::exp(-rate * dt);
      half_[i] = std::exp(-rate * 0.5 * dt);
      ++i;
    });
  }

  double dt() const { return dt_; }

  /// Each OU half step is taken as n exact sub-advances. Same law for any n;
  /// runs at dt and dt/n then see one noise path at their common times.
  void set_ou_refine(int n) {
    if (n < 1) {
      throw std::invalid_argument("ou_refine must be >= 1");
    }
    ou_refine_ = n;
  }

  /// Advances xi by one step. With noise, `ens` is advanced by dt as well and
  /// b is rebuilt from it at every stage.
  StepInfo step(SpectralField &xi, OUEnsemble *ens, const ThetaSpec *theta, double nu) {
    StepInfo info;
    const bool noisy = ens != nullptr && theta != nullptr && nu > 0.0;
    auto rhs = [&](const SpectralField &x, SpectralField &n) {
      if (noisy) {
        noise_modes(*theta, *ens, nu, modes_);
      } else {
        modes_.clear();
      }
      info.max_speed = std::max(info.max_speed, adv_.apply(x, modes_, n));
      n *= -1.0;
    };
    auto advance_noise = [&] {
      if (ens != nullptr) {
        for (int i = 0; i < ou_refine_; ++i) {
          ens->step(0.5 * dt_ / ou_refine_);
        }
      }
    };

    rhs(xi, n0_);
    if (scheme_ == Scheme::if_euler) {
      xi.add_scaled(dt_, n0_);
      scale(xi, full_);
      advance_noise();
      advance_noise();
      return info;
    }
    mid_ = xi;
    mid_.add_scaled(0.5 * dt_, n0_);
    scale(mid_, half_);
    advance_noise();
    rhs(mid_, n1_);
    scale(n1_, half_);
    scale(xi, full_);
    xi.add_scaled(dt_, n1_);
    advance_noise();
    return info;
  }

private:
  static void scale(SpectralField &f, const std::vector<double> &factor) {
    auto c = f.raw_data();
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i] *= factor[i];
    }
  }

  double dt_;
  Scheme scheme_;
  int ou_refine_ = 1;
  Advector adv_;
  SpectralField n0_, mid_, n1_;
  std::vector<ModeVelocity> modes_;
  std::vector<double> full_;
  std::vector<double> half_;
};

struct PathState {
  double t = 0.0;
  std::size_t step = 0;
  SpectralField xi;
  OUEnsemble ens;
};

/// Fresh path at t = 0 with stationary OU states drawn from the replica's seed.
inline PathState make_path(const SpectralField &xi0, const SimConfig &cfg,
                           std::uint64_t replica = 0) {
  xi0.check_same(SpectralField(cfg.grid));
  PathState s;
  s.xi = xi0;
  s.xi.truncate();
  s.xi.zero_mean();
  if (!cfg.theta.support().empty()) {
    s.ens = ou_init_stationary(cfg.theta.half_modes(), cfg.has_noise() ? cfg.alpha : 2.0,
                               rng::replica_seed(cfg.seed, replica));
  }
  return s;
}

inline void check_finite(const SpectralField &xi, std::size_t step) {
  if (!xi.all_finite()) {
    throw DivergenceError("non-finite vorticity", step);
  }
}

inline PathState step_spde(PathState s, const SimConfig &cfg) {
  detail::FlushDenormals ftz;
  Integrator integ(cfg.grid, cfg.kappa, cfg.dt, cfg.scheme, cfg.dealias);
  integ.step(s.xi, cfg.has_noise() ? &s.ens : nullptr, &cfg.theta, cfg.nu);
  s.t += cfg.dt;
  ++s.step;
  check_finite(s.xi, s.step);
  return s;
}

inline SpectralField step_limit(SpectralField xi, const SimConfig &cfg) {
  detail::FlushDenormals ftz;
  Integrator integ(cfg.grid, cfg.kappa + cfg.nu, cfg.dt, cfg.scheme, cfg.dealias);
  integ.step(xi, nullptr, nullptr, 0.0);
  check_finite(xi, 1);
  return xi;
}

// ---------------------------------------------------------------------------
// runs

struct RunOptions {
  std::size_t record_every = 10;
  std::vector<double> sobolev = {1.0}; // distances are measured in H^{-s}
  bool keep_snapshots = false;
  std::uint64_t replica = 0;
  int ou_refine = 1; // see Integrator::set_ou_refine
  // The limit equation advances with step limit_stride * dt. Must divide
  // record_every, the step count and, for restarted runs, 1/dt.
  std::size_t limit_stride = 1;
};

struct RecordRow {
  double t = 0.0;
  double l2 = 0.0;       // ||xi||
  double l2_limit = 0.0; // ||xi_bar||
  double h1 = 0.0;       // ||xi||_{H^1}
  std::vector<double> dist; // ||xi - xi_bar||_{H^{-s}} per configured s
};

struct IntervalRow {
  int n = 0;
  double sup_dist = 0.0; // sup over [n, n+1] of ||xi - xi_bar^n||_{H^-1}
  double ratio = 0.0;    // ||xi_{n+1}|| / ||xi_n||
};

struct RunRecord {
  SimConfig config;
  std::uint64_t replica = 0;
  std::vector<double> sobolev;
  std::vector<RecordRow> rows;
  std::vector<double> sup_dist; // per s, over recorded times
  std::vector<IntervalRow> intervals;
  std::vector<SpectralField> snapshots;
  double max_step_growth = -1.0; // max over steps of ||xi_{n+1}|| / ||xi_n|| - 1
  double max_courant = 0.0;      // max over steps of max|u + b| dt M
  std::size_t cfl_warnings = 0;  // steps with courant > 1
  double energy_change = 0.0;    // ||xi_T||^2 - ||xi_0||^2
  double energy_dissipated = 0.0; // trapezoid of 2 kappa ||grad xi||^2 dt
};

/// Relative residual of the integrated energy equality.
inline double energy_balance_residual(const RunRecord &r) {
  return std::abs(r.energy_change + r.energy_dissipated) / r.energy_dissipated;
}

using LimitTrajectory = std::vector<SpectralField>;

namespace detail {

inline bool is_record_step(std::size_t step, std::size_t total, std::size_t every) {
  return step % every == 0 || step == total;
}

inline double grad_energy(const SpectralField &xi) {
  double s = 0.0;
  xi.for_each([&](Wavevector k, double w, const cplx &v) { s += w * k.norm_squared() * std::norm(v); });
  return two_pi * two_pi * s;
}

/// Per-step bookkeeping shared by the SPDE runners.
class PathMonitor {
public:
  PathMonitor(RunRecord &rec, const SimConfig &cfg, const SpectralField &xi0)
      : rec_(rec), kappa_(cfg.kappa), dt_(cfg.dt), m_(cfg.grid) {
    e_prev_ = xi0.l2_norm_squared();
    e0_ = e_prev_;
    g_prev_ = grad_energy(xi0);
  }

  void after_step(const SpectralField &xi, const StepInfo &info) {
    const double e = xi.l2_norm_squared();
    const double g = grad_energy(xi);
    if (e_prev_ > 0.0) {
      rec_.max_step_growth =
          std::max(rec_.max_step_growth, std::sqrt(e / e_prev_) - 1.0);
    }
    rec_.energy_dissipated += kappa_ * (g + g_prev_) * dt_;
    rec_.energy_change = e - e0_;
    const double courant = info.max_speed * dt_ * m_;
    rec_.max_courant = std::max(rec_.max_courant, courant);
    if (courant > 1.0) {
      ++rec_.cfl_warnings;
    }
    e_prev_ = e;
    g_prev_ = g;
  }

private:
  RunRecord &rec_;
  double kappa_, dt_;
  int m_;
  double e0_ = 0.0, e_prev_ = 0.0, g_prev_ = 0.0;
};

inline RecordRow make_row(double t, const SpectralField &xi, const SpectralField &bar,
                          const std::vector<double> &sobolev) {
  RecordRow row;
  row.t = t;
  row.l2 = xi.l2_norm();
  row.l2_limit = bar.l2_norm();
  row.h1 = sobolev_norm(xi, 1.0);
  const SpectralField diff = xi - bar;
  for (double s : sobolev) {
    row.dist.push_back(sobolev_norm(diff, -s));
  }
  return row;
}

} // namespace detail

namespace detail {

inline void check_stride(const RunOptions &opts, std::size_t total) {
  const std::size_t k = opts.limit_stride;
  if (k == 0 || opts.record_every == 0) {
    throw ConfigError("record_every and limit_stride must be >= 1");
  }
  if (opts.record_every % k != 0 || total % k != 0) {
    throw ConfigError("limit_stride must divide record_every and the step count");
  }
}

} // namespace detail

/// Deterministic limit solution at the record times of a run with these options.
inline LimitTrajectory run_limit(const SpectralField &xi0, const SimConfig &cfg,
                                 const RunOptions &opts) {
  cfg.validate();
  const std::size_t total = cfg.steps();
  detail::check_stride(opts, total);
  detail::FlushDenormals ftz;
  const std::size_t k = opts.limit_stride;
  Integrator integ(cfg.grid, cfg.kappa + cfg.nu, cfg.dt * static_cast<double>(k), cfg.scheme,
                   cfg.dealias);
  SpectralField bar = xi0;
  bar.truncate();
  bar.zero_mean();
  LimitTrajectory out{bar};
  for (std::size_t step = k; step <= total; step += k) {
    integ.step(bar, nullptr, nullptr, 0.0);
    check_finite(bar, step);
    if (detail::is_record_step(step, total, opts.record_every)) {
      out.push_back(bar);
    }
  }
  return out;
}

/// SPDE and limit equation from the same initial datum on the same grid.
/// `limit` may carry a precomputed run_limit() for the same (xi0, cfg, opts).
inline RunRecord run_coupled(const SpectralField &xi0, const SimConfig &cfg,
                             const RunOptions &opts, const LimitTrajectory *limit = nullptr) {
  cfg.validate();
  LimitTrajectory own;
  if (limit == nullptr) {
    own = run_limit(xi0, cfg, opts);
    limit = &own;
  }
  detail::FlushDenormals ftz;
  RunRecord rec;
  rec.config = cfg;
  rec.replica = opts.replica;
  rec.sobolev = opts.sobolev;
  rec.sup_dist.assign(opts.sobolev.size(), 0.0);

  PathState path = make_path(xi0, cfg, opts.replica);
  Integrator integ(cfg.grid, cfg.kappa, cfg.dt, cfg.scheme, cfg.dealias);
  integ.set_ou_refine(opts.ou_refine);
  detail::PathMonitor monitor(rec, cfg, path.xi);
  const std::size_t total = cfg.steps();
  std::size_t slot = 0;

  auto record = [&] {
    if (slot >= limit->size()) {
      throw std::logic_error("run_coupled: limit trajectory is too short");
    }
    auto row = detail::make_row(path.t, path.xi, (*limit)[slot++], opts.sobolev);
    for (std::size_t i = 0; i < row.dist.size(); ++i) {
      rec.sup_dist[i] = std::max(rec.sup_dist[i], row.dist[i]);
    }
    rec.rows.push_back(std::move(row));
    if (opts.keep_snapshots) {
      rec.snapshots.push_back(path.xi);
    }
  };

  record();
  for (std::size_t step = 1; step <= total; ++step) {
    const StepInfo info =
        integ.step(path.xi, cfg.has_noise() ? &path.ens : nullptr, &cfg.theta, cfg.nu);
    path.step = step;
    path.t = static_cast<double>(step) * cfg.dt;
    check_finite(path.xi, step);
    monitor.after_step(path.xi, info);
    if (detail::is_record_step(step, total, opts.record_every)) {
      record();
    }
  }
  return rec;
}

/// SPDE path with the limit equation restarted from the SPDE state at every
/// integer time. Distances are measured against the current restart.
inline RunRecord run_restarted(const SpectralField &xi0, const SimConfig &cfg,
                               const RunOptions &opts) {
  cfg.validate();
  const double units = std::round(cfg.horizon);
  if (units < 1.0 || std::abs(cfg.horizon - units) > 1e-12) {
    throw ConfigError("restarted runs need an integer horizon T >= 1");
  }
  const double per_unit = 1.0 / cfg.dt;
  if (std::abs(per_unit - std::round(per_unit)) > 1e-9 * per_unit) {
    throw ConfigError("restarted runs need 1/dt to be an integer");
  }
  const auto steps_per_unit = static_cast<std::size_t>(std::llround(per_unit));
  const std::size_t total = cfg.steps();
  detail::check_stride(opts, total);
  if (steps_per_unit % opts.limit_stride != 0) {
    throw ConfigError("limit_stride must divide 1/dt");
  }

  detail::FlushDenormals ftz;
  RunRecord rec;
  rec.config = cfg;
  rec.replica = opts.replica;
  rec.sobolev = opts.sobolev;
  rec.sup_dist.assign(opts.sobolev.size(), 0.0);

  PathState path = make_path(xi0, cfg, opts.replica);
  Integrator spde(cfg.grid, cfg.kappa, cfg.dt, cfg.scheme, cfg.dealias);
  spde.set_ou_refine(opts.ou_refine);
  Integrator limit(cfg.grid, cfg.kappa + cfg.nu,
                   cfg.dt * static_cast<double>(opts.limit_stride), cfg.scheme, cfg.dealias);
  detail::PathMonitor monitor(rec, cfg, path.xi);

  SpectralField bar = path.xi;
  IntervalRow interval;
  double start_norm = path.xi.l2_norm();

  auto record = [&] {
    auto row = detail::make_row(path.t, path.xi, bar, opts.sobolev);
    for (std::size_t i = 0; i < row.dist.size(); ++i) {
      rec.sup_dist[i] = std::max(rec.sup_dist[i], row.dist[i]);
    }
    interval.sup_dist = std::max(interval.sup_dist, sobolev_norm(path.xi - bar, -1.0));
    rec.rows.push_back(std::move(row));
    if (opts.keep_snapshots) {
      rec.snapshots.push_back(path.xi);
    }
  };

  record();
  for (std::size_t step = 1; step <= total; ++step) {
    const StepInfo info =
        spde.step(path.xi, cfg.has_noise() ? &path.ens : nullptr, &cfg.theta, cfg.nu);
    if (step % opts.limit_stride == 0) {
      limit.step(bar, nullptr, nullptr, 0.0);
      check_finite(bar, step);
    }
    path.step = step;
    path.t = static_cast<double>(step) * cfg.dt;
    check_finite(path.xi, step);
    monitor.after_step(path.xi, info);
    if (detail::is_record_step(step, total, opts.record_every) || step % steps_per_unit == 0) {
      record();
    }
    if (step % steps_per_unit == 0) {
      const double end_norm = path.xi.l2_norm();
      interval.ratio = start_norm > 0.0 ? end_norm / start_norm : 0.0;
      rec.intervals.push_back(interval);
      interval = IntervalRow{};
      interval.n = static_cast<int>(step / steps_per_unit);
      start_norm = end_norm;
      bar = path.xi;
    }
  }
  return rec;
}

} // namespace oumix
