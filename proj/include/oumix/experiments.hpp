#pragma once

// Named experiment presets. Each preset expands an ExperimentPlan into sweep
// points, fans replicas out over a worker pool, and reduces the results into
// pass/fail checks and tables.
//
// The configured dt must satisfy every SimConfig rule at every sweep point.
// Each point then runs with the largest dt' <= min(dt, courant * cfl_dt_bound)
// such that the record interval divides the horizon (or 1 for restarted runs).
// Runs with nu = 0 are deterministic; they are computed once and shared by all
// replicas.

#include "oumix/diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

namespace oumix {

struct NoiseChoice {
  ThetaFamily family = ThetaFamily::lowpass;
  double a = 0.5;
  int n = 4;
  std::vector<ThetaEntry> entries; // explicit_list only
};

/// Theta for a grid; invalid choices raise ConfigError.
inline ThetaSpec build_theta(const NoiseChoice &c, int m) {
  if (!valid_grid_size(m)) {
    throw ConfigError("grid must be even, >= 4 and 7-smooth, got " + std::to_string(m));
  }
  try {
    if (c.family == ThetaFamily::explicit_list) {
      return make_theta_explicit(c.entries, m);
    }
    return make_theta(c.family, c.a, c.n, m);
  } catch (const ConfigError &) {
    throw;
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
}

struct ExperimentPlan {
  std::string name;
  std::uint64_t seed = 0;
  SimConfig base;   // nu, alpha and theta are overridden per sweep point
  NoiseChoice noise;

  // Sweep lists; an empty list means the base value.
  std::vector<double> alphas;
  std::vector<double> nus;
  std::vector<int> ns;
  std::vector<double> a_values;

  std::size_t replicas = 32;
  std::size_t record_every = 10;
  std::vector<double> sobolev = {1.0};
  InitialData initial = InitialData::single_mode;
  double radius = 1.0; // multiplies the preset initial datum
  double courant = 0.4;
  std::optional<std::pair<double, double>> fit_window;

  std::vector<double> deltas; // lemma31
  double p = 2.0;             // lemma31

  std::size_t samples = 100000;      // stationary draws, ou-covariance
  std::size_t paths = 10000;         // autocovariance paths
  std::size_t moment_samples = 4000; // draws of b
  std::vector<double> taus = {1.0};  // Sobolev indices for moments of b

  unsigned jobs = 0; // 0: hardware concurrency

  std::vector<double> alpha_list() const { return alphas.empty() ? std::vector{base.alpha} : alphas; }
  std::vector<double> nu_list() const { return nus.empty() ? std::vector{base.nu} : nus; }
  std::vector<int> n_list() const { return ns.empty() ? std::vector{noise.n} : ns; }
  std::vector<double> a_list() const { return a_values.empty() ? std::vector{noise.a} : a_values; }
};

// ---------------------------------------------------------------------------
// reports

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
      throw std::logic_error("table " + name + ": row width does not match columns");
    }
    rows.push_back(std::move(row));
  }
};

struct PointInfo {
  std::string label;
  SimConfig config;
  std::size_t limit_stride = 1;
  std::size_t replicas = 0;
};

struct ExperimentReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<Check> checks;
  std::vector<Table> tables;
  std::vector<std::string> notices;
  std::vector<PointInfo> points;
  double max_step_growth = -std::numeric_limits<double>::infinity(); // over SPDE runs

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check &c) { return c.passed; });
  }
  const Table *table(std::string_view n) const {
    for (const auto &t : tables) {
      if (t.name == n) {
        return &t;
      }
    }
    return nullptr;
  }
  const Check *check(std::string_view n) const {
    for (const auto &c : checks) {
      if (c.name == n) {
        return &c;
      }
    }
    return nullptr;
  }
  void add_check(std::string n, bool ok, std::string detail) {
    checks.push_back({std::move(n), ok, std::move(detail)});
  }
};

/// A run failed (non-finite state); the message names the sweep point and replica.
class ExperimentFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct ExperimentInfo {
  std::string_view name;
  std::string_view anchor;  // statement of the paper probed
  std::string_view summary;
};

inline const std::vector<ExperimentInfo> &experiment_registry() {
  static const std::vector<ExperimentInfo> registry = {
      {"ou-covariance", "Section 1: OU covariance (alpha/2) exp(-alpha|t-s|); Lemma 2.4",
       "stationary variance, autocovariance, isotropy identity, moments of b"},
      {"limit-decay", "Lemma 4.4: principal eigenvalue and L2 decay of the limit equation",
       "exact single-mode rate 4 pi^2 (kappa+nu) and the multi-mode energy bound"},
      {"theorem1", "Theorem 1.1: E sup ||xi - xi_bar||_{H^-1} small for alpha large",
       "mixing statistic across alpha and N sweeps"},
      {"theorem2", "Theorem 1.2: exponential L2 decay of the SPDE; Lemma 4.3 restarts",
       "decay-rate fits against the nu = 0 baseline and restart contraction ratios"},
      {"lemma31", "Lemma 3.1: H^-1 time increments of xi",
       "increment statistic across delta and nu"},
  };
  return registry;
}

inline bool is_experiment(std::string_view name) {
  const auto &r = experiment_registry();
  return std::any_of(r.begin(), r.end(), [&](const ExperimentInfo &e) { return e.name == name; });
}

// ---------------------------------------------------------------------------
// worker pool

inline unsigned resolve_jobs(unsigned jobs) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return jobs == 0 ? hw : std::min(jobs, hw);
}

/// Runs fn(0..n-1) on up to `jobs` threads. Results must be written to
/// per-index slots. The lowest-index exception is rethrown.
template <class Fn> void parallel_for(std::size_t n, unsigned jobs, Fn &&fn) {
  const std::size_t workers = std::min<std::size_t>(resolve_jobs(jobs), n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      if (failed.load()) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(work);
    }
  }
  for (auto &e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

// ---------------------------------------------------------------------------
// sweep points

struct SweepPoint {
  std::string label;
  double nu = 0.0, alpha = 0.0, a = 0.0;
  int n = 0;
  SimConfig cfg;
  std::size_t limit_stride = 1;
};

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

inline std::string point_label(double nu, double alpha, int n, double a) {
  return "nu=" + fmt(nu) + " alpha=" + fmt(alpha) + " N=" + std::to_string(n) + " a=" + fmt(a);
}

inline double max_speed(const SpectralField &xi) {
  const auto u = biot_savart(xi);
  const auto u1 = inverse(u.u1), u2 = inverse(u.u2);
  const auto v1 = u1.values(), v2 = u2.values();
  double s = 0.0;
  for (std::size_t i = 0; i < v1.size(); ++i) {
    s = std::max(s, std::hypot(v1[i], v2[i]));
  }
  return s;
}

} // namespace detail

inline SpectralField plan_initial(const ExperimentPlan &plan, InitialData kind) {
  SpectralField xi = make_initial(kind, plan.base.grid);
  xi *= plan.radius;
  return xi;
}

/// Resolved configuration of one sweep point. `spde` enables the noise terms
/// of the CFL bound; `unit_period` makes 1/dt an integer.
inline SweepPoint resolve_point(const ExperimentPlan &plan, const SpectralField &xi0, double nu,
                                double alpha, int n, double a, bool spde = true,
                                bool unit_period = false) {
  SweepPoint pt;
  pt.nu = nu;
  pt.alpha = alpha;
  pt.n = n;
  pt.a = a;
  pt.label = detail::point_label(nu, alpha, n, a);
  SimConfig cfg = plan.base;
  cfg.seed = plan.seed;
  cfg.nu = nu;
  cfg.alpha = alpha;
  NoiseChoice c = plan.noise;
  c.n = n;
  c.a = a;
  cfg.theta = build_theta(c, cfg.grid);
  if (plan.record_every == 0) {
    throw ConfigError("record_every must be >= 1");
  }
  if (!(plan.courant > 0.0)) {
    throw ConfigError("courant must be > 0");
  }
  cfg.validate(); // the configured dt, before clamping
  const double u0 = detail::max_speed(xi0);
  SimConfig probe = cfg;
  if (!spde) {
    probe.nu = 0.0;
  }
  double dt_max = std::min(plan.base.dt, plan.courant * cfl_dt_bound(probe, u0));
  if (cfg.has_noise()) {
    dt_max = std::min(dt_max, 0.1 / alpha);
  }
  const double period = unit_period ? 1.0 : cfg.horizon;
  const double q = static_cast<double>(plan.record_every);
  const double blocks = std::max(1.0, std::ceil(period / (dt_max * q) * (1.0 - 1e-12)));
  cfg.dt = period / (blocks * q);
  if (cfg.has_noise() && u0 * q * cfg.dt * cfg.grid <= plan.courant) {
    pt.limit_stride = plan.record_every;
  }
  cfg.validate();
  pt.cfg = cfg;
  return pt;
}

namespace detail {

inline RunOptions run_options(const ExperimentPlan &plan, const SweepPoint &pt) {
  RunOptions o;
  o.record_every = plan.record_every;
  o.sobolev = plan.sobolev;
  o.limit_stride = pt.limit_stride;
  return o;
}

inline void require_replicas(const ExperimentPlan &plan) {
  if (plan.replicas < min_replicas) {
    throw ConfigError("replicas must be >= 8, got " + std::to_string(plan.replicas));
  }
}

/// Replica records of every point. nu = 0 points run once. `run` is
/// run(point, options, limit) -> RunRecord; `reduce` may strip a record.
template <class Run, class Reduce>
std::vector<std::vector<RunRecord>> run_ensemble(const ExperimentPlan &plan,
                                                 const std::vector<SweepPoint> &points,
                                                 const SpectralField &xi0, bool share_limit,
                                                 Run &&run, Reduce &&reduce) {
  std::vector<LimitTrajectory> limits(points.size());
  if (share_limit) {
    parallel_for(points.size(), plan.jobs, [&](std::size_t i) {
      try {
        limits[i] = run_limit(xi0, points[i].cfg, run_options(plan, points[i]));
      } catch (const DivergenceError &e) {
        throw ExperimentFailure(points[i].label + " limit equation: " + e.what());
      }
    });
  }
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t reps = points[i].cfg.has_noise() ? plan.replicas : 1;
    for (std::size_t r = 0; r < reps; ++r) {
      jobs.emplace_back(i, r);
    }
  }
  std::vector<std::vector<RunRecord>> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i].resize(points[i].cfg.has_noise() ? plan.replicas : 1);
  }
  parallel_for(jobs.size(), plan.jobs, [&](std::size_t j) {
    const auto [i, r] = jobs[j];
    RunOptions o = run_options(plan, points[i]);
    o.replica = r;
    try {
      RunRecord rec = run(points[i], o, share_limit ? &limits[i] : nullptr);
      reduce(points[i], rec);
      out[i][r] = std::move(rec);
    } catch (const DivergenceError &e) {
      throw ExperimentFailure(points[i].label + " replica " + std::to_string(r) + ": " +
                              e.what());
    }
  });
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (out[i].size() == 1) {
      const RunRecord det = out[i][0];
      out[i].assign(plan.replicas, det);
      for (std::size_t r = 0; r < plan.replicas; ++r) {
        out[i][r].replica = r;
      }
    }
  }
  return out;
}

inline void add_points(ExperimentReport &rep, const ExperimentPlan &plan,
                       const std::vector<SweepPoint> &points, std::size_t replicas) {
  for (const auto &p : points) {
    rep.points.push_back({p.label, p.cfg, p.limit_stride, replicas});
  }
  (void)plan;
}

inline void add_monotone_check(ExperimentReport &rep,
                               const std::vector<std::vector<RunRecord>> &records) {
  double g = -std::numeric_limits<double>::infinity();
  std::size_t worst_point = 0, runs = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto &r : records[i]) {
      ++runs;
      if (r.max_step_growth > g) {
        g = r.max_step_growth;
        worst_point = i;
      }
    }
  }
  rep.max_step_growth = std::max(rep.max_step_growth, g);
  rep.add_check("energy monotone", g <= 1e-10,
                "max over " + std::to_string(runs) + " runs of ||xi_{n+1}||/||xi_n|| - 1 = " +
                    fmt(g) + " (point " + (records.empty() ? "-" : rep.points[worst_point].label) +
                    "), bound 1e-10");
}

inline Table series_table(const std::string &name, const std::vector<double> &sobolev) {
  Table t{name, {"point", "t", "l2", "l2_limit", "h1"}, {}};
  for (double s : sobolev) {
    t.columns.push_back("dist_hm" + fmt(s));
  }
  return t;
}

inline void add_series(Table &t, std::size_t point, const RunRecord &r) {
  for (const auto &row : r.rows) {
    std::vector<Cell> c = {static_cast<std::int64_t>(point), row.t, row.l2, row.l2_limit, row.h1};
    for (double d : row.dist) {
      c.emplace_back(d);
    }
    t.add(std::move(c));
  }
}

inline void add_run_stats(std::vector<Cell> &row, const std::vector<RunRecord> &recs) {
  double g = -std::numeric_limits<double>::infinity(), c = 0.0;
  std::int64_t warn = 0;
  for (const auto &r : recs) {
    g = std::max(g, r.max_step_growth);
    c = std::max(c, r.max_courant);
    warn += static_cast<std::int64_t>(r.cfl_warnings);
  }
  row.emplace_back(g);
  row.emplace_back(c);
  row.emplace_back(warn);
}

inline void cfl_notices(ExperimentReport &rep, const std::vector<SweepPoint> &points,
                        const std::vector<std::vector<RunRecord>> &records) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::size_t w = 0;
    for (const auto &r : records[i]) {
      w += r.cfl_warnings;
    }
    if (w > 0) {
      rep.notices.push_back(points[i].label + ": " + std::to_string(w) +
                            " steps with Courant number above 1");
    }
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// presets

inline ExperimentReport exp_ou_covariance(const ExperimentPlan &plan) {
  ExperimentReport rep;
  rep.experiment = "ou-covariance";
  rep.seed = plan.seed;
  auto alphas = plan.alpha_list();
  std::sort(alphas.begin(), alphas.end());
  for (double a : alphas) {
    if (!(a > 1.0)) {
      throw ConfigError("alpha must be > 1");
    }
  }
  if (plan.samples < 2 || plan.paths < 2 || plan.moment_samples < 2) {
    throw ConfigError("samples, paths and moment_samples must be >= 2");
  }
  const ThetaSpec theta = build_theta(plan.noise, plan.base.grid);
  std::vector<double> nus;
  for (double nu : plan.nu_list()) {
    if (nu > 0.0) {
      nus.push_back(nu);
    }
  }

  const std::size_t na = alphas.size();
  std::vector<VarianceReport> var(na);
  std::vector<AutocovarianceReport> ac(na);
  struct MomentPoint {
    double nu, alpha, tau;
    MomentReport r;
  };
  std::vector<MomentPoint> moments;
  for (double nu : nus) {
    for (double alpha : alphas) {
      for (double tau : plan.taus) {
        moments.push_back({nu, alpha, tau, {}});
      }
    }
  }
  constexpr int lags = 12; // alpha * lag in [0, 3]
  parallel_for(2 * na + moments.size(), plan.jobs, [&](std::size_t j) {
    if (j < na) {
      var[j] = ou_stationary_variance(alphas[j], plan.samples, rng::stream_seed(plan.seed, j));
    } else if (j < 2 * na) {
      const std::size_t i = j - na;
      ac[i] = ou_autocovariance(alphas[i], 0.25 / alphas[i], lags, 800, plan.paths,
                                rng::stream_seed(plan.seed, 1000 + i));
    } else {
      auto &m = moments[j - 2 * na];
      m.r = b_moment_check(theta, m.alpha, m.nu, m.tau, 2.0, plan.moment_samples,
                           rng::stream_seed(plan.seed, 2000 + (j - 2 * na)));
    }
  });

  Table tv{"ou_variance", {"alpha", "samples", "mean", "variance", "stderr", "expected", "rel_err"}, {}};
  Table ta{"ou_autocovariance",
           {"alpha", "lag", "alpha_lag", "covariance", "stderr", "exact", "rel_err"}, {}};
  Table tr{"ou_rates", {"alpha", "fitted_rate", "rel_err"}, {}};
  std::vector<double> rates(na);
  for (std::size_t i = 0; i < na; ++i) {
    const double alpha = alphas[i], expect = 0.5 * alpha;
    const double rel = (var[i].variance - expect) / expect;
    tv.add({alpha, static_cast<std::int64_t>(var[i].samples), var[i].mean, var[i].variance,
            var[i].stderr_, expect, rel});
    rep.add_check("variance alpha=" + detail::fmt(alpha), std::abs(rel) <= 0.02,
                  "variance " + detail::fmt(var[i].variance) + " vs alpha/2 = " +
                      detail::fmt(expect) + ", tolerance 2%");
    double worst = 0.0;
    for (std::size_t l = 0; l < ac[i].lags.size(); ++l) {
      const double exact = expect * std::exp(-alpha * ac[i].lags[l]);
      const double e = (ac[i].covariance[l] - exact) / exact;
      worst = std::max(worst, std::abs(e));
      ta.add({alpha, static_cast<std::int64_t>(l), alpha * ac[i].lags[l], ac[i].covariance[l],
              ac[i].stderr_[l], exact, e});
    }
    rep.add_check("autocovariance alpha=" + detail::fmt(alpha), worst <= 0.05,
                  "max relative error " + detail::fmt(worst) +
                      " over alpha*t in [0,3], tolerance 5%");
    rates[i] = autocovariance_rate(ac[i], alpha);
    tr.add({alpha, rates[i], rates[i] / alpha - 1.0});
  }
  if (na >= 2) {
    const double ar = alphas.back() / alphas.front();
    const double rr = rates.back() / rates.front();
    rep.add_check("autocovariance rate ratio", std::abs(rr / ar - 1.0) <= 0.05,
                  "rate ratio " + detail::fmt(rr) + " vs alpha ratio " + detail::fmt(ar) +
                      ", tolerance 5%");
    const auto &lo = var.front(), &hi = var.back();
    const double vr = hi.variance / lo.variance;
    const double se = vr * std::hypot(hi.stderr_ / hi.variance, lo.stderr_ / lo.variance);
    rep.add_check("variance ratio", std::abs(vr - ar) <= 2.0 * se,
                  "variance ratio " + detail::fmt(vr) + " vs alpha ratio " + detail::fmt(ar) +
                      ", 2 stderr = " + detail::fmt(2.0 * se));
  }

  const auto iso = isotropy_identity_check(theta);
  const double iso_err = std::max({std::abs(iso[0][0] - 0.5), std::abs(iso[1][1] - 0.5),
                                   std::abs(iso[0][1]), std::abs(iso[1][0])});
  Table ti{"isotropy", {"family", "a", "N", "m11", "m12", "m21", "m22", "max_err"}, {}};
  ti.add({std::string(to_string(theta.family())), theta.a(), static_cast<std::int64_t>(theta.n()),
          iso[0][0], iso[0][1], iso[1][0], iso[1][1], iso_err});
  rep.add_check("isotropy identity", iso_err <= 1e-12,
                "max deviation from Id/2 " + detail::fmt(iso_err) + ", tolerance 1e-12");

  Table tm{"b_moments", {"nu", "alpha", "tau", "samples", "mean", "stderr", "exact", "z"}, {}};
  for (const auto &m : moments) {
    const double z = (m.r.mean - m.r.exact) / m.r.stderr_;
    tm.add({m.nu, m.alpha, m.tau, static_cast<std::int64_t>(m.r.samples), m.r.mean, m.r.stderr_,
            m.r.exact, z});
    rep.add_check("b second moment nu=" + detail::fmt(m.nu) + " alpha=" + detail::fmt(m.alpha) +
                      " tau=" + detail::fmt(m.tau),
                  std::abs(z) <= 3.0,
                  "E||b||^2 = " + detail::fmt(m.r.mean) + " vs 2 nu alpha C = " +
                      detail::fmt(m.r.exact) + " (" + detail::fmt(z) + " stderr)");
  }
  rep.tables = {tv, ta, tr, ti, tm};
  return rep;
}

inline ExperimentReport exp_limit_decay(const ExperimentPlan &plan) {
  ExperimentReport rep;
  rep.experiment = "limit-decay";
  rep.seed = plan.seed;
  const double kappa = plan.base.kappa;
  auto nus = plan.nu_list();
  std::sort(nus.begin(), nus.end());
  const auto single = plan_initial(plan, InitialData::single_mode);
  const auto multi = plan_initial(plan, plan.initial);

  std::vector<SweepPoint> points;
  for (double nu : nus) {
    auto pt = resolve_point(plan, single, nu, plan.base.alpha, plan.noise.n, plan.noise.a, false);
    const auto pm = resolve_point(plan, multi, nu, plan.base.alpha, plan.noise.n, plan.noise.a,
                                  false);
    if (pm.cfg.dt < pt.cfg.dt) {
      pt.cfg.dt = pm.cfg.dt;
    }
    pt.limit_stride = 1;
    points.push_back(pt);
  }
  detail::add_points(rep, plan, points, 1);

  struct Result {
    LimitTrajectory single, multi;
  };
  std::vector<Result> res(points.size());
  parallel_for(2 * points.size(), plan.jobs, [&](std::size_t j) {
    const auto &pt = points[j / 2];
    RunOptions o = detail::run_options(plan, pt);
    try {
      if (j % 2 == 0) {
        res[j / 2].single = run_limit(single, pt.cfg, o);
      } else {
        res[j / 2].multi = run_limit(multi, pt.cfg, o);
      }
    } catch (const DivergenceError &e) {
      throw ExperimentFailure(pt.label + " limit equation: " + e.what());
    }
  });

  Table td{"limit_decay",
           {"nu", "kappa", "dt", "fitted_rate", "expected_rate", "rel_err", "residual", "t0", "t1",
            "energy_rate"},
           {}};
  Table te{"limit_energy", {"nu", "t", "energy", "bound"}, {}};
  std::vector<double> rates;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto &pt = points[i];
    const double h = static_cast<double>(plan.record_every) * pt.cfg.dt;
    std::vector<double> t, v;
    for (std::size_t k = 0; k < res[i].single.size(); ++k) {
      t.push_back(static_cast<double>(k) * h);
      v.push_back(res[i].single[k].l2_norm());
    }
    const DecayFit fit = fit_decay(t, v, plan.fit_window);
    if (!fit.notice.empty()) {
      rep.notices.push_back(pt.label + ": " + fit.notice);
    }
    const double expect = 4.0 * std::numbers::pi * std::numbers::pi * (kappa + pt.nu);
    const double rel = fit.rate / expect - 1.0;
    rates.push_back(fit.rate);
    td.add({pt.nu, kappa, pt.cfg.dt, fit.rate, expect, rel, fit.residual, fit.t0, fit.t1,
            2.0 * fit.rate});
    rep.add_check("single-mode rate nu=" + detail::fmt(pt.nu), std::abs(rel) <= 1e-3,
                  "fitted L2 rate " + detail::fmt(fit.rate) + " vs 4 pi^2 (kappa+nu) = " +
                      detail::fmt(expect) + ", tolerance 0.1%");

    const double lambda1 = 8.0 * std::numbers::pi * std::numbers::pi * (kappa + pt.nu);
    const double e0 = multi.l2_norm_squared();
    bool ok = true;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < res[i].multi.size(); ++k) {
      const double tk = static_cast<double>(k) * h;
      const double e = res[i].multi[k].l2_norm_squared();
      const double bound = std::exp(-lambda1 * tk) * e0;
      te.add({pt.nu, tk, e, bound});
      worst = std::max(worst, e / bound - 1.0);
      ok = ok && e <= bound * (1.0 + 1e-12);
    }
    rep.add_check("multi-mode energy bound nu=" + detail::fmt(pt.nu), ok,
                  "max energy/bound - 1 = " + detail::fmt(worst) +
                      " over record times, lambda1 = 8 pi^2 (kappa+nu)");
  }
  if (!points.empty() && points.front().nu == 0.0) {
    for (std::size_t i = 1; i < points.size(); ++i) {
      const double expect = (kappa + points[i].nu) / kappa;
      const double ratio = rates[i] / rates[0];
      rep.add_check("rate ratio nu=" + detail::fmt(points[i].nu) + " vs nu=0",
                    std::abs(ratio / expect - 1.0) <= 2e-3,
                    "ratio " + detail::fmt(ratio) + " vs (kappa+nu)/kappa = " +
                        detail::fmt(expect) + ", tolerance 0.2%");
    }
  }
  rep.tables = {td, te};
  return rep;
}

inline ExperimentReport exp_theorem1(const ExperimentPlan &plan) {
  detail::require_replicas(plan);
  ExperimentReport rep;
  rep.experiment = "theorem1";
  rep.seed = plan.seed;
  const auto xi0 = plan_initial(plan, plan.initial);
  auto alphas = plan.alpha_list();
  auto ns = plan.n_list();
  auto as = plan.a_list();
  std::sort(alphas.begin(), alphas.end());
  std::sort(ns.begin(), ns.end());
  std::sort(as.begin(), as.end());
  const double s = plan.sobolev.front();

  using Key = std::tuple<double, double, int, double>;
  std::map<Key, std::size_t> index;
  std::vector<SweepPoint> points;
  struct Member {
    std::string sweep;
    std::size_t point;
  };
  std::vector<Member> members;
  auto add = [&](const std::string &sweep, double nu, double alpha, int n, double a) {
    const Key k{nu, alpha, n, a};
    auto it = index.find(k);
    if (it == index.end()) {
      it = index.emplace(k, points.size()).first;
      points.push_back(resolve_point(plan, xi0, nu, alpha, n, a));
    }
    members.push_back({sweep, it->second});
  };
  for (double nu : plan.nu_list()) {
    for (double alpha : alphas) {
      add("alpha", nu, alpha, plan.noise.n, plan.noise.a);
    }
    for (int n : ns) {
      add("N", nu, plan.base.alpha, n, plan.noise.a);
    }
    if (!plan.a_values.empty()) {
      for (double a : as) {
        add("a", nu, plan.base.alpha, plan.noise.n, a);
      }
    }
  }
  detail::add_points(rep, plan, points, plan.replicas);

  const auto records = detail::run_ensemble(
      plan, points, xi0, true,
      [&](const SweepPoint &pt, const RunOptions &o, const LimitTrajectory *lim) {
        return run_coupled(xi0, pt.cfg, o, lim);
      },
      [](const SweepPoint &, RunRecord &) {});

  std::vector<MCEstimate> est;
  for (const auto &recs : records) {
    est.push_back(mixing_statistic(recs, s));
  }

  Table t{"theorem1",
          {"sweep", "nu", "alpha", "N", "a", "dt", "limit_stride", "replicas", "s", "mean",
           "stderr", "max_step_growth", "max_courant", "cfl_warnings"},
          {}};
  for (const auto &m : members) {
    const auto &pt = points[m.point];
    std::vector<Cell> row = {m.sweep, pt.nu, pt.alpha, static_cast<std::int64_t>(pt.n), pt.a,
                             pt.cfg.dt, static_cast<std::int64_t>(pt.limit_stride),
                             static_cast<std::int64_t>(est[m.point].replicas), s,
                             est[m.point].mean, est[m.point].stderr_};
    detail::add_run_stats(row, records[m.point]);
    t.add(std::move(row));
  }

  for (double nu : plan.nu_list()) {
    if (nu == 0.0) {
      bool zero = true;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].nu == 0.0) {
          for (const auto &r : records[i]) {
            for (double d : r.sup_dist) {
              zero = zero && d == 0.0;
            }
          }
        }
      }
      rep.add_check("nu=0 column zero", zero, "sup distance of every nu=0 run is exactly 0");
      continue;
    }
    for (const std::string sweep : {"alpha", "N", "a"}) {
      if (sweep == "a") {
        continue; // tabulated only
      }
      std::vector<std::size_t> seq;
      for (const auto &m : members) {
        if (m.sweep == sweep && points[m.point].nu == nu) {
          seq.push_back(m.point);
        }
      }
      for (std::size_t k = 1; k < seq.size(); ++k) {
        const auto &a = est[seq[k - 1]], &b = est[seq[k]];
        const auto &pa = points[seq[k - 1]], &pb = points[seq[k]];
        const std::string from = sweep == "alpha" ? detail::fmt(pa.alpha) : std::to_string(pa.n);
        const std::string to = sweep == "alpha" ? detail::fmt(pb.alpha) : std::to_string(pb.n);
        rep.add_check(sweep + "-sweep nu=" + detail::fmt(nu) + " " + from + "->" + to,
                      not_above(a, b),
                      "mean " + detail::fmt(a.mean) + " +- " + detail::fmt(a.stderr_) + " -> " +
                          detail::fmt(b.mean) + " +- " + detail::fmt(b.stderr_) +
                          " (nonincreasing within 2 combined stderr)");
      }
    }
  }
  detail::add_monotone_check(rep, records);
  detail::cfl_notices(rep, points, records);

  Table series = detail::series_table("theorem1_series", plan.sobolev);
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::add_series(series, i, records[i].front());
  }
  rep.tables = {t, series};
  return rep;
}

inline ExperimentReport exp_theorem2(const ExperimentPlan &plan) {
  detail::require_replicas(plan);
  ExperimentReport rep;
  rep.experiment = "theorem2";
  rep.seed = plan.seed;
  const double units = std::round(plan.base.horizon);
  if (units < 2.0 || std::abs(plan.base.horizon - units) > 1e-12) {
    throw ConfigError("theorem2 needs an integer horizon T >= 2");
  }
  const auto xi0 = plan_initial(plan, plan.initial);
  std::vector<SweepPoint> points;
  points.push_back(
      resolve_point(plan, xi0, 0.0, plan.alpha_list().front(), plan.n_list().front(),
                    plan.a_list().front(), true, true));
  points.front().limit_stride = 1;
  for (double nu : plan.nu_list()) {
    if (nu <= 0.0) {
      continue;
    }
    for (double alpha : plan.alpha_list()) {
      for (int n : plan.n_list()) {
        for (double a : plan.a_list()) {
          points.push_back(resolve_point(plan, xi0, nu, alpha, n, a, true, true));
        }
      }
    }
  }
  detail::add_points(rep, plan, points, plan.replicas);

  const auto records = detail::run_ensemble(
      plan, points, xi0, false,
      [&](const SweepPoint &pt, const RunOptions &o, const LimitTrajectory *) {
        return run_restarted(xi0, pt.cfg, o);
      },
      [](const SweepPoint &, RunRecord &) {});

  Table tf{"theorem2_fits",
           {"point", "replica", "rate", "energy_rate", "residual", "t0", "t1", "points"}, {}};
  Table ti{"theorem2_intervals", {"point", "replica", "n", "ratio", "sup_dist_hm1"}, {}};
  Table ts{"theorem2",
           {"point", "nu", "alpha", "N", "a", "dt", "limit_stride", "replicas", "mean_rate",
            "stderr", "mean_residual", "max_ratio", "max_step_growth", "max_courant",
            "cfl_warnings"},
           {}};
  std::vector<MCEstimate> est;
  double max_ratio = -std::numeric_limits<double>::infinity();
  std::size_t intervals = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<double> rates;
    double resid = 0.0, mr = -std::numeric_limits<double>::infinity();
    std::size_t truncated = 0;
    for (const auto &r : records[i]) {
      const DecayFit fit = fit_decay(r, false, plan.fit_window);
      truncated += fit.notice.empty() ? 0 : 1;
      rates.push_back(fit.rate);
      resid += fit.residual;
      tf.add({static_cast<std::int64_t>(i), static_cast<std::int64_t>(r.replica), fit.rate,
              2.0 * fit.rate, fit.residual, fit.t0, fit.t1, static_cast<std::int64_t>(fit.points)});
      for (const auto &iv : r.intervals) {
        ti.add({static_cast<std::int64_t>(i), static_cast<std::int64_t>(r.replica),
                static_cast<std::int64_t>(iv.n), iv.ratio, iv.sup_dist});
        mr = std::max(mr, iv.ratio);
        ++intervals;
      }
    }
    if (truncated > 0) {
      rep.notices.push_back(points[i].label + ": norm underflow truncated the fit window in " +
                            std::to_string(truncated) + " replicas");
    }
    max_ratio = std::max(max_ratio, mr);
    est.push_back(mc_estimate(rates));
    const auto &pt = points[i];
    std::vector<Cell> row = {static_cast<std::int64_t>(i), pt.nu, pt.alpha,
                             static_cast<std::int64_t>(pt.n), pt.a, pt.cfg.dt,
                             static_cast<std::int64_t>(pt.limit_stride),
                             static_cast<std::int64_t>(plan.replicas), est.back().mean,
                             est.back().stderr_,
                             resid / static_cast<double>(records[i].size()), mr};
    detail::add_run_stats(row, records[i]);
    ts.add(std::move(row));
  }

  // Baseline: for nu = 0, d/dt log ||xi|| = -4 pi^2 kappa ||xi||_{H^1}^2 / ||xi||^2.
  {
    const RunRecord &b = records.front().front();
    const DecayFit fit = fit_decay(b, false, plan.fit_window);
    detail::CompensatedSum q;
    std::size_t cnt = 0;
    for (const auto &row : b.rows) {
      if (row.t >= fit.t0 && row.t <= fit.t1) {
        q.add(4.0 * std::numbers::pi * std::numbers::pi * plan.base.kappa * row.h1 * row.h1 /
              (row.l2 * row.l2));
        ++cnt;
      }
    }
    const double quotient = q.value() / static_cast<double>(cnt);
    const double rel = est.front().mean / quotient - 1.0;
    rep.add_check("baseline kappa-only rate", std::abs(rel) <= 0.1,
                  "nu=0 fitted rate " + detail::fmt(est.front().mean) +
                      " vs mean Dirichlet quotient 4 pi^2 kappa ||xi||_H1^2/||xi||^2 = " +
                      detail::fmt(quotient) + ", tolerance 10%");
  }
  if (points.size() > 1) {
    std::size_t top = 1;
    for (std::size_t i = 2; i < points.size(); ++i) {
      const auto &p = points[i], &q = points[top];
      if (std::tie(p.nu, p.alpha, p.n, p.a) > std::tie(q.nu, q.alpha, q.n, q.a)) {
        top = i;
      }
    }
    const auto &a = est.front(), &b = est[top];
    rep.add_check("rate enhancement " + points[top].label, separated_above(a, b),
                  "mean rate " + detail::fmt(b.mean) + " +- " + detail::fmt(b.stderr_) +
                      " vs baseline " + detail::fmt(a.mean) + " +- " + detail::fmt(a.stderr_) +
                      " (separation >= 2 combined stderr)");
  }
  rep.add_check("contraction ratios", max_ratio <= 1.0,
                "max ||xi_{n+1}||/||xi_n|| = " + detail::fmt(max_ratio) + " over " +
                    std::to_string(intervals) + " intervals");
  detail::add_monotone_check(rep, records);
  detail::cfl_notices(rep, points, records);

  Table series = detail::series_table("theorem2_series", plan.sobolev);
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::add_series(series, i, records[i].front());
  }
  rep.tables = {ts, tf, ti, series};
  return rep;
}

inline ExperimentReport exp_lemma31(const ExperimentPlan &plan) {
  detail::require_replicas(plan);
  ExperimentReport rep;
  rep.experiment = "lemma31";
  rep.seed = plan.seed;
  auto deltas = plan.deltas;
  std::sort(deltas.begin(), deltas.end());
  if (deltas.size() < 2 || !(deltas.front() > 0.0) ||
      deltas.back() < 10.0 * deltas.front() * (1.0 - 1e-9)) {
    throw ConfigError("lemma31 needs at least two positive deltas spanning one decade");
  }
  if (!(plan.p > 0.0)) {
    throw ConfigError("p must be > 0");
  }
  const auto xi0 = plan_initial(plan, plan.initial);
  std::vector<double> nus;
  for (double nu : plan.nu_list()) {
    if (!(nu > 0.0)) {
      throw ConfigError("lemma31 needs nu > 0");
    }
    nus.push_back(nu);
  }
  std::sort(nus.begin(), nus.end());
  std::vector<SweepPoint> points;
  for (double alpha : plan.alpha_list()) {
    for (double nu : nus) {
      points.push_back(resolve_point(plan, xi0, nu, alpha, plan.noise.n, plan.noise.a));
      const double h = static_cast<double>(plan.record_every) * points.back().cfg.dt;
      for (double d : deltas) {
        const double lag = d / h;
        if (std::abs(lag - std::round(lag)) > 1e-9 * std::max(1.0, lag)) {
          throw ConfigError("delta=" + detail::fmt(d) +
                            " is not a multiple of the record interval " + detail::fmt(h) +
                            " at " + points.back().label);
        }
        if (d >= points.back().cfg.horizon) {
          throw ConfigError("delta=" + detail::fmt(d) + " exceeds the horizon");
        }
      }
    }
    if (deltas.front() * alpha < 1.0) {
      rep.notices.push_back("delta*alpha = " + detail::fmt(deltas.front() * alpha) +
                            " < 1 at alpha=" + detail::fmt(alpha));
    }
  }
  detail::add_points(rep, plan, points, plan.replicas);

  // Increments are reduced per replica; snapshots are then dropped.
  std::vector<std::vector<std::vector<double>>> incr(
      points.size(), std::vector<std::vector<double>>(plan.replicas));
  const auto records = detail::run_ensemble(
      plan, points, xi0, true,
      [&](const SweepPoint &pt, RunOptions o, const LimitTrajectory *lim) {
        o.keep_snapshots = true;
        return run_coupled(xi0, pt.cfg, o, lim);
      },
      [&](const SweepPoint &pt, RunRecord &r) {
        const std::size_t i = static_cast<std::size_t>(&pt - points.data());
        auto &v = incr[i][r.replica];
        for (double d : deltas) {
          v.push_back(increment_mean(r, d, plan.p));
        }
        r.snapshots.clear();
        r.snapshots.shrink_to_fit();
      });

  Table t{"lemma31",
          {"nu", "alpha", "N", "a", "dt", "delta", "delta_alpha", "p", "replicas", "mean",
           "stderr"},
          {}};
  Table tsc{"lemma31_scaling",
            {"alpha", "delta", "nu_lo", "nu_hi", "ratio", "stderr", "expected"}, {}};
  Table tsl{"lemma31_slopes", {"nu", "alpha", "slope", "bound"}, {}};
  std::vector<std::vector<MCEstimate>> est(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto &pt = points[i];
    std::vector<double> means;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      std::vector<double> v;
      for (std::size_t r = 0; r < plan.replicas; ++r) {
        v.push_back(incr[i][r][k]);
      }
      est[i].push_back(mc_estimate(v));
      means.push_back(est[i].back().mean);
      t.add({pt.nu, pt.alpha, static_cast<std::int64_t>(pt.n), pt.a, pt.cfg.dt, deltas[k],
             deltas[k] * pt.alpha, plan.p, static_cast<std::int64_t>(plan.replicas),
             est[i].back().mean, est[i].back().stderr_});
    }
    const double slope = loglog_slope(deltas, means);
    const double bound = 1.1 * plan.p;
    tsl.add({pt.nu, pt.alpha, slope, bound});
    rep.add_check("delta slope " + pt.label, slope <= bound,
                  "log-log slope " + detail::fmt(slope) + " over delta in [" +
                      detail::fmt(deltas.front()) + ", " + detail::fmt(deltas.back()) +
                      "], bound " + detail::fmt(bound));
  }
  for (double alpha : plan.alpha_list()) {
    std::size_t lo = points.size(), hi = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].alpha != alpha) {
        continue;
      }
      if (lo == points.size() || points[i].nu < points[lo].nu) {
        lo = i;
      }
      if (hi == points.size() || points[i].nu > points[hi].nu) {
        hi = i;
      }
    }
    if (lo == points.size() || points[lo].nu == points[hi].nu) {
      continue;
    }
    const double expected = std::pow(points[hi].nu / points[lo].nu, 0.5 * plan.p);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      const auto &a = est[lo][k], &b = est[hi][k];
      const double ratio = b.mean / a.mean;
      const double se = ratio * std::hypot(a.stderr_ / a.mean, b.stderr_ / b.mean);
      tsc.add({alpha, deltas[k], points[lo].nu, points[hi].nu, ratio, se, expected});
      rep.add_check("nu scaling alpha=" + detail::fmt(alpha) + " delta=" + detail::fmt(deltas[k]),
                    std::abs(ratio - expected) <= 2.0 * se,
                    "S(nu=" + detail::fmt(points[hi].nu) + ")/S(nu=" + detail::fmt(points[lo].nu) +
                        ") = " + detail::fmt(ratio) + " vs (nu ratio)^(p/2) = " +
                        detail::fmt(expected) + ", 2 stderr = " + detail::fmt(2.0 * se));
    }
  }
  detail::add_monotone_check(rep, records);
  detail::cfl_notices(rep, points, records);

  Table series = detail::series_table("lemma31_series", plan.sobolev);
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::add_series(series, i, records[i].front());
  }
  rep.tables = {t, tsl, tsc, series};
  return rep;
}

// ---------------------------------------------------------------------------
// defaults and dispatch

/// Desk-scale defaults of each preset.
inline ExperimentPlan default_plan(std::string_view name) {
  ExperimentPlan p;
  p.name = std::string(name);
  p.seed = 1;
  p.base.dt = 1e-3;
  if (name == "ou-covariance") {
    p.base.grid = 16;
    p.base.alpha = 100.0;
    p.base.nu = 1.0;
    p.alphas = {50.0, 100.0, 200.0};
    p.nus = {1.0, 4.0};
    p.noise.n = 1;
  } else if (name == "limit-decay") {
    p.base.kappa = 0.01;
    p.base.grid = 64;
    p.base.horizon = 1.0;
    p.nus = {0.0, 1.0};
    p.noise.n = 2;
    p.initial = InitialData::random12;
  } else if (name == "theorem1") {
    p.base.kappa = 0.05;
    p.base.grid = 64;
    p.base.horizon = 1.0;
    p.base.alpha = 200.0;
    p.base.dt = 5e-4;
    p.nus = {0.0, 4.0};
    p.alphas = {50.0, 100.0, 200.0};
    p.ns = {2, 4, 8};
    p.noise.n = 4;
    p.replicas = 32;
  } else if (name == "theorem2") {
    p.base.kappa = 0.05;
    p.base.grid = 128;
    p.base.horizon = 2.0;
    p.base.dt = 5e-4;
    p.nus = {0.0, 8.0};
    p.alphas = {200.0};
    p.ns = {8};
    p.noise.n = 8;
    p.replicas = 16;
    p.record_every = 100;
    p.initial = InitialData::random12;
  } else if (name == "lemma31") {
    p.base.kappa = 1e-4;
    p.base.grid = 64;
    p.base.horizon = 0.5;
    p.base.alpha = 100.0;
    p.nus = {2.5e-4, 1e-3};
    p.alphas = {100.0};
    p.noise.n = 4;
    p.replicas = 32;
    p.deltas = {0.01, 0.02, 0.05, 0.1};
  } else {
    throw ConfigError("unknown experiment '" + std::string(name) + "'");
  }
  return p;
}

/// Resolves every sweep point without running; throws ConfigError.
inline std::vector<PointInfo> validate_plan(const ExperimentPlan &plan) {
  if (!is_experiment(plan.name)) {
    throw ConfigError("unknown experiment '" + plan.name + "'");
  }
  if (plan.sobolev.empty()) {
    throw ConfigError("sobolev list must not be empty");
  }
  std::vector<PointInfo> out;
  if (plan.name == "ou-covariance") {
    (void)build_theta(plan.noise, plan.base.grid);
    for (double a : plan.alpha_list()) {
      if (!(a > 1.0)) {
        throw ConfigError("alpha must be > 1");
      }
    }
    return out;
  }
  if (plan.name != "limit-decay") {
    detail::require_replicas(plan);
  }
  const bool spde = plan.name != "limit-decay";
  const bool unit = plan.name == "theorem2";
  const auto xi0 = plan_initial(plan, plan.initial);
  std::vector<double> nus = plan.nu_list();
  if (unit) {
    nus.push_back(0.0);
  }
  for (double nu : nus) {
    for (double alpha : plan.alpha_list()) {
      for (int n : plan.n_list()) {
        for (double a : plan.a_list()) {
          const auto pt = resolve_point(plan, xi0, nu, alpha, n, a, spde, unit);
          out.push_back({pt.label, pt.cfg, pt.limit_stride, plan.replicas});
        }
      }
    }
  }
  return out;
}

inline ExperimentReport run_experiment(const ExperimentPlan &plan) {
  if (plan.name == "ou-covariance") {
    return exp_ou_covariance(plan);
  }
  if (plan.name == "limit-decay") {
    return exp_limit_decay(plan);
  }
  if (plan.name == "theorem1") {
    return exp_theorem1(plan);
  }
  if (plan.name == "theorem2") {
    return exp_theorem2(plan);
  }
  if (plan.name == "lemma31") {
    return exp_lemma31(plan);
  }
  throw ConfigError("unknown experiment '" + plan.name + "'");
}

} // namespace oumix
