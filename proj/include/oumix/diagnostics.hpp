#pragma once

// Post-processing of run records: decay-rate fits, Monte Carlo estimates,
// mixing distances and time-increment statistics.
//
// Decay rates are rates of ||xi||_{L2}; ||xi||^2 decays at twice the rate.

#include "oumix/dynamics.hpp"
#include "oumix/noise.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace oumix {

struct DecayFit {
  double rate = 0.0;     // lambda in ||xi_t|| ~ C e^{-lambda t}
  double t0 = 0.0;       // window actually used
  double t1 = 0.0;
  double residual = 0.0; // RMS of the log-norm residuals
  std::size_t points = 0;
  std::string notice;    // non-empty when the window was truncated
};

inline constexpr double underflow_floor = 1e-300;
inline constexpr std::size_t min_fit_points = 5;

/// Least-squares line through (t, log norm) for t in [window.first, window.second].
/// Default window [0.2 T, 0.8 T] with T the last time. Norms at or below
/// 1e-300 end the window early, with a notice.
inline DecayFit fit_decay(std::span<const double> t, std::span<const double> norm,
                          std::optional<std::pair<double, double>> window = std::nullopt) {
  if (t.size() != norm.size() || t.empty()) {
    throw std::invalid_argument("fit_decay: need matching, non-empty series");
  }
  const double horizon = t.back();
  const auto [w0, w1] = window.value_or(std::pair{0.2 * horizon, 0.8 * horizon});
  if (!(w1 > w0)) {
    throw std::invalid_argument("fit_decay: empty window");
  }
  DecayFit fit;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < w0 || t[i] > w1) {
      continue;
    }
    if (!(norm[i] > underflow_floor)) {
      fit.notice = "norm underflow at t=" + std::to_string(t[i]) + "; window truncated";
      break;
    }
    x.push_back(t[i]);
    y.push_back(std::log(norm[i]));
  }
  if (x.size() < min_fit_points) {
    throw std::invalid_argument("fit_decay: " + std::to_string(x.size()) +
                                " points in window, need at least 5" +
                                (fit.notice.empty() ? "" : " (" + fit.notice + ")"));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) {
    throw std::invalid_argument("fit_decay: all window times coincide");
  }
  const double slope = sxy / sxx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (my + slope * (x[i] - mx));
    ss += r * r;
  }
  fit.rate = -slope;
  fit.t0 = x.front();
  fit.t1 = x.back();
  fit.residual = std::sqrt(ss / n);
  fit.points = x.size();
  return fit;
}

/// Fit of ||xi_t|| from a run record; `limit` selects the limit-equation column.
inline DecayFit fit_decay(const RunRecord &r, bool limit = false,
                          std::optional<std::pair<double, double>> window = std::nullopt) {
  std::vector<double> t, v;
  for (const auto &row : r.rows) {
    t.push_back(row.t);
    v.push_back(limit ? row.l2_limit : row.l2);
  }
  return fit_decay(t, v, window);
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct MCEstimate {
  double mean = 0.0;
  double stderr_ = 0.0; // sample std / sqrt(replicas)
  std::size_t replicas = 0;
};

inline constexpr std::size_t min_replicas = 8;

/// Mean and standard error. Values are summed in sorted order, so the result
/// does not depend on the order of the input.
inline MCEstimate mc_estimate(std::span<const double> values) {
  if (values.size() < min_replicas) {
    throw std::invalid_argument("mc_estimate: " + std::to_string(values.size()) +
                                " replicas, need at least 8");
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  detail::CompensatedSum s;
  for (double x : v) {
    s.add(x);
  }
  const double mean = s.value() / n;
  detail::CompensatedSum q;
  for (double x : v) {
    q.add((x - mean) * (x - mean));
  }
  return {mean, std::sqrt(q.value() / (n - 1.0)) / std::sqrt(n), v.size()};
}

/// b <= a within k combined standard errors.
inline bool not_above(const MCEstimate &a, const MCEstimate &b, double k = 2.0) {
  return b.mean <= a.mean + k * std::hypot(a.stderr_, b.stderr_);
}

/// b - a >= k combined standard errors.
inline bool separated_above(const MCEstimate &a, const MCEstimate &b, double k = 2.0) {
  return b.mean - a.mean >= k * std::hypot(a.stderr_, b.stderr_);
}

// ---------------------------------------------------------------------------
// ensemble statistics

/// True if the two configs differ at most in the seed.
inline bool same_config_except_seed(const SimConfig &a, const SimConfig &b) {
  const auto sa = a.theta.support(), sb = b.theta.support();
  const bool same_theta =
      sa.size() == sb.size() &&
      std::equal(sa.begin(), sa.end(), sb.begin(), [](const ThetaEntry &x, const ThetaEntry &y) {
        return x.k == y.k && x.theta == y.theta;
      });
  return a.kappa == b.kappa && a.nu == b.nu && a.alpha == b.alpha && a.grid == b.grid &&
         a.dt == b.dt && a.horizon == b.horizon && a.scheme == b.scheme &&
         a.dealias == b.dealias && same_theta;
}

namespace detail {

inline void require_ensemble(std::span<const RunRecord> records, const char *who) {
  if (records.empty()) {
    throw std::invalid_argument(std::string(who) + ": no records");
  }
  for (const auto &r : records) {
    if (!same_config_except_seed(records.front().config, r.config)) {
      throw std::invalid_argument(std::string(who) + ": records have different configs");
    }
  }
}

} // namespace detail

/// E sup_t ||xi_t - xi_bar_t||_{H^{-s}} over recorded times.
inline MCEstimate mixing_statistic(std::span<const RunRecord> records, double s) {
  detail::require_ensemble(records, "mixing_statistic");
  std::vector<double> v;
  for (const auto &r : records) {
    const auto it = std::find(r.sobolev.begin(), r.sobolev.end(), s);
    if (it == r.sobolev.end()) {
      throw std::invalid_argument("mixing_statistic: s=" + std::to_string(s) +
                                  " was not recorded");
    }
    v.push_back(r.sup_dist[static_cast<std::size_t>(it - r.sobolev.begin())]);
  }
  return mc_estimate(v);
}

/// Average of ||xi_{t+delta} - xi_t||^p_{H^{-1}} over the recorded t of one run.
/// Needs snapshots at a uniform cadence dividing delta.
inline double increment_mean(const RunRecord &r, double delta, double p) {
  if (!(delta >= 0.0) || !(p > 0.0)) {
    throw std::invalid_argument("increment_statistic: need delta >= 0 and p > 0");
  }
  if (r.snapshots.size() != r.rows.size() || r.rows.size() < 2) {
    throw std::invalid_argument("increment_statistic: record has no snapshot series");
  }
  const double h = r.rows[1].t - r.rows[0].t;
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    if (std::abs(r.rows[i].t - r.rows[i - 1].t - h) > 1e-9 * h) {
      throw std::invalid_argument("increment_statistic: record times are not uniform");
    }
  }
  const double lag_real = delta / h;
  const auto lag = static_cast<std::size_t>(std::llround(lag_real));
  if (std::abs(lag_real - static_cast<double>(lag)) > 1e-9 * std::max(1.0, lag_real)) {
    throw std::invalid_argument("increment_statistic: delta=" + std::to_string(delta) +
                                " is not a multiple of the record interval " +
                                std::to_string(h));
  }
  if (lag == 0) {
    return 0.0;
  }
  if (lag >= r.snapshots.size()) {
    throw std::invalid_argument("increment_statistic: delta exceeds the horizon");
  }
  detail::CompensatedSum acc;
  const std::size_t count = r.snapshots.size() - lag;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = sobolev_norm(r.snapshots[i + lag] - r.snapshots[i], -1.0);
    acc.add(std::pow(d, p));
  }
  return acc.value() / static_cast<double>(count);
}

/// increment_mean per replica, then the Monte Carlo mean over replicas.
inline MCEstimate increment_statistic(std::span<const RunRecord> records, double delta,
                                      double p) {
  detail::require_ensemble(records, "increment_statistic");
  std::vector<double> per_replica;
  for (const auto &r : records) {
    per_replica.push_back(increment_mean(r, delta, p));
  }
  return mc_estimate(per_replica);
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope: need at least two matching points");
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw std::invalid_argument("loglog_slope: values must be positive");
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  return sxy / sxx;
}

} // namespace oumix
