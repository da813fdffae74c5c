#pragma once

// Ornstein-Uhlenbeck transport flow on T^2.
//
// Real-field form used throughout:
//   b(t,x) = 2 sqrt(2 nu) sum_{k in half lattice} theta_k (k^perp/|k|)
//                 [cos(2 pi k.x) eta_c^k(t) + sin(2 pi k.x) eta_s^k(t)]
// with independent stationary OU channels d eta = -alpha eta dt + alpha dW.
// One-point covariance E[b(x) (x) b(x)] = nu alpha Id, identical to the
// complex-basis field 2 sqrt(nu) sum_k theta_k sigma_k eta^k.

#include "oumix/rng.hpp"
#include "oumix/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oumix {

namespace detail {
/// Neumaier compensated summation.
class CompensatedSum {
public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};
} // namespace detail

enum class ThetaFamily { lowpass, shell, explicit_list };

inline std::string_view to_string(ThetaFamily f) {
  switch (f) {
  case ThetaFamily::lowpass:
    return "lowpass";
  case ThetaFamily::shell:
    return "shell";
  case ThetaFamily::explicit_list:
    return "explicit";
  }
  return "?";
}

inline ThetaFamily parse_theta_family(std::string_view name) {
  if (name == "lowpass") {
    return ThetaFamily::lowpass;
  }
  if (name == "shell") {
    return ThetaFamily::shell;
  }
  if (name == "explicit") {
    return ThetaFamily::explicit_list;
  }
  throw std::invalid_argument("unknown theta family '" + std::string(name) +
                              "' (expected lowpass, shell or explicit)");
}

struct ThetaEntry {
  Wavevector k;
  double theta = 0.0;
};

/// Radial, finitely supported noise coefficients with unit l2 norm.
class ThetaSpec {
public:
  ThetaFamily family() const { return family_; }
  double a() const { return a_; }
  int n() const { return n_; }
  int grid_size() const { return m_; }
  /// epsilon_N: the factor applied to the raw weights by normalization.
  double normalizer() const { return normalizer_; }
  double linf() const { return linf_; }

  /// Full-lattice support, lexicographic in (k1, k2).
  std::span<const ThetaEntry> support() const { return support_; }

  /// Support restricted to the half lattice, same order.
  std::vector<ThetaEntry> half_support() const {
    std::vector<ThetaEntry> out;
    for (const auto &e : support_) {
      if (in_upper_half(e.k)) {
        out.push_back(e);
      }
    }
    return out;
  }

  std::vector<Wavevector> half_modes() const {
    std::vector<Wavevector> out;
    for (const auto &e : half_support()) {
      out.push_back(e.k);
    }
    return out;
  }

  double theta(Wavevector k) const {
    auto it = std::lower_bound(support_.begin(), support_.end(), k,
                               [](const ThetaEntry &e, Wavevector v) { return e.k < v; });
    return (it != support_.end() && it->k == k) ? it->theta : 0.0;
  }

  double l2_norm_squared() const {
    detail::CompensatedSum s;
    for (const auto &e : support_) {
      s.add(e.theta * e.theta);
    }
    return s.value();
  }

private:
  friend ThetaSpec make_theta(ThetaFamily, double, int, int);
  friend ThetaSpec make_theta_explicit(std::span<const ThetaEntry>, int);
  static ThetaSpec normalized(ThetaFamily family, double a, int n, int m,
                              std::vector<ThetaEntry> raw);

  ThetaFamily family_ = ThetaFamily::lowpass;
  double a_ = 0.0;
  int n_ = 0;
  int m_ = 0;
  double normalizer_ = 0.0;
  double linf_ = 0.0;
  std::vector<ThetaEntry> support_;
};

inline ThetaSpec ThetaSpec::normalized(ThetaFamily family, double a, int n, int m,
                                       std::vector<ThetaEntry> raw) {
  std::sort(raw.begin(), raw.end(),
            [](const ThetaEntry &x, const ThetaEntry &y) { return x.k < y.k; });
  std::erase_if(raw, [](const ThetaEntry &e) { return e.theta == 0.0; });
  if (raw.empty()) {
    throw std::invalid_argument("theta: empty support");
  }
  detail::CompensatedSum s;
  for (const auto &e : raw) {
    s.add(e.theta * e.theta);
  }
  const double eps = 1.0 / std::sqrt(s.value());
  ThetaSpec spec;
  spec.family_ = family;
  spec.a_ = a;
  spec.n_ = n;
  spec.m_ = m;
  spec.normalizer_ = eps;
  for (auto &e : raw) {
    e.theta *= eps;
    spec.linf_ = std::max(spec.linf_, e.theta);
  }
  spec.support_ = std::move(raw);
  return spec;
}

/// lowpass: theta_k ~ |k|^{-a} on 1 <= |k| <= N, a in (0,1).
/// shell:   theta_k ~ |k|^{-a} on N <= |k| <= 2N, a > 0.
inline ThetaSpec make_theta(ThetaFamily family, double a, int n, int m) {
  require_grid_size(m);
  if (n < 1) {
    throw std::invalid_argument("theta: N must be >= 1");
  }
  if (!std::isfinite(a)) {
    throw std::invalid_argument("theta: a must be finite");
  }
  int lo2 = 0, hi2 = 0, reach = 0;
  switch (family) {
  case ThetaFamily::lowpass:
    if (!(a > 0.0 && a < 1.0)) {
      throw std::invalid_argument("theta lowpass: a must lie in (0,1)");
    }
    lo2 = 1;
    hi2 = n * n;
    reach = n;
    break;
  case ThetaFamily::shell:
    if (!(a > 0.0)) {
      throw std::invalid_argument("theta shell: a must be > 0");
    }
    lo2 = n * n;
    hi2 = 4 * n * n;
    reach = 2 * n;
    break;
  case ThetaFamily::explicit_list:
    throw std::invalid_argument("theta: use make_theta_explicit for explicit lists");
  }
  if (reach > dealias_cutoff(m)) {
    throw std::invalid_argument("theta: support radius " + std::to_string(reach) +
                                " exceeds the dealiasing cutoff M/3 = " +
                                std::to_string(dealias_cutoff(m)));
  }
  std::vector<ThetaEntry> raw;
  for (int k1 = -reach; k1 <= reach; ++k1) {
    for (int k2 = -reach; k2 <= reach; ++k2) {
      const int n2 = k1 * k1 + k2 * k2;
      if (n2 >= lo2 && n2 <= hi2) {
        raw.push_back({{k1, k2}, std::pow(static_cast<double>(n2), -0.5 * a)});
      }
    }
  }
  return ThetaSpec::normalized(family, a, n, m, std::move(raw));
}

/// Explicit (k1, k2, theta) triples. Must be radial: every lattice point on a
/// listed circle has to be listed with the same weight.
inline ThetaSpec make_theta_explicit(std::span<const ThetaEntry> entries, int m) {
  require_grid_size(m);
  std::map<int, double> radial;
  std::map<Wavevector, double> given;
  int reach = 0;
  for (const auto &e : entries) {
    if (e.k.is_zero()) {
      throw std::invalid_argument("theta explicit: k = (0,0) is not allowed");
    }
    if (!std::isfinite(e.theta) || e.theta < 0.0) {
      throw std::invalid_argument("theta explicit: weights must be finite and >= 0");
    }
    if (!given.emplace(e.k, e.theta).second) {
      throw std::invalid_argument("theta explicit: duplicate wavevector (" +
                                  std::to_string(e.k.k1) + "," + std::to_string(e.k.k2) + ")");
    }
    auto [it, fresh] = radial.emplace(e.k.norm_squared(), e.theta);
    if (!fresh && std::abs(it->second - e.theta) > 1e-12 * std::max(it->second, e.theta)) {
      throw std::invalid_argument("theta explicit: weights are not radial at |k|^2 = " +
                                  std::to_string(e.k.norm_squared()));
    }
    reach = std::max({reach, std::abs(e.k.k1), std::abs(e.k.k2)});
  }
  if (reach > dealias_cutoff(m)) {
    throw std::invalid_argument("theta explicit: support exceeds the dealiasing cutoff");
  }
  for (const auto &[n2, w] : radial) {
    if (w == 0.0) {
      continue;
    }
    const int r = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n2))));
    for (int k1 = -r; k1 <= r; ++k1) {
      for (int k2 = -r; k2 <= r; ++k2) {
        if (k1 * k1 + k2 * k2 == n2 && !given.contains({k1, k2})) {
          throw std::invalid_argument("theta explicit: circle |k|^2 = " + std::to_string(n2) +
                                      " is missing (" + std::to_string(k1) + "," +
                                      std::to_string(k2) + ")");
        }
      }
    }
  }
  std::vector<ThetaEntry> raw(entries.begin(), entries.end());
  return ThetaSpec::normalized(ThetaFamily::explicit_list, 0.0, 0, m, std::move(raw));
}

struct NoiseStats {
  double c = 0.0;    // sum_k theta_k^2 |k|^{p tau}
  double d = 0.0;    // (sum_k |theta_k| |k|^{2 - gamma})^2
  double linf = 0.0; // max_k theta_k
};

inline NoiseStats theta_stats(const ThetaSpec &theta, double tau, double p, double gamma) {
  detail::CompensatedSum c, d;
  for (const auto &e : theta.support()) {
    const double r = e.k.norm();
    c.add(e.theta * e.theta * std::pow(r, p * tau));
    d.add(std::abs(e.theta) * std::pow(r, 2.0 - gamma));
  }
  return {c.value(), d.value() * d.value(), theta.linf()};
}

/// Sum_k theta_k^2 (k^perp (x) k^perp)/|k|^2 over the full lattice.
inline std::array<std::array<double, 2>, 2> isotropy_identity_check(const ThetaSpec &theta) {
  detail::CompensatedSum s11, s12, s22;
  for (const auto &e : theta.support()) {
    const double w = e.theta * e.theta / e.k.norm_squared();
    const auto kp = e.k.perp();
    s11.add(w * kp.k1 * kp.k1);
    s12.add(w * kp.k1 * kp.k2);
    s22.add(w * kp.k2 * kp.k2);
  }
  return {{{s11.value(), s12.value()}, {s12.value(), s22.value()}}};
}

// ---------------------------------------------------------------------------
// OU ensemble

/// Two OU channels (cos, sin) per half-lattice mode. Channel j of mode i draws
/// from stream 2 i + j.
class OUEnsemble {
public:
  OUEnsemble() = default;
  OUEnsemble(std::vector<Wavevector> modes, double alpha, std::uint64_t seed)
      : modes_(std::move(modes)), alpha_(alpha), eta_(2 * modes_.size(), 0.0) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw std::invalid_argument("OU ensemble: alpha must be positive");
    }
    streams_.reserve(eta_.size());
    for (std::size_t s = 0; s < eta_.size(); ++s) {
      streams_.emplace_back(rng::stream_seed(seed, s));
    }
  }

  double alpha() const { return alpha_; }
  std::span<const Wavevector> modes() const { return modes_; }
  std::size_t channels() const { return eta_.size(); }
  double cos_state(std::size_t mode) const { return eta_[2 * mode]; }
  double sin_state(std::size_t mode) const { return eta_[2 * mode + 1]; }
  std::span<const double> states() const { return eta_; }
  std::span<double> states() { return eta_; }

  /// Draws every state from N(0, alpha/2).
  void draw_stationary() {
    const double sd = std::sqrt(0.5 * alpha_);
    for (std::size_t s = 0; s < eta_.size(); ++s) {
      eta_[s] = sd * streams_[s]();
    }
  }

  /// Exact transition over dt: eta' = e^{-alpha dt} eta + N(0, alpha/2 (1 - e^{-2 alpha dt})).
  void step(double dt) {
    if (dt < 0.0 || !std::isfinite(dt)) {
      throw std::invalid_argument("OU step: dt must be finite and >= 0");
    }
    if (dt == 0.0) {
      return;
    }
    const double decay = std::exp(-alpha_ * dt);
    const double sd = std::sqrt(0.5 * alpha_ * -std::expm1(-2.0 * alpha_ * dt));
    for (std::size_t s = 0; s < eta_.size(); ++s) {
      eta_[s] = decay * eta_[s] + sd * streams_[s]();
    }
  }

private:
  std::vector<Wavevector> modes_;
  double alpha_ = 1.0;
  std::vector<double> eta_;
  std::vector<rng::NormalStream> streams_;
};

inline OUEnsemble ou_init_stationary(std::vector<Wavevector> modes, double alpha,
                                     std::uint64_t seed) {
  OUEnsemble ens(std::move(modes), alpha, seed);
  ens.draw_stationary();
  return ens;
}

inline void ou_step(OUEnsemble &ens, double dt) { ens.step(dt); }

/// Spectral coefficients of b for the current OU states. At k in the half
/// lattice: b_hat(k) = sqrt(2 nu) theta_k (eta_c - i eta_s) k^perp/|k|.
inline VelocityField assemble_b(const ThetaSpec &theta, const OUEnsemble &ens, double nu) {
  const auto half = theta.half_support();
  const auto modes = ens.modes();
  if (half.size() != modes.size() ||
      !std::equal(half.begin(), half.end(), modes.begin(),
                  [](const ThetaEntry &e, Wavevector k) { return e.k == k; })) {
    throw std::invalid_argument("assemble_b: OU modes do not match the theta support");
  }
  if (nu < 0.0) {
    throw std::invalid_argument("assemble_b: nu must be >= 0");
  }
  VelocityField b(theta.grid_size());
  const double amp = std::sqrt(2.0 * nu);
  for (std::size_t i = 0; i < half.size(); ++i) {
    const Wavevector k = half[i].k;
    const cplx c = (amp * half[i].theta / k.norm()) * cplx(ens.cos_state(i), -ens.sin_state(i));
    b.u1.set(k, static_cast<double>(k.k2) * c);
    b.u2.set(k, static_cast<double>(-k.k1) * c);
  }
  return b;
}

// ---------------------------------------------------------------------------
// statistics of b

struct MomentReport {
  double p = 0.0;
  double tau = 0.0;
  std::size_t samples = 0;
  double mean = 0.0;   // empirical E ||b||_{H^tau}^p
  double stderr_ = 0.0;
  double scale = 0.0;  // nu^{p/2} alpha^{p/2} C_{theta,tau,p}
  double ratio = 0.0;  // mean / scale
  double exact = 0.0;  // 2 nu alpha C_{theta,tau,2} when p == 2, else 0
};

/// Monte Carlo E ||b||^p_{H^tau} over independent stationary draws. Draw s uses
/// replica_seed(seed, s).
inline MomentReport b_moment_check(const ThetaSpec &theta, double alpha, double nu, double tau,
                                   double p, std::size_t samples, std::uint64_t seed) {
  if (p != 2.0 && p != 4.0) {
    throw std::invalid_argument("b_moment_check: p must be 2 or 4");
  }
  if (samples < 2) {
    throw std::invalid_argument("b_moment_check: need at least two samples");
  }
  const auto modes = theta.half_modes();
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto ens = ou_init_stationary(modes, alpha, rng::replica_seed(seed, s));
    const double norm = sobolev_norm(assemble_b(theta, ens, nu), tau);
    const double x = std::pow(norm, p);
    sum += x;
    sum2 += x * x;
  }
  const double n = static_cast<double>(samples);
  MomentReport r;
  r.p = p;
  r.tau = tau;
  r.samples = samples;
  r.mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * r.mean * r.mean) / (n - 1.0));
  r.stderr_ = std::sqrt(var / n);
  const double c = theta_stats(theta, tau, p, 0.0).c;
  r.scale = std::pow(nu * alpha, 0.5 * p) * c;
  r.ratio = r.mean / r.scale;
  if (p == 2.0) {
    r.exact = 2.0 * nu * alpha * c;
  }
  return r;
}

/// Pointwise Monte Carlo mean of b(x) (x) b(x) over stationary draws, one
/// 2x2 matrix per grid point (row-major over the grid).
inline std::vector<std::array<double, 4>> b_covariance_field(const ThetaSpec &theta,
                                                             double alpha, double nu,
                                                             std::size_t samples,
                                                             std::uint64_t seed) {
  const int m = theta.grid_size();
  const auto modes = theta.half_modes();
  std::vector<std::array<double, 4>> acc(static_cast<std::size_t>(m) * m, {0, 0, 0, 0});
  for (std::size_t s = 0; s < samples; ++s) {
    const auto ens = ou_init_stationary(modes, alpha, rng::replica_seed(seed, s));
    const auto b = assemble_b(theta, ens, nu);
    const auto b1 = inverse(b.u1);
    const auto b2 = inverse(b.u2);
    const auto v1 = b1.values(), v2 = b2.values();
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i][0] += v1[i] * v1[i];
      acc[i][1] += v1[i] * v2[i];
      acc[i][2] += v2[i] * v1[i];
      acc[i][3] += v2[i] * v2[i];
    }
  }
  for (auto &a : acc) {
    for (double &x : a) {
      x /= static_cast<double>(samples);
    }
  }
  return acc;
}

struct VarianceReport {
  std::size_t samples = 0;
  double mean = 0.0;
  double variance = 0.0; // second moment about zero, the known mean
  double stderr_ = 0.0;  // of the variance estimate
};

/// Stationary draws of one OU channel; draw d uses replica_seed(seed, d).
inline VarianceReport ou_stationary_variance(double alpha, std::size_t samples,
                                             std::uint64_t seed) {
  if (samples < 2) {
    throw std::invalid_argument("ou_stationary_variance: need at least two samples");
  }
  detail::CompensatedSum s1, s2, s4;
  for (std::size_t d = 0; d < samples; ++d) {
    const auto ens = ou_init_stationary({{1, 0}}, alpha, rng::replica_seed(seed, d));
    const double x = ens.cos_state(0);
    s1.add(x);
    s2.add(x * x);
    s4.add(x * x * x * x);
  }
  const double n = static_cast<double>(samples);
  VarianceReport r;
  r.samples = samples;
  r.mean = s1.value() / n;
  r.variance = s2.value() / n;
  const double var_of_sq = std::max(0.0, s4.value() / n - r.variance * r.variance);
  r.stderr_ = std::sqrt(var_of_sq * n / (n - 1.0) / n);
  return r;
}

struct AutocovarianceReport {
  std::vector<double> lags;       // time lags
  std::vector<double> covariance; // empirical
  std::vector<double> stderr_;    // per lag, treating paths as independent replicas
};

/// Empirical Cov(eta(s), eta(s + lag)) of stationary OU paths sampled every dt,
/// averaged over all start times s in each path and over paths.
inline AutocovarianceReport ou_autocovariance(double alpha, double dt, int max_lag_steps,
                                              int path_steps, std::size_t paths,
                                              std::uint64_t seed) {
  if (max_lag_steps >= path_steps) {
    throw std::invalid_argument("ou_autocovariance: path too short for the requested lags");
  }
  const std::size_t nl = static_cast<std::size_t>(max_lag_steps) + 1;
  std::vector<double> sum(nl, 0.0), sum2(nl, 0.0);
  const std::size_t path_len = static_cast<std::size_t>(path_steps) + 1;
  std::vector<double> per_path(nl);
  for (std::size_t p = 0; p < paths; ++p) {
    OUEnsemble ens({{1, 0}}, alpha, rng::replica_seed(seed, p));
    ens.draw_stationary();
    // Both channels of the single mode are independent paths.
    std::vector<double> c0(path_len), c1(path_len);
    for (std::size_t t = 0; t < path_len; ++t) {
      if (t > 0) {
        ens.step(dt);
      }
      c0[t] = ens.states()[0];
      c1[t] = ens.states()[1];
    }
    for (const auto *series : {&c0, &c1}) {
      for (std::size_t l = 0; l < nl; ++l) {
        double s = 0.0;
        const std::size_t count = series->size() - l;
        for (std::size_t t = 0; t < count; ++t) {
          s += (*series)[t] * (*series)[t + l];
        }
        per_path[l] = s / static_cast<double>(count);
        sum[l] += per_path[l];
        sum2[l] += per_path[l] * per_path[l];
      }
    }
  }
  const double n = 2.0 * static_cast<double>(paths);
  AutocovarianceReport r;
  for (std::size_t l = 0; l < nl; ++l) {
    const double mean = sum[l] / n;
    const double var = std::max(0.0, (sum2[l] - n * mean * mean) / (n - 1.0));
    r.lags.push_back(static_cast<double>(l) * dt);
    r.covariance.push_back(mean);
    r.stderr_.push_back(std::sqrt(var / n));
  }
  return r;
}

/// Least-squares decay rate of log C(lag) over lags with alpha * lag <= max_alpha_t.
inline double autocovariance_rate(const AutocovarianceReport &rep, double alpha,
                                  double max_alpha_t = 3.0) {
  std::vector<double> x, y;
  for (std::size_t l = 0; l < rep.lags.size(); ++l) {
    if (alpha * rep.lags[l] <= max_alpha_t * (1.0 + 1e-12) && rep.covariance[l] > 0.0) {
      x.push_back(rep.lags[l]);
      y.push_back(std::log(rep.covariance[l]));
    }
  }
  if (x.size() < 2) {
    throw std::invalid_argument("autocovariance_rate: fewer than two usable lags");
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
  return -sxy / sxx;
}

} // namespace oumix
