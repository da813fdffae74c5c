#pragma once

// Fourier-space fields on the unit torus T^2 = [0,1)^2.
//
// Conventions
//   physical sample (i, j)  <->  x = (i/M, j/M), stored row-major, i slow.
//   f_hat(k) = int f(x) e^{-2 pi i k.x} dx, so f(x) = sum_k f_hat(k) e^{2 pi i k.x}.
//   Coefficients live in the r2c half layout: M rows indexed by k1 (FFT order),
//   M/2 + 1 columns for k2 = 0..M/2. Entries with k2 < 0 are implied by
//   Hermitian symmetry f_hat(-k) = conj(f_hat(k)).
//   ||f||_{H^s}^2 = sum_{k != 0} |k|^{2s} |f_hat(k)|^2  (no 2 pi, homogeneous).
//   The physical gradient carries the 2 pi: ||grad f||_{L2}^2 = 4 pi^2 ||f||_{H^1}^2.

#include "oumix/fft.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oumix {

using cplx = std::complex<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

struct Wavevector {
  int k1 = 0;
  int k2 = 0;

  constexpr int norm_squared() const { return k1 * k1 + k2 * k2; }
  double norm() const { return std::sqrt(static_cast<double>(norm_squared())); }
  constexpr Wavevector perp() const { return {k2, -k1}; }
  constexpr Wavevector operator-() const { return {-k1, -k2}; }
  constexpr bool is_zero() const { return k1 == 0 && k2 == 0; }
  friend constexpr bool operator==(const Wavevector &, const Wavevector &) = default;
  friend constexpr auto operator<=>(const Wavevector &, const Wavevector &) = default;
};

/// k1 > 0, or k1 == 0 and k2 > 0. Exactly one of {k, -k} satisfies this for k != 0.
constexpr bool in_upper_half(Wavevector k) { return k.k1 > 0 || (k.k1 == 0 && k.k2 > 0); }

/// Even, >= 4, and only prime factors 2, 3, 5, 7.
inline bool valid_grid_size(int m) {
  if (m < 4 || m % 2 != 0) {
    return false;
  }
  for (int p : {2, 3, 5, 7}) {
    while (m % p == 0) {
      m /= p;
    }
  }
  return m == 1;
}

inline void require_grid_size(int m) {
  if (!valid_grid_size(m)) {
    throw std::invalid_argument("grid size " + std::to_string(m) +
                                " must be even, >= 4 and 7-smooth");
  }
}

/// Largest |k_i| that survives the 2/3-rule mask.
constexpr int dealias_cutoff(int m) { return m / 3; }

constexpr bool in_dealias_box(Wavevector k, int m) {
  const int c = dealias_cutoff(m);
  return std::abs(k.k1) <= c && std::abs(k.k2) <= c;
}

class PhysicalField {
public:
  PhysicalField() = default;
  explicit PhysicalField(int m) : m_(m), v_(static_cast<std::size_t>(m) * m, 0.0) {}

  int grid_size() const { return m_; }
  double &operator()(int i, int j) { return v_[static_cast<std::size_t>(i) * m_ + j]; }
  double operator()(int i, int j) const { return v_[static_cast<std::size_t>(i) * m_ + j]; }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }

  double max_abs() const {
    double r = 0.0;
    for (double x : v_) {
      r = std::max(r, std::abs(x));
    }
    return r;
  }

private:
  int m_ = 0;
  std::vector<double> v_;
};

class SpectralField {
public:
  SpectralField() = default;
  explicit SpectralField(int m) : m_(m) {
    require_grid_size(m);
    c_.assign(static_cast<std::size_t>(m) * cols(), cplx{});
  }

  int grid_size() const { return m_; }
  int cols() const { return m_ / 2 + 1; }

  static int wavenumber(int index, int m) { return index <= m / 2 ? index : index - m; }
  int row_of(int k1) const { return k1 >= 0 ? k1 : k1 + m_; }

  /// True if k is representable (|k_i| <= M/2).
  bool contains(Wavevector k) const {
    return std::abs(k.k1) <= m_ / 2 && std::abs(k.k2) <= m_ / 2;
  }

  cplx &raw(int row, int col) { return c_[static_cast<std::size_t>(row) * cols() + col]; }
  const cplx &raw(int row, int col) const {
    return c_[static_cast<std::size_t>(row) * cols() + col];
  }
  std::span<cplx> raw_data() { return c_; }
  std::span<const cplx> raw_data() const { return c_; }

  cplx at(Wavevector k) const {
    if (!contains(k)) {
      return {};
    }
    if (k.k2 < 0) {
      return std::conj(raw(row_of(-k.k1), -k.k2));
    }
    return raw(row_of(k.k1), k.k2);
  }

  /// Writes f_hat(k) and keeps Hermitian symmetry for the stored mirror.
  void set(Wavevector k, cplx v) {
    if (!contains(k)) {
      throw std::out_of_range("wavevector outside the grid");
    }
    if (k.k2 < 0) {
      k = -k;
      v = std::conj(v);
    }
    raw(row_of(k.k1), k.k2) = v;
    if (k.k2 == 0 || k.k2 == m_ / 2) {
      raw(row_of(-k.k1), k.k2) = std::conj(v);
    }
  }

  /// Calls fn(k, weight, coeff) for each stored coefficient. weight is the
  /// number of lattice points the entry stands for in Parseval sums.
  template <class Fn> void for_each(Fn &&fn) {
    for (int r = 0; r < m_; ++r) {
      const int k1 = wavenumber(r, m_);
      for (int c = 0; c < cols(); ++c) {
        const double w = (c == 0 || c == m_ / 2) ? 1.0 : 2.0;
        fn(Wavevector{k1, c}, w, raw(r, c));
      }
    }
  }
  template <class Fn> void for_each(Fn &&fn) const {
    for (int r = 0; r < m_; ++r) {
      const int k1 = wavenumber(r, m_);
      for (int c = 0; c < cols(); ++c) {
        const double w = (c == 0 || c == m_ / 2) ? 1.0 : 2.0;
        fn(Wavevector{k1, c}, w, raw(r, c));
      }
    }
  }

  cplx mean() const { return c_.empty() ? cplx{} : c_[0]; }
  void zero_mean() {
    if (!c_.empty()) {
      c_[0] = 0.0;
    }
  }

  /// Zero the Nyquist row and column.
  void truncate() {
    const int n = m_ / 2;
    for (int c = 0; c < cols(); ++c) {
      raw(n, c) = 0.0;
    }
    for (int r = 0; r < m_; ++r) {
      raw(r, n) = 0.0;
    }
  }

  /// 2/3 rule: zero every mode with max(|k1|,|k2|) > M/3.
  void dealias() {
    for_each([&](Wavevector k, double, cplx &v) {
      if (!in_dealias_box(k, m_)) {
        v = 0.0;
      }
    });
  }

  double l2_norm_squared() const {
    double s = 0.0;
    for_each([&](Wavevector, double w, const cplx &v) { s += w * std::norm(v); });
    return s;
  }
  double l2_norm() const { return std::sqrt(l2_norm_squared()); }

  double max_abs_coeff() const {
    double r = 0.0;
    for (const auto &v : c_) {
      r = std::max(r, std::abs(v));
    }
    return r;
  }

  bool all_finite() const {
    return std::all_of(c_.begin(), c_.end(), [](const cplx &v) {
      return std::isfinite(v.real()) && std::isfinite(v.imag());
    });
  }

  SpectralField &operator+=(const SpectralField &o) {
    check_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      c_[i] += o.c_[i];
    }
    return *this;
  }
  SpectralField &operator-=(const SpectralField &o) {
    check_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      c_[i] -= o.c_[i];
    }
    return *this;
  }
  SpectralField &operator*=(double a) {
    for (auto &v : c_) {
      v *= a;
    }
    return *this;
  }
  /// this += a * o
  void add_scaled(double a, const SpectralField &o) {
    check_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) {
      c_[i] += a * o.c_[i];
    }
  }

  friend SpectralField operator+(SpectralField a, const SpectralField &b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField &b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  void check_same(const SpectralField &o) const {
    if (o.m_ != m_) {
      throw std::invalid_argument("grid size mismatch: " + std::to_string(m_) + " vs " +
                                  std::to_string(o.m_));
    }
  }

private:
  int m_ = 0;
  std::vector<cplx> c_;
};

struct VelocityField {
  SpectralField u1;
  SpectralField u2;

  VelocityField() = default;
  explicit VelocityField(int m) : u1(m), u2(m) {}
  VelocityField(SpectralField a, SpectralField b) : u1(std::move(a)), u2(std::move(b)) {
    u1.check_same(u2);
  }

  int grid_size() const { return u1.grid_size(); }
  double l2_norm_squared() const { return u1.l2_norm_squared() + u2.l2_norm_squared(); }
  double l2_norm() const { return std::sqrt(l2_norm_squared()); }

  VelocityField &operator+=(const VelocityField &o) {
    u1 += o.u1;
    u2 += o.u2;
    return *this;
  }
  friend VelocityField operator+(VelocityField a, const VelocityField &b) { return a += b; }
};

// ---------------------------------------------------------------------------
// transforms

inline SpectralField forward(const PhysicalField &f) {
  const int m = f.grid_size();
  require_grid_size(m);
  for (double x : f.values()) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("forward transform: non-finite sample");
    }
  }
  SpectralField out(m);
  fft::plan_for(m).forward(f.values(), out.raw_data());
  out *= 1.0 / (static_cast<double>(m) * m);
  return out;
}

inline PhysicalField inverse(const SpectralField &f) {
  const int m = f.grid_size();
  if (!f.all_finite()) {
    throw std::invalid_argument("inverse transform: non-finite coefficient");
  }
  std::vector<cplx> scratch(f.raw_data().begin(), f.raw_data().end());
  PhysicalField out(m);
  fft::plan_for(m).inverse(scratch, out.values());
  return out;
}

/// Samples fn(x1, x2) on the grid.
inline PhysicalField sample(int m, const std::function<double(double, double)> &fn) {
  PhysicalField out(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      out(i, j) = fn(static_cast<double>(i) / m, static_cast<double>(j) / m);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fourier multipliers

namespace detail {
template <class Mult> SpectralField apply_multiplier(const SpectralField &f, Mult &&mult) {
  SpectralField out = f;
  out.for_each([&](Wavevector k, double, cplx &v) { v *= mult(k); });
  out.truncate();
  out.zero_mean();
  return out;
}
} // namespace detail

inline SpectralField d1(const SpectralField &f) {
  return detail::apply_multiplier(f, [](Wavevector k) { return cplx(0.0, two_pi * k.k1); });
}

inline SpectralField d2(const SpectralField &f) {
  return detail::apply_multiplier(f, [](Wavevector k) { return cplx(0.0, two_pi * k.k2); });
}

inline SpectralField laplacian(const SpectralField &f) {
  return detail::apply_multiplier(
      f, [](Wavevector k) { return cplx(-two_pi * two_pi * k.norm_squared(), 0.0); });
}

/// (-Laplacian)^{-1} on zero-mean fields.
inline SpectralField inverse_neg_laplacian(const SpectralField &f) {
  return detail::apply_multiplier(f, [](Wavevector k) {
    return k.is_zero() ? cplx{} : cplx(1.0 / (two_pi * two_pi * k.norm_squared()), 0.0);
  });
}

/// grad^perp f = (d2 f, -d1 f).
inline VelocityField perp_grad(const SpectralField &f) {
  SpectralField minus_d1 = d1(f);
  minus_d1 *= -1.0;
  return {d2(f), std::move(minus_d1)};
}

/// Scalar curl d1 u2 - d2 u1.
inline SpectralField curl(const VelocityField &u) { return d1(u.u2) - d2(u.u1); }

inline SpectralField divergence(const VelocityField &u) { return d1(u.u1) + d2(u.u2); }

/// Velocity with curl(u) = xi and div(u) = 0:
///   u_hat(k) = i k^perp xi_hat(k) / (2 pi |k|^2).
inline VelocityField biot_savart(const SpectralField &xi) {
  const int m = xi.grid_size();
  VelocityField u(m);
  for (int r = 0; r < m; ++r) {
    const int k1 = SpectralField::wavenumber(r, m);
    for (int c = 0; c < xi.cols(); ++c) {
      const int k2 = c;
      const int n2 = k1 * k1 + k2 * k2;
      if (n2 == 0) {
        continue;
      }
      const cplx g = cplx(0.0, 1.0 / (two_pi * n2)) * xi.raw(r, c);
      u.u1.raw(r, c) = static_cast<double>(k2) * g;
      u.u2.raw(r, c) = static_cast<double>(-k1) * g;
    }
  }
  u.u1.truncate();
  u.u2.truncate();
  return u;
}

// ---------------------------------------------------------------------------
// norms and inner products

inline double mean_tolerance(double norm) { return 1e-12 * std::max(1.0, norm); }

inline double sobolev_norm_squared(const SpectralField &f, double s) {
  const double l2 = f.l2_norm();
  if (std::abs(f.mean()) > mean_tolerance(l2)) {
    throw std::invalid_argument("sobolev_norm: field has nonzero mean");
  }
  double acc = 0.0;
  f.for_each([&](Wavevector k, double w, const cplx &v) {
    const int n2 = k.norm_squared();
    if (n2 == 0) {
      return;
    }
    const double weight = s == 0.0 ? 1.0 : std::pow(static_cast<double>(n2), s);
    acc += w * weight * std::norm(v);
  });
  return acc;
}

inline double sobolev_norm(const SpectralField &f, double s) {
  return std::sqrt(sobolev_norm_squared(f, s));
}

inline double sobolev_norm(const VelocityField &u, double s) {
  return std::sqrt(sobolev_norm_squared(u.u1, s) + sobolev_norm_squared(u.u2, s));
}

/// Real L2 inner product.
inline double inner(const SpectralField &f, const SpectralField &g) {
  f.check_same(g);
  double s = 0.0;
  const auto a = f.raw_data();
  const auto b = g.raw_data();
  const int cols = f.cols();
  const int m = f.grid_size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int c = static_cast<int>(i % cols);
    const double w = (c == 0 || c == m / 2) ? 1.0 : 2.0;
    s += w * (a[i] * std::conj(b[i])).real();
  }
  return s;
}

// ---------------------------------------------------------------------------
// nonlinear transport term

/// Pseudo-spectral u . grad(xi). With `dealias`, inputs and output are masked by
/// the 2/3 rule. The mean of the result is projected to zero. If `max_speed`
/// is given it receives max_x |u(x)| of the (masked) velocity.
inline SpectralField advect(const VelocityField &u, const SpectralField &xi, bool dealias,
                            double *max_speed = nullptr) {
  xi.check_same(u.u1);
  xi.check_same(u.u2);
  const int m = xi.grid_size();

  VelocityField uu = u;
  SpectralField x = xi;
  if (dealias) {
    uu.u1.dealias();
    uu.u2.dealias();
    x.dealias();
  }
  uu.u1.truncate();
  uu.u2.truncate();

  const PhysicalField v1 = inverse(uu.u1);
  const PhysicalField v2 = inverse(uu.u2);
  const PhysicalField g1 = inverse(d1(x));
  const PhysicalField g2 = inverse(d2(x));

  PhysicalField prod(m);
  auto p = prod.values();
  const auto a1 = v1.values(), a2 = v2.values(), b1 = g1.values(), b2 = g2.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = a1[i] * b1[i] + a2[i] * b2[i];
  }
  if (max_speed != nullptr) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s2 = std::max(s2, a1[i] * a1[i] + a2[i] * a2[i]);
    }
    *max_speed = std::sqrt(s2);
  }

  SpectralField out(m);
  fft::plan_for(m).forward(prod.values(), out.raw_data());
  out *= 1.0 / (static_cast<double>(m) * m);
  out.truncate();
  if (dealias) {
    out.dealias();
  }
  out.zero_mean();
  return out;
}

/// Velocity coefficient at one upper-half mode; the conjugate mode is implied.
struct ModeVelocity {
  Wavevector k;
  cplx u1;
  cplx u2;
};

/// advect(biot_savart(xi) + extra, xi, dealias) with preallocated buffers.
/// Agrees with the free function to rounding. One instance per thread.
class Advector {
public:
  Advector(int m, bool dealias)
      : m_(m), cols_(m / 2 + 1),
        nspec_(static_cast<std::size_t>(m) * (m / 2 + 1)),
        nreal_(static_cast<std::size_t>(m) * m), plan_(&fft::plan_for(m)) {
    require_grid_size(m);
    for (int i = 0; i < 4; ++i) {
      spec_[i] = fft::make_aligned<cplx>(nspec_);
      real_[i] = fft::make_aligned<double>(nreal_);
    }
    keep_.resize(nspec_);
    for (int r = 0; r < m; ++r) {
      const int k1 = SpectralField::wavenumber(r, m);
      for (int c = 0; c < cols_; ++c) {
        const bool nyquist = r == m / 2 || c == m / 2;
        keep_[idx(r, c)] = !nyquist && (!dealias || in_dealias_box({k1, c}, m));
      }
    }
  }

  int grid_size() const { return m_; }

  /// Writes the product into `out` and returns max |u| over the grid.
  double apply(const SpectralField &xi, std::span<const ModeVelocity> extra,
               SpectralField &out) {
    if (xi.grid_size() != m_) {
      throw std::invalid_argument("Advector: grid size mismatch");
    }
    const auto x = xi.raw_data();
    cplx *u1 = spec_[0].get(), *u2 = spec_[1].get(), *g1 = spec_[2].get(), *g2 = spec_[3].get();
    for (int r = 0; r < m_; ++r) {
      const int k1 = SpectralField::wavenumber(r, m_);
      for (int c = 0; c < cols_; ++c) {
        const std::size_t i = idx(r, c);
        const int n2 = k1 * k1 + c * c;
        if (!keep_[i] || n2 == 0) {
          u1[i] = u2[i] = g1[i] = g2[i] = cplx{};
          continue;
        }
        const cplx v = x[i];
        const cplx g = cplx(0.0, 1.0 / (two_pi * n2)) * v;
        u1[i] = static_cast<double>(c) * g;
        u2[i] = static_cast<double>(-k1) * g;
        g1[i] = cplx(0.0, two_pi * k1) * v;
        g2[i] = cplx(0.0, two_pi * c) * v;
      }
    }
    for (const ModeVelocity &e : extra) {
      if (!in_upper_half(e.k) || !xi.contains(e.k)) {
        throw std::invalid_argument("Advector: extra mode must lie in the upper half lattice");
      }
      // stored entry is at k or, for k2 < 0, at -k with conjugated value
      const bool flip = e.k.k2 < 0;
      const Wavevector k = flip ? -e.k : e.k;
      const cplx v1 = flip ? std::conj(e.u1) : e.u1;
      const cplx v2 = flip ? std::conj(e.u2) : e.u2;
      const std::size_t i = idx(xi.row_of(k.k1), k.k2);
      if (!keep_[i]) {
        continue;
      }
      u1[i] += v1;
      u2[i] += v2;
      if (k.k2 == 0) {
        const std::size_t j = idx(xi.row_of(-k.k1), 0);
        u1[j] += std::conj(v1);
        u2[j] += std::conj(v2);
      }
    }
    for (int i = 0; i < 4; ++i) {
      plan_->inverse_aligned(spec_[i].get(), real_[i].get());
    }
    const double *a1 = real_[0].get(), *a2 = real_[1].get();
    const double *b1 = real_[2].get(), *b2 = real_[3].get();
    double *prod = real_[2].get();
    double s2 = 0.0;
    for (std::size_t i = 0; i < nreal_; ++i) {
      s2 = std::max(s2, a1[i] * a1[i] + a2[i] * a2[i]);
      prod[i] = a1[i] * b1[i] + a2[i] * b2[i];
    }
    plan_->forward_aligned(prod, spec_[0].get());

    if (out.grid_size() != m_) {
      out = SpectralField(m_);
    }
    auto o = out.raw_data();
    const double norm = 1.0 / (static_cast<double>(m_) * m_);
    const cplx *f = spec_[0].get();
    for (std::size_t i = 0; i < nspec_; ++i) {
      o[i] = keep_[i] ? f[i] * norm : cplx{};
    }
    out.zero_mean();
    return std::sqrt(s2);
  }

private:
  std::size_t idx(int r, int c) const { return static_cast<std::size_t>(r) * cols_ + c; }

  int m_, cols_;
  std::size_t nspec_, nreal_;
  const fft::Plan2D *plan_;
  fft::AlignedBuffer<cplx> spec_[4];
  fft::AlignedBuffer<double> real_[4];
  std::vector<char> keep_;
};

/// Direct Fourier double sum of u . grad(xi) over the non-Nyquist lattice,
/// without aliasing. Output modes outside the grid are dropped.
inline SpectralField convolution_oracle(const VelocityField &u, const SpectralField &xi) {
  xi.check_same(u.u1);
  xi.check_same(u.u2);
  const int m = xi.grid_size();
  if (m > 32) {
    throw std::invalid_argument("convolution_oracle: grid size " + std::to_string(m) +
                                " exceeds 32");
  }
  const int h = m / 2 - 1;
  SpectralField out(m);
  std::vector<cplx> acc(static_cast<std::size_t>(2 * h + 1) * (2 * h + 1));
  auto slot = [&](int k1, int k2) -> cplx & {
    return acc[static_cast<std::size_t>(k1 + h) * (2 * h + 1) + (k2 + h)];
  };
  for (int p1 = -h; p1 <= h; ++p1) {
    for (int p2 = -h; p2 <= h; ++p2) {
      const cplx a1 = u.u1.at({p1, p2});
      const cplx a2 = u.u2.at({p1, p2});
      if (a1 == cplx{} && a2 == cplx{}) {
        continue;
      }
      for (int q1 = -h; q1 <= h; ++q1) {
        for (int q2 = -h; q2 <= h; ++q2) {
          const int k1 = p1 + q1, k2 = p2 + q2;
          if (std::abs(k1) > h || std::abs(k2) > h) {
            continue;
          }
          const cplx xq = xi.at({q1, q2});
          if (xq == cplx{}) {
            continue;
          }
          slot(k1, k2) += (a1 * static_cast<double>(q1) + a2 * static_cast<double>(q2)) *
                          cplx(0.0, two_pi) * xq;
        }
      }
    }
  }
  for (int k1 = -h; k1 <= h; ++k1) {
    for (int k2 = 0; k2 <= h; ++k2) {
      out.raw(out.row_of(k1), k2) = slot(k1, k2);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// binary snapshots: uint64 M, then the full M x M lattice row-major
// (row = k1, column = k2, both in FFT index order) as (re, im) pairs.
// Everything little-endian, values as IEEE-754 binary64.

namespace detail {
inline void put_u64(std::ostream &os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<unsigned char>(v >> (8 * i));
  }
  os.write(reinterpret_cast<const char *>(b), 8);
}
inline std::uint64_t get_u64(std::istream &is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char *>(b), 8)) {
    throw std::runtime_error("snapshot: truncated stream");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  }
  return v;
}
inline void put_f64(std::ostream &os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }
inline double get_f64(std::istream &is) { return std::bit_cast<double>(get_u64(is)); }
} // namespace detail

inline void write_snapshot(std::ostream &os, const SpectralField &f) {
  const int m = f.grid_size();
  detail::put_u64(os, static_cast<std::uint64_t>(m));
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const cplx v =
          f.at({SpectralField::wavenumber(r, m), SpectralField::wavenumber(c, m)});
      detail::put_f64(os, v.real());
      detail::put_f64(os, v.imag());
    }
  }
}

inline SpectralField read_snapshot(std::istream &is) {
  const auto m64 = detail::get_u64(is);
  if (m64 > 1u << 16) {
    throw std::runtime_error("snapshot: implausible grid size");
  }
  const int m = static_cast<int>(m64);
  SpectralField f(m);
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) {
      const double re = detail::get_f64(is);
      const double im = detail::get_f64(is);
      if (c <= m / 2) {
        f.raw(r, c) = cplx(re, im);
      }
    }
  }
  return f;
}

} // namespace oumix
