#pragma once

// Real <-> half-complex 2D transforms on an M x M periodic grid, backed by FFTW.
//
// Plans are created once per grid size with FFTW_ESTIMATE so that the chosen
// codelets do not depend on timing; this is what makes repeated runs
// bit-identical. The general entry points accept any buffer (FFTW_UNALIGNED);
// the *_aligned ones require fftw_malloc storage and are faster.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <span>
#include <stdexcept>
#include <vector>

namespace oumix::fft {

struct FftwFree {
  void operator()(void *p) const { fftw_free(p); }
};

template <class T> using AlignedBuffer = std::unique_ptr<T[], FftwFree>;

/// Zero-filled fftw_malloc storage for n elements.
template <class T> AlignedBuffer<T> make_aligned(std::size_t n) {
  auto *p = static_cast<T *>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)));
  if (p == nullptr) {
    throw std::bad_alloc();
  }
  std::fill_n(p, n, T{});
  return AlignedBuffer<T>(p);
}

class Plan2D {
public:
  explicit Plan2D(int m) : m_(m) {
    // FFTW planning is not thread-safe; callers go through plan_for().
    std::vector<double> real(static_cast<std::size_t>(m) * m);
    std::vector<std::complex<double>> spec(static_cast<std::size_t>(m) * (m / 2 + 1));
    auto *r = real.data();
    auto *c = reinterpret_cast<fftw_complex *>(spec.data());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward_ = fftw_plan_dft_r2c_2d(m, m, r, c, flags);
    inverse_ = fftw_plan_dft_c2r_2d(m, m, c, r, flags | FFTW_DESTROY_INPUT);

    auto ra = make_aligned<double>(real.size());
    auto ca = make_aligned<std::complex<double>>(spec.size());
    auto *cca = reinterpret_cast<fftw_complex *>(ca.get());
    forward_aligned_ = fftw_plan_dft_r2c_2d(m, m, ra.get(), cca, FFTW_ESTIMATE);
    inverse_aligned_ =
        fftw_plan_dft_c2r_2d(m, m, cca, ra.get(), FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    if (forward_ == nullptr || inverse_ == nullptr || forward_aligned_ == nullptr ||
        inverse_aligned_ == nullptr) {
      throw std::runtime_error("fftw: plan creation failed");
    }
  }
  Plan2D(const Plan2D &) = delete;
  Plan2D &operator=(const Plan2D &) = delete;
  ~Plan2D() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_destroy_plan(forward_aligned_);
    fftw_destroy_plan(inverse_aligned_);
  }

  int size() const { return m_; }

  /// Unnormalized r2c: out_k = sum_x in_x e^{-2 pi i k.x}.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    // r2c leaves its input intact with the default flags, the cast is safe.
    fftw_execute_dft_r2c(forward_, const_cast<double *>(in.data()),
                         reinterpret_cast<fftw_complex *>(out.data()));
  }

  /// Unnormalized c2r. Destroys `in`.
  void inverse(std::span<std::complex<double>> in, std::span<double> out) const {
    fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex *>(in.data()), out.data());
  }

  /// As forward(), on fftw_malloc buffers of M*M and M*(M/2+1) elements.
  void forward_aligned(const double *in, std::complex<double> *out) const {
    require_aligned(in, out);
    fftw_execute_dft_r2c(forward_aligned_, const_cast<double *>(in),
                         reinterpret_cast<fftw_complex *>(out));
  }

  /// As inverse(), on fftw_malloc buffers. Destroys `in`.
  void inverse_aligned(std::complex<double> *in, double *out) const {
    require_aligned(out, in);
    fftw_execute_dft_c2r(inverse_aligned_, reinterpret_cast<fftw_complex *>(in), out);
  }

private:
  static void require_aligned(const double *r, const std::complex<double> *c) {
    if (fftw_alignment_of(const_cast<double *>(r)) != 0 ||
        fftw_alignment_of(reinterpret_cast<double *>(const_cast<std::complex<double> *>(c))) != 0) {
      throw std::invalid_argument("fftw: buffer is not fftw_malloc aligned");
    }
  }

  int m_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
  fftw_plan forward_aligned_ = nullptr;
  fftw_plan inverse_aligned_ = nullptr;
};

inline const Plan2D &plan_for(int m) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<Plan2D>> cache;
  std::lock_guard lock(mutex);
  auto &slot = cache[m];
  if (!slot) {
    slot = std::make_unique<Plan2D>(m);
  }
  return *slot;
}

} // namespace oumix::fft
