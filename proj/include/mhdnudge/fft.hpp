#pragma once

// Thin FFTW wrapper: one r2c/c2r plan pair per grid size, created once under
// a lock and executed through the new-array interface so that concurrent
// sessions never share buffers.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>

namespace mhdnudge::detail {

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t count) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * count)));
}

class PlanPair {
 public:
  explicit PlanPair(int n) : n_(n) {
    const std::size_t nreal = static_cast<std::size_t>(n) * n;
    const std::size_t ncplx = static_cast<std::size_t>(n) * (n / 2 + 1);
    auto r = fftw_alloc<double>(nreal);
    auto c = fftw_alloc<fftw_complex>(ncplx);
    // FFTW_ESTIMATE keeps plan selection independent of timing, which is
    // what makes repeated runs bitwise reproducible.
    forward_ = fftw_plan_dft_r2c_2d(n, n, r.get(), c.get(), FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_2d(n, n, c.get(), r.get(), FFTW_ESTIMATE);
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;
  ~PlanPair() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }

  fftw_plan forward() const { return forward_; }
  fftw_plan inverse() const { return inverse_; }
  int n() const { return n_; }

 private:
  int n_;
  fftw_plan forward_{};
  fftw_plan inverse_{};
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline const PlanPair& plans_for(int n) {
  static std::map<int, std::unique_ptr<PlanPair>> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<PlanPair>(n);
  return *slot;
}

// Per-thread aligned scratch buffers, one pair per grid size.
struct Scratch {
  FftwBuffer<double> real;
  FftwBuffer<fftw_complex> spectral;
};

inline Scratch& scratch_for(int n) {
  thread_local std::map<int, Scratch> buffers;
  auto it = buffers.find(n);
  if (it == buffers.end()) {
    Scratch s{fftw_alloc<double>(static_cast<std::size_t>(n) * n),
              fftw_alloc<fftw_complex>(static_cast<std::size_t>(n) * (n / 2 + 1))};
    it = buffers.emplace(n, std::move(s)).first;
  }
  return it->second;
}

// Unnormalised r2c: out[k] = sum_x in[x] e^{-2 pi i k.x}.
inline void r2c(int n, std::span<const double> in, std::span<std::complex<double>> out) {
  const auto& plans = plans_for(n);
  auto& s = scratch_for(n);
  std::copy(in.begin(), in.end(), s.real.get());
  fftw_execute_dft_r2c(plans.forward(), s.real.get(), s.spectral.get());
  const auto* src = reinterpret_cast<const std::complex<double>*>(s.spectral.get());
  std::copy(src, src + out.size(), out.begin());
}

// Unnormalised c2r: out[x] = sum_k in[k] e^{+2 pi i k.x} over the full
// Hermitian spectrum implied by the half-plane input.
inline void c2r(int n, std::span<const std::complex<double>> in, std::span<double> out) {
  const auto& plans = plans_for(n);
  auto& s = scratch_for(n);
  auto* dst = reinterpret_cast<std::complex<double>*>(s.spectral.get());
  std::copy(in.begin(), in.end(), dst);
  fftw_execute_dft_c2r(plans.inverse(), s.spectral.get(), s.real.get());
  std::copy(s.real.get(), s.real.get() + out.size(), out.begin());
}

}  // namespace mhdnudge::detail
