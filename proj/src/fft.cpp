#include "driveby/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace driveby {

namespace {
// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 1) throw std::invalid_argument("RealFft: n must be positive");
  real_ = fftw_alloc_real(n);
  spectrum_ = fftw_alloc_complex(n / 2 + 1);
  std::lock_guard lock(planner_mutex());
  auto* spec = static_cast<fftw_complex*>(spectrum_);
  fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec, FFTW_ESTIMATE);
  inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() { release(); }

RealFft::RealFft(RealFft&& other) noexcept
    : n_(std::exchange(other.n_, 0)),
      real_(std::exchange(other.real_, nullptr)),
      spectrum_(std::exchange(other.spectrum_, nullptr)),
      fwd_(std::exchange(other.fwd_, nullptr)),
      inv_(std::exchange(other.inv_, nullptr)) {}

RealFft& RealFft::operator=(RealFft&& other) noexcept {
  if (this != &other) {
    release();
    n_ = std::exchange(other.n_, 0);
    real_ = std::exchange(other.real_, nullptr);
    spectrum_ = std::exchange(other.spectrum_, nullptr);
    fwd_ = std::exchange(other.fwd_, nullptr);
    inv_ = std::exchange(other.inv_, nullptr);
  }
  return *this;
}

void RealFft::release() noexcept {
  if (fwd_ || inv_) {
    std::lock_guard lock(planner_mutex());
    if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
  }
  if (real_) fftw_free(real_);
  if (spectrum_) fftw_free(spectrum_);
  fwd_ = inv_ = nullptr;
  real_ = nullptr;
  spectrum_ = nullptr;
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() > n_ || out.size() != bins()) throw std::invalid_argument("RealFft::forward: size");
  std::copy(in.begin(), in.end(), real_);
  std::fill(real_ + in.size(), real_ + n_, 0.0);
  fftw_execute(static_cast<fftw_plan>(fwd_));
  const auto* spec = reinterpret_cast<const std::complex<double>*>(spectrum_);
  std::copy(spec, spec + bins(), out.begin());
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != bins() || out.size() != n_) throw std::invalid_argument("RealFft::inverse: size");
  auto* spec = reinterpret_cast<std::complex<double>*>(spectrum_);
  std::copy(in.begin(), in.end(), spec);
  fftw_execute(static_cast<fftw_plan>(inv_));
  std::copy(real_, real_ + n_, out.begin());
}

std::vector<std::complex<double>> rfft(std::span<const double> in, std::size_t n) {
  RealFft fft(n);
  std::vector<std::complex<double>> out(fft.bins());
  fft.forward(in, out);
  return out;
}

}  // namespace driveby
