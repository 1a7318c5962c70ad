#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace driveby {

// Real-input FFT of a fixed length backed by FFTW. A plan is created once per
// instance and reused; inputs are copied into aligned scratch buffers so the
// same algorithm runs on every call (bit-reproducible output).
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&& other) noexcept;
  RealFft& operator=(RealFft&& other) noexcept;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  // Forward transform; input shorter than n is zero-padded. out has bins() entries.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Unnormalized inverse (result scaled by n).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  void release() noexcept;

  std::size_t n_ = 0;
  double* real_ = nullptr;
  void* spectrum_ = nullptr;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

std::vector<std::complex<double>> rfft(std::span<const double> in, std::size_t n);

}  // namespace driveby
