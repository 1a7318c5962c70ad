#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace driveby {

// Time-domain acceleration signals from m sensors at one sample rate.
// channels[c][t] is channel c at sample t (m/s^2).
struct MultiChannelRecord {
  std::string label;
  double sample_rate = 0.0;
  std::vector<std::vector<double>> channels;

  std::size_t channel_count() const noexcept { return channels.size(); }
  std::size_t samples_per_channel() const noexcept {
    return channels.empty() ? 0 : channels.front().size();
  }
  double duration() const noexcept {
    return sample_rate > 0.0 ? static_cast<double>(samples_per_channel()) / sample_rate : 0.0;
  }

  // Throws InvalidArgument unless channels are equal-length, n_t >= 2 and fs > 0.
  void validate() const;
};

// One-sided cross-power spectral density matrices on a uniform grid.
struct CpsdStack {
  std::vector<double> freq;
  double df = 0.0;
  std::vector<Eigen::MatrixXcd> matrices;

  std::size_t bins() const noexcept { return matrices.size(); }
  std::size_t channels() const noexcept {
    return matrices.empty() ? 0 : static_cast<std::size_t>(matrices.front().rows());
  }
};

// First singular value of the CPSD per frequency bin.
struct SingularSpectrum {
  std::vector<double> freq;
  std::vector<double> values;
  double df = 0.0;
};

struct SpectralPeak {
  double freq = 0.0;
  double value = 0.0;
};

struct PeakReport {
  double peak_freq = 0.0;
  double peak_value = 0.0;
  double peak_prominence = 0.0;
  std::vector<SpectralPeak> secondary_peaks;  // descending by value
  std::pair<double, double> search_band{0.0, 0.0};
};

struct WelchOptions {
  std::size_t seg_len = 0;  // 0: default_segment_length(record)
  double overlap = 0.5;
  double target_df = 0.01;
};

inline constexpr double kDefaultTargetDf = 0.01;
inline constexpr double kFullRecordSegmentLimit = 150.0;  // s
inline constexpr double kLongRecordSegment = 60.0;        // s

// Full record up to 150 s, otherwise 60 s segments.
std::size_t default_segment_length(const MultiChannelRecord& record);

// Welch-averaged CPSD with mean-removed, periodic-Hann-windowed segments.
// Segments are evaluated on the frequency grid k * target_df; when the segment
// is shorter than sample_rate / target_df this is zero padding, when it is
// longer the windowed segment is folded modulo the transform length, which
// samples its DTFT exactly on the same grid. S_ij = conj(X_i) X_j, scaled as a
// one-sided density so that sum(S_ii) * df equals the channel variance.
CpsdStack compute_cpsd(const MultiChannelRecord& record, std::size_t seg_len, double overlap,
                       double target_df);
CpsdStack compute_cpsd(const MultiChannelRecord& record, const WelchOptions& options = {});

// Bin-wise mean of several stacks on a common grid (GridMismatch otherwise).
CpsdStack pool_cpsd(std::span<const CpsdStack> stacks);

// Largest singular value per bin. Rejects bins whose Hermitian residual exceeds
// 1e-9 relative to the bin's largest entry.
SingularSpectrum svd_sweep(const CpsdStack& cpsd);

struct BinDecomposition {
  Eigen::MatrixXcd u;      // columns: singular vectors, descending order
  Eigen::VectorXd sigma;   // descending
};

// Full factorization of one Hermitian PSD bin (S = U diag(sigma) U^H).
BinDecomposition decompose_bin(const Eigen::MatrixXcd& bin);

// Peak of the largest local maximum in [band.first, band.second] whose
// topographic prominence (height above the higher of its two bases inside the
// band) reaches min_prominence times the band maximum. Ties go to the lower
// frequency.
PeakReport pick_peak(const SingularSpectrum& spec, std::pair<double, double> band,
                     double min_prominence);

inline constexpr std::pair<double, double> kMotorBand{13.0, 17.0};
inline constexpr double kMotorMinProminence = 0.9;

// Pooled FDD over driving-test records, peak in the motor band.
PeakReport identify_motor_frequency(std::span<const MultiChannelRecord> records,
                                    const WelchOptions& options = {});

// compute_cpsd over every record, pool_cpsd, svd_sweep.
SingularSpectrum pooled_singular_spectrum(std::span<const MultiChannelRecord> records,
                                          const WelchOptions& options = {});

}  // namespace driveby
