#pragma once

#include "driveby/spectral.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace driveby {

inline constexpr std::size_t kSpectralLines = 900;
inline constexpr double kCropLow = 1.0;    // Hz
inline constexpr double kCropHigh = 10.0;  // Hz

// Cropped, averaged, min-max normalized first singular values.
struct SpectralSample {
  std::vector<double> values;
  std::vector<double> freq;
  std::vector<std::string> source_ids;
  bool normalized = false;
};

// Concatenation of n equally long spectral samples.
struct ObservationSequence {
  std::vector<SpectralSample> samples;
  std::vector<double> flat;
  std::vector<std::size_t> boundaries;          // start of each sample in flat
  std::optional<std::size_t> truth_change_index;  // sample index of the first changed sample

  std::size_t sample_length() const noexcept { return samples.empty() ? 0 : samples.front().values.size(); }
  std::optional<std::size_t> truth_change_flat_index() const {
    if (!truth_change_index) return std::nullopt;
    return *truth_change_index * sample_length();
  }
};

// Half-open index selection lo <= f < hi on the spectrum's own grid.
SingularSpectrum band_crop(const SingularSpectrum& spec, double lo, double hi);

struct AveragedSet {
  SingularSpectrum spectrum;
  std::vector<std::size_t> members;  // indices into the input list
};

// n_out pointwise means of set_size spectra. Members of one set are drawn
// without replacement; sets are drawn independently of each other.
std::vector<AveragedSet> average_random_sets(std::span<const SingularSpectrum> specs, std::size_t set_size,
                                             std::size_t n_out, std::uint64_t seed);

// (v - min) / (max - min). DegenerateRange for constant input.
SpectralSample minmax_normalize(const SingularSpectrum& spec);

ObservationSequence assemble_sequence(std::vector<SpectralSample> samples,
                                      std::optional<std::size_t> truth_change_index = std::nullopt);

// Inverse of assemble_sequence on the flat vector.
std::vector<std::vector<double>> split_sequence(const ObservationSequence& seq);

}  // namespace driveby
