#include "driveby/preprocess.hpp"

#include "driveby/error.hpp"
#include "driveby/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace driveby {

SingularSpectrum band_crop(const SingularSpectrum& spec, double lo, double hi) {
  if (spec.freq.empty() || spec.freq.size() != spec.values.size()) {
    throw Error(ErrorKind::BandOutsideGrid, "band_crop: empty or malformed spectrum");
  }
  const double step = spec.df > 0.0 ? spec.df : 1.0;
  const double tol = 1e-6 * step;
  if (!(lo < hi) || lo < spec.freq.front() - tol || hi > spec.freq.back() + step + tol) {
    throw Error(ErrorKind::BandOutsideGrid, "band [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                                ") lies outside the grid");
  }
  const auto& f = spec.freq;
  const auto first = std::lower_bound(f.begin(), f.end(), lo - tol) - f.begin();
  const auto last = std::lower_bound(f.begin(), f.end(), hi - tol) - f.begin();
  if (last <= first) throw Error(ErrorKind::BandOutsideGrid, "band selects no bins");
  SingularSpectrum out;
  out.df = spec.df;
  out.freq.assign(f.begin() + first, f.begin() + last);
  out.values.assign(spec.values.begin() + first, spec.values.begin() + last);
  return out;
}

std::vector<AveragedSet> average_random_sets(std::span<const SingularSpectrum> specs, std::size_t set_size,
                                             std::size_t n_out, std::uint64_t seed) {
  if (set_size == 0) throw Error(ErrorKind::InvalidArgument, "set_size must be >= 1");
  if (set_size > specs.size()) {
    throw Error(ErrorKind::SetSizeTooLarge, "set_size " + std::to_string(set_size) + " exceeds " +
                                                std::to_string(specs.size()) + " spectra");
  }
  const auto& ref = specs.front();
  for (const auto& s : specs) {
    bool same = s.values.size() == ref.values.size() && s.freq.size() == ref.freq.size();
    if (same && !s.freq.empty()) {
      same = std::abs(s.freq.front() - ref.freq.front()) <= 1e-9 * std::max(1.0, std::abs(ref.freq.front())) &&
             std::abs(s.df - ref.df) <= 1e-12 * std::max(1.0, ref.df);
    }
    if (!same) throw Error(ErrorKind::GridMismatch, "spectra do not share a frequency grid");
  }

  Rng rng(seed);
  std::vector<std::size_t> pool(specs.size());
  std::vector<AveragedSet> out;
  out.reserve(n_out);
  const double inv = 1.0 / static_cast<double>(set_size);
  for (std::size_t o = 0; o < n_out; ++o) {
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // Partial Fisher-Yates: the first set_size slots become the draw.
    for (std::size_t i = 0; i < set_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    AveragedSet set;
    set.members.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(set_size));
    set.spectrum.freq = ref.freq;
    set.spectrum.df = ref.df;
    set.spectrum.values.assign(ref.values.size(), 0.0);
    for (std::size_t idx : set.members) {
      const auto& v = specs[idx].values;
      for (std::size_t k = 0; k < v.size(); ++k) set.spectrum.values[k] += v[k];
    }
    for (double& x : set.spectrum.values) x *= inv;
    out.push_back(std::move(set));
  }
  return out;
}

SpectralSample minmax_normalize(const SingularSpectrum& spec) {
  if (spec.values.empty()) throw Error(ErrorKind::DegenerateRange, "empty spectrum");
  const auto [mn, mx] = std::minmax_element(spec.values.begin(), spec.values.end());
  const double lo = *mn;
  const double range = *mx - lo;
  if (!(range > 0.0) || !std::isfinite(range)) {
    throw Error(ErrorKind::DegenerateRange, "spectrum is constant; crossing unusable");
  }
  SpectralSample out;
  out.freq = spec.freq;
  out.values.resize(spec.values.size());
  for (std::size_t k = 0; k < spec.values.size(); ++k) out.values[k] = (spec.values[k] - lo) / range;
  out.normalized = true;
  return out;
}

ObservationSequence assemble_sequence(std::vector<SpectralSample> samples, std::optional<std::size_t> truth_change_index) {
  if (samples.empty()) throw Error(ErrorKind::HeterogeneousSamples, "no samples to assemble");
  const std::size_t m = samples.front().values.size();
  for (const auto& s : samples) {
    if (!s.normalized || s.values.size() != m || m == 0) {
      throw Error(ErrorKind::HeterogeneousSamples, "samples must be normalized and of equal length");
    }
  }
  if (truth_change_index && *truth_change_index > samples.size()) {
    throw Error(ErrorKind::InvalidArgument, "truth_change_index beyond the sample count");
  }
  ObservationSequence seq;
  seq.flat.reserve(m * samples.size());
  for (const auto& s : samples) {
    seq.boundaries.push_back(seq.flat.size());
    seq.flat.insert(seq.flat.end(), s.values.begin(), s.values.end());
  }
  seq.samples = std::move(samples);
  seq.truth_change_index = truth_change_index;
  return seq;
}

std::vector<std::vector<double>> split_sequence(const ObservationSequence& seq) {
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < seq.boundaries.size(); ++b) {
    const auto start = seq.boundaries[b];
    const auto end = b + 1 < seq.boundaries.size() ? seq.boundaries[b + 1] : seq.flat.size();
    out.emplace_back(seq.flat.begin() + static_cast<std::ptrdiff_t>(start),
                     seq.flat.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace driveby
