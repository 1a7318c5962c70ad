#include "driveby/spectral.hpp"

#include "driveby/error.hpp"
#include "driveby/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace driveby {

void MultiChannelRecord::validate() const {
  if (channels.empty()) throw Error(ErrorKind::InvalidArgument, "record '" + label + "' has no channels");
  if (!(sample_rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "record '" + label + "': sample_rate must be > 0");
  const auto n = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != n) throw Error(ErrorKind::InvalidArgument, "record '" + label + "': ragged channels");
  }
  if (n < 2) throw Error(ErrorKind::RecordTooShort, "record '" + label + "' needs at least two samples");
}

std::size_t default_segment_length(const MultiChannelRecord& record) {
  const auto n = record.samples_per_channel();
  if (record.duration() <= kFullRecordSegmentLimit) return n;
  return std::min(n, static_cast<std::size_t>(std::llround(kLongRecordSegment * record.sample_rate)));
}

namespace {

std::size_t transform_length(double sample_rate, double target_df) {
  if (!(target_df > 0.0)) throw Error(ErrorKind::InvalidArgument, "target_df must be > 0");
  const double ratio = sample_rate / target_df;
  const auto n = static_cast<std::size_t>(std::llround(ratio));
  if (n < 2 || std::abs(ratio - static_cast<double>(n)) > 1e-6 * ratio) {
    throw Error(ErrorKind::InvalidArgument, "sample_rate / target_df must be an integer >= 2");
  }
  return n;
}

std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

}  // namespace

CpsdStack compute_cpsd(const MultiChannelRecord& record, std::size_t seg_len, double overlap,
                       double target_df) {
  record.validate();
  const std::size_t n_t = record.samples_per_channel();
  if (seg_len < 2 || seg_len > n_t) {
    throw Error(ErrorKind::RecordTooShort, "record '" + record.label + "' has " + std::to_string(n_t) +
                                               " samples, segment needs " + std::to_string(seg_len));
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error(ErrorKind::InvalidOverlap, "overlap must lie in [0, 1)");

  const std::size_t nfft = transform_length(record.sample_rate, target_df);
  const std::size_t bins = nfft / 2 + 1;
  const std::size_t m = record.channel_count();
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(seg_len) * (1.0 - overlap))));

  const auto window = periodic_hann(seg_len);
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  RealFft fft(nfft);
  std::vector<double> folded(nfft);
  std::vector<std::vector<std::complex<double>>> spectra(m, std::vector<std::complex<double>>(bins));

  CpsdStack out;
  out.df = target_df;
  out.freq.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) out.freq[k] = static_cast<double>(k) * target_df;
  out.matrices.assign(bins, Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)));

  std::size_t segments = 0;
  for (std::size_t start = 0; start + seg_len <= n_t; start += step) {
    ++segments;
    for (std::size_t c = 0; c < m; ++c) {
      const double* x = record.channels[c].data() + start;
      double mean = 0.0;
      for (std::size_t i = 0; i < seg_len; ++i) mean += x[i];
      mean /= static_cast<double>(seg_len);
      std::fill(folded.begin(), folded.end(), 0.0);
      for (std::size_t i = 0; i < seg_len; ++i) folded[i % nfft] += (x[i] - mean) * window[i];
      fft.forward(folded, spectra[c]);
    }
    for (std::size_t k = 0; k < bins; ++k) {
      auto& s = out.matrices[k];
      for (std::size_t i = 0; i < m; ++i) {
        const auto xi = std::conj(spectra[i][k]);
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += std::norm(spectra[i][k]);
        for (std::size_t j = i + 1; j < m; ++j) {
          s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += xi * spectra[j][k];
        }
      }
    }
  }

  const double base = 1.0 / (record.sample_rate * window_power * static_cast<double>(segments));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool unpaired = k == 0 || (nfft % 2 == 0 && k == bins - 1);
    const double scale = unpaired ? base : 2.0 * base;
    auto& s = out.matrices[k];
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      s(i, i) = std::complex<double>(s(i, i).real() * scale, 0.0);
      for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
        s(i, j) *= scale;
        s(j, i) = std::conj(s(i, j));
      }
    }
  }
  return out;
}

CpsdStack compute_cpsd(const MultiChannelRecord& record, const WelchOptions& options) {
  const std::size_t seg = options.seg_len ? options.seg_len : default_segment_length(record);
  return compute_cpsd(record, seg, options.overlap, options.target_df);
}

namespace {

void accumulate(CpsdStack& acc, const CpsdStack& other) {
  if (other.bins() != acc.bins() || other.channels() != acc.channels() ||
      std::abs(other.df - acc.df) > 1e-12 * acc.df) {
    throw Error(ErrorKind::GridMismatch, "CPSD stacks do not share a frequency grid");
  }
  for (std::size_t k = 0; k < acc.bins(); ++k) acc.matrices[k] += other.matrices[k];
}

void scale(CpsdStack& acc, std::size_t count) {
  const double inv = 1.0 / static_cast<double>(count);
  for (auto& mtx : acc.matrices) mtx *= inv;
}

}  // namespace

CpsdStack pool_cpsd(std::span<const CpsdStack> stacks) {
  if (stacks.empty()) throw Error(ErrorKind::InvalidArgument, "pool_cpsd: no stacks");
  CpsdStack out = stacks.front();
  for (std::size_t s = 1; s < stacks.size(); ++s) accumulate(out, stacks[s]);
  scale(out, stacks.size());
  return out;
}

namespace {

void check_hermitian(const Eigen::MatrixXcd& s, std::size_t bin) {
  const double scale = s.cwiseAbs().maxCoeff();
  if (scale == 0.0) return;
  const double residual = (s - s.adjoint()).cwiseAbs().maxCoeff();
  if (residual > 1e-9 * scale) {
    throw Error(ErrorKind::NonHermitianInput, "bin " + std::to_string(bin) + " is not Hermitian (residual " +
                                                  std::to_string(residual / scale) + ")");
  }
}

}  // namespace

SingularSpectrum svd_sweep(const CpsdStack& cpsd) {
  SingularSpectrum out;
  out.freq = cpsd.freq;
  out.df = cpsd.df;
  out.values.resize(cpsd.bins());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver;
  for (std::size_t k = 0; k < cpsd.bins(); ++k) {
    const auto& s = cpsd.matrices[k];
    check_hermitian(s, k);
    if (s.rows() == 1) {
      out.values[k] = std::abs(s(0, 0).real());
      continue;
    }
    solver.compute(s, Eigen::EigenvaluesOnly);
    out.values[k] = solver.eigenvalues().cwiseAbs().maxCoeff();
  }
  return out;
}

BinDecomposition decompose_bin(const Eigen::MatrixXcd& bin) {
  check_hermitian(bin, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(bin);
  const Eigen::Index m = bin.rows();
  BinDecomposition out;
  out.u.resize(m, m);
  out.sigma.resize(m);
  // Eigen returns ascending eigenvalues.
  for (Eigen::Index i = 0; i < m; ++i) {
    out.sigma(i) = std::abs(solver.eigenvalues()(m - 1 - i));
    out.u.col(i) = solver.eigenvectors().col(m - 1 - i);
  }
  return out;
}

PeakReport pick_peak(const SingularSpectrum& spec, std::pair<double, double> band, double min_prominence) {
  if (spec.values.size() != spec.freq.size() || spec.values.empty()) {
    throw Error(ErrorKind::InvalidArgument, "pick_peak: malformed spectrum");
  }
  if (!(min_prominence >= 0.0 && min_prominence < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "pick_peak: min_prominence must lie in [0, 1)");
  }
  const double tol = 1e-6 * (spec.df > 0.0 ? spec.df : 1.0);
  if (!(band.first < band.second) || band.first < spec.freq.front() - tol || band.second > spec.freq.back() + tol) {
    throw Error(ErrorKind::BandOutsideGrid, "pick_peak: band outside the frequency grid");
  }
  const auto& f = spec.freq;
  const auto& v = spec.values;
  const auto lo = static_cast<std::size_t>(std::lower_bound(f.begin(), f.end(), band.first - tol) - f.begin());
  const auto hi_end = static_cast<std::size_t>(std::upper_bound(f.begin(), f.end(), band.second + tol) - f.begin());
  if (hi_end <= lo + 2) throw Error(ErrorKind::NoPeakInBand, "band holds fewer than three bins");
  const std::size_t hi = hi_end - 1;

  const double band_max = *std::max_element(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                            v.begin() + static_cast<std::ptrdiff_t>(hi_end));
  const double floor = min_prominence * band_max;

  struct Candidate {
    std::size_t index;
    double prominence;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    if (!(v[i] > v[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 <= hi && v[j + 1] == v[i]) ++j;
    if (j + 1 > hi || !(v[j + 1] < v[i])) {
      i = j;
      continue;
    }
    double left_min = v[i];
    for (std::size_t a = i; a-- > lo;) {
      if (v[a] > v[i]) break;
      left_min = std::min(left_min, v[a]);
    }
    double right_min = v[i];
    for (std::size_t b = j + 1; b <= hi; ++b) {
      if (v[b] > v[i]) break;
      right_min = std::min(right_min, v[b]);
    }
    const double prominence = v[i] - std::max(left_min, right_min);
    if (prominence >= floor && prominence > 0.0) candidates.push_back({i, prominence});
    i = j;
  }
  if (candidates.empty()) {
    throw Error(ErrorKind::NoPeakInBand, "no local maximum in [" + std::to_string(band.first) + ", " +
                                             std::to_string(band.second) + "] Hz clears the prominence floor");
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const Candidate& a, const Candidate& b) { return v[a.index] > v[b.index]; });

  PeakReport report;
  report.search_band = band;
  report.peak_freq = f[candidates.front().index];
  report.peak_value = v[candidates.front().index];
  report.peak_prominence = candidates.front().prominence;
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    report.secondary_peaks.push_back({f[candidates[c].index], v[candidates[c].index]});
  }
  return report;
}

SingularSpectrum pooled_singular_spectrum(std::span<const MultiChannelRecord> records, const WelchOptions& options) {
  if (records.empty()) throw Error(ErrorKind::InvalidArgument, "no records to pool");
  CpsdStack acc = compute_cpsd(records.front(), options);
  for (std::size_t r = 1; r < records.size(); ++r) accumulate(acc, compute_cpsd(records[r], options));
  scale(acc, records.size());
  return svd_sweep(acc);
}

PeakReport identify_motor_frequency(std::span<const MultiChannelRecord> records, const WelchOptions& options) {
  return pick_peak(pooled_singular_spectrum(records, options), kMotorBand, kMotorMinProminence);
}

}  // namespace driveby
