#include "driveby/matrix_profile.hpp"

#include "driveby/error.hpp"
#include "driveby/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <thread>

namespace driveby {

namespace {

constexpr double kFlatTolerance = 1e-12;

bool is_flat(double sigma, double mean) { return sigma <= kFlatTolerance * std::max(1.0, std::abs(mean)); }

struct WindowStats {
  std::vector<double> mean;
  std::vector<double> sigma;  // population standard deviation
  std::vector<char> flat;
};

// Direct two-pass statistics per window; O(p l) but free of the cancellation
// that running sums suffer on long sequences.
WindowStats window_stats(std::span<const double> x, std::size_t l) {
  const std::size_t n = x.size() - l + 1;
  WindowStats s;
  s.mean.resize(n);
  s.sigma.resize(n);
  s.flat.resize(n);
  const double inv_l = 1.0 / static_cast<double>(l);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < l; ++k) sum += x[i + k];
    const double mu = sum * inv_l;
    double ss = 0.0;
    for (std::size_t k = 0; k < l; ++k) {
      const double d = x[i + k] - mu;
      ss += d * d;
    }
    s.mean[i] = mu;
    s.sigma[i] = std::sqrt(ss * inv_l);
    s.flat[i] = is_flat(s.sigma[i], mu) ? 1 : 0;
  }
  return s;
}

std::size_t smooth_size(std::size_t n) {
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t f : {2u, 3u, 5u, 7u}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

double distance_from_correlation(double rho, std::size_t l) {
  return std::sqrt(std::max(0.0, 2.0 * static_cast<double>(l) * (1.0 - rho)));
}

// Shared FFT of the sequence, reused across queries.
class MassContext {
 public:
  MassContext(std::span<const double> x, std::size_t l)
      : x_(x), l_(l), stats_(window_stats(x, l)), fft_(smooth_size(x.size())),
        seq_spectrum_(fft_.bins()), query_spectrum_(fft_.bins()), product_(fft_.bins()), conv_(fft_.size()),
        query_(l) {
    fft_.forward(x_, seq_spectrum_);
  }

  const WindowStats& stats() const { return stats_; }
  std::size_t count() const { return stats_.mean.size(); }

  void profile(std::size_t q, std::vector<double>& out) {
    const std::size_t n = count();
    out.resize(n);
    for (std::size_t k = 0; k < l_; ++k) query_[k] = x_[q + l_ - 1 - k];
    fft_.forward(query_, query_spectrum_);
    for (std::size_t k = 0; k < product_.size(); ++k) product_[k] = seq_spectrum_[k] * query_spectrum_[k];
    fft_.inverse(product_, conv_);
    const double inv_n = 1.0 / static_cast<double>(fft_.size());
    const double ld = static_cast<double>(l_);
    const double mu_q = stats_.mean[q];
    const double sd_q = stats_.sigma[q];
    for (std::size_t j = 0; j < n; ++j) {
      const bool fq = stats_.flat[q] != 0;
      const bool fj = stats_.flat[j] != 0;
      if (fq || fj) {
        out[j] = (fq && fj) ? 0.0 : std::sqrt(ld);
        continue;
      }
      const double qt = conv_[j + l_ - 1] * inv_n;
      const double rho = (qt - ld * mu_q * stats_.mean[j]) / (ld * sd_q * stats_.sigma[j]);
      out[j] = distance_from_correlation(rho, l_);
    }
  }

 private:
  std::span<const double> x_;
  std::size_t l_;
  WindowStats stats_;
  RealFft fft_;
  std::vector<std::complex<double>> seq_spectrum_;
  std::vector<std::complex<double>> query_spectrum_;
  std::vector<std::complex<double>> product_;
  std::vector<double> conv_;
  std::vector<double> query_;
};

void check_lengths(std::size_t p, std::size_t l) {
  if (l < 2 || l > p) {
    throw Error(ErrorKind::InvalidLength, "subsequence length " + std::to_string(l) + " invalid for p = " +
                                              std::to_string(p));
  }
}

// Lexicographic (distance, index) minimum: order-independent tie handling.
inline void offer(double d, std::size_t j, double& best, std::size_t& best_j) {
  if (d < best || (d == best && j < best_j)) {
    best = d;
    best_j = j;
  }
}

MpResult mass_profile(std::span<const double> x, std::size_t l, std::size_t r, unsigned threads) {
  const std::size_t n = x.size() - l + 1;
  MpResult out;
  out.profile.assign(n, std::numeric_limits<double>::infinity());
  out.index.assign(n, n);
  auto work = [&](std::size_t begin, std::size_t end) {
    MassContext ctx(x, l);
    std::vector<double> dp;
    for (std::size_t i = begin; i < end; ++i) {
      ctx.profile(i, dp);
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_j = n;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t gap = i > j ? i - j : j - i;
        if (gap > r) offer(dp[j], j, best, best_j);
      }
      out.profile[i] = best;
      out.index[i] = best_j;
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

struct DiagonalBest {
  std::vector<double> rho;
  std::vector<std::size_t> index;
};

// Pearson correlation per pair; flat windows get the correlation whose
// distance matches the zero-vector convention (0 for two flats, sqrt(l) for one).
template <bool kHasFlat>
void diagonal_range(std::span<const double> x, std::size_t l, const WindowStats& st,
                    const std::vector<double>& inv_norm, const std::vector<double>& dfv,
                    const std::vector<double>& dgv, std::size_t diag_begin, std::size_t diag_end, std::size_t diag_step,
                    DiagonalBest& best) {
  const std::size_t n = st.mean.size();
  auto take = [&](std::size_t a, std::size_t b, double rho) {
    // maximize rho with ties toward smaller partner
    if (rho > best.rho[a] || (rho == best.rho[a] && b < best.index[a])) {
      best.rho[a] = rho;
      best.index[a] = b;
    }
    if (rho > best.rho[b] || (rho == best.rho[b] && a < best.index[b])) {
      best.rho[b] = rho;
      best.index[b] = a;
    }
  };
  for (std::size_t diag = diag_begin; diag < diag_end; diag += diag_step) {
    double cov = 0.0;
    for (std::size_t k = 0; k < l; ++k) cov += (x[k] - st.mean[0]) * (x[diag + k] - st.mean[diag]);
    for (std::size_t i = 0; i + diag < n; ++i) {
      const std::size_t j = i + diag;
      if (i > 0) cov += dfv[i] * dgv[j] + dfv[j] * dgv[i];
      double rho;
      if constexpr (kHasFlat) {
        const bool fi = st.flat[i] != 0, fj = st.flat[j] != 0;
        rho = (fi || fj) ? ((fi && fj) ? 1.0 : 0.5) : cov * inv_norm[i] * inv_norm[j];
      } else {
        rho = cov * inv_norm[i] * inv_norm[j];
      }
      take(i, j, rho);
    }
  }
}

MpResult diagonal_profile(std::span<const double> x, std::size_t l, std::size_t r, unsigned threads) {
  const std::size_t n = x.size() - l + 1;
  const WindowStats st = window_stats(x, l);
  std::vector<double> inv_norm(n), dfv(n, 0.0), dgv(n, 0.0);
  bool has_flat = false;
  for (std::size_t i = 0; i < n; ++i) {
    has_flat = has_flat || st.flat[i];
    inv_norm[i] = st.flat[i] ? 0.0 : 1.0 / (st.sigma[i] * std::sqrt(static_cast<double>(l)));
  }
  for (std::size_t i = 1; i < n; ++i) {
    dfv[i] = 0.5 * (x[i + l - 1] - x[i - 1]);
    dgv[i] = (x[i + l - 1] - st.mean[i]) + (x[i - 1] - st.mean[i - 1]);
  }

  threads = std::max(1u, threads);
  std::vector<DiagonalBest> partial(threads);
  for (auto& b : partial) {
    b.rho.assign(n, -std::numeric_limits<double>::infinity());
    b.index.assign(n, n);
  }
  auto work = [&](unsigned t) {
    // Interleaved diagonals balance the triangular workload.
    if (has_flat) {
      diagonal_range<true>(x, l, st, inv_norm, dfv, dgv, r + 1 + t, n, threads, partial[t]);
    } else {
      diagonal_range<false>(x, l, st, inv_norm, dfv, dgv, r + 1 + t, n, threads, partial[t]);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  MpResult out;
  out.profile.resize(n);
  out.index.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double rho = partial[0].rho[i];
    std::size_t j = partial[0].index[i];
    for (unsigned t = 1; t < threads; ++t) {
      if (partial[t].rho[i] > rho || (partial[t].rho[i] == rho && partial[t].index[i] < j)) {
        rho = partial[t].rho[i];
        j = partial[t].index[i];
      }
    }
    out.index[i] = j;
    out.profile[i] = j < n ? distance_from_correlation(rho, l) : std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace

double znorm_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "znorm_distance: lengths differ");
  if (a.size() < 2) throw Error(ErrorKind::LengthMismatch, "znorm_distance: need at least two points");
  auto znorm = [](std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    const double sd = std::sqrt(ss / n);
    std::vector<double> z(v.size(), 0.0);
    if (!is_flat(sd, mu)) {
      for (std::size_t i = 0; i < v.size(); ++i) z[i] = (v[i] - mu) / sd;
    }
    return z;
  };
  const auto za = znorm(a);
  const auto zb = znorm(b);
  double sum = 0.0;
  for (std::size_t i = 0; i < za.size(); ++i) sum += (za[i] - zb[i]) * (za[i] - zb[i]);
  return std::sqrt(sum);
}

std::vector<double> distance_profile(std::size_t query_idx, std::span<const double> seq, std::size_t l) {
  check_lengths(seq.size(), l);
  if (query_idx > seq.size() - l) throw Error(ErrorKind::InvalidLength, "query index out of range");
  MassContext ctx(seq, l);
  std::vector<double> out;
  ctx.profile(query_idx, out);
  return out;
}

MpResult matrix_profile(std::span<const double> seq, std::size_t l, std::size_t exclusion_radius,
                        const MpOptions& options) {
  if (l < 2) throw Error(ErrorKind::InvalidLength, "subsequence length must be >= 2");
  if (seq.size() < 2 * l) {
    throw Error(ErrorKind::SequenceTooShort, "sequence of " + std::to_string(seq.size()) +
                                                 " points is shorter than 2l = " + std::to_string(2 * l));
  }
  if (exclusion_radius < 1) throw Error(ErrorKind::InvalidArgument, "exclusion_radius must be >= 1");
  const std::size_t n = seq.size() - l + 1;
  if (exclusion_radius + 1 >= n) {
    throw Error(ErrorKind::SequenceTooShort, "exclusion radius leaves no admissible neighbour");
  }
  MpResult out = options.engine == MpEngine::Mass ? mass_profile(seq, l, exclusion_radius, options.threads)
                                                  : diagonal_profile(seq, l, exclusion_radius, options.threads);
  out.subseq_len = l;
  out.exclusion_radius = exclusion_radius;
  return out;
}

MpResult matrix_profile(const ObservationSequence& seq, std::size_t l, std::size_t exclusion_radius,
                        const MpOptions& options) {
  return matrix_profile(std::span<const double>(seq.flat), l, exclusion_radius, options);
}

CacResult corrected_arc_curve(const MpResult& mp, std::size_t edge_ignore) {
  const std::size_t n = mp.index.size();
  CacResult out;
  out.edge_ignore = edge_ignore;
  out.ac.assign(n, 0.0);
  out.iac.resize(n);
  out.cac.resize(n);
  std::vector<long long> marks(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = mp.index[i];
    if (j >= n) continue;
    marks[std::min(i, j)] += 1;
    marks[std::max(i, j)] -= 1;
  }
  long long running = 0;
  const double nd = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    running += marks[k];
    out.ac[k] = static_cast<double>(running);
    const double kd = static_cast<double>(k);
    out.iac[k] = 2.0 * kd * (nd - kd) / nd;
    out.cac[k] = out.iac[k] > 0.0 ? std::min(out.ac[k] / out.iac[k], 1.0) : 1.0;
  }
  out.min_cac = 1.0;
  out.argmin_cac = std::min(edge_ignore, n ? n - 1 : 0);
  bool any = false;
  for (std::size_t k = edge_ignore; k + edge_ignore < n; ++k) {
    if (!any || out.cac[k] < out.min_cac) {
      out.min_cac = out.cac[k];
      out.argmin_cac = k;
      any = true;
    }
  }
  return out;
}

CacResult detect_change(const ObservationSequence& seq, std::size_t l, const DetectOptions& options) {
  const auto mp = matrix_profile(seq, l, options.exclusion_radius.value_or(default_exclusion_radius(l)), options.mp);
  auto cac = corrected_arc_curve(mp, options.edge_ignore.value_or(l));
  if (cac.min_cac < options.detection_threshold) cac.change_index = cac.argmin_cac;
  return cac;
}

}  // namespace driveby
