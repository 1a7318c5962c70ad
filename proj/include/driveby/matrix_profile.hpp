#pragma once

#include "driveby/preprocess.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace driveby {

// z-normalized Euclidean distance. z() subtracts the mean and divides by the
// population standard deviation; windows with (near) zero variance map to the
// zero vector.
double znorm_distance(std::span<const double> a, std::span<const double> b);

// Distances from the subsequence starting at query_idx to every subsequence of
// seq (length p - l + 1), via FFT sliding dot products and window statistics.
std::vector<double> distance_profile(std::size_t query_idx, std::span<const double> seq, std::size_t l);

struct MpResult {
  std::vector<double> profile;
  std::vector<std::size_t> index;
  std::size_t subseq_len = 0;
  std::size_t exclusion_radius = 0;
};

enum class MpEngine {
  Mass,      // one FFT distance profile per query
  Diagonal,  // streaming covariance along diagonals, O(N^2) without transforms
};

struct MpOptions {
  MpEngine engine = MpEngine::Diagonal;
  unsigned threads = 1;
};

inline std::size_t default_exclusion_radius(std::size_t l) { return (l + 3) / 4; }

// Nearest non-trivial neighbour (|i - j| > exclusion_radius) of every
// subsequence. Ties resolve to the smaller j, independently of scheduling.
MpResult matrix_profile(std::span<const double> seq, std::size_t l, std::size_t exclusion_radius,
                        const MpOptions& options = {});
MpResult matrix_profile(const ObservationSequence& seq, std::size_t l, std::size_t exclusion_radius,
                        const MpOptions& options = {});

struct CacResult {
  std::vector<double> ac;
  std::vector<double> iac;
  std::vector<double> cac;
  std::optional<std::size_t> change_index;
  std::size_t edge_ignore = 0;
  double min_cac = 1.0;           // over the interior
  std::size_t argmin_cac = 0;     // interior argmin, reported even without a change
};

// ac[k]: arcs (i, I[i]) with min <= k < max. iac[k] = 2 k (N - k) / N.
// cac = min(ac / iac, 1). The interior excludes edge_ignore points per end.
CacResult corrected_arc_curve(const MpResult& mp, std::size_t edge_ignore);
inline CacResult corrected_arc_curve(const MpResult& mp) { return corrected_arc_curve(mp, mp.subseq_len); }

inline constexpr double kDefaultDetectionThreshold = 0.6;

struct DetectOptions {
  std::optional<std::size_t> exclusion_radius;  // default ceil(l / 4)
  std::optional<std::size_t> edge_ignore;       // default l
  double detection_threshold = kDefaultDetectionThreshold;
  MpOptions mp;
};

CacResult detect_change(const ObservationSequence& seq, std::size_t l, const DetectOptions& options = {});

}  // namespace driveby
