#include "driveby/error.hpp"
#include "driveby/matrix_profile.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace driveby;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

std::vector<double> znorm(std::span<const double> w) {
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(w.size()));
  std::vector<double> out(w.size(), 0.0);
  if (sd > 1e-12) {
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = (w[i] - mean) / sd;
  }
  return out;
}

// Brute force: explicit z-normalization and full pairwise search.
MpResult naive_profile(const std::vector<double>& x, std::size_t l, std::size_t r) {
  const std::size_t n = x.size() - l + 1;
  std::vector<std::vector<double>> z;
  for (std::size_t i = 0; i < n; ++i) z.push_back(znorm(std::span<const double>(x).subspan(i, l)));
  MpResult out;
  out.subseq_len = l;
  out.exclusion_radius = r;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if ((i > j ? i - j : j - i) <= r) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < l; ++k) d += (z[i][k] - z[j][k]) * (z[i][k] - z[j][k]);
      d = std::sqrt(d);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    out.profile.push_back(best);
    out.index.push_back(best_j);
  }
  return out;
}

ObservationSequence sequence_of(const std::vector<double>& x, std::size_t sample_len) {
  std::vector<SpectralSample> samples;
  for (std::size_t s = 0; s + sample_len <= x.size(); s += sample_len) {
    SpectralSample smp;
    smp.values.assign(x.begin() + static_cast<std::ptrdiff_t>(s), x.begin() + static_cast<std::ptrdiff_t>(s + sample_len));
    smp.normalized = true;
    samples.push_back(std::move(smp));
  }
  return assemble_sequence(samples);
}

}  // namespace

TEST_CASE("znorm_distance") {
  const std::vector<double> a{0, 1, 0, 1};
  const std::vector<double> b{1, 0, 1, 0};
  CHECK(znorm_distance(a, b) == doctest::Approx(4.0));
  CHECK(znorm_distance(a, a) == doctest::Approx(0.0));

  const auto x = noise(32, 1);
  const auto y = noise(32, 2);
  std::vector<double> xa(x);
  for (auto& v : xa) v = 3.5 * v - 7.0;
  CHECK(znorm_distance(xa, y) == doctest::Approx(znorm_distance(x, y)).epsilon(1e-9));
  CHECK(znorm_distance(x, y) <= 2.0 * std::sqrt(32.0) + 1e-9);

  const std::vector<double> flat(32, 4.0);
  CHECK(znorm_distance(flat, flat) == 0.0);
  CHECK(znorm_distance(flat, y) == doctest::Approx(std::sqrt(32.0)));
}

TEST_CASE("distance_profile agrees with direct computation") {
  const auto x = noise(300, 3);
  const std::size_t l = 24;
  const auto d = distance_profile(17, x, l);
  REQUIRE(d.size() == x.size() - l + 1);
  const std::span<const double> s(x);
  for (std::size_t j = 0; j < d.size(); ++j) {
    CHECK(d[j] == doctest::Approx(znorm_distance(s.subspan(17, l), s.subspan(j, l))).epsilon(1e-7));
  }
}

TEST_CASE("matrix profile matches the brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto x = noise(400, 10 + seed);
    const std::size_t l = 20;
    const std::size_t r = default_exclusion_radius(l);
    const auto truth = naive_profile(x, l, r);
    for (auto engine : {MpEngine::Mass, MpEngine::Diagonal}) {
      MpOptions opt;
      opt.engine = engine;
      const auto mp = matrix_profile(x, l, r, opt);
      REQUIRE(mp.profile.size() == truth.profile.size());
      for (std::size_t i = 0; i < mp.profile.size(); ++i) {
        CHECK(mp.profile[i] == doctest::Approx(truth.profile[i]).epsilon(1e-6));
        CHECK((mp.index[i] > i ? mp.index[i] - i : i - mp.index[i]) > r);
        const double at_index = znorm_distance(std::span<const double>(x).subspan(i, l),
                                               std::span<const double>(x).subspan(mp.index[i], l));
        CHECK(at_index == doctest::Approx(truth.profile[i]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("matrix profile invariances") {
  const auto x = noise(500, 21);
  const std::size_t l = 32, r = default_exclusion_radius(l);
  const auto base = matrix_profile(x, l, r);

  SUBCASE("affine") {
    auto y = x;
    for (auto& v : y) v = 0.25 * v + 100.0;
    const auto mp = matrix_profile(y, l, r);
    for (std::size_t i = 0; i < mp.profile.size(); ++i) CHECK(mp.profile[i] == doctest::Approx(base.profile[i]).epsilon(1e-6));
  }
  SUBCASE("thread count") {
    for (auto engine : {MpEngine::Mass, MpEngine::Diagonal}) {
      MpOptions one{engine, 1}, four{engine, 4};
      const auto a = matrix_profile(x, l, r, one);
      const auto b = matrix_profile(x, l, r, four);
      CHECK(a.profile == b.profile);
      CHECK(a.index == b.index);
    }
  }
}

TEST_CASE("planted motif is found") {
  auto x = noise(1000, 5);
  const auto motif = noise(50, 99);
  for (std::size_t k = 0; k < 50; ++k) {
    x[100 + k] = motif[k];
    x[700 + k] = 2.0 * motif[k] + 1.0;
  }
  const auto mp = matrix_profile(x, 50, default_exclusion_radius(50));
  CHECK(mp.profile[100] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(mp.index[100] == 700);
  CHECK(mp.index[700] == 100);
}

TEST_CASE("constant sequence") {
  const std::vector<double> flat(200, 1.0);
  const auto mp = matrix_profile(flat, 10, 3);
  for (std::size_t i = 0; i < mp.profile.size(); ++i) CHECK(mp.profile[i] == 0.0);
}

TEST_CASE("length errors") {
  const auto x = noise(50, 1);
  try {
    matrix_profile(x, 40, 10);
    FAIL("expected SequenceTooShort");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SequenceTooShort);
  }
  CHECK_THROWS_AS(matrix_profile(x, 1, 0), Error);
}

TEST_CASE("corrected arc curve") {
  const std::size_t l = 30;
  SUBCASE("idealized arc curve shape") {
    const auto x = noise(2000, 8);
    const auto mp = matrix_profile(x, l, default_exclusion_radius(l));
    const auto c = corrected_arc_curve(mp);
    const std::size_t n = mp.profile.size();
    REQUIRE(c.cac.size() == n);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(c.cac[k] >= 0.0);
      CHECK(c.cac[k] <= 1.0);
      const double ideal = 2.0 * static_cast<double>(k) * static_cast<double>(n - k) / static_cast<double>(n);
      CHECK(c.iac[k] == doctest::Approx(ideal));
    }
    CHECK(c.iac[n / 2] == doctest::Approx(static_cast<double>(n) / 2.0).epsilon(1e-3));

    // Arc counts from the definition.
    for (std::size_t k = 0; k < n; k += 97) {
      double count = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto lo = std::min(i, mp.index[i]), hi = std::max(i, mp.index[i]);
        if (lo <= k && k < hi) count += 1.0;
      }
      CHECK(c.ac[k] == count);
    }
  }
  SUBCASE("regime change produces a dip") {
    auto x = noise(3000, 9);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 0.3);
    for (std::size_t i = 0; i < 3000; ++i) {
      const double t = static_cast<double>(i);
      x[i] = (i < 1800 ? std::sin(2.0 * M_PI * t / 15.0) : (std::sin(2.0 * M_PI * t / 23.0) >= 0.0 ? 1.0 : -1.0)) + g(rng);
    }
    const auto seq = sequence_of(x, 300);
    DetectOptions opt;
    const auto c = detect_change(seq, l, opt);
    REQUIRE(c.change_index.has_value());
    CHECK(c.min_cac < 0.2);
    const double gap = std::abs(static_cast<double>(*c.change_index) - 1800.0);
    CHECK(gap <= static_cast<double>(l));
  }
  SUBCASE("reversal symmetry") {
    const auto x = noise(1500, 12);
    std::vector<double> rev(x.rbegin(), x.rend());
    const auto a = corrected_arc_curve(matrix_profile(x, l, default_exclusion_radius(l)));
    const auto b = corrected_arc_curve(matrix_profile(rev, l, default_exclusion_radius(l)));
    const std::size_t n = a.cac.size();
    // Reversal maps window i to n - 1 - i, so arc crossings at k map to n - 2 - k.
    std::size_t agree = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) agree += std::abs(a.ac[k] - b.ac[n - 2 - k]) <= 2.0;
    CHECK(static_cast<double>(agree) >= 0.99 * static_cast<double>(n - 1));
  }
}

TEST_CASE("no change is reported below the detection threshold") {
  const auto x = noise(3000, 33);
  const auto seq = sequence_of(x, 300);
  DetectOptions opt;
  opt.detection_threshold = 0.0;
  const auto c = detect_change(seq, 30, opt);
  CHECK_FALSE(c.change_index.has_value());
  CHECK(c.edge_ignore == 30);
}
