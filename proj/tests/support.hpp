#pragma once

#include "driveby/spectral.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace driveby::test {

inline MultiChannelRecord white_record(std::size_t channels, std::size_t n, double fs, std::uint64_t seed,
                                       double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  MultiChannelRecord r;
  r.label = "white";
  r.sample_rate = fs;
  r.channels.assign(channels, std::vector<double>(n));
  for (auto& ch : r.channels) {
    for (auto& v : ch) v = g(rng);
  }
  return r;
}

inline double relative_gap(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

}  // namespace driveby::test
