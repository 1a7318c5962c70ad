#pragma once

#include "driveby/spectral.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace driveby {

inline constexpr double kGravity = 9.81;

struct PointMass {
  double position = 0.0;  // m from the left support
  double mass = 0.0;      // kg
};

// Simply supported Euler-Bernoulli beam, modal superposition over n_modes
// sine modes, optionally carrying lumped masses.
struct BeamModel {
  double length = 17.0;
  double flexural_rigidity = 0.0;  // EI, N m^2
  double mass_per_length = 400.0;  // kg/m
  std::vector<double> damping_ratios{0.005};  // one entry applies to every mode
  std::size_t n_modes = 4;
  std::vector<PointMass> added_masses;

  double damping(std::size_t mode) const;
  void validate() const;

  // EI chosen so the bare beam's first frequency equals f1.
  static BeamModel tuned(double length, double f1, double mass_per_length);
};

struct MotorHarmonic {
  double frequency = 15.0;  // Hz
  double amplitude = 1.0;   // m/s^2
};

// Two axles, each carrying a left and a right sprung mass on its own suspension.
struct VehicleModel {
  double total_mass = 20.0;
  double axle_spacing = 0.8;
  double sprung_mass = 4.0;            // per wheel
  double spring_stiffness = 63165.0;   // per wheel, N/m (about 20 Hz)
  double damper_coefficient = 150.8;   // per wheel, N s/m
  double speed = 0.17;
  MotorHarmonic harmonic;

  double axle_load() const { return total_mass * kGravity / 2.0; }
  double suspension_frequency() const;
  double suspension_damping_ratio() const;
  void validate() const;
};

enum class Scenario { Direct, Indirect, DrivingTest };

struct PedestrianSpec {
  double band_low = 1.5;   // Hz
  double band_high = 3.0;  // Hz
  double rms = 50.0;       // N per walker
  std::size_t walkers = 2;
  double walking_speed = 1.3;  // m/s
};

struct RoughnessSpec {
  double rms = 1e-4;        // m
  double band_low = 0.5;    // Hz at the crossing speed
  double band_high = 50.0;  // Hz at the crossing speed
};

struct ScenarioConfig {
  Scenario scenario = Scenario::Indirect;
  std::size_t crossings = 1;
  std::size_t damaged_crossings = 10;
  PedestrianSpec pedestrians;
  RoughnessSpec roughness;
  double sensor_noise_rms = 0.01;  // m/s^2
  double sample_rate = 500.0;
  double record_duration = 15.0;   // s, direct and driving-test records
  double settle_time = 5.0;        // s simulated and discarded before recording
  std::uint64_t seed = 0;

  void validate() const;
};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

// Mass-normalized modes of the beam in the sine basis.
struct ModalSystem {
  std::vector<double> omega;  // rad/s, ascending
  std::vector<double> zeta;
  Eigen::MatrixXd basis;      // (sine mode n, mode r): w(x) = sum_n sin(n pi x / L) basis(n, r) eta_r

  std::size_t modes() const noexcept { return omega.size(); }
  // Mode r evaluated at position x on a beam of length L.
  double shape(std::size_t r, double x, double length) const;
  // Generalized forces of a point load at x, one entry per mode.
  Eigen::VectorXd point_load(double force, double x, double length) const;
};

ModalSystem modal_system(const BeamModel& beam);
std::vector<double> beam_modal_frequencies(const BeamModel& beam);

struct OscillatorResponse {
  std::vector<double> q, qd, qdd;
};

// q'' + 2 zeta omega q' + omega^2 q = f(t), f piecewise linear between samples,
// starting from rest. Exact discretization: stable for any dt.
OscillatorResponse integrate_oscillator(double omega, double zeta, std::span<const double> forcing, double dt);

// Three channels at quarter, mid and three-quarter span.
std::vector<MultiChannelRecord> simulate_direct(const BeamModel& beam, const ScenarioConfig& cfg);
MultiChannelRecord simulate_direct_record(const BeamModel& beam, const ScenarioConfig& cfg, std::uint64_t seed,
                                          const std::string& label);

struct CrossingOptions {
  bool pedestrians = true;
  bool roughness = true;
  bool harmonic = true;
  bool noise = true;
};

// Uncoupled crossing: the beam carries the moving axle loads and pedestrians,
// each sprung mass follows the beam deflection under its wheel plus road
// roughness. Channels: front-right, front-left, rear-right, rear-left.
MultiChannelRecord simulate_crossing(const BeamModel& beam, const VehicleModel& vehicle, const ScenarioConfig& cfg,
                                     std::uint64_t seed, const std::string& label,
                                     const CrossingOptions& options = {});

// Rigid flat ground: roughness and motor harmonic only.
MultiChannelRecord simulate_driving_test(const VehicleModel& vehicle, const ScenarioConfig& cfg, std::uint64_t seed,
                                         const std::string& label, const CrossingOptions& options = {});

// Beam displacement response to pedestrians only; used for linearity and
// energy checks. Rows: modes, columns: samples.
struct BeamResponse {
  Eigen::MatrixXd eta, eta_dot, eta_ddot;
};
BeamResponse simulate_beam_under_pedestrians(const BeamModel& beam, const ScenarioConfig& cfg, std::uint64_t seed,
                                             double duration);

struct CrossingInfo {
  std::string label;
  std::uint64_t seed = 0;
  bool damaged = false;
};

struct DatasetBundle {
  Scenario scenario = Scenario::Indirect;
  BeamModel beam;
  std::optional<BeamModel> damaged_beam;
  VehicleModel vehicle;
  ScenarioConfig config;
  std::vector<MultiChannelRecord> records;  // nominal first, then damaged
  std::vector<CrossingInfo> crossings;      // parallel to records
  std::vector<double> nominal_frequencies;
  std::vector<double> damaged_frequencies;
};

// Crossing k uses derive_seed(cfg.seed, k); damaged crossing k uses
// derive_seed(cfg.seed, kDamagedSeedStream + k).
inline constexpr std::uint64_t kDamagedSeedStream = 1'000'000;

DatasetBundle generate_dataset(const BeamModel& beam, const VehicleModel& vehicle, const ScenarioConfig& cfg,
                               const std::optional<BeamModel>& damaged_variant = std::nullopt,
                               std::size_t threads = 1);

// Five 75 kg point masses at midspan.
BeamModel with_midspan_people(BeamModel beam, std::size_t people = 5, double mass_each = 75.0);

enum class CaseStudy { Unsw, Bulli };

std::string to_string(CaseStudy c);
CaseStudy case_from_string(const std::string& s);

// 17 m span at 6.65 Hz, or 23.9 m span at 6.7 Hz.
BeamModel case_beam(CaseStudy c);
std::size_t case_nominal_crossings(CaseStudy c);

}  // namespace driveby
