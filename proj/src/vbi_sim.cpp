#include "driveby/vbi_sim.hpp"

#include "driveby/error.hpp"
#include "driveby/fft.hpp"
#include "driveby/parallel.hpp"
#include "driveby/rng.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace driveby {

namespace {

constexpr double kPi = std::numbers::pi;

enum Stream : std::uint64_t { kPedestrians = 1, kRoughness = 2, kHarmonic = 3, kNoise = 4 };

std::size_t sample_count(double seconds, double fs) { return static_cast<std::size_t>(std::llround(seconds * fs)); }

// White Gaussian noise shaped in the frequency domain by gain(f), rescaled to rms.
template <class Gain>
std::vector<double> shaped_noise(std::size_t n, double fs, double rms, Rng& rng, Gain gain) {
  std::vector<double> out(n, 0.0);
  if (n < 2 || rms == 0.0) {
    if (n > 0) {
      // keep the generator stream aligned regardless of rms
      std::normal_distribution<double> white(0.0, 1.0);
      for (std::size_t i = 0; i < n; ++i) (void)white(rng);
    }
    return out;
  }
  std::normal_distribution<double> white(0.0, 1.0);
  for (auto& v : out) v = white(rng);
  RealFft fft(n);
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(out, spec);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= gain(static_cast<double>(k) * fs / static_cast<double>(n));
  fft.inverse(spec, out);
  double ss = 0.0;
  for (double v : out) ss += v * v;
  const double current = std::sqrt(ss / static_cast<double>(n));
  if (current > 0.0) {
    for (auto& v : out) v *= rms / current;
  }
  return out;
}

// Second-order band-pass magnitude centred on the geometric mean of the band.
double bandpass_gain(double f, double lo, double hi) {
  if (f <= 0.0) return 0.0;
  const double f0 = std::sqrt(lo * hi);
  const double q = f0 / (hi - lo);
  const double detune = f / f0 - f0 / f;
  return 1.0 / std::sqrt(1.0 + q * q * detune * detune);
}

// Position of a walker bouncing between the supports.
double walker_position(double start, double velocity, double t, double length) {
  const double period = 2.0 * length;
  double s = std::fmod(start + velocity * t, period);
  if (s < 0.0) s += period;
  return s <= length ? s : period - s;
}

void check_resolvable(const ModalSystem& modal, double fs) {
  const double top = modal.omega.back() / (2.0 * kPi);
  if (top >= fs / 2.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "highest mode %.2f Hz is not resolved at %.1f Hz sampling", top, fs);
    throw Error(ErrorKind::UnstableTimestep, buf);
  }
}

Eigen::MatrixXd pedestrian_forces(const ModalSystem& modal, const BeamModel& beam, const PedestrianSpec& spec,
                                  std::size_t n, double fs, std::uint64_t seed, double t0) {
  Eigen::MatrixXd forces = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(modal.modes()), static_cast<Eigen::Index>(n));
  Rng rng(derive_seed(seed, kPedestrians));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t w = 0; w < spec.walkers; ++w) {
    const double start = unit(rng) * beam.length;
    const double direction = unit(rng) < 0.5 ? -1.0 : 1.0;
    const auto force = shaped_noise(n, fs, spec.rms, rng, [&](double f) {
      return bandpass_gain(f, spec.band_low, spec.band_high);
    });
    for (std::size_t i = 0; i < n; ++i) {
      const double t = t0 + static_cast<double>(i) / fs;
      const double x = walker_position(start, direction * spec.walking_speed, t, beam.length);
      forces.col(static_cast<Eigen::Index>(i)) += modal.point_load(force[i], x, beam.length);
    }
  }
  return forces;
}

BeamResponse integrate_modes(const ModalSystem& modal, const Eigen::MatrixXd& forces, double dt) {
  BeamResponse r;
  r.eta.resize(forces.rows(), forces.cols());
  r.eta_dot.resize(forces.rows(), forces.cols());
  r.eta_ddot.resize(forces.rows(), forces.cols());
  std::vector<double> f(static_cast<std::size_t>(forces.cols()));
  for (Eigen::Index m = 0; m < forces.rows(); ++m) {
    for (Eigen::Index i = 0; i < forces.cols(); ++i) f[static_cast<std::size_t>(i)] = forces(m, i);
    const auto resp = integrate_oscillator(modal.omega[static_cast<std::size_t>(m)],
                                           modal.zeta[static_cast<std::size_t>(m)], f, dt);
    for (Eigen::Index i = 0; i < forces.cols(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      r.eta(m, i) = resp.q[k];
      r.eta_dot(m, i) = resp.qd[k];
      r.eta_ddot(m, i) = resp.qdd[k];
    }
  }
  return r;
}

std::vector<double> add_noise(std::vector<double> x, double rms, Rng& rng) {
  std::normal_distribution<double> white(0.0, 1.0);
  for (auto& v : x) v += rms * white(rng);
  return x;
}

// Linear interpolation on a uniform grid starting at x0 with spacing dx.
double sample_profile(const std::vector<double>& profile, double x0, double dx, double x) {
  const double u = (x - x0) / dx;
  if (u <= 0.0) return profile.front();
  const auto i = static_cast<std::size_t>(u);
  if (i + 1 >= profile.size()) return profile.back();
  const double frac = u - static_cast<double>(i);
  return profile[i] + frac * (profile[i + 1] - profile[i]);
}

// Sprung-mass acceleration for a wheel whose contact point moves by u(t).
std::vector<double> sprung_acceleration(const VehicleModel& vehicle, const std::vector<double>& u, double fs) {
  const double omega = 2.0 * kPi * vehicle.suspension_frequency();
  const double zeta = vehicle.suspension_damping_ratio();
  const std::size_t n = u.size();
  std::vector<double> forcing(n);
  for (std::size_t i = 0; i < n; ++i) {
    double du;
    if (n < 2) {
      du = 0.0;
    } else if (i == 0) {
      du = (u[1] - u[0]) * fs;
    } else if (i + 1 == n) {
      du = (u[n - 1] - u[n - 2]) * fs;
    } else {
      du = 0.5 * (u[i + 1] - u[i - 1]) * fs;
    }
    forcing[i] = omega * omega * u[i] + 2.0 * zeta * omega * du;
  }
  return integrate_oscillator(omega, zeta, forcing, 1.0 / fs).qdd;
}

struct WheelTracks {
  std::vector<double> right, left;
  double x0 = 0.0, dx = 1.0;
};

WheelTracks roughness_tracks(const RoughnessSpec& spec, double x_min, double x_max, double speed, double fs,
                             std::uint64_t seed) {
  WheelTracks t;
  t.dx = speed / fs;
  t.x0 = x_min;
  const auto n = static_cast<std::size_t>(std::ceil((x_max - x_min) / t.dx)) + 2;
  Rng rng(derive_seed(seed, kRoughness));
  auto band = [&](double f) { return (f >= spec.band_low && f <= spec.band_high) ? 1.0 : 0.0; };
  t.right = shaped_noise(n, fs, spec.rms, rng, band);
  t.left = shaped_noise(n, fs, spec.rms, rng, band);
  return t;
}

void add_harmonic(std::vector<std::vector<double>>& channels, const MotorHarmonic& h, double fs, double t0,
                  std::uint64_t seed) {
  Rng rng(derive_seed(seed, kHarmonic));
  std::uniform_real_distribution<double> gain(0.8, 1.2), phase(0.0, 2.0 * kPi);
  for (auto& ch : channels) {
    const double g = gain(rng), p = phase(rng);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      const double t = t0 + static_cast<double>(i) / fs;
      ch[i] += h.amplitude * g * std::sin(2.0 * kPi * h.frequency * t + p);
    }
  }
}

}  // namespace

double BeamModel::damping(std::size_t mode) const {
  if (damping_ratios.empty()) return 0.0;
  return damping_ratios[std::min(mode, damping_ratios.size() - 1)];
}

void BeamModel::validate() const {
  if (!(length > 0.0) || !(flexural_rigidity > 0.0) || !(mass_per_length > 0.0)) {
    throw Error(ErrorKind::ConfigInvalid, "beam length, EI and mass per length must be positive");
  }
  if (n_modes < 1) throw Error(ErrorKind::ConfigInvalid, "beam needs at least one mode");
  for (double z : damping_ratios) {
    if (!(z >= 0.0 && z < 1.0)) throw Error(ErrorKind::ConfigInvalid, "damping ratios must lie in [0, 1)");
  }
  for (const auto& pm : added_masses) {
    if (pm.position < 0.0 || pm.position > length || pm.mass < 0.0) {
      throw Error(ErrorKind::ConfigInvalid, "added mass outside the span or negative");
    }
  }
}

BeamModel BeamModel::tuned(double length, double f1, double mass_per_length) {
  BeamModel b;
  b.length = length;
  b.mass_per_length = mass_per_length;
  // f1 = (pi / (2 L^2)) sqrt(EI / m)
  const double root = 2.0 * length * length * f1 / kPi;
  b.flexural_rigidity = mass_per_length * root * root;
  return b;
}

double VehicleModel::suspension_frequency() const {
  return std::sqrt(spring_stiffness / sprung_mass) / (2.0 * kPi);
}

double VehicleModel::suspension_damping_ratio() const {
  return damper_coefficient / (2.0 * std::sqrt(spring_stiffness * sprung_mass));
}

void VehicleModel::validate() const {
  if (!(total_mass > 0.0) || !(speed > 0.0) || !(sprung_mass > 0.0) || !(spring_stiffness > 0.0) ||
      damper_coefficient < 0.0 || axle_spacing < 0.0) {
    throw Error(ErrorKind::ConfigInvalid, "vehicle mass, speed and suspension parameters must be positive");
  }
  if (suspension_damping_ratio() >= 1.0) throw Error(ErrorKind::ConfigInvalid, "suspension must be underdamped");
  if (!(harmonic.frequency >= 0.0) || !(harmonic.amplitude >= 0.0)) {
    throw Error(ErrorKind::ConfigInvalid, "motor harmonic must be non-negative");
  }
}

void ScenarioConfig::validate() const {
  if (crossings < 1) throw Error(ErrorKind::ConfigInvalid, "crossings must be >= 1");
  if (!(sample_rate > 0.0)) throw Error(ErrorKind::ConfigInvalid, "sample_rate must be > 0");
  if (!(record_duration > 0.0) || settle_time < 0.0) throw Error(ErrorKind::ConfigInvalid, "durations must be positive");
  if (pedestrians.walkers > 0 && !(pedestrians.band_low > 0.0 && pedestrians.band_high > pedestrians.band_low)) {
    throw Error(ErrorKind::ConfigInvalid, "pedestrian band must satisfy 0 < low < high");
  }
  if (!(roughness.band_high > roughness.band_low) || roughness.rms < 0.0 || sensor_noise_rms < 0.0 ||
      pedestrians.rms < 0.0) {
    throw Error(ErrorKind::ConfigInvalid, "noise levels must be non-negative with ordered bands");
  }
  if (sample_rate <= 2.0 * std::max(pedestrians.band_high, roughness.band_high)) {
    throw Error(ErrorKind::ConfigInvalid, "sample_rate must exceed twice the highest modelled frequency");
  }
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Direct: return "direct";
    case Scenario::Indirect: return "indirect";
    case Scenario::DrivingTest: return "driving_test";
  }
  return "indirect";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "direct") return Scenario::Direct;
  if (s == "indirect") return Scenario::Indirect;
  if (s == "driving_test") return Scenario::DrivingTest;
  throw Error(ErrorKind::ConfigInvalid, "scenario: unknown value '" + s + "'");
}

double ModalSystem::shape(std::size_t r, double x, double length) const {
  double v = 0.0;
  for (Eigen::Index n = 0; n < basis.rows(); ++n) {
    v += std::sin(static_cast<double>(n + 1) * kPi * x / length) * basis(n, static_cast<Eigen::Index>(r));
  }
  return v;
}

Eigen::VectorXd ModalSystem::point_load(double force, double x, double length) const {
  Eigen::VectorXd s(basis.rows());
  for (Eigen::Index n = 0; n < basis.rows(); ++n) s(n) = force * std::sin(static_cast<double>(n + 1) * kPi * x / length);
  return basis.transpose() * s;
}

ModalSystem modal_system(const BeamModel& beam) {
  beam.validate();
  const auto n = static_cast<Eigen::Index>(beam.n_modes);
  const double modal_mass = beam.mass_per_length * beam.length / 2.0;
  const double root = std::sqrt(beam.flexural_rigidity / beam.mass_per_length);
  Eigen::VectorXd omega_bare(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double k = static_cast<double>(i + 1) * kPi / beam.length;
    omega_bare(i) = k * k * root;
  }

  ModalSystem sys;
  sys.omega.resize(beam.n_modes);
  sys.zeta.resize(beam.n_modes);
  for (std::size_t r = 0; r < beam.n_modes; ++r) sys.zeta[r] = beam.damping(r);

  double added = 0.0;
  for (const auto& pm : beam.added_masses) added += pm.mass;
  if (added == 0.0) {
    sys.basis = Eigen::MatrixXd::Identity(n, n) / std::sqrt(modal_mass);
    for (Eigen::Index i = 0; i < n; ++i) sys.omega[static_cast<std::size_t>(i)] = omega_bare(i);
    return sys;
  }

  Eigen::MatrixXd mass = Eigen::MatrixXd::Identity(n, n) * modal_mass;
  for (const auto& pm : beam.added_masses) {
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = std::sin(static_cast<double>(i + 1) * kPi * pm.position / beam.length);
    mass += pm.mass * s * s.transpose();
  }
  const Eigen::MatrixXd stiffness = (omega_bare.array().square() * modal_mass).matrix().asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(stiffness, mass);
  sys.basis = solver.eigenvectors();  // v^T M v = I
  for (Eigen::Index r = 0; r < n; ++r) {
    sys.omega[static_cast<std::size_t>(r)] = std::sqrt(std::max(0.0, solver.eigenvalues()(r)));
    Eigen::Index pivot = 0;
    sys.basis.col(r).cwiseAbs().maxCoeff(&pivot);
    if (sys.basis(pivot, r) < 0.0) sys.basis.col(r) *= -1.0;
  }
  return sys;
}

std::vector<double> beam_modal_frequencies(const BeamModel& beam) {
  const auto sys = modal_system(beam);
  std::vector<double> f(sys.omega.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = sys.omega[i] / (2.0 * kPi);
  return f;
}

OscillatorResponse integrate_oscillator(double omega, double zeta, std::span<const double> forcing, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::UnstableTimestep, "time step must be positive");
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a(0, 1) = 1.0;
  a(1, 0) = -omega * omega;
  a(1, 1) = -2.0 * zeta * omega;
  a(1, 2) = 1.0;
  a(2, 3) = 1.0;
  const Eigen::Matrix4d phi = (a * dt).exp();

  const std::size_t n = forcing.size();
  OscillatorResponse r;
  r.q.assign(n, 0.0);
  r.qd.assign(n, 0.0);
  r.qdd.assign(n, 0.0);
  double q = 0.0, qd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.q[i] = q;
    r.qd[i] = qd;
    r.qdd[i] = forcing[i] - 2.0 * zeta * omega * qd - omega * omega * q;
    if (i + 1 == n) break;
    const double f0 = forcing[i];
    const double slope = (forcing[i + 1] - forcing[i]) / dt;
    const double q_next = phi(0, 0) * q + phi(0, 1) * qd + phi(0, 2) * f0 + phi(0, 3) * slope;
    const double qd_next = phi(1, 0) * q + phi(1, 1) * qd + phi(1, 2) * f0 + phi(1, 3) * slope;
    q = q_next;
    qd = qd_next;
  }
  return r;
}

BeamResponse simulate_beam_under_pedestrians(const BeamModel& beam, const ScenarioConfig& cfg, std::uint64_t seed,
                                             double duration) {
  const auto modal = modal_system(beam);
  check_resolvable(modal, cfg.sample_rate);
  const std::size_t n = sample_count(duration, cfg.sample_rate);
  const auto forces = pedestrian_forces(modal, beam, cfg.pedestrians, n, cfg.sample_rate, seed, 0.0);
  return integrate_modes(modal, forces, 1.0 / cfg.sample_rate);
}

MultiChannelRecord simulate_direct_record(const BeamModel& beam, const ScenarioConfig& cfg, std::uint64_t seed,
                                          const std::string& label) {
  cfg.validate();
  const auto modal = modal_system(beam);
  check_resolvable(modal, cfg.sample_rate);
  const double fs = cfg.sample_rate;
  const std::size_t n_settle = sample_count(cfg.settle_time, fs);
  const std::size_t n_rec = sample_count(cfg.record_duration, fs);
  const auto forces = pedestrian_forces(modal, beam, cfg.pedestrians, n_settle + n_rec, fs, seed,
                                        -cfg.settle_time);
  const auto resp = integrate_modes(modal, forces, 1.0 / fs);

  MultiChannelRecord rec;
  rec.label = label;
  rec.sample_rate = fs;
  Rng noise(derive_seed(seed, kNoise));
  for (double frac : {0.25, 0.5, 0.75}) {
    Eigen::RowVectorXd shape(static_cast<Eigen::Index>(modal.modes()));
    for (std::size_t r = 0; r < modal.modes(); ++r) shape(static_cast<Eigen::Index>(r)) = modal.shape(r, frac * beam.length, beam.length);
    std::vector<double> ch(n_rec);
    for (std::size_t i = 0; i < n_rec; ++i) ch[i] = shape.dot(resp.eta_ddot.col(static_cast<Eigen::Index>(n_settle + i)));
    rec.channels.push_back(add_noise(std::move(ch), cfg.sensor_noise_rms, noise));
  }
  return rec;
}

std::vector<MultiChannelRecord> simulate_direct(const BeamModel& beam, const ScenarioConfig& cfg) {
  if (cfg.scenario != Scenario::Direct) throw Error(ErrorKind::ConfigInvalid, "simulate_direct needs scenario direct");
  std::vector<MultiChannelRecord> out;
  for (std::size_t k = 0; k < cfg.crossings; ++k) {
    char label[32];
    std::snprintf(label, sizeof label, "direct_%03zu", k);
    out.push_back(simulate_direct_record(beam, cfg, derive_seed(cfg.seed, k), label));
  }
  return out;
}

MultiChannelRecord simulate_crossing(const BeamModel& beam, const VehicleModel& vehicle, const ScenarioConfig& cfg,
                                     std::uint64_t seed, const std::string& label, const CrossingOptions& options) {
  cfg.validate();
  vehicle.validate();
  const auto modal = modal_system(beam);
  check_resolvable(modal, cfg.sample_rate);
  const double fs = cfg.sample_rate;
  const double duration = beam.length / vehicle.speed;
  if (duration < 2.0) {
    throw Error(ErrorKind::VehicleFasterThanBeam, "crossing lasts " + std::to_string(duration) + " s (< 2 s)");
  }
  const std::size_t n_settle = sample_count(cfg.settle_time, fs);
  const std::size_t n_rec = sample_count(duration, fs);
  const std::size_t n = n_settle + n_rec;
  const double t0 = -cfg.settle_time;

  Eigen::MatrixXd forces = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(modal.modes()), static_cast<Eigen::Index>(n));
  if (options.pedestrians) forces = pedestrian_forces(modal, beam, cfg.pedestrians, n, fs, seed, t0);
  const double load = vehicle.axle_load();
  std::vector<double> front_x(n), rear_x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t0 + static_cast<double>(i) / fs;
    front_x[i] = vehicle.speed * t;
    rear_x[i] = front_x[i] - vehicle.axle_spacing;
    for (double x : {front_x[i], rear_x[i]}) {
      if (x >= 0.0 && x <= beam.length) forces.col(static_cast<Eigen::Index>(i)) += modal.point_load(load, x, beam.length);
    }
  }
  const auto resp = integrate_modes(modal, forces, 1.0 / fs);

  auto deflection_under = [&](const std::vector<double>& xs) {
    std::vector<double> w(n, 0.0);
    Eigen::RowVectorXd shape(static_cast<Eigen::Index>(modal.modes()));
    for (std::size_t i = 0; i < n; ++i) {
      const double x = xs[i];
      if (x < 0.0 || x > beam.length) continue;
      for (std::size_t r = 0; r < modal.modes(); ++r) shape(static_cast<Eigen::Index>(r)) = modal.shape(r, x, beam.length);
      w[i] = shape.dot(resp.eta.col(static_cast<Eigen::Index>(i)));
    }
    return w;
  };
  const auto w_front = deflection_under(front_x);
  const auto w_rear = deflection_under(rear_x);

  RoughnessSpec rough = cfg.roughness;
  if (!options.roughness) rough.rms = 0.0;
  const auto tracks = roughness_tracks(rough, rear_x.front() - vehicle.speed / fs, front_x.back() + vehicle.speed / fs,
                                       vehicle.speed, fs, seed);

  std::vector<std::vector<double>> channels;
  for (const auto* axle : {&front_x, &rear_x}) {
    const auto& w = axle == &front_x ? w_front : w_rear;
    for (const auto* track : {&tracks.right, &tracks.left}) {
      std::vector<double> u(n);
      for (std::size_t i = 0; i < n; ++i) u[i] = w[i] + sample_profile(*track, tracks.x0, tracks.dx, (*axle)[i]);
      auto acc = sprung_acceleration(vehicle, u, fs);
      channels.emplace_back(acc.begin() + static_cast<std::ptrdiff_t>(n_settle), acc.end());
    }
  }
  if (options.harmonic) add_harmonic(channels, vehicle.harmonic, fs, 0.0, seed);
  if (options.noise) {
    Rng noise(derive_seed(seed, kNoise));
    for (auto& ch : channels) ch = add_noise(std::move(ch), cfg.sensor_noise_rms, noise);
  }

  MultiChannelRecord rec;
  rec.label = label;
  rec.sample_rate = fs;
  rec.channels = std::move(channels);
  return rec;
}

MultiChannelRecord simulate_driving_test(const VehicleModel& vehicle, const ScenarioConfig& cfg, std::uint64_t seed,
                                         const std::string& label, const CrossingOptions& options) {
  cfg.validate();
  vehicle.validate();
  const double fs = cfg.sample_rate;
  const std::size_t n_settle = sample_count(cfg.settle_time, fs);
  const std::size_t n_rec = sample_count(cfg.record_duration, fs);
  const std::size_t n = n_settle + n_rec;
  RoughnessSpec rough = cfg.roughness;
  if (!options.roughness) rough.rms = 0.0;
  const double x_start = -vehicle.speed * cfg.settle_time - vehicle.axle_spacing;
  const double x_end = vehicle.speed * cfg.record_duration;
  const auto tracks = roughness_tracks(rough, x_start - vehicle.speed / fs, x_end + vehicle.speed / fs, vehicle.speed, fs, seed);

  std::vector<std::vector<double>> channels;
  for (double offset : {0.0, vehicle.axle_spacing}) {
    for (const auto* track : {&tracks.right, &tracks.left}) {
      std::vector<double> u(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = -cfg.settle_time + static_cast<double>(i) / fs;
        u[i] = sample_profile(*track, tracks.x0, tracks.dx, vehicle.speed * t - offset);
      }
      auto acc = sprung_acceleration(vehicle, u, fs);
      channels.emplace_back(acc.begin() + static_cast<std::ptrdiff_t>(n_settle), acc.end());
    }
  }
  if (options.harmonic) add_harmonic(channels, vehicle.harmonic, fs, 0.0, seed);
  if (options.noise) {
    Rng noise(derive_seed(seed, kNoise));
    for (auto& ch : channels) ch = add_noise(std::move(ch), cfg.sensor_noise_rms, noise);
  }
  MultiChannelRecord rec;
  rec.label = label;
  rec.sample_rate = fs;
  rec.channels = std::move(channels);
  return rec;
}

BeamModel with_midspan_people(BeamModel beam, std::size_t people, double mass_each) {
  for (std::size_t i = 0; i < people; ++i) beam.added_masses.push_back({beam.length / 2.0, mass_each});
  return beam;
}

DatasetBundle generate_dataset(const BeamModel& beam, const VehicleModel& vehicle, const ScenarioConfig& cfg,
                               const std::optional<BeamModel>& damaged_variant, std::size_t threads) {
  cfg.validate();
  DatasetBundle bundle;
  bundle.scenario = cfg.scenario;
  bundle.beam = beam;
  bundle.damaged_beam = damaged_variant;
  bundle.vehicle = vehicle;
  bundle.config = cfg;
  bundle.nominal_frequencies = beam_modal_frequencies(beam);
  if (damaged_variant) bundle.damaged_frequencies = beam_modal_frequencies(*damaged_variant);

  const char* prefix = cfg.scenario == Scenario::Direct ? "direct" : cfg.scenario == Scenario::Indirect ? "nominal" : "drive";
  char label[48];
  for (std::size_t k = 0; k < cfg.crossings; ++k) {
    std::snprintf(label, sizeof label, "%s_%03zu", prefix, k);
    bundle.crossings.push_back({label, derive_seed(cfg.seed, k), false});
  }
  if (damaged_variant && cfg.scenario != Scenario::DrivingTest) {
    for (std::size_t k = 0; k < cfg.damaged_crossings; ++k) {
      std::snprintf(label, sizeof label, cfg.scenario == Scenario::Direct ? "damaged_direct_%03zu" : "damaged_%03zu", k);
      bundle.crossings.push_back({label, derive_seed(cfg.seed, kDamagedSeedStream + k), true});
    }
  }

  bundle.records.resize(bundle.crossings.size());
  parallel_for(bundle.crossings.size(), threads, [&](std::size_t i) {
    const auto& info = bundle.crossings[i];
    const BeamModel& b = info.damaged ? *damaged_variant : beam;
    switch (cfg.scenario) {
      case Scenario::Direct: bundle.records[i] = simulate_direct_record(b, cfg, info.seed, info.label); break;
      case Scenario::Indirect: bundle.records[i] = simulate_crossing(b, vehicle, cfg, info.seed, info.label); break;
      case Scenario::DrivingTest: bundle.records[i] = simulate_driving_test(vehicle, cfg, info.seed, info.label); break;
    }
  });
  return bundle;
}

std::string to_string(CaseStudy c) { return c == CaseStudy::Unsw ? "unsw" : "bulli"; }

CaseStudy case_from_string(const std::string& s) {
  if (s == "unsw") return CaseStudy::Unsw;
  if (s == "bulli") return CaseStudy::Bulli;
  throw Error(ErrorKind::ConfigInvalid, "unknown case '" + s + "'");
}

BeamModel case_beam(CaseStudy c) {
  return c == CaseStudy::Unsw ? BeamModel::tuned(17.0, 6.65, 400.0) : BeamModel::tuned(23.9, 6.7, 400.0);
}

std::size_t case_nominal_crossings(CaseStudy c) { return c == CaseStudy::Unsw ? 49 : 39; }

}  // namespace driveby
