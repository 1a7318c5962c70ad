#include "driveby/error.hpp"
#include "driveby/rng.hpp"
#include "driveby/vbi_sim.hpp"

#include <doctest.h>

#include <cmath>

using namespace driveby;

namespace {

double closed_form(const BeamModel& b, std::size_t n) {
  const double nn = static_cast<double>(n * n);
  return nn * M_PI / (2.0 * b.length * b.length) * std::sqrt(b.flexural_rigidity / b.mass_per_length);
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

ScenarioConfig quiet_config(Scenario s) {
  ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.sensor_noise_rms = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("modal frequencies of the bare beam") {
  const auto beam = BeamModel::tuned(17.0, 6.65, 400.0);
  const auto f = beam_modal_frequencies(beam);
  REQUIRE(f.size() == beam.n_modes);
  CHECK(f[0] == doctest::Approx(6.65).epsilon(1e-12));
  for (std::size_t n = 1; n <= f.size(); ++n) {
    CHECK(std::abs(f[n - 1] - closed_form(beam, n)) / closed_form(beam, n) <= 1e-10);
  }

  auto stiffer = beam;
  stiffer.flexural_rigidity *= 2.0;
  const auto g = beam_modal_frequencies(stiffer);
  for (std::size_t n = 0; n < f.size(); ++n) CHECK(g[n] / f[n] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  const auto case2 = case_beam(CaseStudy::Bulli);
  CHECK(case2.length == 23.9);
  CHECK(beam_modal_frequencies(case2)[0] == doctest::Approx(6.7).epsilon(1e-12));
}

TEST_CASE("added mass lowers the first frequency") {
  const auto beam = case_beam(CaseStudy::Unsw);
  const double f1 = beam_modal_frequencies(beam)[0];
  for (double m : {1.0, 75.0, 375.0, 2000.0}) {
    auto loaded = beam;
    loaded.added_masses.push_back({beam.length / 2.0, m});
    CHECK(beam_modal_frequencies(loaded)[0] < f1);
  }
  const auto people = with_midspan_people(beam);
  CHECK(people.added_masses.size() == 5);
  CHECK(beam_modal_frequencies(people)[0] < f1);
}

TEST_CASE("mode shapes") {
  const auto beam = case_beam(CaseStudy::Unsw);
  const auto modal = modal_system(beam);
  const double quarter = std::abs(modal.shape(1, beam.length / 4.0, beam.length));
  const double mid = std::abs(modal.shape(1, beam.length / 2.0, beam.length));
  CHECK(mid <= 0.01 * quarter);
  CHECK(std::abs(modal.shape(0, beam.length / 2.0, beam.length)) > std::abs(modal.shape(0, beam.length / 4.0, beam.length)));
}

TEST_CASE("oscillator energy decays once forcing stops") {
  const double omega = 2.0 * M_PI * 6.65, zeta = 0.02, dt = 1.0 / 500.0;
  std::vector<double> force(5000, 0.0);
  for (std::size_t i = 0; i < 200; ++i) force[i] = std::sin(0.3 * static_cast<double>(i));
  const auto r = integrate_oscillator(omega, zeta, force, dt);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t i = 200; i < force.size(); ++i) {
    const double e = 0.5 * r.qd[i] * r.qd[i] + 0.5 * omega * omega * r.q[i] * r.q[i];
    CHECK(e <= previous * (1.0 + 1e-12));
    previous = e;
  }
  CHECK(previous > 0.0);

  // Undamped free vibration from a known state conserves energy and matches the closed form.
  std::vector<double> step(1000, 1.0);
  const auto s = integrate_oscillator(omega, 0.0, step, dt);
  for (std::size_t i = 0; i < step.size(); i += 37) {
    const double t = static_cast<double>(i) * dt;
    CHECK(s.q[i] == doctest::Approx((1.0 - std::cos(omega * t)) / (omega * omega)).epsilon(1e-9));
  }
}

TEST_CASE("direct records") {
  const auto beam = case_beam(CaseStudy::Unsw);
  auto cfg = quiet_config(Scenario::Direct);

  SUBCASE("zero forcing gives zero output") {
    cfg.pedestrians.rms = 0.0;
    const auto rec = simulate_direct_record(beam, cfg, 1, "zero");
    REQUIRE(rec.channel_count() == 3);
    for (const auto& ch : rec.channels) CHECK(rms(ch) == 0.0);
  }
  SUBCASE("shape and determinism") {
    cfg.crossings = 2;
    cfg.seed = 5;
    const auto a = simulate_direct(beam, cfg);
    const auto b = simulate_direct(beam, cfg);
    REQUIRE(a.size() == 2);
    CHECK(a[0].samples_per_channel() == 7500);
    CHECK(a[0].sample_rate == 500.0);
    CHECK(a[0].channels == b[0].channels);
    CHECK(a[0].channels != a[1].channels);
  }
  SUBCASE("linearity in the pedestrian force") {
    const auto one = simulate_beam_under_pedestrians(beam, cfg, 7, 20.0);
    cfg.pedestrians.rms *= 2.0;
    const auto two = simulate_beam_under_pedestrians(beam, cfg, 7, 20.0);
    const double ratio = two.eta.norm() / one.eta.norm();
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.01));
  }
  SUBCASE("wrong scenario") {
    cfg.scenario = Scenario::Indirect;
    CHECK_THROWS_AS(simulate_direct(beam, cfg), Error);
  }
}

TEST_CASE("crossing records") {
  const VehicleModel vehicle;
  auto cfg = quiet_config(Scenario::Indirect);

  const auto rec = simulate_crossing(case_beam(CaseStudy::Unsw), vehicle, cfg, 3, "c1");
  CHECK(rec.channel_count() == 4);
  CHECK(rec.duration() == doctest::Approx(100.0).epsilon(1e-3));

  const auto rec2 = simulate_crossing(case_beam(CaseStudy::Bulli), vehicle, cfg, 3, "c2");
  CHECK(rec2.duration() == doctest::Approx(23.9 / 0.17).epsilon(1e-3));
  CHECK(rec2.duration() == doctest::Approx(140.6).epsilon(1e-3));

  CrossingOptions bare{false, false, false, false};
  const auto pure = simulate_crossing(case_beam(CaseStudy::Unsw), vehicle, cfg, 3, "pure", bare);
  for (const auto& ch : pure.channels) {
    const double r = rms(ch);
    CHECK(r > 0.0);
    CHECK(std::isfinite(r));
    CHECK(r < 1.0);
  }
  CHECK(simulate_crossing(case_beam(CaseStudy::Unsw), vehicle, cfg, 3, "c1").channels == rec.channels);

  auto fast = vehicle;
  fast.speed = 10.0;
  try {
    simulate_crossing(case_beam(CaseStudy::Unsw), fast, cfg, 3, "fast");
    FAIL("expected VehicleFasterThanBeam");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::VehicleFasterThanBeam);
  }
}

TEST_CASE("driving test records carry no bridge content") {
  auto cfg = quiet_config(Scenario::DrivingTest);
  CrossingOptions only_motor{false, false, true, false};
  const auto rec = simulate_driving_test(VehicleModel{}, cfg, 1, "drive", only_motor);
  CHECK(rec.channel_count() == 4);
  CHECK(rec.duration() == doctest::Approx(15.0));
  for (const auto& ch : rec.channels) {
    CHECK(rms(ch) >= 0.8 / std::sqrt(2.0) - 1e-3);
    CHECK(rms(ch) <= 1.2 / std::sqrt(2.0) + 1e-3);
  }
}

TEST_CASE("dataset bundles") {
  const VehicleModel vehicle;
  SUBCASE("case I with damage") {
    ScenarioConfig cfg;
    cfg.crossings = case_nominal_crossings(CaseStudy::Unsw);
    cfg.seed = 11;
    const auto beam = case_beam(CaseStudy::Unsw);
    const auto bundle = generate_dataset(beam, vehicle, cfg, with_midspan_people(beam), 2);
    CHECK(bundle.records.size() == 59);
    std::size_t damaged = 0;
    for (const auto& c : bundle.crossings) damaged += c.damaged;
    CHECK(damaged == 10);
    CHECK_FALSE(bundle.crossings.front().damaged);
    CHECK(bundle.crossings.back().damaged);
    CHECK(bundle.crossings[3].seed == derive_seed(11, 3));
    REQUIRE(bundle.damaged_frequencies.size() > 0);
    CHECK(bundle.damaged_frequencies[0] < bundle.nominal_frequencies[0]);

    const auto serial = generate_dataset(beam, vehicle, cfg, with_midspan_people(beam), 1);
    CHECK(serial.records[58].channels == bundle.records[58].channels);
  }
  SUBCASE("case II") {
    ScenarioConfig cfg;
    cfg.crossings = case_nominal_crossings(CaseStudy::Bulli);
    const auto bundle = generate_dataset(case_beam(CaseStudy::Bulli), vehicle, cfg);
    CHECK(bundle.records.size() == 39);
    CHECK_FALSE(bundle.damaged_beam.has_value());
  }
  SUBCASE("singleton") {
    ScenarioConfig cfg;
    cfg.crossings = 1;
    const auto bundle = generate_dataset(case_beam(CaseStudy::Unsw), vehicle, cfg);
    CHECK(bundle.records.size() == 1);
    CHECK(bundle.crossings.size() == 1);
  }
}

TEST_CASE("case names") {
  CHECK(case_from_string(to_string(CaseStudy::Unsw)) == CaseStudy::Unsw);
  CHECK(case_from_string(to_string(CaseStudy::Bulli)) == CaseStudy::Bulli);
  CHECK_THROWS_AS(case_from_string("golden-gate"), Error);
  CHECK(scenario_from_string(to_string(Scenario::DrivingTest)) == Scenario::DrivingTest);
}
