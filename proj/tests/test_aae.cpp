#include "driveby/aae.hpp"
#include "driveby/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace driveby;

namespace {

AaeModel small_model(std::uint64_t seed) {
  AaeArchitecture arch;
  arch.input_dim = 6;
  arch.encoder_hidden = {5};
  arch.latent_dim = 3;
  arch.discriminator_hidden = {4};
  return init_model(arch, seed);
}

Eigen::MatrixXd uniform_batch(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Central differences over every parameter of one network.
Eigen::VectorXd numeric_grad(AaeModel& model, Mlp AaeModel::*net, const std::function<double()>& loss) {
  Mlp& m = model.*net;
  Eigen::VectorXd g(static_cast<Eigen::Index>(m.parameter_count()));
  const double h = 1e-5;
  for (std::size_t k = 0; k < m.parameter_count(); ++k) {
    double& p = m.parameter(k);
    const double keep = p;
    p = keep + h;
    const double up = loss();
    p = keep - h;
    const double down = loss();
    p = keep;
    g(static_cast<Eigen::Index>(k)) = (up - down) / (2.0 * h);
  }
  return g;
}

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

Mlp linear_identity(std::size_t n) {
  DenseLayer l;
  l.weight = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  l.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  l.activation = Activation::Linear;
  return Mlp({l});
}

Mlp constant_discriminator(std::size_t n, double weight, double bias) {
  DenseLayer l;
  l.weight = Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(n), weight);
  l.bias = Eigen::VectorXd::Constant(1, bias);
  l.activation = Activation::Sigmoid;
  return Mlp({l});
}

AaeModel identity_model(std::size_t n, double d_weight = 0.0, double d_bias = 0.0) {
  AaeModel m;
  m.encoder = linear_identity(n);
  m.decoder = linear_identity(n);
  m.discriminator = constant_discriminator(n, d_weight, d_bias);
  m.latent_dim = n;
  return m;
}

std::vector<SpectralSample> smooth_samples(std::size_t count, std::size_t width, std::uint64_t seed, double center) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.01);
  std::vector<SpectralSample> out;
  for (std::size_t s = 0; s < count; ++s) {
    SpectralSample x;
    x.normalized = true;
    for (std::size_t k = 0; k < width; ++k) {
      const double f = static_cast<double>(k) / static_cast<double>(width);
      x.values.push_back(std::clamp(std::exp(-std::pow((f - center) / 0.05, 2)) + jitter(rng), 0.0, 1.0));
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

TEST_CASE("init_model shapes and determinism") {
  const auto a = init_model(900, 8, 42);
  CHECK(a.encoder.input_dim() == 900);
  CHECK(a.encoder.output_dim() == 8);
  CHECK(a.decoder.input_dim() == 8);
  CHECK(a.decoder.output_dim() == 900);
  CHECK(a.discriminator.input_dim() == 8);
  CHECK(a.discriminator.output_dim() == 1);
  CHECK(a.encoder.layers().front().activation == Activation::Tanh);
  CHECK(a.encoder.layers().back().activation == Activation::Linear);
  CHECK(a.decoder.layers().back().activation == Activation::Sigmoid);

  const auto b = init_model(900, 8, 42);
  const auto c = init_model(900, 8, 43);
  for (std::size_t i = 0; i < a.encoder.layers().size(); ++i) {
    CHECK(a.encoder.layers()[i].weight == b.encoder.layers()[i].weight);
    CHECK(a.encoder.layers()[i].bias == b.encoder.layers()[i].bias);
  }
  CHECK(a.encoder.layers()[0].weight != c.encoder.layers()[0].weight);
  const double bound = 1.0 / std::sqrt(900.0);
  CHECK(a.encoder.layers()[0].weight.cwiseAbs().maxCoeff() <= bound);
  CHECK_THROWS_AS(init_model(100, 8, 1), Error);
}

TEST_CASE("reconstruct") {
  auto m = identity_model(4);
  const std::vector<double> x{0.1, 0.9, 0.3, 0.5};
  const auto r = reconstruct(m, x);
  for (int i = 0; i < 4; ++i) CHECK(r.x_bar(i) == x[static_cast<std::size_t>(i)]);
  CHECK(reconstruction_error(m, x) == 0.0);
  SpectralSample s;
  s.values = x;
  s.normalized = true;
  const auto d = classify(m, 0.0, s);
  CHECK(d.error == 0.0);
  CHECK(d.verdict == Verdict::Nominal);

  const std::vector<double> wrong(5, 0.0);
  try {
    reconstruct(m, wrong);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("loss values at known points") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(4, 3, 0.2);
  SUBCASE("chance-level discriminator") {
    auto m = identity_model(4);
    CHECK(discriminator_loss(m, y, -y) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(generator_loss(m, y) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("perfect discriminator") {
    auto m = identity_model(4, 100.0, 0.0);
    CHECK(discriminator_loss(m, -y, y) < 1e-12);
  }
  SUBCASE("perfect generator") {
    auto m = identity_model(4, 0.0, 1000.0);
    CHECK(generator_loss(m, y) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("empty batch") {
    auto m = identity_model(4);
    try {
      generator_loss(m, Eigen::MatrixXd(4, 0));
      FAIL("expected EmptyBatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyBatch);
    }
  }
}

TEST_CASE("discriminator output stays inside (0, 1)") {
  auto m = identity_model(2, 1.0, 0.0);
  Eigen::MatrixXd y(2, 3);
  y << 1e6, -1e6, 0.0, 1e6, -1e6, 0.0;
  const auto d = discriminate(m, y);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK(d(i) > 0.0);
    CHECK(d(i) < 1.0);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(2024);
  for (int instance = 0; instance < 20; ++instance) {
    auto model = small_model(1000 + static_cast<std::uint64_t>(instance));
    const auto x = uniform_batch(6, 4, rng, 0.0, 1.0);
    const auto y = uniform_batch(3, 4, rng, -2.0, 2.0);
    const auto y_true = uniform_batch(3, 4, rng, -2.0, 2.0);

    const auto dg = discriminator_loss_grad(model, y, y_true);
    CHECK(dg.loss == doctest::Approx(discriminator_loss(model, y, y_true)).epsilon(1e-12));
    const auto dn = numeric_grad(model, &AaeModel::discriminator, [&] { return discriminator_loss(model, y, y_true); });
    CHECK(rel_error(flatten(dg.discriminator), dn) <= 1e-4);

    const auto gg = generator_loss_grad(model, x);
    CHECK(gg.loss == doctest::Approx(generator_loss(model, x)).epsilon(1e-12));
    const auto en = numeric_grad(model, &AaeModel::encoder, [&] { return generator_loss(model, x); });
    const auto de = numeric_grad(model, &AaeModel::decoder, [&] { return generator_loss(model, x); });
    CHECK(rel_error(flatten(gg.encoder), en) <= 1e-4);
    CHECK(rel_error(flatten(gg.decoder), de) <= 1e-4);
  }
}

TEST_CASE("percentile uses linear interpolation") {
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 90.0) == doctest::Approx(3.7));
  CHECK(percentile({4.0, 1.0, 3.0, 2.0}, 50.0) == doctest::Approx(2.5));
  CHECK(percentile({5.0}, 90.0) == 5.0);
  CHECK(percentile({1.0, 9.0}, 100.0) == 9.0);
  CHECK_THROWS_AS(percentile({}, 90.0), Error);
}

TEST_CASE("train preconditions and determinism") {
  AaeArchitecture arch;
  arch.input_dim = 900;
  arch.encoder_hidden = {16};
  arch.latent_dim = 4;
  arch.discriminator_hidden = {8};
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 3;

  const auto few = smooth_samples(9, 900, 1, 0.5);
  try {
    train(init_model(arch, 1), few, cfg);
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewSamples);
  }

  const auto samples = smooth_samples(20, 900, 2, 0.5);
  const auto a = train(init_model(arch, 1), samples, cfg);
  const auto b = train(init_model(arch, 1), samples, cfg);
  CHECK(a.threshold == b.threshold);
  CHECK(a.validation_errors == b.validation_errors);
  CHECK(a.validation_errors.size() == 4);
  CHECK(a.reconstruction_history.size() == 5);

  TrainConfig bad = cfg;
  bad.split_ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.threshold_percentile = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("training separates a shifted regime") {
  AaeArchitecture arch;
  arch.input_dim = 900;
  arch.encoder_hidden = {32};
  arch.latent_dim = 4;
  arch.discriminator_hidden = {16};
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.seed = 11;

  const auto nominal = smooth_samples(40, 900, 5, 0.5);
  const auto held_out = smooth_samples(10, 900, 6, 0.5);
  const auto shifted = smooth_samples(10, 900, 7, 0.42);
  const auto result = train(init_model(arch, 4), nominal, cfg);
  CHECK(result.reconstruction_history.back() < 0.1 * result.reconstruction_history.front());

  double nominal_mean = 0.0, shifted_mean = 0.0;
  for (const auto& s : held_out) nominal_mean += classify(result.model, result.threshold, s).error / 10.0;
  for (const auto& s : shifted) {
    const auto d = classify(result.model, result.threshold, s);
    shifted_mean += d.error / 10.0;
    CHECK((d.verdict == Verdict::Anomalous) == (d.error > result.threshold));
    const auto again = classify(result.model, result.threshold, s);
    CHECK(again.error == d.error);
  }
  CHECK(shifted_mean > nominal_mean);

  double norm = 0.0;
  for (const auto& s : held_out) norm += reconstruct(result.model, s).latent.norm() / 10.0;
  CHECK(norm >= std::sqrt(4.0) / 3.0);
  CHECK(norm <= 3.0 * std::sqrt(4.0));
}

TEST_CASE("training on a constant dataset drives the reconstruction loss to zero") {
  AaeArchitecture arch;
  arch.input_dim = 900;
  arch.encoder_hidden = {16};
  arch.latent_dim = 2;
  arch.discriminator_hidden = {8};
  TrainConfig cfg;
  cfg.epochs = 1500;
  cfg.seed = 2;
  std::vector<SpectralSample> constant(12, smooth_samples(1, 900, 9, 0.3).front());
  const auto result = train(init_model(arch, 8), constant, cfg);
  CHECK(result.reconstruction_history.back() < 1e-3);
  CHECK(result.reconstruction_history.back() < result.reconstruction_history.front());
}
