#include "driveby/aae.hpp"

#include "driveby/error.hpp"
#include "driveby/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace driveby {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Eigen::MatrixXd apply(Activation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Linear: return z;
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::Sigmoid: return z.unaryExpr([](double v) { return sigmoid(v); });
  }
  return z;
}

}  // namespace

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weight.rows() || (i > 0 && l.inputs() != layers_[i - 1].outputs())) {
      throw Error(ErrorKind::DimensionMismatch, "Mlp: layer " + std::to_string(i) + " does not chain");
    }
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double& Mlp::parameter(std::size_t k) {
  for (auto& l : layers_) {
    const auto w = static_cast<std::size_t>(l.weight.size());
    if (k < w) {
      const auto cols = static_cast<std::size_t>(l.weight.cols());
      return l.weight(static_cast<Eigen::Index>(k / cols), static_cast<Eigen::Index>(k % cols));
    }
    k -= w;
    const auto b = static_cast<std::size_t>(l.bias.size());
    if (k < b) return l.bias(static_cast<Eigen::Index>(k));
    k -= b;
  }
  throw Error(ErrorKind::InvalidArgument, "Mlp::parameter: index out of range");
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(input_dim()) + " inputs, got " +
                                                  std::to_string(x.rows()));
  }
  Eigen::MatrixXd a = x;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * a;
    z.colwise() += l.bias;
    a = apply(l.activation, z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(input_dim()) + " inputs, got " +
                                                  std::to_string(x.rows()));
  }
  cache.activations.assign(1, x);
  cache.preactivations.clear();
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * cache.activations.back();
    z.colwise() += l.bias;
    cache.activations.push_back(apply(l.activation, z));
    cache.preactivations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Eigen::MatrixXd Mlp::backward_preactivation(const Cache& cache, Eigen::MatrixXd d_pre, MlpGrad* grad) const {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& l = layers_[i];
    if (grad) {
      grad->weight[i].noalias() += d_pre * cache.activations[i].transpose();
      grad->bias[i] += d_pre.rowwise().sum();
    }
    Eigen::MatrixXd d_in = l.weight.transpose() * d_pre;
    if (i == 0) return d_in;
    const auto& a = cache.activations[i];
    switch (layers_[i - 1].activation) {
      case Activation::Linear: break;
      case Activation::Tanh: d_in.array() *= 1.0 - a.array().square(); break;
      case Activation::Sigmoid: d_in.array() *= a.array() * (1.0 - a.array()); break;
    }
    d_pre = std::move(d_in);
  }
  return d_pre;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out, MlpGrad* grad) const {
  Eigen::MatrixXd d_pre = d_out;
  const auto& a = cache.activations.back();
  switch (layers_.back().activation) {
    case Activation::Linear: break;
    case Activation::Tanh: d_pre.array() *= 1.0 - a.array().square(); break;
    case Activation::Sigmoid: d_pre.array() *= a.array() * (1.0 - a.array()); break;
  }
  return backward_preactivation(cache, std::move(d_pre), grad);
}

MlpGrad Mlp::zero_grad() const {
  MlpGrad g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

Eigen::VectorXd flatten(const MlpGrad& grad) {
  Eigen::Index n = 0;
  for (std::size_t i = 0; i < grad.weight.size(); ++i) n += grad.weight[i].size() + grad.bias[i].size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < grad.weight.size(); ++i) {
    const auto& w = grad.weight[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out(k++) = w(r, c);
    }
    for (Eigen::Index b = 0; b < grad.bias[i].size(); ++b) out(k++) = grad.bias[i](b);
  }
  return out;
}

void AaeModel::validate() const {
  if (encoder.output_dim() != latent_dim || decoder.input_dim() != latent_dim ||
      discriminator.input_dim() != latent_dim || discriminator.output_dim() != 1 ||
      decoder.output_dim() != encoder.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "encoder/decoder/discriminator widths do not chain");
  }
  if (discriminator.layers().back().activation != Activation::Sigmoid) {
    throw Error(ErrorKind::DimensionMismatch, "discriminator must end in a sigmoid");
  }
}

namespace {

DenseLayer make_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  DenseLayer l;
  l.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  l.bias.resize(static_cast<Eigen::Index>(out));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
  }
  for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = u(rng);
  l.activation = act;
  return l;
}

Mlp make_stack(const std::vector<std::size_t>& widths, Activation hidden, Activation last, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.push_back(make_layer(widths[i], widths[i + 1], i + 2 == widths.size() ? last : hidden, rng));
  }
  return Mlp(std::move(layers));
}

}  // namespace

AaeModel init_model(const AaeArchitecture& arch, std::uint64_t seed) {
  if (arch.input_dim == 0 || arch.latent_dim == 0) throw Error(ErrorKind::DimensionMismatch, "zero-width model");
  Rng rng(seed);
  std::vector<std::size_t> enc{arch.input_dim};
  enc.insert(enc.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
  enc.push_back(arch.latent_dim);
  std::vector<std::size_t> dec(enc.rbegin(), enc.rend());
  std::vector<std::size_t> disc{arch.latent_dim};
  disc.insert(disc.end(), arch.discriminator_hidden.begin(), arch.discriminator_hidden.end());
  disc.push_back(1);

  AaeModel model;
  model.latent_dim = arch.latent_dim;
  model.rng_seed = seed;
  model.encoder = make_stack(enc, Activation::Tanh, Activation::Linear, rng);
  model.decoder = make_stack(dec, Activation::Tanh, Activation::Sigmoid, rng);
  model.discriminator = make_stack(disc, Activation::Tanh, Activation::Sigmoid, rng);
  model.validate();
  return model;
}

AaeModel init_model(std::size_t input_dim, std::size_t latent_dim, std::uint64_t seed) {
  if (input_dim != kSpectralLines) {
    throw Error(ErrorKind::DimensionMismatch, "input_dim must be " + std::to_string(kSpectralLines));
  }
  AaeArchitecture arch;
  arch.input_dim = input_dim;
  arch.latent_dim = latent_dim;
  return init_model(arch, seed);
}

Eigen::VectorXd discriminate(const AaeModel& model, const Eigen::MatrixXd& latents) {
  static constexpr double lo = std::numeric_limits<double>::min();
  static constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  Eigen::VectorXd d = model.discriminator.forward(latents).row(0).transpose();
  return d.unaryExpr([](double v) { return std::clamp(v, lo, hi); });
}

Reconstruction reconstruct(const AaeModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "sample has " + std::to_string(x.size()) + " lines, model expects " +
                                                  std::to_string(model.input_dim()));
  }
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  Reconstruction r;
  r.latent = model.encoder.forward(v);
  r.x_bar = model.decoder.forward(r.latent);
  return r;
}

Reconstruction reconstruct(const AaeModel& model, const SpectralSample& x) { return reconstruct(model, x.values); }

namespace {

void require_batch(const Eigen::MatrixXd& m) {
  if (m.cols() == 0) throw Error(ErrorKind::EmptyBatch, "batch is empty");
}

struct PhaseGrad {
  double loss = 0.0;
  MlpGrad encoder;
  MlpGrad decoder;
};

// Reconstruction term only, gradient for encoder and decoder.
PhaseGrad reconstruction_grad(const AaeModel& model, const Eigen::MatrixXd& x) {
  require_batch(x);
  Mlp::Cache enc_cache, dec_cache;
  const Eigen::MatrixXd y = model.encoder.forward(x, enc_cache);
  const Eigen::MatrixXd x_bar = model.decoder.forward(y, dec_cache);
  const Eigen::MatrixXd diff = x_bar - x;
  const double scale = 1.0 / static_cast<double>(x.size());
  PhaseGrad g{diff.squaredNorm() * scale, model.encoder.zero_grad(), model.decoder.zero_grad()};
  const Eigen::MatrixXd dy = model.decoder.backward(dec_cache, 2.0 * scale * diff, &g.decoder);
  model.encoder.backward(enc_cache, dy, &g.encoder);
  return g;
}

// -(1/n) sum log D(encoder(x)), gradient for the encoder only.
PhaseGrad adversarial_grad(const AaeModel& model, const Eigen::MatrixXd& x) {
  require_batch(x);
  Mlp::Cache enc_cache, disc_cache;
  const Eigen::MatrixXd y = model.encoder.forward(x, enc_cache);
  model.discriminator.forward(y, disc_cache);
  const Eigen::RowVectorXd z = disc_cache.preactivations.back().row(0);
  const double n = static_cast<double>(x.cols());
  PhaseGrad g;
  g.encoder = model.encoder.zero_grad();
  for (Eigen::Index i = 0; i < z.size(); ++i) g.loss += softplus(-z(i));
  g.loss /= n;
  // d/dz of softplus(-z) = sigmoid(z) - 1
  Eigen::MatrixXd d_pre = z.unaryExpr([n](double v) { return (sigmoid(v) - 1.0) / n; });
  const Eigen::MatrixXd dy = model.discriminator.backward_preactivation(disc_cache, d_pre, nullptr);
  model.encoder.backward(enc_cache, dy, &g.encoder);
  return g;
}

void add_into(MlpGrad& acc, const MlpGrad& g) {
  for (std::size_t i = 0; i < acc.weight.size(); ++i) {
    acc.weight[i] += g.weight[i];
    acc.bias[i] += g.bias[i];
  }
}

}  // namespace

LossWithGrad discriminator_loss_grad(const AaeModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_true) {
  require_batch(y);
  require_batch(y_true);
  if (y.cols() != y_true.cols()) throw Error(ErrorKind::DimensionMismatch, "batches differ in size");
  const double n = static_cast<double>(y.cols());
  LossWithGrad out;
  out.discriminator = model.discriminator.zero_grad();

  Mlp::Cache fake_cache, real_cache;
  model.discriminator.forward(y, fake_cache);
  model.discriminator.forward(y_true, real_cache);
  const Eigen::RowVectorXd z_fake = fake_cache.preactivations.back().row(0);
  const Eigen::RowVectorXd z_real = real_cache.preactivations.back().row(0);
  // log D = -softplus(-z), log(1 - D) = -softplus(z)
  for (Eigen::Index i = 0; i < z_real.size(); ++i) out.loss += softplus(-z_real(i)) + softplus(z_fake(i));
  out.loss /= n;

  Eigen::MatrixXd d_real = z_real.unaryExpr([n](double v) { return (sigmoid(v) - 1.0) / n; });
  Eigen::MatrixXd d_fake = z_fake.unaryExpr([n](double v) { return sigmoid(v) / n; });
  model.discriminator.backward_preactivation(real_cache, d_real, &out.discriminator);
  model.discriminator.backward_preactivation(fake_cache, d_fake, &out.discriminator);
  return out;
}

double discriminator_loss(const AaeModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_true) {
  return discriminator_loss_grad(model, y, y_true).loss;
}

LossWithGrad generator_loss_grad(const AaeModel& model, const Eigen::MatrixXd& x) {
  auto rec = reconstruction_grad(model, x);
  auto adv = adversarial_grad(model, x);
  add_into(rec.encoder, adv.encoder);
  LossWithGrad out;
  out.loss = rec.loss + adv.loss;
  out.encoder = std::move(rec.encoder);
  out.decoder = std::move(rec.decoder);
  return out;
}

double generator_loss(const AaeModel& model, const Eigen::MatrixXd& x) {
  require_batch(x);
  const Eigen::MatrixXd y = model.encoder.forward(x);
  const Eigen::MatrixXd x_bar = model.decoder.forward(y);
  Mlp::Cache disc_cache;
  model.discriminator.forward(y, disc_cache);
  const Eigen::RowVectorXd z = disc_cache.preactivations.back().row(0);
  double adv = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) adv += softplus(-z(i));
  return (x_bar - x).squaredNorm() / static_cast<double>(x.size()) + adv / static_cast<double>(x.cols());
}

AdamOptimizer::AdamOptimizer(const Mlp& net, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_grad()), v_(net.zero_grad()) {}

void AdamOptimizer::step(Mlp& net, const MlpGrad& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& layers = net.layers();
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, m_.weight[i], v_.weight[i], grad.weight[i]);
    update(layers[i].bias, m_.bias[i], v_.bias[i], grad.bias[i]);
  }
}

void TrainConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw Error(ErrorKind::ConfigInvalid, "split_ratio must lie in (0, 1)");
  if (!(threshold_percentile > 0.0 && threshold_percentile <= 100.0)) {
    throw Error(ErrorKind::ConfigInvalid, "threshold_percentile must lie in (0, 100]");
  }
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
    throw Error(ErrorKind::ConfigInvalid, "calibration_fraction must lie in (0, 1)");
  }
  if (batch_size == 0) throw Error(ErrorKind::ConfigInvalid, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::ConfigInvalid, "learning_rate must be > 0");
}

namespace {

Eigen::MatrixXd batch_matrix(std::span<const SpectralSample> samples, std::span<const std::size_t> idx) {
  const auto d = static_cast<Eigen::Index>(samples[idx.front()].values.size());
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    x.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(samples[idx[c]].values.data(), d);
  }
  return x;
}

}  // namespace

TrainResult train(AaeModel model, std::span<const SpectralSample> samples, const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (samples.size() < kMinTrainingSamples) {
    throw Error(ErrorKind::TooFewSamples, "training needs at least " + std::to_string(kMinTrainingSamples) +
                                              " samples, got " + std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (s.values.size() != model.input_dim()) throw Error(ErrorKind::DimensionMismatch, "sample width differs from model");
  }
  const auto n_cal = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.calibration_fraction * static_cast<double>(samples.size()))));
  const std::size_t n_fit = samples.size() - n_cal;

  Rng rng(derive_seed(cfg.seed, 0xAAE));
  std::normal_distribution<double> prior(0.0, 1.0);
  AdamOptimizer ae_enc(model.encoder, cfg.learning_rate), ae_dec(model.decoder, cfg.learning_rate);
  AdamOptimizer disc_opt(model.discriminator, cfg.learning_rate), gen_opt(model.encoder, cfg.learning_rate);

  TrainResult result;
  std::vector<std::size_t> order(n_fit);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double rec_sum = 0.0, disc_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n_fit; start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n_fit - start));
      const Eigen::MatrixXd x = batch_matrix(samples, idx);

      // reconstruction phase
      const auto rec = reconstruction_grad(model, x);
      ae_enc.step(model.encoder, rec.encoder);
      ae_dec.step(model.decoder, rec.decoder);

      // regularization phase: discriminator, then encoder as generator
      const Eigen::MatrixXd y = model.encoder.forward(x);
      Eigen::MatrixXd y_true(y.rows(), y.cols());
      for (Eigen::Index c = 0; c < y_true.cols(); ++c) {
        for (Eigen::Index r = 0; r < y_true.rows(); ++r) y_true(r, c) = prior(rng);
      }
      const auto disc = discriminator_loss_grad(model, y, y_true);
      disc_opt.step(model.discriminator, disc.discriminator);
      const auto adv = adversarial_grad(model, x);
      gen_opt.step(model.encoder, adv.encoder);

      rec_sum += rec.loss;
      disc_sum += disc.loss;
      ++batches;
    }
    result.reconstruction_history.push_back(rec_sum / static_cast<double>(batches));
    result.discriminator_history.push_back(disc_sum / static_cast<double>(batches));
  }

  for (std::size_t i = n_fit; i < samples.size(); ++i) {
    result.validation_errors.push_back(reconstruction_error(model, samples[i].values));
  }
  result.threshold = percentile(result.validation_errors, cfg.threshold_percentile);
  result.model = std::move(model);
  return result;
}

double reconstruction_error(const AaeModel& model, std::span<const double> x) {
  const auto r = reconstruct(model, x);
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return (r.x_bar - v).squaredNorm() / static_cast<double>(x.size());
}

DetectionResult classify(const AaeModel& model, double threshold, const SpectralSample& x) {
  DetectionResult r;
  r.error = reconstruction_error(model, x.values);
  r.threshold = threshold;
  r.verdict = r.error > threshold ? Verdict::Anomalous : Verdict::Nominal;
  return r;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(ErrorKind::TooFewSamples, "percentile of an empty set");
  if (!(pct > 0.0 && pct <= 100.0)) throw Error(ErrorKind::InvalidArgument, "percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace driveby
