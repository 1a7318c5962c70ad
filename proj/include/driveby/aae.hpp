#pragma once

#include "driveby/preprocess.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace driveby {

enum class Activation { Linear, Tanh, Sigmoid };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::Linear;

  std::size_t inputs() const noexcept { return static_cast<std::size_t>(weight.cols()); }
  std::size_t outputs() const noexcept { return static_cast<std::size_t>(weight.rows()); }
};

// Gradient (or optimizer moment) with the same shapes as an Mlp.
struct MlpGrad {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

// Feed-forward stack of affine maps. Batches are column-major: one sample per column.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // [0] is the input
    std::vector<Eigen::MatrixXd> preactivations;
  };

  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  // Flat parameter access in layer order, weights row-major then biases.
  double& parameter(std::size_t k);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  // Back-propagates d(loss)/d(last pre-activation). Adds into grad when given,
  // returns d(loss)/d(input).
  Eigen::MatrixXd backward_preactivation(const Cache& cache, Eigen::MatrixXd d_pre, MlpGrad* grad) const;
  // Same, starting from d(loss)/d(output).
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out, MlpGrad* grad) const;

  MlpGrad zero_grad() const;

 private:
  std::vector<DenseLayer> layers_;
};

Eigen::VectorXd flatten(const MlpGrad& grad);

struct AaeArchitecture {
  std::size_t input_dim = kSpectralLines;
  std::vector<std::size_t> encoder_hidden{256, 64};
  std::size_t latent_dim = 8;
  std::vector<std::size_t> discriminator_hidden{64, 32};
};

// Encoder: tanh hidden, linear latent. Decoder mirrors it with a sigmoid
// output. Discriminator: tanh hidden, sigmoid output (probability of prior).
struct AaeModel {
  Mlp encoder;
  Mlp decoder;
  Mlp discriminator;
  std::size_t latent_dim = 0;
  std::uint64_t rng_seed = 0;

  std::size_t input_dim() const { return encoder.input_dim(); }
  // Throws DimensionMismatch when the three networks do not chain.
  void validate() const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
AaeModel init_model(const AaeArchitecture& arch, std::uint64_t seed);
// Default architecture; input_dim must equal the 900 spectral lines.
AaeModel init_model(std::size_t input_dim, std::size_t latent_dim, std::uint64_t seed);

// Discriminator output, clamped into the open interval (0, 1).
Eigen::VectorXd discriminate(const AaeModel& model, const Eigen::MatrixXd& latents);

struct Reconstruction {
  Eigen::VectorXd x_bar;
  Eigen::VectorXd latent;
};

Reconstruction reconstruct(const AaeModel& model, const SpectralSample& x);
Reconstruction reconstruct(const AaeModel& model, std::span<const double> x);

struct LossWithGrad {
  double loss = 0.0;
  MlpGrad encoder;
  MlpGrad decoder;
  MlpGrad discriminator;
};

// -(1/n) sum[log D(y_true) + log(1 - D(y))]; gradient w.r.t. the discriminator.
double discriminator_loss(const AaeModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_true);
LossWithGrad discriminator_loss_grad(const AaeModel& model, const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_true);

// Mean squared reconstruction error over batch and components minus
// (1/n) sum log D(encoder(x)); gradient w.r.t. encoder and decoder.
double generator_loss(const AaeModel& model, const Eigen::MatrixXd& x);
LossWithGrad generator_loss_grad(const AaeModel& model, const Eigen::MatrixXd& x);

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double split_ratio = 0.8;            // train fraction of the outer split
  double threshold_percentile = 90.0;
  double calibration_fraction = 0.2;   // tail of the training set held out for the threshold
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  AaeModel model;
  double threshold = 0.0;
  std::vector<double> validation_errors;
  std::vector<double> reconstruction_history;  // mean reconstruction loss per epoch
  std::vector<double> discriminator_history;
};

inline constexpr std::size_t kMinTrainingSamples = 10;

// Alternating reconstruction and regularization phases per mini-batch. The
// last calibration_fraction of the samples is never trained on; the threshold
// is the threshold_percentile of their reconstruction errors.
TrainResult train(AaeModel model, std::span<const SpectralSample> samples, const TrainConfig& cfg);

enum class Verdict { Nominal, Anomalous };

struct DetectionResult {
  double error = 0.0;
  double threshold = 0.0;
  Verdict verdict = Verdict::Nominal;
};

// Mean over components of (x - x_bar)^2.
double reconstruction_error(const AaeModel& model, std::span<const double> x);
DetectionResult classify(const AaeModel& model, double threshold, const SpectralSample& x);

// Linear interpolation between order statistics, pct in (0, 100].
double percentile(std::vector<double> values, double pct);

// Adam with bias correction; one moment pair per parameter tensor.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const Mlp& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Mlp& net, const MlpGrad& grad);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  MlpGrad m_, v_;
};

}  // namespace driveby
