#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ddlab/matrix.hpp"

namespace ddlab {

/// Architecture of a fully connected ReLU network with a softmax output.
struct NetworkSpec {
  std::size_t input_dim = 3072;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 10;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument if any dimension is zero or there are no
  /// hidden layers.
  void validate() const;

  /// input_dim, hidden_dims..., output_dim
  std::vector<std::size_t> layer_dims() const;
  std::size_t parameter_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

/// The MLP7 / MLP5 / MLP3 presets (case-insensitive). Throws
/// std::invalid_argument for an unknown name.
NetworkSpec preset_spec(std::string_view name, std::uint64_t seed = 0);

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Matrix weight_m, weight_v;
  std::vector<double> bias_m, bias_v;

  bool operator==(const DenseLayer&) const = default;
};

struct NetworkState {
  NetworkSpec spec;
  std::vector<DenseLayer> layers;  // hidden layers, then the output layer
  std::uint64_t adam_steps = 0;

  std::size_t hidden_layer_count() const { return spec.hidden_dims.size(); }

  bool operator==(const NetworkState&) const = default;
};

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> hidden;  // post-ReLU, one per hidden layer
  Matrix logits;
  Matrix probabilities;

  std::size_t batch_size() const { return logits.rows(); }
};

struct LayerGradient {
  Matrix weight;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
};

struct OptimConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 512;

  void validate() const;
};

struct LossAccuracy {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

/// Weights uniform on +-sqrt(6 / fan_in) drawn layer by layer in row-major
/// order from the spec seed; biases and moments zero.
NetworkState init_network(const NetworkSpec& spec);

/// Row-wise softmax with the row maximum subtracted first.
Matrix softmax_rows(const Matrix& logits);

ForwardTrace forward(const NetworkState& state, const Matrix& batch);

/// A trace holding only logits and their softmax; used for evaluating
/// externally produced scores.
ForwardTrace trace_from_logits(Matrix logits);

/// Per-row cross-entropy -ln p[label], computed through log-sum-exp.
std::vector<double> sample_losses(const ForwardTrace& trace, std::span<const int> labels);

/// Per-row argmax of the probabilities; ties go to the lowest index.
std::vector<int> predictions(const ForwardTrace& trace);

LossAccuracy loss_and_accuracy(const ForwardTrace& trace, std::span<const int> labels);

/// Gradients of the batch-mean cross-entropy.
Gradients backward(const NetworkState& state, const ForwardTrace& trace,
                   std::span<const int> labels);

/// One bias-corrected Adam update, in place. Throws NonFiniteError on a
/// non-finite gradient or if an updated parameter is non-finite.
void adam_step(NetworkState& state, const Gradients& grads, const OptimConfig& cfg);

struct GradientProbe {
  std::size_t layer = 0;
  bool is_bias = false;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::vector<GradientProbe> probes;
};

/// Compares backward() against central differences for n_params parameters
/// sampled uniformly (with replacement) using `sample_seed`.
GradientCheckResult gradient_check(const NetworkState& state, const Matrix& batch,
                                   std::span<const int> labels, std::size_t n_params,
                                   std::uint64_t sample_seed, double step = 1e-5);

/// Builds a network from `spec`, a seeded batch of 16 inputs in [0, 1) with
/// random labels, and checks n_params sampled parameters.
double gradient_check(const NetworkSpec& spec, std::size_t n_params);

}  // namespace ddlab
