#include "ddlab/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "ddlab/error.hpp"
#include "ddlab/rng.hpp"

namespace ddlab {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite value");
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows)
    throw DimensionError("label count " + std::to_string(labels.size()) +
                         " does not match batch size " + std::to_string(rows));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
}

double mean_loss_of(const NetworkState& state, const Matrix& batch,
                    std::span<const int> labels) {
  const auto losses = sample_losses(forward(state, batch), labels);
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("NetworkSpec: input_dim must be >= 1");
  if (output_dim == 0) throw std::invalid_argument("NetworkSpec: output_dim must be >= 1");
  if (hidden_dims.empty())
    throw std::invalid_argument("NetworkSpec: at least one hidden layer is required");
  for (std::size_t d : hidden_dims)
    if (d == 0) throw std::invalid_argument("NetworkSpec: hidden dims must be >= 1");
}

std::vector<std::size_t> NetworkSpec::layer_dims() const {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(output_dim);
  return dims;
}

std::size_t NetworkSpec::parameter_count() const {
  const auto dims = layer_dims();
  std::size_t n = 0;
  for (std::size_t l = 1; l < dims.size(); ++l) n += dims[l] * dims[l - 1] + dims[l];
  return n;
}

NetworkSpec preset_spec(std::string_view name, std::uint64_t seed) {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  NetworkSpec spec;
  spec.seed = seed;
  if (key == "mlp7")
    spec.hidden_dims = {2048, 2048, 1024, 1024, 512, 512};
  else if (key == "mlp5")
    spec.hidden_dims = {2048, 1024, 512, 512};
  else if (key == "mlp3")
    spec.hidden_dims = {1024, 512};
  else
    throw std::invalid_argument("unknown network preset '" + std::string(name) + "'");
  return spec;
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
}

NetworkState init_network(const NetworkSpec& spec) {
  spec.validate();
  NetworkState state;
  state.spec = spec;
  Rng rng(spec.seed);
  const auto dims = spec.layer_dims();
  for (std::size_t l = 1; l < dims.size(); ++l) {
    const std::size_t in = dims[l - 1], out = dims[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), Matrix(out, in),
                     Matrix(out, in), std::vector<double>(out, 0.0),
                     std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.flat()) w = rng.uniform(-bound, bound);
    state.layers.push_back(std::move(layer));
  }
  return state;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto z = logits.row(r);
    auto p = probs.row(r);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (double& v : p) v /= sum;
  }
  return probs;
}

ForwardTrace forward(const NetworkState& state, const Matrix& batch) {
  if (batch.cols() != state.spec.input_dim)
    throw DimensionError("forward: batch has " + std::to_string(batch.cols()) +
                         " columns, network expects " + std::to_string(state.spec.input_dim));
  require_finite(batch.flat(), "forward input");
  ForwardTrace trace;
  trace.input = batch;
  const std::size_t hidden = state.hidden_layer_count();
  trace.hidden.reserve(hidden);
  const Matrix* prev = &trace.input;
  for (std::size_t l = 0; l < hidden; ++l) {
    Matrix h = affine_rows(*prev, state.layers[l].weight, state.layers[l].bias);
    for (double& v : h.flat()) v = v > 0.0 ? v : 0.0;
    trace.hidden.push_back(std::move(h));
    prev = &trace.hidden.back();
  }
  trace.logits = affine_rows(*prev, state.layers[hidden].weight, state.layers[hidden].bias);
  trace.probabilities = softmax_rows(trace.logits);
  return trace;
}

ForwardTrace trace_from_logits(Matrix logits) {
  ForwardTrace trace;
  trace.probabilities = softmax_rows(logits);
  trace.logits = std::move(logits);
  return trace;
}

std::vector<double> sample_losses(const ForwardTrace& trace, std::span<const int> labels) {
  check_labels(labels, trace.logits.rows(), trace.logits.cols());
  std::vector<double> losses(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto z = trace.logits.row(r);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    losses[r] = zmax + std::log(sum) - z[static_cast<std::size_t>(labels[r])];
  }
  return losses;
}

std::vector<int> predictions(const ForwardTrace& trace) {
  std::vector<int> pred(trace.probabilities.rows());
  for (std::size_t r = 0; r < pred.size(); ++r) {
    const auto p = trace.probabilities.row(r);
    pred[r] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return pred;
}

LossAccuracy loss_and_accuracy(const ForwardTrace& trace, std::span<const int> labels) {
  const auto losses = sample_losses(trace, labels);
  const auto pred = predictions(trace);
  LossAccuracy out;
  if (losses.empty()) return out;
  double sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < losses.size(); ++r) {
    sum += losses[r];
    if (pred[r] == labels[r]) ++correct;
  }
  const double n = static_cast<double>(losses.size());
  out.mean_loss = sum / n;
  out.accuracy = static_cast<double>(correct) / n;
  return out;
}

Gradients backward(const NetworkState& state, const ForwardTrace& trace,
                   std::span<const int> labels) {
  const std::size_t batch = trace.batch_size();
  const std::size_t hidden = state.hidden_layer_count();
  if (trace.hidden.size() != hidden || trace.input.rows() != batch ||
      trace.probabilities.cols() != state.spec.output_dim)
    throw DimensionError("backward: trace does not belong to this network");
  check_labels(labels, batch, state.spec.output_dim);

  Matrix delta = trace.probabilities;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    delta(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (double& v : delta.row(r)) v *= inv_batch;
  }

  Gradients grads;
  grads.layers.resize(hidden + 1);
  for (std::size_t l = hidden + 1; l-- > 0;) {
    const Matrix& below = l == 0 ? trace.input : trace.hidden[l - 1];
    LayerGradient& g = grads.layers[l];
    g.weight = weight_gradient(delta, below);
    g.bias.assign(delta.cols(), 0.0);
    for (std::size_t r = 0; r < batch; ++r) {
      const auto d = delta.row(r);
      for (std::size_t c = 0; c < d.size(); ++c) g.bias[c] += d[c];
    }
    if (l == 0) break;
    Matrix next = input_gradient(delta, state.layers[l].weight);
    const auto gate = below.flat();
    auto nd = next.flat();
    for (std::size_t i = 0; i < nd.size(); ++i)
      if (!(gate[i] > 0.0)) nd[i] = 0.0;
    delta = std::move(next);
  }
  return grads;
}

void adam_step(NetworkState& state, const Gradients& grads, const OptimConfig& cfg) {
  if (grads.layers.size() != state.layers.size())
    throw DimensionError("adam_step: gradient layer count mismatch");
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    if (grads.layers[l].weight.rows() != state.layers[l].weight.rows() ||
        grads.layers[l].weight.cols() != state.layers[l].weight.cols() ||
        grads.layers[l].bias.size() != state.layers[l].bias.size())
      throw DimensionError("adam_step: gradient shape mismatch in layer " + std::to_string(l));
    require_finite(grads.layers[l].weight.flat(), "adam_step gradient");
    require_finite(grads.layers[l].bias, "adam_step gradient");
  }

  state.adam_steps += 1;
  const double t = static_cast<double>(state.adam_steps);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](std::span<double> theta, std::span<double> m, std::span<double> v,
                    std::span<const double> g) {
    bool finite = true;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
      finite = finite && std::isfinite(theta[i]);
    }
    if (!finite) throw NonFiniteError("adam_step: parameter became non-finite");
  };

  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    DenseLayer& layer = state.layers[l];
    update(layer.weight.flat(), layer.weight_m.flat(), layer.weight_v.flat(),
           grads.layers[l].weight.flat());
    update(layer.bias, layer.bias_m, layer.bias_v, grads.layers[l].bias);
  }
}

GradientCheckResult gradient_check(const NetworkState& state, const Matrix& batch,
                                   std::span<const int> labels, std::size_t n_params,
                                   std::uint64_t sample_seed, double step) {
  const Gradients grads = backward(state, forward(state, batch), labels);
  NetworkState probe = state;
  Rng rng(sample_seed);

  std::vector<std::size_t> layer_sizes;
  std::size_t total = 0;
  for (const auto& layer : state.layers) {
    layer_sizes.push_back(layer.weight.size() + layer.bias.size());
    total += layer_sizes.back();
  }

  GradientCheckResult result;
  for (std::size_t s = 0; s < n_params; ++s) {
    std::size_t index = static_cast<std::size_t>(rng.below(total));
    GradientProbe p;
    while (index >= layer_sizes[p.layer]) index -= layer_sizes[p.layer++];
    DenseLayer& layer = probe.layers[p.layer];
    double* param;
    if (index < layer.weight.size()) {
      p.row = index / layer.weight.cols();
      p.col = index % layer.weight.cols();
      param = &layer.weight(p.row, p.col);
      p.analytic = grads.layers[p.layer].weight(p.row, p.col);
    } else {
      p.is_bias = true;
      p.row = index - layer.weight.size();
      param = &layer.bias[p.row];
      p.analytic = grads.layers[p.layer].bias[p.row];
    }
    const double saved = *param;
    *param = saved + step;
    const double up = mean_loss_of(probe, batch, labels);
    *param = saved - step;
    const double down = mean_loss_of(probe, batch, labels);
    *param = saved;
    p.numeric = (up - down) / (2.0 * step);
    const double scale =
        std::max({std::abs(p.analytic), std::abs(p.numeric), 1e-12});
    p.relative_error = std::abs(p.analytic - p.numeric) / scale;
    result.max_relative_error = std::max(result.max_relative_error, p.relative_error);
    result.probes.push_back(p);
  }
  return result;
}

double gradient_check(const NetworkSpec& spec, std::size_t n_params) {
  const NetworkState state = init_network(spec);
  constexpr std::size_t kBatch = 16;
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix batch(kBatch, spec.input_dim);
  for (double& x : batch.flat()) x = rng.uniform();
  std::vector<int> labels(kBatch);
  for (int& y : labels) y = static_cast<int>(rng.below(spec.output_dim));
  return gradient_check(state, batch, labels, n_params, rng.next_u64()).max_relative_error;
}

}  // namespace ddlab
