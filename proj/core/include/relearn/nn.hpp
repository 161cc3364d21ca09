#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "relearn/tensor.hpp"

namespace relearn::nn {

enum class Activation { relu, sigmoid, tanh, identity };

std::string_view to_string(Activation act);
/// Throws SchemaError for unknown names.
Activation activation_from_string(std::string_view name);

double sigmoid(double x) noexcept;

/// Fully connected layer y = act(W x + b). Parameters are stored flat as
/// [W (out x in, row-major) | b (out)] so optimizers and serializers can treat
/// every layer kind uniformly.
class DenseLayer {
 public:
  DenseLayer(std::size_t in, std::size_t out, Activation act);

  std::size_t input_size() const noexcept { return in_; }
  std::size_t output_size() const noexcept { return out_; }
  Activation activation() const noexcept { return act_; }

  std::span<double> weights() noexcept { return {params_.data(), out_ * in_}; }
  std::span<const double> weights() const noexcept { return {params_.data(), out_ * in_}; }
  std::span<double> bias() noexcept { return {params_.data() + out_ * in_, out_}; }
  std::span<const double> bias() const noexcept { return {params_.data() + out_ * in_, out_}; }

  std::vector<double>& parameters() noexcept { return params_; }
  const std::vector<double>& parameters() const noexcept { return params_; }

  /// Glorot-uniform weights, zero bias.
  void initialize(std::mt19937_64& rng);

 private:
  std::size_t in_;
  std::size_t out_;
  Activation act_;
  std::vector<double> params_;
};

enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };

/// LSTM cell with input, forget and output gates plus the tanh candidate:
///
///   i = sigma(W_ix x + W_ih h + b_i)      f = sigma(W_fx x + W_fh h + b_f)
///   o = sigma(W_ox x + W_oh h + b_o)      g = tanh(W_gx x + W_gh h + b_g)
///   c' = g * i + c * f                    h' = tanh(c') * o
///
/// The eight weight matrices and four bias vectors live in one flat buffer,
/// gate-major: [W_x (4n x m) | W_h (4n x n) | b (4n)], gate order i, f, o, g.
class LstmLayer {
 public:
  LstmLayer(std::size_t in, std::size_t hidden);

  std::size_t input_size() const noexcept { return in_; }
  std::size_t hidden_size() const noexcept { return n_; }
  std::size_t output_size() const noexcept { return n_; }

  std::span<double> input_weights(Gate g) noexcept;    // n x m
  std::span<const double> input_weights(Gate g) const noexcept;
  std::span<double> hidden_weights(Gate g) noexcept;   // n x n
  std::span<const double> hidden_weights(Gate g) const noexcept;
  std::span<double> bias(Gate g) noexcept;             // n
  std::span<const double> bias(Gate g) const noexcept;

  // Stacked views over all four gates.
  std::span<const double> stacked_input_weights() const noexcept { return {params_.data(), 4 * n_ * in_}; }
  std::span<const double> stacked_hidden_weights() const noexcept {
    return {params_.data() + 4 * n_ * in_, 4 * n_ * n_};
  }
  std::span<const double> stacked_bias() const noexcept {
    return {params_.data() + 4 * n_ * (in_ + n_), 4 * n_};
  }

  std::vector<double>& parameters() noexcept { return params_; }
  const std::vector<double>& parameters() const noexcept { return params_; }

  /// Uniform +-1/sqrt(n) weights and biases, forget-gate bias 1.0.
  void initialize(std::mt19937_64& rng);

 private:
  std::size_t in_;
  std::size_t n_;
  std::vector<double> params_;
};

using Layer = std::variant<DenseLayer, LstmLayer>;

std::size_t input_size(const Layer& layer);
std::size_t output_size(const Layer& layer);
std::vector<double>& parameters(Layer& layer);
const std::vector<double>& parameters(const Layer& layer);
bool is_recurrent(const Layer& layer);

/// Ordered layers with a per-layer trainable flag. Dense layers apply to every
/// element of a sequence independently, LSTM layers thread (h, c) across it
/// starting from zero state, and the stack's output is the final step's output.
class LayerStack {
 public:
  LayerStack() = default;

  /// Throws ShapeError if the layer's input does not match the current output.
  LayerStack& add(Layer layer, bool trainable = true);

  std::size_t size() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }
  std::size_t input_size() const;
  std::size_t output_size() const;

  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  Layer& layer(std::size_t i) { return layers_.at(i); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  bool trainable(std::size_t i) const { return trainable_.at(i) != 0; }
  void set_trainable(std::size_t i, bool value) { trainable_.at(i) = value ? 1 : 0; }

  /// Index of the last LSTM layer, or npos when the stack is purely feed-forward.
  std::size_t last_recurrent() const noexcept;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t parameter_count() const;

  void initialize(std::uint64_t seed);

  friend bool operator==(const LayerStack& a, const LayerStack& b);

 private:
  std::vector<Layer> layers_;
  std::vector<std::uint8_t> trainable_;
};

std::vector<double> dense_forward(std::span<const double> x, const DenseLayer& layer);

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

LstmState lstm_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                            std::span<const double> c_prev, const LstmLayer& layer);

struct Gradients;

/// Intermediate values of one forward pass, reusable across calls to avoid
/// reallocating. Layers after the last LSTM only run on the final step since
/// earlier steps cannot reach the output.
class Tape {
 public:
  std::span<const double> output() const;

 private:
  friend void forward(const LayerStack&, const Tensor2&, Tape&);
  friend void backward(const LayerStack&, const Tape&, std::span<const double>, Gradients&);

  const Tensor2* input_ = nullptr;
  std::vector<std::size_t> first_step_;
  std::vector<Tensor2> outputs_;  // per layer, rows = steps it ran on
  std::vector<Tensor2> gates_;    // LSTM only: post-activation i, f, o, g
  std::vector<Tensor2> cells_;    // LSTM only
  // scratch for backward
  mutable std::vector<Tensor2> grad_outputs_;
  mutable std::vector<double> scratch_;
};

/// Runs the stack over `seq` (steps x features), recording what backward needs.
/// Throws InputError on an empty sequence, ShapeError on a feature mismatch.
void forward(const LayerStack& stack, const Tensor2& seq, Tape& tape);

/// Convenience wrapper returning the final-step output.
std::vector<double> stack_forward(const Tensor2& seq, const LayerStack& stack);

/// Per-layer gradient buffers shaped like the layer parameters. Frozen layers
/// keep an empty buffer and are never written.
struct Gradients {
  std::vector<std::vector<double>> per_layer;

  static Gradients zeros_like(const LayerStack& stack);
  void zero();
  void scale(double factor);
  double squared_norm() const;
  bool all_finite() const;
};

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output) at the
/// final step. Backpropagation stops at the earliest trainable layer.
void backward(const LayerStack& stack, const Tape& tape, std::span<const double> grad_output,
              Gradients& grads);

enum class Loss { mse, bce };

std::string_view to_string(Loss loss);

/// Mean of squared differences. Throws ShapeError on length mismatch or empty input.
double mse_loss(std::span<const double> pred, std::span<const double> target);

/// Mean binary cross entropy with probabilities clamped to [eps, 1 - eps].
/// Throws InputError for labels outside {0, 1}.
double bce_loss(std::span<const double> prob, std::span<const double> label);

inline constexpr double kBceEpsilon = 1e-7;

/// Derivative of the per-element loss term w.r.t. the prediction (not yet
/// divided by the element count).
double loss_derivative(Loss loss, double pred, double target) noexcept;
double loss_term(Loss loss, double pred, double target) noexcept;

struct BatchView {
  std::span<const Tensor2> inputs;   // one sequence per sample
  const Tensor2* targets = nullptr;  // samples x outputs
};

/// Loss over the batch (mean over every output element) and its gradient,
/// computed by full backpropagation through time. Throws InputError on an
/// empty batch and ShapeError on mismatched targets.
double backward(const LayerStack& stack, const BatchView& batch, Loss loss, Gradients& grads);

/// Same loss without gradients.
double evaluate_loss(const LayerStack& stack, const BatchView& batch, Loss loss);

}  // namespace relearn::nn
