#include "relearn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "relearn/error.hpp"

namespace relearn::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

double activate(Activation act, double z) noexcept {
  switch (act) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::sigmoid: return sigmoid(z);
    case Activation::tanh: return std::tanh(z);
    case Activation::identity: return z;
  }
  return z;
}

// Derivative expressed through the activation's output y.
double activation_slope(Activation act, double y) noexcept {
  switch (act) {
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::tanh: return 1.0 - y * y;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

// y = act(W x + b) for a single vector.
void dense_apply(const DenseLayer& layer, const double* x, double* y) noexcept {
  const std::size_t in = layer.input_size();
  const std::size_t out = layer.output_size();
  const double* w = layer.weights().data();
  const double* b = layer.bias().data();
  for (std::size_t r = 0; r < out; ++r) {
    const double* wr = w + r * in;
    double z = b[r];
    for (std::size_t c = 0; c < in; ++c) z += wr[c] * x[c];
    y[r] = activate(layer.activation(), z);
  }
}

// One LSTM step. `gates` receives post-activation i, f, o, g (4n values).
void lstm_apply(const LstmLayer& layer, const double* x, const double* h_prev, const double* c_prev,
                double* gates, double* c, double* h) noexcept {
  const std::size_t m = layer.input_size();
  const std::size_t n = layer.hidden_size();
  const double* wx = layer.stacked_input_weights().data();
  const double* wh = layer.stacked_hidden_weights().data();
  const double* b = layer.stacked_bias().data();
  for (std::size_t r = 0; r < 4 * n; ++r) {
    double z = b[r];
    const double* wxr = wx + r * m;
    for (std::size_t k = 0; k < m; ++k) z += wxr[k] * x[k];
    if (h_prev != nullptr) {
      const double* whr = wh + r * n;
      for (std::size_t k = 0; k < n; ++k) z += whr[k] * h_prev[k];
    }
    gates[r] = (r < 3 * n) ? sigmoid(z) : std::tanh(z);
  }
  const double* gi = gates;
  const double* gf = gates + n;
  const double* go = gates + 2 * n;
  const double* gg = gates + 3 * n;
  for (std::size_t k = 0; k < n; ++k) {
    const double prev = c_prev != nullptr ? c_prev[k] : 0.0;
    c[k] = gg[k] * gi[k] + prev * gf[k];
    h[k] = std::tanh(c[k]) * go[k];
  }
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw SchemaError("unknown activation '" + std::string(name) + "'");
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Layers

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act)
    : in_(in), out_(out), act_(act), params_(out * in + out, 0.0) {
  require(in > 0 && out > 0, "dense layer needs positive sizes");
}

void DenseLayer::initialize(std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_ + out_));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& w : weights()) w = dist(rng);
  std::fill(bias().begin(), bias().end(), 0.0);
}

LstmLayer::LstmLayer(std::size_t in, std::size_t hidden)
    : in_(in), n_(hidden), params_(4 * hidden * (in + hidden + 1), 0.0) {
  require(in > 0 && hidden > 0, "lstm layer needs positive sizes");
}

std::span<double> LstmLayer::input_weights(Gate g) noexcept {
  return {params_.data() + static_cast<std::size_t>(g) * n_ * in_, n_ * in_};
}
std::span<const double> LstmLayer::input_weights(Gate g) const noexcept {
  return {params_.data() + static_cast<std::size_t>(g) * n_ * in_, n_ * in_};
}
std::span<double> LstmLayer::hidden_weights(Gate g) noexcept {
  return {params_.data() + 4 * n_ * in_ + static_cast<std::size_t>(g) * n_ * n_, n_ * n_};
}
std::span<const double> LstmLayer::hidden_weights(Gate g) const noexcept {
  return {params_.data() + 4 * n_ * in_ + static_cast<std::size_t>(g) * n_ * n_, n_ * n_};
}
std::span<double> LstmLayer::bias(Gate g) noexcept {
  return {params_.data() + 4 * n_ * (in_ + n_) + static_cast<std::size_t>(g) * n_, n_};
}
std::span<const double> LstmLayer::bias(Gate g) const noexcept {
  return {params_.data() + 4 * n_ * (in_ + n_) + static_cast<std::size_t>(g) * n_, n_};
}

void LstmLayer::initialize(std::mt19937_64& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(n_));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& p : params_) p = dist(rng);
  std::fill(bias(Gate::forget).begin(), bias(Gate::forget).end(), 1.0);
}

std::size_t input_size(const Layer& layer) {
  return std::visit([](const auto& l) { return l.input_size(); }, layer);
}
std::size_t output_size(const Layer& layer) {
  return std::visit([](const auto& l) { return l.output_size(); }, layer);
}
std::vector<double>& parameters(Layer& layer) {
  return std::visit([](auto& l) -> std::vector<double>& { return l.parameters(); }, layer);
}
const std::vector<double>& parameters(const Layer& layer) {
  return std::visit([](const auto& l) -> const std::vector<double>& { return l.parameters(); }, layer);
}
bool is_recurrent(const Layer& layer) { return std::holds_alternative<LstmLayer>(layer); }

// ---------------------------------------------------------------------------
// Stack

LayerStack& LayerStack::add(Layer layer, bool trainable) {
  if (!layers_.empty() && nn::output_size(layers_.back()) != nn::input_size(layer)) {
    throw ShapeError("layer input " + std::to_string(nn::input_size(layer)) +
                     " does not match previous output " + std::to_string(nn::output_size(layers_.back())));
  }
  layers_.push_back(std::move(layer));
  trainable_.push_back(trainable ? 1 : 0);
  return *this;
}

std::size_t LayerStack::input_size() const {
  if (layers_.empty()) throw ShapeError("empty layer stack");
  return nn::input_size(layers_.front());
}

std::size_t LayerStack::output_size() const {
  if (layers_.empty()) throw ShapeError("empty layer stack");
  return nn::output_size(layers_.back());
}

std::size_t LayerStack::last_recurrent() const noexcept {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (is_recurrent(layers_[i])) return i;
  }
  return npos;
}

std::size_t LayerStack::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += parameters(l).size();
  return total;
}

void LayerStack::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) std::visit([&](auto& layer) { layer.initialize(rng); }, l);
}

bool operator==(const LayerStack& a, const LayerStack& b) {
  if (a.layers_.size() != b.layers_.size() || a.trainable_ != b.trainable_) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const Layer& la = a.layers_[i];
    const Layer& lb = b.layers_[i];
    if (la.index() != lb.index()) return false;
    if (input_size(la) != input_size(lb) || output_size(la) != output_size(lb)) return false;
    if (const auto* da = std::get_if<DenseLayer>(&la)) {
      if (da->activation() != std::get<DenseLayer>(lb).activation()) return false;
    }
    if (parameters(la) != parameters(lb)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Single-layer operations

std::vector<double> dense_forward(std::span<const double> x, const DenseLayer& layer) {
  if (x.size() != layer.input_size()) {
    throw ShapeError("dense input length " + std::to_string(x.size()) + " != " +
                     std::to_string(layer.input_size()));
  }
  std::vector<double> y(layer.output_size());
  dense_apply(layer, x.data(), y.data());
  return y;
}

LstmState lstm_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                            std::span<const double> c_prev, const LstmLayer& layer) {
  const std::size_t n = layer.hidden_size();
  if (x.size() != layer.input_size() || h_prev.size() != n || c_prev.size() != n) {
    throw ShapeError("lstm cell input shapes do not match layer");
  }
  std::vector<double> gates(4 * n);
  LstmState out{std::vector<double>(n), std::vector<double>(n)};
  lstm_apply(layer, x.data(), h_prev.data(), c_prev.data(), gates.data(), out.c.data(), out.h.data());
  return out;
}

// ---------------------------------------------------------------------------
// Sequence forward / backward

std::span<const double> Tape::output() const {
  if (outputs_.empty()) throw UsageError("tape holds no forward pass");
  const Tensor2& last = outputs_.back();
  return last.row(last.rows() - 1);
}

void forward(const LayerStack& stack, const Tensor2& seq, Tape& tape) {
  if (stack.empty()) throw ShapeError("empty layer stack");
  if (seq.rows() == 0) throw InputError("empty input sequence");
  if (seq.cols() != stack.input_size()) {
    throw ShapeError("sequence has " + std::to_string(seq.cols()) + " features, stack expects " +
                     std::to_string(stack.input_size()));
  }
  const std::size_t steps = seq.rows();
  const std::size_t n_layers = stack.size();
  const std::size_t last_rec = stack.last_recurrent();

  tape.input_ = &seq;
  tape.first_step_.resize(n_layers);
  tape.outputs_.resize(n_layers);
  tape.gates_.resize(n_layers);
  tape.cells_.resize(n_layers);

  for (std::size_t l = 0; l < n_layers; ++l) {
    const bool full = last_rec != LayerStack::npos && l <= last_rec;
    const std::size_t first = full ? 0 : steps - 1;
    tape.first_step_[l] = first;
    const std::size_t rows = steps - first;
    const Layer& layer = stack.layer(l);
    tape.outputs_[l].resize(rows, output_size(layer));

    // Input for absolute step s: the sequence or the previous layer's output row.
    auto input_row = [&](std::size_t s) -> const double* {
      if (l == 0) return seq.row(s).data();
      return tape.outputs_[l - 1].row(s - tape.first_step_[l - 1]).data();
    };

    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      for (std::size_t s = first; s < steps; ++s) {
        dense_apply(*dense, input_row(s), tape.outputs_[l].row(s - first).data());
      }
    } else {
      const auto& lstm = std::get<LstmLayer>(layer);
      const std::size_t n = lstm.hidden_size();
      tape.gates_[l].resize(rows, 4 * n);
      tape.cells_[l].resize(rows, n);
      for (std::size_t s = 0; s < steps; ++s) {
        const double* h_prev = s == 0 ? nullptr : tape.outputs_[l].row(s - 1).data();
        const double* c_prev = s == 0 ? nullptr : tape.cells_[l].row(s - 1).data();
        lstm_apply(lstm, input_row(s), h_prev, c_prev, tape.gates_[l].row(s).data(),
                   tape.cells_[l].row(s).data(), tape.outputs_[l].row(s).data());
      }
    }
  }
}

std::vector<double> stack_forward(const Tensor2& seq, const LayerStack& stack) {
  Tape tape;
  forward(stack, seq, tape);
  auto out = tape.output();
  return {out.begin(), out.end()};
}

Gradients Gradients::zeros_like(const LayerStack& stack) {
  Gradients g;
  g.per_layer.resize(stack.size());
  for (std::size_t l = 0; l < stack.size(); ++l) {
    if (stack.trainable(l)) g.per_layer[l].assign(parameters(stack.layer(l)).size(), 0.0);
  }
  return g;
}

void Gradients::zero() {
  for (auto& g : per_layer) std::fill(g.begin(), g.end(), 0.0);
}

void Gradients::scale(double factor) {
  for (auto& g : per_layer) {
    for (double& v : g) v *= factor;
  }
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& g : per_layer) {
    for (double v : g) total += v * v;
  }
  return total;
}

bool Gradients::all_finite() const {
  for (const auto& g : per_layer) {
    for (double v : g) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void backward(const LayerStack& stack, const Tape& tape, std::span<const double> grad_output,
              Gradients& grads) {
  const std::size_t n_layers = stack.size();
  if (tape.outputs_.size() != n_layers || tape.input_ == nullptr) {
    throw UsageError("tape does not belong to this stack");
  }
  if (grad_output.size() != stack.output_size()) throw ShapeError("output gradient length mismatch");
  if (grads.per_layer.size() != n_layers) throw ShapeError("gradient buffer does not match stack");

  std::size_t earliest = n_layers;
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (stack.trainable(l) && !grads.per_layer[l].empty()) {
      earliest = l;
      break;
    }
  }
  if (earliest == n_layers) return;

  const Tensor2& seq = *tape.input_;
  const std::size_t steps = seq.rows();
  auto& dy = tape.grad_outputs_;
  dy.resize(n_layers);
  for (std::size_t l = earliest; l < n_layers; ++l) {
    dy[l].resize(tape.outputs_[l].rows(), tape.outputs_[l].cols());
    dy[l].fill(0.0);
  }
  std::copy(grad_output.begin(), grad_output.end(), dy[n_layers - 1].row(dy[n_layers - 1].rows() - 1).begin());

  for (std::size_t l = n_layers; l-- > earliest;) {
    const Layer& layer = stack.layer(l);
    const std::size_t first = tape.first_step_[l];
    const bool want_param = stack.trainable(l) && !grads.per_layer[l].empty();
    const bool want_input = l > earliest;
    double* gp = want_param ? grads.per_layer[l].data() : nullptr;

    auto input_row = [&](std::size_t s) -> const double* {
      if (l == 0) return seq.row(s).data();
      return tape.outputs_[l - 1].row(s - tape.first_step_[l - 1]).data();
    };
    auto input_grad_row = [&](std::size_t s) -> double* {
      return dy[l - 1].row(s - tape.first_step_[l - 1]).data();
    };

    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      const std::size_t in = dense->input_size();
      const std::size_t out = dense->output_size();
      const double* w = dense->weights().data();
      auto& dz = tape.scratch_;
      dz.resize(out);
      for (std::size_t s = first; s < steps; ++s) {
        const double* y = tape.outputs_[l].row(s - first).data();
        const double* g = dy[l].row(s - first).data();
        bool any = false;
        for (std::size_t r = 0; r < out; ++r) {
          dz[r] = g[r] * activation_slope(dense->activation(), y[r]);
          any = any || dz[r] != 0.0;
        }
        if (!any) continue;
        const double* x = input_row(s);
        if (gp != nullptr) {
          for (std::size_t r = 0; r < out; ++r) {
            if (dz[r] == 0.0) continue;
            double* gw = gp + r * in;
            for (std::size_t c = 0; c < in; ++c) gw[c] += dz[r] * x[c];
            gp[out * in + r] += dz[r];
          }
        }
        if (want_input) {
          double* dx = input_grad_row(s);
          for (std::size_t r = 0; r < out; ++r) {
            if (dz[r] == 0.0) continue;
            const double* wr = w + r * in;
            for (std::size_t c = 0; c < in; ++c) dx[c] += wr[c] * dz[r];
          }
        }
      }
    } else {
      const auto& lstm = std::get<LstmLayer>(layer);
      const std::size_t m = lstm.input_size();
      const std::size_t n = lstm.hidden_size();
      const double* wx = lstm.stacked_input_weights().data();
      const double* wh = lstm.stacked_hidden_weights().data();
      auto& buf = tape.scratch_;
      buf.assign(4 * n + 3 * n, 0.0);
      double* da = buf.data();             // pre-activation gate gradients
      double* dh_next = buf.data() + 4 * n;
      double* dc_next = dh_next + n;
      double* dh = dc_next + n;
      const std::size_t gx_off = 0;
      const std::size_t gh_off = 4 * n * m;
      const std::size_t gb_off = 4 * n * (m + n);

      for (std::size_t s = steps; s-- > 0;) {
        const double* gates = tape.gates_[l].row(s).data();
        const double* c = tape.cells_[l].row(s).data();
        const double* c_prev = s == 0 ? nullptr : tape.cells_[l].row(s - 1).data();
        const double* h_prev = s == 0 ? nullptr : tape.outputs_[l].row(s - 1).data();
        const double* gi = gates;
        const double* gf = gates + n;
        const double* go = gates + 2 * n;
        const double* gg = gates + 3 * n;
        const double* up = dy[l].row(s).data();
        for (std::size_t k = 0; k < n; ++k) {
          dh[k] = up[k] + dh_next[k];
          const double tc = std::tanh(c[k]);
          const double d_o = dh[k] * tc;
          const double dc = dh[k] * go[k] * (1.0 - tc * tc) + dc_next[k];
          const double d_i = dc * gg[k];
          const double d_g = dc * gi[k];
          const double d_f = c_prev != nullptr ? dc * c_prev[k] : 0.0;
          dc_next[k] = dc * gf[k];
          da[k] = d_i * gi[k] * (1.0 - gi[k]);
          da[n + k] = d_f * gf[k] * (1.0 - gf[k]);
          da[2 * n + k] = d_o * go[k] * (1.0 - go[k]);
          da[3 * n + k] = d_g * (1.0 - gg[k] * gg[k]);
        }
        const double* x = input_row(s);
        if (gp != nullptr) {
          for (std::size_t r = 0; r < 4 * n; ++r) {
            const double a = da[r];
            if (a == 0.0) continue;
            double* gw = gp + gx_off + r * m;
            for (std::size_t k = 0; k < m; ++k) gw[k] += a * x[k];
            if (h_prev != nullptr) {
              double* gwh = gp + gh_off + r * n;
              for (std::size_t k = 0; k < n; ++k) gwh[k] += a * h_prev[k];
            }
            gp[gb_off + r] += a;
          }
        }
        std::fill(dh_next, dh_next + n, 0.0);
        for (std::size_t r = 0; r < 4 * n; ++r) {
          const double a = da[r];
          if (a == 0.0) continue;
          const double* whr = wh + r * n;
          for (std::size_t k = 0; k < n; ++k) dh_next[k] += whr[k] * a;
        }
        if (want_input) {
          double* dx = input_grad_row(s);
          for (std::size_t r = 0; r < 4 * n; ++r) {
            const double a = da[r];
            if (a == 0.0) continue;
            const double* wxr = wx + r * m;
            for (std::size_t k = 0; k < m; ++k) dx[k] += wxr[k] * a;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Losses

std::string_view to_string(Loss loss) { return loss == Loss::mse ? "mse" : "bce"; }

double loss_term(Loss loss, double pred, double target) noexcept {
  if (loss == Loss::mse) {
    const double d = pred - target;
    return d * d;
  }
  const double p = std::clamp(pred, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

double loss_derivative(Loss loss, double pred, double target) noexcept {
  if (loss == Loss::mse) return 2.0 * (pred - target);
  if (pred < kBceEpsilon || pred > 1.0 - kBceEpsilon) return 0.0;
  return -(target / pred) + (1.0 - target) / (1.0 - pred);
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("mse: length mismatch");
  if (pred.empty()) throw ShapeError("mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += loss_term(Loss::mse, pred[i], target[i]);
  return total / static_cast<double>(pred.size());
}

double bce_loss(std::span<const double> prob, std::span<const double> label) {
  if (prob.size() != label.size()) throw ShapeError("bce: length mismatch");
  if (prob.empty()) throw ShapeError("bce: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (label[i] != 0.0 && label[i] != 1.0) {
      throw InputError("bce: label " + std::to_string(label[i]) + " is not 0 or 1");
    }
    total += loss_term(Loss::bce, prob[i], label[i]);
  }
  return total / static_cast<double>(prob.size());
}

namespace {

void check_batch(const LayerStack& stack, const BatchView& batch, Loss loss) {
  if (batch.inputs.empty()) throw InputError("empty batch");
  if (batch.targets == nullptr || batch.targets->rows() != batch.inputs.size() ||
      batch.targets->cols() != stack.output_size()) {
    throw ShapeError("targets do not match batch size or stack output");
  }
  if (loss == Loss::bce) {
    for (double y : batch.targets->data()) {
      if (y != 0.0 && y != 1.0) throw InputError("bce: label is not 0 or 1");
    }
  }
}

}  // namespace

double backward(const LayerStack& stack, const BatchView& batch, Loss loss, Gradients& grads) {
  check_batch(stack, batch, loss);
  const std::size_t outs = stack.output_size();
  const double denom = static_cast<double>(batch.inputs.size() * outs);
  Tape tape;
  std::vector<double> g(outs);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    forward(stack, batch.inputs[i], tape);
    auto y = tape.output();
    auto t = batch.targets->row(i);
    for (std::size_t k = 0; k < outs; ++k) {
      total += loss_term(loss, y[k], t[k]);
      g[k] = loss_derivative(loss, y[k], t[k]) / denom;
    }
    backward(stack, tape, g, grads);
  }
  return total / denom;
}

double evaluate_loss(const LayerStack& stack, const BatchView& batch, Loss loss) {
  check_batch(stack, batch, loss);
  const std::size_t outs = stack.output_size();
  Tape tape;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    forward(stack, batch.inputs[i], tape);
    auto y = tape.output();
    auto t = batch.targets->row(i);
    for (std::size_t k = 0; k < outs; ++k) total += loss_term(loss, y[k], t[k]);
  }
  return total / static_cast<double>(batch.inputs.size() * outs);
}

}  // namespace relearn::nn
