#include "relearn/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "relearn/error.hpp"

namespace relearn::nn {

double lr_schedule(std::size_t step, std::size_t total, double base_lr) {
  if (total == 0) throw InputError("lr_schedule: total must be positive");
  const std::size_t s = std::min(step, total);
  const double frac = 1.0 - static_cast<double>(s) / static_cast<double>(total);
  return std::max(0.0, base_lr * frac);
}

double OptimizerState::current_lr() const {
  if (config.decay == LrDecay::constant) return config.base_lr;
  return lr_schedule(static_cast<std::size_t>(step), std::max<std::size_t>(config.total_steps, 1),
                     config.base_lr);
}

void optimizer_step(std::span<const ParamBlock> blocks, OptimizerState& state) {
  for (const auto& b : blocks) {
    if (!b.grad.empty() && b.grad.size() != b.values.size()) {
      throw ShapeError("gradient block does not match parameter block");
    }
    for (double g : b.grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient; update aborted");
    }
  }
  if (state.first_moment.size() < blocks.size()) {
    state.first_moment.resize(blocks.size());
    state.second_moment.resize(blocks.size());
  }

  const double lr = state.current_lr();
  const auto& cfg = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.grad.empty()) continue;
    if (cfg.rule == UpdateRule::sgd) {
      for (std::size_t k = 0; k < b.values.size(); ++k) b.values[k] -= lr * b.grad[k];
      continue;
    }
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != b.values.size()) {
      m.assign(b.values.size(), 0.0);
      v.assign(b.values.size(), 0.0);
    }
    for (std::size_t k = 0; k < b.values.size(); ++k) {
      const double g = b.grad[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[k] / bias1;
      const double vhat = v[k] / bias2;
      b.values[k] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

void optimizer_step(LayerStack& stack, const Gradients& grads, OptimizerState& state) {
  if (grads.per_layer.size() != stack.size()) throw ShapeError("gradients do not match stack");
  std::vector<ParamBlock> blocks;
  blocks.reserve(stack.size());
  for (std::size_t l = 0; l < stack.size(); ++l) {
    auto& params = parameters(stack.layer(l));
    std::span<const double> g;
    if (stack.trainable(l)) g = grads.per_layer[l];
    blocks.push_back({params, g});
  }
  optimizer_step(blocks, state);
}

double clip_gradient_norm(std::span<std::vector<double>*> grads, double max_norm) {
  double sq = 0.0;
  for (const auto* g : grads) {
    for (double v : *g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto* g : grads) {
      for (double& v : *g) v *= f;
    }
  }
  return norm;
}

double clip_gradient_norm(Gradients& grads, double max_norm) {
  std::vector<std::vector<double>*> refs;
  for (auto& g : grads.per_layer) refs.push_back(&g);
  return clip_gradient_norm(refs, max_norm);
}

}  // namespace relearn::nn
