#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "relearn/nn.hpp"

namespace relearn::nn {

/// Linearly decays base_lr to zero at `total`. Steps past `total` clamp to the
/// final value. Throws InputError when total == 0.
double lr_schedule(std::size_t step, std::size_t total, double base_lr);

enum class UpdateRule { adam, sgd };
enum class LrDecay { constant, linear };

struct OptimizerConfig {
  UpdateRule rule = UpdateRule::adam;
  LrDecay decay = LrDecay::linear;
  double base_lr = 1e-3;
  std::size_t total_steps = 1;  // horizon of the linear schedule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for every parameter block plus the step counter. Blocks
/// are identified by position, so callers must pass them in a stable order.
struct OptimizerState {
  OptimizerConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  double current_lr() const;
};

struct ParamBlock {
  std::span<double> values;
  std::span<const double> grad;  // empty => frozen, left untouched
};

/// Applies one update. Frozen blocks (empty grad) are skipped but still count
/// toward the block order. Throws NumericError, leaving every parameter and
/// the state unchanged, if any gradient is non-finite.
void optimizer_step(std::span<const ParamBlock> blocks, OptimizerState& state);

/// Updates the trainable layers of a stack using per-layer gradients.
void optimizer_step(LayerStack& stack, const Gradients& grads, OptimizerState& state);

/// Rescales gradients so their joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_gradient_norm(std::span<std::vector<double>*> grads, double max_norm);
double clip_gradient_norm(Gradients& grads, double max_norm);

}  // namespace relearn::nn
