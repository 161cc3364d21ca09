#pragma once

#include <cstddef>
#include <random>
#include <vector>

namespace relearn {

struct Transition {
  std::vector<double> observation;  // state after the step (terminal state when done)
  double reward = 0.0;
  bool done = false;
};

/// Episodic environment with a scalar continuous action, as consumed by the
/// PPO rollout collector. Instances are single-threaded.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t observation_size() const = 0;
  /// Starts a new episode; the rng may pick the start point.
  virtual std::vector<double> reset(std::mt19937_64& rng) = 0;
  /// Throws UsageError if the episode is over.
  virtual Transition step(double action) = 0;
};

}  // namespace relearn
