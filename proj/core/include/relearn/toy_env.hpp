#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "relearn/environment.hpp"

namespace relearn {

/// One-dimensional tracking task: observation s ~ U[-1, 1] is redrawn every
/// step and the reward is -(a - gain * s)^2. Used to smoke-test PPO.
class QuadraticEnv final : public Environment {
 public:
  explicit QuadraticEnv(std::size_t episode_length = 50, double gain = 1.5);

  std::size_t observation_size() const override { return 1; }
  std::vector<double> reset(std::mt19937_64& rng) override;
  Transition step(double action) override;

 private:
  std::size_t length_;
  double gain_;
  std::mt19937_64 rng_;
  double s_ = 0.0;
  std::size_t t_ = 0;
  bool done_ = true;
};

/// Single-step bandit with constant observation and reward -a^2.
class BanditEnv final : public Environment {
 public:
  std::size_t observation_size() const override { return 1; }
  std::vector<double> reset(std::mt19937_64& rng) override;
  Transition step(double action) override;

 private:
  bool done_ = true;
};

}  // namespace relearn
