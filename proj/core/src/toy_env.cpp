#include "relearn/toy_env.hpp"

#include "relearn/error.hpp"

namespace relearn {

QuadraticEnv::QuadraticEnv(std::size_t episode_length, double gain) : length_(episode_length), gain_(gain) {
  if (episode_length == 0) throw ConfigError("episode length must be positive");
}

std::vector<double> QuadraticEnv::reset(std::mt19937_64& rng) {
  rng_.seed(rng());
  t_ = 0;
  done_ = false;
  s_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  return {s_};
}

Transition QuadraticEnv::step(double action) {
  if (done_) throw UsageError("step called on a finished episode");
  const double err = action - gain_ * s_;
  Transition tr;
  tr.reward = -err * err;
  ++t_;
  done_ = t_ >= length_;
  tr.done = done_;
  s_ = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  tr.observation = {s_};
  return tr;
}

std::vector<double> BanditEnv::reset(std::mt19937_64&) {
  done_ = false;
  return {0.0};
}

Transition BanditEnv::step(double action) {
  if (done_) throw UsageError("step called on a finished episode");
  done_ = true;
  return {{0.0}, -action * action, true};
}

}  // namespace relearn
