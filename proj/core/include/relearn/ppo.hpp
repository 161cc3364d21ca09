#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relearn/environment.hpp"
#include "relearn/nn.hpp"
#include "relearn/optimizer.hpp"

namespace relearn::rl {

struct PPOConfig {
  double clip = 0.2;
  double lr = 0.0025;
  std::size_t total_steps = 1'000'000;
  std::size_t n_envs = 10;
  double gamma = 0.99;
  double lambda = 0.95;
  std::size_t epochs = 10;
  std::size_t minibatch = 256;
  std::size_t horizon = 128;
  double max_grad_norm = 0.5;
  double entropy_coef = 0.0;
  double init_log_std = -0.5;
  std::size_t hidden = 64;
  std::size_t threads = 1;
  std::uint64_t seed = 1;
};

/// Throws ConfigError on out-of-range values.
void validate(const PPOConfig& cfg);

/// Hash of every field that changes training behaviour (threads excluded).
std::uint64_t config_hash(const PPOConfig& cfg);

/// min(r * adv, clip(r, 1 - eps, 1 + eps) * adv).
double ppo_clip_objective(double ratio, double adv, double eps) noexcept;

/// Gaussian policy over an unbounded pre-squash value u; the applied action is
/// kActionScale * tanh(u). The mean comes from a tanh MLP, log-std is a global
/// learned vector.
struct Policy {
  nn::LayerStack mean;
  std::vector<double> log_std;
};

struct ValueFunction {
  nn::LayerStack net;
};

/// Policy and value networks plus the generation counter that ties rollout
/// buffers to the parameters that produced them.
struct ActorCritic {
  Policy policy;
  ValueFunction value;
  std::uint64_t generation = 0;
};

inline constexpr double kActionScale = 2.0;

/// Two tanh hidden layers for both networks, separate parameters.
ActorCritic make_actor_critic(std::size_t obs_size, const PPOConfig& cfg);

double squash(double u) noexcept;

/// log N(u; mu, sigma) minus log |d squash / du|.
double squashed_log_prob(double u, double mu, double log_std) noexcept;

struct ActionSample {
  double action = 0.0;    // squashed, in [-2, 2]
  double raw = 0.0;       // u
  double log_prob = 0.0;  // of the squashed action
};

double policy_mean(const Policy& policy, std::span<const double> obs, nn::Tape& tape);
double value_of(const ValueFunction& value, std::span<const double> obs, nn::Tape& tape);

/// u = mu + sigma * z for a given standard-normal draw z.
ActionSample action_from_noise(const Policy& policy, std::span<const double> obs, double z, nn::Tape& tape);
/// Draws z from rng; deterministic mode returns the squashed mean. Throws
/// NumericError if the network output is not finite.
ActionSample sample_action(const Policy& policy, std::span<const double> obs, std::mt19937_64& rng,
                           bool deterministic = false);

/// Transitions laid out segment-major: segment e holds env e's `horizon`
/// consecutive steps, followed by the value of the state after the last one.
struct RolloutBuffer {
  std::size_t obs_size = 0;
  std::size_t segments = 0;
  std::size_t horizon = 0;
  std::uint64_t generation = 0;
  std::vector<double> observations;  // size() x obs_size
  std::vector<double> actions;
  std::vector<double> raw_actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> bootstrap;  // per segment
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const noexcept { return rewards.size(); }
  std::span<const double> observation(std::size_t i) const { return {observations.data() + i * obs_size, obs_size}; }
};

/// GAE over one trajectory. `values` has one more entry than `rewards`: the
/// value of the state after the last step. done_t zeroes the bootstrap from
/// step t onward.
struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};
AdvantageResult compute_advantages(std::span<const double> rewards, std::span<const double> values,
                                   std::span<const std::uint8_t> dones, double gamma, double lambda);

/// Fills buffer.advantages/returns segment by segment.
void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda);

/// Rescales advantages to mean 0 and standard deviation 1 (unchanged when constant).
void normalize_advantages(RolloutBuffer& buffer);

using EnvFactory = std::function<std::unique_ptr<Environment>(std::size_t index)>;

/// n environments that persist across rollouts, each with its own rng so
/// results do not depend on the thread count. Episodes that end mid-horizon
/// reset and continue.
class EnvPool {
 public:
  EnvPool(const EnvFactory& factory, std::size_t n_envs, std::uint64_t seed);

  std::size_t size() const noexcept { return envs_.size(); }

  RolloutBuffer collect(const ActorCritic& ac, std::size_t horizon, std::size_t threads = 1);

  /// Returns of episodes completed since the previous call, in env order.
  std::vector<double> take_finished_returns();

 private:
  struct Slot {
    std::unique_ptr<Environment> env;
    std::mt19937_64 rng;
    std::vector<double> obs;
    double episode_return = 0.0;
    std::vector<double> finished;
  };
  void run_segment(Slot& slot, std::size_t segment, const ActorCritic& ac, RolloutBuffer& buf);

  std::vector<Slot> envs_;
};

struct UpdateStats {
  double policy_loss = 0.0;  // negative mean clipped objective
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 1.0;
};

/// Adam moments for both networks, kept across updates within one training run.
struct PPOOptimizers {
  nn::OptimizerState policy;
  nn::OptimizerState value;
  explicit PPOOptimizers(double lr);
};

/// `epochs` passes over shuffled minibatches; normalizes advantages first.
/// Throws UsageError if the buffer was produced by a different generation.
/// On a non-finite loss or gradient the parameters are restored and a
/// NumericError is thrown. Increments ac.generation on success.
UpdateStats update(ActorCritic& ac, RolloutBuffer& buffer, const PPOConfig& cfg, PPOOptimizers& opt,
                   std::mt19937_64& rng);

struct IterationLog {
  std::size_t iteration = 0;
  double mean_episode_reward = 0.0;  // NaN when no episode finished
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

struct TrainResult {
  ActorCritic model;
  std::vector<IterationLog> log;
  std::size_t steps = 0;
};

/// Runs ceil(total_steps / (n_envs * horizon)) rollout/update iterations,
/// starting from `initial` when given.
TrainResult train(const EnvFactory& factory, const PPOConfig& cfg, std::optional<ActorCritic> initial = std::nullopt);

/// Mean undiscounted return of `episodes` deterministic or sampled episodes.
struct EpisodeStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> returns;
};
EpisodeStats evaluate_policy(const Policy& policy, Environment& env, std::size_t episodes, std::uint64_t seed,
                             bool deterministic);

inline constexpr std::string_view kTrainLogHeader =
    "iteration,mean_episode_reward,clip_fraction,policy_loss,value_loss";
void write_train_log(std::ostream& out, std::span<const IterationLog> log);

/// policy.json and value.json in `dir`; metadata records log-std, the
/// generation counter and the config hash.
void save_actor_critic(const std::filesystem::path& dir, const ActorCritic& ac, const PPOConfig& cfg);
/// Throws SchemaError on malformed or mismatched files.
ActorCritic load_actor_critic(const std::filesystem::path& dir);

/// Checksum over policy mean network, log-std and value network.
std::uint64_t checksum(const ActorCritic& ac);

}  // namespace relearn::rl
