#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "relearn/dynamics.hpp"
#include "relearn/environment.hpp"
#include "relearn/frame.hpp"
#include "relearn/scaler.hpp"
#include "relearn/tensor.hpp"

namespace relearn::env {

enum class Mode { reheat, preheat };

/// Reheat iff wbt >= 52 degF.
Mode operating_mode(double wbt) noexcept;
std::string_view to_string(Mode mode);

struct ActionBounds {
  double max_delta = 2.0;
  double setpoint_min = 55.0;
  double setpoint_max = 75.0;
};

/// setpoint + clamp(delta, -max_delta, max_delta), clamped to the absolute
/// bounds. Throws InputError on a non-finite delta.
double apply_action(double setpoint, double delta, const ActionBounds& bounds = {});

/// First-order tracking sat + alpha * (setpoint - sat).
double sat_transition(double sat, double setpoint, double alpha = 1.0) noexcept;

/// 1 / (d + 1) for d = |avg_stpt - rl_setpoint| <= 10, otherwise -d.
double reward_comfort(double avg_stpt, double rl_setpoint) noexcept;

/// RBC minus RL energy, with heating gated by the respective valve states.
double reward_energy(bool rbc_valve, double rbc_heat, bool rl_valve, double rl_heat, double rbc_cool,
                     double rl_cool) noexcept;

/// vartheta * energy + (1 - vartheta) * comfort.
double compose_reward(double vartheta, double energy, double comfort) noexcept;

struct ExogenousState {
  double oat = 0.0;
  double orh = 0.0;
  double wbt = 0.0;
  double sol = 0.0;
  double avg_stpt = 0.0;
  friend bool operator==(const ExogenousState&, const ExogenousState&) = default;
};

/// Row `row` of the exogenous columns, or nullopt past the end of the frame.
std::optional<ExogenousState> exogenous_lookup(const data::TimeSeriesFrame& db, std::size_t row);

struct EnvConfig {
  double vartheta = 0.5;
  double alpha = 1.0;
  ActionBounds bounds;
  double valve_threshold = 0.5;
  /// Steps per episode; 0 runs one full pass over the window from its start.
  /// Shorter episodes start at a random offset chosen by reset(rng).
  std::size_t episode_steps = 0;
};

/// Throws ConfigError on out-of-range values.
void validate(const EnvConfig& cfg);

/// Model outputs for the next interval; energies are scaled and clamped at 0.
struct ModelOutput {
  bool valve_on = false;
  double valve_prob = 0.0;
  double heat_scaled = 0.0;
  double cool_scaled = 0.0;
};

/// Predicts the next interval from lookback x 6 scaled features.
class TransitionModels {
 public:
  virtual ~TransitionModels() = default;
  virtual ModelOutput predict(const Tensor2& history) = 0;
};

/// Valve, heating and cooling networks. Each instance owns its forward
/// buffers, so give every environment its own.
class LearnedTransitionModels final : public TransitionModels {
 public:
  LearnedTransitionModels(std::shared_ptr<const dyn::ModelSet> models, double valve_threshold = 0.5);
  ModelOutput predict(const Tensor2& history) override;

 private:
  std::shared_ptr<const dyn::ModelSet> models_;
  double threshold_;
  nn::Tape tape_;
};

/// Read-only window shared by every environment instance built over it.
struct EnvData {
  data::TimeSeriesFrame raw;
  data::TimeSeriesFrame scaled;
  std::vector<std::uint8_t> labels;
  data::ScalerParams scaler;
};

/// Rows [begin, end) of a 30-minute frame with its valve labels.
std::shared_ptr<const EnvData> make_env_data(const data::TimeSeriesFrame& raw, std::span<const std::uint8_t> labels,
                                             std::size_t begin, std::size_t end, const data::ScalerParams& scaler);

struct EnvState {
  ExogenousState exo;
  double sat = 0.0;
  double setpoint = 0.0;
  double f_h = 0.0;
  double f_c = 0.0;
  Tensor2 history;    // lookback x 6 scaled rows, last row is the current state
  std::size_t t = 0;  // index of the next row to predict
};

struct StepInfo {
  Mode mode = Mode::reheat;
  bool rl_valve = false;
  bool rbc_valve = false;
  double valve_prob = 0.0;
  double rl_heat = 0.0;  // kBTU, 0 when the valve is off
  double rl_cool = 0.0;
  double rbc_heat = 0.0;
  double rbc_cool = 0.0;
};

struct StepResult {
  EnvState next_state;
  double action = 0.0;
  double reward = 0.0;
  double reward_energy = 0.0;
  double reward_comfort = 0.0;
  bool done = false;
  StepInfo info;
};

/// Data-driven building: exogenous variables come from the window, sat follows
/// the set-point, and the learned models supply next-interval energies. The
/// RBC baseline for the reward is read from the recorded data.
///
/// Observation (10 values): scaled oat, orh, wbt, sol, avg_stpt, sat, f_h, f_c,
/// then (setpoint - 55) / 20 and (setpoint - avg_stpt) / 10.
class BuildingEnv final : public Environment {
 public:
  static constexpr std::size_t kObservationSize = 10;

  BuildingEnv(std::shared_ptr<const EnvData> data, std::unique_ptr<TransitionModels> models, EnvConfig cfg);

  /// Primes the history with rows offset .. offset+5. Throws InputError when
  /// the window has fewer than lookback + 1 rows or the offset leaves none to predict.
  const EnvState& reset_at(std::size_t offset);
  StepResult advance(double delta);

  std::size_t observation_size() const override { return kObservationSize; }
  std::vector<double> reset(std::mt19937_64& rng) override;
  Transition step(double action) override;

  std::vector<double> observation() const;
  const EnvState& state() const noexcept { return state_; }
  bool done() const noexcept { return done_; }
  std::size_t window_length() const noexcept { return data_->raw.size(); }
  const EnvData& data() const noexcept { return *data_; }
  const EnvConfig& config() const noexcept { return cfg_; }

 private:
  void load_row(std::size_t row, double sat, std::span<double> out) const;

  std::shared_ptr<const EnvData> data_;
  std::unique_ptr<TransitionModels> models_;
  EnvConfig cfg_;
  EnvState state_;
  std::size_t steps_ = 0;
  bool started_ = false;
  bool done_ = false;
};

inline constexpr std::string_view kTrajectoryHeader =
    "t,setpoint,sat,action,reward,reward_energy,reward_comfort,mode,rl_heat,rl_cool,rbc_heat,rbc_cool";

/// One row per step; t is the index of the predicted row within the window.
void write_trajectory_csv(std::ostream& out, std::span<const StepResult> steps);

}  // namespace relearn::env
