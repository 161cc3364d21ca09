#include "relearn/building_env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "relearn/csv_io.hpp"
#include "relearn/error.hpp"
#include "relearn/windowing.hpp"

namespace relearn::env {

using data::Column;

Mode operating_mode(double wbt) noexcept { return wbt >= 52.0 ? Mode::reheat : Mode::preheat; }

std::string_view to_string(Mode mode) { return mode == Mode::reheat ? "reheat" : "preheat"; }

double apply_action(double setpoint, double delta, const ActionBounds& bounds) {
  if (!std::isfinite(delta)) throw InputError("action delta must be finite");
  const double d = std::clamp(delta, -bounds.max_delta, bounds.max_delta);
  return std::clamp(setpoint + d, bounds.setpoint_min, bounds.setpoint_max);
}

double sat_transition(double sat, double setpoint, double alpha) noexcept { return sat + alpha * (setpoint - sat); }

double reward_comfort(double avg_stpt, double rl_setpoint) noexcept {
  const double d = std::abs(avg_stpt - rl_setpoint);
  return d <= 10.0 ? 1.0 / (d + 1.0) : -d;
}

double reward_energy(bool rbc_valve, double rbc_heat, bool rl_valve, double rl_heat, double rbc_cool,
                     double rl_cool) noexcept {
  const double rbc_h = rbc_valve ? rbc_heat : 0.0;
  const double rl_h = rl_valve ? rl_heat : 0.0;
  return rbc_h - rl_h + rbc_cool - rl_cool;
}

double compose_reward(double vartheta, double energy, double comfort) noexcept {
  return vartheta * energy + (1.0 - vartheta) * comfort;
}

std::optional<ExogenousState> exogenous_lookup(const data::TimeSeriesFrame& db, std::size_t row) {
  if (row >= db.size()) return std::nullopt;
  return ExogenousState{db.at(row, Column::oat), db.at(row, Column::orh), db.at(row, Column::wbt),
                        db.at(row, Column::sol), db.at(row, Column::avg_stpt)};
}

void validate(const EnvConfig& cfg) {
  if (!(cfg.vartheta >= 0.0 && cfg.vartheta <= 1.0)) throw ConfigError("vartheta must lie in [0, 1]");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (!(cfg.bounds.max_delta > 0.0)) throw ConfigError("max_delta must be positive");
  if (!(cfg.bounds.setpoint_min < cfg.bounds.setpoint_max)) throw ConfigError("setpoint_min must be below setpoint_max");
  if (!(cfg.valve_threshold > 0.0 && cfg.valve_threshold < 1.0)) throw ConfigError("valve_threshold must lie in (0, 1)");
}

LearnedTransitionModels::LearnedTransitionModels(std::shared_ptr<const dyn::ModelSet> models, double valve_threshold)
    : models_(std::move(models)), threshold_(valve_threshold) {
  if (!models_) throw InputError("transition models are missing");
}

ModelOutput LearnedTransitionModels::predict(const Tensor2& history) {
  ModelOutput out;
  const auto v = dyn::predict_valve(models_->valve, history, threshold_, tape_);
  out.valve_on = v.on;
  out.valve_prob = v.probability;
  out.heat_scaled = std::max(0.0, dyn::predict_raw(models_->heating, history, tape_));
  out.cool_scaled = std::max(0.0, dyn::predict_raw(models_->cooling, history, tape_));
  return out;
}

std::shared_ptr<const EnvData> make_env_data(const data::TimeSeriesFrame& raw, std::span<const std::uint8_t> labels,
                                             std::size_t begin, std::size_t end, const data::ScalerParams& scaler) {
  if (labels.size() != raw.size()) throw ShapeError("labels do not match frame");
  auto d = std::make_shared<EnvData>();
  d->raw = raw.slice(begin, end);
  d->scaled = data::apply_scaler(d->raw, scaler);
  d->labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  d->scaler = scaler;
  return d;
}

BuildingEnv::BuildingEnv(std::shared_ptr<const EnvData> data, std::unique_ptr<TransitionModels> models, EnvConfig cfg)
    : data_(std::move(data)), models_(std::move(models)), cfg_(cfg) {
  if (!data_ || !models_) throw InputError("environment needs data and models");
  validate(cfg_);
}

void BuildingEnv::load_row(std::size_t row, double sat, std::span<double> out) const {
  data::model_features(data_->scaled, row, out);
  out[data::kModelFeatures.size() - 1] = data_->scaler.scale(Column::sat, sat);
}

const EnvState& BuildingEnv::reset_at(std::size_t offset) {
  constexpr std::size_t L = data::kLookback;
  const std::size_t n = data_->raw.size();
  if (n < L + 1) {
    throw InputError("window of " + std::to_string(n) + " rows is too short; need at least " + std::to_string(L + 1));
  }
  if (offset + L >= n) throw InputError("reset offset leaves no rows to predict");
  const auto& raw = data_->raw;
  const std::size_t cur = offset + L - 1;
  state_ = EnvState{};
  state_.history = Tensor2(L, data::kModelFeatures.size());
  for (std::size_t s = 0; s < L; ++s) load_row(offset + s, raw.at(offset + s, Column::sat), state_.history.row(s));
  state_.exo = *exogenous_lookup(raw, cur);
  state_.sat = raw.at(cur, Column::sat);
  state_.setpoint = std::clamp(state_.sat, cfg_.bounds.setpoint_min, cfg_.bounds.setpoint_max);
  state_.f_h = raw.at(cur, Column::hwe);
  state_.f_c = raw.at(cur, Column::cwe);
  state_.t = cur + 1;
  steps_ = 0;
  started_ = true;
  done_ = false;
  return state_;
}

StepResult BuildingEnv::advance(double delta) {
  if (!started_) throw UsageError("step called before reset");
  if (done_) throw UsageError("step called on a finished episode");
  const auto& raw = data_->raw;
  const auto& scaled = data_->scaled;
  const auto& scaler = data_->scaler;
  const std::size_t t = state_.t;
  const std::size_t last = data::kLookback - 1;
  const std::size_t sat_col = data::kModelFeatures.size() - 1;

  StepResult r;
  r.action = delta;
  const double setpoint = apply_action(state_.setpoint, delta, cfg_.bounds);
  const double sat = sat_transition(state_.sat, setpoint, cfg_.alpha);
  state_.history(last, sat_col) = scaler.scale(Column::sat, sat);

  const ModelOutput m = models_->predict(state_.history);
  const bool rbc_valve = data_->labels[t] != 0;
  const double rbc_heat_s = scaled.at(t, Column::hwe);
  const double rbc_cool_s = scaled.at(t, Column::cwe);

  r.reward_energy = reward_energy(rbc_valve, rbc_heat_s, m.valve_on, m.heat_scaled, rbc_cool_s, m.cool_scaled);
  r.reward_comfort = reward_comfort(state_.exo.avg_stpt, setpoint);
  r.reward = compose_reward(cfg_.vartheta, r.reward_energy, r.reward_comfort);

  r.info.mode = operating_mode(state_.exo.wbt);
  r.info.rl_valve = m.valve_on;
  r.info.rbc_valve = rbc_valve;
  r.info.valve_prob = m.valve_prob;
  r.info.rl_heat = m.valve_on ? scaler.invert(Column::hwe, m.heat_scaled) : 0.0;
  r.info.rl_cool = scaler.invert(Column::cwe, m.cool_scaled);
  r.info.rbc_heat = raw.at(t, Column::hwe);
  r.info.rbc_cool = raw.at(t, Column::cwe);

  // Row t becomes the current state; its sat is provisional until the next action.
  for (std::size_t s = 0; s < last; ++s) {
    std::copy(state_.history.row(s + 1).begin(), state_.history.row(s + 1).end(), state_.history.row(s).begin());
  }
  load_row(t, sat, state_.history.row(last));
  state_.exo = *exogenous_lookup(raw, t);
  state_.sat = sat;
  state_.setpoint = setpoint;
  state_.f_h = r.info.rl_heat;
  state_.f_c = r.info.rl_cool;
  state_.t = t + 1;
  ++steps_;
  done_ = state_.t >= raw.size() || (cfg_.episode_steps > 0 && steps_ >= cfg_.episode_steps);
  r.done = done_;
  r.next_state = state_;
  return r;
}

std::vector<double> BuildingEnv::observation() const {
  std::vector<double> obs(kObservationSize);
  const auto cur = state_.history.row(data::kLookback - 1);
  std::copy(cur.begin(), cur.end(), obs.begin());
  const auto& scaler = data_->scaler;
  obs[6] = scaler.scale(Column::hwe, state_.f_h);
  obs[7] = scaler.scale(Column::cwe, state_.f_c);
  obs[8] = (state_.setpoint - 55.0) / 20.0;
  obs[9] = (state_.setpoint - state_.exo.avg_stpt) / 10.0;
  return obs;
}

std::vector<double> BuildingEnv::reset(std::mt19937_64& rng) {
  const std::size_t n = data_->raw.size();
  std::size_t offset = 0;
  if (cfg_.episode_steps > 0 && n > data::kLookback + cfg_.episode_steps) {
    std::uniform_int_distribution<std::size_t> pick(0, n - data::kLookback - cfg_.episode_steps);
    offset = pick(rng);
  }
  reset_at(offset);
  return observation();
}

Transition BuildingEnv::step(double action) {
  const StepResult r = advance(action);
  return {observation(), r.reward, r.done};
}

void write_trajectory_csv(std::ostream& out, std::span<const StepResult> steps) {
  using data::format_double;
  out << kTrajectoryHeader << '\n';
  for (const auto& s : steps) {
    out << s.next_state.t - 1 << ',' << format_double(s.next_state.setpoint) << ',' << format_double(s.next_state.sat)
        << ',' << format_double(s.action) << ',' << format_double(s.reward) << ',' << format_double(s.reward_energy)
        << ',' << format_double(s.reward_comfort) << ',' << to_string(s.info.mode) << ','
        << format_double(s.info.rl_heat) << ',' << format_double(s.info.rl_cool) << ','
        << format_double(s.info.rbc_heat) << ',' << format_double(s.info.rbc_cool) << '\n';
  }
}

}  // namespace relearn::env
