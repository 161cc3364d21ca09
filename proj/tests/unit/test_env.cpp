#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "relearn/building_env.hpp"
#include "relearn/error.hpp"
#include "relearn/preprocess.hpp"
#include "relearn/scaler.hpp"
#include "relearn/synthetic.hpp"
#include "test_support.hpp"

using namespace relearn;
using namespace relearn::env;
using data::Column;
using relearn::testing::close_rel;
using relearn::testing::SatDrivenModels;
using relearn::testing::StubModels;

namespace {

struct Window {
  data::TimeSeriesFrame raw;
  std::vector<std::uint8_t> labels;
  data::ScalerParams scaler;
};

Window synthetic_window() {
  data::SyntheticGenConfig cfg;
  cfg.n_weeks = 15;
  cfg.seed = 5;
  Window w;
  w.raw = data::aggregate_30min(data::generate_synthetic(cfg)).frame;
  w.labels = data::derive_valve_labels(w.raw);
  w.scaler = data::fit_scaler(w.raw, 0, 4 * 336);
  return w;
}

const Window& shared_window() {
  static const Window w = synthetic_window();
  return w;
}

std::shared_ptr<const EnvData> window_data(std::size_t begin, std::size_t end) {
  const auto& w = shared_window();
  return make_env_data(w.raw, w.labels, begin, end, w.scaler);
}

BuildingEnv make_env(std::shared_ptr<const EnvData> d, std::unique_ptr<TransitionModels> m = nullptr,
                     EnvConfig cfg = {}) {
  if (!m) m = std::make_unique<SatDrivenModels>();
  return BuildingEnv(std::move(d), std::move(m), cfg);
}

std::string trajectory(BuildingEnv& env, const std::vector<double>& actions) {
  env.reset_at(0);
  std::vector<StepResult> steps;
  for (double a : actions) {
    if (env.done()) break;
    steps.push_back(env.advance(a));
  }
  std::ostringstream out;
  write_trajectory_csv(out, steps);
  return out.str();
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("operating mode") {
    CHECK(operating_mode(60) == Mode::reheat);
    CHECK(operating_mode(40) == Mode::preheat);
    CHECK(operating_mode(52) == Mode::reheat);
    CHECK(operating_mode(51.999) == Mode::preheat);
  }

  TEST_CASE("apply_action") {
    CHECK(close_rel(apply_action(65, 1.3), 66.3, 1e-12));
    CHECK(apply_action(74.5, 2) == 75);
    CHECK(apply_action(65, 2.7) == 67);
    CHECK(apply_action(65, -9) == 63);
    CHECK(apply_action(55.5, -2) == 55);
    CHECK_THROWS_AS(apply_action(65, std::numeric_limits<double>::quiet_NaN()), InputError);
    CHECK_THROWS_AS(apply_action(65, std::numeric_limits<double>::infinity()), InputError);
  }

  TEST_CASE("sat_transition") {
    CHECK(sat_transition(65, 65) == 65);
    CHECK(sat_transition(64, 66) == 66);
    CHECK(sat_transition(64, 66, 0.5) == 65);
  }

  TEST_CASE("reward components") {
    CHECK(reward_comfort(70, 70) == 1.0);
    CHECK(close_rel(reward_comfort(70, 66), 0.2, 1e-12));
    CHECK(reward_comfort(70, 55) == -15.0);
    CHECK(close_rel(reward_comfort(70, 60), 1.0 / 11.0, 1e-12));
    for (double d = 0.0; d <= 20.0; d += 0.25) REQUIRE(reward_comfort(60.0 + d, 60.0) <= 1.0);

    CHECK(reward_energy(1, 5, 1, 5, 2, 2) == 0.0);
    CHECK(close_rel(reward_energy(true, 5, true, 3, 2, 1.5), 2.5, 1e-12));
    CHECK(reward_energy(true, 5, false, 1e6, 2, 2) == 5.0);
    CHECK(reward_energy(false, 5, true, 3, 2, 2) == -3.0);

    CHECK(compose_reward(0.5, 0.0, 1.0) == 0.5);
    CHECK(close_rel(compose_reward(0.5, reward_energy(true, 5, true, 3, 2, 1.5), reward_comfort(70, 66)), 1.35, 1e-12));
    CHECK(close_rel(compose_reward(0.8, 1.0, 2.0), 1.2, 1e-12));
  }

  TEST_CASE("exogenous_lookup") {
    const auto& raw = shared_window().raw;
    const auto first = exogenous_lookup(raw, 0);
    REQUIRE(first);
    CHECK(first->oat == raw.at(0, Column::oat));
    CHECK(first->avg_stpt == raw.at(0, Column::avg_stpt));
    const auto last = exogenous_lookup(raw, raw.size() - 1);
    REQUIRE(last);
    CHECK(last->wbt == raw.at(raw.size() - 1, Column::wbt));
    CHECK(!exogenous_lookup(raw, raw.size()));
  }

  TEST_CASE("stub models matching the RBC give the comfort-only reward") {
    data::TimeSeriesFrame f(1559520000, data::kHalfHour);
    for (int i = 0; i < 12; ++i) f.append({70, 50, 60, 100, 68, 68, 2, 1});
    const auto labels = data::derive_valve_labels(f);
    const auto d = make_env_data(f, labels, 0, f.size(), data::fit_scaler(f, 0, f.size()));
    ModelOutput same;
    same.valve_on = true;
    same.valve_prob = 1.0;
    BuildingEnv env(d, std::make_unique<StubModels>(same), EnvConfig{});
    env.reset_at(0);
    const StepResult r = env.advance(0.0);
    CHECK(r.reward_energy == 0.0);
    CHECK(r.reward_comfort == 1.0);
    CHECK(r.reward == 0.5);
  }

  TEST_CASE("episode length and reset") {
    auto env = make_env(window_data(0, 40));
    const EnvState& s = env.reset_at(0);
    CHECK(s.t == 6);
    CHECK(s.history.rows() == 6);
    const EnvState first = env.state();
    std::size_t steps = 0;
    while (!env.done()) {
      env.advance(0.5);
      ++steps;
    }
    CHECK(steps == 40 - 6);
    CHECK_THROWS_AS(env.advance(0.0), UsageError);
    env.reset_at(0);
    CHECK(env.state().history == first.history);
    CHECK(env.state().setpoint == first.setpoint);
    CHECK(env.state().exo == first.exo);

    auto tiny = make_env(window_data(0, 6));
    CHECK_THROWS_AS(tiny.reset_at(0), InputError);
    auto fresh = make_env(window_data(0, 10));
    CHECK_THROWS_AS(fresh.advance(0.0), UsageError);
    CHECK(fresh.observation_size() == 10);
  }

  TEST_CASE("random starts honour episode_steps") {
    EnvConfig cfg;
    cfg.episode_steps = 12;
    auto env = make_env(window_data(0, 300), nullptr, cfg);
    std::mt19937_64 rng(3);
    for (int e = 0; e < 5; ++e) {
      env.reset(rng);
      std::size_t n = 0;
      while (!env.done()) {
        env.step(0.0);
        ++n;
      }
      CHECK(n == 12);
    }
  }

  TEST_CASE("exogeny, bounds, decomposition and valve gating over random steps") {
    const auto d = window_data(100, 700);
    auto a = make_env(d);
    auto b = make_env(d);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> act(-3.0, 3.0);
    a.reset_at(0);
    b.reset_at(0);
    std::size_t gated = 0;
    for (int i = 0; i < 590; ++i) {
      const double prev = a.state().setpoint;
      const StepResult ra = a.advance(act(rng));
      const StepResult rb = b.advance(act(rng));
      REQUIRE(ra.next_state.exo == rb.next_state.exo);
      REQUIRE(std::abs(ra.next_state.setpoint - prev) <= 2.0 + 1e-9);
      REQUIRE(ra.next_state.setpoint >= 55.0);
      REQUIRE(ra.next_state.setpoint <= 75.0);
      REQUIRE(ra.reward == compose_reward(0.5, ra.reward_energy, ra.reward_comfort));
      if (!ra.info.rl_valve) {
        ++gated;
        const std::size_t t = ra.next_state.t - 1;
        REQUIRE(ra.info.rl_heat == 0.0);
        const double expected = reward_energy(ra.info.rbc_valve, d->scaled.at(t, Column::hwe), false, 0.0,
                                              d->scaled.at(t, Column::cwe),
                                              std::max(0.0, 0.2 + 0.6 * d->scaler.scale(Column::sat, ra.next_state.sat)));
        REQUIRE(ra.reward_energy == expected);
      }
      if (a.done()) break;
    }
    CHECK(gated > 0);
  }

  TEST_CASE("episodes are deterministic") {
    const auto d = window_data(0, 200);
    std::vector<double> actions;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> act(-2.0, 2.0);
    for (int i = 0; i < 194; ++i) actions.push_back(act(rng));
    auto a = make_env(d);
    auto b = make_env(d);
    CHECK(trajectory(a, actions) == trajectory(b, actions));
  }

  TEST_CASE("learned models drive the environment") {
    auto set = std::make_shared<dyn::ModelSet>();
    set->heating = dyn::build_model(dyn::ModelKind::heating, 1);
    set->valve = dyn::build_model(dyn::ModelKind::valve, 2);
    set->cooling = dyn::build_model(dyn::ModelKind::cooling, 3);
    set->scaler = shared_window().scaler;
    auto env = make_env(window_data(0, 60), std::make_unique<LearnedTransitionModels>(set));
    env.reset_at(0);
    while (!env.done()) {
      const auto r = env.advance(1.0);
      REQUIRE(std::isfinite(r.reward));
      REQUIRE(r.info.rl_cool >= 0.0);
      REQUIRE(r.info.rl_heat >= 0.0);
      REQUIRE(r.info.valve_prob >= 0.0);
      REQUIRE(r.info.valve_prob <= 1.0);
    }
    const auto obs = env.observation();
    CHECK(obs.size() == BuildingEnv::kObservationSize);
  }

  TEST_CASE("config validation") {
    EnvConfig bad;
    bad.vartheta = 1.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    EnvConfig alpha;
    alpha.alpha = 0.0;
    CHECK_THROWS_AS(validate(alpha), ConfigError);
  }
}
