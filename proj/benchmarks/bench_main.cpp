#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <vector>

#include "relearn/building_env.hpp"
#include "relearn/dynamics.hpp"
#include "relearn/nn.hpp"
#include "relearn/ppo.hpp"
#include "relearn/preprocess.hpp"
#include "relearn/scaler.hpp"
#include "relearn/synthetic.hpp"
#include "relearn/toy_env.hpp"
#include "relearn/windowing.hpp"

using namespace relearn;

namespace {

Tensor2 random_sequence(std::size_t steps, std::size_t features, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor2 t(steps, features);
  for (std::size_t r = 0; r < steps; ++r) {
    for (std::size_t c = 0; c < features; ++c) t(r, c) = u(rng);
  }
  return t;
}

void BM_DynamicsForward(benchmark::State& state) {
  const auto model = dyn::build_model(static_cast<dyn::ModelKind>(state.range(0)), 1);
  std::mt19937_64 rng(2);
  const auto seq = random_sequence(data::kLookback, data::kModelFeatures.size(), rng);
  nn::Tape tape;
  for (auto _ : state) {
    nn::forward(model.stack, seq, tape);
    benchmark::DoNotOptimize(tape.output().data());
  }
}
BENCHMARK(BM_DynamicsForward)->Arg(0)->Arg(1)->Arg(2);

// One minibatch of backpropagation through time on the heating model.
void BM_DynamicsBackward(benchmark::State& state) {
  const auto model = dyn::build_model(dyn::ModelKind::heating, 1);
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::vector<Tensor2> inputs;
  for (std::size_t i = 0; i < batch_size; ++i) {
    inputs.push_back(random_sequence(data::kLookback, data::kModelFeatures.size(), rng));
  }
  const Tensor2 targets = random_sequence(batch_size, 1, rng);
  const nn::BatchView batch{inputs, &targets};
  auto grads = nn::Gradients::zeros_like(model.stack);
  for (auto _ : state) {
    grads.zero();
    benchmark::DoNotOptimize(nn::backward(model.stack, batch, nn::Loss::mse, grads));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch_size));
}
BENCHMARK(BM_DynamicsBackward)->Arg(1)->Arg(32);

// One PPO update (all epochs and minibatches) over a 10 x 128 rollout.
void BM_PpoUpdate(benchmark::State& state) {
  rl::PPOConfig cfg;
  cfg.threads = static_cast<std::size_t>(state.range(0));
  auto ac = rl::make_actor_critic(1, cfg);
  rl::EnvPool pool([](std::size_t) { return std::make_unique<QuadraticEnv>(); }, cfg.n_envs, 4);
  rl::PPOOptimizers opt(cfg.lr);
  std::mt19937_64 rng(5);
  for (auto _ : state) {
    state.PauseTiming();
    auto buf = pool.collect(ac, cfg.horizon, cfg.threads);
    rl::compute_advantages(buf, cfg.gamma, cfg.lambda);
    state.ResumeTiming();
    benchmark::DoNotOptimize(rl::update(ac, buf, cfg, opt, rng));
  }
}
BENCHMARK(BM_PpoUpdate)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RolloutCollect(benchmark::State& state) {
  rl::PPOConfig cfg;
  const auto ac = rl::make_actor_critic(1, cfg);
  rl::EnvPool pool([](std::size_t) { return std::make_unique<QuadraticEnv>(); }, cfg.n_envs, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pool.collect(ac, cfg.horizon).size());
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cfg.n_envs * cfg.horizon));
}
BENCHMARK(BM_RolloutCollect)->Unit(benchmark::kMillisecond);

// Building environment step with untrained networks over 15 weeks of data.
void BM_BuildingEnvStep(benchmark::State& state) {
  data::SyntheticGenConfig gen;
  gen.n_weeks = 15;
  const auto agg = data::aggregate_30min(data::generate_synthetic(gen));
  const auto labels = data::derive_valve_labels(agg.frame);
  const std::size_t rows = agg.frame.size();
  const auto scaler = data::fit_scaler(agg.frame, 0, rows);
  auto models = std::make_shared<dyn::ModelSet>();
  models->heating = dyn::build_model(dyn::ModelKind::heating, 1);
  models->valve = dyn::build_model(dyn::ModelKind::valve, 2);
  models->cooling = dyn::build_model(dyn::ModelKind::cooling, 3);
  models->scaler = scaler;
  env::BuildingEnv e(env::make_env_data(agg.frame, labels, 0, rows, scaler),
                     std::make_unique<env::LearnedTransitionModels>(models), {});
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> act(-2.0, 2.0);
  e.reset_at(0);
  for (auto _ : state) {
    if (e.done()) e.reset_at(0);
    benchmark::DoNotOptimize(e.advance(act(rng)).reward);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(BM_BuildingEnvStep);

void BM_SyntheticWeek(benchmark::State& state) {
  data::SyntheticGenConfig gen;
  gen.n_weeks = 15;
  for (auto _ : state) benchmark::DoNotOptimize(data::aggregate_30min(data::generate_synthetic(gen)).frame.size());
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * gen.n_weeks));
}
BENCHMARK(BM_SyntheticWeek)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
