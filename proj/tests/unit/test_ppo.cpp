#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "relearn/error.hpp"
#include "relearn/ppo.hpp"
#include "relearn/toy_env.hpp"
#include "test_support.hpp"

using namespace relearn;
using namespace relearn::rl;
using relearn::testing::close_rel;

namespace {

EnvFactory bandit() {
  return [](std::size_t) { return std::make_unique<BanditEnv>(); };
}
EnvFactory quadratic() {
  return [](std::size_t) { return std::make_unique<QuadraticEnv>(); };
}

PPOConfig small_config() {
  PPOConfig c;
  c.n_envs = 4;
  c.horizon = 64;
  c.minibatch = 64;
  c.epochs = 4;
  c.hidden = 16;
  c.seed = 5;
  return c;
}

double mean_head(const Policy& p) {
  nn::Tape tape;
  const std::vector<double> obs{0.0};
  return policy_mean(p, obs, tape);
}

void set_mean_output(Policy& p, double mu) {
  auto& head = nn::parameters(p.mean.layer(p.mean.size() - 1));
  std::fill(head.begin(), head.end(), 0.0);
  head.back() = mu;
}

}  // namespace

TEST_SUITE("ppo") {
  TEST_CASE("clipped objective fixtures") {
    CHECK(ppo_clip_objective(1.0, 2.0, 0.2) == 2.0);
    CHECK(close_rel(ppo_clip_objective(1.5, 1.0, 0.2), 1.2, 1e-12));
    CHECK(close_rel(ppo_clip_objective(0.5, -1.0, 0.2), -0.8, 1e-12));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> r(0.0, 3.0), a(-5.0, 5.0), e(0.01, 0.9);
    for (int i = 0; i < 1000; ++i) {
      const double adv = a(rng), ratio = r(rng), eps = e(rng);
      REQUIRE(ppo_clip_objective(1.0, adv, eps) == adv);
      REQUIRE(ppo_clip_objective(ratio, adv, eps) <= ratio * adv + 1e-15);
    }
  }

  TEST_CASE("advantage estimation") {
    const std::vector<double> r1{1.0}, v1{0.0, 0.0};
    const std::vector<std::uint8_t> d1{1};
    const auto single = compute_advantages(r1, v1, d1, 0.99, 0.95);
    CHECK(single.advantages == std::vector<double>{1.0});

    const std::vector<double> r{1.0, 1.0}, v{0.5, 0.5, 0.0};
    const std::vector<std::uint8_t> d{0, 1};
    const auto gae = compute_advantages(r, v, d, 0.9, 0.95);
    CHECK(close_rel(gae.advantages[0], 1.3775, 1e-12));
    CHECK(close_rel(gae.advantages[1], 0.5, 1e-12));
    CHECK(close_rel(gae.returns[0], 1.8775, 1e-12));
    CHECK(close_rel(gae.returns[1], 1.0, 1e-12));

    const auto td = compute_advantages(r, v, d, 0.9, 0.0);
    CHECK(close_rel(td.advantages[0], 0.95, 1e-12));
    CHECK(close_rel(td.advantages[1], 0.5, 1e-12));

    // random trajectories: lambda = 0 reduces to one-step TD errors
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::bernoulli_distribution end(0.1);
    std::vector<double> rr(50), vv(51);
    std::vector<std::uint8_t> dd(50);
    for (auto& x : rr) x = n(rng);
    for (auto& x : vv) x = n(rng);
    for (auto& x : dd) x = end(rng) ? 1 : 0;
    const auto z = compute_advantages(rr, vv, dd, 0.97, 0.0);
    for (std::size_t t = 0; t < 50; ++t) {
      const double delta = rr[t] + 0.97 * vv[t + 1] * (1.0 - dd[t]) - vv[t];
      REQUIRE(z.advantages[t] == doctest::Approx(delta).epsilon(1e-12));
    }
  }

  TEST_CASE("rollout buffer sizes and determinism") {
    auto cfg = small_config();
    const auto ac = make_actor_critic(1, cfg);
    EnvPool one(quadratic(), 1, 1);
    CHECK(one.collect(ac, 1).size() == 1);
    EnvPool ten(quadratic(), 10, 1);
    const auto big = ten.collect(ac, 128);
    CHECK(big.size() == 1280);
    CHECK(big.observations.size() == 1280);
    CHECK(big.bootstrap.size() == 10);
    CHECK(big.generation == ac.generation);

    EnvPool a(quadratic(), 3, 9), b(quadratic(), 3, 9);
    const auto ba = a.collect(ac, 40), bb = b.collect(ac, 40);
    CHECK(ba.actions == bb.actions);
    CHECK(ba.rewards == bb.rewards);
    CHECK(ba.observations == bb.observations);

    EnvPool c(quadratic(), 3, 9);
    CHECK(c.collect(ac, 40, 3).actions == ba.actions);
  }

  TEST_CASE("action squashing") {
    auto cfg = small_config();
    auto ac = make_actor_critic(1, cfg);
    set_mean_output(ac.policy, 0.0);
    nn::Tape tape;
    const std::vector<double> obs{0.3};
    for (double z : {0.1, 0.7, 2.5, 10.0}) {
      const auto p = action_from_noise(ac.policy, obs, z, tape);
      const auto m = action_from_noise(ac.policy, obs, -z, tape);
      CHECK(p.action == -m.action);
      CHECK(p.log_prob == doctest::Approx(m.log_prob).epsilon(1e-12));
    }
    std::mt19937_64 rng(4);
    ac.policy.log_std = {2.0};
    set_mean_output(ac.policy, 3.0);
    for (int i = 0; i < 2000; ++i) {
      const auto s = sample_action(ac.policy, obs, rng);
      REQUIRE(s.action >= -kActionScale);
      REQUIRE(s.action <= kActionScale);
      REQUIRE(std::isfinite(s.log_prob));
    }
    const auto det = sample_action(ac.policy, obs, rng, true);
    CHECK(det.action == squash(3.0));
    ac.policy.log_std = {-30.0};
    CHECK(sample_action(ac.policy, obs, rng).action == doctest::Approx(squash(3.0)).epsilon(1e-12));

    set_mean_output(ac.policy, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(sample_action(ac.policy, obs, rng), NumericError);
  }

  TEST_CASE("advantage normalization") {
    auto cfg = small_config();
    const auto ac = make_actor_critic(1, cfg);
    EnvPool pool(quadratic(), 4, 2);
    auto buf = pool.collect(ac, 64);
    compute_advantages(buf, cfg.gamma, cfg.lambda);
    normalize_advantages(buf);
    const double n = static_cast<double>(buf.size());
    const double mean = std::accumulate(buf.advantages.begin(), buf.advantages.end(), 0.0) / n;
    double var = 0.0;
    for (double a : buf.advantages) var += (a - mean) * (a - mean);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-10);
  }

  TEST_CASE("zero advantages leave the policy unchanged") {
    auto cfg = small_config();
    auto ac = make_actor_critic(1, cfg);
    EnvPool pool(quadratic(), 4, 2);
    auto buf = pool.collect(ac, 64);
    compute_advantages(buf, cfg.gamma, cfg.lambda);
    std::fill(buf.advantages.begin(), buf.advantages.end(), 0.0);
    const Policy before = ac.policy;
    const auto value_before = ac.value.net;
    PPOOptimizers opt(cfg.lr);
    std::mt19937_64 rng(1);
    const auto st = update(ac, buf, cfg, opt, rng);
    CHECK(ac.policy.mean == before.mean);
    CHECK(ac.policy.log_std == before.log_std);
    CHECK(!(ac.value.net == value_before));
    CHECK(st.clip_fraction == 0.0);
    CHECK(ac.generation == 1);
  }

  TEST_CASE("generation mismatch is rejected") {
    auto cfg = small_config();
    auto ac = make_actor_critic(1, cfg);
    EnvPool pool(quadratic(), 2, 2);
    auto buf = pool.collect(ac, 32);
    compute_advantages(buf, cfg.gamma, cfg.lambda);
    PPOOptimizers opt(cfg.lr);
    std::mt19937_64 rng(1);
    update(ac, buf, cfg, opt, rng);
    CHECK_THROWS_AS(update(ac, buf, cfg, opt, rng), UsageError);
  }

  TEST_CASE("one bandit update moves the mean toward zero") {
    PPOConfig cfg;
    cfg.seed = 3;
    cfg.total_steps = cfg.n_envs * cfg.horizon;
    auto ac = make_actor_critic(1, cfg);
    set_mean_output(ac.policy, 0.8);
    const double before = std::abs(mean_head(ac.policy));
    const auto r = train(bandit(), cfg, ac);
    REQUIRE(r.log.size() == 1);
    CHECK(std::abs(mean_head(r.model.policy)) < before);
    CHECK(r.log[0].clip_fraction >= 0.0);
    CHECK(r.log[0].clip_fraction <= 1.0);
  }

  TEST_CASE("zero steps return the initial model") {
    auto cfg = small_config();
    cfg.total_steps = 0;
    auto init = make_actor_critic(1, cfg);
    set_mean_output(init.policy, 0.4);
    const auto r = train(quadratic(), cfg, init);
    CHECK(checksum(r.model) == checksum(init));
    CHECK(r.log.empty());
    CHECK(r.steps == 0);
  }

  TEST_CASE("warm start is at least as good as a fresh policy") {
    auto cfg = small_config();
    cfg.total_steps = 20000;
    const auto trained = train(quadratic(), cfg, std::nullopt);
    cfg.total_steps = cfg.n_envs * cfg.horizon;
    cfg.seed = 77;
    const auto warm = train(quadratic(), cfg, trained.model);
    const auto fresh = train(quadratic(), cfg, std::nullopt);
    REQUIRE(warm.log.size() == 1);
    CHECK(warm.log[0].mean_episode_reward >= fresh.log[0].mean_episode_reward);
  }

  TEST_CASE("training is independent of the thread count") {
    auto cfg = small_config();
    cfg.total_steps = 1024;
    const auto a = train(quadratic(), cfg);
    cfg.threads = 3;
    const auto b = train(quadratic(), cfg);
    CHECK(checksum(a.model) == checksum(b.model));
  }

  TEST_CASE("actor-critic checkpoints round trip") {
    auto cfg = small_config();
    cfg.total_steps = 512;
    const auto r = train(quadratic(), cfg);
    relearn::testing::TempDir dir("ac");
    save_actor_critic(dir.path(), r.model, cfg);
    const auto back = load_actor_critic(dir.path());
    CHECK(checksum(back) == checksum(r.model));
    CHECK(back.generation == r.model.generation);
    CHECK(back.policy.log_std == r.model.policy.log_std);
    CHECK_THROWS(load_actor_critic(dir / "missing"));
  }

  TEST_CASE("config validation and hash") {
    PPOConfig bad;
    bad.clip = 1.5;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    PPOConfig a, b;
    b.threads = 8;
    CHECK(config_hash(a) == config_hash(b));
    b.lr = 0.001;
    CHECK(config_hash(a) != config_hash(b));
  }
}
