#include <cmath>

#include "doctest.h"
#include "relearn/config.hpp"
#include "relearn/error.hpp"
#include "test_support.hpp"

using namespace relearn;
using namespace relearn::config;

TEST_SUITE("config") {
  TEST_CASE("shipped configs round trip") {
    for (const auto& p : {relearn::testing::desk_config(), relearn::testing::source_dir() / "configs" / "default.ini",
                          relearn::testing::tiny_config()}) {
      CAPTURE(p.string());
      const auto cfg = load_campaign_config(p);
      const auto text = to_ini_string(cfg);
      CHECK(to_ini_string(parse_campaign_config(text)) == text);
      CHECK(config_hash(parse_campaign_config(text)) == config_hash(cfg));
    }
  }

  TEST_CASE("defaults follow the documented full-scale values") {
    const auto cfg = parse_campaign_config("");
    CHECK(cfg.ppo.clip == 0.2);
    CHECK(cfg.ppo.lr == 0.0025);
    CHECK(cfg.ppo.total_steps == 1'000'000);
    CHECK(cfg.ppo.n_envs == 10);
    CHECK(cfg.env.vartheta == 0.5);
    CHECK(cfg.window.train_len == std::chrono::weeks(13));
    CHECK(cfg.source.outlier_k == 2.0);
  }

  TEST_CASE("values are parsed into the right fields") {
    const auto cfg = parse_campaign_config(
        "; comment\n"
        "[data]\nsource = synthetic\noutlier_k = inf\n"
        "[synthetic]\nn_weeks = 20\nseed = 4\n"
        "[window]\ntrain_weeks = 8\n"
        "[ppo]\nlr = 0.001\nreset_exploration = false\n"
        "[env]\nvartheta = 0.7\nepisode_steps = 48\n"
        "[campaign]\nvariants = rbc, adaptive\nthreads = 2\n");
    CHECK(std::isinf(cfg.source.outlier_k));
    CHECK(cfg.source.synthetic.n_weeks == 20);
    CHECK(cfg.source.synthetic.seed == 4);
    CHECK(cfg.window.train_len == std::chrono::weeks(8));
    CHECK(cfg.ppo.lr == 0.001);
    CHECK(!cfg.ppo_reset_exploration);
    CHECK(cfg.env.vartheta == 0.7);
    CHECK(cfg.env.episode_steps == 48);
    CHECK(cfg.variants == std::vector<orch::Variant>{orch::Variant::rbc, orch::Variant::adaptive});
    CHECK(cfg.threads == 2);
  }

  TEST_CASE("malformed input is rejected") {
    CHECK_THROWS_AS(parse_campaign_config("[ppo]\nlearning_rate = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_campaign_config("[nonsense]\nkey = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_campaign_config("[ppo]\nlr = fast\n"), ConfigError);
    CHECK_THROWS_AS(parse_campaign_config("[campaign]\nvariants = adaptive,greedy\n"), ConfigError);
    CHECK_THROWS_AS(parse_campaign_config("[ppo]\nclip = 2\n"), ConfigError);
    CHECK_THROWS_AS(load_campaign_config("/nonexistent/relearn.ini"), InputError);
    try {
      parse_campaign_config("[ppo]\nlearning_rate = 0.1\n");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    }
  }

  TEST_CASE("hash ignores the thread count and tracks the seed") {
    auto a = load_campaign_config(relearn::testing::tiny_config());
    auto b = a;
    b.threads = 4;
    b.ppo.threads = 4;
    CHECK(config_hash(a) == config_hash(b));
    apply_seed(b, 99);
    CHECK(b.seed == 99);
    CHECK(b.source.synthetic.seed == 99);
    CHECK(config_hash(a) != config_hash(b));
  }
}
