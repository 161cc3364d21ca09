#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "relearn/config.hpp"
#include "relearn/error.hpp"
#include "relearn/orchestrator.hpp"
#include "test_support.hpp"

using namespace relearn;
using namespace relearn::orch;
using relearn::testing::read_file;
using relearn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

CampaignConfig tiny() { return config::load_campaign_config(relearn::testing::tiny_config()); }

VariantWeek week_of(Variant v, double total, double rbc_total) {
  return make_variant_week(v, EnergyTotals{total / 2, total / 2}, EnergyTotals{rbc_total / 2, rbc_total / 2});
}

IterationReport report(std::size_t week, double adaptive, double fixed, double rbc) {
  IterationReport r;
  r.week = week;
  r.variants = {week_of(Variant::adaptive, adaptive, rbc), week_of(Variant::fixed, fixed, rbc),
                week_of(Variant::rbc, rbc, rbc)};
  return r;
}

const VariantSummary& summary_of(const Summary& s, Variant v) {
  for (const auto& x : s.variants) {
    if (x.variant == v) return x;
  }
  FAIL("variant missing");
  return s.variants.front();
}

std::size_t index_of(const Summary& s, Variant v) {
  for (std::size_t i = 0; i < s.variants.size(); ++i) {
    if (s.variants[i].variant == v) return i;
  }
  return s.variants.size();
}

void check_savings_identity(const Savings& s, double rbc, double variant) {
  CHECK(s.kbtu == rbc - variant);
  CHECK(s.percent == doctest::Approx(100.0 * (rbc - variant) / rbc).epsilon(1e-12));
}

/// One shared tiny campaign with artifacts on disk.
struct TinyRun {
  TempDir dir{"campaign"};
  CampaignResult result;
  TinyRun() { result = run_campaign(tiny(), dir.path()); }
};

const TinyRun& tiny_run() {
  static const TinyRun run;
  return run;
}

}  // namespace

TEST_SUITE("orchestrator") {
  TEST_CASE("compute_savings") {
    const auto a = compute_savings(100, 90);
    CHECK(a.percent == 10.0);
    CHECK(a.kbtu == 10.0);
    const auto b = compute_savings(100, 165);
    CHECK(b.percent == -65.0);
    CHECK(b.kbtu == -65.0);
    const auto c = compute_savings(42.5, 42.5);
    CHECK(c.percent == 0.0);
    CHECK(c.kbtu == 0.0);
    CHECK_THROWS_AS(compute_savings(0, 1), UndefinedMetricError);
    CHECK_THROWS_AS(compute_savings(-3, 1), UndefinedMetricError);
  }

  TEST_CASE("make_variant_week applies the savings formula per component") {
    const auto w = make_variant_week(Variant::adaptive, {30, 50}, {40, 45});
    CHECK(w.total == 80);
    check_savings_identity(w.heating_savings, 40, 30);
    check_savings_identity(w.cooling_savings, 45, 50);
    check_savings_identity(w.total_savings, 85, 80);
    const auto z = make_variant_week(Variant::adaptive, {3, 5}, {0, 5});
    CHECK(std::isnan(z.heating_savings.percent));
    CHECK(z.heating_savings.kbtu == -3);
  }

  TEST_CASE("compare_variants head to head") {
    const std::vector<IterationReport> reps{report(1, 95, 97, 100)};
    const auto s = compare_variants(reps);
    const auto ia = index_of(s, Variant::adaptive), is = index_of(s, Variant::fixed);
    CHECK(s.head_to_head[ia][is] == 1);
    CHECK(s.head_to_head[is][ia] == 0);
    CHECK(summary_of(s, Variant::adaptive).wins == 1);
    CHECK(summary_of(s, Variant::fixed).wins == 0);
    CHECK(summary_of(s, Variant::adaptive).total_savings.mean == doctest::Approx(5.0));
  }

  TEST_CASE("compare_variants on equal series") {
    const std::vector<IterationReport> reps{report(1, 90, 90, 100), report(2, 80, 80, 100)};
    const auto s = compare_variants(reps);
    const auto ia = index_of(s, Variant::adaptive), is = index_of(s, Variant::fixed);
    CHECK(s.head_to_head[ia][is] == 0);
    CHECK(s.head_to_head[is][ia] == 0);
    const auto& a = summary_of(s, Variant::adaptive);
    const auto& f = summary_of(s, Variant::fixed);
    CHECK(a.total_savings.mean == f.total_savings.mean);
    CHECK(a.total_savings.stddev == f.total_savings.stddev);
    CHECK(a.total == f.total);
    CHECK(a.total_savings.mean == doctest::Approx(15.0));
    CHECK(a.total_savings.stddev == doctest::Approx(5.0));  // population std of {10, 20}
  }

  TEST_CASE("compare_variants skips failed weeks and needs one success") {
    IterationReport failed;
    failed.week = 2;
    failed.failed = true;
    const std::vector<IterationReport> reps{report(1, 95, 97, 100), failed};
    CHECK(compare_variants(reps).failed_weeks == 1);
    const std::vector<IterationReport> none{failed};
    CHECK_THROWS_AS(compare_variants(none), InputError);
  }

  TEST_CASE("format_percent") {
    CHECK(format_percent({12.61, 5.73}) == "12.61%(5.73%)");
    CHECK(format_percent({-65.0, 0.0}) == "-65.00%(0.00%)");
    CHECK(format_percent({-0.001, 0.0}) == "0.00%(0.00%)");
  }

  TEST_CASE("variant names") {
    CHECK(to_string(Variant::fixed) == "static");
    CHECK(variant_from_string("adaptive") == Variant::adaptive);
    CHECK(variant_from_string("rbc") == Variant::rbc);
    CHECK_THROWS_AS(variant_from_string("greedy"), ConfigError);
  }

  TEST_CASE("prepare_data checks coverage") {
    auto cfg = tiny();
    const auto data = prepare_data(cfg);
    CHECK(data.frame.period() == data::kHalfHour);
    CHECK(data.labels.size() == data.frame.size());
    CHECK(data.windows.size() == 2);
    cfg.n_weeks = 3;
    CHECK_THROWS_AS(prepare_data(cfg), ConfigError);
  }

  TEST_CASE("recorded trajectory reproduces the data") {
    const auto cfg = tiny();
    const auto data = prepare_data(cfg);
    const auto fit = fit_dynamics(data, 0, cfg);
    const auto& w = data.windows[0];
    std::vector<double> sat;
    for (std::size_t r = w.eval_begin - data::kLookback; r < w.eval_end; ++r) sat.push_back(data.frame.at(r, data::Column::sat));
    const auto e = score_trajectory(*fit.models, data, w.eval_begin, w.eval_end, sat, cfg.env.valve_threshold);
    const auto rec = recorded_totals(data, w.eval_begin, w.eval_end);
    CHECK(e.heating == doctest::Approx(rec.heating).epsilon(1e-12));
    CHECK(e.cooling == doctest::Approx(rec.cooling).epsilon(1e-12));
    CHECK_THROWS_AS(score_trajectory(*fit.models, data, w.eval_begin, w.eval_end,
                                     std::span<const double>(sat).first(10), cfg.env.valve_threshold),
                    ShapeError);
  }

  TEST_CASE("tiny campaign reports") {
    const auto& run = tiny_run();
    const auto& reps = run.result.reports;
    REQUIRE(reps.size() == 2);
    CHECK(!run.result.any_failed());
    const auto cfg = tiny();
    const auto data = prepare_data(cfg);
    for (const auto& r : reps) {
      CAPTURE(r.week);
      REQUIRE(!r.failed);
      REQUIRE(r.variants.size() == 3);
      const auto& w = data.windows[cfg.first_window + r.week - 1];
      const auto rec = recorded_totals(data, w.eval_begin, w.eval_end);
      double h = 0, c = 0;
      for (std::size_t i = w.eval_begin; i < w.eval_end; ++i) {
        h += data.frame.at(i, data::Column::hwe);
        c += data.frame.at(i, data::Column::cwe);
      }
      const auto* rbc = r.find(Variant::rbc);
      REQUIRE(rbc);
      CHECK(rbc->heating == h);
      CHECK(rbc->cooling == c);
      CHECK(rbc->heating == rec.heating);
      for (const auto& v : r.variants) {
        CHECK(v.heating >= 0.0);
        CHECK(v.cooling >= 0.0);
        CHECK(v.total == v.heating + v.cooling);
        check_savings_identity(v.heating_savings, rbc->heating, v.heating);
        check_savings_identity(v.cooling_savings, rbc->cooling, v.cooling);
        check_savings_identity(v.total_savings, rbc->total, v.total);
      }
      CHECK(std::isfinite(r.cvrmse_c));
      CHECK(r.roc_auc >= 0.0);
      CHECK(r.roc_auc <= 1.0);
    }
  }

  TEST_CASE("static variant and feature layers stay frozen") {
    const auto& reps = tiny_run().result.reports;
    REQUIRE(reps.size() == 2);
    for (const char* k : {"heating", "valve", "cooling"}) {
      const std::string kind(k);
      CHECK(reps[1].checksums.at("static_" + kind) == reps[0].checksums.at("adaptive_" + kind));
      CHECK(reps[1].checksums.at("adaptive_" + kind + "_features") == reps[0].checksums.at("adaptive_" + kind + "_features"));
      CHECK(reps[1].checksums.at("adaptive_" + kind) != reps[0].checksums.at("adaptive_" + kind));
    }
    CHECK(reps[1].checksums.at("static_policy") == reps[0].checksums.at("adaptive_policy"));
    CHECK(reps[0].static_cvrmse_c == reps[0].cvrmse_c);
  }

  TEST_CASE("campaign artifacts") {
    const auto& run = tiny_run();
    const fs::path root = run.dir.path();
    const std::string stamp = artifact_stamp(tiny());
    for (const char* f : {"summary.csv", "campaign.json"}) CHECK(fs::exists(root / f));
    for (int k = 1; k <= 2; ++k) {
      const fs::path w = root / ("week_" + std::to_string(k));
      for (const char* f : {"trajectories.csv", "trajectories_static.csv", "report.csv", "metrics.csv", "predictions.csv",
                            "ppo_log.csv"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(w / f));
        const auto text = read_file(w / f);
        CHECK(text.rfind(stamp + "\n", 0) == 0);
      }
      for (const char* f : {"heating.json", "valve.json", "cooling.json"}) CHECK(fs::exists(w / "checkpoints" / f));
    }
    const auto summary = read_file(root / "summary.csv");
    CHECK(summary.find(std::string(kSummaryHeader)) != std::string::npos);
    CHECK(summary.find("\nadaptive,") != std::string::npos);
    CHECK(summary.find("\nstatic,") != std::string::npos);
    CHECK(summary.find("\nrbc,") != std::string::npos);
  }

  TEST_CASE("identical seeds give identical artifacts") {
    TempDir again("campaign");
    run_campaign(tiny(), again.path());
    const fs::path first = tiny_run().dir.path();
    std::size_t compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(first)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), first);
      CAPTURE(rel.string());
      REQUIRE(fs::exists(again.path() / rel));
      CHECK(read_file(e.path()) == read_file(again.path() / rel));
      ++compared;
    }
    CHECK(compared > 20);
  }

  TEST_CASE("single-week campaign") {
    auto cfg = tiny();
    cfg.n_weeks = 1;
    cfg.variants = {Variant::rbc, Variant::adaptive};
    const auto r = run_campaign(cfg, std::nullopt);
    REQUIRE(r.reports.size() == 1);
    CHECK(r.reports[0].week == 1);
    CHECK(r.reports[0].variants.size() == 2);
    CHECK(r.summary.variants.size() == 2);
  }

  TEST_CASE("failed iteration keeps the previous state") {
    const auto cfg = tiny();
    auto data = prepare_data(cfg);
    CampaignState state;
    const auto first = run_iteration(state, data, 0, cfg);
    REQUIRE(!first.failed);
    const auto models = state.adaptive_models;
    const auto policy = rl::checksum(*state.adaptive_policy);

    // no heating anywhere: the heating dataset is empty and retraining fails
    std::fill(data.labels.begin(), data.labels.end(), 0);
    auto& hwe = data.frame.column(data::Column::hwe);
    std::fill(hwe.begin(), hwe.end(), 0.0);
    const auto second = run_iteration(state, data, 1, cfg);
    CHECK(second.failed);
    CHECK(!second.error.empty());
    CHECK(second.variants.empty());
    CHECK(state.adaptive_models == models);
    CHECK(rl::checksum(*state.adaptive_policy) == policy);
    CHECK(state.completed == 1);

    const auto missing = run_iteration(state, data, 5, cfg);
    CHECK(missing.failed);
    CHECK(missing.week == 6);
  }

  TEST_CASE("config validation") {
    auto cfg = tiny();
    cfg.variants = {Variant::rbc, Variant::rbc};
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = tiny();
    cfg.threads = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
}
