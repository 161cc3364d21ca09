#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "relearn/config.hpp"
#include "relearn/orchestrator.hpp"
#include "test_support.hpp"

using relearn::testing::read_file;
using relearn::testing::TempDir;
namespace fs = std::filesystem;
namespace cli = relearn::cli;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "relearn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

fs::path write_config(const TempDir& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

const std::string& tiny() {
  static const std::string path = relearn::testing::tiny_config().string();
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    CHECK(run({"--help"}).code == cli::kExitOk);
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"transmogrify"}).code == cli::kExitUsage);
    CHECK(run({"gen-data"}).code == cli::kExitUsage);
    CHECK(run({"gen-data", "-c", "/nonexistent.ini"}).code == cli::kExitUsage);
  }

  TEST_CASE("gen-data writes the expected number of rows") {
    TempDir dir("cli");
    const auto cfg = write_config(dir, "twenty.ini", "[synthetic]\nn_weeks = 20\n");
    const auto r = run({"gen-data", "-c", cfg.string(), "-o", (dir / "a.csv").string()});
    REQUIRE(r.code == cli::kExitOk);
    const auto text = read_file(dir / "a.csv");
    CHECK(count_lines(text) == 20u * 7 * 288 + 2);  // stamp and header
    CHECK(text.rfind("# config_hash=", 0) == 0);

    REQUIRE(run({"gen-data", "-c", cfg.string(), "-o", (dir / "b.csv").string()}).code == cli::kExitOk);
    CHECK(read_file(dir / "b.csv") == text);

    REQUIRE(run({"gen-data", "-c", cfg.string(), "--seed", "8", "-o", (dir / "c.csv").string()}).code == cli::kExitOk);
    const auto seeded = read_file(dir / "c.csv");
    CHECK(seeded != text);
    CHECK(seeded.substr(0, seeded.find('\n')).find("seed=8") != std::string::npos);
  }

  TEST_CASE("gen-data names the minimum-weeks constraint") {
    TempDir dir("cli");
    const auto cfg = write_config(dir, "short.ini", "[synthetic]\nn_weeks = 10\n");
    const auto r = run({"gen-data", "-c", cfg.string(), "-o", (dir / "x.csv").string()});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("n_weeks") != std::string::npos);
    CHECK(!fs::exists(dir / "x.csv"));
  }

  TEST_CASE("relearn with a missing dataset") {
    TempDir dir("cli");
    const auto cfg = write_config(dir, "csv.ini", "[data]\nsource = csv\npath = /nonexistent/data.csv\n");
    const auto r = run({"relearn", "-c", cfg.string(), "-o", (dir / "out").string()});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("not found") != std::string::npos);
  }

  TEST_CASE("relearn, report and reruns") {
    TempDir dir("cli");
    const fs::path out = dir / "camp";
    const auto r = run({"relearn", "-q", "-c", tiny(), "-o", out.string(), "--variants", "adaptive,static,rbc"});
    REQUIRE(r.code == cli::kExitOk);
    const auto summary = read_file(out / "summary.csv");
    CHECK(count_lines(summary) == 2 + 3);
    CHECK(r.out.find("adaptive") != std::string::npos);

    // rerun reproduces every artifact
    REQUIRE(run({"relearn", "-q", "-c", tiny(), "-o", (dir / "again").string()}).code == cli::kExitOk);
    for (const auto& e : fs::recursive_directory_iterator(out)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), out);
      CAPTURE(rel.string());
      CHECK(read_file(e.path()) == read_file(dir / "again" / rel));
    }

    const fs::path rep = dir / "report";
    REQUIRE(run({"report", "--campaign", out.string(), "-o", rep.string()}).code == cli::kExitOk);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(rep)) files += e.is_regular_file() ? 1 : 0;
    CHECK(files == 6);
    for (const char* f : {"energy_predictions.csv", "cvrmse_by_week.csv", "roc_auc_by_week.csv", "reward_curve.csv",
                          "variant_energy.csv", "setpoint_trajectories.csv"}) {
      CHECK(fs::exists(rep / f));
    }
    std::size_t ppo_rows = 0;
    for (int k = 1; k <= 2; ++k) ppo_rows += count_lines(read_file(out / ("week_" + std::to_string(k)) / "ppo_log.csv")) - 2;
    CHECK(count_lines(read_file(rep / "reward_curve.csv")) - 2 == ppo_rows);
    CHECK(ppo_rows > 0);
  }

  TEST_CASE("variant subset and environment overrides") {
    TempDir dir("cli");
    const fs::path out = dir / "env_out";
    ::setenv("RELEARN_OUTPUT_DIR", out.string().c_str(), 1);
    const auto r = run({"relearn", "-q", "-c", tiny(), "--weeks", "1", "--variants", "adaptive,rbc"});
    ::unsetenv("RELEARN_OUTPUT_DIR");
    REQUIRE(r.code == cli::kExitOk);
    CHECK(count_lines(read_file(out / "summary.csv")) == 2 + 2);
    CHECK(run({"relearn", "-q", "-c", tiny(), "-o", (dir / "bad").string(), "--variants", "adaptive,greedy"}).code ==
          cli::kExitUsage);
  }

  TEST_CASE("report on an empty directory") {
    TempDir dir("cli");
    CHECK(run({"report", "--campaign", dir.path().string(), "-o", (dir / "r").string()}).code == cli::kExitUsage);
  }

  TEST_CASE("step-by-step pipeline") {
    TempDir dir("cli");
    const fs::path models = dir / "models";
    REQUIRE(run({"train-dynamics", "-c", tiny(), "-o", models.string()}).code == cli::kExitOk);
    for (const char* f : {"checkpoints/heating.json", "checkpoints/valve.json", "checkpoints/cooling.json",
                          "training_log.csv", "metrics.csv", "predictions.csv"}) {
      CHECK(fs::exists(models / f));
    }
    REQUIRE(run({"train-policy", "-c", tiny(), "--models", models.string(), "-o", models.string()}).code ==
            cli::kExitOk);
    CHECK(fs::exists(models / "policy"));
    CHECK(fs::exists(models / "ppo_log.csv"));
    const fs::path eval = dir / "eval";
    REQUIRE(run({"evaluate", "-c", tiny(), "--models", models.string(), "-o", eval.string()}).code == cli::kExitOk);
    CHECK(fs::exists(eval / "report.csv"));
    CHECK(fs::exists(eval / "trajectories.csv"));

    const fs::path raw = dir / "raw.csv";
    REQUIRE(run({"gen-data", "-c", tiny(), "-o", raw.string()}).code == cli::kExitOk);
    const auto before = read_file(raw);
    REQUIRE(run({"ingest", "-c", tiny(), "-i", raw.string(), "-o", (dir / "clean.csv").string()}).code ==
            cli::kExitOk);
    CHECK(read_file(raw) == before);  // inputs are never modified
    CHECK(count_lines(read_file(dir / "clean.csv")) == 15u * 7 * 48 + 2);
  }
}
