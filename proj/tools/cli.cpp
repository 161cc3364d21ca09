#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relearn/config.hpp"
#include "relearn/csv_io.hpp"
#include "relearn/error.hpp"
#include "relearn/orchestrator.hpp"
#include "relearn/preprocess.hpp"
#include "relearn/serialize.hpp"
#include "relearn/synthetic.hpp"

namespace relearn::cli {

namespace fs = std::filesystem;

namespace {

// Exit code 2 is not an error from the library's point of view.
struct PartialFailure {};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool quiet = false;
  bool verbose = false;
  std::string out;
  std::string input;
  std::string models;
  std::string policy;
  std::string init_policy;
  std::string campaign;
  std::optional<std::size_t> window;
  std::optional<std::size_t> weeks;
  std::string variants;
};

std::string fmt(double v) { return std::isnan(v) ? "nan" : data::format_double(v); }

orch::CampaignConfig load_config(const Options& o, std::ostream& err) {
  if (o.config.empty()) throw UsageError("--config is required");
  orch::CampaignConfig cfg = config::load_campaign_config(o.config);
  if (o.seed) config::apply_seed(cfg, *o.seed);
  if (o.threads) {
    if (*o.threads == 0) throw ConfigError("threads must be at least 1");
    cfg.threads = *o.threads;
  }
  if (o.weeks) cfg.n_weeks = *o.weeks;
  if (!o.variants.empty()) {
    cfg.variants = config::parse_campaign_config("[campaign]\nvariants = " + o.variants + "\n").variants;
  }
  orch::validate(cfg);
  if (o.verbose) err << config::to_ini_string(cfg) << '\n';
  return cfg;
}

// File outputs fall back to RELEARN_OUTPUT_DIR/<name>.
fs::path output_file(const Options& o, const char* default_name) {
  if (!o.out.empty()) return o.out;
  if (const char* dir = std::getenv("RELEARN_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
    return fs::path(dir) / default_name;
  }
  throw UsageError("--out is required (or set RELEARN_OUTPUT_DIR)");
}

fs::path output_dir(const Options& o) {
  if (o.out.empty()) throw UsageError("--out is required (or set RELEARN_OUTPUT_DIR)");
  fs::create_directories(o.out);
  return o.out;
}

void write_stamped(const fs::path& path, const std::string& stamp, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << stamp << '\n';
  body(out);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::size_t pick_window(const Options& o, const orch::CampaignConfig& cfg, const orch::CampaignData& data) {
  const std::size_t w = o.window.value_or(cfg.first_window);
  if (w >= data.windows.size()) {
    throw ConfigError("window " + std::to_string(w) + " out of range; the data has " +
                      std::to_string(data.windows.size()) + " windows");
  }
  return w;
}

void save_models(const fs::path& dir, const dyn::ModelSet& models, const std::string& window_id) {
  fs::create_directories(dir);
  for (auto kind : {dyn::ModelKind::heating, dyn::ModelKind::valve, dyn::ModelKind::cooling}) {
    nn::save_checkpoint(dir / (std::string(dyn::to_string(kind)) + ".json"),
                        dyn::to_checkpoint(models.get(kind), models.scaler, window_id));
  }
  models.scaler.save(dir / "scaler.json");
}

// Accepts a checkpoint directory or a train-dynamics / campaign week output
// that holds one under checkpoints/.
std::shared_ptr<const dyn::ModelSet> load_models(fs::path dir) {
  if (!fs::exists(dir / "scaler.json") && fs::exists(dir / "checkpoints" / "scaler.json")) dir /= "checkpoints";
  auto models = std::make_shared<dyn::ModelSet>();
  for (auto kind : {dyn::ModelKind::heating, dyn::ModelKind::valve, dyn::ModelKind::cooling}) {
    auto m = dyn::model_from_checkpoint(nn::load_checkpoint(dir / (std::string(dyn::to_string(kind)) + ".json")));
    if (m.kind != kind) throw SchemaError("checkpoint in '" + dir.string() + "' has the wrong model kind");
    models->get(kind) = std::move(m);
  }
  const auto scaler_path = dir / "scaler.json";
  if (!fs::exists(scaler_path)) throw InputError("file not found: " + scaler_path.string());
  models->scaler = data::ScalerParams::load(scaler_path);
  return models;
}

// ---- subcommands ---------------------------------------------------------

int cmd_gen_data(const Options& o, std::ostream& out, std::ostream& err) {
  orch::CampaignConfig cfg = load_config(o, err);
  const auto frame = data::generate_synthetic(cfg.source.synthetic);
  const fs::path path = output_file(o, "synthetic.csv");
  write_stamped(path, orch::artifact_stamp(cfg), [&](std::ostream& s) { data::write_csv(s, frame); });
  out << "wrote " << frame.size() << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_ingest(const Options& o, std::ostream& out, std::ostream& err) {
  orch::CampaignConfig cfg = load_config(o, err);
  const fs::path input = o.input.empty() ? cfg.source.csv_path : fs::path(o.input);
  if (input.empty()) throw UsageError("--input is required when the config has no data path");
  auto raw = data::ingest_csv(input);
  raw.validate();
  data::OutlierReport outliers;
  if (std::isfinite(cfg.source.outlier_k)) raw = data::remove_outliers(raw, cfg.source.outlier_k, data::kAllColumns, &outliers);
  const auto agg = data::aggregate_30min(raw);
  const fs::path path = output_file(o, "ingested.csv");
  write_stamped(path, orch::artifact_stamp(cfg), [&](std::ostream& s) { data::write_csv(s, agg.frame); });
  std::size_t replaced = 0;
  for (auto n : outliers.replaced) replaced += n;
  out << "read " << raw.size() << " rows, replaced " << replaced << " outliers, dropped "
      << agg.dropped_leading + agg.dropped_trailing << " unaligned samples; wrote " << agg.frame.size()
      << " half-hour rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_train_dynamics(const Options& o, std::ostream& out, std::ostream& err) {
  orch::CampaignConfig cfg = load_config(o, err);
  const fs::path dir = output_dir(o);
  const auto data = orch::prepare_data(cfg);
  const std::size_t w = pick_window(o, cfg, data);
  const std::string stamp = orch::artifact_stamp(cfg);
  const auto fit = orch::fit_dynamics(data, w, cfg);
  save_models(dir / "checkpoints", *fit.models, "window_" + std::to_string(w));
  write_stamped(dir / "training_log.csv", stamp, [&](std::ostream& s) {
    s << "model,epoch,train_loss,val_loss\n";
    for (const auto& [kind, res] : fit.training) {
      for (std::size_t e = 0; e < res.epochs_run(); ++e) {
        s << dyn::to_string(kind) << ',' << e + 1 << ',' << fmt(res.train_loss[e]) << ',' << fmt(res.val_loss[e])
          << '\n';
      }
    }
  });
  const auto& win = data.windows[w];
  const auto eval = dyn::evaluate_models(*fit.models, data.frame, data.labels, win.eval_begin, win.eval_end,
                                         "window_" + std::to_string(w));
  orch::IterationReport rep;
  rep.week = w + 1;
  rep.eval_week = win.eval_begin / data.frame.rows_per(data::kWeek);
  rep.cvrmse_h = rep.static_cvrmse_h = eval.cvrmse_h;
  rep.cvrmse_c = rep.static_cvrmse_c = eval.cvrmse_c;
  rep.roc_auc = rep.static_roc_auc = eval.roc_auc;
  rep.mean_episode_reward = std::numeric_limits<double>::quiet_NaN();
  write_stamped(dir / "metrics.csv", stamp, [&](std::ostream& s) { orch::write_metrics_csv(s, rep); });
  write_stamped(dir / "predictions.csv", stamp, [&](std::ostream& s) { orch::write_predictions_csv(s, eval.records); });
  out << "window " << w << ": cvrmse_h=" << fmt(eval.cvrmse_h) << " cvrmse_c=" << fmt(eval.cvrmse_c)
      << " roc_auc=" << fmt(eval.roc_auc) << '\n';
  return kExitOk;
}

int cmd_train_policy(const Options& o, std::ostream& out, std::ostream& err) {
  orch::CampaignConfig cfg = load_config(o, err);
  if (o.models.empty()) throw UsageError("--models is required");
  const auto models = load_models(o.models);
  const fs::path dir = output_dir(o);
  const auto data = orch::prepare_data(cfg);
  const std::size_t w = pick_window(o, cfg, data);
  std::optional<rl::ActorCritic> initial;
  if (!o.init_policy.empty()) initial = rl::load_actor_critic(o.init_policy);
  const auto result = orch::fit_policy(models, data, w, cfg, std::move(initial));
  rl::save_actor_critic(dir / "policy", result.model, cfg.ppo);
  write_stamped(dir / "ppo_log.csv", orch::artifact_stamp(cfg),
                [&](std::ostream& s) { rl::write_train_log(s, result.log); });
  double last = std::numeric_limits<double>::quiet_NaN();
  for (const auto& it : result.log) {
    if (std::isfinite(it.mean_episode_reward)) last = it.mean_episode_reward;
  }
  out << "trained " << result.steps << " steps over " << result.log.size()
      << " iterations; last mean episode reward " << fmt(last) << '\n';
  return kExitOk;
}

int cmd_relearn(const Options& o, std::ostream& out, std::ostream& err) {
  orch::CampaignConfig cfg = load_config(o, err);
  const fs::path dir = output_dir(o);
  const auto result = orch::run_campaign(cfg, dir, o.quiet ? nullptr : &err);
  orch::write_summary_csv(out, result.summary);
  if (result.any_failed()) {
    err << result.summary.failed_weeks << " of " << result.reports.size() << " weeks failed\n";
    throw PartialFailure{};
  }
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream& err) {
  orch::CampaignConfig cfg = load_config(o, err);
  if (o.models.empty()) throw UsageError("--models is required");
  const auto models = load_models(o.models);
  const fs::path policy_dir = o.policy.empty() ? fs::path(o.models) / "policy" : fs::path(o.policy);
  const auto ac = rl::load_actor_critic(policy_dir);
  const fs::path dir = output_dir(o);
  const auto data = orch::prepare_data(cfg);
  const std::size_t w = pick_window(o, cfg, data);
  const auto& win = data.windows[w];
  const std::string stamp = orch::artifact_stamp(cfg);

  const auto eval = dyn::evaluate_models(*models, data.frame, data.labels, win.eval_begin, win.eval_end,
                                         "window_" + std::to_string(w));
  const auto steps = orch::replay_controller(models, ac, data, win.eval_begin, win.eval_end, cfg.env);
  const auto sat = orch::replay_sat(data, win.eval_begin, steps);
  const auto energy = orch::score_trajectory(*models, data, win.eval_begin, win.eval_end, sat, cfg.env.valve_threshold);
  const auto rbc = orch::recorded_totals(data, win.eval_begin, win.eval_end);

  orch::IterationReport rep;
  rep.week = w + 1;
  rep.eval_week = win.eval_begin / data.frame.rows_per(data::kWeek);
  rep.cvrmse_h = rep.static_cvrmse_h = eval.cvrmse_h;
  rep.cvrmse_c = rep.static_cvrmse_c = eval.cvrmse_c;
  rep.roc_auc = rep.static_roc_auc = eval.roc_auc;
  rep.mean_episode_reward = 0.0;
  for (const auto& s : steps) rep.mean_episode_reward += s.reward;
  rep.variants.push_back(orch::make_variant_week(orch::Variant::adaptive, energy, rbc));
  rep.variants.push_back(orch::make_variant_week(orch::Variant::rbc, rbc, rbc));

  write_stamped(dir / "metrics.csv", stamp, [&](std::ostream& s) { orch::write_metrics_csv(s, rep); });
  write_stamped(dir / "report.csv", stamp, [&](std::ostream& s) { orch::write_report_csv(s, rep); });
  write_stamped(dir / "predictions.csv", stamp, [&](std::ostream& s) { orch::write_predictions_csv(s, eval.records); });
  write_stamped(dir / "trajectories.csv", stamp, [&](std::ostream& s) { env::write_trajectory_csv(s, steps); });
  const auto& v = rep.variants.front();
  out << "window " << w << ": policy " << fmt(v.total) << " kBTU vs rbc " << fmt(rbc.heating + rbc.cooling)
      << " kBTU (savings " << fmt(v.total_savings.percent) << "%)\n";
  return kExitOk;
}

// ---- report --------------------------------------------------------------

struct Table {
  std::string stamp;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name, const fs::path& path) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("'" + path.string() + "' has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("file not found: " + path.string());
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (t.stamp.empty()) t.stamp = line;
      continue;
    }
    if (t.header.empty()) {
      t.header = split_line(line);
    } else {
      t.rows.push_back(split_line(line));
      if (t.rows.back().size() != t.header.size()) {
        throw SchemaError("'" + path.string() + "' row " + std::to_string(t.rows.size()) + " has the wrong width");
      }
    }
  }
  if (t.header.empty()) throw SchemaError("'" + path.string() + "' has no header");
  return t;
}

struct WeekDir {
  std::size_t week;
  fs::path path;
};

std::vector<WeekDir> week_dirs(const fs::path& campaign) {
  if (!fs::is_directory(campaign)) throw InputError("campaign directory not found: " + campaign.string());
  std::vector<WeekDir> out;
  for (const auto& entry : fs::directory_iterator(campaign)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("week_", 0) != 0) continue;
    const std::string num = name.substr(5);
    if (num.empty() || !std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    out.push_back({std::stoul(num), entry.path()});
  }
  std::sort(out.begin(), out.end(), [](const WeekDir& a, const WeekDir& b) { return a.week < b.week; });
  return out;
}

// Concatenates one per-week CSV across weeks, keeping the listed columns and
// prefixing a week column. Weeks without the file (failed ones) are skipped.
void gather(const std::vector<WeekDir>& weeks, const std::string& file, const std::vector<std::string>& columns,
            const std::vector<std::string>& prefix, std::ostream& s,
            const std::function<std::vector<std::string>(const WeekDir&, const fs::path&)>& extra = {}) {
  s << "week";
  for (const auto& p : prefix) s << ',' << p;
  for (const auto& c : columns) s << ',' << c;
  s << '\n';
  for (const auto& w : weeks) {
    const fs::path path = w.path / file;
    if (!fs::exists(path)) continue;
    const Table t = read_table(path);
    std::vector<std::size_t> idx;
    for (const auto& c : columns) idx.push_back(t.col(c, path));
    const auto pre = extra ? extra(w, path) : std::vector<std::string>{};
    for (const auto& row : t.rows) {
      s << w.week;
      for (const auto& p : pre) s << ',' << p;
      for (auto i : idx) s << ',' << row[i];
      s << '\n';
    }
  }
}

int cmd_report(const Options& o, std::ostream& out, std::ostream&) {
  if (o.campaign.empty()) throw UsageError("--campaign is required");
  const fs::path campaign = o.campaign;
  const auto weeks = week_dirs(campaign);
  if (weeks.empty()) throw InputError("no week_* directories in '" + campaign.string() + "'");
  const fs::path dir = output_dir(o);

  std::string stamp;
  for (const auto& w : weeks) {
    if (fs::exists(w.path / "report.csv")) {
      stamp = read_table(w.path / "report.csv").stamp;
      break;
    }
  }
  if (stamp.empty()) throw SchemaError("campaign files carry no config stamp");

  const std::vector<std::pair<std::string, std::function<void(std::ostream&)>>> families = {
      {"energy_predictions.csv",
       [&](std::ostream& s) {
         gather(weeks, "predictions.csv",
                {"timestamp", "hwe_true", "hwe_pred", "valve_true", "valve_prob", "cwe_true", "cwe_pred"}, {}, s);
       }},
      {"cvrmse_by_week.csv",
       [&](std::ostream& s) {
         gather(weeks, "metrics.csv", {"eval_week", "cvrmse_h", "cvrmse_c", "static_cvrmse_h", "static_cvrmse_c"},
                {}, s);
       }},
      {"roc_auc_by_week.csv",
       [&](std::ostream& s) { gather(weeks, "metrics.csv", {"eval_week", "roc_auc", "static_roc_auc"}, {}, s); }},
      {"reward_curve.csv",
       [&](std::ostream& s) {
         gather(weeks, "ppo_log.csv", {"iteration", "mean_episode_reward", "clip_fraction", "policy_loss", "value_loss"},
                {}, s);
       }},
      {"variant_energy.csv",
       [&](std::ostream& s) {
         gather(weeks, "report.csv",
                {"variant", "heating_kbtu", "cooling_kbtu", "total_kbtu", "heating_savings_pct",
                 "cooling_savings_pct", "total_savings_pct"},
                {}, s);
       }},
      {"setpoint_trajectories.csv",
       [&](std::ostream& s) {
         const std::vector<std::string> cols = {"t", "setpoint", "sat", "action", "reward", "mode"};
         std::ostringstream adaptive, fixed;
         gather(weeks, "trajectories.csv", cols, {"variant"}, adaptive,
                [](const WeekDir&, const fs::path&) { return std::vector<std::string>{"adaptive"}; });
         gather(weeks, "trajectories_static.csv", cols, {"variant"}, fixed,
                [](const WeekDir&, const fs::path&) { return std::vector<std::string>{"static"}; });
         s << adaptive.str();
         const std::string f = fixed.str();
         s << f.substr(f.find('\n') + 1);  // drop the repeated header
       }},
  };
  for (const auto& [name, body] : families) write_stamped(dir / name, stamp, body);
  out << "wrote " << families.size() << " report files for " << weeks.size() << " weeks to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual relearning of building HVAC controllers"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_flag("-v,--verbose", o.verbose, "Echo the effective configuration");

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "Campaign config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the campaign and data seeds");
  };
  auto add_out_dir = [&](CLI::App* sub) {
    sub->add_option("-o,--out", o.out, "Output directory")->envname("RELEARN_OUTPUT_DIR");
  };
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", o.threads, "Worker threads")->envname("RELEARN_THREADS");
  };
  auto add_window = [&](CLI::App* sub) {
    sub->add_option("--window", o.window, "0-based window index (default: first_window)");
  };

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic 5-minute dataset");
  add_config(gen);
  gen->add_option("-o,--out", o.out, "Output CSV (default: $RELEARN_OUTPUT_DIR/synthetic.csv)");

  auto* ingest = app.add_subcommand("ingest", "Clean and aggregate a 5-minute CSV to half-hours");
  add_config(ingest);
  ingest->add_option("-i,--input", o.input, "5-minute CSV (default: [data] path)");
  ingest->add_option("-o,--out", o.out, "Output CSV (default: $RELEARN_OUTPUT_DIR/ingested.csv)");

  auto* td = app.add_subcommand("train-dynamics", "Train the heating, valve and cooling models on one window");
  add_config(td);
  add_out_dir(td);
  add_threads(td);
  add_window(td);

  auto* tp = app.add_subcommand("train-policy", "Train a PPO policy against trained models");
  add_config(tp);
  add_out_dir(tp);
  add_threads(tp);
  add_window(tp);
  tp->add_option("--models", o.models, "Checkpoint directory from train-dynamics")->required();
  tp->add_option("--init", o.init_policy, "Policy directory to warm-start from");

  auto* rel = app.add_subcommand("relearn", "Run a weekly relearning campaign");
  add_config(rel);
  add_out_dir(rel);
  add_threads(rel);
  rel->add_option("--weeks", o.weeks, "Override [campaign] n_weeks");
  rel->add_option("--variants", o.variants, "Comma-separated subset of adaptive,static,rbc");
  rel->add_flag("-q,--quiet", o.quiet, "No per-week progress");

  auto* ev = app.add_subcommand("evaluate", "Score saved models and policy on a window's evaluation week");
  add_config(ev);
  add_out_dir(ev);
  add_window(ev);
  ev->add_option("--models", o.models, "Checkpoint directory")->required();
  ev->add_option("--policy", o.policy, "Policy directory (default: <models>/policy)");

  auto* rep = app.add_subcommand("report", "Collect plot-ready CSVs from a campaign directory");
  rep->add_option("--campaign", o.campaign, "Campaign output directory")->required();
  add_out_dir(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::map<CLI::App*, std::function<int(const Options&, std::ostream&, std::ostream&)>> commands = {
      {gen, cmd_gen_data},   {ingest, cmd_ingest}, {td, cmd_train_dynamics}, {tp, cmd_train_policy},
      {rel, cmd_relearn},    {ev, cmd_evaluate},   {rep, cmd_report},
  };
  try {
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn(o, out, err);
    }
    err << "no subcommand given\n";
    return kExitUsage;
  } catch (const PartialFailure&) {
    return kExitPartial;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace relearn::cli
