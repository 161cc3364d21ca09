#include "relearn/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "relearn/config.hpp"
#include "relearn/csv_io.hpp"
#include "relearn/error.hpp"
#include "relearn/preprocess.hpp"
#include "relearn/scaler.hpp"
#include "relearn/serialize.hpp"

namespace relearn::orch {

namespace {

using data::Column;
constexpr std::size_t kLookback = data::kLookback;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix(splitmix(splitmix(base) ^ a) ^ b);
}

std::string fmt(double v) { return std::isnan(v) ? "nan" : data::format_double(v); }

const dyn::TrainConfig& train_config(const CampaignConfig& cfg, dyn::ModelKind kind) {
  switch (kind) {
    case dyn::ModelKind::heating: return cfg.heating;
    case dyn::ModelKind::valve: return cfg.valve;
    case dyn::ModelKind::cooling: return cfg.cooling;
  }
  return cfg.heating;
}

constexpr std::array<dyn::ModelKind, 3> kKinds = {dyn::ModelKind::heating, dyn::ModelKind::valve,
                                                  dyn::ModelKind::cooling};

// Fresh model when there is no previous one, otherwise a frozen-feature
// continuation of it.
dyn::TrainResult fit_model(dyn::DynamicsModel& model, const dyn::ModelSet* previous, dyn::ModelKind kind,
                           const data::TimeSeriesFrame& scaled, std::span<const std::uint8_t> labels,
                           const data::Window& w, std::size_t window, const CampaignConfig& cfg) {
  const auto ds = data::make_sequences(scaled, labels, w.train_begin, w.train_end, kind);
  dyn::TrainConfig tc = train_config(cfg, kind);
  const auto k = static_cast<std::uint64_t>(kind);
  tc.seed = derive_seed(cfg.seed, window * 8 + k, tc.seed);
  if (previous == nullptr) {
    model = dyn::build_model(kind, derive_seed(cfg.seed, 0x100 + k, tc.seed));
    return dyn::train_model(model, ds, tc);
  }
  model = previous->get(kind);
  tc.max_epochs = cfg.retrain.max_epochs;
  tc.patience = cfg.retrain.patience;
  return dyn::warm_start_retrain(model, ds, tc);
}

double last_finite_reward(std::span<const rl::IterationLog> log) {
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (std::isfinite(it->mean_episode_reward)) return it->mean_episode_reward;
  }
  return kNaN;
}

// Daily means of the replayed rewards, strictly falling from day to day.
bool rewards_declining(std::span<const env::StepResult> steps, std::size_t rows_per_day) {
  if (rows_per_day == 0 || steps.size() < 2 * rows_per_day) return false;
  std::vector<double> daily;
  for (std::size_t i = 0; i + rows_per_day <= steps.size(); i += rows_per_day) {
    double s = 0.0;
    for (std::size_t j = i; j < i + rows_per_day; ++j) s += steps[j].reward;
    daily.push_back(s / static_cast<double>(rows_per_day));
  }
  for (std::size_t i = 1; i < daily.size(); ++i) {
    if (!(daily[i] < daily[i - 1])) return false;
  }
  return true;
}

Savings savings_or_nan(double rbc, double variant) {
  try {
    return compute_savings(rbc, variant);
  } catch (const UndefinedMetricError&) {
    return {kNaN, rbc - variant};
  }
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  std::size_t n = 0;
  for (double x : xs) {
    if (std::isfinite(x)) {
      m.mean += x;
      ++n;
    }
  }
  if (n == 0) return {kNaN, kNaN};
  m.mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) {
    if (std::isfinite(x)) ss += (x - m.mean) * (x - m.mean);
  }
  m.stddev = std::sqrt(ss / static_cast<double>(n));
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& stamp,
                const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << stamp << '\n';
  body(out);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void write_week_artifacts(const std::filesystem::path& dir, const std::string& stamp, const IterationReport& rep,
                          const CampaignState& state, const IterationArtifacts& art, const CampaignConfig& cfg) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.csv", stamp, [&](std::ostream& o) { write_report_csv(o, rep); });
  write_text(dir / "metrics.csv", stamp, [&](std::ostream& o) { write_metrics_csv(o, rep); });
  if (rep.failed) return;
  const auto ckpt = dir / "checkpoints";
  std::filesystem::create_directories(ckpt);
  const std::string window_id = "week_" + std::to_string(rep.week);
  for (auto kind : kKinds) {
    nn::save_checkpoint(ckpt / (std::string(dyn::to_string(kind)) + ".json"),
                        dyn::to_checkpoint(state.adaptive_models->get(kind), state.adaptive_models->scaler, window_id));
  }
  state.adaptive_models->scaler.save(ckpt / "scaler.json");
  rl::save_actor_critic(ckpt / "policy", *state.adaptive_policy, cfg.ppo);
  write_text(dir / "predictions.csv", stamp, [&](std::ostream& o) { write_predictions_csv(o, art.predictions); });
  write_text(dir / "ppo_log.csv", stamp, [&](std::ostream& o) { rl::write_train_log(o, art.ppo_log); });
  if (auto it = art.trajectories.find(Variant::adaptive); it != art.trajectories.end()) {
    write_text(dir / "trajectories.csv", stamp, [&](std::ostream& o) { env::write_trajectory_csv(o, it->second); });
  }
  if (auto it = art.trajectories.find(Variant::fixed); it != art.trajectories.end()) {
    write_text(dir / "trajectories_static.csv", stamp,
               [&](std::ostream& o) { env::write_trajectory_csv(o, it->second); });
  }
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::adaptive: return "adaptive";
    case Variant::fixed: return "static";
    case Variant::rbc: return "rbc";
  }
  return "?";
}

Variant variant_from_string(std::string_view name) {
  if (name == "adaptive") return Variant::adaptive;
  if (name == "static") return Variant::fixed;
  if (name == "rbc") return Variant::rbc;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected adaptive, static or rbc)");
}

void validate(const CampaignConfig& cfg) {
  if (cfg.n_weeks == 0) throw ConfigError("n_weeks must be at least 1");
  if (cfg.threads == 0) throw ConfigError("threads must be at least 1");
  if (cfg.variants.empty()) throw ConfigError("at least one variant is required");
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.variants.size(); ++j) {
      if (cfg.variants[i] == cfg.variants[j]) throw ConfigError("variant listed twice");
    }
  }
  if (!(cfg.source.outlier_k > 0.0)) throw ConfigError("outlier_k must be positive");
  if (cfg.source.kind == DataSource::Kind::csv && cfg.source.csv_path.empty()) {
    throw ConfigError("csv data source needs a path");
  }
  for (auto kind : kKinds) dyn::validate(train_config(cfg, kind));
  if (cfg.retrain.max_epochs == 0) throw ConfigError("retrain max_epochs must be at least 1");
  rl::validate(cfg.ppo);
  env::validate(cfg.env);
}

CampaignData prepare_data(const CampaignConfig& cfg) {
  validate(cfg);
  data::TimeSeriesFrame raw;
  if (cfg.source.kind == DataSource::Kind::synthetic) {
    raw = data::generate_synthetic(cfg.source.synthetic);
  } else {
    raw = data::ingest_csv(cfg.source.csv_path);
    raw.validate();
    // Generated data is noise-controlled, and global outlier statistics would
    // flag a genuine regime shift, so only recorded data is filtered.
    if (std::isfinite(cfg.source.outlier_k)) raw = data::remove_outliers(raw, cfg.source.outlier_k);
  }
  CampaignData out;
  out.frame = data::aggregate_30min(raw).frame;
  out.labels = data::derive_valve_labels(out.frame);
  out.windows = data::make_windows(out.frame, cfg.window);
  if (cfg.first_window + cfg.n_weeks > out.windows.size()) {
    throw ConfigError("data covers " + std::to_string(out.windows.size()) + " windows but the campaign needs " +
                      std::to_string(cfg.first_window + cfg.n_weeks) + " (first_window + n_weeks)");
  }
  if (out.windows[cfg.first_window].eval_begin < kLookback) throw ConfigError("window leaves no lookback context");
  return out;
}

Savings compute_savings(double rbc_total, double variant_total) {
  if (!(rbc_total > 0.0)) throw UndefinedMetricError("savings are undefined for a non-positive baseline");
  return {100.0 * (rbc_total - variant_total) / rbc_total, rbc_total - variant_total};
}

const VariantWeek* IterationReport::find(Variant v) const noexcept {
  for (const auto& w : variants) {
    if (w.variant == v) return &w;
  }
  return nullptr;
}

std::vector<double> replay_sat(const CampaignData& data, std::size_t eval_begin,
                               std::span<const env::StepResult> steps) {
  if (eval_begin < kLookback || eval_begin > data.frame.size()) throw InputError("replay start out of bounds");
  std::vector<double> sat;
  sat.reserve(steps.size() + kLookback);
  for (std::size_t r = eval_begin - kLookback; r + 1 < eval_begin; ++r) sat.push_back(data.frame.at(r, Column::sat));
  for (const auto& s : steps) sat.push_back(s.next_state.sat);
  sat.push_back(steps.empty() ? data.frame.at(eval_begin - 1, Column::sat) : steps.back().next_state.sat);
  return sat;
}

EnergyTotals recorded_totals(const CampaignData& data, std::size_t begin, std::size_t end) {
  if (begin > end || end > data.frame.size()) throw InputError("row range out of bounds");
  EnergyTotals t;
  for (std::size_t r = begin; r < end; ++r) {
    t.heating += data.frame.at(r, Column::hwe);
    t.cooling += data.frame.at(r, Column::cwe);
  }
  return t;
}

VariantWeek make_variant_week(Variant v, const EnergyTotals& energy, const EnergyTotals& rbc) {
  VariantWeek w;
  w.variant = v;
  w.heating = energy.heating;
  w.cooling = energy.cooling;
  w.total = energy.heating + energy.cooling;
  w.heating_savings = savings_or_nan(rbc.heating, energy.heating);
  w.cooling_savings = savings_or_nan(rbc.cooling, energy.cooling);
  w.total_savings = savings_or_nan(rbc.heating + rbc.cooling, w.total);
  return w;
}

DynamicsFit fit_dynamics(const CampaignData& data, std::size_t window, const CampaignConfig& cfg,
                         const dyn::ModelSet* previous) {
  if (window >= data.windows.size()) throw ConfigError("window " + std::to_string(window) + " does not exist");
  const data::Window& w = data.windows[window];
  const auto scaler = data::fit_scaler(data.frame, w.train_begin, w.train_end);
  const auto scaled = data::apply_scaler(data.frame, scaler);
  auto models = std::make_shared<dyn::ModelSet>();
  models->scaler = scaler;
  DynamicsFit out;
  auto fit = [&](dyn::ModelKind kind) {
    return fit_model(models->get(kind), previous, kind, scaled, data.labels, w, window, cfg);
  };
  if (cfg.threads > 1) {
    auto h = std::async(std::launch::async, fit, dyn::ModelKind::heating);
    auto v = std::async(std::launch::async, fit, dyn::ModelKind::valve);
    out.training[dyn::ModelKind::cooling] = fit(dyn::ModelKind::cooling);
    out.training[dyn::ModelKind::heating] = h.get();
    out.training[dyn::ModelKind::valve] = v.get();
  } else {
    for (auto kind : kKinds) out.training[kind] = fit(kind);
  }
  out.models = std::move(models);
  return out;
}

rl::TrainResult fit_policy(const std::shared_ptr<const dyn::ModelSet>& models, const CampaignData& data,
                           std::size_t window, const CampaignConfig& cfg, std::optional<rl::ActorCritic> initial) {
  if (window >= data.windows.size()) throw ConfigError("window " + std::to_string(window) + " does not exist");
  const data::Window& w = data.windows[window];
  auto env_data = env::make_env_data(data.frame, data.labels, w.train_begin, w.train_end, models->scaler);
  const env::EnvConfig env_cfg = cfg.env;
  rl::EnvFactory factory = [env_data, models, env_cfg](std::size_t) -> std::unique_ptr<Environment> {
    return std::make_unique<env::BuildingEnv>(
        env_data, std::make_unique<env::LearnedTransitionModels>(models, env_cfg.valve_threshold), env_cfg);
  };
  rl::PPOConfig pc = cfg.ppo;
  pc.seed = derive_seed(cfg.seed, 0x200 + window, cfg.ppo.seed);
  pc.threads = cfg.threads;
  if (initial) {
    pc.total_steps = cfg.ppo_retrain_steps;
    if (cfg.ppo_reset_exploration) {
      std::fill(initial->policy.log_std.begin(), initial->policy.log_std.end(), pc.init_log_std);
    }
  }
  return rl::train(factory, pc, std::move(initial));
}

std::vector<env::StepResult> replay_controller(const std::shared_ptr<const dyn::ModelSet>& models,
                                               const rl::ActorCritic& ac, const CampaignData& data,
                                               std::size_t eval_begin, std::size_t eval_end,
                                               const env::EnvConfig& env_cfg) {
  if (eval_begin < kLookback || eval_end <= eval_begin || eval_end > data.frame.size()) {
    throw InputError("replay range out of bounds");
  }
  auto env_data = env::make_env_data(data.frame, data.labels, eval_begin - kLookback, eval_end, models->scaler);
  env::EnvConfig cfg = env_cfg;
  cfg.episode_steps = 0;
  env::BuildingEnv building(env_data, std::make_unique<env::LearnedTransitionModels>(models, cfg.valve_threshold),
                            cfg);
  building.reset_at(0);
  std::vector<env::StepResult> steps;
  steps.reserve(eval_end - eval_begin);
  std::mt19937_64 rng(0);
  while (!building.done()) {
    const auto obs = building.observation();
    const auto a = rl::sample_action(ac.policy, obs, rng, true);
    steps.push_back(building.advance(a.action));
  }
  return steps;
}

EnergyTotals score_trajectory(const dyn::ModelSet& models, const CampaignData& data, std::size_t eval_begin,
                              std::size_t eval_end, std::span<const double> sat, double valve_threshold) {
  if (eval_begin < kLookback || eval_end <= eval_begin || eval_end > data.frame.size()) {
    throw InputError("scoring range out of bounds");
  }
  if (sat.size() != eval_end - eval_begin + kLookback) {
    throw ShapeError("sat trajectory must cover the evaluation rows plus lookback context");
  }
  const std::size_t from = eval_begin - kLookback;
  const auto scaled = data::apply_scaler(data.frame.slice(from, eval_end), models.scaler);
  constexpr std::size_t kSat = data::kModelFeatures.size() - 1;
  nn::Tape tape;
  Tensor2 recorded(kLookback, data::kModelFeatures.size());
  Tensor2 variant(kLookback, data::kModelFeatures.size());
  auto heat = [&](const Tensor2& seq) {
    const bool on = dyn::predict_valve(models.valve, seq, valve_threshold, tape).on;
    return on ? dyn::predict_energy(models.heating, seq, models.scaler, tape) : 0.0;
  };
  EnergyTotals totals;
  for (std::size_t t = kLookback; t < scaled.size(); ++t) {
    for (std::size_t s = 0; s < kLookback; ++s) {
      const std::size_t local = t - kLookback + s;
      data::model_features(scaled, local, recorded.row(s));
      data::model_features(scaled, local, variant.row(s));
      variant(s, kSat) = models.scaler.scale(Column::sat, sat[local]);
    }
    const std::size_t row = from + t;
    const double dh = heat(variant) - heat(recorded);
    const double dc = dyn::predict_energy(models.cooling, variant, models.scaler, tape) -
                      dyn::predict_energy(models.cooling, recorded, models.scaler, tape);
    totals.heating += std::max(0.0, data.frame.at(row, Column::hwe) + dh);
    totals.cooling += std::max(0.0, data.frame.at(row, Column::cwe) + dc);
  }
  return totals;
}

IterationReport run_iteration(CampaignState& state, const CampaignData& data, std::size_t index,
                              const CampaignConfig& cfg, IterationArtifacts* artifacts) {
  IterationReport rep;
  rep.week = index + 1;
  const std::size_t wi = cfg.first_window + index;
  if (wi >= data.windows.size()) {
    rep.failed = true;
    rep.error = "no window for iteration " + std::to_string(rep.week);
    return rep;
  }
  const data::Window& w = data.windows[wi];
  const std::int64_t week_rows = data.frame.rows_per(data::kWeek);
  rep.eval_week = week_rows > 0 ? w.eval_begin / static_cast<std::size_t>(week_rows) : 0;
  try {
    // (a) dynamics models, (b) policy
    const auto fitted = fit_dynamics(data, wi, cfg, state.adaptive_models.get());
    const std::shared_ptr<const dyn::ModelSet> adaptive = fitted.models;
    rl::TrainResult trained = fit_policy(adaptive, data, wi, cfg, state.adaptive_policy);
    rep.mean_episode_reward = last_finite_reward(trained.log);

    // (c) evaluation
    const auto eval = dyn::evaluate_models(*adaptive, data.frame, data.labels, w.eval_begin, w.eval_end,
                                           "week_" + std::to_string(rep.week));
    rep.cvrmse_h = eval.cvrmse_h;
    rep.cvrmse_c = eval.cvrmse_c;
    rep.roc_auc = eval.roc_auc;

    const bool first = !state.static_models;
    const auto static_models = first ? adaptive : state.static_models;
    const rl::ActorCritic& static_policy = first ? trained.model : *state.static_policy;
    if (first) {
      rep.static_cvrmse_h = rep.cvrmse_h;
      rep.static_cvrmse_c = rep.cvrmse_c;
      rep.static_roc_auc = rep.roc_auc;
    } else {
      const auto frozen = dyn::evaluate_models(*static_models, data.frame, data.labels, w.eval_begin, w.eval_end,
                                               "week_" + std::to_string(rep.week));
      rep.static_cvrmse_h = frozen.cvrmse_h;
      rep.static_cvrmse_c = frozen.cvrmse_c;
      rep.static_roc_auc = frozen.roc_auc;
    }

    const EnergyTotals rbc = recorded_totals(data, w.eval_begin, w.eval_end);
    std::map<Variant, std::vector<env::StepResult>> trajectories;
    for (Variant v : cfg.variants) {
      if (v == Variant::rbc) {
        rep.variants.push_back(make_variant_week(v, rbc, rbc));
        continue;
      }
      const bool is_static = v == Variant::fixed;
      auto steps = replay_controller(is_static ? static_models : adaptive, is_static ? static_policy : trained.model,
                                     data, w.eval_begin, w.eval_end, cfg.env);
      const auto sat = replay_sat(data, w.eval_begin, steps);
      const auto e = score_trajectory(*adaptive, data, w.eval_begin, w.eval_end, sat, cfg.env.valve_threshold);
      rep.variants.push_back(make_variant_week(v, e, rbc));
      if (v == Variant::adaptive) {
        rep.reward_declining = rewards_declining(steps, static_cast<std::size_t>(data.frame.rows_per(24 * 3600)));
      }
      trajectories.emplace(v, std::move(steps));
    }

    for (auto kind : kKinds) {
      const std::string k(dyn::to_string(kind));
      rep.checksums["adaptive_" + k] = nn::to_hex(nn::checksum(adaptive->get(kind).stack));
      rep.checksums["adaptive_" + k + "_features"] = nn::to_hex(nn::feature_checksum(adaptive->get(kind).stack));
      rep.checksums["static_" + k] = nn::to_hex(nn::checksum(static_models->get(kind).stack));
    }
    rep.checksums["adaptive_policy"] = nn::to_hex(rl::checksum(trained.model));
    rep.checksums["static_policy"] = nn::to_hex(rl::checksum(static_policy));

    if (artifacts != nullptr) {
      artifacts->ppo_log = trained.log;
      artifacts->predictions = eval.records;
      artifacts->trajectories = std::move(trajectories);
    }
    if (first) {
      state.static_models = adaptive;
      state.static_policy = trained.model;
    }
    state.adaptive_models = adaptive;
    state.adaptive_policy = std::move(trained.model);
    ++state.completed;
  } catch (const Error& e) {
    rep.failed = true;
    rep.error = e.what();
    rep.variants.clear();
    rep.checksums.clear();
    if (artifacts != nullptr) *artifacts = IterationArtifacts{};
  }
  return rep;
}

std::string format_percent(const MeanStd& m) {
  auto clean = [](double v) { return std::fabs(v) < 0.005 ? 0.0 : v; };
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%%(%.2f%%)", clean(m.mean), clean(m.stddev));
  return buf;
}

Summary compare_variants(std::span<const IterationReport> reports) {
  std::vector<Variant> order;
  for (const auto& r : reports) {
    if (r.failed) continue;
    for (const auto& v : r.variants) {
      if (std::find(order.begin(), order.end(), v.variant) == order.end()) order.push_back(v.variant);
    }
  }
  Summary s;
  for (const auto& r : reports) s.failed_weeks += r.failed ? 1 : 0;
  if (order.empty()) throw InputError("no successful week to compare");

  const std::size_t n = order.size();
  s.head_to_head.assign(n, std::vector<std::size_t>(n, 0));
  std::vector<std::vector<double>> hs(n), cs(n), ts(n);
  s.variants.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.variants[i].variant = order[i];

  for (const auto& r : reports) {
    if (r.failed) continue;
    std::vector<const VariantWeek*> row(n, nullptr);
    for (std::size_t i = 0; i < n; ++i) row[i] = r.find(order[i]);
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i] == nullptr) continue;
      auto& vs = s.variants[i];
      ++vs.weeks;
      vs.heating += row[i]->heating;
      vs.cooling += row[i]->cooling;
      vs.total += row[i]->total;
      hs[i].push_back(row[i]->heating_savings.percent);
      cs[i].push_back(row[i]->cooling_savings.percent);
      ts[i].push_back(row[i]->total_savings.percent);
      bool strict_min = true;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || row[j] == nullptr) continue;
        if (row[i]->total < row[j]->total) ++s.head_to_head[i][j];
        if (!(row[i]->total < row[j]->total)) strict_min = false;
      }
      if (strict_min) ++vs.wins;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    s.variants[i].heating_savings = mean_std(hs[i]);
    s.variants[i].cooling_savings = mean_std(cs[i]);
    s.variants[i].total_savings = mean_std(ts[i]);
  }
  return s;
}

bool CampaignResult::any_failed() const noexcept {
  return std::any_of(reports.begin(), reports.end(), [](const IterationReport& r) { return r.failed; });
}

std::string artifact_stamp(const CampaignConfig& cfg) {
  return "# config_hash=" + nn::to_hex(config::config_hash(cfg)) + " seed=" + std::to_string(cfg.seed);
}

CampaignResult run_campaign(const CampaignConfig& cfg, const std::optional<std::filesystem::path>& output_dir,
                            std::ostream* progress) {
  const CampaignData data = prepare_data(cfg);
  const std::string stamp = artifact_stamp(cfg);
  if (output_dir) std::filesystem::create_directories(*output_dir);

  CampaignResult result;
  CampaignState state;
  for (std::size_t i = 0; i < cfg.n_weeks; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationArtifacts art;
    IterationReport rep = run_iteration(state, data, i, cfg, output_dir ? &art : nullptr);
    if (output_dir) {
      write_week_artifacts(*output_dir / ("week_" + std::to_string(rep.week)), stamp, rep, state, art, cfg);
    }
    if (progress != nullptr) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *progress << "week " << rep.week << '/' << cfg.n_weeks << " (data week " << rep.eval_week << ")";
      if (rep.failed) {
        *progress << " FAILED: " << rep.error;
      } else {
        *progress << " cvrmse_h=" << fmt(rep.cvrmse_h) << " cvrmse_c=" << fmt(rep.cvrmse_c)
                  << " auc=" << fmt(rep.roc_auc);
        for (const auto& v : rep.variants) *progress << ' ' << to_string(v.variant) << '=' << fmt(v.total);
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), " [%.1fs]", secs);
      *progress << buf << std::endl;
    }
    result.reports.push_back(std::move(rep));
  }

  const bool any_ok = std::any_of(result.reports.begin(), result.reports.end(),
                                  [](const IterationReport& r) { return !r.failed; });
  if (any_ok) {
    result.summary = compare_variants(result.reports);
  } else {
    result.summary.failed_weeks = result.reports.size();
  }

  if (output_dir) {
    write_text(*output_dir / "summary.csv", stamp, [&](std::ostream& o) { write_summary_csv(o, result.summary); });
    nlohmann::json doc;
    doc["config"] = config::to_ini_string(cfg);
    doc["config_hash"] = nn::to_hex(config::config_hash(cfg));
    doc["seed"] = cfg.seed;
    doc["weeks"] = nlohmann::json::array();
    for (const auto& r : result.reports) {
      nlohmann::json w;
      w["week"] = r.week;
      w["eval_week"] = r.eval_week;
      w["failed"] = r.failed;
      if (r.failed) w["error"] = r.error;
      w["checksums"] = r.checksums;
      doc["weeks"].push_back(std::move(w));
    }
    nlohmann::json h2h = nlohmann::json::object();
    const auto& vs = result.summary.variants;
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = 0; j < vs.size(); ++j) {
        if (i != j) {
          h2h[std::string(to_string(vs[i].variant)) + "_vs_" + std::string(to_string(vs[j].variant))] =
              result.summary.head_to_head[i][j];
        }
      }
    }
    doc["head_to_head"] = std::move(h2h);
    doc["failed_weeks"] = result.summary.failed_weeks;
    std::ofstream out(*output_dir / "campaign.json", std::ios::binary);
    if (!out) throw InputError("cannot write campaign.json");
    out << doc.dump(2) << '\n';
  }
  return result;
}

void write_summary_csv(std::ostream& out, const Summary& summary) {
  out << kSummaryHeader << '\n';
  for (const auto& v : summary.variants) {
    out << to_string(v.variant) << ',' << v.weeks << ',' << fmt(v.heating) << ',' << fmt(v.cooling) << ','
        << fmt(v.total) << ',' << format_percent(v.heating_savings) << ',' << format_percent(v.cooling_savings)
        << ',' << format_percent(v.total_savings) << ',' << v.wins << '\n';
  }
}

void write_report_csv(std::ostream& out, const IterationReport& report) {
  out << kReportHeader << '\n';
  for (const auto& v : report.variants) {
    out << report.week << ',' << to_string(v.variant) << ',' << fmt(v.heating) << ',' << fmt(v.cooling) << ','
        << fmt(v.total) << ',' << fmt(v.heating_savings.percent) << ',' << fmt(v.heating_savings.kbtu) << ','
        << fmt(v.cooling_savings.percent) << ',' << fmt(v.cooling_savings.kbtu) << ','
        << fmt(v.total_savings.percent) << ',' << fmt(v.total_savings.kbtu) << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const IterationReport& report) {
  out << kMetricsHeader << '\n';
  if (report.failed) return;
  out << report.week << ',' << report.eval_week << ',' << fmt(report.cvrmse_h) << ',' << fmt(report.cvrmse_c) << ','
      << fmt(report.roc_auc) << ',' << fmt(report.static_cvrmse_h) << ',' << fmt(report.static_cvrmse_c) << ','
      << fmt(report.static_roc_auc) << ',' << fmt(report.mean_episode_reward) << ',' << (report.reward_declining ? 1 : 0)
      << '\n';
}

void write_predictions_csv(std::ostream& out, std::span<const dyn::PredictionRecord> records) {
  out << kPredictionsHeader << '\n';
  for (const auto& r : records) {
    out << data::format_iso8601(r.timestamp) << ',' << fmt(r.hwe_true) << ',' << fmt(r.hwe_pred) << ','
        << static_cast<int>(r.valve_true) << ',' << fmt(r.valve_prob) << ',' << fmt(r.cwe_true) << ','
        << fmt(r.cwe_pred) << '\n';
  }
}

}  // namespace relearn::orch
