#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "relearn/building_env.hpp"
#include "relearn/dynamics.hpp"
#include "relearn/ppo.hpp"
#include "relearn/synthetic.hpp"
#include "relearn/windowing.hpp"

namespace relearn::orch {

enum class Variant { adaptive, fixed, rbc };

/// "adaptive", "static", "rbc".
std::string_view to_string(Variant v);
/// Throws ConfigError for unknown names.
Variant variant_from_string(std::string_view name);

struct DataSource {
  enum class Kind { synthetic, csv };
  Kind kind = Kind::synthetic;
  std::filesystem::path csv_path;
  data::SyntheticGenConfig synthetic;
  /// Outlier threshold in standard deviations; infinity disables removal.
  double outlier_k = 2.0;
};

struct RetrainConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 15;
};

struct CampaignConfig {
  DataSource source;
  data::WindowSpec window;
  dyn::TrainConfig heating;
  dyn::TrainConfig valve;
  dyn::TrainConfig cooling;
  RetrainConfig retrain;
  rl::PPOConfig ppo;
  std::size_t ppo_retrain_steps = 100'000;
  /// Warm-started policies get their log-std reset to ppo.init_log_std, since
  /// a converged policy explores too little to react to new dynamics.
  bool ppo_reset_exploration = true;
  env::EnvConfig env;
  std::size_t n_weeks = 1;
  std::size_t first_window = 0;
  std::vector<Variant> variants{Variant::adaptive, Variant::fixed, Variant::rbc};
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

/// Throws ConfigError on inconsistent settings.
void validate(const CampaignConfig& cfg);

/// 30-minute frame, valve labels and sliding windows.
struct CampaignData {
  data::TimeSeriesFrame frame;
  std::vector<std::uint8_t> labels;
  std::vector<data::Window> windows;
};

/// Loads or generates the 5-minute data, removes outliers, aggregates and
/// windows it. Throws ConfigError when the data cannot cover n_weeks windows.
CampaignData prepare_data(const CampaignConfig& cfg);

struct Savings {
  double percent = 0.0;
  double kbtu = 0.0;
};

/// (100 * (rbc - variant) / rbc, rbc - variant). Throws UndefinedMetricError
/// when rbc_total <= 0.
Savings compute_savings(double rbc_total, double variant_total);

struct VariantWeek {
  Variant variant = Variant::rbc;
  double heating = 0.0;  // kBTU over the evaluation week
  double cooling = 0.0;
  double total = 0.0;
  Savings heating_savings;
  Savings cooling_savings;
  Savings total_savings;
};

struct IterationReport {
  std::size_t week = 0;       // 1-based iteration index
  std::size_t eval_week = 0;  // 0-based week of the data the evaluation covers
  bool failed = false;
  std::string error;
  double cvrmse_h = 0.0;
  double cvrmse_c = 0.0;
  double roc_auc = 0.0;
  // Same metrics for the frozen first-iteration models on this week.
  double static_cvrmse_h = 0.0;
  double static_cvrmse_c = 0.0;
  double static_roc_auc = 0.0;
  double mean_episode_reward = 0.0;
  /// Diagnostic only: the adaptive controller's daily mean reward over the
  /// evaluation week fell every day. Relearning itself runs on a fixed schedule.
  bool reward_declining = false;
  std::vector<VariantWeek> variants;
  std::map<std::string, std::string> checksums;

  const VariantWeek* find(Variant v) const noexcept;
};

/// Everything carried from one iteration to the next.
struct CampaignState {
  std::shared_ptr<const dyn::ModelSet> adaptive_models;
  std::optional<rl::ActorCritic> adaptive_policy;
  std::shared_ptr<const dyn::ModelSet> static_models;
  std::optional<rl::ActorCritic> static_policy;
  std::size_t completed = 0;
};

/// Artifacts of one iteration beyond the report, for writing to disk.
struct IterationArtifacts {
  std::vector<rl::IterationLog> ppo_log;
  std::vector<dyn::PredictionRecord> predictions;
  std::map<Variant, std::vector<env::StepResult>> trajectories;
};

/// Step (a) for data.windows[window]: fits the scaler on the training rows and
/// trains the three models, from scratch when `previous` is null, otherwise
/// warm-started from it with the feature layers frozen. Seeds derive from
/// cfg.seed and the window index. Models train concurrently when cfg.threads > 1.
struct DynamicsFit {
  std::shared_ptr<const dyn::ModelSet> models;
  std::map<dyn::ModelKind, dyn::TrainResult> training;
};
DynamicsFit fit_dynamics(const CampaignData& data, std::size_t window, const CampaignConfig& cfg,
                         const dyn::ModelSet* previous = nullptr);

/// Step (b): PPO on environments over the training rows of data.windows[window].
/// With `initial` the run warm-starts and uses cfg.ppo_retrain_steps.
rl::TrainResult fit_policy(const std::shared_ptr<const dyn::ModelSet>& models, const CampaignData& data,
                           std::size_t window, const CampaignConfig& cfg,
                           std::optional<rl::ActorCritic> initial = std::nullopt);

/// Controller replay over the evaluation rows: a deterministic pass of the
/// policy through an environment built from its own models over rows
/// [eval_begin - lookback, eval_end).
std::vector<env::StepResult> replay_controller(const std::shared_ptr<const dyn::ModelSet>& models,
                                               const rl::ActorCritic& ac, const CampaignData& data,
                                               std::size_t eval_begin, std::size_t eval_end,
                                               const env::EnvConfig& env_cfg);

/// Energy of a supply-air trajectory over rows [eval_begin, eval_end). `sat`
/// covers rows [eval_begin - lookback, eval_end). Each row's energy is the
/// recorded value shifted by the model-predicted difference between the
/// variant's and the recorded trajectory, floored at 0, so the recorded
/// trajectory reproduces the data exactly.
struct EnergyTotals {
  double heating = 0.0;
  double cooling = 0.0;
};
EnergyTotals score_trajectory(const dyn::ModelSet& models, const CampaignData& data, std::size_t eval_begin,
                              std::size_t eval_end, std::span<const double> sat, double valve_threshold);

/// Supply-air trajectory of a replay in the layout score_trajectory expects:
/// recorded sat for the first lookback - 1 context rows, then the set-point
/// reached after each step, the last one repeated for the final row.
std::vector<double> replay_sat(const CampaignData& data, std::size_t eval_begin,
                               std::span<const env::StepResult> steps);

/// Recorded hwe and cwe summed over rows [begin, end).
EnergyTotals recorded_totals(const CampaignData& data, std::size_t begin, std::size_t end);

/// Totals and savings against the RBC totals; savings that are undefined
/// (zero baseline) are NaN percent.
VariantWeek make_variant_week(Variant v, const EnergyTotals& energy, const EnergyTotals& rbc);

/// Runs steps (a)-(c) for one window and updates `state` on success. On a
/// library error the report is marked failed and the state is left untouched.
IterationReport run_iteration(CampaignState& state, const CampaignData& data, std::size_t index,
                              const CampaignConfig& cfg, IterationArtifacts* artifacts = nullptr);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// "12.61%(5.73%)".
std::string format_percent(const MeanStd& m);

struct VariantSummary {
  Variant variant = Variant::rbc;
  std::size_t weeks = 0;
  double heating = 0.0;  // summed kBTU
  double cooling = 0.0;
  double total = 0.0;
  MeanStd heating_savings;  // weekly percent
  MeanStd cooling_savings;
  MeanStd total_savings;
  std::size_t wins = 0;  // weeks with strictly the lowest total energy
};

struct Summary {
  std::vector<VariantSummary> variants;
  /// head_to_head[i][j]: weeks where variant i used strictly less total energy than j.
  std::vector<std::vector<std::size_t>> head_to_head;
  std::size_t failed_weeks = 0;
};

/// Aggregates successful weeks. Throws InputError if no successful report
/// carries any variant.
Summary compare_variants(std::span<const IterationReport> reports);

struct CampaignResult {
  std::vector<IterationReport> reports;
  Summary summary;
  bool any_failed() const noexcept;
};

/// Sequential weekly iterations; failed weeks are recorded and skipped. With
/// an output directory, writes week_k/{checkpoints/, trajectories.csv,
/// trajectories_static.csv, report.csv, metrics.csv, predictions.csv,
/// ppo_log.csv}, summary.csv and campaign.json. Every CSV starts with a
/// "# config_hash=... seed=..." line.
CampaignResult run_campaign(const CampaignConfig& cfg, const std::optional<std::filesystem::path>& output_dir,
                            std::ostream* progress = nullptr);

/// "# config_hash=<hex> seed=<n>".
std::string artifact_stamp(const CampaignConfig& cfg);

inline constexpr std::string_view kSummaryHeader =
    "variant,weeks,heating_kbtu,cooling_kbtu,total_kbtu,heating_savings,cooling_savings,total_savings,wins";
void write_summary_csv(std::ostream& out, const Summary& summary);

inline constexpr std::string_view kReportHeader =
    "week,variant,heating_kbtu,cooling_kbtu,total_kbtu,heating_savings_pct,heating_savings_kbtu,"
    "cooling_savings_pct,cooling_savings_kbtu,total_savings_pct,total_savings_kbtu";
void write_report_csv(std::ostream& out, const IterationReport& report);

inline constexpr std::string_view kMetricsHeader =
    "week,eval_week,cvrmse_h,cvrmse_c,roc_auc,static_cvrmse_h,static_cvrmse_c,static_roc_auc,mean_episode_reward,"
    "reward_declining";
void write_metrics_csv(std::ostream& out, const IterationReport& report);

inline constexpr std::string_view kPredictionsHeader =
    "timestamp,hwe_true,hwe_pred,valve_true,valve_prob,cwe_true,cwe_pred";
void write_predictions_csv(std::ostream& out, std::span<const dyn::PredictionRecord> records);

}  // namespace relearn::orch
