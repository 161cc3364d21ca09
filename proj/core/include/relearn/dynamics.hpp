#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relearn/nn.hpp"
#include "relearn/scaler.hpp"
#include "relearn/serialize.hpp"
#include "relearn/windowing.hpp"

namespace relearn::dyn {

using ModelKind = data::TargetKind;

std::string_view to_string(ModelKind kind);
/// Throws SchemaError for unknown names.
ModelKind model_kind_from_string(std::string_view name);

/// Dense feature layers (relu) followed by stacked LSTMs and a one-unit head.
struct Architecture {
  std::size_t dense_layers = 0;
  std::size_t dense_units = 0;
  std::size_t lstm_layers = 0;
  std::size_t lstm_units = 0;
  nn::Activation head = nn::Activation::identity;
};

Architecture architecture(ModelKind kind) noexcept;

struct DynamicsModel {
  ModelKind kind = ModelKind::heating;
  nn::LayerStack stack;
};

DynamicsModel build_model(ModelKind kind, std::uint64_t seed);

/// Throws SchemaError if the stack does not have the architecture of its kind.
void check_architecture(const DynamicsModel& model);

/// The three learned transition models plus the scaler they were trained with.
struct ModelSet {
  DynamicsModel heating;
  DynamicsModel valve;
  DynamicsModel cooling;
  data::ScalerParams scaler;

  const DynamicsModel& get(ModelKind kind) const noexcept;
  DynamicsModel& get(ModelKind kind) noexcept;
};

/// Checkpoint metadata: kind, window id and the scaler as embedded JSON.
nn::Checkpoint to_checkpoint(const DynamicsModel& model, const data::ScalerParams& scaler,
                             const std::string& window_id);
/// Throws SchemaError on a missing kind or an architecture mismatch.
DynamicsModel model_from_checkpoint(const nn::Checkpoint& ckpt);

struct TrainConfig {
  double base_lr = 0.001;
  std::size_t max_epochs = 100;
  std::size_t patience = 8;
  std::size_t batch_size = 32;
  double validation_fraction = 0.1;
  bool freeze_ffn = false;
  std::uint64_t seed = 1;
};

/// Throws ConfigError when patience < 1, batch_size < 1 or the validation
/// fraction is outside (0, 0.5].
void validate(const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  std::size_t best_epoch = 0;      // 1-based; 0 when no epoch ran
  bool stopped_early = false;
  std::size_t epochs_run() const noexcept { return val_loss.size(); }
};

/// Patience-based stopping on validation loss. Epoch numbers are 1-based.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);

  /// Records an epoch's loss; returns true when it is a new best.
  bool update(double val_loss);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
};

nn::Loss loss_for(ModelKind kind) noexcept;

/// Minibatch Adam with a linearly decaying learning rate. The last
/// validation_fraction of the dataset (chronological) is held out; training
/// stops after `patience` epochs without improvement and the model is left at
/// its best-validation parameters. With freeze_ffn the dense layers before the
/// first LSTM are frozen, otherwise every layer trains. Throws InputError on
/// an empty dataset.
TrainResult train_model(DynamicsModel& model, const data::SequenceDataset& dataset, const TrainConfig& cfg);

/// Continues training a previously trained model on a new window with its
/// feature layers frozen (cfg.freeze_ffn is forced on). Throws SchemaError on
/// an architecture mismatch.
TrainResult warm_start_retrain(DynamicsModel& model, const data::SequenceDataset& dataset, TrainConfig cfg);

/// Raw network output for a lookback x 6 sequence. Throws ShapeError otherwise.
double predict_raw(const DynamicsModel& model, const Tensor2& seq, nn::Tape& tape);
double predict_raw(const DynamicsModel& model, const Tensor2& seq);

/// Energy in kBTU per interval: the scaled output is clamped at 0 and then
/// inverted with the target column's range. Throws InputError for the valve model.
double predict_energy(const DynamicsModel& model, const Tensor2& seq, const data::ScalerParams& scaler,
                      nn::Tape& tape);
double predict_energy(const DynamicsModel& model, const Tensor2& seq, const data::ScalerParams& scaler);

struct ValvePrediction {
  bool on = false;
  double probability = 0.0;
};

/// on iff probability >= threshold.
ValvePrediction predict_valve(const DynamicsModel& model, const Tensor2& seq, double threshold, nn::Tape& tape);
ValvePrediction predict_valve(const DynamicsModel& model, const Tensor2& seq, double threshold = 0.5);

struct PredictionRecord {
  std::int64_t timestamp = 0;
  double hwe_true = 0.0;
  double hwe_pred = 0.0;  // valve-independent heating model output
  std::uint8_t valve_true = 0;
  double valve_prob = 0.0;
  double cwe_true = 0.0;
  double cwe_pred = 0.0;
};

struct ModelEvalReport {
  std::string week;
  double cvrmse_h = 0.0;  // over true valve-on rows only
  double cvrmse_c = 0.0;
  double roc_auc = 0.0;
  std::vector<PredictionRecord> records;
};

/// Scores the models on target rows [begin, end) of the raw (unscaled) 30-min
/// frame, using rows from begin - lookback as context. Metrics that are
/// undefined on the slice (no valve-on rows, single class) are reported as NaN.
ModelEvalReport evaluate_models(const ModelSet& models, const data::TimeSeriesFrame& raw,
                                std::span<const std::uint8_t> labels, std::size_t begin, std::size_t end,
                                const std::string& week);

}  // namespace relearn::dyn
