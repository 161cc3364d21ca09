#include "relearn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "relearn/error.hpp"
#include "relearn/metrics.hpp"
#include "relearn/optimizer.hpp"

namespace relearn::dyn {

namespace {

constexpr std::size_t kFeatureCount = data::kModelFeatures.size();

data::Column target_column(ModelKind kind) {
  switch (kind) {
    case ModelKind::heating: return data::Column::hwe;
    case ModelKind::cooling: return data::Column::cwe;
    case ModelKind::valve: break;
  }
  throw InputError("valve model does not predict energy");
}

void check_sequence(const Tensor2& seq) {
  if (seq.rows() != data::kLookback || seq.cols() != kFeatureCount) {
    throw ShapeError("model input must be " + std::to_string(data::kLookback) + "x" +
                     std::to_string(kFeatureCount) + ", got " + std::to_string(seq.rows()) + "x" +
                     std::to_string(seq.cols()));
  }
}

// Number of leading layers frozen by the feature-freeze rule.
std::size_t feature_prefix(const nn::LayerStack& stack) {
  std::size_t k = 0;
  while (k < stack.size() && !nn::is_recurrent(stack.layer(k))) ++k;
  return k == stack.size() ? 0 : k;
}

nn::LayerStack substack(const nn::LayerStack& stack, std::size_t from) {
  nn::LayerStack out;
  for (std::size_t i = from; i < stack.size(); ++i) out.add(stack.layer(i), stack.trainable(i));
  return out;
}

// Runs the frozen dense prefix once per sample so epochs only touch the head.
std::vector<Tensor2> precompute_features(const nn::LayerStack& stack, std::size_t prefix,
                                         const std::vector<Tensor2>& inputs) {
  std::vector<Tensor2> out;
  out.reserve(inputs.size());
  const std::size_t width = nn::output_size(stack.layer(prefix - 1));
  for (const auto& seq : inputs) {
    Tensor2 feat(seq.rows(), width);
    for (std::size_t s = 0; s < seq.rows(); ++s) {
      std::vector<double> v(seq.row(s).begin(), seq.row(s).end());
      for (std::size_t l = 0; l < prefix; ++l) v = nn::dense_forward(v, std::get<nn::DenseLayer>(stack.layer(l)));
      std::copy(v.begin(), v.end(), feat.row(s).begin());
    }
    out.push_back(std::move(feat));
  }
  return out;
}

double mean_loss(const nn::LayerStack& stack, std::span<const Tensor2> inputs, const Tensor2& targets,
                 std::span<const std::size_t> idx, nn::Loss loss, nn::Tape& tape) {
  double sum = 0.0;
  for (std::size_t i : idx) {
    nn::forward(stack, inputs[i], tape);
    sum += nn::loss_term(loss, tape.output()[0], targets(i, 0));
  }
  return sum / static_cast<double>(idx.size());
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::heating: return "heating";
    case ModelKind::valve: return "valve";
    case ModelKind::cooling: return "cooling";
  }
  return "unknown";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "heating") return ModelKind::heating;
  if (name == "valve") return ModelKind::valve;
  if (name == "cooling") return ModelKind::cooling;
  throw SchemaError("unknown model kind '" + std::string(name) + "'");
}

Architecture architecture(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::heating: return {6, 16, 2, 4, nn::Activation::identity};
    case ModelKind::valve: return {4, 16, 2, 8, nn::Activation::sigmoid};
    case ModelKind::cooling: return {6, 16, 2, 8, nn::Activation::identity};
  }
  return {};
}

DynamicsModel build_model(ModelKind kind, std::uint64_t seed) {
  const Architecture a = architecture(kind);
  DynamicsModel m;
  m.kind = kind;
  std::size_t width = kFeatureCount;
  for (std::size_t i = 0; i < a.dense_layers; ++i) {
    m.stack.add(nn::DenseLayer(width, a.dense_units, nn::Activation::relu));
    width = a.dense_units;
  }
  for (std::size_t i = 0; i < a.lstm_layers; ++i) {
    m.stack.add(nn::LstmLayer(width, a.lstm_units));
    width = a.lstm_units;
  }
  m.stack.add(nn::DenseLayer(width, 1, a.head));
  m.stack.initialize(seed);
  return m;
}

void check_architecture(const DynamicsModel& model) {
  const Architecture a = architecture(model.kind);
  const auto& s = model.stack;
  const std::string kind(to_string(model.kind));
  if (s.size() != a.dense_layers + a.lstm_layers + 1) {
    throw SchemaError(kind + " model has " + std::to_string(s.size()) + " layers, expected " +
                      std::to_string(a.dense_layers + a.lstm_layers + 1));
  }
  std::size_t width = kFeatureCount;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& layer = s.layer(i);
    const bool want_lstm = i >= a.dense_layers && i < a.dense_layers + a.lstm_layers;
    const bool head = i + 1 == s.size();
    const std::size_t want_out = head ? 1 : (want_lstm ? a.lstm_units : a.dense_units);
    if (nn::is_recurrent(layer) != want_lstm || nn::input_size(layer) != width ||
        nn::output_size(layer) != want_out) {
      throw SchemaError(kind + " model layer " + std::to_string(i) + " does not match the architecture");
    }
    if (!want_lstm) {
      const auto act = std::get<nn::DenseLayer>(layer).activation();
      if (act != (head ? a.head : nn::Activation::relu)) {
        throw SchemaError(kind + " model layer " + std::to_string(i) + " has the wrong activation");
      }
    }
    width = want_out;
  }
}

const DynamicsModel& ModelSet::get(ModelKind kind) const noexcept {
  switch (kind) {
    case ModelKind::heating: return heating;
    case ModelKind::valve: return valve;
    case ModelKind::cooling: break;
  }
  return cooling;
}

DynamicsModel& ModelSet::get(ModelKind kind) noexcept {
  return const_cast<DynamicsModel&>(static_cast<const ModelSet&>(*this).get(kind));
}

nn::Checkpoint to_checkpoint(const DynamicsModel& model, const data::ScalerParams& scaler,
                             const std::string& window_id) {
  nn::Checkpoint c;
  c.stack = model.stack;
  c.metadata["kind"] = std::string(to_string(model.kind));
  c.metadata["window"] = window_id;
  c.metadata["scaler"] = scaler.to_json();
  return c;
}

DynamicsModel model_from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto it = ckpt.metadata.find("kind");
  if (it == ckpt.metadata.end()) throw SchemaError("checkpoint has no model kind");
  DynamicsModel m{model_kind_from_string(it->second), ckpt.stack};
  check_architecture(m);
  return m;
}

void validate(const TrainConfig& cfg) {
  if (cfg.patience < 1) throw ConfigError("patience must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction <= 0.5)) {
    throw ConfigError("validation_fraction must lie in (0, 0.5]");
  }
  if (!(cfg.base_lr > 0.0) || !std::isfinite(cfg.base_lr)) throw ConfigError("base_lr must be positive");
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopper::update(double val_loss) {
  ++epoch_;
  if (best_epoch_ == 0 || val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

nn::Loss loss_for(ModelKind kind) noexcept { return kind == ModelKind::valve ? nn::Loss::bce : nn::Loss::mse; }

TrainResult train_model(DynamicsModel& model, const data::SequenceDataset& dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw InputError("cannot train " + std::string(to_string(model.kind)) + " model on an empty dataset");
  TrainResult result;
  if (cfg.max_epochs == 0) return result;
  const std::size_t n = dataset.size();
  if (n < 2) throw InputError("dataset too small for a validation split");
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n))), 1, n - 1);
  const std::size_t n_train = n - n_val;

  auto& stack = model.stack;
  const std::size_t prefix = feature_prefix(stack);
  for (std::size_t l = 0; l < stack.size(); ++l) stack.set_trainable(l, !(cfg.freeze_ffn && l < prefix));

  // Frozen feature layers are evaluated once; only the head is trained.
  const std::size_t skip = cfg.freeze_ffn ? prefix : 0;
  std::vector<Tensor2> cached;
  if (skip > 0) cached = precompute_features(stack, skip, dataset.inputs);
  std::span<const Tensor2> inputs = skip > 0 ? std::span<const Tensor2>(cached) : std::span<const Tensor2>(dataset.inputs);
  nn::LayerStack head = skip > 0 ? substack(stack, skip) : stack;

  std::vector<std::size_t> train_idx(n_train);
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), n_train);

  const std::size_t batches = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  nn::OptimizerState opt;
  opt.config.rule = nn::UpdateRule::adam;
  opt.config.decay = nn::LrDecay::linear;
  opt.config.base_lr = cfg.base_lr;
  opt.config.total_steps = batches * cfg.max_epochs;

  const nn::Loss loss = loss_for(model.kind);
  std::mt19937_64 rng(cfg.seed);
  nn::Tape tape;
  nn::Gradients grads = nn::Gradients::zeros_like(head);
  EarlyStopper stopper(cfg.patience);
  nn::LayerStack best = head;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n_train, lo + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(hi - lo);
      grads.zero();
      for (std::size_t k = lo; k < hi; ++k) {
        const std::size_t i = train_idx[k];
        nn::forward(head, inputs[i], tape);
        const double pred = tape.output()[0];
        const double target = dataset.targets(i, 0);
        epoch_loss += nn::loss_term(loss, pred, target);
        const double g = nn::loss_derivative(loss, pred, target) * inv;
        nn::backward(head, tape, std::span<const double>(&g, 1), grads);
      }
      nn::optimizer_step(head, grads, opt);
    }
    const double val = mean_loss(head, inputs, dataset.targets, val_idx, loss, tape);
    if (!std::isfinite(val)) throw NumericError("validation loss is not finite");
    result.train_loss.push_back(epoch_loss / static_cast<double>(n_train));
    result.val_loss.push_back(val);
    if (stopper.update(val)) best = head;
    if (stopper.should_stop()) {
      result.stopped_early = epoch + 1 < cfg.max_epochs;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();

  for (std::size_t l = 0; l < best.size(); ++l) nn::parameters(stack.layer(skip + l)) = nn::parameters(best.layer(l));
  return result;
}

TrainResult warm_start_retrain(DynamicsModel& model, const data::SequenceDataset& dataset, TrainConfig cfg) {
  check_architecture(model);
  cfg.freeze_ffn = true;
  return train_model(model, dataset, cfg);
}

double predict_raw(const DynamicsModel& model, const Tensor2& seq, nn::Tape& tape) {
  check_sequence(seq);
  nn::forward(model.stack, seq, tape);
  const double y = tape.output()[0];
  if (!std::isfinite(y)) throw NumericError(std::string(to_string(model.kind)) + " model output is not finite");
  return y;
}

double predict_raw(const DynamicsModel& model, const Tensor2& seq) {
  nn::Tape tape;
  return predict_raw(model, seq, tape);
}

double predict_energy(const DynamicsModel& model, const Tensor2& seq, const data::ScalerParams& scaler,
                      nn::Tape& tape) {
  const data::Column col = target_column(model.kind);
  const double raw = predict_raw(model, seq, tape);
  return scaler.invert(col, std::max(0.0, raw));
}

double predict_energy(const DynamicsModel& model, const Tensor2& seq, const data::ScalerParams& scaler) {
  nn::Tape tape;
  return predict_energy(model, seq, scaler, tape);
}

ValvePrediction predict_valve(const DynamicsModel& model, const Tensor2& seq, double threshold, nn::Tape& tape) {
  if (model.kind != ModelKind::valve) throw InputError("predict_valve requires the valve model");
  const double p = predict_raw(model, seq, tape);
  return {p >= threshold, p};
}

ValvePrediction predict_valve(const DynamicsModel& model, const Tensor2& seq, double threshold) {
  nn::Tape tape;
  return predict_valve(model, seq, threshold, tape);
}

ModelEvalReport evaluate_models(const ModelSet& models, const data::TimeSeriesFrame& raw,
                                std::span<const std::uint8_t> labels, std::size_t begin, std::size_t end,
                                const std::string& week) {
  if (begin < data::kLookback || end > raw.size() || begin >= end) {
    throw InputError("evaluation range needs " + std::to_string(data::kLookback) + " rows of context");
  }
  if (labels.size() != raw.size()) throw ShapeError("labels do not match frame");
  const std::size_t from = begin - data::kLookback;
  const data::TimeSeriesFrame scaled = data::apply_scaler(raw.slice(from, end), models.scaler);

  ModelEvalReport rep;
  rep.week = week;
  std::vector<double> h_pred, h_true, c_pred, c_true, v_score;
  std::vector<std::uint8_t> v_label;
  nn::Tape tape;
  Tensor2 seq(data::kLookback, kFeatureCount);
  for (std::size_t t = data::kLookback; t < scaled.size(); ++t) {
    for (std::size_t s = 0; s < data::kLookback; ++s) data::model_features(scaled, t - data::kLookback + s, seq.row(s));
    const std::size_t row = from + t;
    PredictionRecord r;
    r.timestamp = raw.timestamp(row);
    r.hwe_true = raw.at(row, data::Column::hwe);
    r.cwe_true = raw.at(row, data::Column::cwe);
    r.valve_true = labels[row];
    r.hwe_pred = predict_energy(models.heating, seq, models.scaler, tape);
    r.cwe_pred = predict_energy(models.cooling, seq, models.scaler, tape);
    r.valve_prob = predict_valve(models.valve, seq, 0.5, tape).probability;
    if (r.valve_true != 0) {
      h_pred.push_back(r.hwe_pred);
      h_true.push_back(r.hwe_true);
    }
    c_pred.push_back(r.cwe_pred);
    c_true.push_back(r.cwe_true);
    v_score.push_back(r.valve_prob);
    v_label.push_back(r.valve_true);
    rep.records.push_back(r);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto guarded = [nan](auto&& f) {
    try {
      return f();
    } catch (const UndefinedMetricError&) {
      return nan;
    } catch (const ShapeError&) {
      return nan;
    }
  };
  rep.cvrmse_h = guarded([&] { return cvrmse(h_pred, h_true); });
  rep.cvrmse_c = guarded([&] { return cvrmse(c_pred, c_true); });
  rep.roc_auc = guarded([&] { return roc_auc(v_score, v_label); });
  return rep;
}

}  // namespace relearn::dyn
