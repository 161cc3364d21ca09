#include "relearn/windowing.hpp"

#include "relearn/error.hpp"

namespace relearn::data {

std::vector<Window> make_windows(const TimeSeriesFrame& frame, const WindowSpec& spec) {
  const auto train = spec.train_len.count();
  const auto eval = spec.eval_len.count();
  const auto stride = spec.stride.count();
  if (train <= 0 || eval <= 0 || stride <= 0) throw ConfigError("window durations must be positive");
  if (stride > train + eval) throw ConfigError("window stride exceeds train_len + eval_len");
  const auto p = frame.period();
  if (train % p != 0 || eval % p != 0 || stride % p != 0) {
    throw ConfigError("window durations must be multiples of the frame period");
  }
  const std::size_t tr = static_cast<std::size_t>(train / p);
  const std::size_t ev = static_cast<std::size_t>(eval / p);
  const std::size_t st = static_cast<std::size_t>(stride / p);
  if (frame.size() < tr + ev) {
    throw ConfigError("frame has " + std::to_string(frame.size()) + " rows, windows need at least " +
                      std::to_string(tr + ev));
  }
  std::vector<Window> out;
  for (std::size_t start = 0; start + tr + ev <= frame.size(); start += st) {
    out.push_back({start, start + tr, start + tr, start + tr + ev});
  }
  return out;
}

void model_features(const TimeSeriesFrame& scaled, std::size_t row, std::span<double> out) {
  for (std::size_t f = 0; f < kModelFeatures.size(); ++f) out[f] = scaled.at(row, kModelFeatures[f]);
}

SequenceDataset make_sequences(const TimeSeriesFrame& scaled, std::span<const std::uint8_t> labels,
                               std::size_t begin, std::size_t end, TargetKind kind, std::size_t lookback) {
  if (end > scaled.size() || begin > end) throw InputError("make_sequences: range out of bounds");
  if (labels.size() != scaled.size()) throw ShapeError("make_sequences: labels do not match frame");
  SequenceDataset ds;
  if (end - begin < lookback + 1) {
    ds.warning = "slice of " + std::to_string(end - begin) + " rows is shorter than lookback + 1";
    ds.targets = Tensor2(0, 1);
    return ds;
  }
  std::vector<double> targets;
  for (std::size_t t = begin + lookback; t < end; ++t) {
    if (kind == TargetKind::heating && labels[t] == 0) continue;
    Tensor2 seq(lookback, kModelFeatures.size());
    bool on_run = labels[t] != 0;
    for (std::size_t s = 0; s < lookback; ++s) {
      const std::size_t row = t - lookback + s;
      model_features(scaled, row, seq.row(s));
      on_run = on_run && labels[row] != 0;
    }
    ds.inputs.push_back(std::move(seq));
    ds.target_rows.push_back(t);
    ds.contiguous_on.push_back(on_run ? 1 : 0);
    switch (kind) {
      case TargetKind::heating: targets.push_back(scaled.at(t, Column::hwe)); break;
      case TargetKind::cooling: targets.push_back(scaled.at(t, Column::cwe)); break;
      case TargetKind::valve: targets.push_back(labels[t] != 0 ? 1.0 : 0.0); break;
    }
  }
  const std::size_t count = targets.size();
  ds.targets = Tensor2(count, 1, std::move(targets));
  return ds;
}

}  // namespace relearn::data
