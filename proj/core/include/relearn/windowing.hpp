#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relearn/frame.hpp"
#include "relearn/tensor.hpp"

namespace relearn::data {

struct WindowSpec {
  std::chrono::seconds train_len = std::chrono::weeks(13);
  std::chrono::seconds eval_len = std::chrono::weeks(1);
  std::chrono::seconds stride = std::chrono::weeks(1);
};

/// Row ranges of one relearning window; eval immediately follows train.
struct Window {
  std::size_t train_begin = 0;
  std::size_t train_end = 0;
  std::size_t eval_begin = 0;
  std::size_t eval_end = 0;
  friend bool operator==(const Window&, const Window&) = default;
};

/// Sliding windows advanced by `stride`. Throws ConfigError if the window settings are
/// invalid or the frame is shorter than train_len + eval_len.
std::vector<Window> make_windows(const TimeSeriesFrame& frame, const WindowSpec& spec);

enum class TargetKind { heating, valve, cooling };

inline constexpr std::size_t kLookback = 6;

/// Lookback sequences of scaled model features and next-interval targets.
/// Input i covers rows target_rows[i] - lookback .. target_rows[i] - 1.
struct SequenceDataset {
  std::vector<Tensor2> inputs;          // lookback x kModelFeatures.size()
  Tensor2 targets;                      // size x 1
  std::vector<std::size_t> target_rows; // row index in the source frame
  std::vector<std::uint8_t> contiguous_on;  // heating: whole sequence inside a valve-on run
  std::string warning;

  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

/// Copies the scaled model features of `row` into `out` (size 6).
void model_features(const TimeSeriesFrame& scaled, std::size_t row, std::span<double> out);

/// Builds pairs whose targets fall in rows [begin + lookback, end). Heating
/// targets are scaled hwe and skip rows with valve label 0; valve targets are
/// the labels; cooling targets are scaled cwe.
SequenceDataset make_sequences(const TimeSeriesFrame& scaled, std::span<const std::uint8_t> labels,
                               std::size_t begin, std::size_t end, TargetKind kind,
                               std::size_t lookback = kLookback);

}  // namespace relearn::data
