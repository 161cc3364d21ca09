#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "relearn/frame.hpp"

namespace relearn::data {

struct Range {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

/// Per-column min/max fitted on a training window. Scaled values are
/// (x - min) / (max - min) clamped to [kScaledLow, kScaledHigh], so evaluation
/// weeks that exceed the training extremes stay bounded.
class ScalerParams {
 public:
  static constexpr double kScaledLow = -0.1;
  static constexpr double kScaledHigh = 1.1;

  ScalerParams() = default;

  const Range& range(Column c) const noexcept { return ranges_[index(c)]; }
  void set_range(Column c, Range r);

  /// Zero when max == min.
  double scale(Column c, double x) const noexcept;
  double invert(Column c, double scaled) const noexcept;

  std::string to_json() const;
  /// Throws SchemaError.
  static ScalerParams from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ScalerParams load(const std::filesystem::path& path);

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;

 private:
  std::array<Range, kColumnCount> ranges_{};
};

/// Fits on rows [begin, end). Throws InputError on an empty range.
ScalerParams fit_scaler(const TimeSeriesFrame& frame, std::size_t begin, std::size_t end);
TimeSeriesFrame apply_scaler(const TimeSeriesFrame& frame, const ScalerParams& params);
TimeSeriesFrame invert_scaler(const TimeSeriesFrame& scaled, const ScalerParams& params);

}  // namespace relearn::data
