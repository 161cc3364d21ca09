#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "relearn/frame.hpp"

namespace relearn::data {

struct OutlierReport {
  std::array<std::size_t, kColumnCount> replaced{};  // per column
};

/// Per column, values further than k sample standard deviations from the
/// column mean are replaced by linear interpolation between the nearest kept
/// neighbours (edges copy the nearest kept value). Zero-variance columns are
/// left alone. Only the listed columns are touched.
TimeSeriesFrame remove_outliers(const TimeSeriesFrame& frame, double k = 2.0,
                                std::span<const Column> columns = kAllColumns,
                                OutlierReport* report = nullptr);

struct AggregateResult {
  TimeSeriesFrame frame;
  std::size_t dropped_leading = 0;   // samples before the first half-hour boundary
  std::size_t dropped_trailing = 0;  // samples in an incomplete final block
};

/// 5-minute -> 30-minute blocks aligned to half-hours. Energies are summed and
/// every other column averaged. Throws InputError unless the input period is 5 min.
AggregateResult aggregate_30min(const TimeSeriesFrame& frame);

/// label = 1 iff hwe > 0.
std::vector<std::uint8_t> derive_valve_labels(const TimeSeriesFrame& frame);

}  // namespace relearn::data
