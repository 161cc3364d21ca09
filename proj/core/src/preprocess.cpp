#include "relearn/preprocess.hpp"

#include <cmath>

#include "relearn/error.hpp"

namespace relearn::data {

TimeSeriesFrame remove_outliers(const TimeSeriesFrame& frame, double k, std::span<const Column> columns,
                                OutlierReport* report) {
  if (frame.empty()) throw InputError("remove_outliers: empty frame");
  TimeSeriesFrame out = frame;
  const std::size_t n = frame.size();
  for (Column c : columns) {
    const auto& src = frame.column(c);
    double mean = 0.0;
    for (double v : src) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : src) ss += (v - mean) * (v - mean);
    const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    if (sd == 0.0 || !std::isfinite(k)) continue;

    std::vector<std::uint8_t> keep(n);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
      keep[i] = std::abs(src[i] - mean) <= k * sd ? 1 : 0;
      kept += keep[i];
    }
    if (kept == 0 || kept == n) continue;
    if (report != nullptr) report->replaced[index(c)] = n - kept;

    auto& dst = out.column(c);
    std::size_t prev = n;  // last kept index, n = none yet
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) {
        prev = i;
        continue;
      }
      std::size_t next = i + 1;
      while (next < n && !keep[next]) ++next;
      if (prev == n) {
        dst[i] = src[next];
      } else if (next == n) {
        dst[i] = src[prev];
      } else {
        const double t = static_cast<double>(i - prev) / static_cast<double>(next - prev);
        dst[i] = src[prev] + t * (src[next] - src[prev]);
      }
    }
  }
  return out;
}

AggregateResult aggregate_30min(const TimeSeriesFrame& frame) {
  if (frame.period() != kFiveMinutes) throw InputError("aggregate_30min expects a 5-minute frame");
  constexpr std::size_t block = kHalfHour / kFiveMinutes;
  AggregateResult result;
  std::size_t first = 0;
  while (first < frame.size() && frame.timestamp(first) % kHalfHour != 0) ++first;
  result.dropped_leading = first;
  const std::size_t blocks = (frame.size() - first) / block;
  result.dropped_trailing = frame.size() - first - blocks * block;

  result.frame = TimeSeriesFrame(first < frame.size() ? frame.timestamp(first) : frame.start(), kHalfHour);
  result.frame.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    std::array<double, kColumnCount> row{};
    for (Column c : kAllColumns) {
      const auto& col = frame.column(c);
      double acc = 0.0;
      for (std::size_t i = 0; i < block; ++i) acc += col[first + b * block + i];
      row[index(c)] = is_energy(c) ? acc : acc / static_cast<double>(block);
    }
    result.frame.append(row);
  }
  return result;
}

std::vector<std::uint8_t> derive_valve_labels(const TimeSeriesFrame& frame) {
  const auto& hwe = frame.column(Column::hwe);
  std::vector<std::uint8_t> labels(hwe.size());
  for (std::size_t i = 0; i < hwe.size(); ++i) labels[i] = hwe[i] > 0.0 ? 1 : 0;
  return labels;
}

}  // namespace relearn::data
