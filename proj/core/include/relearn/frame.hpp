#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relearn::data {

/// The eight building/weather series. Temperatures in degF, orh in %RH, sol in
/// W/m2, energies in kBTU per sampling interval.
enum class Column : std::size_t { oat, orh, wbt, sol, avg_stpt, sat, hwe, cwe };

inline constexpr std::size_t kColumnCount = 8;
inline constexpr std::array<Column, kColumnCount> kAllColumns = {
    Column::oat, Column::orh, Column::wbt, Column::sol, Column::avg_stpt, Column::sat, Column::hwe, Column::cwe};
/// Action-independent weather/preference variables.
inline constexpr std::array<Column, 5> kExogenousColumns = {Column::oat, Column::orh, Column::wbt, Column::sol,
                                                            Column::avg_stpt};
/// Inputs of the dynamics models: exogenous variables plus supply air temperature.
inline constexpr std::array<Column, 6> kModelFeatures = {Column::oat, Column::orh, Column::wbt,
                                                         Column::sol, Column::avg_stpt, Column::sat};

constexpr std::size_t index(Column c) noexcept { return static_cast<std::size_t>(c); }
std::string_view column_name(Column c) noexcept;
std::optional<Column> column_from_name(std::string_view name) noexcept;
/// Energies are summed when aggregating; everything else is averaged.
bool is_energy(Column c) noexcept;

inline constexpr std::int64_t kFiveMinutes = 300;
inline constexpr std::int64_t kHalfHour = 1800;
inline constexpr std::int64_t kWeek = 7 * 24 * 3600;

/// Multivariate series on a fixed grid: row i is stamped start + i * period
/// (seconds since the Unix epoch, UTC).
class TimeSeriesFrame {
 public:
  TimeSeriesFrame() = default;
  TimeSeriesFrame(std::int64_t start, std::int64_t period);

  std::size_t size() const noexcept { return columns_[0].size(); }
  bool empty() const noexcept { return size() == 0; }
  std::int64_t start() const noexcept { return start_; }
  std::int64_t period() const noexcept { return period_; }
  std::int64_t timestamp(std::size_t row) const noexcept {
    return start_ + static_cast<std::int64_t>(row) * period_;
  }
  std::size_t rows_per(std::int64_t duration) const noexcept {
    return static_cast<std::size_t>(duration / period_);
  }

  std::vector<double>& column(Column c) noexcept { return columns_[index(c)]; }
  const std::vector<double>& column(Column c) const noexcept { return columns_[index(c)]; }
  double at(std::size_t row, Column c) const noexcept { return columns_[index(c)][row]; }
  double& at(std::size_t row, Column c) noexcept { return columns_[index(c)][row]; }

  void reserve(std::size_t rows);
  void append(const std::array<double, kColumnCount>& row);

  /// Rows [begin, end) as a new frame with shifted start.
  TimeSeriesFrame slice(std::size_t begin, std::size_t end) const;

  /// Throws IntegrityError when columns disagree in length, values are not
  /// finite, or energies are negative.
  void validate() const;

  friend bool operator==(const TimeSeriesFrame&, const TimeSeriesFrame&) = default;

 private:
  std::int64_t start_ = 0;
  std::int64_t period_ = kFiveMinutes;
  std::array<std::vector<double>, kColumnCount> columns_;
};

/// "YYYY-MM-DDTHH:MM:SS" (a trailing 'Z' is accepted). Throws InputError.
std::int64_t parse_iso8601(std::string_view text);
std::string format_iso8601(std::int64_t epoch_seconds);

}  // namespace relearn::data
