#include "relearn/frame.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "relearn/error.hpp"

namespace relearn::data {

namespace {
constexpr std::array<std::string_view, kColumnCount> kNames = {"oat",      "orh", "wbt", "sol",
                                                               "avg_stpt", "sat", "hwe", "cwe"};
}

std::string_view column_name(Column c) noexcept { return kNames[index(c)]; }

std::optional<Column> column_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    if (kNames[i] == name) return static_cast<Column>(i);
  }
  return std::nullopt;
}

bool is_energy(Column c) noexcept { return c == Column::hwe || c == Column::cwe; }

TimeSeriesFrame::TimeSeriesFrame(std::int64_t start, std::int64_t period) : start_(start), period_(period) {
  if (period <= 0) throw InputError("frame period must be positive");
}

void TimeSeriesFrame::reserve(std::size_t rows) {
  for (auto& c : columns_) c.reserve(rows);
}

void TimeSeriesFrame::append(const std::array<double, kColumnCount>& row) {
  for (std::size_t i = 0; i < kColumnCount; ++i) columns_[i].push_back(row[i]);
}

TimeSeriesFrame TimeSeriesFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw InputError("frame slice out of range");
  TimeSeriesFrame out(timestamp(begin), period_);
  for (std::size_t i = 0; i < kColumnCount; ++i) {
    out.columns_[i].assign(columns_[i].begin() + static_cast<std::ptrdiff_t>(begin),
                           columns_[i].begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void TimeSeriesFrame::validate() const {
  const std::size_t n = columns_[0].size();
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    if (columns_[c].size() != n) {
      throw IntegrityError("column '" + std::string(kNames[c]) + "' length differs", 0);
    }
    for (std::size_t r = 0; r < n; ++r) {
      const double v = columns_[c][r];
      if (!std::isfinite(v)) throw IntegrityError("non-finite " + std::string(kNames[c]), r);
      if (is_energy(static_cast<Column>(c)) && v < 0.0) {
        throw IntegrityError("negative " + std::string(kNames[c]), r);
      }
    }
  }
}

std::int64_t parse_iso8601(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  std::string buf(text);
  const int got = std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (got != 7 || (sep != 'T' && sep != ' ')) throw InputError("unparseable timestamp '" + buf + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59) {
    throw InputError("invalid timestamp '" + buf + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>((rem % 3600) / 60), static_cast<int>(rem % 60));
  return buf;
}

}  // namespace relearn::data
