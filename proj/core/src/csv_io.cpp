#include "relearn/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "relearn/error.hpp"

namespace relearn::data {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

double parse_number(std::string_view field, std::size_t row) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InputError("row " + std::to_string(row) + ": cannot parse number '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

TimeSeriesFrame read_csv(std::istream& in) {
  std::string line;
  // leading '#' lines carry provenance stamps
  do {
    if (!std::getline(in, line)) throw SchemaError("empty CSV: missing header");
  } while (!line.empty() && line.front() == '#');
  const auto header = split(line);
  std::size_t ts_col = header.size();
  std::array<std::size_t, kColumnCount> col_idx{};
  col_idx.fill(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "timestamp") ts_col = i;
    if (auto c = column_from_name(header[i])) col_idx[index(*c)] = i;
  }
  if (ts_col == header.size()) throw SchemaError("missing column 'timestamp'");
  for (Column c : kAllColumns) {
    if (col_idx[index(c)] == header.size()) {
      throw SchemaError("missing column '" + std::string(column_name(c)) + "'");
    }
  }

  std::vector<std::int64_t> stamps;
  std::vector<std::array<double, kColumnCount>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const std::size_t row = rows.size();
    const auto fields = split(line);
    if (fields.size() < header.size()) {
      throw InputError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields");
    }
    stamps.push_back(parse_iso8601(fields[ts_col]));
    std::array<double, kColumnCount> values{};
    for (std::size_t c = 0; c < kColumnCount; ++c) values[c] = parse_number(fields[col_idx[c]], row);
    rows.push_back(values);
  }
  if (rows.empty()) return TimeSeriesFrame(0, kFiveMinutes);

  const std::int64_t period = rows.size() > 1 ? stamps[1] - stamps[0] : kFiveMinutes;
  for (std::size_t r = 1; r < stamps.size(); ++r) {
    const std::int64_t step = stamps[r] - stamps[r - 1];
    if (step == 0) throw IntegrityError("duplicate timestamp " + format_iso8601(stamps[r]), r);
    if (step < 0) throw IntegrityError("timestamps not increasing at " + format_iso8601(stamps[r]), r);
    if (step != period) throw IntegrityError("gap in timestamp grid at " + format_iso8601(stamps[r]), r);
  }

  TimeSeriesFrame frame(stamps.front(), period);
  frame.reserve(rows.size());
  for (const auto& r : rows) frame.append(r);
  return frame;
}

TimeSeriesFrame read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("file not found: " + path.string());
  return read_csv(in);
}

TimeSeriesFrame ingest_csv(const std::filesystem::path& path) {
  auto frame = read_csv(path);
  if (frame.size() > 1 && frame.period() != kFiveMinutes) {
    throw IntegrityError("expected a 5-minute grid, found period " + std::to_string(frame.period()) + "s", 1);
  }
  return frame;
}

void write_csv(std::ostream& out, const TimeSeriesFrame& frame) {
  out << kCsvHeader << '\n';
  for (std::size_t r = 0; r < frame.size(); ++r) {
    out << format_iso8601(frame.timestamp(r));
    for (Column c : kAllColumns) out << ',' << format_double(frame.at(r, c));
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const TimeSeriesFrame& frame) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_csv(out, frame);
}

}  // namespace relearn::data
