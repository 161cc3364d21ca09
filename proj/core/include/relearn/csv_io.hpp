#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "relearn/frame.hpp"

namespace relearn::data {

/// Header shared by every frame file: timestamp then the eight columns.
inline constexpr const char* kCsvHeader = "timestamp,oat,orh,wbt,sol,avg_stpt,sat,hwe,cwe";

/// Reads a frame and infers its period from the first two rows. Columns may
/// appear in any order; extra columns and leading '#' lines are ignored.
///  - missing column           -> SchemaError naming it
///  - bad number / timestamp   -> InputError
///  - duplicate, decreasing or gapped timestamps -> IntegrityError (0-based data row)
TimeSeriesFrame read_csv(std::istream& in);
TimeSeriesFrame read_csv(const std::filesystem::path& path);

/// read_csv plus the requirement that the grid is the raw 5-minute one.
TimeSeriesFrame ingest_csv(const std::filesystem::path& path);

void write_csv(std::ostream& out, const TimeSeriesFrame& frame);
void write_csv(const std::filesystem::path& path, const TimeSeriesFrame& frame);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace relearn::data
