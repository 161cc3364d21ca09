#include "relearn/scaler.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relearn/error.hpp"

namespace relearn::data {

void ScalerParams::set_range(Column c, Range r) {
  if (r.max < r.min) throw InputError("scaler range max < min for " + std::string(column_name(c)));
  ranges_[index(c)] = r;
}

double ScalerParams::scale(Column c, double x) const noexcept {
  const Range& r = ranges_[index(c)];
  if (r.max == r.min) return 0.0;
  return std::clamp((x - r.min) / (r.max - r.min), kScaledLow, kScaledHigh);
}

double ScalerParams::invert(Column c, double scaled) const noexcept {
  const Range& r = ranges_[index(c)];
  return r.min + scaled * (r.max - r.min);
}

std::string ScalerParams::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (Column c : kAllColumns) {
    doc[std::string(column_name(c))] = {{"min", range(c).min}, {"max", range(c).max}};
  }
  return doc.dump();
}

ScalerParams ScalerParams::from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    ScalerParams p;
    for (Column c : kAllColumns) {
      const auto& e = doc.at(std::string(column_name(c)));
      p.set_range(c, {e.at("min").get<double>(), e.at("max").get<double>()});
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed scaler: ") + e.what());
  } catch (const InputError& e) {
    throw SchemaError(e.what());
  }
}

void ScalerParams::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_json() << '\n';
}

ScalerParams ScalerParams::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

ScalerParams fit_scaler(const TimeSeriesFrame& frame, std::size_t begin, std::size_t end) {
  if (begin >= end || end > frame.size()) throw InputError("fit_scaler: empty or out-of-range window");
  ScalerParams p;
  for (Column c : kAllColumns) {
    const auto& col = frame.column(c);
    const auto [lo, hi] = std::minmax_element(col.begin() + static_cast<std::ptrdiff_t>(begin),
                                              col.begin() + static_cast<std::ptrdiff_t>(end));
    p.set_range(c, {*lo, *hi});
  }
  return p;
}

TimeSeriesFrame apply_scaler(const TimeSeriesFrame& frame, const ScalerParams& params) {
  TimeSeriesFrame out = frame;
  for (Column c : kAllColumns) {
    for (double& v : out.column(c)) v = params.scale(c, v);
  }
  return out;
}

TimeSeriesFrame invert_scaler(const TimeSeriesFrame& scaled, const ScalerParams& params) {
  TimeSeriesFrame out = scaled;
  for (Column c : kAllColumns) {
    for (double& v : out.column(c)) v = params.invert(c, v);
  }
  return out;
}

}  // namespace relearn::data
