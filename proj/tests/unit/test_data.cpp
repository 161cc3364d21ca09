#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "relearn/csv_io.hpp"
#include "relearn/error.hpp"
#include "relearn/preprocess.hpp"
#include "relearn/scaler.hpp"
#include "relearn/synthetic.hpp"
#include "relearn/windowing.hpp"
#include "test_support.hpp"

using namespace relearn;
using namespace relearn::data;
using relearn::testing::TempDir;

namespace {

constexpr std::int64_t kMonday = 1559520000;  // 2019-06-03T00:00:00Z

TimeSeriesFrame constant_frame(std::size_t rows, std::int64_t period = kFiveMinutes) {
  TimeSeriesFrame f(kMonday, period);
  for (std::size_t i = 0; i < rows; ++i) f.append({70, 50, 60, 100, 72, 65, 0, 1});
  return f;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("ingest_csv accepts a well-formed file") {
    TempDir dir("ingest");
    write(dir / "a.csv",
          "timestamp,oat,orh,wbt,sol,avg_stpt,sat,hwe,cwe\n"
          "2019-06-03T00:00:00,70,50,60,0,72,65,0,1\n"
          "2019-06-03T00:05:00,71,51,61,0,72,65,0.5,1\n");
    const auto f = ingest_csv(dir / "a.csv");
    CHECK(f.size() == 2);
    CHECK(f.period() == kFiveMinutes);
    CHECK(f.at(1, Column::hwe) == 0.5);
    CHECK(f.start() == kMonday);
  }

  TEST_CASE("ingest_csv reports a missing column by name") {
    TempDir dir("ingest");
    write(dir / "a.csv",
          "timestamp,oat,orh,sol,avg_stpt,sat,hwe,cwe\n"
          "2019-06-03T00:00:00,70,50,0,72,65,0,1\n");
    try {
      ingest_csv(dir / "a.csv");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("wbt") != std::string::npos);
    }
  }

  TEST_CASE("ingest_csv flags the duplicated row") {
    TempDir dir("ingest");
    write(dir / "a.csv",
          "timestamp,oat,orh,wbt,sol,avg_stpt,sat,hwe,cwe\n"
          "2019-06-03T00:00:00,70,50,60,0,72,65,0,1\n"
          "2019-06-03T00:05:00,70,50,60,0,72,65,0,1\n"
          "2019-06-03T00:05:00,70,50,60,0,72,65,0,1\n");
    try {
      ingest_csv(dir / "a.csv");
      FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
      CHECK(e.row() == 2);
    }
    CHECK_THROWS_AS(ingest_csv(dir / "missing.csv"), InputError);
  }

  TEST_CASE("csv round trip preserves every value") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 15;
    const auto f = generate_synthetic(cfg);
    std::stringstream ss;
    write_csv(ss, f);
    CHECK(read_csv(ss) == f);
  }

  TEST_CASE("remove_outliers") {
    auto f = constant_frame(10);
    auto& oat = f.column(Column::oat);
    std::fill(oat.begin(), oat.end(), 0.0);
    oat[9] = 100.0;
    OutlierReport rep;
    const auto clean = remove_outliers(f, 2.0, kAllColumns, &rep);
    CHECK(clean.at(9, Column::oat) == 0.0);
    CHECK(rep.replaced[index(Column::oat)] == 1);
    CHECK(clean.column(Column::wbt) == f.column(Column::wbt));  // constant column untouched

    CHECK(remove_outliers(f, std::numeric_limits<double>::infinity()) == f);

    // interior outliers interpolate between kept neighbours
    auto g = constant_frame(21);
    auto& sat = g.column(Column::sat);
    for (std::size_t i = 0; i < sat.size(); ++i) sat[i] = static_cast<double>(i);
    sat[10] = 1000.0;
    CHECK(remove_outliers(g).at(10, Column::sat) == 10.0);
  }

  TEST_CASE("aggregate_30min") {
    TimeSeriesFrame f(kMonday, kFiveMinutes);
    for (int i = 0; i < 6; ++i) f.append({60.0 + i, 50, 60, 0, 72, 65, 1, 0.5});
    const auto agg = aggregate_30min(f);
    REQUIRE(agg.frame.size() == 1);
    CHECK(agg.frame.period() == kHalfHour);
    CHECK(agg.frame.at(0, Column::oat) == 62.5);
    CHECK(agg.frame.at(0, Column::hwe) == 6.0);
    CHECK(agg.frame.at(0, Column::sol) == 0.0);
    CHECK(agg.frame.at(0, Column::cwe) == 3.0);

    CHECK_THROWS_AS(aggregate_30min(agg.frame), InputError);
  }

  TEST_CASE("aggregation conserves energy up to dropped samples") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 15;
    auto f = generate_synthetic(cfg).slice(2, 15 * 2016 - 3);  // misaligned start, partial tail
    const auto agg = aggregate_30min(f);
    CHECK(agg.dropped_leading == 4);
    CHECK(agg.dropped_trailing == 3);
    for (Column c : {Column::hwe, Column::cwe}) {
      const auto& src = f.column(c);
      const double kept = std::accumulate(src.begin() + static_cast<long>(agg.dropped_leading),
                                          src.end() - static_cast<long>(agg.dropped_trailing), 0.0);
      const auto& dst = agg.frame.column(c);
      const double out = std::accumulate(dst.begin(), dst.end(), 0.0);
      CHECK(out == doctest::Approx(kept).epsilon(1e-12));
    }
    CHECK(agg.frame.start() % kHalfHour == 0);
  }

  TEST_CASE("scaler") {
    TimeSeriesFrame f(kMonday, kHalfHour);
    for (double v : {10.0, 20.0, 30.0}) f.append({v, 50, 60, 0, 72, 65, 0, 1});
    const auto p = fit_scaler(f, 0, 3);
    const auto s = apply_scaler(f, p);
    CHECK(s.column(Column::oat) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(p.scale(Column::oat, 35.0) == 1.1);
    CHECK(p.scale(Column::oat, -100.0) == -0.1);
    CHECK(s.at(0, Column::orh) == 0.0);  // max == min
    CHECK(invert_scaler(s, p).column(Column::oat) == f.column(Column::oat));
    CHECK(ScalerParams::from_json(p.to_json()) == p);
    CHECK_THROWS_AS(ScalerParams::from_json("{}"), SchemaError);
    CHECK_THROWS_AS(fit_scaler(f, 2, 2), InputError);
  }

  TEST_CASE("scaling maps the training window onto [0, 1] exactly") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 15;
    const auto f = aggregate_30min(generate_synthetic(cfg)).frame;
    const std::size_t end = f.size() / 2;
    const auto p = fit_scaler(f, 0, end);
    const auto s = apply_scaler(f, p);
    for (Column c : kAllColumns) {
      const auto& col = s.column(c);
      const auto [lo, hi] = std::minmax_element(col.begin(), col.begin() + static_cast<long>(end));
      CHECK(*lo == 0.0);
      CHECK(*hi == 1.0);
    }
  }

  TEST_CASE("valve labels") {
    TimeSeriesFrame f(kMonday, kHalfHour);
    for (double h : {0.0, 0.2, 0.0, 1e-9}) f.append({70, 50, 60, 0, 72, 65, h, 1});
    CHECK(derive_valve_labels(f) == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(derive_valve_labels(constant_frame(5)) == std::vector<std::uint8_t>(5, 0));

    SyntheticGenConfig cfg;
    cfg.n_weeks = 15;
    const auto g = aggregate_30min(generate_synthetic(cfg)).frame;
    const auto labels = derive_valve_labels(g);
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE((labels[i] == 1) == (g.at(i, Column::hwe) > 0.0));
  }

  TEST_CASE("make_windows") {
    const std::size_t week = 7 * 48;
    const WindowSpec spec;
    CHECK(make_windows(constant_frame(14 * week, kHalfHour), spec).size() == 1);
    const auto two = make_windows(constant_frame(15 * week, kHalfHour), spec);
    REQUIRE(two.size() == 2);
    CHECK(two[1].train_begin == two[0].train_begin + week);
    CHECK(two[1].eval_begin == two[0].eval_begin + week);
    for (const auto& w : two) {
      CHECK(w.eval_begin == w.train_end);
      CHECK(w.train_end - w.train_begin == 13 * week);
      CHECK(w.eval_end - w.eval_begin == week);
    }
    CHECK_THROWS_AS(make_windows(constant_frame(13 * week, kHalfHour), spec), ConfigError);
  }

  TEST_CASE("make_sequences") {
    auto seven = constant_frame(7, kHalfHour);
    std::vector<std::uint8_t> on(7, 1);
    const auto one = make_sequences(seven, on, 0, 7, TargetKind::cooling);
    REQUIRE(one.size() == 1);
    CHECK(one.target_rows[0] == 6);
    CHECK(one.inputs[0].rows() == 6);
    CHECK(one.inputs[0].cols() == kModelFeatures.size());

    std::vector<std::uint8_t> off(7, 1);
    off[6] = 0;
    CHECK(make_sequences(seven, off, 0, 7, TargetKind::heating).empty());
    CHECK(make_sequences(seven, off, 0, 7, TargetKind::valve).size() == 1);

    auto ten = constant_frame(10, kHalfHour);
    CHECK(make_sequences(ten, std::vector<std::uint8_t>(10, 1), 0, 10, TargetKind::cooling).size() == 4);

    const auto short_ds = make_sequences(seven, on, 0, 6, TargetKind::cooling);
    CHECK(short_ds.empty());
    CHECK(!short_ds.warning.empty());
  }

  TEST_CASE("synthetic generator is deterministic") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 15;
    cfg.seed = 99;
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    CHECK(a == b);
    std::stringstream sa, sb;
    write_csv(sa, a);
    write_csv(sb, b);
    CHECK(sa.str() == sb.str());
    cfg.seed = 100;
    CHECK(!(generate_synthetic(cfg) == a));
    CHECK(a.size() == 15u * 7 * 288);
    a.validate();
  }

  TEST_CASE("noise-free weather is day-periodic") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 15;
    cfg.shift_week = -1;
    cfg.seasonal_amplitude = 0.0;
    cfg.oat_noise = cfg.wbt_noise = cfg.orh_noise = cfg.cloud_noise = 0.0;
    const auto f = generate_synthetic(cfg);
    for (Column c : {Column::oat, Column::orh, Column::wbt, Column::sol}) {
      const auto& col = f.column(c);
      for (std::size_t i = 288; i < col.size(); ++i) REQUIRE(col[i] == doctest::Approx(col[i - 288]).epsilon(1e-12));
    }
  }

  TEST_CASE("post-shift weeks are in preheat territory") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 16;
    cfg.shift_week = 12;
    const auto f = generate_synthetic(cfg);
    const std::size_t week = 2016;
    for (int w = 0; w < cfg.n_weeks; ++w) {
      const auto& wbt = f.column(Column::wbt);
      const double mean = std::accumulate(wbt.begin() + static_cast<long>(w * week),
                                          wbt.begin() + static_cast<long>((w + 1) * week), 0.0) /
                          static_cast<double>(week);
      CAPTURE(w);
      if (w >= cfg.shift_week) {
        CHECK(mean < 52.0);
        CHECK(mean_wbt(cfg, 7.0 * w + 3.5) < 52.0);
      } else {
        CHECK(mean > 52.0);
      }
    }
  }

  TEST_CASE("generator rejects short campaigns") {
    SyntheticGenConfig cfg;
    cfg.n_weeks = 10;
    CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  }
}
