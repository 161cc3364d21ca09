#include "relearn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "relearn/error.hpp"

namespace relearn::data {

namespace {

constexpr std::size_t kSamplesPerDay = 288;

double shift_fraction(const SyntheticGenConfig& cfg, double days) noexcept {
  if (cfg.shift_week < 0) return 0.0;
  const double centre = 7.0 * cfg.shift_week;
  return 1.0 / (1.0 + std::exp(-(days - centre) / cfg.shift_width_days));
}

double lerp(double a, double b, double t) noexcept { return a + (b - a) * t; }

void validate(const SyntheticGenConfig& cfg) {
  if (cfg.n_weeks < cfg.min_weeks) {
    throw ConfigError("n_weeks = " + std::to_string(cfg.n_weeks) + " is below the minimum of " +
                      std::to_string(cfg.min_weeks) + " weeks (train_len + 2 * eval_len)");
  }
  if (cfg.start % kHalfHour != 0) throw ConfigError("synthetic start must be aligned to a half-hour");
  if (cfg.shift_width_days <= 0.0) throw ConfigError("shift_width_days must be positive");
  if (cfg.lag_samples < 0) throw ConfigError("lag_samples must be non-negative");
  if (cfg.day_start_hour < 0 || cfg.day_end_hour > 24 || cfg.day_start_hour >= cfg.day_end_hour) {
    throw ConfigError("invalid RBC day hours");
  }
  for (double s : {cfg.oat_noise, cfg.wbt_noise, cfg.orh_noise, cfg.cloud_noise, cfg.sat_noise, cfg.energy_noise,
                   cfg.rbc_trim}) {
    if (s < 0.0) throw ConfigError("noise scales must be non-negative");
  }
  if (cfg.cloud_noise > 1.0) throw ConfigError("cloud_noise must be <= 1");
  if (cfg.cold_span <= 0.0 || cfg.warm_span <= 0.0) throw ConfigError("cold_span and warm_span must be positive");
}

}  // namespace

double mean_wbt(const SyntheticGenConfig& cfg, double days) noexcept {
  const double season = cfg.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * days / 365.0);
  return lerp(cfg.wbt_pre, cfg.wbt_post, shift_fraction(cfg, days)) + season;
}

PlantEnergy plant_energy(const PlantState& s, const SyntheticGenConfig& cfg) noexcept {
  const bool reheat = s.wbt >= 52.0;
  double coil = 0.0;
  if (reheat) {
    if (s.sat > cfg.reheat_gate + cfg.reheat_gate_solar * s.sol) coil = cfg.k_reheat * (s.sat - 52.0);
  } else {
    const double mix = cfg.mix_outdoor_fraction * s.oat + (1.0 - cfg.mix_outdoor_fraction) * s.avg_stpt;
    coil = cfg.k_preheat * std::max(0.0, s.sat - mix);
  }
  const double cold = std::clamp((cfg.cold_ref - s.oat) / cfg.cold_span, 0.0, cfg.cold_max);
  const double zone = cfg.k_zone_heat * cold * std::max(0.0, s.avg_stpt + cfg.zone_heat_offset - s.sat);
  const double warm = std::clamp((s.oat - cfg.warm_ref) / cfg.warm_span, 0.0, cfg.warm_max);
  const double coil_cool = reheat ? cfg.k_coil_cool * std::max(0.0, s.oat - 52.0) * (0.6 + s.orh / 200.0) : 0.0;
  const double vrf_cool = cfg.k_vrf_cool * warm * std::max(0.0, s.sat - s.avg_stpt + cfg.vrf_cool_offset);
  return {coil + zone, cfg.cool_base + coil_cool + vrf_cool};
}

TimeSeriesFrame generate_synthetic(const SyntheticGenConfig& cfg) {
  validate(cfg);
  const std::size_t n = static_cast<std::size_t>(cfg.n_weeks) * 7 * kSamplesPerDay;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> preference(68, 72);

  constexpr double rho = 0.98;
  const double innov = std::sqrt(1.0 - rho * rho);
  double e_oat = 0.0;
  double e_wbt = 0.0;
  double cloud = 1.0;
  double avg_stpt = 70.0;
  double trim = 0.0;

  std::vector<PlantState> states(n);
  TimeSeriesFrame frame(cfg.start, kFiveMinutes);
  frame.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t tod = i % kSamplesPerDay;
    const double hour = static_cast<double>(tod) / 12.0;
    const double days = static_cast<double>(i) / static_cast<double>(kSamplesPerDay);
    if (tod == 0) {
      cloud = 1.0 - cfg.cloud_noise * unit(rng);
      avg_stpt = static_cast<double>(preference(rng));
    }
    if (tod % 24 == 0) {
      // Operator trim in half-degree steps, held for two hours.
      trim = std::round(2.0 * cfg.rbc_trim * (2.0 * unit(rng) - 1.0)) / 2.0;
    }
    e_oat = rho * e_oat + innov * cfg.oat_noise * normal(rng);
    e_wbt = rho * e_wbt + innov * cfg.wbt_noise * normal(rng);
    const double orh_noise = cfg.orh_noise * normal(rng);
    const double sat_noise = cfg.sat_noise * normal(rng);
    const double hwe_noise = cfg.energy_noise * normal(rng);
    const double cwe_noise = cfg.energy_noise * normal(rng);

    const double shift = shift_fraction(cfg, days);
    const double season = cfg.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * days / 365.0);
    const double cycle = std::cos(2.0 * std::numbers::pi * (hour - 15.0) / 24.0);
    const double daylight = std::max(0.0, std::sin(std::numbers::pi * (hour - 6.0) / 12.0));

    PlantState s;
    s.oat = lerp(cfg.oat_pre, cfg.oat_post, shift) + season + cfg.oat_diurnal * cycle + e_oat;
    s.wbt = lerp(cfg.wbt_pre, cfg.wbt_post, shift) + season + cfg.wbt_diurnal * cycle + e_wbt;
    s.orh = std::clamp(100.0 - 4.0 * (s.oat - s.wbt) + orh_noise, 5.0, 100.0);
    s.sol = lerp(cfg.sol_peak_pre, cfg.sol_peak_post, shift) * cloud * daylight;
    s.avg_stpt = avg_stpt;
    const bool day = hour >= cfg.day_start_hour && hour < cfg.day_end_hour;
    s.sat = (day ? cfg.rbc_day : cfg.rbc_night) + trim + sat_noise;
    states[i] = s;

    const std::size_t cause = i >= static_cast<std::size_t>(cfg.lag_samples) ? i - cfg.lag_samples : 0;
    const PlantEnergy e = plant_energy(states[cause], cfg);
    const double hwe = e.hwe > 0.0 ? e.hwe * std::exp(hwe_noise) : 0.0;
    const double cwe = e.cwe * std::exp(cwe_noise);
    frame.append({s.oat, s.orh, s.wbt, s.sol, s.avg_stpt, s.sat, hwe, cwe});
  }
  return frame;
}

}  // namespace relearn::data
