#pragma once

#include <cstdint>

#include "relearn/frame.hpp"

namespace relearn::data {

/// Parameters of the synthetic building. Weather follows seasonal and diurnal
/// sinusoids plus AR(1) noise, with a logistic regime shift that drops the wet
/// bulb temperature below 52 degF (reheat -> preheat operation). A rule-based
/// supply-air schedule drives heating/cooling energies through a known plant
/// response evaluated one half-hour after the state that causes it.
struct SyntheticGenConfig {
  std::int64_t start = 1559520000;  // 2019-06-03T00:00:00Z, a Monday
  int n_weeks = 21;
  std::uint64_t seed = 7;
  int shift_week = 17;  // first week of the post-shift regime; negative disables the shift
  double shift_width_days = 0.5;

  // Weather (degF, W/m2).
  double oat_pre = 76.0;
  double oat_post = 50.0;
  double oat_diurnal = 8.0;
  double wbt_pre = 62.0;
  double wbt_post = 44.0;
  double wbt_diurnal = 3.5;
  double seasonal_amplitude = 2.0;
  double sol_peak_pre = 850.0;
  double sol_peak_post = 550.0;

  // Noise scales; all zero gives exactly day-periodic weather when the shift
  // and seasonal terms are disabled.
  double oat_noise = 1.0;
  double wbt_noise = 0.6;
  double orh_noise = 2.0;
  double cloud_noise = 0.3;
  double sat_noise = 0.2;
  double energy_noise = 0.04;

  // Rule-based supply-air set-point: day/night neutral temperatures plus an
  // operator trim redrawn every two hours.
  double rbc_day = 63.0;
  double rbc_night = 70.0;
  double rbc_trim = 2.0;
  int day_start_hour = 6;
  int day_end_hour = 22;

  // Plant response (kBTU per 5-minute sample). In reheat mode the coil reheats
  // air leaving the 52 degF cooling coil and shuts off when solar gain covers
  // the demand; in preheat mode it warms the outdoor/return air mix. Zones add
  // hot-water reheat in cold weather when the supply air is cold, and VRF
  // cooling in warm weather when the supply air is warm.
  double k_reheat = 0.4;
  double reheat_gate = 58.0;
  double reheat_gate_solar = 0.012;
  double k_preheat = 0.4;
  double mix_outdoor_fraction = 0.3;
  double k_zone_heat = 2.5;
  double zone_heat_offset = 4.0;
  double cold_ref = 58.0;
  double cold_span = 10.0;
  double cold_max = 2.0;
  double cool_base = 0.8;
  double k_coil_cool = 0.03;
  double k_vrf_cool = 0.3;
  double vrf_cool_offset = 8.0;
  double warm_ref = 50.0;
  double warm_span = 20.0;
  double warm_max = 1.5;
  int lag_samples = 6;

  // Smallest campaign that yields one train window and two evaluation weeks.
  int min_weeks = 15;
};

/// Instantaneous plant inputs at the causing sample.
struct PlantState {
  double oat = 0.0;
  double orh = 0.0;
  double wbt = 0.0;
  double sol = 0.0;
  double avg_stpt = 0.0;
  double sat = 0.0;
};

struct PlantEnergy {
  double hwe = 0.0;
  double cwe = 0.0;
};

/// Noise-free heating/cooling energy per 5-minute sample. hwe is exactly 0
/// when neither the AHU coil nor zone reheat is active (valve shut).
PlantEnergy plant_energy(const PlantState& state, const SyntheticGenConfig& cfg) noexcept;

/// Mean wet-bulb level (without diurnal and noise terms) at `days` after start.
double mean_wbt(const SyntheticGenConfig& cfg, double days) noexcept;

/// 5-minute frame, bit-identical for identical configs. Throws ConfigError if
/// n_weeks < min_weeks or parameters are inconsistent.
TimeSeriesFrame generate_synthetic(const SyntheticGenConfig& cfg);

}  // namespace relearn::data
