#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "relearn/orchestrator.hpp"

namespace relearn::config {

/// Parses the sectioned key=value format ([data], [synthetic], [window],
/// [heating], [valve], [cooling], [retrain], [ppo], [env], [campaign]). Keys
/// left out keep their defaults; unknown sections or keys and malformed values
/// throw ConfigError.
orch::CampaignConfig parse_campaign_config(std::string_view text);

/// Throws InputError if the file cannot be read, ConfigError otherwise.
orch::CampaignConfig load_campaign_config(const std::filesystem::path& path);

/// Canonical rendering of every key; parsing it yields an identical config.
std::string to_ini_string(const orch::CampaignConfig& cfg);

/// FNV-1a of the canonical rendering with the thread count normalized.
std::uint64_t config_hash(const orch::CampaignConfig& cfg);

/// Sets the campaign seed and the derived synthetic-data seed.
void apply_seed(orch::CampaignConfig& cfg, std::uint64_t seed);

}  // namespace relearn::config
