#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reuse/report_io.hpp"

namespace reuse {

const std::vector<std::string>& preset_names();

// Full default config for a preset (validates against the schema).
json preset_defaults(const std::string& preset);

const json& config_schema();
// Throws ConfigInvalid listing every violation with its JSON pointer.
void validate_config(const json& config);

struct ExperimentConfig {
  std::string preset;
  std::uint64_t seed = 0;
  json body;  // user config merged over the preset defaults
};

// Merge order: preset defaults, then the user file, then overrides.
ExperimentConfig make_config(const json& user, const std::optional<std::string>& preset_override = std::nullopt,
                             const std::optional<std::uint64_t>& seed_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, const std::optional<std::string>& preset_override = std::nullopt,
                             const std::optional<std::uint64_t>& seed_override = std::nullopt);

ExperimentReport run(const ExperimentConfig& config);

}  // namespace reuse
