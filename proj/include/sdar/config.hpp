#pragma once

// Run configuration: a TrainConfig plus the environment URI, read from a
// sectioned key = value file ([run], [agent], [optimizer]).

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sdar/trainer.hpp"

namespace sdar {

struct RunConfig {
    std::string env = "builtin:mountain_car";
    TrainConfig train;

    /// Nested by section; object keys sort, so the dump is canonical.
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    /// Hex SHA-256 of the canonical JSON dump.
    std::string hash() const;
    /// Renders the config back into the file format.
    std::string to_file_text() const;
};

/// Sets section.key from its textual value. Unknown keys throw ConfigError.
void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);

/// Applies every key of a config document on top of `base`.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});

/// Every recognised "section.key".
std::vector<std::string> config_keys();

/// Named configurations. "paper-desk" is the mountain car acceptance run,
/// "paper-desk-point-mass" the point-mass repetition probe.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

std::string sha256_hex(const std::string& bytes);

}  // namespace sdar
