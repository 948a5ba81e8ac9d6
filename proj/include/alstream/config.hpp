#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alstream/orchestrator.hpp"

namespace alstream {

// "E1", "E2" (full scale) and "E1-desk", "E2-desk" (1/10 and 1/45 of the
// sample counts, profiles pooled to 512 bins, shortened schedules).
WorkflowConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sets one "section.key" entry from its textual value. Throws ConfigError
// for unknown keys and unparsable values.
void set_config_value(WorkflowConfig& cfg, std::string_view section, std::string_view key,
                      std::string_view value);
// Every accepted "section.key" pair, in a stable order.
std::vector<std::string> config_keys();

// INI file with sections [space] [sim] [train] [al] [workflow] [output].
// The [space] preset key is skipped here; callers pick the base preset
// (see file_preset) before applying the file.
void apply_config_file(WorkflowConfig& cfg, const std::filesystem::path& path);

// ALSTREAM_<SECTION>_<KEY> variables (upper case) for every known key.
// `lookup` defaults to std::getenv.
void apply_env_overrides(WorkflowConfig& cfg,
                         const std::function<std::optional<std::string>(const std::string&)>& lookup = {});

// Reads the optional preset named in a config file without applying it.
std::optional<std::string> file_preset(const std::filesystem::path& path);

// Renders every key with its current value as an INI document.
std::string dump_config(const WorkflowConfig& cfg);

}  // namespace alstream
