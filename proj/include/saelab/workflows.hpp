#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace saelab::workflows {

/// Command-line overrides; each replaces the matching config key.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::optional<std::size_t> threads;
};

struct CommandResult {
    std::filesystem::path out_dir;      // empty when the command wrote nothing
    std::vector<std::string> files;     // relative to out_dir
    nlohmann::json summary;
};

const std::vector<std::string>& command_names();

/// Runs `command` with a JSON config file. Relative paths inside the config are
/// resolved against the config file's directory. For dataset-info the config
/// path may also be an activation file.
/// Throws saelab::Error subclasses; map them with exit_code_for().
CommandResult run_command(std::string_view command, const std::filesystem::path& config_path,
                          const Overrides& overrides = {});
CommandResult run_command(std::string_view command, const nlohmann::json& config,
                          const std::filesystem::path& base_dir, const Overrides& overrides = {});

}  // namespace saelab::workflows
