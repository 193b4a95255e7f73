#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace adasgd::cli {

enum class Subcommand {
    angle,
    heatmap,
    minnorm,
    ridge_path,
    regret,
    stability,
    theorem_range,
    distance_bound,
    align_mc,
    trajectory,
};

const char* to_string(Subcommand s);
Subcommand subcommand_from_string(const std::string& s);
std::vector<Subcommand> all_subcommands();

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitIo = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AppliedOverride {
    std::string source;  // preset, file or flag
    std::string key;
    nlohmann::json value;
};

struct RunConfig {
    Subcommand subcommand = Subcommand::heatmap;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
    std::filesystem::path out_dir;
    std::string preset;  // empty when none
    nlohmann::json params;
    std::vector<AppliedOverride> overrides;

    /// Everything needed to rerun, as written into the manifest.
    nlohmann::json to_json() const;
};

/// Experiment defaults for a subcommand.
nlohmann::json defaults(Subcommand s);
/// Presets applicable to a subcommand, by name.
std::vector<std::string> preset_names(Subcommand s);
nlohmann::json preset(const std::string& name, Subcommand s);

/// Resolves defaults < preset < config file < flags. `args` excludes the program name.
RunConfig parse_config(const std::vector<std::string>& args);

/// Runs the experiment, writes `<subcommand>.csv` and `manifest.json`, returns the exit status.
int dispatch(const RunConfig& config);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Builds the output table for a subcommand; `checks_passed` is cleared when a bound or theorem check fails.
Table run_experiment(const RunConfig& config, bool& checks_passed);

std::string format_number(double v);
std::string render_csv(const Table& table);
/// Writes through a temporary file and rename; returns the SHA-256 of the content.
std::string emit_csv(const Table& table, const std::filesystem::path& path);
std::string sha256_hex(std::string_view data);

int run_main(int argc, char** argv);

}  // namespace adasgd::cli
