#pragma once

// Subcommands of the `mcb` tool. Every command reads an optional JSON config
// (flags override its values) and writes its artifacts under the output
// directory. Outputs are a pure function of (config, seed).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mcb::cli {

struct CommonOptions {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = ".";
  bool oracle = false;
  bool trace = false;
};

/// Thrown for invalid configs or inputs; the CLI maps it to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Merged config: file contents (if any) with relative paths resolved against
/// the config file's directory.
nlohmann::json load_config(const CommonOptions& opts);

int cmd_gen_dist(const nlohmann::json& cfg, const CommonOptions& opts, std::ostream& log);
int cmd_train(const nlohmann::json& cfg, const CommonOptions& opts, std::ostream& log);
int cmd_sample(const nlohmann::json& cfg, const CommonOptions& opts, std::ostream& log);
int cmd_sweep(const nlohmann::json& cfg, const CommonOptions& opts, std::ostream& log);
/// Exit status 0 iff every check passes its tolerance, 1 otherwise.
int cmd_verify(const nlohmann::json& cfg, const CommonOptions& opts, std::ostream& log);

/// Full command line entry point (argv[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

}  // namespace mcb::cli
