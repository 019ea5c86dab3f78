#pragma once

// Command-line front end. Every command reads and writes files in one run
// directory (--out-dir); inputs default to the files earlier commands wrote
// there.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "asdmeta/cv.hpp"
#include "asdmeta/embed.hpp"
#include "asdmeta/forest.hpp"
#include "asdmeta/ga.hpp"
#include "asdmeta/hier.hpp"
#include "asdmeta/meta.hpp"
#include "asdmeta/synth.hpp"
#include "asdmeta/tabular.hpp"

namespace asdmeta::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kRuntimeError = 2 };

/// Bad configuration (exit code 1).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A required input file or upstream artifact is absent (exit code 2).
class MissingInput : public std::runtime_error {
 public:
  explicit MissingInput(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path out_dir = ".";
  bool quiet = false;

  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> phenotypes;
  std::optional<std::filesystem::path> scan_params;

  std::string study = "sites";
  SynthConfig synth;
  SizeQualityConfig size_quality;

  GAConfig ga;
  ForestConfig forest;
  CVOptions cv;
  HierConfig hier;
  BootstrapConfig bootstrap;
  EmbeddingConfig embed;

  /// Effective value of every echoed key (all keys except seed, threads
  /// and out_dir).
  std::map<std::string, std::string> values;

  std::filesystem::path features_path() const;
  std::filesystem::path phenotypes_path() const;
  std::filesystem::path scan_params_path() const;
  std::filesystem::path artifact(const std::string& name) const { return out_dir / name; }
};

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
/// Throws ConfigError on malformed or repeated keys.
std::map<std::string, std::string> parse_config_text(std::string_view text);

/// Every recognized key with its default value.
const std::map<std::string, std::string>& default_values();

/// Builds and validates a RunConfig from explicitly set keys (unset keys keep
/// their defaults). Throws ConfigError naming the offending key.
RunConfig make_config(const std::map<std::string, std::string>& values);

/// '#' comment lines heading every CSV output: version, command, seed and
/// the effective configuration.
std::string preamble(const RunConfig& config, const std::string& command);

void cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_select(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_bootstrap(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_correlate(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_embed(const RunConfig& config, std::ostream& out, std::ostream& err);
void cmd_report(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses arguments (args[0] is the program name), runs the subcommand and
/// maps failures to exit codes with a JSON error object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asdmeta::cli
