#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polytx/encoder.hpp"
#include "polytx/train.hpp"

namespace polytx {

/// Everything one CLI run depends on. Serialized verbatim into its manifest.
struct ExperimentConfig {
  std::string command;
  std::vector<std::pair<std::string, std::filesystem::path>> inputs;  // must exist
  std::filesystem::path out_dir;
  std::string preset = "desk";
  std::optional<EncoderConfig> encoder;
  std::optional<TrainConfig> train;
  std::size_t folds = 5;
  std::vector<double> fractions;
  bool reference_rows = true;
  std::uint64_t seed = 42;
  std::vector<std::pair<std::string, std::string>> options;  // remaining flags, as given

  /// Throws IoError for a missing input and BadConfig for a bad preset or
  /// fold count.
  void validate() const;
};

/// "<version>+<git revision>".
std::string version_string();

/// Config snapshot plus version, seed, outputs and wall time. Everything but
/// the wall time is a function of the config.
std::string manifest_json(const ExperimentConfig& config, std::span<const std::filesystem::path> outputs,
                          double wall_seconds);

/// Writes manifest_<command>.json into the output directory and returns its path.
std::filesystem::path write_manifest(const ExperimentConfig& config, std::span<const std::filesystem::path> outputs,
                                     double wall_seconds);

}  // namespace polytx
