#pragma once

// JSON experiment documents. Every field is optional; omitted fields take
// the library defaults and unknown fields are rejected.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedstat/emnist/experiment.hpp"
#include "fedstat/federation.hpp"

namespace fedstat {

/// The synthetic comparison: every listed set-up on every listed task.
struct SynthConfig {
  FederationConfig base;
  std::vector<TaskKind> tasks{TaskKind::Regression, TaskKind::Classification};
  std::vector<SetupKind> setups{SetupKind::BaselineGlobal, SetupKind::BaselineCluster,
                                SetupKind::BaselineClient, SetupKind::CondLinear,
                                SetupKind::Ensemble, SetupKind::Mlp};

  void validate() const;
  /// The configuration of one (task, set-up) cell.
  FederationConfig cell(TaskKind task, SetupKind setup) const;
};

/// ConfigError naming the offending field.
SynthConfig parse_synth_config(const nlohmann::json& doc);
emnist::EmnistConfig parse_emnist_config(const nlohmann::json& doc);

/// Fully resolved echoes, parseable back into an equal configuration.
nlohmann::json to_json(const SynthConfig& config);
nlohmann::json to_json(const emnist::EmnistConfig& config);

/// MissingInputError when the file is absent, ConfigError when it is not
/// valid JSON.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace fedstat
