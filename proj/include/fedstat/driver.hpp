#pragma once

// Whole-track runs behind the command-line tool.

#include <filesystem>
#include <vector>

#include "fedstat/config.hpp"
#include "fedstat/report.hpp"

namespace fedstat {

/// Every (task, set-up) cell of the synthetic comparison, in config order.
std::vector<SynthCell> run_synth(const SynthConfig& config);

/// Writes the synthetic tables into dir and returns the manifest entry.
ManifestEntry write_synth(const SynthConfig& config, std::span<const SynthCell> cells,
                          const std::filesystem::path& dir, double wall_seconds);

ManifestEntry write_emnist(const emnist::EmnistConfig& config, const emnist::EmnistResult& result,
                           const std::filesystem::path& dir, double wall_seconds);

}  // namespace fedstat
