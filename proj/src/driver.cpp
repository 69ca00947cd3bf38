#include "fedstat/driver.hpp"

namespace fedstat {

std::vector<SynthCell> run_synth(const SynthConfig& config) {
  config.validate();
  std::vector<SynthCell> cells;
  for (TaskKind task : config.tasks) {
    for (SetupKind setup : config.setups) {
      cells.push_back({task, setup, run(config.cell(task, setup))});
    }
  }
  return cells;
}

ManifestEntry write_synth(const SynthConfig& config, std::span<const SynthCell> cells,
                          const std::filesystem::path& dir, double wall_seconds) {
  std::filesystem::create_directories(dir);
  ManifestEntry e;
  e.track = "synth";
  e.config = to_json(config);
  e.seed = config.base.seed;
  e.wall_seconds = wall_seconds;
  e.data_source = "synthetic";
  synth_comparison_table(cells).write(dir / "synth_comparison.csv");
  synth_rounds_table(cells).write(dir / "synth_rounds.csv");
  e.outputs = {{"comparison", "synth_comparison.csv"}, {"rounds", "synth_rounds.csv"}};
  return e;
}

ManifestEntry write_emnist(const emnist::EmnistConfig& config, const emnist::EmnistResult& result,
                           const std::filesystem::path& dir, double wall_seconds) {
  std::filesystem::create_directories(dir);
  ManifestEntry e;
  e.track = "emnist";
  e.config = to_json(config);
  e.seed = config.seed;
  e.wall_seconds = wall_seconds;
  e.data_source = result.source;
  emnist_comparison_table(result).write(dir / "emnist_comparison.csv");
  emnist_characters_table(result).write(dir / "emnist_characters.csv");
  emnist_triplets_table(result, config.triplets).write(dir / "emnist_triplets.csv");
  e.outputs = {{"comparison", "emnist_comparison.csv"},
               {"characters", "emnist_characters.csv"},
               {"triplets", "emnist_triplets.csv"}};
  if (!result.sweep.empty()) {
    emnist_sweep_table(result).write(dir / "emnist_sweep.csv");
    e.outputs.emplace_back("sweep", "emnist_sweep.csv");
  }
  if (!result.dummies.empty()) {
    emnist_dummies_table(result).write(dir / "emnist_dummies.csv");
    e.outputs.emplace_back("dummies", "emnist_dummies.csv");
  }
  return e;
}

}  // namespace fedstat
