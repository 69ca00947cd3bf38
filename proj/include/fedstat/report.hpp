#pragma once

// CSV tables and the run manifest.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedstat/emnist/experiment.hpp"
#include "fedstat/federation.hpp"

namespace fedstat {

/// Comma-separated, '.' decimals, header row, no quoting (cells never
/// contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
  void write(const std::filesystem::path& path) const;
  /// Index of a header cell; ArgumentError when absent.
  std::size_t column(const std::string& name) const;
};

/// Four decimals; "NA" for NaN.
std::string format_metric(double v);

/// MissingInputError when the file cannot be opened, FormatError on a
/// ragged row.
CsvTable read_csv(const std::filesystem::path& path);

struct SynthCell {
  TaskKind task = TaskKind::Regression;
  SetupKind setup = SetupKind::BaselineGlobal;
  RunResult result;
};

/// task, metric, then one column per set-up.
CsvTable synth_comparison_table(std::span<const SynthCell> cells);
/// task, setup, round, cluster ("all" for the mean over clients), value.
CsvTable synth_rounds_table(std::span<const SynthCell> cells);

/// setup, accuracy and per-group accuracy.
CsvTable emnist_comparison_table(const emnist::EmnistResult& r);
/// Every character with its group and per-set-up accuracy.
CsvTable emnist_characters_table(const emnist::EmnistResult& r);
CsvTable emnist_triplets_table(const emnist::EmnistResult& r, const std::vector<std::string>& triplets);
CsvTable emnist_sweep_table(const emnist::EmnistResult& r);
CsvTable emnist_dummies_table(const emnist::EmnistResult& r);

struct ManifestEntry {
  std::string track;
  nlohmann::json config;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::string data_source;
  /// Output name -> file name relative to the manifest.
  std::vector<std::pair<std::string, std::string>> outputs;
};

/// Adds or replaces the entry for entry.track in <dir>/manifest.json.
std::filesystem::path write_manifest_entry(const std::filesystem::path& dir, const ManifestEntry& entry);

/// Ranked comparison of every experiment in a manifest.
std::string summarize_manifest(const std::filesystem::path& manifest);

}  // namespace fedstat
