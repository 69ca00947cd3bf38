#pragma once

// The EMNIST comparison: a conditional CNN that sees each client's
// principal-component statistics against reference CNNs fed a dummy vector
// (one global model, one per group, one per client).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fedstat/emnist/cnn.hpp"
#include "fedstat/emnist/dataset.hpp"
#include "fedstat/federation.hpp"

namespace fedstat::emnist {

enum class DummyKind { Zeros, GlobalPC };
enum class EmnistSetup { Conditional, Global, Cluster, Client };

std::string to_string(DummyKind d);
std::string to_string(EmnistSetup s);

struct EmnistConfig {
  std::filesystem::path data_dir = "data/emnist";
  PartitionOptions partition{};
  /// Principal components in the conditional model's statistics.
  std::size_t components = 1;
  /// What the reference models receive in place of statistics.
  DummyKind dummy = DummyKind::Zeros;
  std::size_t rounds = 10;
  std::size_t local_epochs = 3;
  std::size_t batch_size = 5;
  double lr = 0.01;
  double wd = 0.001;
  Aggregation aggregation = Aggregation::FedAvg;
  std::uint64_t seed = 42;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t conv3 = 32;
  std::size_t kernel = 3;
  std::vector<std::string> triplets{"zZ2", "iI1"};
  /// Extra runs of the conditional model, one per value; 0 means the dummy.
  std::vector<std::size_t> nc_sweep{};
  /// Also train the global reference with the other dummy kind.
  bool compare_dummies = false;
  /// Synthetic fallback only.
  std::size_t glyph_variants = 2;
  double glyph_distortion = 1.0;
  unsigned threads = 0;

  void validate() const;
  /// Architecture for a statistics vector of length mu_dim.
  CnnArch arch(std::size_t mu_dim) const;
  /// Glyph counts large enough for the configured partition.
  GlyphOptions glyph_options() const;
};

/// Per-class test hits.
struct ClassTally {
  std::array<std::size_t, kNumClasses> correct{};
  std::array<std::size_t, kNumClasses> total{};

  void add(std::size_t label, std::size_t predicted);
  /// NaN when the class has no test samples.
  double accuracy(std::size_t label) const;
  double overall() const;
};

/// Tallies every client's test rows under a prediction function.
ClassTally tally(std::span<const ClientShard> shards,
                 const std::function<std::vector<std::size_t>(const ClientShard&)>& predict);

struct SetupResult {
  EmnistSetup setup = EmnistSetup::Conditional;
  std::string label;
  std::size_t components = 0;
  double accuracy = 0.0;
  std::vector<double> per_client;
  ClassTally classes;
};

/// Trains one set-up on the clients. nc is the conditional model's
/// component count; references always get the dummy.
SetupResult run_setup(EmnistSetup setup, std::span<const EmnistClient> clients, const EmnistConfig& config,
                      std::size_t nc, DummyKind dummy);

struct CharRow {
  char ch = '?';
  std::size_t support = 0;
  std::vector<double> accuracy;  // one per set-up, in input order
};

/// Per-character accuracy of each set-up for the characters in `chars`.
std::vector<CharRow> confusion_report(std::span<const SetupResult> setups, std::string_view chars);

struct SweepRow {
  std::string label;
  std::size_t nc = 0;
  DummyKind dummy = DummyKind::Zeros;
  double accuracy = 0.0;
};

/// One conditional run per nc value at the same seed (nc 0 trains with the
/// configured dummy).
std::vector<SweepRow> component_sweep(std::span<const EmnistClient> clients, const EmnistConfig& config,
                                      std::span<const std::size_t> nc_values);

struct EmnistResult {
  bool synthetic = false;
  std::string source;
  std::vector<SetupResult> setups;  // conditional, global, cluster, client
  std::vector<SweepRow> sweep;
  std::vector<SweepRow> dummies;  // global reference under each dummy kind
};

/// Real EMNIST from config.data_dir, or synthetic glyphs when the files are
/// missing and fallback is allowed (MissingInputError otherwise).
EmnistData obtain_data(const EmnistConfig& config, bool allow_fallback);

EmnistResult run_emnist(const EmnistData& data, const EmnistConfig& config);

}  // namespace fedstat::emnist
