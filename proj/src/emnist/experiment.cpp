#include "fedstat/emnist/experiment.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "fedstat/errors.hpp"

namespace fedstat::emnist {

namespace {

constexpr std::uint64_t kInitStreamLabel = 0x636e6e696e6974;

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("config field '" + field + "': " + why);
}

}  // namespace

std::string to_string(DummyKind d) { return d == DummyKind::Zeros ? "zeros" : "global_pc"; }

std::string to_string(EmnistSetup s) {
  switch (s) {
    case EmnistSetup::Conditional: return "conditional";
    case EmnistSetup::Global: return "global";
    case EmnistSetup::Cluster: return "cluster";
    case EmnistSetup::Client: return "client";
  }
  return "unknown";
}

void EmnistConfig::validate() const {
  require(partition.clients_per_group > 0, "clients_per_group", "must be positive");
  require(partition.points_per_client > 0, "points_per_client", "must be positive");
  require(partition.test_per_client > 0, "test_per_client", "must be positive");
  require(partition.image_size == 14 || partition.image_size == 28, "image_size", "must be 14 or 28");
  require(components > 0, "components", "must be positive");
  require(local_epochs > 0, "local_epochs", "must be positive");
  require(batch_size > 0, "batch_size", "must be positive");
  require(batch_size <= partition.points_per_client, "batch_size", "must not exceed points_per_client");
  require(std::isfinite(lr) && lr > 0.0, "lr", "must be a positive number");
  require(std::isfinite(wd) && wd >= 0.0, "wd", "must be a non-negative number");
  require(conv1 > 0 && conv2 > 0 && conv3 > 0, "conv channels", "must be positive");
  require(kernel > 0, "kernel", "must be positive");
  require(glyph_variants > 0, "glyph_variants", "must be positive");
  require(std::isfinite(glyph_distortion) && glyph_distortion >= 0.0, "glyph_distortion",
          "must be a non-negative number");
  for (const auto& t : triplets) {
    require(!t.empty(), "triplets", "empty character set");
    for (char c : t) {
      const bool ok = (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
      require(ok, "triplets", std::string("'") + c + "' is not an EMNIST character");
    }
  }
  try {
    arch(0).validate();
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("config field 'kernel': ") + e.what());
  }
}

CnnArch EmnistConfig::arch(std::size_t mu_dim) const {
  CnnArch a;
  a.height = a.width = partition.image_size;
  a.conv1 = conv1;
  a.conv2 = conv2;
  a.conv3 = conv3;
  a.kernel = kernel;
  a.mu_dim = mu_dim;
  a.classes = kNumClasses;
  return a;
}

GlyphOptions EmnistConfig::glyph_options() const {
  // The ten digit classes are the tightest group.
  auto per_class = [&](std::size_t n) { return (partition.clients_per_group * n + 9) / 10; };
  GlyphOptions g;
  g.train_per_class = per_class(partition.points_per_client);
  g.test_per_class = per_class(partition.test_per_client);
  g.size = 28;
  g.variants = glyph_variants;
  g.distortion = glyph_distortion;
  g.seed = seed;
  return g;
}

// ------------------------------------------------------------------ tallies

void ClassTally::add(std::size_t label, std::size_t predicted) {
  if (label >= kNumClasses) throw ArgumentError("ClassTally: label " + std::to_string(label) + " out of range");
  ++total[label];
  if (predicted == label) ++correct[label];
}

double ClassTally::accuracy(std::size_t label) const {
  if (total.at(label) == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(correct[label]) / static_cast<double>(total[label]);
}

double ClassTally::overall() const {
  std::size_t c = 0, t = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    c += correct[i];
    t += total[i];
  }
  return t == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(t);
}

ClassTally tally(std::span<const ClientShard> shards,
                 const std::function<std::vector<std::size_t>(const ClientShard&)>& predict) {
  ClassTally t;
  for (const auto& s : shards) {
    const auto pred = predict(s);
    if (pred.size() != s.y_test.size()) throw DimensionError("tally: prediction count does not match test rows");
    for (std::size_t r = 0; r < pred.size(); ++r) t.add(static_cast<std::size_t>(s.y_test[r]), pred[r]);
  }
  return t;
}

// ------------------------------------------------------------------ set-ups

namespace {

StatsRecipe dummy_recipe(std::span<const ClientShard> shards, const EmnistConfig& config, DummyKind dummy) {
  if (dummy == DummyKind::GlobalPC) return StatsRecipe::dummy_global_pc(pooled_pc_stats(shards, config.components));
  const std::size_t d = shards.front().x_train.cols();
  return StatsRecipe::dummy_zeros(config.components * (d + kNumClasses));
}

// Client subsets that are federated together.
std::vector<std::vector<std::size_t>> federations(EmnistSetup setup, std::span<const ClientShard> shards) {
  std::vector<std::vector<std::size_t>> out;
  switch (setup) {
    case EmnistSetup::Conditional:
    case EmnistSetup::Global: {
      out.emplace_back();
      for (std::size_t i = 0; i < shards.size(); ++i) out.back().push_back(i);
      break;
    }
    case EmnistSetup::Cluster: {
      std::map<std::size_t, std::vector<std::size_t>> by;
      for (std::size_t i = 0; i < shards.size(); ++i) by[shards[i].cluster_id].push_back(i);
      for (auto& [_, v] : by) out.push_back(std::move(v));
      break;
    }
    case EmnistSetup::Client:
      for (std::size_t i = 0; i < shards.size(); ++i) out.push_back({i});
      break;
  }
  return out;
}

}  // namespace

SetupResult run_setup(EmnistSetup setup, std::span<const EmnistClient> clients, const EmnistConfig& config,
                      std::size_t nc, DummyKind dummy) {
  if (clients.empty()) throw ArgumentError("run_setup: no clients");
  auto shards = shards_of(clients);
  const bool conditional = setup == EmnistSetup::Conditional && nc > 0;
  const StatsRecipe recipe =
      conditional ? StatsRecipe::principal_components(nc) : dummy_recipe(shards, config, dummy);
  prepare(shards, recipe);

  const CnnArch arch = config.arch(shards.front().mu().size());
  SeededRng init_rng = derive_stream(config.seed, {kInitStreamLabel});
  const ParamSet init = to_param_set(init_cnn(arch, init_rng));

  TrainOptions opts;
  opts.rounds = config.rounds;
  opts.local.epochs = config.local_epochs;
  opts.local.batch_size = config.batch_size;
  opts.local.optimizer = OptimizerKind::AdamW;
  opts.local.adam.lr = config.lr;
  opts.local.adam.weight_decay = config.wd;
  opts.aggregation = config.aggregation;
  opts.seed = config.seed;
  opts.threads = config.threads;

  SetupResult result;
  result.setup = setup;
  result.components = conditional ? nc : 0;
  result.label = conditional ? to_string(setup) : to_string(setup) + "/" + to_string(dummy);
  result.per_client.assign(shards.size(), 0.0);

  for (const auto& members : federations(setup, shards)) {
    std::vector<CnnObjective> objectives;
    objectives.reserve(members.size());
    for (std::size_t i : members) objectives.emplace_back(arch, shards[i]);
    std::vector<const LocalObjective*> ptrs;
    for (const auto& o : objectives) ptrs.push_back(&o);
    const auto trained = train_federated(ptrs, init, opts, nullptr);

    for (std::size_t i : members) {
      const auto pred = cnn_predict(trained.params, arch, shards[i]);
      std::size_t hits = 0;
      for (std::size_t r = 0; r < pred.size(); ++r) {
        const auto label = static_cast<std::size_t>(shards[i].y_test[r]);
        result.classes.add(label, pred[r]);
        hits += pred[r] == label;
      }
      result.per_client[i] = static_cast<double>(hits) / static_cast<double>(pred.size());
    }
  }
  result.accuracy = result.classes.overall();
  return result;
}

std::vector<CharRow> confusion_report(std::span<const SetupResult> setups, std::string_view chars) {
  std::vector<CharRow> rows;
  for (char ch : chars) {
    const std::size_t label = class_of(ch);
    CharRow row;
    row.ch = ch;
    row.support = setups.empty() ? 0 : setups.front().classes.total[label];
    for (const auto& s : setups) row.accuracy.push_back(s.classes.accuracy(label));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepRow> component_sweep(std::span<const EmnistClient> clients, const EmnistConfig& config,
                                      std::span<const std::size_t> nc_values) {
  std::vector<SweepRow> rows;
  for (std::size_t nc : nc_values) {
    const auto r = run_setup(EmnistSetup::Conditional, clients, config, nc, config.dummy);
    rows.push_back({r.label, nc, config.dummy, r.accuracy});
  }
  return rows;
}

EmnistData obtain_data(const EmnistConfig& config, bool allow_fallback) {
  const auto paths = EmnistPaths::in_directory(config.data_dir);
  if (paths.missing().empty()) return load_emnist(paths);
  if (!allow_fallback) {
    std::string msg = "EMNIST files not found in " + config.data_dir.string() + ":";
    for (const auto& p : paths.missing()) msg += " " + p.filename().string();
    throw MissingInputError(msg);
  }
  return synthetic_glyphs(config.glyph_options());
}

EmnistResult run_emnist(const EmnistData& data, const EmnistConfig& config) {
  config.validate();
  const auto clients = partition_clients(data, config.partition, config.seed);

  EmnistResult out;
  out.synthetic = data.synthetic;
  out.source = data.source;
  for (EmnistSetup s : {EmnistSetup::Conditional, EmnistSetup::Global, EmnistSetup::Cluster, EmnistSetup::Client}) {
    out.setups.push_back(run_setup(s, clients, config, config.components, config.dummy));
  }
  for (std::size_t nc : config.nc_sweep) {
    // Runs that coincide with a set-up above are not repeated.
    if (nc == config.components) {
      out.sweep.push_back({out.setups[0].label, nc, config.dummy, out.setups[0].accuracy});
    } else if (nc == 0) {
      out.sweep.push_back({out.setups[1].label, nc, config.dummy, out.setups[1].accuracy});
    } else {
      const std::size_t one[] = {nc};
      out.sweep.push_back(component_sweep(clients, config, one).front());
    }
  }
  if (config.compare_dummies) {
    for (DummyKind d : {DummyKind::Zeros, DummyKind::GlobalPC}) {
      // The configured dummy was already trained as the global reference.
      const double acc = d == config.dummy ? out.setups[1].accuracy
                                           : run_setup(EmnistSetup::Global, clients, config, 0, d).accuracy;
      out.dummies.push_back({"global/" + to_string(d), 0, d, acc});
    }
  }
  return out;
}

}  // namespace fedstat::emnist
