#include "fedstat/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fedstat/errors.hpp"

namespace fedstat {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

// Pulls typed fields out of an object and remembers which keys were used.
class Reader {
 public:
  explicit Reader(const nlohmann::json& doc) : doc_(doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  }

  void count(const char* key, std::size_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void threads(const char* key, unsigned& out) {
    std::size_t t = out;
    count(key, t);
    out = static_cast<unsigned>(t);
  }
  void number(const char* key, double& out) {
    if (const auto* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const auto* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void counts(const char* key, std::vector<std::size_t>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer() || e.get<long long>() < 0) fail(key, "expected an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void strings(const char* key, std::vector<std::string>& out) {
    if (const auto* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of strings");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) fail(key, "expected an array of strings");
        out.push_back(e.get<std::string>());
      }
    }
  }
  template <class Enum, class Parse>
  void choice(const char* key, Enum& out, Parse parse) {
    std::string s;
    if (find(key) == nullptr) return;
    string(key, s);
    out = parse(key, s);
  }

  void reject_unknown() const {
    for (const auto& [k, _] : doc_.items())
      if (!used_.count(k)) fail(k, "unknown field");
  }

 private:
  const nlohmann::json* find(const char* key) {
    used_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  const nlohmann::json& doc_;
  std::set<std::string> used_;
};

template <class Enum>
Enum parse_enum(const std::string& field, const std::string& s, std::initializer_list<Enum> options,
                std::string (*name)(Enum)) {
  std::string allowed;
  for (Enum e : options) {
    if (name(e) == s) return e;
    allowed += (allowed.empty() ? "" : ", ") + name(e);
  }
  fail(field, "'" + s + "' is not one of " + allowed);
}

std::string name_task(TaskKind t) { return to_string(t); }
std::string name_setup(SetupKind s) { return to_string(s); }
std::string name_stats(StatsKind s) { return to_string(s); }
std::string name_agg(Aggregation a) { return to_string(a); }
std::string name_opt(OptimizerKind o) { return to_string(o); }
std::string name_dummy(emnist::DummyKind d) { return emnist::to_string(d); }

TaskKind parse_task(const std::string& f, const std::string& s) {
  return parse_enum(f, s, {TaskKind::Regression, TaskKind::Classification}, name_task);
}
SetupKind parse_setup(const std::string& f, const std::string& s) {
  return parse_enum(f, s,
                    {SetupKind::BaselineGlobal, SetupKind::BaselineCluster, SetupKind::BaselineClient,
                     SetupKind::CondLinear, SetupKind::Ensemble, SetupKind::Mlp},
                    name_setup);
}

}  // namespace

void SynthConfig::validate() const {
  if (tasks.empty()) fail("tasks", "must list at least one task");
  if (setups.empty()) fail("setups", "must list at least one set-up");
  for (TaskKind t : tasks)
    for (SetupKind s : setups) cell(t, s).validate();
}

FederationConfig SynthConfig::cell(TaskKind task, SetupKind setup) const {
  FederationConfig c = base;
  c.task = task;
  c.model = setup;
  return c;
}

SynthConfig parse_synth_config(const nlohmann::json& doc) {
  SynthConfig out;
  FederationConfig& c = out.base;
  Reader r(doc);
  std::string kind = "synth";
  r.string("experiment", kind);
  if (kind != "synth") fail("experiment", "expected \"synth\", got \"" + kind + "\"");
  r.u64("seed", c.seed);
  r.count("clusters", c.clusters);
  r.count("peers_per_cluster", c.peers_per_cluster);
  r.count("n_per_client", c.n_per_client);
  r.count("n_test", c.n_test);
  r.count("features", c.features);
  r.choice("stats", c.stats, [](const std::string& f, const std::string& s) {
    return parse_enum(f, s, {StatsKind::CrossCovariance, StatsKind::PrincipalComponents, StatsKind::Moments},
                      name_stats);
  });
  r.count("stats_components", c.stats_components);
  r.count("rounds", c.rounds);
  r.count("local_epochs", c.local_epochs);
  r.count("batch_size", c.batch_size);
  r.number("lr", c.lr);
  r.number("wd", c.wd);
  r.choice("aggregation", c.aggregation, [](const std::string& f, const std::string& s) {
    return parse_enum(f, s, {Aggregation::FedAvg, Aggregation::FedSgd}, name_agg);
  });
  r.choice("optimizer", c.optimizer, [](const std::string& f, const std::string& s) {
    return parse_enum(f, s, {OptimizerKind::AdamW, OptimizerKind::Sgd}, name_opt);
  });
  r.count("ensemble_width", c.ensemble_width);
  r.counts("mlp_hidden", c.mlp_hidden);
  r.count("baseline_epochs", c.baseline_epochs);
  r.count("baseline_batch", c.baseline_batch);
  r.threads("threads", c.threads);

  std::vector<std::string> names;
  r.strings("tasks", names);
  if (doc.contains("tasks")) {
    out.tasks.clear();
    for (const auto& n : names) out.tasks.push_back(parse_task("tasks", n));
  }
  names.clear();
  r.strings("setups", names);
  if (doc.contains("setups")) {
    out.setups.clear();
    for (const auto& n : names) out.setups.push_back(parse_setup("setups", n));
  }
  r.reject_unknown();
  out.validate();
  return out;
}

emnist::EmnistConfig parse_emnist_config(const nlohmann::json& doc) {
  emnist::EmnistConfig c;
  Reader r(doc);
  std::string kind = "emnist";
  r.string("experiment", kind);
  if (kind != "emnist") fail("experiment", "expected \"emnist\", got \"" + kind + "\"");
  std::string dir = c.data_dir.string();
  r.string("data_dir", dir);
  c.data_dir = dir;
  r.u64("seed", c.seed);
  r.count("clients_per_group", c.partition.clients_per_group);
  r.count("points_per_client", c.partition.points_per_client);
  r.count("test_per_client", c.partition.test_per_client);
  r.count("image_size", c.partition.image_size);
  r.count("components", c.components);
  r.choice("dummy", c.dummy, [](const std::string& f, const std::string& s) {
    return parse_enum(f, s, {emnist::DummyKind::Zeros, emnist::DummyKind::GlobalPC}, name_dummy);
  });
  r.count("rounds", c.rounds);
  r.count("local_epochs", c.local_epochs);
  r.count("batch_size", c.batch_size);
  r.number("lr", c.lr);
  r.number("wd", c.wd);
  r.choice("aggregation", c.aggregation, [](const std::string& f, const std::string& s) {
    return parse_enum(f, s, {Aggregation::FedAvg, Aggregation::FedSgd}, name_agg);
  });
  r.count("conv1", c.conv1);
  r.count("conv2", c.conv2);
  r.count("conv3", c.conv3);
  r.count("kernel", c.kernel);
  r.strings("triplets", c.triplets);
  r.counts("nc_sweep", c.nc_sweep);
  r.boolean("compare_dummies", c.compare_dummies);
  r.count("glyph_variants", c.glyph_variants);
  r.number("glyph_distortion", c.glyph_distortion);
  r.threads("threads", c.threads);
  r.reject_unknown();
  c.validate();
  return c;
}

nlohmann::json to_json(const SynthConfig& config) {
  const FederationConfig& c = config.base;
  nlohmann::json j;
  j["experiment"] = "synth";
  j["seed"] = c.seed;
  j["clusters"] = c.clusters;
  j["peers_per_cluster"] = c.peers_per_cluster;
  j["n_per_client"] = c.n_per_client;
  j["n_test"] = c.n_test;
  j["features"] = c.features;
  j["stats"] = to_string(c.stats);
  j["stats_components"] = c.stats_components;
  j["rounds"] = c.rounds;
  j["local_epochs"] = c.local_epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["wd"] = c.wd;
  j["aggregation"] = to_string(c.aggregation);
  j["optimizer"] = to_string(c.optimizer);
  j["ensemble_width"] = c.ensemble_width;
  j["mlp_hidden"] = c.mlp_hidden;
  j["baseline_epochs"] = c.baseline_epochs;
  j["baseline_batch"] = c.baseline_batch;
  j["threads"] = c.threads;
  j["tasks"] = nlohmann::json::array();
  for (TaskKind t : config.tasks) j["tasks"].push_back(to_string(t));
  j["setups"] = nlohmann::json::array();
  for (SetupKind s : config.setups) j["setups"].push_back(to_string(s));
  return j;
}

nlohmann::json to_json(const emnist::EmnistConfig& c) {
  nlohmann::json j;
  j["experiment"] = "emnist";
  j["data_dir"] = c.data_dir.string();
  j["seed"] = c.seed;
  j["clients_per_group"] = c.partition.clients_per_group;
  j["points_per_client"] = c.partition.points_per_client;
  j["test_per_client"] = c.partition.test_per_client;
  j["image_size"] = c.partition.image_size;
  j["components"] = c.components;
  j["dummy"] = emnist::to_string(c.dummy);
  j["rounds"] = c.rounds;
  j["local_epochs"] = c.local_epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["wd"] = c.wd;
  j["aggregation"] = to_string(c.aggregation);
  j["conv1"] = c.conv1;
  j["conv2"] = c.conv2;
  j["conv3"] = c.conv3;
  j["kernel"] = c.kernel;
  j["triplets"] = c.triplets;
  j["nc_sweep"] = c.nc_sweep;
  j["compare_dummies"] = c.compare_dummies;
  j["glyph_variants"] = c.glyph_variants;
  j["glyph_distortion"] = c.glyph_distortion;
  j["threads"] = c.threads;
  return j;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
}

}  // namespace fedstat
