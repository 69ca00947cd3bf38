#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedstat/config.hpp"
#include "fedstat/errors.hpp"
#include "fedstat/report.hpp"

using namespace fedstat;
using nlohmann::json;

namespace {

std::string config_error(const json& doc, bool emnist = false) {
  try {
    if (emnist) parse_emnist_config(doc);
    else parse_synth_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("synth config defaults and overrides") {
  const auto d = parse_synth_config(json::object());
  CHECK(d.base.rounds == 100);
  CHECK(d.setups.size() == 6);
  CHECK(d.tasks.size() == 2);

  const auto c = parse_synth_config(json::parse(R"({"clusters": 8, "features": 10, "lr": 0.01,
      "setups": ["global", "ensemble"], "tasks": ["classification"], "mlp_hidden": [32]})"));
  CHECK(c.base.clusters == 8);
  CHECK(c.base.lr == 0.01);
  CHECK(c.setups == std::vector<SetupKind>{SetupKind::BaselineGlobal, SetupKind::Ensemble});
  CHECK(c.cell(TaskKind::Classification, SetupKind::Ensemble).task == TaskKind::Classification);
  CHECK(c.base.mlp_hidden == std::vector<std::size_t>{32});

  // The resolved echo parses back to the same configuration.
  const auto again = parse_synth_config(to_json(c));
  CHECK(to_json(again) == to_json(c));
}

TEST_CASE("synth config errors name the field") {
  CHECK(config_error(json::parse(R"({"lr": -1})")).find("'lr'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"rounds": "ten"})")).find("'rounds'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"peers": 3})")).find("'peers'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"setups": ["oracle"]})")).find("'setups'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"batch_size": 500, "n_per_client": 100})")).find("'batch_size'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"experiment": "emnist"})")).find("'experiment'") != std::string::npos);
  CHECK(config_error(json::parse(R"([1, 2])")) != "");
}

TEST_CASE("emnist config") {
  const auto d = parse_emnist_config(json::object());
  CHECK(d.partition.points_per_client == 500);
  CHECK(d.partition.image_size == 14);
  CHECK(d.rounds == 10);
  const auto c = parse_emnist_config(json::parse(R"({"nc_sweep": [0, 1, 2, 4], "dummy": "global_pc",
      "triplets": ["zZ2"], "compare_dummies": true})"));
  CHECK(c.nc_sweep.size() == 4);
  CHECK(c.dummy == emnist::DummyKind::GlobalPC);
  CHECK(c.compare_dummies);
  CHECK(to_json(parse_emnist_config(to_json(c))) == to_json(c));
  CHECK(config_error(json::parse(R"({"dummy": "ones"})"), true).find("'dummy'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"image_size": 20})"), true).find("'image_size'") != std::string::npos);
  CHECK(config_error(json::parse(R"({"triplets": ["z?2"]})"), true).find("'triplets'") != std::string::npos);
}

TEST_CASE("json files") {
  TempDir dir("fedstat_config_test");
  CHECK_THROWS_AS(read_json_file(dir.path / "absent.json"), MissingInputError);
  std::ofstream(dir.path / "bad.json") << "{ not json";
  CHECK_THROWS_AS(read_json_file(dir.path / "bad.json"), ConfigError);
  std::ofstream(dir.path / "ok.json") << R"({"rounds": 3})";
  CHECK(read_json_file(dir.path / "ok.json")["rounds"] == 3);
}

TEST_CASE("metric formatting") {
  CHECK(format_metric(0.12345) == "0.1235");
  CHECK(format_metric(1.0) == "1.0000");
  CHECK(format_metric(-0.00001) == "0.0000");
  CHECK(format_metric(std::nan("")) == "NA");
  CHECK(format_metric(1234.5) == "1234.5000");
}

TEST_CASE("csv tables") {
  CsvTable t{{"a", "b"}, {{"1", "x"}, {"2", "y"}}};
  CHECK(t.str() == "a,b\n1,x\n2,y\n");
  CHECK(t.column("b") == 1);
  CHECK_THROWS(t.column("c"));
  TempDir dir("fedstat_csv_test");
  t.write(dir.path / "t.csv");
  const auto back = read_csv(dir.path / "t.csv");
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK_THROWS_AS(read_csv(dir.path / "absent.csv"), MissingInputError);
}

namespace {

SynthCell cell(TaskKind task, SetupKind setup, double metric) {
  SynthCell c;
  c.task = task;
  c.setup = setup;
  RoundReport r;
  r.metric = task == TaskKind::Regression ? "rmse" : "accuracy";
  r.per_client_metric = {metric, metric};
  r.per_cluster_mean = {metric};
  r.global_mean = metric;
  c.result.reports = {r, r};
  c.result.reports[1].round = 1;
  return c;
}

}  // namespace

TEST_CASE("synth tables") {
  std::vector<SynthCell> cells{cell(TaskKind::Regression, SetupKind::BaselineGlobal, 2.5),
                               cell(TaskKind::Regression, SetupKind::Ensemble, 0.125),
                               cell(TaskKind::Classification, SetupKind::BaselineGlobal, 0.6),
                               cell(TaskKind::Classification, SetupKind::Ensemble, 0.9)};
  const auto cmp = synth_comparison_table(cells);
  CHECK(cmp.header == std::vector<std::string>{"task", "metric", "global", "ensemble"});
  REQUIRE(cmp.rows.size() == 2);
  CHECK(cmp.rows[0] == std::vector<std::string>{"regression", "rmse", "2.5000", "0.1250"});
  CHECK(cmp.rows[1] == std::vector<std::string>{"classification", "accuracy", "0.6000", "0.9000"});
  const auto rounds = synth_rounds_table(cells);
  CHECK(rounds.header.front() == "task");
  CHECK(rounds.rows.size() == 4 * 2 * 2);
}

TEST_CASE("manifest summaries") {
  TempDir dir("fedstat_manifest_test2");
  CHECK_THROWS_AS(summarize_manifest(dir.path / "absent.json"), MissingInputError);
  std::ofstream(dir.path / "empty.json") << R"({"experiments": []})";
  CHECK(summarize_manifest(dir.path / "empty.json").find("no experiments") != std::string::npos);

  std::vector<SynthCell> cells{cell(TaskKind::Regression, SetupKind::BaselineGlobal, 2.5),
                               cell(TaskKind::Regression, SetupKind::BaselineCluster, 0.1),
                               cell(TaskKind::Regression, SetupKind::Ensemble, 0.125)};
  synth_comparison_table(cells).write(dir.path / "synth_comparison.csv");
  ManifestEntry e;
  e.track = "synth";
  e.seed = 42;
  e.outputs = {{"comparison", "synth_comparison.csv"}};
  const auto path = write_manifest_entry(dir.path, e);
  write_manifest_entry(dir.path, e);
  std::ifstream in(path);
  const auto doc = json::parse(in);
  CHECK(doc["experiments"].size() == 1);
  CHECK(doc.contains("fedstat_version"));

  const auto summary = summarize_manifest(path);
  const auto cluster = summary.find("cluster"), ensemble = summary.find("ensemble"), global = summary.find("global");
  CHECK(cluster < ensemble);
  CHECK(ensemble < global);

  std::filesystem::remove(dir.path / "synth_comparison.csv");
  CHECK_THROWS_AS(summarize_manifest(path), MissingInputError);
}
