#include "fedstat/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fedstat/errors.hpp"

namespace fedstat {

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot write " + path.string());
  out << str();
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ArgumentError("csv has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  // snprintf uses the C locale's '.' unless the program changed it.
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) {
        throw FormatError(path.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw FormatError(path.string() + ": empty file");
  return t;
}

// ------------------------------------------------------------------ synth

namespace {

template <class T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

}  // namespace

CsvTable synth_comparison_table(std::span<const SynthCell> cells) {
  std::vector<TaskKind> tasks;
  std::vector<SetupKind> setups;
  for (const auto& c : cells) {
    push_unique(tasks, c.task);
    push_unique(setups, c.setup);
  }
  CsvTable t;
  t.header = {"task", "metric"};
  for (SetupKind s : setups) t.header.push_back(to_string(s));
  for (TaskKind task : tasks) {
    std::vector<std::string> row{to_string(task), head_for(task) == Head::Regression ? "rmse" : "accuracy"};
    for (SetupKind s : setups) {
      auto it = std::find_if(cells.begin(), cells.end(),
                             [&](const SynthCell& c) { return c.task == task && c.setup == s; });
      row.push_back(it == cells.end() || it->result.reports.empty()
                        ? "NA"
                        : format_metric(it->result.reports.back().global_mean));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable synth_rounds_table(std::span<const SynthCell> cells) {
  CsvTable t;
  t.header = {"task", "setup", "round", "cluster", "metric", "value"};
  for (const auto& c : cells) {
    for (const auto& r : c.result.reports) {
      for (std::size_t k = 0; k < r.per_cluster_mean.size(); ++k) {
        t.rows.push_back({to_string(c.task), to_string(c.setup), std::to_string(r.round), std::to_string(k), r.metric,
                          format_metric(r.per_cluster_mean[k])});
      }
      t.rows.push_back({to_string(c.task), to_string(c.setup), std::to_string(r.round), "all", r.metric,
                        format_metric(r.global_mean)});
    }
  }
  return t;
}

// ------------------------------------------------------------------ emnist

namespace {

double range_accuracy(const emnist::ClassTally& t, emnist::ClassRange range) {
  std::size_t c = 0, n = 0;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    c += t.correct[i];
    n += t.total[i];
  }
  return n == 0 ? std::nan("") : static_cast<double>(c) / static_cast<double>(n);
}

std::vector<std::string> setup_header(const emnist::EmnistResult& r, std::vector<std::string> lead) {
  for (const auto& s : r.setups) lead.push_back(emnist::to_string(s.setup));
  return lead;
}

}  // namespace

CsvTable emnist_comparison_table(const emnist::EmnistResult& r) {
  CsvTable t;
  t.header = {"setup", "stats", "accuracy", "numbers", "lowercase", "uppercase"};
  for (const auto& s : r.setups) {
    t.rows.push_back({emnist::to_string(s.setup), s.label, format_metric(s.accuracy),
                      format_metric(range_accuracy(s.classes, emnist::class_range(emnist::Group::Numbers))),
                      format_metric(range_accuracy(s.classes, emnist::class_range(emnist::Group::Lowercase))),
                      format_metric(range_accuracy(s.classes, emnist::class_range(emnist::Group::Uppercase)))});
  }
  return t;
}

CsvTable emnist_characters_table(const emnist::EmnistResult& r) {
  CsvTable t;
  t.header = setup_header(r, {"character", "group", "support"});
  std::string all;
  for (std::size_t c = 0; c < emnist::kNumClasses; ++c) all += emnist::class_char(c);
  for (const auto& row : emnist::confusion_report(r.setups, all)) {
    std::vector<std::string> cells{std::string(1, row.ch), emnist::to_string(emnist::group_of(emnist::class_of(row.ch))),
                                   std::to_string(row.support)};
    for (double a : row.accuracy) cells.push_back(format_metric(a));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

CsvTable emnist_triplets_table(const emnist::EmnistResult& r, const std::vector<std::string>& triplets) {
  CsvTable t;
  t.header = setup_header(r, {"set", "character", "support"});
  for (const auto& set : triplets) {
    for (const auto& row : emnist::confusion_report(r.setups, set)) {
      std::vector<std::string> cells{set, std::string(1, row.ch), std::to_string(row.support)};
      for (double a : row.accuracy) cells.push_back(format_metric(a));
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

CsvTable emnist_sweep_table(const emnist::EmnistResult& r) {
  CsvTable t;
  t.header = {"nc", "stats", "accuracy"};
  for (const auto& s : r.sweep) t.rows.push_back({std::to_string(s.nc), s.label, format_metric(s.accuracy)});
  return t;
}

CsvTable emnist_dummies_table(const emnist::EmnistResult& r) {
  CsvTable t;
  t.header = {"dummy", "accuracy"};
  for (const auto& s : r.dummies) t.rows.push_back({emnist::to_string(s.dummy), format_metric(s.accuracy)});
  return t;
}

// ---------------------------------------------------------------- manifest

std::filesystem::path write_manifest_entry(const std::filesystem::path& dir, const ManifestEntry& entry) {
  const auto path = dir / "manifest.json";
  nlohmann::json doc;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error&) {
      doc = nlohmann::json::object();
    }
  }
  if (!doc.is_object()) doc = nlohmann::json::object();
  doc["fedstat_version"] = FEDSTAT_VERSION;
  nlohmann::json kept = nlohmann::json::array();
  if (doc.contains("experiments") && doc["experiments"].is_array()) {
    for (const auto& e : doc["experiments"])
      if (e.value("track", "") != entry.track) kept.push_back(e);
  }
  nlohmann::json e;
  e["track"] = entry.track;
  e["seed"] = entry.seed;
  e["wall_seconds"] = std::round(entry.wall_seconds * 1000.0) / 1000.0;
  e["data_source"] = entry.data_source;
  e["config"] = entry.config;
  e["outputs"] = nlohmann::json::object();
  for (const auto& [name, file] : entry.outputs) e["outputs"][name] = file;
  kept.push_back(std::move(e));
  std::stable_sort(kept.begin(), kept.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
    return a.value("track", "") < b.value("track", "");
  });
  doc["experiments"] = std::move(kept);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  return path;
}

namespace {

struct Ranked {
  std::string track;
  std::string task;
  std::string metric;
  std::vector<std::pair<std::string, double>> entries;
};

void rank(Ranked& r) {
  const bool lower_better = r.metric == "rmse";
  std::stable_sort(r.entries.begin(), r.entries.end(), [&](const auto& a, const auto& b) {
    if (std::isnan(a.second)) return false;
    if (std::isnan(b.second)) return true;
    return lower_better ? a.second < b.second : a.second > b.second;
  });
}

double parse_value(const std::string& s) {
  if (s == "NA") return std::nan("");
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw FormatError("not a number: '" + s + "'");
  }
}

}  // namespace

std::string summarize_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw MissingInputError("cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(manifest.string() + ": not valid JSON");
  }
  const auto base = manifest.parent_path();
  if (!doc.contains("experiments") || !doc["experiments"].is_array() || doc["experiments"].empty()) {
    return "no experiments in " + manifest.string() + "\n";
  }

  std::vector<Ranked> tables;
  for (const auto& e : doc["experiments"]) {
    const std::string track = e.value("track", "");
    if (!e.contains("outputs") || !e["outputs"].contains("comparison")) {
      throw FormatError(manifest.string() + ": experiment '" + track + "' lists no comparison table");
    }
    const auto table = read_csv(base / e["outputs"]["comparison"].get<std::string>());
    if (track == "synth") {
      for (const auto& row : table.rows) {
        Ranked r{track, row[0], row[1], {}};
        for (std::size_t c = 2; c < table.header.size(); ++c) r.entries.emplace_back(table.header[c], parse_value(row[c]));
        rank(r);
        tables.push_back(std::move(r));
      }
    } else {
      Ranked r{track, track, "accuracy", {}};
      const std::size_t setup = table.column("setup"), acc = table.column("accuracy");
      for (const auto& row : table.rows) r.entries.emplace_back(row[setup], parse_value(row[acc]));
      rank(r);
      tables.push_back(std::move(r));
    }
  }

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %-16s %-9s %4s  %-12s %s\n", "track", "task", "metric", "rank", "setup", "value");
  out += buf;
  for (const auto& t : tables) {
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%-8s %-16s %-9s %4zu  %-12s %s\n", t.track.c_str(), t.task.c_str(),
                    t.metric.c_str(), i + 1, t.entries[i].first.c_str(), format_metric(t.entries[i].second).c_str());
      out += buf;
    }
  }
  return out;
}

}  // namespace fedstat
