// fedstat: run the synthetic or EMNIST comparison from a JSON config, or
// summarize a finished run.

#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "fedstat/config.hpp"
#include "fedstat/driver.hpp"
#include "fedstat/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitMissing = 4;

// FEDSTAT_THREADS caps whatever the config asks for.
unsigned resolve_threads(unsigned configured) {
  const unsigned env = fedstat::threads_from_env();
  if (env == 0) return configured;
  return configured == 0 ? env : std::min(configured, env);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = fedstat::parse_synth_config(fedstat::read_json_file(config_path));
  config.base.threads = resolve_threads(config.base.threads);
  const auto cells = fedstat::run_synth(config);
  const auto entry = fedstat::write_synth(config, cells, out_dir, seconds_since(t0));
  const auto manifest = fedstat::write_manifest_entry(out_dir, entry);
  std::cout << fedstat::synth_comparison_table(cells).str();
  std::cerr << "wrote " << manifest.string() << "\n";
  return kExitOk;
}

int cmd_emnist(const std::string& config_path, const std::string& out_dir, bool allow_fallback) {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = fedstat::parse_emnist_config(fedstat::read_json_file(config_path));
  config.threads = resolve_threads(config.threads);
  fedstat::emnist::EmnistData data;
  try {
    data = fedstat::emnist::obtain_data(config, allow_fallback);
  } catch (const fedstat::MissingInputError& e) {
    std::cerr << "fedstat: " << e.what() << "\n" << fedstat::emnist::acquisition_instructions(config.data_dir) << "\n";
    return kExitMissing;
  }
  if (data.synthetic) std::cerr << "fedstat: EMNIST not found, using synthetic glyphs\n";
  const auto result = fedstat::emnist::run_emnist(data, config);
  const auto entry = fedstat::write_emnist(config, result, out_dir, seconds_since(t0));
  const auto manifest = fedstat::write_manifest_entry(out_dir, entry);
  std::cout << fedstat::emnist_comparison_table(result).str();
  std::cerr << "wrote " << manifest.string() << "\n";
  return kExitOk;
}

int cmd_report(const std::string& manifest) {
  std::cout << fedstat::summarize_manifest(manifest);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning conditioned on local client statistics"};
  app.set_version_flag("--version", std::string(FEDSTAT_VERSION));
  app.require_subcommand(1);

  std::string config, out, manifest;
  bool allow_fallback = false;

  auto* synth = app.add_subcommand("synth", "Synthetic regression and classification comparison");
  synth->add_option("--config", config, "JSON experiment config")->required();
  synth->add_option("--out", out, "Output directory")->required();

  auto* em = app.add_subcommand("emnist", "EMNIST comparison with a conditional CNN");
  em->add_option("--config", config, "JSON experiment config")->required();
  em->add_option("--out", out, "Output directory")->required();
  em->add_flag("--allow-fallback", allow_fallback, "Use synthetic glyphs when EMNIST files are missing");

  auto* report = app.add_subcommand("report", "Ranked summary of a run manifest");
  report->add_option("--manifest", manifest, "manifest.json written by synth or emnist")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(config, out);
    if (*em) return cmd_emnist(config, out, allow_fallback);
    return cmd_report(manifest);
  } catch (const fedstat::ConfigError& e) {
    std::cerr << "fedstat: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fedstat::CapacityError& e) {
    std::cerr << "fedstat: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fedstat::NumericError& e) {
    std::cerr << "fedstat: numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fedstat::MissingInputError& e) {
    std::cerr << "fedstat: " << e.what() << "\n";
    return kExitMissing;
  } catch (const fedstat::FormatError& e) {
    std::cerr << "fedstat: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::exception& e) {
    std::cerr << "fedstat: " << e.what() << "\n";
    return 1;
  }
}
