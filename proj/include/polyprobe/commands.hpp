#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyprobe/corpus.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/io.hpp"
#include "polyprobe/pipeline/analyses.hpp"
#include "polyprobe/pipeline/probe.hpp"
#include "polyprobe/pipeline/simulate.hpp"
#include "polyprobe/report.hpp"
#include "polyprobe/trace_store.hpp"

namespace polyprobe::cli {

namespace fs = std::filesystem;

struct RunConfig {
  std::vector<fs::path> datasets;  // dataset manifest files
  fs::path trace_root;
  fs::path output = "out";
  bool include_embedding_layer = true;
  bool include_specials = false;
  bool standardize = false;
  bool model_per_language = false;
  bool strict = false;  // strict trace validation
  std::string grain = "sentence";
  std::string method = "ml";
  std::uint64_t seed = 1;
  std::string scenario = "null";

  pipeline::ProbeOptions probe_options() const { return {include_embedding_layer, include_specials}; }

  pipeline::AnalysisOptions analysis_options() const {
    pipeline::AnalysisOptions o;
    o.model_per_language = model_per_language;
    o.standardize = standardize;
    o.attention_grain = pipeline::parse_grain(grain);
    if (method == "ml") {
      o.method = stats::Estimation::ml;
    } else if (method == "reml") {
      o.method = stats::Estimation::reml;
    } else {
      fail(ErrorKind::InvalidConfig, "method must be 'ml' or 'reml', got '" + method + "'");
    }
    return o;
  }

  nlohmann::json to_json() const {
    std::vector<std::string> ds;
    for (const auto& d : datasets) ds.push_back(d.generic_string());
    return {{"datasets", ds},
            {"trace_root", trace_root.generic_string()},
            {"include_embedding_layer", include_embedding_layer},
            {"include_specials", include_specials},
            {"standardize", standardize},
            {"model_per_language", model_per_language},
            {"strict", strict},
            {"grain", grain},
            {"method", method},
            {"seed", seed},
            {"scenario", scenario}};
  }
};

/// Reads a JSON config; relative paths resolve against the config file's directory.
inline RunConfig load_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  RunConfig c;
  try {
    for (const auto& d : j.value("datasets", std::vector<std::string>{})) c.datasets.push_back(resolve(d));
    if (j.contains("trace_root")) c.trace_root = resolve(j.at("trace_root").get<std::string>());
    if (j.contains("output")) c.output = resolve(j.at("output").get<std::string>());
    c.include_embedding_layer = j.value("include_embedding_layer", c.include_embedding_layer);
    c.include_specials = j.value("include_specials", c.include_specials);
    c.standardize = j.value("standardize", c.standardize);
    c.model_per_language = j.value("model_per_language", c.model_per_language);
    c.strict = j.value("strict", c.strict);
    c.grain = j.value("grain", c.grain);
    c.method = j.value("method", c.method);
    c.seed = j.value("seed", c.seed);
    c.scenario = j.value("scenario", c.scenario);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  return c;
}

/// Machine-readable failure description, printed to stderr by the CLI.
inline nlohmann::json error_report(const std::string& command, ErrorKind kind, const std::string& message) {
  return {{"command", command},
          {"error", std::string(to_string(kind))},
          {"message", message},
          {"exit_code", exit_code_for(kind)}};
}

/// Runs `fn`, mapping every failure to an exit code and a JSON error report.
template <typename Fn>
int run_guarded(const std::string& command, std::ostream& err, Fn&& fn) {
  std::optional<nlohmann::json> report;
  try {
    return fn();
  } catch (const Error& e) {
    report = error_report(command, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    report = error_report(command, ErrorKind::IoFailure, e.what());
  } catch (const nlohmann::json::exception& e) {
    report = error_report(command, ErrorKind::InvalidConfig, e.what());
  } catch (const std::bad_alloc&) {
    report = error_report(command, ErrorKind::IoFailure, "out of memory");
  }
  err << report->dump() << "\n";
  return report->at("exit_code").get<int>();
}

// --- subcommands --------------------------------------------------------------------

/// A trace path is either one trace directory or a root holding several.
inline std::vector<fs::path> trace_dirs_at(const fs::path& path) {
  if (fs::exists(path / kManifestName)) return {path};
  return pipeline::find_trace_dirs(path);
}

/// Prints one JSON report per directory; returns 1 if any fails.
inline int cmd_validate(const fs::path& path, bool strict, std::ostream& out) {
  nlohmann::json reports = nlohmann::json::array();
  bool ok = true;
  for (const auto& dir : trace_dirs_at(path)) {
    auto report = validate_trace_dir(dir, strict);
    ok = ok && report.passed();
    reports.push_back(report.to_json());
  }
  out << nlohmann::json{{"passed", ok}, {"directories", reports}}.dump(2) << "\n";
  return ok ? kExitOk : kExitValidation;
}

inline std::vector<Dataset> load_datasets(const RunConfig& config) {
  if (config.datasets.empty()) fail(ErrorKind::InvalidConfig, "no dataset manifests configured");
  std::vector<Dataset> out;
  for (const auto& path : config.datasets) {
    if (!fs::exists(path)) fail(ErrorKind::MissingTrace, "dataset manifest not found: " + path.string());
    out.push_back(load_dataset(load_dataset_manifest(path)));
  }
  return out;
}

inline void cmd_metrics(const RunConfig& config) {
  if (config.trace_root.empty()) fail(ErrorKind::InvalidConfig, "trace_root is not set");
  const auto datasets = load_datasets(config);
  const auto dirs = trace_dirs_at(config.trace_root);
  for (const auto& dir : dirs) {
    auto report = validate_trace_dir(dir, config.strict);
    if (!report.passed()) {
      fail(ErrorKind::CorruptPayload, dir.string() + " failed validation (" + std::to_string(report.n_failed()) +
                                          " sentences); run `polyprobe validate` for details");
    }
  }
  const auto table = pipeline::build_analysis_table(dirs, datasets, config.probe_options());
  // Trace paths vary between machines, so the run report records only directory names.
  std::vector<std::string> names;
  for (const auto& d : dirs) names.push_back(d.filename().string());
  auto cfg = config.to_json();
  cfg.erase("datasets");
  cfg.erase("trace_root");
  nlohmann::json run_report = table.report.to_json();
  run_report["config"] = cfg;
  run_report["trace_dirs"] = names;

  fs::create_directories(config.output);
  io::write_file_atomic(config.output / "metrics.csv", pipeline::format_layer_records(table.layers));
  io::write_file_atomic(config.output / "sentence_metrics.csv", pipeline::format_sentence_records(table.sentences));
  io::write_file_atomic(config.output / "run_report.json", run_report.dump(2) + "\n");
}

inline pipeline::AnalysisBundle cmd_analyze(const RunConfig& config) {
  const auto layers = pipeline::read_layer_records(config.output / "metrics.csv");
  const auto sentences = pipeline::read_sentence_records(config.output / "sentence_metrics.csv");
  auto bundle = pipeline::run_all_analyses(layers, sentences, config.analysis_options());
  pipeline::write_analysis_dir(bundle, config.output / "analysis");
  return bundle;
}

inline void cmd_report(const RunConfig& config) {
  std::map<std::string, double> ceilings;
  for (const auto& path : config.datasets) {
    if (!fs::exists(path)) continue;  // manifests are optional here; they only carry the ceiling
    const auto m = load_dataset_manifest(path);
    if (m.agreement_ceiling) ceilings[m.dataset_id] = *m.agreement_ceiling;
  }
  auto report = report::build_report(config.output / "metrics.csv", config.output / "analysis", ceilings);
  report::write_report(report, config.output / "figures");
}

inline void cmd_simulate(const RunConfig& config) {
  pipeline::SimulationConfig sim;
  sim.seed = config.seed;
  sim.effects = pipeline::scenario_effects(config.scenario);
  const auto tables = pipeline::simulate_tables(sim);
  nlohmann::json j = sim;
  j["scenario"] = config.scenario;
  fs::create_directories(config.output);
  io::write_file_atomic(config.output / "metrics.csv", pipeline::format_layer_records(tables.layers));
  io::write_file_atomic(config.output / "sentence_metrics.csv", pipeline::format_sentence_records(tables.sentences));
  io::write_file_atomic(config.output / "simulation.json", j.dump(2) + "\n");
}

}  // namespace polyprobe::cli
