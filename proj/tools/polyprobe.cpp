// polyprobe: validate traces, compute metrics, fit the analyses, emit figures.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "polyprobe/commands.hpp"

namespace {

using polyprobe::cli::RunConfig;

struct Overrides {
  std::string config;
  std::vector<std::string> datasets;
  std::string trace_root;
  std::string output;
  std::optional<bool> include_embedding_layer;
  std::optional<bool> include_specials;
  std::optional<bool> standardize;
  std::optional<bool> model_per_language;
  std::optional<bool> strict;
  std::string grain;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::string scenario;

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : polyprobe::cli::load_config(config);
    if (!datasets.empty()) c.datasets.assign(datasets.begin(), datasets.end());
    if (!trace_root.empty()) c.trace_root = trace_root;
    if (!output.empty()) c.output = output;
    if (include_embedding_layer) c.include_embedding_layer = *include_embedding_layer;
    if (include_specials) c.include_specials = *include_specials;
    if (standardize) c.standardize = *standardize;
    if (model_per_language) c.model_per_language = *model_per_language;
    if (strict) c.strict = *strict;
    if (!grain.empty()) c.grain = grain;
    if (!method.empty()) c.method = method;
    if (seed) c.seed = *seed;
    if (!scenario.empty()) c.scenario = scenario;
    return c;
  }
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--output", o.output, "output root (default: out)");
}

void add_pipeline_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--dataset", o.datasets, "dataset manifest (repeatable)");
  cmd->add_option("--trace-root", o.trace_root, "directory of trace directories");
  cmd->add_option("--include-embedding-layer", o.include_embedding_layer, "probe layer 0 too (true/false)");
  cmd->add_option("--include-specials", o.include_specials, "keep special tokens in isotropy (true/false)");
  cmd->add_option("--strict", o.strict, "strict trace validation (true/false)");
}

void add_analysis_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--standardize", o.standardize, "z-score numeric predictors (true/false)");
  cmd->add_option("--model-per-language", o.model_per_language, "one model intercept per language (true/false)");
  cmd->add_option("--grain", o.grain, "attention analysis grain: sentence|layer");
  cmd->add_option("--method", o.method, "ml|reml for the non-ladder fits");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyprobe: lexical-ambiguity probing of multilingual language models"};
  app.require_subcommand(1);
  Overrides o;

  std::string validate_path;
  bool validate_strict = false;
  auto* validate = app.add_subcommand("validate", "check every invariant of a trace directory (or a root of them)");
  validate->add_option("path", validate_path, "trace directory or root")->required();
  validate->add_flag("--strict", validate_strict, "also flag orphan payloads and spans covering specials");

  auto* metrics = app.add_subcommand("metrics", "traces -> metrics.csv, sentence_metrics.csv, run_report.json");
  add_common(metrics, o);
  add_pipeline_flags(metrics, o);

  auto* analyze = app.add_subcommand("analyze", "metrics.csv -> analysis/");
  add_common(analyze, o);
  add_analysis_flags(analyze, o);

  auto* report = app.add_subcommand("report", "metrics.csv + analysis/ -> figures/");
  add_common(report, o);

  auto* simulate = app.add_subcommand("simulate", "synthetic metric tables with planted effects");
  add_common(simulate, o);
  simulate->add_option("--scenario", o.scenario, "null|penalty|isotropy|attention|tokens|mediation");
  simulate->add_option("--seed", o.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : polyprobe::kExitValidation;
  }

  namespace cli = polyprobe::cli;
  const std::string name = app.get_subcommands().front()->get_name();
  return cli::run_guarded(name, std::cerr, [&] {
    if (validate->parsed()) return cli::cmd_validate(validate_path, validate_strict, std::cout);
    const RunConfig config = o.resolve();
    if (metrics->parsed()) {
      cli::cmd_metrics(config);
    } else if (analyze->parsed()) {
      auto bundle = cli::cmd_analyze(config);
      for (const auto& d : bundle.diagnostics) std::cerr << "diagnostic: " << d.analysis << ": " << d.message << "\n";
    } else if (report->parsed()) {
      cli::cmd_report(config);
    } else {
      cli::cmd_simulate(config);
    }
    return static_cast<int>(polyprobe::kExitOk);
  });
}
