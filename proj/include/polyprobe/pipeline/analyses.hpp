#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/io.hpp"
#include "polyprobe/pipeline/records.hpp"
#include "polyprobe/stats/aic.hpp"
#include "polyprobe/stats/lmm.hpp"

namespace polyprobe::pipeline {

enum class Grain { sentence, layer };

inline Grain parse_grain(std::string_view s) {
  if (s == "sentence") return Grain::sentence;
  if (s == "layer") return Grain::layer;
  fail(ErrorKind::InvalidConfig, "grain must be 'sentence' or 'layer', got '" + std::string(s) + "'");
}

struct AnalysisOptions {
  bool model_per_language = false;  // one model intercept per (model, language) cell
  bool standardize = false;
  Grain attention_grain = Grain::sentence;
  stats::Estimation method = stats::Estimation::ml;  // ladder fits are always ML
};

struct AnalysisResult {
  std::string name;
  stats::LmmFit fit;
  std::vector<std::string> notes;
};

struct Diagnostic {
  std::string analysis;
  ErrorKind kind = ErrorKind::InvalidConfig;
  std::string message;
};

namespace detail {

inline std::set<std::string> distinct(const stats::DataTable& t, const std::string& column,
                                      const std::vector<std::string>& complete_on) {
  std::set<std::string> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    bool ok = true;
    for (const auto& c : complete_on) ok = ok && !t.missing(c, r);
    if (ok) out.insert(t.label(column, r));
  }
  return out;
}

/// Drops nuisance categorical terms that take a single value on the usable rows
/// (e.g. language when only one dataset is present); returns a note per drop.
inline std::vector<std::string> prune_constant(const stats::DataTable& t, stats::MixedModelSpec& spec,
                                               const std::vector<std::string>& droppable) {
  std::vector<std::string> used = {spec.response};
  used.insert(used.end(), spec.fixed_effects.begin(), spec.fixed_effects.end());
  used.insert(used.end(), spec.random_intercepts.begin(), spec.random_intercepts.end());
  std::vector<std::string> notes;
  for (const auto& term : droppable) {
    if (std::ranges::find(spec.fixed_effects, term) == spec.fixed_effects.end()) continue;
    if (distinct(t, term, used).size() >= 2) continue;
    std::erase(spec.fixed_effects, term);
    std::erase_if(spec.interactions, [&](const auto& p) { return p.first == term || p.second == term; });
    notes.push_back("dropped '" + term + "': constant on the analysed rows");
  }
  return notes;
}

inline void require_model_mix(const stats::DataTable& t, const std::string& response, const std::string& analysis) {
  std::set<std::string> multi, mono;
  const auto& models = t.categorical("model");
  const auto& flags = t.categorical("multilingual");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (t.missing(response, r)) continue;
    (flags[r] == "true" ? multi : mono).insert(models[r]);
  }
  if (multi.size() < 2 || mono.size() < 2) {
    fail(ErrorKind::TooFewObservations, analysis + " needs at least 2 multilingual and 2 monolingual models (have " +
                                            std::to_string(multi.size()) + " and " + std::to_string(mono.size()) +
                                            ")");
  }
}

inline AnalysisResult fit_named(const std::string& name, const stats::DataTable& t, stats::MixedModelSpec spec,
                                const AnalysisOptions& options, const std::vector<std::string>& droppable,
                                stats::Estimation method) {
  AnalysisResult out;
  out.name = name;
  out.notes = prune_constant(t, spec, droppable);
  stats::LmmOptions lmm;
  lmm.method = method;
  lmm.standardize = options.standardize;
  lmm.label = name;
  out.fit = stats::fit_lmm(t, spec, lmm);
  if (!out.fit.converged) out.notes.emplace_back("variance-ratio search did not converge");
  return out;
}

}  // namespace detail

/// r2 ~ depth + log_params + language + multilingual + (1|model)
inline AnalysisResult run_penalty_analysis(const std::vector<LayerRecord>& layers, const AnalysisOptions& options = {}) {
  const auto t = layer_table(layers, options.model_per_language);
  detail::require_model_mix(t, "r2", "penalty analysis");
  return detail::fit_named("penalty", t,
                           {"r2", {"depth", "log_params", "language", "multilingual"}, {"model"}, {}}, options,
                           {"language"}, options.method);
}

/// ci ~ depth * multilingual + language + log_params + (1|target_word) + (1|model)
inline AnalysisResult run_isotropy_analysis(const std::vector<SentenceLayerRecord>& sentences,
                                            const AnalysisOptions& options = {}) {
  const auto t = sentence_table(sentences, options.model_per_language);
  detail::require_model_mix(t, "ci", "isotropy analysis");
  return detail::fit_named("isotropy", t,
                           {"ci",
                            {"depth", "multilingual", "language", "log_params"},
                            {"target_word", "model"},
                            {{"depth", "multilingual"}}},
                           options, {"language"}, options.method);
}

/// attn_max ~ depth + multilingual * language + log_params + (1|model), at sentence or layer grain
inline AnalysisResult run_attention_analysis(const std::vector<SentenceLayerRecord>& sentences,
                                             const std::vector<LayerRecord>& layers,
                                             const AnalysisOptions& options = {}) {
  if (options.attention_grain == Grain::layer) {
    const auto t = layer_table(layers, options.model_per_language);
    detail::require_model_mix(t, "max_attn", "attention analysis");
    return detail::fit_named("attention", t,
                             {"max_attn",
                              {"depth", "multilingual", "language", "log_params"},
                              {"model"},
                              {{"multilingual", "language"}}},
                             options, {"language"}, options.method);
  }
  const auto t = sentence_table(sentences, options.model_per_language);
  detail::require_model_mix(t, "attn_max", "attention analysis");
  return detail::fit_named("attention", t,
                           {"attn_max",
                            {"depth", "multilingual", "language", "log_params"},
                            {"model"},
                            {{"multilingual", "language"}}},
                           options, {"language"}, options.method);
}

/// One record per (model, dataset, sentence): token counts do not vary by layer.
inline std::vector<SentenceLayerRecord> token_rows(const std::vector<SentenceLayerRecord>& sentences) {
  std::map<std::pair<std::string, std::string>, std::size_t> first_layer;
  for (const auto& s : sentences) {
    auto key = std::pair{s.model_id, s.dataset_id};
    auto it = first_layer.find(key);
    if (it == first_layer.end() || s.layer < it->second) first_layer[key] = s.layer;
  }
  std::vector<SentenceLayerRecord> out;
  for (const auto& s : sentences) {
    if (s.layer == first_layer.at({s.model_id, s.dataset_id})) out.push_back(s);
  }
  return out;
}

/// n_tokens ~ multilingual + language + log_params + (1|model) + (1|target_word) + (1|sentence),
/// for the target word and the cue word.
inline std::pair<AnalysisResult, AnalysisResult> run_token_analysis(const std::vector<SentenceLayerRecord>& sentences,
                                                                    const AnalysisOptions& options = {}) {
  const auto t = sentence_table(token_rows(sentences), options.model_per_language);
  detail::require_model_mix(t, "target_tokens", "token analysis");
  auto spec = [](const char* response) {
    return stats::MixedModelSpec{
        response, {"multilingual", "language", "log_params"}, {"model", "target_word", "sentence"}, {}};
  };
  return {detail::fit_named("tokens_target", t, spec("target_tokens"), options, {"language"}, options.method),
          detail::fit_named("tokens_cue", t, spec("cue_tokens"), options, {"language"}, options.method)};
}

struct FactorLadder {
  stats::AicLadder ladder;
  std::vector<AnalysisResult> candidates;  // in definition order
  std::string full_model = "Full";
};

/// AIC ladder over r2 models; all candidates are ML fits on the same complete rows.
inline FactorLadder run_factor_ladder(const std::vector<LayerRecord>& layers, const AnalysisOptions& options = {}) {
  std::vector<LayerRecord> complete;
  for (const auto& r : layers) {
    if (!std::isnan(r.r2) && !std::isnan(r.mean_ci) && !std::isnan(r.cum_max_attn) &&
        !std::isnan(r.mean_target_tokens)) {
      complete.push_back(r);
    }
  }
  const auto t = layer_table(complete, options.model_per_language);
  detail::require_model_mix(t, "r2", "factor ladder");

  const std::vector<std::string> base = {"log_params", "depth"};
  auto with = [&](std::vector<std::string> extra) {
    auto terms = base;
    terms.insert(terms.end(), extra.begin(), extra.end());
    return stats::MixedModelSpec{"r2", terms, {"model"}, {}};
  };
  const std::vector<std::pair<std::string, stats::MixedModelSpec>> specs = {
      {"Baseline", with({})},
      {"Multilingual", with({"multilingual"})},
      {"CI", with({"mean_ci"})},
      {"Attention", with({"cum_max_attn"})},
      {"Tokens", with({"mean_target_tokens"})},
      {"Full", with({"mean_ci", "cum_max_attn", "mean_target_tokens"})},
      {"Full+Multilingual", with({"mean_ci", "cum_max_attn", "mean_target_tokens", "multilingual"})},
  };
  FactorLadder out;
  std::vector<stats::LmmFit> fits;
  for (const auto& [label, spec] : specs) {
    out.candidates.push_back(detail::fit_named(label, t, spec, options, {}, stats::Estimation::ml));
    fits.push_back(out.candidates.back().fit);
  }
  out.ladder = stats::compare_aic(fits, 0);
  return out;
}

/// Best layer's r2 per (model, dataset).
struct MaxR2Row {
  std::string model_id;
  std::string dataset_id;
  Language language = Language::english;
  bool multilingual = false;
  double log_params = 0.0;
  double max_r2 = kNA;
  std::size_t best_layer = 0;
  double best_depth = 0.0;
};

inline std::vector<MaxR2Row> max_r2_rows(const std::vector<LayerRecord>& layers) {
  std::map<std::pair<std::string, std::string>, MaxR2Row> cells;
  for (const auto& r : layers) {
    if (std::isnan(r.r2)) continue;
    auto [it, inserted] = cells.try_emplace({r.model_id, r.dataset_id});
    auto& row = it->second;
    if (inserted || r.r2 > row.max_r2) {
      row = {r.model_id, r.dataset_id, r.language, r.multilingual, r.log_params, r.r2, r.layer, r.depth};
    }
  }
  std::vector<MaxR2Row> out;
  for (auto& [key, row] : cells) out.push_back(row);
  return out;
}

/// max_r2 ~ log_params + language + multilingual, ordinary least squares.
inline AnalysisResult run_max_r2_analysis(const std::vector<LayerRecord>& layers, const AnalysisOptions& options = {}) {
  const auto rows = max_r2_rows(layers);
  stats::DataTable t;
  std::vector<std::string> language, multilingual, model;
  std::vector<double> log_params, max_r2;
  for (const auto& r : rows) {
    model.push_back(r.model_id);
    language.emplace_back(to_string(r.language));
    multilingual.emplace_back(r.multilingual ? "true" : "false");
    log_params.push_back(r.log_params);
    max_r2.push_back(r.max_r2);
  }
  t.add_categorical("model", std::move(model));
  t.add_categorical("language", std::move(language));
  t.add_categorical("multilingual", std::move(multilingual));
  t.add_numeric("log_params", std::move(log_params));
  t.add_numeric("max_r2", std::move(max_r2));
  std::set<std::string> models(t.categorical("model").begin(), t.categorical("model").end());
  if (models.size() < 2) fail(ErrorKind::InsufficientPairs, "max-R2 analysis needs at least 2 models");
  // With no grouping factor, the REML fit is ordinary least squares with the usual n - p variance.
  return detail::fit_named("max_r2", t, {"max_r2", {"log_params", "language", "multilingual"}, {}, {}}, options,
                           {"language"}, stats::Estimation::reml);
}

struct AnalysisBundle {
  std::vector<AnalysisResult> fits;
  std::optional<FactorLadder> ladder;
  std::vector<Diagnostic> diagnostics;
};

/// Runs every analysis; design or numerical failures become diagnostics.
inline AnalysisBundle run_all_analyses(const std::vector<LayerRecord>& layers,
                                       const std::vector<SentenceLayerRecord>& sentences,
                                       const AnalysisOptions& options = {}) {
  AnalysisBundle out;
  auto guarded = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.exit_code() == kExitIo) throw;
      out.diagnostics.push_back({name, e.kind(), e.what()});
    }
  };
  guarded("penalty", [&] { out.fits.push_back(run_penalty_analysis(layers, options)); });
  guarded("isotropy", [&] { out.fits.push_back(run_isotropy_analysis(sentences, options)); });
  guarded("attention", [&] { out.fits.push_back(run_attention_analysis(sentences, layers, options)); });
  // the other grain as a companion fit, so both readings are on disk
  const bool sentence_first = options.attention_grain == Grain::sentence;
  const std::string other = sentence_first ? "attention_layer" : "attention_sentence";
  guarded(other, [&] {
    auto alt = options;
    alt.attention_grain = sentence_first ? Grain::layer : Grain::sentence;
    auto r = run_attention_analysis(sentences, layers, alt);
    r.name = other;
    r.fit.label = other;
    out.fits.push_back(std::move(r));
  });
  guarded("tokens", [&] {
    auto [target, cue] = run_token_analysis(sentences, options);
    out.fits.push_back(std::move(target));
    out.fits.push_back(std::move(cue));
  });
  guarded("max_r2", [&] { out.fits.push_back(run_max_r2_analysis(layers, options)); });
  guarded("ladder", [&] { out.ladder = run_factor_ladder(layers, options); });
  return out;
}

inline nlohmann::json result_to_json(const AnalysisResult& r) {
  auto j = stats::fit_to_json(r.fit);
  j["analysis"] = r.name;
  j["notes"] = r.notes;
  return j;
}

inline std::string ladder_csv(const stats::AicLadder& ladder) {
  io::CsvTable t;
  t.header = {"label", "aic", "delta_aic"};
  for (const auto& e : ladder.entries) {
    t.rows.push_back({e.label, io::format_double(e.aic), io::format_double(e.delta_aic)});
  }
  return io::format_csv(t);
}

inline std::string slug(std::string_view label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

/// Writes the bundle into `dir`, replacing it only once every file is in place.
inline void write_analysis_dir(const AnalysisBundle& bundle, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path staging = dir.string() + ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + staging.string() + ": " + ec.message());

  for (const auto& r : bundle.fits) io::write_file_atomic(staging / (r.name + ".json"), result_to_json(r).dump(2) + "\n");
  if (bundle.ladder) {
    io::write_file_atomic(staging / "ladder.csv", ladder_csv(bundle.ladder->ladder));
    for (const auto& c : bundle.ladder->candidates) {
      io::write_file_atomic(staging / ("ladder_" + slug(c.name) + ".json"), result_to_json(c).dump(2) + "\n");
    }
  }
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& d : bundle.diagnostics) {
    diag.push_back({{"analysis", d.analysis}, {"error", std::string(to_string(d.kind))}, {"message", d.message}});
  }
  io::write_file_atomic(staging / "diagnostics.json", diag.dump(2) + "\n");

  fs::remove_all(dir, ec);
  fs::rename(staging, dir, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot move analysis into " + dir.string() + ": " + ec.message());
}

}  // namespace polyprobe::pipeline
