#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "polyprobe/corpus.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/io.hpp"
#include "polyprobe/stats/table.hpp"

namespace polyprobe::pipeline {

inline constexpr double kNA = std::numeric_limits<double>::quiet_NaN();

/// Metrics of one (model, dataset, layer) cell. Values are means over the
/// contributing sentence records; NaN marks a metric that does not exist at this
/// layer (attention at the embedding layer) or had no contributing sentence.
struct LayerRecord {
  std::string model_id;
  std::string dataset_id;
  Language language = Language::english;
  bool multilingual = false;
  double log_params = 0.0;
  std::size_t layer = 0;
  double depth = 0.0;
  double r2 = kNA;
  double mean_ci = kNA;
  double mean_mcd = kNA;
  double mean_iss = kNA;
  double mean_attn = kNA;
  double max_attn = kNA;
  double cum_max_attn = kNA;
  double mean_target_tokens = kNA;
  double mean_cue_tokens = kNA;
  // trailing bookkeeping columns
  std::size_t n_pairs = 0;
  std::size_t n_sentences = 0;
};

/// One sentence seen by one model at one layer.
struct SentenceLayerRecord {
  std::string pair_id;
  char sentence = 'a';
  std::string model_id;
  std::size_t layer = 0;
  double ci = kNA;
  double mcd = kNA;
  double iss = kNA;
  double attn_mean = kNA;
  double attn_max = kNA;
  double target_tokens = kNA;
  double cue_tokens = kNA;
  // trailing covariate columns so the file can be analysed on its own
  std::string dataset_id;
  Language language = Language::english;
  bool multilingual = false;
  double log_params = 0.0;
  double depth = 0.0;
  std::string target_word;
  double cum_max_attn = kNA;
};

inline const std::vector<std::string>& layer_record_columns() {
  static const std::vector<std::string> cols = {
      "model_id", "dataset_id", "language", "multilingual", "log_params", "layer", "depth", "r2",
      "mean_ci", "mean_mcd", "mean_iss", "mean_attn", "max_attn", "cum_max_attn",
      "mean_target_tokens", "mean_cue_tokens", "n_pairs", "n_sentences"};
  return cols;
}

inline const std::vector<std::string>& sentence_record_columns() {
  static const std::vector<std::string> cols = {
      "pair_id", "sentence", "model_id", "layer", "ci", "mcd", "iss", "attn_mean", "attn_max",
      "target_tokens", "cue_tokens", "dataset_id", "language", "multilingual", "log_params",
      "depth", "target_word", "cum_max_attn"};
  return cols;
}

namespace detail {

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "TRUE") return true;
  if (s == "false" || s == "0" || s == "FALSE") return false;
  fail(ErrorKind::InvalidConfig, "not a boolean: '" + s + "'");
}

inline double number(const std::string& s) { return io::parse_double(s).value_or(kNA); }

inline std::size_t count(const std::string& s) {
  auto v = io::parse_double(s);
  if (!v || *v < 0 || *v != std::floor(*v)) fail(ErrorKind::InvalidConfig, "not a count: '" + s + "'");
  return static_cast<std::size_t>(*v);
}

/// Maps each required column name to its index, or fails.
inline std::vector<std::size_t> locate(const io::CsvTable& table, const std::vector<std::string>& names,
                                       const std::string& what) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto i = table.column_index(n);
    if (!i) fail(ErrorKind::MissingColumn, what + " lacks column '" + n + "'");
    idx.push_back(*i);
  }
  return idx;
}

}  // namespace detail

inline std::string format_layer_records(const std::vector<LayerRecord>& records) {
  io::CsvTable t;
  t.header = layer_record_columns();
  for (const auto& r : records) {
    t.rows.push_back({r.model_id, r.dataset_id, std::string(to_string(r.language)),
                      detail::bool_text(r.multilingual), io::format_double(r.log_params),
                      std::to_string(r.layer), io::format_double(r.depth), io::format_double(r.r2),
                      io::format_double(r.mean_ci), io::format_double(r.mean_mcd), io::format_double(r.mean_iss),
                      io::format_double(r.mean_attn), io::format_double(r.max_attn),
                      io::format_double(r.cum_max_attn), io::format_double(r.mean_target_tokens),
                      io::format_double(r.mean_cue_tokens), std::to_string(r.n_pairs),
                      std::to_string(r.n_sentences)});
  }
  return io::format_csv(t);
}

inline std::string format_sentence_records(const std::vector<SentenceLayerRecord>& records) {
  io::CsvTable t;
  t.header = sentence_record_columns();
  for (const auto& r : records) {
    t.rows.push_back({r.pair_id, std::string(1, r.sentence), r.model_id, std::to_string(r.layer),
                      io::format_double(r.ci), io::format_double(r.mcd), io::format_double(r.iss),
                      io::format_double(r.attn_mean), io::format_double(r.attn_max),
                      io::format_double(r.target_tokens), io::format_double(r.cue_tokens), r.dataset_id,
                      std::string(to_string(r.language)), detail::bool_text(r.multilingual),
                      io::format_double(r.log_params), io::format_double(r.depth), r.target_word,
                      io::format_double(r.cum_max_attn)});
  }
  return io::format_csv(t);
}

inline std::vector<LayerRecord> parse_layer_records(std::string_view text) {
  const auto table = io::parse_csv(text);
  // bookkeeping columns are optional so hand-made tables stay small
  std::vector<std::string> required(layer_record_columns().begin(), layer_record_columns().end() - 2);
  const auto idx = detail::locate(table, required, "metrics table");
  const auto n_pairs = table.column_index("n_pairs");
  const auto n_sentences = table.column_index("n_sentences");
  std::vector<LayerRecord> out;
  for (const auto& row : table.rows) {
    if (row.size() < table.header.size()) fail(ErrorKind::MissingColumn, "metrics row has too few fields");
    LayerRecord r;
    r.model_id = row[idx[0]];
    r.dataset_id = row[idx[1]];
    r.language = parse_language(row[idx[2]]);
    r.multilingual = detail::parse_bool(row[idx[3]]);
    r.log_params = detail::number(row[idx[4]]);
    r.layer = detail::count(row[idx[5]]);
    r.depth = detail::number(row[idx[6]]);
    r.r2 = detail::number(row[idx[7]]);
    r.mean_ci = detail::number(row[idx[8]]);
    r.mean_mcd = detail::number(row[idx[9]]);
    r.mean_iss = detail::number(row[idx[10]]);
    r.mean_attn = detail::number(row[idx[11]]);
    r.max_attn = detail::number(row[idx[12]]);
    r.cum_max_attn = detail::number(row[idx[13]]);
    r.mean_target_tokens = detail::number(row[idx[14]]);
    r.mean_cue_tokens = detail::number(row[idx[15]]);
    if (n_pairs) r.n_pairs = detail::count(row[*n_pairs]);
    if (n_sentences) r.n_sentences = detail::count(row[*n_sentences]);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<SentenceLayerRecord> parse_sentence_records(std::string_view text) {
  const auto table = io::parse_csv(text);
  const auto idx = detail::locate(table, sentence_record_columns(), "sentence metrics table");
  std::vector<SentenceLayerRecord> out;
  for (const auto& row : table.rows) {
    if (row.size() < table.header.size()) fail(ErrorKind::MissingColumn, "sentence row has too few fields");
    SentenceLayerRecord r;
    r.pair_id = row[idx[0]];
    if (row[idx[1]] != "a" && row[idx[1]] != "b") fail(ErrorKind::InvalidConfig, "sentence must be a or b");
    r.sentence = row[idx[1]][0];
    r.model_id = row[idx[2]];
    r.layer = detail::count(row[idx[3]]);
    r.ci = detail::number(row[idx[4]]);
    r.mcd = detail::number(row[idx[5]]);
    r.iss = detail::number(row[idx[6]]);
    r.attn_mean = detail::number(row[idx[7]]);
    r.attn_max = detail::number(row[idx[8]]);
    r.target_tokens = detail::number(row[idx[9]]);
    r.cue_tokens = detail::number(row[idx[10]]);
    r.dataset_id = row[idx[11]];
    r.language = parse_language(row[idx[12]]);
    r.multilingual = detail::parse_bool(row[idx[13]]);
    r.log_params = detail::number(row[idx[14]]);
    r.depth = detail::number(row[idx[15]]);
    r.target_word = row[idx[16]];
    r.cum_max_attn = detail::number(row[idx[17]]);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<LayerRecord> read_layer_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingAnalysis, path.string() + " not found");
  return parse_layer_records(io::read_file(path));
}

inline std::vector<SentenceLayerRecord> read_sentence_records(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingAnalysis, path.string() + " not found");
  return parse_sentence_records(io::read_file(path));
}

/// Key used for the per-model random intercept; optionally split by language.
inline std::string model_group(const std::string& model_id, Language language, bool per_language) {
  return per_language ? model_id + "|" + std::string(to_string(language)) : model_id;
}

inline stats::DataTable layer_table(const std::vector<LayerRecord>& records, bool model_per_language = false) {
  stats::DataTable t;
  std::vector<std::string> model, model_id, dataset, language, multilingual;
  std::vector<double> log_params, layer, depth, r2, ci, mcd, iss, attn, max_attn, cum, target, cue;
  for (const auto& r : records) {
    model.push_back(model_group(r.model_id, r.language, model_per_language));
    model_id.push_back(r.model_id);
    dataset.push_back(r.dataset_id);
    language.emplace_back(to_string(r.language));
    multilingual.push_back(detail::bool_text(r.multilingual));
    log_params.push_back(r.log_params);
    layer.push_back(static_cast<double>(r.layer));
    depth.push_back(r.depth);
    r2.push_back(r.r2);
    ci.push_back(r.mean_ci);
    mcd.push_back(r.mean_mcd);
    iss.push_back(r.mean_iss);
    attn.push_back(r.mean_attn);
    max_attn.push_back(r.max_attn);
    cum.push_back(r.cum_max_attn);
    target.push_back(r.mean_target_tokens);
    cue.push_back(r.mean_cue_tokens);
  }
  t.add_categorical("model", std::move(model));
  t.add_categorical("model_id", std::move(model_id));
  t.add_categorical("dataset_id", std::move(dataset));
  t.add_categorical("language", std::move(language));
  t.add_categorical("multilingual", std::move(multilingual));
  t.add_numeric("log_params", std::move(log_params));
  t.add_numeric("layer", std::move(layer));
  t.add_numeric("depth", std::move(depth));
  t.add_numeric("r2", std::move(r2));
  t.add_numeric("mean_ci", std::move(ci));
  t.add_numeric("mean_mcd", std::move(mcd));
  t.add_numeric("mean_iss", std::move(iss));
  t.add_numeric("mean_attn", std::move(attn));
  t.add_numeric("max_attn", std::move(max_attn));
  t.add_numeric("cum_max_attn", std::move(cum));
  t.add_numeric("mean_target_tokens", std::move(target));
  t.add_numeric("mean_cue_tokens", std::move(cue));
  return t;
}

inline stats::DataTable sentence_table(const std::vector<SentenceLayerRecord>& records,
                                       bool model_per_language = false) {
  stats::DataTable t;
  std::vector<std::string> model, language, multilingual, target_word, sentence;
  std::vector<double> log_params, depth, ci, attn_mean, attn_max, target, cue;
  for (const auto& r : records) {
    model.push_back(model_group(r.model_id, r.language, model_per_language));
    language.emplace_back(to_string(r.language));
    multilingual.push_back(detail::bool_text(r.multilingual));
    target_word.push_back(r.dataset_id + "/" + r.target_word);
    sentence.push_back(r.dataset_id + "/" + r.pair_id + "#" + r.sentence);
    log_params.push_back(r.log_params);
    depth.push_back(r.depth);
    ci.push_back(r.ci);
    attn_mean.push_back(r.attn_mean);
    attn_max.push_back(r.attn_max);
    target.push_back(r.target_tokens);
    cue.push_back(r.cue_tokens);
  }
  t.add_categorical("model", std::move(model));
  t.add_categorical("language", std::move(language));
  t.add_categorical("multilingual", std::move(multilingual));
  t.add_categorical("target_word", std::move(target_word));
  t.add_categorical("sentence", std::move(sentence));
  t.add_numeric("log_params", std::move(log_params));
  t.add_numeric("depth", std::move(depth));
  t.add_numeric("ci", std::move(ci));
  t.add_numeric("attn_mean", std::move(attn_mean));
  t.add_numeric("attn_max", std::move(attn_max));
  t.add_numeric("target_tokens", std::move(target));
  t.add_numeric("cue_tokens", std::move(cue));
  return t;
}

}  // namespace polyprobe::pipeline
