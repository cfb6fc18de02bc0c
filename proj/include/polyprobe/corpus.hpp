#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/io.hpp"

namespace polyprobe {

enum class Language { english, spanish };

constexpr std::string_view to_string(Language lang) {
  return lang == Language::english ? "english" : "spanish";
}

inline Language parse_language(std::string_view text) {
  std::string lower(text);
  std::ranges::transform(lower, lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "english" || lower == "en") return Language::english;
  if (lower == "spanish" || lower == "es") return Language::spanish;
  fail(ErrorKind::InvalidConfig, "unknown language '" + std::string(text) + "'");
}

struct SentencePair {
  std::string pair_id;
  std::string target_word;
  Language language = Language::english;
  std::string sentence_a;
  std::string sentence_b;
  std::string cue_a;
  std::string cue_b;
  double relatedness_mean = 0.0;
  std::optional<double> relatedness_sd;

  bool operator==(const SentencePair&) const = default;
};

struct Dataset {
  std::string dataset_id;
  Language language = Language::english;
  double scale_min = 0.0;
  double scale_max = 0.0;
  std::vector<SentencePair> items;

  const SentencePair* find(std::string_view pair_id) const {
    for (const auto& item : items) {
      if (item.pair_id == pair_id) return &item;
    }
    return nullptr;
  }

  bool operator==(const Dataset&) const = default;
};

struct ModelMeta {
  std::string model_id;
  std::string family;
  bool multilingual = false;
  std::uint64_t param_count = 0;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t hidden_dim = 0;
  std::set<Language> languages;

  double log_params() const { return std::log(static_cast<double>(param_count)); }

  void validate() const {
    if (model_id.empty()) fail(ErrorKind::InvalidConfig, "model_id is empty");
    if (param_count == 0) fail(ErrorKind::InvalidConfig, model_id + ": param_count must be > 0");
    if (num_layers == 0 || num_heads == 0 || hidden_dim == 0) {
      fail(ErrorKind::InvalidConfig, model_id + ": layers, heads and hidden_dim must be > 0");
    }
    if (languages.empty()) fail(ErrorKind::InvalidConfig, model_id + ": no languages");
    if (!multilingual && languages.size() != 1) {
      fail(ErrorKind::InvalidConfig, model_id + ": monolingual model must list exactly one language");
    }
  }

  bool operator==(const ModelMeta&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelMeta& m) {
  std::vector<std::string> langs;
  for (auto lang : m.languages) langs.emplace_back(to_string(lang));
  j = nlohmann::json{{"model_id", m.model_id},     {"family", m.family},
                     {"multilingual", m.multilingual}, {"param_count", m.param_count},
                     {"num_layers", m.num_layers}, {"num_heads", m.num_heads},
                     {"hidden_dim", m.hidden_dim}, {"languages", langs}};
}

inline void from_json(const nlohmann::json& j, ModelMeta& m) {
  m.model_id = j.at("model_id").get<std::string>();
  m.family = j.value("family", std::string{});
  m.multilingual = j.at("multilingual").get<bool>();
  m.param_count = j.at("param_count").get<std::uint64_t>();
  m.num_layers = j.at("num_layers").get<std::size_t>();
  m.num_heads = j.at("num_heads").get<std::size_t>();
  m.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  m.languages.clear();
  for (const auto& lang : j.at("languages")) m.languages.insert(parse_language(lang.get<std::string>()));
}

// --- word handling -------------------------------------------------------------

namespace text {

// Bytes of UTF-8 punctuation that should split words: inverted marks, guillemets,
// curly quotes, ellipsis, en/em dashes.
inline std::size_t punctuation_length(std::string_view s, std::size_t i) {
  const auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  if (i + 1 < s.size() && b(i) == 0xC2) {
    const unsigned char c = b(i + 1);
    if (c == 0xA1 || c == 0xBF || c == 0xAB || c == 0xBB) return 2;
  }
  if (i + 2 < s.size() && b(i) == 0xE2 && b(i + 1) == 0x80) {
    const unsigned char c = b(i + 2);
    if ((c >= 0x93 && c <= 0x94) || (c >= 0x98 && c <= 0x9D) || c == 0xA6) return 3;
  }
  return 0;
}

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '\'' || c >= 0x80; }

/// Splits on whitespace and punctuation; accented UTF-8 letters stay inside words.
inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string current;
  for (std::size_t i = 0; i < s.size();) {
    if (std::size_t len = punctuation_length(s, i)) {
      if (!current.empty()) words.push_back(std::exchange(current, {}));
      i += len;
      continue;
    }
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_word_byte(c)) {
      current.push_back(s[i]);
    } else if (!current.empty()) {
      words.push_back(std::exchange(current, {}));
    }
    ++i;
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

/// ASCII and Latin-1 supplement (UTF-8 C3 xx) case folding.
inline std::string fold_case(std::string_view s) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto c = static_cast<unsigned char>(out[i]);
    if (c < 0x80) {
      out[i] = static_cast<char>(std::tolower(c));
    } else if (c == 0xC3 && i + 1 < out.size()) {
      auto next = static_cast<unsigned char>(out[i + 1]);
      if (next >= 0x80 && next <= 0x9E && next != 0x97) out[i + 1] = static_cast<char>(next + 0x20);
      ++i;
    }
  }
  return out;
}

inline bool contains_word(std::string_view sentence, std::string_view word, bool case_insensitive) {
  const std::string needle = case_insensitive ? fold_case(word) : std::string(word);
  for (const auto& w : split_words(sentence)) {
    if ((case_insensitive ? fold_case(w) : w) == needle) return true;
  }
  return false;
}

}  // namespace text

/// Recovers the single differing word of a minimal pair.
inline std::pair<std::string, std::string> diff_cue(std::string_view sentence_a,
                                                    std::string_view sentence_b) {
  const auto words_a = text::split_words(sentence_a);
  const auto words_b = text::split_words(sentence_b);
  if (words_a.size() != words_b.size()) {
    fail(ErrorKind::NotMinimalPair, "sentences have different word counts");
  }
  std::optional<std::size_t> position;
  for (std::size_t i = 0; i < words_a.size(); ++i) {
    if (words_a[i] == words_b[i]) continue;
    if (position) fail(ErrorKind::NotMinimalPair, "sentences differ at more than one position");
    position = i;
  }
  if (!position) fail(ErrorKind::NotMinimalPair, "sentences are identical");
  return {words_a[*position], words_b[*position]};
}

// --- manifests and loading ---------------------------------------------------

/// Column mapping: CSV column name -> canonical field name.
using ColumnMapping = std::map<std::string, std::string>;

inline const std::vector<std::string>& canonical_fields() {
  static const std::vector<std::string> fields = {
      "pair_id", "target_word", "language", "sentence_a", "sentence_b",
      "cue_a",   "cue_b",       "relatedness_mean", "relatedness_sd"};
  return fields;
}

inline ColumnMapping canonical_mapping() {
  ColumnMapping mapping;
  for (const auto& f : canonical_fields()) mapping[f] = f;
  return mapping;
}

struct DatasetManifest {
  std::string dataset_id;
  Language language = Language::english;
  double scale_min = 0.0;
  double scale_max = 0.0;
  std::filesystem::path csv_path;
  ColumnMapping mapping;
  bool case_insensitive = true;
  std::optional<double> agreement_ceiling;
};

inline DatasetManifest parse_dataset_manifest(const nlohmann::json& j,
                                              const std::filesystem::path& base_dir) {
  DatasetManifest m;
  try {
    m.dataset_id = j.at("dataset_id").get<std::string>();
    m.language = parse_language(j.at("language").get<std::string>());
    m.scale_min = j.at("scale_min").get<double>();
    m.scale_max = j.at("scale_max").get<double>();
    std::filesystem::path csv = j.at("csv_path").get<std::string>();
    m.csv_path = csv.is_absolute() ? csv : base_dir / csv;
    m.mapping = j.at("mapping").get<ColumnMapping>();
    m.case_insensitive = j.value("case_insensitive", true);
    if (j.contains("agreement_ceiling")) m.agreement_ceiling = j.at("agreement_ceiling").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("dataset manifest: ") + e.what());
  }
  if (!(m.scale_min < m.scale_max)) fail(ErrorKind::InvalidConfig, "scale_min must be < scale_max");
  return m;
}

inline DatasetManifest load_dataset_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
  return parse_dataset_manifest(j, path.parent_path());
}

struct LoadOptions {
  std::ostream* warnings = &std::cerr;
};

/// Parses and validates a dataset CSV under the manifest's mapping, language and scale.
inline Dataset load_dataset_text(std::string_view csv_text, const DatasetManifest& manifest,
                                 const LoadOptions& options = {}) {
  const io::CsvTable table = io::parse_csv(csv_text);

  std::map<std::string, std::size_t> field_column;
  for (const auto& [column, field] : manifest.mapping) {
    if (std::ranges::find(canonical_fields(), field) == canonical_fields().end()) {
      fail(ErrorKind::MissingColumn, "mapping targets unknown field '" + field + "'");
    }
    auto index = table.column_index(column);
    if (!index) fail(ErrorKind::MissingColumn, "column '" + column + "' not in CSV header");
    field_column[field] = *index;
  }
  for (const char* required : {"pair_id", "target_word", "sentence_a", "sentence_b", "relatedness_mean"}) {
    if (!field_column.contains(required)) {
      fail(ErrorKind::MissingColumn, std::string("mapping does not name field '") + required + "'");
    }
  }
  const bool has_cues = field_column.contains("cue_a") && field_column.contains("cue_b");
  if (field_column.contains("cue_a") != field_column.contains("cue_b")) {
    fail(ErrorKind::MissingColumn, "mapping names only one of cue_a / cue_b");
  }

  Dataset dataset;
  dataset.dataset_id = manifest.dataset_id;
  dataset.language = manifest.language;
  dataset.scale_min = manifest.scale_min;
  dataset.scale_max = manifest.scale_max;
  dataset.items.reserve(table.rows.size());

  std::unordered_set<std::string> seen;
  const bool ci = manifest.case_insensitive;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto get = [&](const std::string& field) -> std::string {
      auto it = field_column.find(field);
      if (it == field_column.end()) return {};
      if (it->second >= row.size()) {
        fail(ErrorKind::MissingColumn, "row " + std::to_string(r + 2) + " has too few fields");
      }
      return row[it->second];
    };

    SentencePair item;
    item.pair_id = get("pair_id");
    const std::string& id = item.pair_id;
    if (id.empty()) fail(ErrorKind::InvalidPair, "row " + std::to_string(r + 2) + ": empty pair_id");
    if (!seen.insert(id).second) fail(ErrorKind::DuplicatePairId, "pair_id '" + id + "' repeated");

    item.target_word = get("target_word");
    item.language = manifest.language;
    if (field_column.contains("language")) {
      const std::string lang = get("language");
      if (!lang.empty() && parse_language(lang) != manifest.language) {
        fail(ErrorKind::InvalidPair, id + ": row language differs from dataset language");
      }
    }
    item.sentence_a = get("sentence_a");
    item.sentence_b = get("sentence_b");
    if (item.sentence_a == item.sentence_b) fail(ErrorKind::InvalidPair, id + ": sentences are identical");
    if (!text::contains_word(item.sentence_a, item.target_word, ci) ||
        !text::contains_word(item.sentence_b, item.target_word, ci)) {
      fail(ErrorKind::TargetNotInSentence, id + ": target '" + item.target_word + "' missing");
    }

    if (has_cues) {
      item.cue_a = get("cue_a");
      item.cue_b = get("cue_b");
    } else {
      try {
        std::tie(item.cue_a, item.cue_b) = diff_cue(item.sentence_a, item.sentence_b);
      } catch (const Error& e) {
        throw Error(e.kind(), id + ": " + e.what());
      }
    }
    if (item.cue_a.empty() || !text::contains_word(item.sentence_a, item.cue_a, ci)) {
      fail(ErrorKind::CueNotInSentence, id + ": cue_a '" + item.cue_a + "' not in sentence_a");
    }
    if (item.cue_b.empty() || !text::contains_word(item.sentence_b, item.cue_b, ci)) {
      fail(ErrorKind::CueNotInSentence, id + ": cue_b '" + item.cue_b + "' not in sentence_b");
    }

    auto mean = io::parse_double(get("relatedness_mean"));
    if (!mean) fail(ErrorKind::ScaleViolation, id + ": relatedness_mean is not a number");
    if (*mean < manifest.scale_min || *mean > manifest.scale_max) {
      fail(ErrorKind::ScaleViolation, id + ": relatedness_mean outside declared scale");
    }
    item.relatedness_mean = *mean;
    if (field_column.contains("relatedness_sd")) item.relatedness_sd = io::parse_double(get("relatedness_sd"));

    dataset.items.push_back(std::move(item));
  }

  if (dataset.items.empty() && options.warnings) {
    *options.warnings << "warning: dataset '" << dataset.dataset_id << "' has no items\n";
  }
  return dataset;
}

inline Dataset load_dataset(const std::filesystem::path& csv_path, const DatasetManifest& manifest,
                            const LoadOptions& options = {}) {
  return load_dataset_text(io::read_file(csv_path), manifest, options);
}

inline Dataset load_dataset(const DatasetManifest& manifest, const LoadOptions& options = {}) {
  return load_dataset(manifest.csv_path, manifest, options);
}

/// Canonical CSV: the canonical field names as header, shortest round-trip numbers.
inline std::string to_canonical_csv(const Dataset& dataset) {
  io::CsvTable table;
  table.header = canonical_fields();
  for (const auto& item : dataset.items) {
    table.rows.push_back({item.pair_id, item.target_word, std::string(to_string(item.language)),
                          item.sentence_a, item.sentence_b, item.cue_a, item.cue_b,
                          io::format_double(item.relatedness_mean),
                          item.relatedness_sd ? io::format_double(*item.relatedness_sd) : "NA"});
  }
  return io::format_csv(table);
}

}  // namespace polyprobe
