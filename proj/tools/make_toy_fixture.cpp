// Writes the small synthetic trace fixture used by the CLI tests and the
// determinism check: two 8-pair datasets, six tiny "models", valid traces.
//
//   make_toy_fixture <out_dir>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyprobe/corpus.hpp"
#include "polyprobe/io.hpp"
#include "polyprobe/random.hpp"
#include "polyprobe/trace_store.hpp"

namespace fs = std::filesystem;
using namespace polyprobe;

namespace {

constexpr std::size_t kLayers = 4, kHeads = 2, kDim = 8;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct Item {
  const char* target;
  const char* cue_a;
  const char* cue_b;
  double relatedness;
};

struct ToyDataset {
  std::string id;
  Language language;
  std::string templ;  // {t} target, {c} cue
  std::vector<Item> items;
};

std::vector<ToyDataset> toy_datasets() {
  return {
      {"toy_en",
       Language::english,
       "the {t} near the {c} was old",
       {{"bank", "river", "money", 1.4},
        {"bank", "loan", "money", 4.6},
        {"bat", "cave", "ball", 1.2},
        {"bat", "wing", "cave", 4.4},
        {"pitch", "tar", "song", 1.9},
        {"pitch", "note", "song", 4.1},
        {"spring", "coil", "flower", 2.3},
        {"spring", "rain", "flower", 3.7}}},
      {"toy_es",
       Language::spanish,
       "el {t} junto al {c} era viejo",
       {{"banco", "parque", "dinero", 1.3},
        {"banco", "cajero", "dinero", 4.7},
        {"gato", "coche", "perro", 1.6},
        {"gato", "perro", "raton", 4.2},
        {"vela", "barco", "pastel", 1.1},
        {"vela", "cirio", "pastel", 3.9},
        {"planta", "edificio", "jardin", 2.0},
        {"planta", "arbol", "jardin", 3.5}}},
  };
}

std::string fill(std::string templ, const std::string& target, const std::string& cue) {
  templ.replace(templ.find("{t}"), 3, target);
  templ.replace(templ.find("{c}"), 3, cue);
  return templ;
}

Dataset to_dataset(const ToyDataset& t) {
  Dataset d;
  d.dataset_id = t.id;
  d.language = t.language;
  d.scale_min = 1.0;
  d.scale_max = 5.0;
  for (std::size_t i = 0; i < t.items.size(); ++i) {
    const auto& it = t.items[i];
    SentencePair p;
    p.pair_id = t.id + "-" + std::to_string(i + 1);
    p.target_word = it.target;
    p.language = t.language;
    p.sentence_a = fill(t.templ, it.target, it.cue_a);
    p.sentence_b = fill(t.templ, it.target, it.cue_b);
    p.cue_a = it.cue_a;
    p.cue_b = it.cue_b;
    p.relatedness_mean = it.relatedness;
    d.items.push_back(p);
  }
  return d;
}

std::vector<ModelMeta> toy_models() {
  using L = Language;
  return {
      {"mono_en_small", "toy", false, 10000000, kLayers, kHeads, kDim, {L::english}},
      {"mono_en_large", "toy", false, 100000000, kLayers, kHeads, kDim, {L::english}},
      {"mono_es_small", "toy", false, 12000000, kLayers, kHeads, kDim, {L::spanish}},
      {"mono_es_large", "toy", false, 110000000, kLayers, kHeads, kDim, {L::spanish}},
      {"multi_small", "toy", true, 150000000, kLayers, kHeads, kDim, {L::english, L::spanish}},
      {"multi_large", "toy", true, 500000000, kLayers, kHeads, kDim, {L::english, L::spanish}},
  };
}

/// Multilingual tokenizers split Spanish words (and long English ones) into more pieces.
std::size_t pieces(const ModelMeta& m, Language lang, const std::string& word) {
  if (!m.multilingual) return word.size() > 7 ? 2 : 1;
  if (lang == Language::spanish) return word.size() > 4 ? 2 : 1;
  return word.size() > 5 ? 2 : 1;
}

/// Deterministic word embedding for one model.
std::vector<double> embed(const ModelMeta& m, const std::string& word) {
  Rng rng(fnv1a(m.model_id + "/" + word));
  std::vector<double> v(kDim);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

ActivationTrace make_trace(const ModelMeta& m, Language lang, const SentencePair& pair, char side, Rng& rng) {
  const std::string& sentence = side == 'a' ? pair.sentence_a : pair.sentence_b;
  const std::string& cue = side == 'a' ? pair.cue_a : pair.cue_b;
  SentenceTraceHeader h;
  h.sentence_uid = sentence_uid(pair.pair_id, side);
  h.tokens.push_back("[CLS]");
  h.special_mask.push_back(true);
  std::vector<std::string> token_word{""};
  for (const auto& w : text::split_words(sentence)) {
    const std::size_t k = pieces(m, lang, w);
    const std::size_t begin = h.tokens.size();
    for (std::size_t p = 0; p < k; ++p) {
      h.tokens.push_back(k == 1 ? w : (p == 0 ? w.substr(0, w.size() / 2) : "##" + w.substr(w.size() / 2)));
      h.special_mask.push_back(false);
      token_word.push_back(w);
    }
    if (w == pair.target_word && h.target_span.empty()) h.target_span = {begin, h.tokens.size()};
    if (w == cue && h.cue_span.empty()) h.cue_span = {begin, h.tokens.size()};
  }
  h.tokens.push_back("[SEP]");
  h.special_mask.push_back(true);
  token_word.push_back("");
  const std::size_t n = h.tokens.size();

  ActivationTrace t(h, kLayers, kHeads, kDim);
  // The two senses separate along a pair-specific direction as depth grows,
  // more for unrelated pairs; multilingual models separate them less.
  Rng dir_rng(fnv1a(m.model_id + "/" + pair.pair_id));
  std::vector<double> sense(kDim);
  for (auto& x : sense) x = dir_rng.normal(0.0, 1.0);
  const double unrelated = (5.0 - pair.relatedness_mean) / 4.0;
  const double sign = side == 'a' ? 1.0 : -1.0;
  const double strength = m.multilingual ? 0.6 : 1.2;
  const auto cue_vec = embed(m, cue);

  for (std::size_t l = 0; l <= kLayers; ++l) {
    const double depth = static_cast<double>(l) / kLayers;
    for (std::size_t i = 0; i < n; ++i) {
      const auto base = embed(m, token_word[i].empty() ? h.tokens[i] : token_word[i]);
      auto row = t.hidden_row(l, i);
      const bool is_target = h.target_span.contains(i);
      for (std::size_t d = 0; d < kDim; ++d) {
        double v = base[d] + 0.3 * depth * cue_vec[d] + rng.normal(0.0, 0.15);
        if (is_target) v += sign * strength * depth * unrelated * sense[d];
        row[d] = static_cast<float>(v);
      }
    }
  }
  for (std::size_t l = 1; l <= kLayers; ++l) {
    for (std::size_t head = 0; head < kHeads; ++head) {
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          double z = rng.normal(0.0, 1.0);
          if (h.target_span.contains(i) && h.cue_span.contains(j)) z += 0.4 * static_cast<double>(l);
          logits[j] = std::exp(z);
          total += logits[j];
        }
        auto row = t.attention_row(l, head, i);
        for (std::size_t j = 0; j < n; ++j) row[j] = static_cast<float>(logits[j] / total);
      }
    }
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_toy_fixture <out_dir>\n";
    return 1;
  }
  const fs::path root = argv[1];
  try {
    fs::remove_all(root);
    fs::create_directories(root / "datasets");
    nlohmann::json config = {{"datasets", nlohmann::json::array()}, {"trace_root", "traces"}};
    std::vector<Dataset> datasets;
    for (const auto& t : toy_datasets()) {
      auto d = to_dataset(t);
      io::write_file_atomic(root / "datasets" / (d.dataset_id + ".csv"), to_canonical_csv(d));
      ColumnMapping mapping = canonical_mapping();
      nlohmann::json manifest = {{"dataset_id", d.dataset_id},
                                 {"language", std::string(to_string(d.language))},
                                 {"scale_min", d.scale_min},
                                 {"scale_max", d.scale_max},
                                 {"csv_path", d.dataset_id + ".csv"},
                                 {"mapping", mapping}};
      io::write_file_atomic(root / "datasets" / (d.dataset_id + ".json"), manifest.dump(2) + "\n");
      config["datasets"].push_back("datasets/" + d.dataset_id + ".json");
      datasets.push_back(std::move(d));
    }
    for (const auto& m : toy_models()) {
      for (const auto& d : datasets) {
        if (!m.languages.contains(d.language)) continue;
        Rng rng(fnv1a(m.model_id + "__" + d.dataset_id));
        TraceWriter writer(root / "traces" / (m.model_id + "__" + d.dataset_id), m, d.dataset_id);
        for (const auto& pair : d.items) {
          for (char side : {'a', 'b'}) writer.add(make_trace(m, d.language, pair, side, rng));
        }
        writer.finish();
      }
    }
    io::write_file_atomic(root / "config.json", config.dump(2) + "\n");
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.exit_code();
  }
  return 0;
}
