#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyprobe/attention.hpp"
#include "polyprobe/corpus.hpp"
#include "polyprobe/error.hpp"
#include "polyprobe/geometry.hpp"
#include "polyprobe/pipeline/records.hpp"
#include "polyprobe/stats/ols.hpp"
#include "polyprobe/trace_store.hpp"

namespace polyprobe::pipeline {

struct ProbeOptions {
  bool include_embedding_layer = true;
  bool include_specials = false;
};

/// Both sentences of one pair as seen by one model.
struct ProbePair {
  const ActivationTrace* a = nullptr;
  const ActivationTrace* b = nullptr;
  double relatedness = 0.0;
};

struct LayerR2 {
  stats::OlsFit fit;
  std::size_t n_used = 0;
  std::size_t n_degenerate = 0;
};

/// R^2 of relatedness regressed on the cosine distance between pooled target
/// embeddings at `layer`. Pairs with a degenerate pooled vector are dropped.
inline LayerR2 layer_r2(std::span<const ProbePair> pairs, std::size_t layer) {
  LayerR2 out;
  std::vector<double> distance;
  std::vector<double> relatedness;
  for (const auto& p : pairs) {
    try {
      const auto u = pool(p.a->hidden_layer(layer), p.a->header.target_span);
      const auto v = pool(p.b->hidden_layer(layer), p.b->header.target_span);
      distance.push_back(cosine_distance(u.vector, v.vector));
      relatedness.push_back(p.relatedness);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateVector) throw;
      ++out.n_degenerate;
    }
  }
  out.n_used = distance.size();
  if (out.n_used < 3) {
    fail(ErrorKind::InsufficientPairs, "layer " + std::to_string(layer) + ": " + std::to_string(out.n_used) +
                                           " usable pairs, need 3");
  }
  out.fit = stats::ols_simple(distance, relatedness);
  return out;
}

/// Drop accounting for one (model, dataset, layer) cell.
struct CellReport {
  std::string model_id;
  std::string dataset_id;
  std::size_t layer = 0;
  std::size_t pairs_input = 0;
  std::size_t pairs_used = 0;
  std::map<std::string, std::size_t> pairs_dropped;
  std::size_t sentences_input = 0;
  std::size_t isotropy_used = 0;
  std::map<std::string, std::size_t> isotropy_dropped;
  std::string r2_error;
};

struct ProbeReport {
  std::vector<CellReport> cells;

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : cells) {
      nlohmann::json cell = {{"model_id", c.model_id},
                             {"dataset_id", c.dataset_id},
                             {"layer", c.layer},
                             {"pairs_input", c.pairs_input},
                             {"pairs_used", c.pairs_used},
                             {"pairs_dropped", c.pairs_dropped},
                             {"sentences_input", c.sentences_input},
                             {"isotropy_used", c.isotropy_used},
                             {"isotropy_dropped", c.isotropy_dropped}};
      if (!c.r2_error.empty()) cell["r2_error"] = c.r2_error;
      out.push_back(std::move(cell));
    }
    return {{"cells", out}};
  }
};

struct AnalysisTable {
  std::vector<LayerRecord> layers;
  std::vector<SentenceLayerRecord> sentences;
  ProbeReport report;
};

namespace detail {

inline double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? kNA : sum / static_cast<double>(n);
}

struct SentenceState {
  std::optional<ActivationTrace> trace;
  std::optional<AttentionToCue> attention;
};

/// Probes one model over one dataset; appends to `out`.
inline void probe_cell(const TraceReader& reader, const Dataset& dataset, const ProbeOptions& options,
                       AnalysisTable& out) {
  const ModelMeta& model = reader.manifest().model;
  const std::size_t L = model.num_layers;

  std::vector<SentenceState> a(dataset.items.size());
  std::vector<SentenceState> b(dataset.items.size());
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    for (auto [side, state] : {std::pair{'a', &a[i]}, std::pair{'b', &b[i]}}) {
      const auto uid = sentence_uid(dataset.items[i].pair_id, side);
      if (!reader.contains(uid)) continue;
      state->trace = reader.read(uid);
      state->attention = attention_to_cue(*state->trace);
    }
  }

  std::vector<ProbePair> complete;
  std::size_t missing_pairs = 0;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    if (a[i].trace && b[i].trace) {
      complete.push_back({&*a[i].trace, &*b[i].trace, dataset.items[i].relatedness_mean});
    } else {
      ++missing_pairs;
    }
  }

  for (std::size_t layer = options.include_embedding_layer ? 0 : 1; layer <= L; ++layer) {
    CellReport cell;
    cell.model_id = model.model_id;
    cell.dataset_id = dataset.dataset_id;
    cell.layer = layer;
    cell.pairs_input = dataset.items.size();
    cell.sentences_input = 2 * dataset.items.size();

    LayerRecord rec;
    rec.model_id = model.model_id;
    rec.dataset_id = dataset.dataset_id;
    rec.language = dataset.language;
    rec.multilingual = model.multilingual;
    rec.log_params = model.log_params();
    rec.layer = layer;
    rec.depth = static_cast<double>(layer) / static_cast<double>(L);

    if (missing_pairs > 0) cell.pairs_dropped["missing_trace"] = missing_pairs;
    try {
      const auto r2 = layer_r2(complete, layer);
      rec.r2 = r2.fit.r_squared;
      cell.pairs_used = r2.n_used;
      if (r2.n_degenerate > 0) cell.pairs_dropped["degenerate_embedding"] = r2.n_degenerate;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientPairs && e.kind() != ErrorKind::ConstantPredictor) throw;
      // every remaining pair is dropped from this cell's regression
      cell.r2_error = e.what();
      std::size_t degenerate = 0;
      for (const auto& p : complete) {
        try {
          pool(p.a->hidden_layer(layer), p.a->header.target_span);
          pool(p.b->hidden_layer(layer), p.b->header.target_span);
        } catch (const Error&) {
          ++degenerate;
        }
      }
      if (degenerate > 0) cell.pairs_dropped["degenerate_embedding"] = degenerate;
      if (complete.size() > degenerate) {
        cell.pairs_dropped[e.kind() == ErrorKind::ConstantPredictor ? "constant_distance" : "insufficient_pairs"] =
            complete.size() - degenerate;
      }
    }
    rec.n_pairs = cell.pairs_used;

    std::vector<double> ci, mcd, iss, attn_mean, attn_max, cum_max, target_tokens, cue_tokens;
    for (std::size_t i = 0; i < dataset.items.size(); ++i) {
      const auto& item = dataset.items[i];
      for (auto [side, state] : {std::pair{'a', &a[i]}, std::pair{'b', &b[i]}}) {
        if (!state->trace) {
          ++cell.isotropy_dropped["missing_trace"];
          continue;
        }
        const ActivationTrace& t = *state->trace;
        SentenceLayerRecord s;
        s.pair_id = item.pair_id;
        s.sentence = side;
        s.model_id = model.model_id;
        s.layer = layer;
        s.dataset_id = dataset.dataset_id;
        s.language = dataset.language;
        s.multilingual = model.multilingual;
        s.log_params = rec.log_params;
        s.depth = rec.depth;
        s.target_word = item.target_word;
        s.target_tokens = static_cast<double>(t.header.target_span.size());
        s.cue_tokens = static_cast<double>(t.header.cue_span.size());

        const auto rows = gather_rows(t.hidden_layer(layer), t.header.special_mask, options.include_specials);
        if (rows.rows < 3) {
          ++cell.isotropy_dropped["too_few_tokens"];
        } else {
          try {
            const auto scores = isotropy_scores(rows.view());
            s.ci = scores.ci;
            s.mcd = scores.mcd;
            s.iss = scores.iss;
            ++cell.isotropy_used;
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateVector) throw;
            ++cell.isotropy_dropped["degenerate"];
          }
        }
        if (layer >= 1) {
          s.attn_mean = state->attention->layer_mean[layer - 1];
          s.attn_max = state->attention->layer_max[layer - 1];
          s.cum_max_attn = state->attention->cum_max[layer - 1];
        }
        ci.push_back(s.ci);
        mcd.push_back(s.mcd);
        iss.push_back(s.iss);
        attn_mean.push_back(s.attn_mean);
        attn_max.push_back(s.attn_max);
        cum_max.push_back(s.cum_max_attn);
        target_tokens.push_back(s.target_tokens);
        cue_tokens.push_back(s.cue_tokens);
        out.sentences.push_back(std::move(s));
      }
    }
    rec.mean_ci = mean_of(ci);
    rec.mean_mcd = mean_of(mcd);
    rec.mean_iss = mean_of(iss);
    rec.mean_attn = mean_of(attn_mean);
    rec.max_attn = mean_of(attn_max);
    rec.cum_max_attn = mean_of(cum_max);
    rec.mean_target_tokens = mean_of(target_tokens);
    rec.mean_cue_tokens = mean_of(cue_tokens);
    rec.n_sentences = cell.isotropy_used;
    out.layers.push_back(std::move(rec));
    out.report.cells.push_back(std::move(cell));
  }
}

}  // namespace detail

/// Every directory under `root` (or `root` itself) holding a trace manifest, sorted.
inline std::vector<std::filesystem::path> find_trace_dirs(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) fail(ErrorKind::MissingTrace, "trace root " + root.string() + " not found");
  std::vector<fs::path> dirs;
  if (fs::exists(root / kManifestName)) dirs.push_back(root);
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / kManifestName)) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) fail(ErrorKind::MissingTrace, "no trace manifests under " + root.string());
  return dirs;
}

/// Per-layer and per-sentence metrics for every (model, dataset) trace directory.
inline AnalysisTable build_analysis_table(const std::vector<std::filesystem::path>& trace_dirs,
                                          const std::vector<Dataset>& datasets, const ProbeOptions& options = {}) {
  std::vector<TraceReader> readers;
  readers.reserve(trace_dirs.size());
  for (const auto& dir : trace_dirs) readers.emplace_back(dir);
  std::sort(readers.begin(), readers.end(), [](const TraceReader& x, const TraceReader& y) {
    const auto& mx = x.manifest();
    const auto& my = y.manifest();
    return std::tie(mx.model.model_id, mx.dataset_id) < std::tie(my.model.model_id, my.dataset_id);
  });

  AnalysisTable out;
  for (std::size_t i = 0; i < readers.size(); ++i) {
    const auto& m = readers[i].manifest();
    if (i > 0 && readers[i - 1].manifest().model.model_id == m.model.model_id &&
        readers[i - 1].manifest().dataset_id == m.dataset_id) {
      fail(ErrorKind::GrainMismatch, "two trace directories for " + m.model.model_id + " on " + m.dataset_id);
    }
    const Dataset* dataset = nullptr;
    for (const auto& d : datasets) {
      if (d.dataset_id == m.dataset_id) dataset = &d;
    }
    if (!dataset) fail(ErrorKind::MissingTrace, readers[i].dir().string() + ": dataset '" + m.dataset_id + "' not loaded");
    m.model.validate();
    if (!m.model.multilingual && !m.model.languages.contains(dataset->language)) {
      fail(ErrorKind::GrainMismatch, "monolingual model " + m.model.model_id + " traced on " +
                                         std::string(to_string(dataset->language)) + " dataset " + m.dataset_id);
    }
    detail::probe_cell(readers[i], *dataset, options, out);
  }
  return out;
}

/// Pair-grain view: mean of the two sentences' values per (model, dataset, pair, layer).
struct PairLayerRecord {
  std::string model_id;
  std::string dataset_id;
  std::string pair_id;
  std::size_t layer = 0;
  double ci = kNA;
  double attn_mean = kNA;
  double attn_max = kNA;
};

inline std::vector<PairLayerRecord> pair_grain(const std::vector<SentenceLayerRecord>& sentences) {
  std::map<std::tuple<std::string, std::string, std::string, std::size_t>, std::pair<const SentenceLayerRecord*,
                                                                                    const SentenceLayerRecord*>>
      pairs;
  for (const auto& s : sentences) {
    auto& slot = pairs[{s.model_id, s.dataset_id, s.pair_id, s.layer}];
    (s.sentence == 'a' ? slot.first : slot.second) = &s;
  }
  auto avg = [](double x, double y) { return std::isnan(x) || std::isnan(y) ? kNA : (x + y) / 2.0; };
  std::vector<PairLayerRecord> out;
  for (const auto& [key, slot] : pairs) {
    if (!slot.first || !slot.second) continue;
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key),
                   avg(slot.first->ci, slot.second->ci), avg(slot.first->attn_mean, slot.second->attn_mean),
                   avg(slot.first->attn_max, slot.second->attn_max)});
  }
  return out;
}

}  // namespace polyprobe::pipeline
