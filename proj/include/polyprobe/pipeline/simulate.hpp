#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyprobe/corpus.hpp"
#include "polyprobe/pipeline/probe.hpp"
#include "polyprobe/pipeline/records.hpp"
#include "polyprobe/random.hpp"

namespace polyprobe::pipeline {

/// Effect sizes planted into simulated metric tables. Zero means "no effect".
struct PlantedEffects {
  double r2_multilingual = 0.0;          // additive r2 deficit of multilingual models
  double ci_multilingual = 0.0;          // main effect on sentence CI
  double ci_depth_multilingual = 0.0;    // depth x multilingual slope on CI
  double attn_multilingual_spanish = 0.0;  // multilingual x Spanish effect on max attention
  double target_token_gap = 0.0;         // extra target-word tokens for multilingual tokenizers
  double cue_token_gap = 0.0;
  /// When set, r2 is generated from mean CI, cumulative max attention and target
  /// tokens only; multilingual status reaches r2 solely through those three.
  bool mediated_r2 = false;
};

struct SimulationConfig {
  std::uint64_t seed = 1;
  std::size_t mono_per_language = 6;
  std::size_t multilingual = 12;
  std::size_t pairs_per_dataset = 24;
  std::size_t pairs_per_word = 4;
  PlantedEffects effects;
};

inline void to_json(nlohmann::json& j, const SimulationConfig& c) {
  const auto& e = c.effects;
  j = {{"seed", c.seed},
       {"mono_per_language", c.mono_per_language},
       {"multilingual", c.multilingual},
       {"pairs_per_dataset", c.pairs_per_dataset},
       {"pairs_per_word", c.pairs_per_word},
       {"effects",
        {{"r2_multilingual", e.r2_multilingual},
         {"ci_multilingual", e.ci_multilingual},
         {"ci_depth_multilingual", e.ci_depth_multilingual},
         {"attn_multilingual_spanish", e.attn_multilingual_spanish},
         {"target_token_gap", e.target_token_gap},
         {"cue_token_gap", e.cue_token_gap},
         {"mediated_r2", e.mediated_r2}}}};
}

inline void from_json(const nlohmann::json& j, SimulationConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.mono_per_language = j.value("mono_per_language", c.mono_per_language);
  c.multilingual = j.value("multilingual", c.multilingual);
  c.pairs_per_dataset = j.value("pairs_per_dataset", c.pairs_per_dataset);
  c.pairs_per_word = j.value("pairs_per_word", c.pairs_per_word);
  if (j.contains("effects")) {
    const auto& e = j.at("effects");
    auto& p = c.effects;
    p.r2_multilingual = e.value("r2_multilingual", p.r2_multilingual);
    p.ci_multilingual = e.value("ci_multilingual", p.ci_multilingual);
    p.ci_depth_multilingual = e.value("ci_depth_multilingual", p.ci_depth_multilingual);
    p.attn_multilingual_spanish = e.value("attn_multilingual_spanish", p.attn_multilingual_spanish);
    p.target_token_gap = e.value("target_token_gap", p.target_token_gap);
    p.cue_token_gap = e.value("cue_token_gap", p.cue_token_gap);
    p.mediated_r2 = e.value("mediated_r2", p.mediated_r2);
  }
}

/// Named scenarios used by `polyprobe simulate`.
inline PlantedEffects scenario_effects(std::string_view name) {
  PlantedEffects e;
  if (name == "null") return e;
  if (name == "penalty") {
    e.r2_multilingual = -0.1;
    return e;
  }
  if (name == "isotropy") {
    e.ci_multilingual = -0.02;
    e.ci_depth_multilingual = -0.05;
    return e;
  }
  if (name == "attention") {
    e.attn_multilingual_spanish = 0.09;
    return e;
  }
  if (name == "tokens") {
    e.target_token_gap = 0.23;
    e.cue_token_gap = 0.43;
    return e;
  }
  if (name == "mediation") {
    e.ci_multilingual = -0.03;
    e.attn_multilingual_spanish = -0.03;
    e.target_token_gap = 0.3;
    e.cue_token_gap = 0.4;
    e.mediated_r2 = true;
    return e;
  }
  fail(ErrorKind::InvalidConfig, "unknown simulation scenario '" + std::string(name) + "'");
}

struct SimulatedModel {
  std::string model_id;
  bool multilingual = false;
  std::vector<Language> languages;
  double log_params = 0.0;
  std::size_t num_layers = 0;
};

inline std::vector<SimulatedModel> simulate_roster(Rng& rng, const SimulationConfig& config) {
  static constexpr std::size_t kDepths[] = {6, 12, 24};
  std::vector<SimulatedModel> out;
  char id[64];
  auto draw = [&](SimulatedModel m) {
    m.log_params = rng.uniform(std::log(1.4e7), std::log(5.6e8));
    m.num_layers = kDepths[rng.below(3)];
    out.push_back(std::move(m));
  };
  for (Language lang : {Language::english, Language::spanish}) {
    for (std::size_t i = 0; i < config.mono_per_language; ++i) {
      std::snprintf(id, sizeof id, "sim-mono-%s-%02zu", lang == Language::english ? "en" : "es", i + 1);
      draw({id, false, {lang}, 0.0, 0});
    }
  }
  for (std::size_t i = 0; i < config.multilingual; ++i) {
    std::snprintf(id, sizeof id, "sim-multi-%02zu", i + 1);
    draw({id, true, {Language::english, Language::spanish}, 0.0, 0});
  }
  return out;
}

/// Synthetic metric tables at both grains. Sentence records are generated first
/// and layer records are their means, so the grain identities hold as in real runs.
inline AnalysisTable simulate_tables(const SimulationConfig& config) {
  Rng rng(config.seed);
  const auto& fx = config.effects;
  const auto roster = simulate_roster(rng, config);
  const std::size_t words = std::max<std::size_t>(1, config.pairs_per_dataset / std::max<std::size_t>(1, config.pairs_per_word));

  struct WordEffects {
    double ci;
    double attn;
    double target_p;
    double cue_p;
  };
  std::vector<std::vector<WordEffects>> word_effects(2);
  for (auto& lang_words : word_effects) {
    for (std::size_t w = 0; w < words; ++w) {
      lang_words.push_back({rng.normal(0.0, 0.02), rng.normal(0.0, 0.02), rng.uniform(0.05, 0.3),
                            rng.uniform(0.05, 0.3)});
    }
  }

  AnalysisTable out;
  char buf[64];
  for (const auto& model : roster) {
    const double model_ci = rng.normal(0.0, 0.02);
    const double model_attn = rng.normal(0.0, 0.02);
    const double model_r2 = rng.normal(0.0, 0.03);
    const double multi = model.multilingual ? 1.0 : 0.0;
    for (Language lang : model.languages) {
      const std::size_t li = lang == Language::english ? 0 : 1;
      const double spanish = li == 1 ? 1.0 : 0.0;
      const std::string dataset_id = li == 0 ? "sim_en" : "sim_es";
      const std::string prefix = li == 0 ? "en" : "es";

      struct SentenceBase {
        std::string pair_id;
        char side;
        std::size_t word;
        double target_tokens;
        double cue_tokens;
        double running_max = 0.0;
      };
      std::vector<SentenceBase> sentences;
      for (std::size_t p = 0; p < config.pairs_per_dataset; ++p) {
        std::snprintf(buf, sizeof buf, "%s-%03zu", prefix.c_str(), p + 1);
        const std::size_t word = p % words;
        const auto& we = word_effects[li][word];
        for (char side : {'a', 'b'}) {
          // token count = 1 + three Bernoulli splits; the gap shifts the expected count
          auto tokens = [&](double base_p, double gap) {
            const double p_split = std::clamp(base_p + multi * gap / 3.0, 0.0, 1.0);
            double n = 1.0;
            for (int k = 0; k < 3; ++k) n += rng.uniform() < p_split ? 1.0 : 0.0;
            return n;
          };
          const double tt = tokens(we.target_p, fx.target_token_gap);
          const double ct = tokens(we.cue_p, fx.cue_token_gap);
          sentences.push_back({buf, side, word, tt, ct});
        }
      }

      for (std::size_t layer = 0; layer <= model.num_layers; ++layer) {
        const double depth = static_cast<double>(layer) / static_cast<double>(model.num_layers);
        LayerRecord rec;
        rec.model_id = model.model_id;
        rec.dataset_id = dataset_id;
        rec.language = lang;
        rec.multilingual = model.multilingual;
        rec.log_params = model.log_params;
        rec.layer = layer;
        rec.depth = depth;

        std::vector<double> ci, mcd, iss, attn_mean, attn_max, cum, target, cue;
        for (auto& s : sentences) {
          const auto& we = word_effects[li][s.word];
          SentenceLayerRecord r;
          r.pair_id = s.pair_id;
          r.sentence = s.side;
          r.model_id = model.model_id;
          r.layer = layer;
          r.dataset_id = dataset_id;
          r.language = lang;
          r.multilingual = model.multilingual;
          r.log_params = model.log_params;
          r.depth = depth;
          r.target_word = prefix + "-word-" + std::to_string(s.word + 1);
          r.target_tokens = s.target_tokens;
          r.cue_tokens = s.cue_tokens;
          r.ci = 0.6 + 0.1 * depth + fx.ci_multilingual * multi + fx.ci_depth_multilingual * depth * multi + we.ci +
                 model_ci + rng.normal(0.0, 0.03);
          r.mcd = r.ci * 0.8 + rng.normal(0.0, 0.01);
          r.iss = 1.0 - r.mcd;
          if (layer >= 1) {
            const double a = std::clamp(0.2 + 0.1 * depth + fx.attn_multilingual_spanish * multi * spanish + we.attn +
                                            model_attn + rng.normal(0.0, 0.04),
                                        0.0, 1.0);
            r.attn_max = a;
            r.attn_mean = a / 2.0;
            s.running_max = layer == 1 ? a : std::max(s.running_max, a);
            r.cum_max_attn = s.running_max;
          }
          ci.push_back(r.ci);
          mcd.push_back(r.mcd);
          iss.push_back(r.iss);
          attn_mean.push_back(r.attn_mean);
          attn_max.push_back(r.attn_max);
          cum.push_back(r.cum_max_attn);
          target.push_back(r.target_tokens);
          cue.push_back(r.cue_tokens);
          out.sentences.push_back(std::move(r));
        }
        rec.mean_ci = detail::mean_of(ci);
        rec.mean_mcd = detail::mean_of(mcd);
        rec.mean_iss = detail::mean_of(iss);
        rec.mean_attn = detail::mean_of(attn_mean);
        rec.max_attn = detail::mean_of(attn_max);
        rec.cum_max_attn = detail::mean_of(cum);
        rec.mean_target_tokens = detail::mean_of(target);
        rec.mean_cue_tokens = detail::mean_of(cue);
        rec.n_pairs = config.pairs_per_dataset;
        rec.n_sentences = sentences.size();

        double r2 = 0.0;
        if (fx.mediated_r2) {
          const double attn = std::isnan(rec.cum_max_attn) ? 0.25 : rec.cum_max_attn;
          r2 = 0.35 + 1.2 * (rec.mean_ci - 0.65) - 0.3 * (rec.mean_target_tokens - 1.5) - 0.4 * (attn - 0.3);
        } else {
          r2 = 0.3 + 0.2 * depth + 0.05 * (model.log_params - 18.5) + fx.r2_multilingual * multi;
        }
        rec.r2 = std::clamp(r2 + model_r2 + rng.normal(0.0, 0.03), 0.0, 1.0);
        out.layers.push_back(std::move(rec));
      }
    }
  }
  return out;
}

}  // namespace polyprobe::pipeline
