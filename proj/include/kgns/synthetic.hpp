#pragma once

// Seeded synthetic lexicons, observations, captions and word vectors for experiments
// without the real source datasets.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgns/common.hpp"
#include "kgns/grounding.hpp"
#include "kgns/kg_store.hpp"
#include "kgns/pipeline.hpp"

namespace kgns::synthetic {

struct FeatureType {
  std::string name;
  std::size_t values = 4;
};

inline std::vector<FeatureType> default_feature_types() {
  return {{"handshape", 6},        {"selected_fingers", 4}, {"flexion", 4},         {"major_location", 5},
          {"minor_location", 4},   {"contact", 2},          {"movement", 4},        {"path_movement", 3},
          {"repeated_movement", 2}};
}

inline std::string phoneme_label(const std::string& type, std::size_t value) {
  return type + "_" + std::to_string(value);
}

struct LexiconConfig {
  std::size_t n_signs = 40;
  std::vector<FeatureType> feature_types = default_feature_types();
  /// Reject signs whose phonology repeats an earlier sign.
  bool unique_phonology = true;
  /// With latent classes, each sign copies a class prototype and then redraws each feature
  /// with probability `mutation`.
  std::size_t latent_classes = 0;
  double mutation = 0.3;
  /// Feature types whose value determines a semantic feature `meaning_<type>_<value>`.
  std::vector<std::string> semantic_rules{"handshape"};
  /// Fraction of signs whose rule-derived features are replaced by those of a random value.
  double semantic_noise = 0.0;
  std::size_t videos_per_sign = 0;
  /// Topics partition the signs; each sign's translations come from its topic's words.
  std::size_t topics = 0;
  std::size_t translations_per_sign = 1;
  std::uint64_t seed = 0;
};

struct Lexicon {
  KnowledgeGraph graph;
  std::vector<EntityId> signs;
  std::map<EntityId, std::vector<std::size_t>> phonology;  // sign -> value index per feature type
  std::map<EntityId, int> topic_of;                        // only with topics > 0
  std::vector<std::string> words;
  PhonologySchema schema;  // values actually used by some sign
};

/// Four-letter glosses: three base-26 digits plus a checksum letter, so any two labels
/// differ in at least two positions.
inline std::string sign_label(std::size_t i) {
  require(i < 26 * 26 * 26, "sign index ", i, " out of label range");
  std::string s(4, 'a');
  std::size_t sum = 0;
  for (int k = 2; k >= 0; --k) {
    auto d = i % 26;
    s[static_cast<std::size_t>(k)] = static_cast<char>('a' + d);
    sum += d;
    i /= 26;
  }
  s[3] = static_cast<char>('a' + sum % 26);
  return s;
}

inline Lexicon make_lexicon(const LexiconConfig& cfg) {
  require(!cfg.feature_types.empty(), "need at least one feature type");
  auto rng = make_rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto T = cfg.feature_types.size();
  auto draw = [&](std::size_t t) { return uniform_index(rng, cfg.feature_types[t].values); };

  std::vector<std::vector<std::size_t>> prototypes(cfg.latent_classes);
  for (auto& p : prototypes)
    for (std::size_t t = 0; t < T; ++t) p.push_back(draw(t));

  Lexicon lex;
  std::set<std::vector<std::size_t>> seen;
  std::size_t attempts = 0;
  while (lex.signs.size() < cfg.n_signs) {
    require(++attempts < 1000 * (cfg.n_signs + 1), "cannot draw ", cfg.n_signs, " distinct phonologies");
    std::vector<std::size_t> ph;
    if (cfg.latent_classes) {
      ph = prototypes[lex.signs.size() % cfg.latent_classes];
      for (std::size_t t = 0; t < T; ++t)
        if (unit(rng) < cfg.mutation) ph[t] = draw(t);
    } else {
      for (std::size_t t = 0; t < T; ++t) ph.push_back(draw(t));
    }
    if (cfg.unique_phonology && !seen.insert(ph).second) continue;
    EntityId sign(Namespace::asl, sign_label(lex.signs.size()));
    lex.signs.push_back(sign);
    lex.phonology[sign] = ph;
  }

  auto& g = lex.graph;
  const std::string src = "synthetic";
  for (std::size_t i = 0; i < lex.signs.size(); ++i) {
    const auto& sign = lex.signs[i];
    const auto& ph = lex.phonology[sign];
    for (std::size_t t = 0; t < T; ++t) {
      const auto& ft = cfg.feature_types[t];
      g.add_fact({sign, RelationId(ft.name, RelType::phonological), EntityId(Namespace::phoneme, phoneme_label(ft.name, ph[t])), src});
    }
    bool noisy = unit(rng) < cfg.semantic_noise;
    for (auto& rule : cfg.semantic_rules) {
      std::size_t t = 0;
      while (t < T && cfg.feature_types[t].name != rule) ++t;
      require(t < T, "semantic rule on unknown feature type '", rule, "'");
      auto v = noisy ? draw(t) : ph[t];
      g.add_fact({sign, RelationId("has_meaning", RelType::semantic), EntityId(Namespace::semfeat, "meaning_" + phoneme_label(rule, v)), src});
    }
    for (std::size_t k = 0; k < cfg.videos_per_sign; ++k)
      g.add_fact({sign, RelationId("has_video", RelType::meta),
                  EntityId(Namespace::video, sign.label() + "_v" + std::to_string(k)), src});
    if (cfg.topics) lex.topic_of[sign] = static_cast<int>(i % cfg.topics);
    for (std::size_t k = 0; k < cfg.translations_per_sign; ++k) {
      std::string word = "w_" + sign.label() + "_" + std::to_string(k);
      lex.words.push_back(word);
      g.add_fact({sign, RelationId("has_translation", RelType::translation), EntityId(Namespace::en, word), src});
      if (cfg.translations_per_sign > 1)
        g.add_fact({sign, RelationId(translation_weight_relation(word), RelType::statistical),
                    EntityId::literal(format_real(1.0 / static_cast<double>(k + 1), 6)), src});
    }
  }
  lex.schema = PhonologySchema::from_graph(g);
  return lex;
}

/// Gold observation with each feature's argmax redrawn with probability `flip` and
/// `confidence` mass on the (possibly flipped) value, the rest spread evenly over the
/// type's other values in the lexicon. `partner`, when set, picks the value a flip lands on.
inline PhonemeObservation noisy_observation(const Lexicon& lex, const LexiconConfig& cfg, const EntityId& sign,
                                            std::string window_id, double flip, double confidence, Rng& rng,
                                            const std::function<std::size_t(std::size_t, std::size_t)>& partner = {}) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& ph = lex.phonology.at(sign);
  PhonemeObservation obs{std::move(window_id), {}};
  for (std::size_t t = 0; t < cfg.feature_types.size(); ++t) {
    const auto& ft = cfg.feature_types[t];
    const auto& vocab = lex.schema.values(*lex.schema.type_index(ft.name));
    auto label = phoneme_label(ft.name, ph[t]);
    if (vocab.size() > 1 && unit(rng) < flip) {
      std::string next;
      if (partner) next = phoneme_label(ft.name, partner(t, ph[t]));
      if (next.empty() || next == label || !lex.schema.value_index(*lex.schema.type_index(ft.name), next)) {
        auto at = *lex.schema.value_index(*lex.schema.type_index(ft.name), label);
        auto other = uniform_index(rng, vocab.size() - 1);
        next = vocab[other >= at ? other + 1 : other];
      }
      label = next;
    }
    FeatureDistribution d{ft.name, {}};
    double rest = vocab.size() > 1 ? (1.0 - confidence) / static_cast<double>(vocab.size() - 1) : 0.0;
    for (auto& v : vocab) d.probs[v] = v == label ? (vocab.size() > 1 ? confidence : 1.0) : rest;
    obs.distributions.push_back(std::move(d));
  }
  return obs;
}

/// One-hot gold observations for every sign, window ids = sign labels.
inline ObservationSet gold_observations(const Lexicon& lex) {
  ObservationSet set;
  for (auto& s : lex.signs) set.observations.push_back(one_hot_from_gold(lex.graph, lex.schema, s, s.label()));
  set.provenance = "gold";
  return set;
}

/// Word vectors: each topic owns one axis (scaled by `separation`), plus Gaussian noise.
/// Without topics every word gets its own random direction.
inline WordVectors make_word_vectors(const Lexicon& lex, std::size_t dim, double separation, double noise,
                                     std::uint64_t seed, const std::vector<std::string>& extra_words = {}) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, noise);
  WordVectors wv(dim);
  std::map<std::string, int> topic_of_word;
  for (auto& [sign, topic] : lex.topic_of)
    for (auto fi : lex.graph.outgoing(sign))
      if (lex.graph.facts()[fi].type() == RelType::translation) topic_of_word[lex.graph.facts()[fi].tail.label()] = topic;
  auto all = lex.words;
  all.insert(all.end(), extra_words.begin(), extra_words.end());
  for (auto& w : all) {
    std::vector<double> v(dim);
    for (auto& x : v) x = gauss(rng);
    if (auto it = topic_of_word.find(w); it != topic_of_word.end()) v[static_cast<std::size_t>(it->second) % dim] += separation;
    wv.add(w, std::move(v));
  }
  return wv;
}

struct CorpusConfig {
  std::size_t videos = 90;
  std::size_t min_signs = 4, max_signs = 8;
  int frames_per_sign = 60;
  double flip = 0.05;
  double confidence = 0.9;
  /// Topic-neutral caption words mixed into every caption.
  std::vector<std::string> filler{"the", "and", "today", "people"};
  std::uint64_t seed = 0;
};

struct Corpus {
  std::vector<Caption> captions;
  ObservationSet observations;  // window ids <video>@<start>-<end>
  std::map<std::string, int> topic_of;
};

/// Videos that each sign a run of signs from one topic; captions list the signs' translations.
inline Corpus make_corpus(const Lexicon& lex, const LexiconConfig& lcfg, const CorpusConfig& cfg) {
  require(lcfg.topics >= 1, "corpus needs a lexicon with topics");
  auto rng = make_rng(cfg.seed);
  std::map<int, std::vector<EntityId>> by_topic;
  for (auto& [s, t] : lex.topic_of) by_topic[t].push_back(s);
  Corpus c;
  for (std::size_t i = 0; i < cfg.videos; ++i) {
    int topic = static_cast<int>(i % lcfg.topics);
    auto id = "vid" + std::to_string(i);
    c.topic_of[id] = topic;
    auto n = cfg.min_signs + uniform_index(rng, cfg.max_signs - cfg.min_signs + 1);
    Caption cap{id, {}};
    const auto& pool = by_topic.at(topic);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = pool[uniform_index(rng, pool.size())];
      Window w{static_cast<int>(k) * cfg.frames_per_sign, static_cast<int>(k + 1) * cfg.frames_per_sign};
      c.observations.observations.push_back(
          noisy_observation(lex, lcfg, s, segment_id(id, w), cfg.flip, cfg.confidence, rng));
      for (auto& [word, _] : translations(lex.graph, s)) cap.lemmas.push_back(word);
      cap.lemmas.push_back(cfg.filler[uniform_index(rng, cfg.filler.size())]);
    }
    c.captions.push_back(std::move(cap));
  }
  return c;
}

}  // namespace kgns::synthetic
