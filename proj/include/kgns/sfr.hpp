#pragma once

// Semantic feature recognition for unseen signs: phonology -> semantic features
// (phi_to_sigma) and the inverse (sigma_to_phi).

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgns/common.hpp"
#include "kgns/embeddings.hpp"
#include "kgns/grounding.hpp"
#include "kgns/isr.hpp"
#include "kgns/kg_store.hpp"
#include "kgns/nn.hpp"

namespace kgns {

enum class SfrDirection { phi_to_sigma, sigma_to_phi };
enum class SfrKind { mlp, linear };

inline SfrDirection parse_direction(std::string_view s) {
  if (s == "phi_to_sigma") return SfrDirection::phi_to_sigma;
  if (s == "sigma_to_phi") return SfrDirection::sigma_to_phi;
  throw PreconditionError("unknown SFR direction '" + std::string(s) + "'");
}
inline std::string_view direction_name(SfrDirection d) {
  return d == SfrDirection::phi_to_sigma ? "phi_to_sigma" : "sigma_to_phi";
}
inline SfrKind parse_sfr_kind(std::string_view s) {
  if (s == "mlp") return SfrKind::mlp;
  if (s == "linear") return SfrKind::linear;
  throw PreconditionError("unknown SFR model kind '" + std::string(s) + "'");
}

/// How a sign's semantic feature set is read from the graph: semfeat tails of semantic
/// facts, plus numeric semantic relations binarized at a per-relation threshold.
struct SemanticExtraction {
  std::map<std::string, double> numeric_thresholds;  // relation -> value at or above which the feature holds

  /// Adds a midpoint-of-range threshold for every numeric semantic relation of `g` not already listed.
  SemanticExtraction with_midpoints(const KnowledgeGraph& g) const {
    std::map<std::string, std::pair<double, double>> range;
    for (auto& f : g.facts()) {
      if (f.type() != RelType::semantic || !f.tail.is_literal()) continue;
      double v = *f.tail.value();
      auto [it, fresh] = range.try_emplace(f.relation.name, v, v);
      if (!fresh) it->second = {std::min(it->second.first, v), std::max(it->second.second, v)};
    }
    auto out = *this;
    for (auto& [rel, r] : range) out.numeric_thresholds.try_emplace(rel, (r.first + r.second) / 2);
    return out;
  }
};

inline std::set<EntityId> semantic_features(const KnowledgeGraph& g, const EntityId& sign,
                                            const SemanticExtraction& ex = {},
                                            const std::function<void(const Fact&)>& on_read = {}) {
  std::set<EntityId> out;
  for (auto fi : g.outgoing(sign)) {
    const auto& f = g.facts()[fi];
    if (f.type() != RelType::semantic) continue;
    if (on_read) on_read(f);
    if (f.tail.ns() == Namespace::semfeat) {
      out.insert(f.tail);
    } else if (f.tail.is_literal()) {
      auto it = ex.numeric_thresholds.find(f.relation.name);
      if (it != ex.numeric_thresholds.end() && *f.tail.value() >= it->second)
        out.insert(EntityId(Namespace::semfeat, f.relation.name));
    }
  }
  return out;
}

struct SfrConfig {
  SfrDirection direction = SfrDirection::phi_to_sigma;
  SfrKind kind = SfrKind::mlp;
  EmbeddingInit init = EmbeddingInit::random;
  int epochs = 100;
  std::size_t embed_dim = kPhonemeEmbeddingDim;
  std::vector<std::size_t> hidden{64, 128, 256};
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  SemanticExtraction extraction;
  /// Called for every fact the trainer reads; lets callers audit fold hygiene.
  std::function<void(const Fact&)> on_fact_read;
};

struct SfrExample {
  EntityId sign;
  PhonemeObservation phonology;
  std::set<EntityId> features;
  std::set<std::pair<std::string, std::string>> phonemes;  // gold (type, value) pairs
};

/// Gold examples for `signs`; signs lacking phonology or semantic features are skipped.
inline std::vector<SfrExample> make_sfr_examples(const KnowledgeGraph& g, const PhonologySchema& schema,
                                                 const std::vector<EntityId>& signs, const SemanticExtraction& ex = {},
                                                 const std::function<void(const Fact&)>& on_read = {}) {
  std::vector<SfrExample> out;
  for (auto& s : signs) {
    SfrExample e{s, {}, semantic_features(g, s, ex, on_read), {}};
    for (auto fi : g.outgoing(s)) {
      const auto& f = g.facts()[fi];
      if (f.type() != RelType::phonological) continue;
      if (on_read) on_read(f);
      if (schema.type_index(f.relation.name)) e.phonemes.emplace(f.relation.name, f.tail.label());
    }
    if (e.features.empty() || e.phonemes.empty()) continue;
    e.phonology = one_hot_from_gold(g, schema, s);
    out.push_back(std::move(e));
  }
  return out;
}

/// Per-output scores plus the keys they belong to.
struct ScoredFeatures {
  std::vector<std::string> keys;  // semfeat ids, or "type=value" for sigma_to_phi
  std::vector<double> scores;
};

class SfrModel {
 public:
  SfrModel() = default;
  SfrModel(SfrConfig cfg, PhonemeEncoder phon, PhonologySchema schema, std::vector<EntityId> features, nn::Network net)
      : cfg_(std::move(cfg)), phon_(std::move(phon)), schema_(std::move(schema)), features_(std::move(features)),
        net_(std::move(net)) {
    for (std::size_t i = 0; i < features_.size(); ++i) feature_index_[features_[i]] = i;
    group_offsets_.push_back(0);
    for (std::size_t t = 0; t < schema_.size(); ++t) group_offsets_.push_back(group_offsets_.back() + schema_.values(t).size());
  }

  SfrDirection direction() const noexcept { return cfg_.direction; }
  SfrKind kind() const noexcept { return cfg_.kind; }
  const std::vector<EntityId>& features() const noexcept { return features_; }
  const PhonologySchema& schema() const noexcept { return schema_; }
  const nn::Network& network() const noexcept { return net_; }
  nn::Network& network() noexcept { return net_; }
  const PhonemeEncoder& phoneme_encoder() const noexcept { return phon_; }

  nn::LossSpec loss() const {
    if (cfg_.direction == SfrDirection::phi_to_sigma) return {nn::LossKind::sigmoid_bce, {}};
    return {nn::LossKind::grouped_softmax_ce, group_offsets_};
  }

  nn::Sample encode_phonology(const PhonemeObservation& obs) const {
    require(cfg_.direction == SfrDirection::phi_to_sigma, "model expects semantic features as input");
    return phon_.encode(obs);
  }

  /// Unknown features are ignored; an empty set maps to the zero input.
  nn::Sample encode_semantics(const std::set<EntityId>& feats) const {
    require(cfg_.direction == SfrDirection::sigma_to_phi, "model expects a phoneme observation as input");
    nn::Sample s;
    for (auto& f : feats)
      if (auto it = feature_index_.find(f); it != feature_index_.end()) s.indices.push_back(it->second);
    return s;
  }

  std::vector<double> target_for(const SfrExample& e) const {
    if (cfg_.direction == SfrDirection::phi_to_sigma) {
      std::vector<double> t(features_.size(), 0.0);
      for (auto& f : e.features)
        if (auto it = feature_index_.find(f); it != feature_index_.end()) t[it->second] = 1.0;
      return t;
    }
    std::vector<double> t(group_offsets_.back(), 0.0);
    for (std::size_t ty = 0; ty < schema_.size(); ++ty) {
      std::vector<std::size_t> gold;
      for (auto& [type, value] : e.phonemes)
        if (type == schema_.type(ty))
          if (auto v = schema_.value_index(ty, value)) gold.push_back(*v);
      if (gold.empty()) {
        // Unannotated type: uniform target, so the type contributes no preference.
        for (std::size_t v = 0; v < schema_.values(ty).size(); ++v)
          t[group_offsets_[ty] + v] = 1.0 / static_cast<double>(schema_.values(ty).size());
      } else {
        for (auto v : gold) t[group_offsets_[ty] + v] = 1.0 / static_cast<double>(gold.size());
      }
    }
    return t;
  }

  nn::Sample input_for(const SfrExample& e) const {
    return cfg_.direction == SfrDirection::phi_to_sigma ? encode_phonology(e.phonology) : encode_semantics(e.features);
  }

  ScoredFeatures score(const nn::Sample& input) const {
    ScoredFeatures out;
    out.scores = net_.predict(input, loss());
    if (cfg_.direction == SfrDirection::phi_to_sigma) {
      for (auto& f : features_) out.keys.push_back(f.str());
    } else {
      for (std::size_t t = 0; t < schema_.size(); ++t)
        for (auto& v : schema_.values(t)) out.keys.push_back(schema_.type(t) + "=" + v);
    }
    return out;
  }

  /// Predicted semantic features at `threshold`.
  std::set<EntityId> predict_features(const PhonemeObservation& obs, double threshold) const {
    auto scores = net_.predict(encode_phonology(obs), loss());
    std::set<EntityId> out;
    for (std::size_t i = 0; i < features_.size(); ++i)
      if (scores[i] >= threshold) out.insert(features_[i]);
    return out;
  }
  std::set<EntityId> predict_features(const PhonemeObservation& obs) const { return predict_features(obs, cfg_.threshold); }

  /// Predicted phonology as per-type distributions.
  PhonemeObservation predict_phonology(const std::set<EntityId>& feats, std::string window_id = {}) const {
    auto scores = net_.predict(encode_semantics(feats), loss());
    PhonemeObservation obs{std::move(window_id), {}};
    for (std::size_t t = 0; t < schema_.size(); ++t) {
      FeatureDistribution d{schema_.type(t), {}};
      for (std::size_t v = 0; v < schema_.values(t).size(); ++v) d.probs[schema_.values(t)[v]] = scores[group_offsets_[t] + v];
      obs.distributions.push_back(std::move(d));
    }
    return obs;
  }

  double threshold() const noexcept { return cfg_.threshold; }
  const SemanticExtraction& extraction() const noexcept { return cfg_.extraction; }

 private:
  SfrConfig cfg_;
  PhonemeEncoder phon_;
  PhonologySchema schema_;
  std::vector<EntityId> features_;
  std::map<EntityId, std::size_t> feature_index_;
  std::vector<std::size_t> group_offsets_;
  nn::Network net_;
};

inline ScoredFeatures sfr_predict(const SfrModel& model, const PhonemeObservation& obs) {
  return model.score(model.encode_phonology(obs));
}
inline ScoredFeatures sfr_predict(const SfrModel& model, const std::set<EntityId>& features) {
  return model.score(model.encode_semantics(features));
}

/// Trains on `train_signs` only, reading nothing but `g`. Callers pass a graph from which
/// held-out signs have already been removed (see sfr_train).
inline SfrModel sfr_train_on(const KnowledgeGraph& g, const std::vector<EntityId>& train_signs, const SfrConfig& cfg,
                             const EmbeddingSpace* space = nullptr) {
  if (cfg.init != EmbeddingInit::random) require(space != nullptr, "init ", init_name(cfg.init), " needs an embedding space");
  auto schema = PhonologySchema::from_graph(g);
  auto resolved = cfg;
  resolved.extraction = cfg.extraction.with_midpoints(g);
  auto examples = make_sfr_examples(g, schema, train_signs, resolved.extraction, cfg.on_fact_read);
  require(!examples.empty(), "no training sign has both phonological and semantic annotations");

  std::set<EntityId> feature_set;
  for (auto& e : examples) feature_set.insert(e.features.begin(), e.features.end());
  std::vector<EntityId> features(feature_set.begin(), feature_set.end());
  PhonemeEncoder phon(g, schema);

  std::vector<std::size_t> hidden = cfg.kind == SfrKind::mlp ? cfg.hidden : std::vector<std::size_t>{};
  nn::NetworkSpec spec;
  if (cfg.direction == SfrDirection::phi_to_sigma)
    spec = nn::NetworkSpec{phon.rows(), cfg.embed_dim, phon.types().size(), false, 0, hidden, features.size()};
  else
    spec = nn::NetworkSpec{features.size(), cfg.embed_dim, 0, true, 0, hidden, schema.value_count()};
  nn::Network net(spec, cfg.seed);

  if (space && cfg.init != EmbeddingInit::random) {
    if (cfg.direction == SfrDirection::phi_to_sigma) {
      phon.seed_embeddings(net, *space, cfg.init);
    } else {
      auto want = cfg.init == EmbeddingInit::transe_nodes ? Scorer::transe : Scorer::distmult;
      require(space->scorer() == want, "init ", init_name(cfg.init), " needs a ", scorer_name(want), " space");
      require(static_cast<std::size_t>(space->dim()) == cfg.embed_dim, "init ", init_name(cfg.init), " needs a dim-",
              cfg.embed_dim, " space, got dim ", space->dim());
      for (std::size_t i = 0; i < features.size(); ++i) {
        if (!space->has_entity(features[i]))
          throw PreconditionError("embedding space is missing semantic feature '" + features[i].str() + "'");
        auto v = space->entity_vector(features[i]);
        std::copy(v.begin(), v.end(), net.embedding_row(i).begin());
      }
    }
  }

  SfrModel model(resolved, std::move(phon), std::move(schema), std::move(features), std::move(net));
  std::vector<nn::Sample> samples;
  std::vector<std::vector<double>> targets;
  for (auto& e : examples) {
    samples.push_back(model.input_for(e));
    targets.push_back(model.target_for(e));
  }
  nn::FitConfig fit{cfg.epochs, cfg.batch_size, nn::AdamConfig{cfg.learning_rate}, cfg.seed};
  nn::fit(model.network(), samples, targets, model.loss(), fit);
  return model;
}

/// Removes every fact about the signs of `test_fold`, then trains on the signs of the other folds.
inline SfrModel sfr_train(const KnowledgeGraph& g, const FoldAssignment& folds, int test_fold, const SfrConfig& cfg,
                          const EmbeddingSpace* space = nullptr) {
  auto held_out = folds.signs_in(test_fold);
  auto train_graph = g.without_entities(held_out);
  std::vector<EntityId> train_signs;
  for (auto& [sign, fold] : folds.sign_folds)
    if (fold != test_fold) train_signs.push_back(sign);
  return sfr_train_on(train_graph, train_signs, cfg, space);
}

struct SfrScores {
  double micro_f1 = 0;
  double accuracy = 0;  // exact match of the predicted set
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Micro-F1 over feature decisions and exact-match accuracy. For sigma_to_phi the predicted
/// set is the argmax value of every type the sign is annotated with.
inline SfrScores sfr_evaluate(const SfrModel& model, const std::vector<SfrExample>& test) {
  require(!test.empty(), "empty test set");
  SfrScores s;
  std::size_t exact = 0;
  for (auto& e : test) {
    std::set<std::string> gold, pred;
    if (model.direction() == SfrDirection::phi_to_sigma) {
      for (auto& f : e.features) gold.insert(f.str());
      for (auto& f : model.predict_features(e.phonology)) pred.insert(f.str());
    } else {
      std::set<std::string> types;
      for (auto& [t, v] : e.phonemes) {
        gold.insert(t + "=" + v);
        types.insert(t);
      }
      auto obs = model.predict_phonology(e.features);
      for (auto& d : obs.distributions)
        if (types.count(d.feature_type)) pred.insert(d.feature_type + "=" + d.argmax());
    }
    std::size_t tp = 0;
    for (auto& p : pred) tp += gold.count(p);
    s.tp += tp;
    s.fp += pred.size() - tp;
    s.fn += gold.size() - tp;
    exact += pred == gold;
  }
  auto denom = 2 * s.tp + s.fp + s.fn;
  s.micro_f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(s.tp) / static_cast<double>(denom);
  s.accuracy = static_cast<double>(exact) / static_cast<double>(test.size());
  return s;
}

// Semantic vectors: sparse sign<TAB>feature pairs.
inline void write_semantic_vectors(std::ostream& out, const std::map<EntityId, std::set<EntityId>>& vectors) {
  for (auto& [sign, feats] : vectors)
    for (auto& f : feats) out << sign.str() << '\t' << f.str() << '\n';
}

inline std::map<EntityId, std::set<EntityId>> read_semantic_vectors(std::istream& in) {
  std::map<EntityId, std::set<EntityId>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty() || line.front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw ParseError("expected 'sign<TAB>feature'", n);
    try {
      auto f = EntityId::parse(cols[1]);
      if (f.ns() != Namespace::semfeat) throw ParseError("'" + cols[1] + "' is not a semantic feature", n);
      out[EntityId::parse(cols[0])].insert(f);
    } catch (const PreconditionError& e) {
      throw ParseError(e.what(), n);
    }
  }
  return out;
}

}  // namespace kgns
