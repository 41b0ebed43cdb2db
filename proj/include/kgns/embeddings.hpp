#pragma once

// Fact-verification embeddings: TransE and DistMult scorers trained with a
// margin ranking loss against namespace-preserving corrupted facts.

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgns/common.hpp"
#include "kgns/kg_store.hpp"

namespace kgns {

enum class Scorer { transe, distmult };

inline std::string_view scorer_name(Scorer s) { return s == Scorer::transe ? "transe" : "distmult"; }

inline Scorer parse_scorer(std::string_view s) {
  auto l = to_lower(s);
  if (l == "transe") return Scorer::transe;
  if (l == "distmult") return Scorer::distmult;
  throw PreconditionError("unknown scorer '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Scoring functions and their gradients. Higher scores mean more plausible facts.

/// -||h + r - t||_2
template <typename T>
T transe_score(std::span<const T> h, std::span<const T> r, std::span<const T> t) {
  T sq = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    T d = h[i] + r[i] - t[i];
    sq += d * d;
  }
  return -std::sqrt(sq);
}

/// sum_i h_i r_i t_i
template <typename T>
T distmult_score(std::span<const T> h, std::span<const T> r, std::span<const T> t) {
  T s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * r[i] * t[i];
  return s;
}

template <typename T>
T score(Scorer kind, std::span<const T> h, std::span<const T> r, std::span<const T> t) {
  return kind == Scorer::transe ? transe_score(h, r, t) : distmult_score(h, r, t);
}

template <typename T>
struct ScoreGradient {
  std::vector<T> head, relation, tail;
};

/// d score / d (h, r, t). TransE uses the zero subgradient when h + r = t exactly.
template <typename T>
ScoreGradient<T> score_gradient(Scorer kind, std::span<const T> h, std::span<const T> r, std::span<const T> t) {
  const auto n = h.size();
  ScoreGradient<T> g{std::vector<T>(n), std::vector<T>(n), std::vector<T>(n)};
  if (kind == Scorer::transe) {
    T norm = -transe_score(h, r, t);
    if (norm == T(0)) return g;
    for (std::size_t i = 0; i < n; ++i) {
      T d = (h[i] + r[i] - t[i]) / norm;
      g.head[i] = -d;
      g.relation[i] = -d;
      g.tail[i] = d;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      g.head[i] = r[i] * t[i];
      g.relation[i] = h[i] * t[i];
      g.tail[i] = h[i] * r[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

/// Learned vectors for entities and relations. Components are stored as float so the
/// 9-significant-digit file format round-trips exactly.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  EmbeddingSpace(int dim, Scorer scorer) : dim_(dim), scorer_(scorer) {
    require(dim > 0, "embedding dim must be positive, got ", dim);
  }

  int dim() const noexcept { return dim_; }
  Scorer scorer() const noexcept { return scorer_; }
  std::size_t entity_count() const noexcept { return entity_ids_.size(); }
  std::size_t relation_count() const noexcept { return relation_names_.size(); }
  const std::vector<EntityId>& entities() const noexcept { return entity_ids_; }
  const std::vector<std::string>& relations() const noexcept { return relation_names_; }

  std::size_t add_entity(const EntityId& e) {
    auto [it, inserted] = entity_index_.emplace(e.str(), entity_ids_.size());
    if (inserted) {
      entity_ids_.push_back(e);
      entity_data_.resize(entity_data_.size() + static_cast<std::size_t>(dim_), 0.0f);
    }
    return it->second;
  }

  std::size_t add_relation(const std::string& name) {
    auto key = normalize_relation_name(name);
    auto [it, inserted] = relation_index_.emplace(key, relation_names_.size());
    if (inserted) {
      relation_names_.push_back(key);
      relation_data_.resize(relation_data_.size() + static_cast<std::size_t>(dim_), 0.0f);
    }
    return it->second;
  }

  std::optional<std::size_t> entity_slot(const EntityId& e) const {
    auto it = entity_index_.find(e.str());
    return it == entity_index_.end() ? std::nullopt : std::optional(it->second);
  }
  std::optional<std::size_t> relation_slot(std::string_view name) const {
    auto it = relation_index_.find(normalize_relation_name(name));
    return it == relation_index_.end() ? std::nullopt : std::optional(it->second);
  }
  bool has_entity(const EntityId& e) const { return entity_slot(e).has_value(); }

  std::span<float> entity_vector(std::size_t slot) {
    return {entity_data_.data() + slot * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<const float> entity_vector(std::size_t slot) const {
    return {entity_data_.data() + slot * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<float> relation_vector(std::size_t slot) {
    return {relation_data_.data() + slot * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<const float> relation_vector(std::size_t slot) const {
    return {relation_data_.data() + slot * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  std::span<const float> entity_vector(const EntityId& e) const {
    auto s = entity_slot(e);
    if (!s) throw PreconditionError("entity '" + e.str() + "' has no embedding");
    return entity_vector(*s);
  }
  std::span<const float> relation_vector(std::string_view name) const {
    auto s = relation_slot(name);
    if (!s) throw PreconditionError("relation '" + std::string(name) + "' has no embedding");
    return relation_vector(*s);
  }

  double score(const EntityId& h, std::string_view relation, const EntityId& t) const {
    auto hv = widen(entity_vector(h)), rv = widen(relation_vector(relation)), tv = widen(entity_vector(t));
    return kgns::score<double>(scorer_, hv, rv, tv);
  }
  double score(const Fact& f) const { return score(f.head, f.relation.name, f.tail); }

  friend bool operator==(const EmbeddingSpace& a, const EmbeddingSpace& b) {
    return a.dim_ == b.dim_ && a.scorer_ == b.scorer_ && a.entity_ids_ == b.entity_ids_ &&
           a.relation_names_ == b.relation_names_ && a.entity_data_ == b.entity_data_ &&
           a.relation_data_ == b.relation_data_;
  }

  static std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

 private:
  int dim_ = 0;
  Scorer scorer_ = Scorer::transe;
  std::vector<EntityId> entity_ids_;
  std::unordered_map<std::string, std::size_t> entity_index_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, std::size_t> relation_index_;
  std::vector<float> entity_data_, relation_data_;
};

inline double score(const EmbeddingSpace& space, const Fact& f) { return space.score(f); }

/// Plausibility in (0, 1): the logistic of the score.
inline double verify(const EmbeddingSpace& space, const Fact& f) { return logistic(space.score(f)); }

inline std::vector<float> node_embedding(const EmbeddingSpace& space, const EntityId& e) {
  auto v = space.entity_vector(e);
  return {v.begin(), v.end()};
}

// ---------------------------------------------------------------------------
// Negative sampling

inline constexpr int kMaxCorruptionAttempts = 1000;

/// Corrupts head or tail with a uniformly drawn entity of the same namespace,
/// rejecting candidates that are known facts.
class NegativeSampler {
 public:
  /// Candidate pools are the graph's entities, per namespace.
  explicit NegativeSampler(const KnowledgeGraph& g) : graph_(&g) {
    for (auto& e : g.entities()) pools_[static_cast<std::size_t>(e.ns())].push_back(e);
  }

  /// Candidate pools restricted to the heads and tails of `facts`, in first-seen order.
  NegativeSampler(const KnowledgeGraph& g, const std::vector<Fact>& facts) : graph_(&g) {
    std::set<EntityId> seen;
    for (auto& f : facts)
      for (auto* e : {&f.head, &f.tail})
        if (seen.insert(*e).second) pools_[static_cast<std::size_t>(e->ns())].push_back(*e);
  }

  Fact sample(const Fact& f, Rng& rng) const {
    for (int attempt = 0; attempt < kMaxCorruptionAttempts; ++attempt) {
      bool corrupt_head = std::bernoulli_distribution(0.5)(rng);
      const auto& slot = corrupt_head ? f.head : f.tail;
      const auto& pool = pools_[static_cast<std::size_t>(slot.ns())];
      if (pool.empty()) continue;
      Fact neg = f;
      (corrupt_head ? neg.head : neg.tail) = pool[uniform_index(rng, pool.size())];
      if (!graph_->contains(neg)) return neg;
    }
    throw Error("graph too dense to corrupt: " + std::to_string(kMaxCorruptionAttempts) +
                " consecutive corrupted facts of (" + f.head.str() + ", " + f.relation.name + ", " + f.tail.str() +
                ") were all true facts");
  }

 private:
  const KnowledgeGraph* graph_;
  std::array<std::vector<EntityId>, kAllNamespaces.size()> pools_;
};

inline Fact sample_negative(const KnowledgeGraph& g, const Fact& f, Rng& rng) {
  return NegativeSampler(g).sample(f, rng);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 100;
  int dim = 32;
  double margin = 1.0;
  double learning_rate = 0.01;
  int negatives_per_positive = 1;
  std::uint64_t seed = 0;
  Scorer scorer = Scorer::transe;
};

inline void normalize_unit(std::span<float> v) {
  double sq = 0;
  for (float x : v) sq += double(x) * x;
  if (sq <= 0) return;
  auto inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(x * inv);
}

/// Negatives per positive in the fixed sample used to report epoch losses.
inline constexpr int kLossProbeNegatives = 10;

/// Trains on the embedding subgraph of `graph` with SGD on the margin ranking loss.
/// `epoch_losses`, when given, receives after every epoch the hinge loss summed over positives
/// and averaged over a fixed negative sample drawn once before training.
inline EmbeddingSpace train(const KnowledgeGraph& graph, const TrainConfig& cfg,
                            std::vector<double>* epoch_losses = nullptr) {
  require(cfg.epochs >= 1, "epochs must be >= 1, got ", cfg.epochs);
  require(cfg.margin > 0, "margin must be > 0");
  require(cfg.learning_rate > 0, "learning rate must be > 0");
  require(cfg.negatives_per_positive >= 1, "negatives_per_positive must be >= 1");
  auto positives = subgraph_for_embedding(graph);
  require(!positives.empty(), "embedding subgraph is empty");

  auto rng = make_rng(cfg.seed);
  EmbeddingSpace space(cfg.dim, cfg.scorer);
  for (auto& f : positives) {
    space.add_entity(f.head);
    space.add_entity(f.tail);
  }
  for (auto& f : positives) space.add_relation(f.relation.name);

  const double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
  std::uniform_real_distribution<double> init(-bound, bound);
  for (std::size_t e = 0; e < space.entity_count(); ++e) {
    for (float& x : space.entity_vector(e)) x = static_cast<float>(init(rng));
    if (cfg.scorer == Scorer::transe) normalize_unit(space.entity_vector(e));
  }
  for (std::size_t r = 0; r < space.relation_count(); ++r)
    for (float& x : space.relation_vector(r)) x = static_cast<float>(init(rng));

  NegativeSampler sampler(graph, positives);
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  struct Slots {
    std::size_t h, r, t;
  };
  auto slots_of = [&](const Fact& f) {
    return Slots{*space.entity_slot(f.head), *space.relation_slot(f.relation.name), *space.entity_slot(f.tail)};
  };
  auto grad_of = [&](const Slots& s) {
    auto h = EmbeddingSpace::widen(space.entity_vector(s.h));
    auto r = EmbeddingSpace::widen(space.relation_vector(s.r));
    auto t = EmbeddingSpace::widen(space.entity_vector(s.t));
    return std::pair{kgns::score<double>(cfg.scorer, h, r, t), score_gradient<double>(cfg.scorer, h, r, t)};
  };
  auto apply = [&](std::span<float> v, const std::vector<double>& g, double step) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i] + step * g[i]);
  };

  std::vector<std::pair<Slots, Slots>> probe;
  if (epoch_losses) {
    auto probe_rng = make_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    for (auto& pos : positives)
      for (int k = 0; k < kLossProbeNegatives; ++k)
        probe.emplace_back(slots_of(pos), slots_of(sampler.sample(pos, probe_rng)));
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (auto pi : order) {
      const auto& pos = positives[pi];
      for (int k = 0; k < cfg.negatives_per_positive; ++k) {
        auto neg = sampler.sample(pos, rng);
        auto ps = slots_of(pos), ns = slots_of(neg);
        auto [pos_score, pos_grad] = grad_of(ps);
        auto [neg_score, neg_grad] = grad_of(ns);
        double loss = cfg.margin + neg_score - pos_score;
        if (!std::isfinite(loss))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                             " (learning rate " + format_real(cfg.learning_rate) + " too high?)");
        if (loss <= 0) continue;
        const double lr = cfg.learning_rate;
        apply(space.entity_vector(ps.h), pos_grad.head, lr);
        apply(space.relation_vector(ps.r), pos_grad.relation, lr);
        apply(space.entity_vector(ps.t), pos_grad.tail, lr);
        apply(space.entity_vector(ns.h), neg_grad.head, -lr);
        apply(space.relation_vector(ns.r), neg_grad.relation, -lr);
        apply(space.entity_vector(ns.t), neg_grad.tail, -lr);
        if (cfg.scorer == Scorer::transe)
          for (auto e : {ps.h, ps.t, ns.h, ns.t}) normalize_unit(space.entity_vector(e));
      }
    }
    if (epoch_losses) {
      double epoch_loss = 0;
      for (auto& [p, n] : probe) epoch_loss += std::max(0.0, cfg.margin + grad_of(n).first - grad_of(p).first);
      if (!std::isfinite(epoch_loss))
        throw NumericError("non-finite epoch loss at epoch " + std::to_string(epoch));
      epoch_losses->push_back(epoch_loss / kLossProbeNegatives);
    }
  }
  return space;
}

/// Probability that a random positive outscores a random negative (ties count half).
inline double ranking_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  require(!positives.empty() && !negatives.empty(), "AUC needs positives and negatives");
  double wins = 0;
  for (double p : positives)
    for (double n : negatives) wins += p > n ? 1.0 : p == n ? 0.5 : 0.0;
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

// ---------------------------------------------------------------------------
// Embedding file:
//   dim=<n> scorer=<name>
//   entity<TAB><id><TAB>v1 v2 ... vn
//   relation<TAB><name><TAB>v1 v2 ... vn

inline void write_vector(std::ostream& out, std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_real(v[i], 9);
}

inline void save_embeddings(std::ostream& out, const EmbeddingSpace& space) {
  out << "dim=" << space.dim() << " scorer=" << scorer_name(space.scorer()) << '\n';
  for (std::size_t e = 0; e < space.entity_count(); ++e) {
    out << "entity\t" << space.entities()[e].str() << '\t';
    write_vector(out, space.entity_vector(e));
    out << '\n';
  }
  for (std::size_t r = 0; r < space.relation_count(); ++r) {
    out << "relation\t" << space.relations()[r] << '\t';
    write_vector(out, space.relation_vector(r));
    out << '\n';
  }
}

inline std::vector<float> parse_vector(std::string_view text, int dim, std::size_t line) {
  auto toks = tokenize(text);
  if (static_cast<int>(toks.size()) != dim)
    throw ParseError("expected " + std::to_string(dim) + " components, got " + std::to_string(toks.size()), line);
  std::vector<float> v;
  v.reserve(toks.size());
  for (auto& t : toks) {
    double x = parse_real(t, line);
    if (!std::isfinite(x)) throw ParseError("non-finite component", line);
    v.push_back(static_cast<float>(x));
  }
  return v;
}

inline EmbeddingSpace load_embeddings(std::istream& in) {
  std::string line;
  std::size_t n = 1;
  if (!std::getline(in, line)) throw ParseError("empty embedding file");
  int dim = 0;
  std::string scorer;
  for (auto& tok : tokenize(line)) {
    if (tok.rfind("dim=", 0) == 0) dim = static_cast<int>(parse_real(tok.substr(4), n));
    if (tok.rfind("scorer=", 0) == 0) scorer = tok.substr(7);
  }
  if (dim <= 0 || scorer.empty()) throw ParseError("header must be 'dim=<n> scorer=<name>'", n);
  EmbeddingSpace space(dim, parse_scorer(scorer));
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 3) throw ParseError("expected 'kind<TAB>id<TAB>vector'", n);
    auto v = parse_vector(cols[2], dim, n);
    std::span<float> dst;
    if (cols[0] == "entity") {
      try {
        dst = space.entity_vector(space.add_entity(EntityId::parse(cols[1])));
      } catch (const PreconditionError& e) {
        throw ParseError(e.what(), n);
      }
    } else if (cols[0] == "relation") {
      dst = space.relation_vector(space.add_relation(cols[1]));
    } else {
      throw ParseError("unknown element kind '" + cols[0] + "'", n);
    }
    std::copy(v.begin(), v.end(), dst.begin());
  }
  return space;
}

inline void save_embedding_file(const std::string& path, const EmbeddingSpace& space) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embedding file '" + path + "'");
  save_embeddings(out, space);
}

inline EmbeddingSpace load_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file '" + path + "'");
  return load_embeddings(in);
}

}  // namespace kgns
