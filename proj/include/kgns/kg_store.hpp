#pragma once

// Triple store for a sign lexicon: typed entities, typed relations, facts,
// relation-type partitions, degree statistics and fold assignment.

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgns/common.hpp"

namespace kgns {

enum class Namespace : std::uint8_t { asl, en, phoneme, semfeat, video, literal };

inline constexpr std::array<Namespace, 6> kAllNamespaces = {Namespace::asl,     Namespace::en,
                                                            Namespace::phoneme, Namespace::semfeat,
                                                            Namespace::video,   Namespace::literal};

inline std::string_view namespace_prefix(Namespace ns) {
  switch (ns) {
    case Namespace::asl: return "asl";
    case Namespace::en: return "en";
    case Namespace::phoneme: return "phoneme";
    case Namespace::semfeat: return "semfeat";
    case Namespace::video: return "video";
    case Namespace::literal: return "lit";
  }
  return "?";
}

inline std::optional<Namespace> parse_namespace(std::string_view prefix) {
  for (auto ns : kAllNamespaces)
    if (namespace_prefix(ns) == prefix) return ns;
  return std::nullopt;
}

/// An entity key. Literal entities additionally carry their parsed numeric value.
class EntityId {
 public:
  EntityId() = default;

  EntityId(Namespace ns, std::string label) : ns_(ns), label_(std::move(label)) {
    if (label_.empty()) throw PreconditionError("malformed entity: empty label in namespace '" +
                                                std::string(namespace_prefix(ns_)) + "'");
    if (ns_ == Namespace::literal) {
      value_ = parse_number(label_);
      if (!value_) throw PreconditionError("malformed literal entity: '" + label_ + "' is not a decimal number");
    }
  }

  static EntityId literal(std::string text) { return EntityId(Namespace::literal, std::move(text)); }

  /// Parses "prefix:label", e.g. "asl:read", "phoneme:V", "lit:4.053".
  static EntityId parse(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos)
      throw PreconditionError("malformed entity '" + std::string(text) + "': missing namespace prefix");
    auto ns = parse_namespace(text.substr(0, colon));
    if (!ns) throw PreconditionError("malformed entity '" + std::string(text) + "': unknown namespace");
    return EntityId(*ns, std::string(text.substr(colon + 1)));
  }

  Namespace ns() const noexcept { return ns_; }
  const std::string& label() const noexcept { return label_; }
  std::optional<double> value() const noexcept { return value_; }
  bool is_literal() const noexcept { return ns_ == Namespace::literal; }

  std::string str() const { return std::string(namespace_prefix(ns_)) + ":" + label_; }

  friend bool operator==(const EntityId& a, const EntityId& b) {
    return a.ns_ == b.ns_ && a.label_ == b.label_;
  }
  friend auto operator<=>(const EntityId& a, const EntityId& b) {
    if (auto c = a.ns_ <=> b.ns_; c != 0) return c;
    return a.label_.compare(b.label_) <=> 0;
  }

 private:
  Namespace ns_ = Namespace::asl;
  std::string label_;
  std::optional<double> value_;
};

enum class RelType : std::uint8_t {
  phonetic,
  phonological,
  morphological,
  syntactic,
  semantic,
  translation,
  systematicity,
  statistical,
  cognitive,
  meta
};

inline constexpr std::array<RelType, 10> kAllRelTypes = {
    RelType::phonetic,    RelType::phonological,  RelType::morphological, RelType::syntactic,
    RelType::semantic,    RelType::translation,   RelType::systematicity, RelType::statistical,
    RelType::cognitive,   RelType::meta};

inline std::string_view rel_type_name(RelType t) {
  switch (t) {
    case RelType::phonetic: return "phonetic";
    case RelType::phonological: return "phonological";
    case RelType::morphological: return "morphological";
    case RelType::syntactic: return "syntactic";
    case RelType::semantic: return "semantic";
    case RelType::translation: return "translation";
    case RelType::systematicity: return "systematicity";
    case RelType::statistical: return "statistical";
    case RelType::cognitive: return "cognitive";
    case RelType::meta: return "meta";
  }
  return "?";
}

inline RelType parse_rel_type(std::string_view s) {
  auto l = to_lower(trim(s));
  for (auto t : kAllRelTypes)
    if (rel_type_name(t) == l) return t;
  throw PreconditionError("unknown relation type '" + std::string(s) + "'");
}

/// Relation names are lowercased; anything outside [a-z0-9_.] becomes '_'.
inline std::string normalize_relation_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : trim(name)) {
    auto u = static_cast<unsigned char>(c);
    char l = static_cast<char>(std::tolower(u));
    if (std::isalnum(u) || l == '_' || l == '.')
      out += l;
    else
      out += '_';
  }
  return out;
}

struct RelationId {
  std::string name;
  RelType type = RelType::meta;

  RelationId() = default;
  RelationId(std::string_view n, RelType t) : name(normalize_relation_name(n)), type(t) {
    if (name.empty()) throw PreconditionError("malformed relation: empty name");
  }

  friend bool operator==(const RelationId&, const RelationId&) = default;
  friend auto operator<=>(const RelationId& a, const RelationId& b) {
    if (auto c = a.name.compare(b.name) <=> 0; c != 0) return c;
    return a.type <=> b.type;
  }
};

struct Fact {
  EntityId head;
  RelationId relation;
  EntityId tail;
  std::string source;

  RelType type() const noexcept { return relation.type; }

  /// Identity ignores the source label.
  bool same_triple(const Fact& o) const {
    return head == o.head && relation.name == o.relation.name && tail == o.tail;
  }
};

/// Literal tails are accepted for these relation types only.
inline bool allows_literal_tail(RelType t) {
  return t == RelType::statistical || t == RelType::phonetic || t == RelType::cognitive ||
         t == RelType::semantic;
}

inline std::string merge_sources(std::string_view a, std::string_view b) {
  std::set<std::string> all;
  for (auto& s : split(a, ',')) if (!s.empty()) all.insert(s);
  for (auto& s : split(b, ',')) if (!s.empty()) all.insert(s);
  return join(std::vector<std::string>(all.begin(), all.end()), ",");
}

/// Entities, relations and facts. Mutable until freeze(); read-only afterwards.
class KnowledgeGraph {
 public:
  using Index = std::uint32_t;

  /// Registers an entity with no facts. Returns its index.
  Index add_entity(const EntityId& e) {
    check_mutable();
    return intern(e);
  }

  /// Inserts a fact. Duplicate triples are a no-op apart from merging the source label.
  /// Returns true when the triple was new.
  bool add_fact(const Fact& f) {
    check_mutable();
    validate(f);
    Index r = intern_relation(f.relation);
    Index h = intern(f.head);
    Index t = intern(f.tail);
    TripleKey key{h, r, t};
    if (auto it = triples_.find(key); it != triples_.end()) {
      auto& existing = facts_[it->second];
      existing.source = merge_sources(existing.source, f.source);
      return false;
    }
    auto idx = facts_.size();
    facts_.push_back(f);
    facts_.back().relation = relations_[r];
    triples_.emplace(key, idx);
    out_[h].push_back(idx);
    in_[t].push_back(idx);
    return true;
  }

  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  const std::vector<EntityId>& entities() const noexcept { return entities_; }
  const std::vector<RelationId>& relations() const noexcept { return relations_; }
  const std::vector<Fact>& facts() const noexcept { return facts_; }
  std::size_t size() const noexcept { return facts_.size(); }
  bool empty() const noexcept { return facts_.empty(); }

  std::optional<Index> index_of(const EntityId& e) const {
    auto it = entity_index_.find(e.str());
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
  }
  bool has_entity(const EntityId& e) const { return index_of(e).has_value(); }

  const RelationId* relation(std::string_view name) const {
    auto it = relation_index_.find(normalize_relation_name(name));
    return it == relation_index_.end() ? nullptr : &relations_[it->second];
  }

  bool contains(const EntityId& h, std::string_view relation_name, const EntityId& t) const {
    auto hi = index_of(h), ti = index_of(t);
    auto ri = relation_index_.find(normalize_relation_name(relation_name));
    if (!hi || !ti || ri == relation_index_.end()) return false;
    return triples_.count(TripleKey{*hi, ri->second, *ti}) > 0;
  }
  bool contains(const Fact& f) const { return contains(f.head, f.relation.name, f.tail); }

  /// Indices into facts() where the entity is head (outgoing) or tail (incoming).
  const std::vector<std::size_t>& outgoing(Index e) const { return out_.at(e); }
  const std::vector<std::size_t>& incoming(Index e) const { return in_.at(e); }

  std::vector<std::size_t> outgoing(const EntityId& e) const {
    auto i = index_of(e);
    return i ? out_[*i] : std::vector<std::size_t>{};
  }
  std::vector<std::size_t> incoming(const EntityId& e) const {
    auto i = index_of(e);
    return i ? in_[*i] : std::vector<std::size_t>{};
  }

  /// Entities of one namespace, ordered by label.
  std::vector<EntityId> entities_in(Namespace ns) const {
    std::vector<EntityId> out;
    for (auto& e : entities_)
      if (e.ns() == ns) out.push_back(e);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Tails of `entity`'s facts under one relation, in insertion order.
  std::vector<EntityId> objects(const EntityId& entity, std::string_view relation_name) const {
    std::vector<EntityId> out;
    auto name = normalize_relation_name(relation_name);
    for (auto fi : outgoing(entity))
      if (facts_[fi].relation.name == name) out.push_back(facts_[fi].tail);
    return out;
  }

  /// Rebuilds a graph from the facts accepted by `keep`, optionally rewriting each.
  template <typename Keep, typename Rewrite>
  KnowledgeGraph rebuild(Keep&& keep, Rewrite&& rewrite) const {
    KnowledgeGraph g;
    for (auto& f : facts_)
      if (keep(f)) g.add_fact(rewrite(f));
    return g;
  }

  KnowledgeGraph filtered(const std::function<bool(const Fact&)>& keep) const {
    return rebuild(keep, [](const Fact& f) { return f; });
  }

  /// Drops every fact that mentions one of `removed`.
  KnowledgeGraph without_entities(const std::set<EntityId>& removed) const {
    return filtered([&](const Fact& f) { return !removed.count(f.head) && !removed.count(f.tail); });
  }

  /// Equality of the triple sets (sources and insertion order ignored).
  friend bool same_triples(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    if (a.size() != b.size()) return false;
    for (auto& f : a.facts_)
      if (!b.contains(f)) return false;
    return true;
  }

 private:
  struct TripleKey {
    Index h, r, t;
    friend bool operator==(const TripleKey&, const TripleKey&) = default;
  };
  struct TripleHash {
    std::size_t operator()(const TripleKey& k) const noexcept {
      std::uint64_t x = (std::uint64_t(k.h) << 32) ^ (std::uint64_t(k.r) << 48) ^ k.t;
      x ^= x >> 33;
      x *= 0xff51afd7ed558ccdULL;
      x ^= x >> 33;
      return static_cast<std::size_t>(x);
    }
  };

  void check_mutable() const {
    if (frozen_) throw PreconditionError("knowledge graph is frozen");
  }

  void validate(const Fact& f) const {
    if (f.head.label().empty() || f.tail.label().empty())
      throw PreconditionError("malformed entity: empty label");
    if (f.relation.name.empty()) throw PreconditionError("malformed relation: empty name");
    if (f.head.is_literal())
      throw PreconditionError("literal entity '" + f.head.str() + "' cannot be a fact head");
    if (f.tail.is_literal() && !allows_literal_tail(f.relation.type))
      throw PreconditionError("relation '" + f.relation.name + "' of type " +
                              std::string(rel_type_name(f.relation.type)) + " does not accept literal tails");
    if (f.relation.type == RelType::phonological && f.tail.ns() != Namespace::phoneme)
      throw PreconditionError("phonological relation '" + f.relation.name + "' needs a phoneme tail, got " +
                              f.tail.str());
    if (auto it = relation_index_.find(f.relation.name);
        it != relation_index_.end() && relations_[it->second].type != f.relation.type)
      throw PreconditionError("relation '" + f.relation.name + "' already has type " +
                              std::string(rel_type_name(relations_[it->second].type)));
  }

  Index intern(const EntityId& e) {
    auto [it, inserted] = entity_index_.emplace(e.str(), static_cast<Index>(entities_.size()));
    if (inserted) {
      entities_.push_back(e);
      out_.emplace_back();
      in_.emplace_back();
    }
    return it->second;
  }

  Index intern_relation(const RelationId& r) {
    auto [it, inserted] = relation_index_.emplace(r.name, static_cast<Index>(relations_.size()));
    if (inserted) relations_.push_back(r);
    return it->second;
  }

  bool frozen_ = false;
  std::vector<EntityId> entities_;
  std::unordered_map<std::string, Index> entity_index_;
  std::vector<RelationId> relations_;
  std::unordered_map<std::string, Index> relation_index_;
  std::vector<Fact> facts_;
  std::unordered_map<TripleKey, std::size_t, TripleHash> triples_;
  std::vector<std::vector<std::size_t>> out_, in_;
};

// ---------------------------------------------------------------------------
// Queries

inline std::vector<Fact> facts_of_type(const KnowledgeGraph& g, RelType t) {
  std::vector<Fact> out;
  for (auto& f : g.facts())
    if (f.type() == t) out.push_back(f);
  return out;
}

struct DegreeStats {
  double avg_in = 0, sd_in = 0, avg_out = 0, sd_out = 0;
  std::size_t population = 0;
};

/// In/out-degree moments over the entities of one namespace (population standard deviation).
inline DegreeStats degree_stats(const KnowledgeGraph& g, Namespace language) {
  std::vector<double> ins, outs;
  for (std::size_t i = 0; i < g.entities().size(); ++i) {
    if (g.entities()[i].ns() != language) continue;
    auto idx = static_cast<KnowledgeGraph::Index>(i);
    ins.push_back(static_cast<double>(g.incoming(idx).size()));
    outs.push_back(static_cast<double>(g.outgoing(idx).size()));
  }
  if (ins.empty())
    throw PreconditionError("no population: graph has no entities in namespace '" +
                            std::string(namespace_prefix(language)) + "'");
  auto moments = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };
  DegreeStats s;
  std::tie(s.avg_in, s.sd_in) = moments(ins);
  std::tie(s.avg_out, s.sd_out) = moments(outs);
  s.population = ins.size();
  return s;
}

/// Facts whose tail is a lexical item, phoneme or semantic feature.
inline std::vector<Fact> subgraph_for_embedding(const KnowledgeGraph& g) {
  std::vector<Fact> out;
  for (auto& f : g.facts()) {
    auto ns = f.tail.ns();
    if (ns == Namespace::asl || ns == Namespace::en || ns == Namespace::phoneme || ns == Namespace::semfeat)
      out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Folds

inline constexpr int kSignFolds = 10;
inline constexpr int kInstanceFolds = 5;

struct FoldAssignment {
  std::map<EntityId, int> sign_folds;
  std::map<EntityId, int> instance_folds;

  friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;

  std::set<EntityId> signs_in(int fold) const {
    std::set<EntityId> out;
    for (auto& [e, f] : sign_folds)
      if (f == fold) out.insert(e);
    return out;
  }
  std::set<EntityId> instances_in(int fold) const {
    std::set<EntityId> out;
    for (auto& [e, f] : instance_folds)
      if (f == fold) out.insert(e);
    return out;
  }
};

/// The sign a video example demonstrates; exactly one linked asl entity is required.
inline EntityId sign_of_video(const KnowledgeGraph& g, const EntityId& video) {
  std::set<EntityId> signs;
  for (auto fi : g.outgoing(video))
    if (g.facts()[fi].tail.ns() == Namespace::asl) signs.insert(g.facts()[fi].tail);
  for (auto fi : g.incoming(video))
    if (g.facts()[fi].head.ns() == Namespace::asl) signs.insert(g.facts()[fi].head);
  if (signs.empty()) throw PreconditionError("orphan video entity '" + video.str() + "' has no sign link");
  if (signs.size() > 1)
    throw PreconditionError("video entity '" + video.str() + "' is linked to " + std::to_string(signs.size()) +
                            " signs");
  return *signs.begin();
}

/// Ten balanced sign folds and five instance folds stratified per sign; a pure function of (graph, seed).
inline FoldAssignment assign_folds(const KnowledgeGraph& g, std::uint64_t seed) {
  FoldAssignment out;
  auto rng = make_rng(seed);

  auto signs = g.entities_in(Namespace::asl);
  std::shuffle(signs.begin(), signs.end(), rng);
  for (std::size_t i = 0; i < signs.size(); ++i) out.sign_folds[signs[i]] = static_cast<int>(i % kSignFolds);

  std::map<EntityId, std::vector<EntityId>> videos_by_sign;
  for (auto& v : g.entities_in(Namespace::video)) videos_by_sign[sign_of_video(g, v)].push_back(v);

  // Each video goes to the fold holding the fewest videos of its sign, then the fewest
  // videos overall, then the lowest index.
  std::array<std::size_t, kInstanceFolds> total{};
  for (auto& [sign, videos] : videos_by_sign) {
    std::shuffle(videos.begin(), videos.end(), rng);
    std::array<std::size_t, kInstanceFolds> mine{};
    for (auto& v : videos) {
      int best = 0;
      for (int f = 1; f < kInstanceFolds; ++f)
        if (std::pair{mine[f], total[f]} < std::pair{mine[best], total[best]}) best = f;
      ++mine[best];
      ++total[best];
      out.instance_folds[v] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fact file: head<TAB>relation<TAB>tail<TAB>rel_type<TAB>source

inline Fact parse_fact_line(std::string_view line, std::size_t line_no = 0) {
  auto cols = split(line, '\t');
  if (cols.size() != 5)
    throw ParseError("expected 5 tab-separated columns, got " + std::to_string(cols.size()), line_no);
  try {
    return Fact{EntityId::parse(cols[0]), RelationId(cols[1], parse_rel_type(cols[3])), EntityId::parse(cols[2]),
                cols[4]};
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), line_no);
  }
}

inline KnowledgeGraph read_facts(std::istream& in) {
  KnowledgeGraph g;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    auto f = parse_fact_line(line, n);
    try {
      g.add_fact(f);
    } catch (const PreconditionError& e) {
      throw ParseError(e.what(), n);
    }
  }
  g.freeze();
  return g;
}

inline KnowledgeGraph read_fact_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fact file '" + path + "'");
  return read_facts(in);
}

inline void write_facts(std::ostream& out, const KnowledgeGraph& g) {
  for (auto& f : g.facts())
    out << f.head.str() << '\t' << f.relation.name << '\t' << f.tail.str() << '\t' << rel_type_name(f.type())
        << '\t' << f.source << '\n';
}

inline void write_fact_file(const std::string& path, const KnowledgeGraph& g) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write fact file '" + path + "'");
  write_facts(out, g);
}

inline void write_fold_map(std::ostream& out, const std::map<EntityId, int>& folds) {
  for (auto& [e, f] : folds) out << e.str() << '\t' << f << '\n';
}

inline std::map<EntityId, int> read_fold_map(std::istream& in) {
  std::map<EntityId, int> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty() || line.front() == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw ParseError("expected 'entity<TAB>fold'", n);
    auto v = parse_number(cols[1]);
    if (!v || *v != std::floor(*v) || *v < 0) throw ParseError("bad fold index '" + cols[1] + "'", n);
    out[EntityId::parse(cols[0])] = static_cast<int>(*v);
  }
  return out;
}

inline std::map<EntityId, int> read_fold_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fold file '" + path + "'");
  return read_fold_map(in);
}

}  // namespace kgns
