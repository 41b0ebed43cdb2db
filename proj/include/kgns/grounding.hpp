#pragma once

// Phoneme observations p(phi | v): per-feature-type distributions over phoneme values,
// loaded from files or derived from a sign's gold annotation.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgns/common.hpp"
#include "kgns/kg_store.hpp"

namespace kgns {

inline constexpr double kDistributionTolerance = 1e-6;

/// Feature types are the graph's phonological relations; each type's vocabulary is the set of
/// phoneme tails seen under it. Both are sorted.
class PhonologySchema {
 public:
  PhonologySchema() = default;

  PhonologySchema(std::vector<std::string> types, std::vector<std::vector<std::string>> values)
      : types_(std::move(types)), values_(std::move(values)) {
    require(types_.size() == values_.size(), "schema: one vocabulary per feature type required");
    for (std::size_t i = 0; i < types_.size(); ++i) {
      type_index_[types_[i]] = i;
      auto& idx = value_index_.emplace_back();
      for (std::size_t j = 0; j < values_[i].size(); ++j) idx[values_[i][j]] = j;
    }
  }

  static PhonologySchema from_graph(const KnowledgeGraph& g) {
    std::map<std::string, std::set<std::string>> vocab;
    for (auto& f : g.facts())
      if (f.type() == RelType::phonological) vocab[f.relation.name].insert(f.tail.label());
    std::vector<std::string> types;
    std::vector<std::vector<std::string>> values;
    for (auto& [t, vs] : vocab) {
      types.push_back(t);
      values.emplace_back(vs.begin(), vs.end());
    }
    return PhonologySchema(std::move(types), std::move(values));
  }

  std::size_t size() const noexcept { return types_.size(); }
  bool empty() const noexcept { return types_.empty(); }
  const std::vector<std::string>& types() const noexcept { return types_; }
  const std::string& type(std::size_t i) const { return types_.at(i); }
  const std::vector<std::string>& values(std::size_t i) const { return values_.at(i); }

  std::optional<std::size_t> type_index(std::string_view t) const {
    auto it = type_index_.find(std::string(t));
    return it == type_index_.end() ? std::nullopt : std::optional(it->second);
  }
  std::optional<std::size_t> value_index(std::size_t type, std::string_view v) const {
    auto& m = value_index_.at(type);
    auto it = m.find(std::string(v));
    return it == m.end() ? std::nullopt : std::optional(it->second);
  }

  /// Total number of (type, value) pairs.
  std::size_t value_count() const {
    std::size_t n = 0;
    for (auto& v : values_) n += v.size();
    return n;
  }

  friend bool operator==(const PhonologySchema& a, const PhonologySchema& b) {
    return a.types_ == b.types_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> types_;
  std::vector<std::vector<std::string>> values_;
  std::unordered_map<std::string, std::size_t> type_index_;
  std::vector<std::unordered_map<std::string, std::size_t>> value_index_;
};

struct FeatureDistribution {
  std::string feature_type;
  std::map<std::string, double> probs;  // phoneme label -> probability

  /// Most probable value; ties go to the smallest label.
  const std::string& argmax() const {
    require(!probs.empty(), "empty distribution for feature type '", feature_type, "'");
    auto best = probs.begin();
    for (auto it = probs.begin(); it != probs.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  }

  double prob(const std::string& value) const {
    auto it = probs.find(value);
    return it == probs.end() ? 0.0 : it->second;
  }

  friend bool operator==(const FeatureDistribution&, const FeatureDistribution&) = default;
};

struct PhonemeObservation {
  std::string window_id;
  std::vector<FeatureDistribution> distributions;

  const FeatureDistribution* find(std::string_view type) const {
    for (auto& d : distributions)
      if (d.feature_type == type) return &d;
    return nullptr;
  }
  const FeatureDistribution& at(std::string_view type) const {
    auto* d = find(type);
    if (!d) throw PreconditionError("observation '" + window_id + "' has no distribution for '" + std::string(type) + "'");
    return *d;
  }

  friend bool operator==(const PhonemeObservation&, const PhonemeObservation&) = default;
};

struct ObservationSet {
  std::vector<PhonemeObservation> observations;
  std::string provenance;

  std::size_t size() const noexcept { return observations.size(); }
  friend bool operator==(const ObservationSet& a, const ObservationSet& b) { return a.observations == b.observations; }
};

/// Range and normalization checks; throws ParseError (with `line`) on the first violation.
inline void validate_distribution(const FeatureDistribution& d, std::size_t line = 0) {
  if (d.probs.empty()) throw ParseError("empty distribution for '" + d.feature_type + "'", line);
  double sum = 0;
  for (auto& [v, p] : d.probs) {
    if (!(p >= 0.0 && p <= 1.0))
      throw ParseError("probability " + format_real(p) + " for '" + v + "' outside [0,1]", line);
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionTolerance)
    throw ParseError("distribution for '" + d.feature_type + "' sums to " + format_real(sum) + ", not 1", line);
}

inline void validate_observation(const PhonemeObservation& obs, const KnowledgeGraph& g, const PhonologySchema& schema,
                                 std::size_t line = 0) {
  std::set<std::string> seen;
  for (auto& d : obs.distributions) {
    if (!schema.type_index(d.feature_type))
      throw ParseError("unknown phoneme feature type '" + d.feature_type + "'", line);
    if (!seen.insert(d.feature_type).second)
      throw ParseError("duplicate feature type '" + d.feature_type + "' in window '" + obs.window_id + "'", line);
    for (auto& [v, _] : d.probs)
      if (!g.has_entity(EntityId(Namespace::phoneme, v)))
        throw ParseError("unknown phoneme id '" + v + "'", line);
    validate_distribution(d, line);
  }
}

// ---------------------------------------------------------------------------
// Observation file:
//   window <id>
//   dist <feature_type> <phoneme>:<p> <phoneme>:<p> ...

inline ObservationSet read_observations(std::istream& in, const KnowledgeGraph& g, std::string provenance = {}) {
  auto schema = PhonologySchema::from_graph(g);
  ObservationSet set;
  set.provenance = std::move(provenance);
  std::set<std::string> ids;
  std::vector<std::size_t> dist_lines;
  std::string line;
  std::size_t n = 0;
  auto finish = [&](std::size_t at) {
    if (!set.observations.empty()) validate_observation(set.observations.back(), g, schema, at);
  };
  std::size_t window_line = 0;
  while (std::getline(in, line)) {
    ++n;
    auto toks = tokenize(line);
    if (toks.empty() || toks[0].front() == '#') continue;
    if (toks[0] == "window") {
      if (toks.size() != 2) throw ParseError("expected 'window <id>'", n);
      finish(window_line);
      if (!ids.insert(toks[1]).second) throw ParseError("duplicate window id '" + toks[1] + "'", n);
      set.observations.push_back(PhonemeObservation{toks[1], {}});
      window_line = n;
    } else if (toks[0] == "dist") {
      if (set.observations.empty()) throw ParseError("'dist' before any 'window'", n);
      if (toks.size() < 3) throw ParseError("expected 'dist <feature_type> <phoneme>:<p> ...'", n);
      FeatureDistribution d{toks[1], {}};
      for (std::size_t i = 2; i < toks.size(); ++i) {
        auto colon = toks[i].rfind(':');
        if (colon == std::string::npos || colon == 0) throw ParseError("expected <phoneme>:<p>, got '" + toks[i] + "'", n);
        auto label = toks[i].substr(0, colon);
        if (d.probs.count(label)) throw ParseError("phoneme '" + label + "' listed twice", n);
        d.probs[label] = parse_real(toks[i].substr(colon + 1), n);
      }
      // Per-distribution checks report the dist line itself.
      PhonemeObservation probe{set.observations.back().window_id, {d}};
      validate_observation(probe, g, schema, n);
      if (set.observations.back().find(d.feature_type))
        throw ParseError("duplicate feature type '" + d.feature_type + "'", n);
      set.observations.back().distributions.push_back(std::move(d));
    } else {
      throw ParseError("unknown directive '" + toks[0] + "'", n);
    }
  }
  finish(window_line);
  return set;
}

inline ObservationSet load_observations(const std::string& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open observation file '" + path + "'");
  return read_observations(in, g, path);
}

inline void write_observations(std::ostream& out, const ObservationSet& set) {
  for (auto& obs : set.observations) {
    out << "window " << obs.window_id << '\n';
    for (auto& d : obs.distributions) {
      out << "dist " << d.feature_type;
      for (auto& [v, p] : d.probs) {
        if (v.find_first_of(" \t") != std::string::npos)
          throw PreconditionError("phoneme label '" + v + "' contains whitespace");
        out << ' ' << v << ':' << format_real(p, 9);
      }
      out << '\n';
    }
  }
}

inline void save_observations(const std::string& path, const ObservationSet& set) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write observation file '" + path + "'");
  write_observations(out, set);
}

/// Gold phonology as an observation: probability 1 on the annotated value (split evenly if a type
/// carries several), uniform over the type's vocabulary when unannotated.
inline PhonemeObservation one_hot_from_gold(const KnowledgeGraph& g, const PhonologySchema& schema,
                                            const EntityId& sign, std::string window_id = {}) {
  std::map<std::string, std::set<std::string>> annotated;
  for (auto fi : g.outgoing(sign)) {
    auto& f = g.facts()[fi];
    if (f.type() == RelType::phonological) annotated[f.relation.name].insert(f.tail.label());
  }
  if (annotated.empty()) throw PreconditionError("sign '" + sign.str() + "' has no phonological facts");
  PhonemeObservation obs{window_id.empty() ? sign.label() : std::move(window_id), {}};
  for (std::size_t t = 0; t < schema.size(); ++t) {
    FeatureDistribution d{schema.type(t), {}};
    if (auto it = annotated.find(schema.type(t)); it != annotated.end()) {
      for (auto& v : it->second) d.probs[v] = 1.0 / static_cast<double>(it->second.size());
    } else {
      for (auto& v : schema.values(t)) d.probs[v] = 1.0 / static_cast<double>(schema.values(t).size());
    }
    obs.distributions.push_back(std::move(d));
  }
  return obs;
}

inline PhonemeObservation one_hot_from_gold(const KnowledgeGraph& g, const EntityId& sign) {
  return one_hot_from_gold(g, PhonologySchema::from_graph(g), sign);
}

}  // namespace kgns
