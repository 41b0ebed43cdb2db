#pragma once

// Isolated sign recognition p(s | phi): exact factor-graph inference, k-nearest
// neighbours over gold phonology, and an MLP over phoneme embeddings.

#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "kgns/common.hpp"
#include "kgns/embeddings.hpp"
#include "kgns/grounding.hpp"
#include "kgns/kg_store.hpp"
#include "kgns/nn.hpp"

namespace kgns {

struct SignPrediction {
  EntityId sign;
  double confidence = 0;
};

/// Common surface of the three recognizers.
class SignRecognizer {
 public:
  virtual ~SignRecognizer() = default;
  virtual const std::vector<EntityId>& vocabulary() const = 0;
  /// Distribution over vocabulary().
  virtual std::vector<double> posterior(const PhonemeObservation& obs) const = 0;

  virtual SignPrediction predict(const PhonemeObservation& obs) const {
    auto p = posterior(obs);
    auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    return {vocabulary().at(best), p[best]};
  }
};

/// Top-1 accuracy. An empty evaluation set has no defined accuracy.
inline double isr_evaluate(const SignRecognizer& model, const std::vector<PhonemeObservation>& observations,
                           const std::vector<EntityId>& labels) {
  require(!observations.empty(), "empty evaluation set: accuracy undefined");
  require(observations.size() == labels.size(), "observations and labels differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < observations.size(); ++i) hits += model.predict(observations[i]).sign == labels[i];
  return static_cast<double>(hits) / static_cast<double>(observations.size());
}

// ---------------------------------------------------------------------------
// Factor graph

enum class FeatureGroup { articulators, place_of_articulation, prosodic };

inline std::string_view feature_group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::articulators: return "articulators";
    case FeatureGroup::place_of_articulation: return "place_of_articulation";
    case FeatureGroup::prosodic: return "prosodic";
  }
  return "?";
}

/// Location and contact features are place of articulation; movement-like features are
/// prosodic; everything else (hand configuration) is an articulator feature.
inline FeatureGroup default_feature_group(std::string_view feature_type) {
  auto t = to_lower(feature_type);
  for (auto key : {"location", "contact", "place"})
    if (t.find(key) != std::string::npos) return FeatureGroup::place_of_articulation;
  for (auto key : {"movement", "path", "repeat", "twist", "wrist", "prosod", "trill"})
    if (t.find(key) != std::string::npos) return FeatureGroup::prosodic;
  return FeatureGroup::articulators;
}

/// A run of mass over joint group values; -1 in `values` means any value of that feature.
struct JointEntry {
  std::vector<int> values;
  double mass = 0;
};

/// p(z | s) = sum over matching entries of mass / (number of joint values the entry covers) + floor.
struct ConditionalTable {
  std::vector<JointEntry> entries;
  double floor = 0;
};

struct GroupFactor {
  std::string name;
  std::vector<std::size_t> features;   // indices into FactorGraph::feature_names
  std::vector<ConditionalTable> rows;  // one per sign
};

/// Sign variable S with one conditional factor per feature group; each feature variable
/// belongs to exactly one group, so the graph is a tree rooted at S.
struct FactorGraph {
  std::vector<EntityId> signs;
  std::vector<double> prior;
  std::vector<std::string> feature_names;
  std::vector<std::vector<std::string>> feature_values;
  std::vector<GroupFactor> groups;

  double joint_size(const GroupFactor& g) const {
    double k = 1;
    for (auto f : g.features) k *= static_cast<double>(feature_values[f].size());
    return k;
  }

  double covered(const GroupFactor& g, const JointEntry& e) const {
    double w = 1;
    for (std::size_t i = 0; i < g.features.size(); ++i)
      if (e.values[i] < 0) w *= static_cast<double>(feature_values[g.features[i]].size());
    return w;
  }

  /// Direct evaluation of p(z | s) for a full assignment z of the group's features.
  double conditional(std::size_t group, std::size_t sign, const std::vector<int>& z) const {
    const auto& g = groups.at(group);
    const auto& row = g.rows.at(sign);
    double p = row.floor;
    for (auto& e : row.entries) {
      bool match = true;
      for (std::size_t i = 0; i < z.size() && match; ++i) match = e.values[i] < 0 || e.values[i] == z[i];
      if (match) p += e.mass / covered(g, e);
    }
    return p;
  }

  /// Throws unless groups partition the features and every table row sums to 1 within 1e-9.
  void validate() const {
    require(!signs.empty(), "factor graph has no signs");
    require(prior.size() == signs.size(), "prior size differs from the sign count");
    require(feature_values.size() == feature_names.size(), "one vocabulary per feature required");
    std::vector<int> owner(feature_names.size(), 0);
    for (auto& g : groups) {
      require(g.rows.size() == signs.size(), "group '", g.name, "' needs one table row per sign");
      for (auto f : g.features) {
        require(f < feature_names.size(), "group '", g.name, "' references unknown feature");
        ++owner[f];
      }
      double k = joint_size(g);
      for (std::size_t s = 0; s < g.rows.size(); ++s) {
        double sum = g.rows[s].floor * k;
        for (auto& e : g.rows[s].entries) {
          require(e.values.size() == g.features.size(), "entry arity differs from group arity");
          for (std::size_t i = 0; i < e.values.size(); ++i)
            require(e.values[i] < static_cast<int>(feature_values[g.features[i]].size()), "entry value out of range");
          require(e.mass >= 0, "negative table mass");
          sum += e.mass;
        }
        require(std::abs(sum - 1.0) <= 1e-9, "table row for group '", g.name, "', sign '", signs[s].str(),
                "' sums to ", format_real(sum, 17));
      }
    }
    for (std::size_t f = 0; f < owner.size(); ++f)
      require(owner[f] == 1, "feature '", feature_names[f], "' must belong to exactly one group");
  }
};

struct FgmFitConfig {
  double smoothing = 1.0;
  /// Statistical relation whose literal value is the sign prior weight; empty for a uniform prior.
  std::string prior_relation;
  std::function<FeatureGroup(std::string_view)> group_of = default_feature_group;
};

/// Laplace-smoothed group-joint conditionals of each training sign's gold phonology.
inline FactorGraph fgm_fit(const KnowledgeGraph& g, const PhonologySchema& schema, const std::vector<EntityId>& train_signs,
                           const FgmFitConfig& cfg = {}) {
  require(!train_signs.empty(), "empty training set");
  require(cfg.smoothing >= 0, "smoothing must be >= 0");
  FactorGraph fg;
  fg.signs = train_signs;
  std::sort(fg.signs.begin(), fg.signs.end());
  fg.signs.erase(std::unique(fg.signs.begin(), fg.signs.end()), fg.signs.end());
  fg.feature_names = schema.types();
  for (std::size_t t = 0; t < schema.size(); ++t) fg.feature_values.push_back(schema.values(t));

  for (auto group : {FeatureGroup::articulators, FeatureGroup::place_of_articulation, FeatureGroup::prosodic}) {
    GroupFactor gf{std::string(feature_group_name(group)), {}, {}};
    for (std::size_t t = 0; t < schema.size(); ++t)
      if (cfg.group_of(schema.type(t)) == group) gf.features.push_back(t);
    if (!gf.features.empty()) fg.groups.push_back(std::move(gf));
  }

  for (auto& sign : fg.signs) {
    std::vector<std::set<int>> annotated(schema.size());
    bool any = false;
    for (auto fi : g.outgoing(sign)) {
      auto& f = g.facts()[fi];
      if (f.type() != RelType::phonological) continue;
      auto t = schema.type_index(f.relation.name);
      if (!t) continue;
      auto v = schema.value_index(*t, f.tail.label());
      if (!v) continue;
      annotated[*t].insert(static_cast<int>(*v));
      any = true;
    }
    require(any, "training sign '", sign.str(), "' has no phonological facts");

    for (auto& gf : fg.groups) {
      // One unit of count, split evenly over multi-valued annotations.
      std::vector<JointEntry> entries{JointEntry{{}, 1.0}};
      for (auto f : gf.features) {
        std::vector<JointEntry> next;
        const auto& vals = annotated[f];
        for (auto& e : entries) {
          if (vals.empty()) {
            auto copy = e;
            copy.values.push_back(-1);
            next.push_back(std::move(copy));
          } else {
            for (int v : vals) {
              auto copy = e;
              copy.values.push_back(v);
              copy.mass /= static_cast<double>(vals.size());
              next.push_back(std::move(copy));
            }
          }
        }
        entries = std::move(next);
      }
      const double k = fg.joint_size(gf);
      const double denom = 1.0 + cfg.smoothing * k;
      ConditionalTable row;
      row.floor = cfg.smoothing / denom;
      for (auto& e : entries) row.entries.push_back(JointEntry{e.values, e.mass / denom});
      gf.rows.push_back(std::move(row));
    }
  }

  fg.prior.assign(fg.signs.size(), 1.0);
  if (!cfg.prior_relation.empty()) {
    std::vector<std::optional<double>> weights;
    double sum = 0;
    std::size_t n = 0;
    for (auto& s : fg.signs) {
      std::optional<double> w;
      for (auto& t : g.objects(s, cfg.prior_relation))
        if (t.is_literal() && std::isfinite(*t.value()) && *t.value() > 0) w = *t.value();
      if (w) {
        sum += *w;
        ++n;
      }
      weights.push_back(w);
    }
    double fallback = n ? sum / static_cast<double>(n) : 1.0;
    for (std::size_t i = 0; i < weights.size(); ++i) fg.prior[i] = weights[i].value_or(fallback);
  }
  double total = std::accumulate(fg.prior.begin(), fg.prior.end(), 0.0);
  for (double& p : fg.prior) p /= total;
  return fg;
}

/// Per-feature likelihood vectors aligned with the factor graph's vocabularies.
using Evidence = std::vector<std::vector<double>>;

inline Evidence evidence_from(const FactorGraph& fg, const PhonemeObservation& obs) {
  Evidence ev(fg.feature_names.size());
  for (std::size_t f = 0; f < fg.feature_names.size(); ++f) {
    const auto* d = obs.find(fg.feature_names[f]);
    if (!d)
      throw PreconditionError("observation '" + obs.window_id + "' does not cover feature type '" +
                              fg.feature_names[f] + "'");
    ev[f].resize(fg.feature_values[f].size());
    for (std::size_t v = 0; v < ev[f].size(); ++v) ev[f][v] = d->prob(fg.feature_values[f][v]);
  }
  return ev;
}

struct FgmPosterior {
  std::vector<double> sign;                   // p(s | evidence), aligned with FactorGraph::signs
  std::vector<std::vector<double>> features;  // p(x_f | evidence), aligned with feature_values
};

/// Exact sum-product on the tree: group factors send messages to S, then S sends back
/// to each group for the feature marginals. Evidence enters as per-feature likelihoods.
inline FgmPosterior fgm_infer(const FactorGraph& fg, const Evidence& ev) {
  require(ev.size() == fg.feature_names.size(), "evidence covers ", ev.size(), " features, expected ",
          fg.feature_names.size());
  for (std::size_t f = 0; f < ev.size(); ++f)
    require(ev[f].size() == fg.feature_values[f].size(), "evidence for '", fg.feature_names[f], "' has wrong size");
  const auto S = fg.signs.size();

  std::vector<double> lambda_sum(ev.size());
  for (std::size_t f = 0; f < ev.size(); ++f) lambda_sum[f] = std::accumulate(ev[f].begin(), ev[f].end(), 0.0);

  auto slot_weight = [&](std::size_t f, int v) {
    return v < 0 ? lambda_sum[f] / static_cast<double>(ev[f].size()) : ev[f][static_cast<std::size_t>(v)];
  };

  // Group -> sign messages.
  std::vector<std::vector<double>> msg(fg.groups.size(), std::vector<double>(S));
  for (std::size_t gi = 0; gi < fg.groups.size(); ++gi) {
    const auto& g = fg.groups[gi];
    double floor_term = 1;
    for (auto f : g.features) floor_term *= lambda_sum[f];
    for (std::size_t s = 0; s < S; ++s) {
      const auto& row = g.rows[s];
      double m = row.floor * floor_term;
      for (auto& e : row.entries) {
        double w = e.mass;
        for (std::size_t i = 0; i < g.features.size() && w != 0; ++i) w *= slot_weight(g.features[i], e.values[i]);
        m += w;
      }
      msg[gi][s] = m;
    }
  }

  FgmPosterior post;
  post.sign.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    double b = fg.prior[s];
    for (auto& m : msg) b *= m[s];
    post.sign[s] = b;
  }
  double z = std::accumulate(post.sign.begin(), post.sign.end(), 0.0);
  if (!(z > 0) || !std::isfinite(z))
    throw NumericError("all-zero sign posterior: the evidence is impossible under the model; use smoothing > 0");
  for (double& p : post.sign) p /= z;

  // Sign -> group messages, then feature beliefs.
  post.features.resize(ev.size());
  for (std::size_t gi = 0; gi < fg.groups.size(); ++gi) {
    const auto& g = fg.groups[gi];
    std::vector<double> to_group(S);
    for (std::size_t s = 0; s < S; ++s) {
      double b = fg.prior[s];
      for (std::size_t gj = 0; gj < fg.groups.size(); ++gj)
        if (gj != gi) b *= msg[gj][s];
      to_group[s] = b;
    }
    for (std::size_t i = 0; i < g.features.size(); ++i) {
      const auto f = g.features[i];
      const auto V = ev[f].size();
      std::vector<double> belief(V, 0.0);
      double others_sum = 1;
      for (std::size_t j = 0; j < g.features.size(); ++j)
        if (j != i) others_sum *= lambda_sum[g.features[j]];
      for (std::size_t s = 0; s < S; ++s) {
        if (to_group[s] == 0) continue;
        const auto& row = g.rows[s];
        for (std::size_t x = 0; x < V; ++x) belief[x] += to_group[s] * row.floor * others_sum * ev[f][x];
        for (auto& e : row.entries) {
          double w = to_group[s] * e.mass;
          for (std::size_t j = 0; j < g.features.size() && w != 0; ++j)
            if (j != i) w *= slot_weight(g.features[j], e.values[j]);
          if (w == 0) continue;
          if (e.values[i] >= 0) {
            auto x = static_cast<std::size_t>(e.values[i]);
            belief[x] += w * ev[f][x];
          } else {
            for (std::size_t x = 0; x < V; ++x) belief[x] += w * ev[f][x] / static_cast<double>(V);
          }
        }
      }
      double bz = std::accumulate(belief.begin(), belief.end(), 0.0);
      if (bz > 0)
        for (double& b : belief) b /= bz;
      post.features[f] = std::move(belief);
    }
  }
  return post;
}

inline FgmPosterior fgm_infer(const FactorGraph& fg, const PhonemeObservation& obs) {
  return fgm_infer(fg, evidence_from(fg, obs));
}

class FgmRecognizer : public SignRecognizer {
 public:
  explicit FgmRecognizer(FactorGraph fg) : fg_(std::move(fg)) {}
  const FactorGraph& graph() const noexcept { return fg_; }
  const std::vector<EntityId>& vocabulary() const override { return fg_.signs; }
  std::vector<double> posterior(const PhonemeObservation& obs) const override { return fgm_infer(fg_, obs).sign; }

 private:
  FactorGraph fg_;
};

// Factor table TSV:
//   feature<TAB>name<TAB>group<TAB>v1 v2 ...
//   prior<TAB>sign<TAB>p
//   <group><TAB><sign><TAB><v1|v2|*|...><TAB>probability     (entry mass)
//   <group><TAB><sign><TAB>*floor*<TAB>probability           (per-joint-value floor)
inline void write_factor_graph(std::ostream& out, const FactorGraph& fg) {
  for (std::size_t f = 0; f < fg.feature_names.size(); ++f) {
    std::string group;
    for (auto& g : fg.groups)
      if (std::find(g.features.begin(), g.features.end(), f) != g.features.end()) group = g.name;
    out << "feature\t" << fg.feature_names[f] << '\t' << group << '\t' << join(fg.feature_values[f], " ") << '\n';
  }
  for (std::size_t s = 0; s < fg.signs.size(); ++s)
    out << "prior\t" << fg.signs[s].str() << '\t' << format_real(fg.prior[s], 17) << '\n';
  for (auto& g : fg.groups)
    for (std::size_t s = 0; s < fg.signs.size(); ++s) {
      const auto& row = g.rows[s];
      for (auto& e : row.entries) {
        std::vector<std::string> parts;
        for (std::size_t i = 0; i < e.values.size(); ++i)
          parts.push_back(e.values[i] < 0 ? "*" : fg.feature_values[g.features[i]][static_cast<std::size_t>(e.values[i])]);
        out << g.name << '\t' << fg.signs[s].str() << '\t' << join(parts, "|") << '\t' << format_real(e.mass, 17) << '\n';
      }
      out << g.name << '\t' << fg.signs[s].str() << "\t*floor*\t" << format_real(row.floor, 17) << '\n';
    }
}

inline FactorGraph read_factor_graph(std::istream& in) {
  FactorGraph fg;
  std::map<std::string, std::size_t> group_index, sign_index;
  std::vector<std::map<std::string, int>> value_index;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty() || line.front() == '#') continue;
    auto cols = split(line, '\t');
    try {
      if (cols[0] == "feature" && cols.size() == 4) {
        fg.feature_names.push_back(cols[1]);
        fg.feature_values.push_back(tokenize(cols[3]));
        auto& vi = value_index.emplace_back();
        for (std::size_t v = 0; v < fg.feature_values.back().size(); ++v) vi[fg.feature_values.back()[v]] = static_cast<int>(v);
        if (!group_index.count(cols[2])) {
          group_index[cols[2]] = fg.groups.size();
          fg.groups.push_back(GroupFactor{cols[2], {}, {}});
        }
        fg.groups[group_index[cols[2]]].features.push_back(fg.feature_names.size() - 1);
      } else if (cols[0] == "prior" && cols.size() == 3) {
        sign_index[cols[1]] = fg.signs.size();
        fg.signs.push_back(EntityId::parse(cols[1]));
        fg.prior.push_back(parse_real(cols[2], n));
      } else if (cols.size() == 4 && group_index.count(cols[0])) {
        auto& g = fg.groups[group_index[cols[0]]];
        if (g.rows.size() < fg.signs.size()) g.rows.resize(fg.signs.size());
        auto si = sign_index.find(cols[1]);
        if (si == sign_index.end()) throw ParseError("unknown sign '" + cols[1] + "'", n);
        auto& row = g.rows[si->second];
        double p = parse_real(cols[3], n);
        if (cols[2] == "*floor*") {
          row.floor = p;
        } else {
          auto parts = split(cols[2], '|');
          if (parts.size() != g.features.size()) throw ParseError("joint value arity mismatch", n);
          JointEntry e{{}, p};
          for (std::size_t i = 0; i < parts.size(); ++i) {
            if (parts[i] == "*") {
              e.values.push_back(-1);
              continue;
            }
            auto& vi = value_index[g.features[i]];
            auto it = vi.find(parts[i]);
            if (it == vi.end()) throw ParseError("unknown value '" + parts[i] + "'", n);
            e.values.push_back(it->second);
          }
          row.entries.push_back(std::move(e));
        }
      } else {
        throw ParseError("unrecognized factor table row", n);
      }
    } catch (const PreconditionError& e) {
      throw ParseError(e.what(), n);
    }
  }
  fg.validate();
  return fg;
}

// ---------------------------------------------------------------------------
// k-nearest neighbours

/// Gold value per feature type; nullopt where the sign is unannotated.
struct PhonemeVector {
  std::vector<std::string> types;
  std::vector<std::optional<std::string>> values;
};

inline PhonemeVector gold_phonemes(const KnowledgeGraph& g, const PhonologySchema& schema, const EntityId& sign) {
  PhonemeVector v{schema.types(), std::vector<std::optional<std::string>>(schema.size())};
  for (auto fi : g.outgoing(sign)) {
    auto& f = g.facts()[fi];
    if (f.type() != RelType::phonological) continue;
    if (auto t = schema.type_index(f.relation.name); t && (!v.values[*t] || f.tail.label() < *v.values[*t]))
      v.values[*t] = f.tail.label();
  }
  return v;
}

/// d = 1 - (1/n) sum_i [a_i = argmax b_i] p(b_i = a_i) over the n feature types.
inline double knn_distance(const PhonemeVector& a, const PhonemeObservation& b) {
  require(!a.types.empty(), "phoneme vector has no feature types");
  if (b.distributions.size() != a.types.size())
    throw PreconditionError("feature-type mismatch: vector has " + std::to_string(a.types.size()) +
                            " types, observation '" + b.window_id + "' has " + std::to_string(b.distributions.size()));
  double agree = 0;
  for (std::size_t i = 0; i < a.types.size(); ++i) {
    const auto* d = b.find(a.types[i]);
    if (!d) throw PreconditionError("feature-type mismatch: observation lacks '" + a.types[i] + "'");
    if (a.values[i] && d->argmax() == *a.values[i]) agree += d->prob(*a.values[i]);
  }
  return 1.0 - agree / static_cast<double>(a.types.size());
}

struct KnnIndex {
  std::vector<std::pair<EntityId, PhonemeVector>> entries;
  int k = 5;
};

inline KnnIndex build_knn_index(const KnowledgeGraph& g, const PhonologySchema& schema, std::vector<EntityId> signs,
                                int k = 5) {
  require(k >= 1, "k must be positive");
  std::sort(signs.begin(), signs.end());
  signs.erase(std::unique(signs.begin(), signs.end()), signs.end());
  KnnIndex index{{}, k};
  for (auto& s : signs) index.entries.emplace_back(s, gold_phonemes(g, schema, s));
  return index;
}

struct KnnResult {
  EntityId sign;
  double vote_share = 0;
  std::vector<std::pair<std::size_t, double>> neighbours;  // (entry, distance), nearest first
};

/// Majority vote over the k nearest entries; a tie goes to the class holding the closest entry.
inline KnnResult knn_predict(const KnnIndex& index, const PhonemeObservation& obs) {
  require(!index.entries.empty(), "kNN index is empty");
  std::vector<std::pair<std::size_t, double>> dist;
  dist.reserve(index.entries.size());
  for (std::size_t i = 0; i < index.entries.size(); ++i) dist.emplace_back(i, knn_distance(index.entries[i].second, obs));
  auto k = std::min<std::size_t>(static_cast<std::size_t>(index.k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end(),
                    [](auto& a, auto& b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
  dist.resize(k);
  std::map<EntityId, std::pair<int, std::size_t>> votes;  // sign -> (votes, rank of its closest entry)
  for (std::size_t rank = 0; rank < dist.size(); ++rank) {
    auto& sign = index.entries[dist[rank].first].first;
    auto [it, fresh] = votes.try_emplace(sign, 0, rank);
    ++it->second.first;
  }
  auto best = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it)
    if (it->second.first > best->second.first ||
        (it->second.first == best->second.first && it->second.second < best->second.second))
      best = it;
  return {best->first, static_cast<double>(best->second.first) / static_cast<double>(k), std::move(dist)};
}

class KnnRecognizer : public SignRecognizer {
 public:
  explicit KnnRecognizer(KnnIndex index) : index_(std::move(index)) {
    for (auto& [s, _] : index_.entries) vocab_.push_back(s);
    std::sort(vocab_.begin(), vocab_.end());
    vocab_.erase(std::unique(vocab_.begin(), vocab_.end()), vocab_.end());
  }
  const KnnIndex& index() const noexcept { return index_; }
  const std::vector<EntityId>& vocabulary() const override { return vocab_; }

  /// Vote shares of the k nearest entries.
  std::vector<double> posterior(const PhonemeObservation& obs) const override {
    auto r = knn_predict(index_, obs);
    std::vector<double> p(vocab_.size(), 0.0);
    for (auto& [entry, _] : r.neighbours) {
      auto pos = std::lower_bound(vocab_.begin(), vocab_.end(), index_.entries[entry].first) - vocab_.begin();
      p[static_cast<std::size_t>(pos)] += 1.0 / static_cast<double>(r.neighbours.size());
    }
    return p;
  }

  SignPrediction predict(const PhonemeObservation& obs) const override {
    auto r = knn_predict(index_, obs);
    return {r.sign, r.vote_share};
  }

 private:
  KnnIndex index_;
  std::vector<EntityId> vocab_;
};

// kNN index TSV: k<TAB><k>, types<TAB>t1 t2 ..., then sign<TAB>v1 v2 ... with '-' for unannotated.
inline void write_knn_index(std::ostream& out, const KnnIndex& index) {
  out << "k\t" << index.k << '\n';
  if (index.entries.empty()) return;
  out << "types\t" << join(index.entries.front().second.types, " ") << '\n';
  for (auto& [sign, vec] : index.entries) {
    std::vector<std::string> vals;
    for (auto& v : vec.values) vals.push_back(v.value_or("-"));
    out << sign.str() << '\t' << join(vals, " ") << '\n';
  }
}

inline KnnIndex read_knn_index(std::istream& in) {
  KnnIndex index;
  std::vector<std::string> types;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw ParseError("expected two tab-separated columns", n);
    if (cols[0] == "k") {
      index.k = static_cast<int>(parse_real(cols[1], n));
    } else if (cols[0] == "types") {
      types = tokenize(cols[1]);
    } else {
      auto vals = tokenize(cols[1]);
      if (vals.size() != types.size()) throw ParseError("value count differs from type count", n);
      PhonemeVector v{types, {}};
      for (auto& x : vals) v.values.push_back(x == "-" ? std::nullopt : std::optional(x));
      try {
        index.entries.emplace_back(EntityId::parse(cols[0]), std::move(v));
      } catch (const PreconditionError& e) {
        throw ParseError(e.what(), n);
      }
    }
  }
  return index;
}

// ---------------------------------------------------------------------------
// MLP over phoneme embeddings

enum class EmbeddingInit { random, transe_nodes, distmult_nodes };

inline std::string_view init_name(EmbeddingInit i) {
  switch (i) {
    case EmbeddingInit::random: return "random";
    case EmbeddingInit::transe_nodes: return "transe_nodes";
    case EmbeddingInit::distmult_nodes: return "distmult_nodes";
  }
  return "?";
}

inline EmbeddingInit parse_init(std::string_view s) {
  for (auto i : {EmbeddingInit::random, EmbeddingInit::transe_nodes, EmbeddingInit::distmult_nodes})
    if (init_name(i) == s) return i;
  if (s == "transe") return EmbeddingInit::transe_nodes;
  if (s == "distmult") return EmbeddingInit::distmult_nodes;
  throw PreconditionError("unknown embedding init '" + std::string(s) + "'");
}

inline constexpr std::size_t kPhonemeEmbeddingDim = 32;

struct MlpConfig {
  int epochs = 100;
  std::size_t embed_dim = kPhonemeEmbeddingDim;
  std::vector<std::size_t> hidden{64, 128, 256};
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  EmbeddingInit init = EmbeddingInit::random;
};

/// Maps an observation to one embedding row per feature type (its argmax phoneme).
/// Phonemes outside the graph share a trailing unknown row.
class PhonemeEncoder {
 public:
  PhonemeEncoder() = default;
  PhonemeEncoder(const KnowledgeGraph& g, const PhonologySchema& schema)
      : types_(schema.types()), phonemes_(g.entities_in(Namespace::phoneme)) {
    for (std::size_t i = 0; i < phonemes_.size(); ++i) index_[phonemes_[i].label()] = i;
  }

  const std::vector<std::string>& types() const noexcept { return types_; }
  const std::vector<EntityId>& phonemes() const noexcept { return phonemes_; }
  std::size_t rows() const noexcept { return phonemes_.size() + 1; }

  nn::Sample encode(const PhonemeObservation& obs) const {
    nn::Sample s;
    for (auto& t : types_) {
      const auto& label = obs.at(t).argmax();
      auto it = index_.find(label);
      s.indices.push_back(it == index_.end() ? phonemes_.size() : it->second);
    }
    return s;
  }

  /// Copies KG node vectors into the network's embedding table.
  void seed_embeddings(nn::Network& net, const EmbeddingSpace& space, EmbeddingInit init) const {
    if (init == EmbeddingInit::random) return;
    auto want = init == EmbeddingInit::transe_nodes ? Scorer::transe : Scorer::distmult;
    require(space.scorer() == want, "init ", init_name(init), " needs a ", scorer_name(want), " space, got ",
            scorer_name(space.scorer()));
    require(static_cast<std::size_t>(space.dim()) == net.spec().embed_dim, "init ", init_name(init), " needs a dim-",
            net.spec().embed_dim, " space, got dim ", space.dim());
    for (std::size_t i = 0; i < phonemes_.size(); ++i) {
      if (!space.has_entity(phonemes_[i]))
        throw PreconditionError("embedding space is missing phoneme '" + phonemes_[i].str() + "'");
      auto v = space.entity_vector(phonemes_[i]);
      std::copy(v.begin(), v.end(), net.embedding_row(i).begin());
    }
  }

 private:
  std::vector<std::string> types_;
  std::vector<EntityId> phonemes_;
  std::unordered_map<std::string, std::size_t> index_;
};

class IsrMlp : public SignRecognizer {
 public:
  IsrMlp(PhonemeEncoder encoder, std::vector<EntityId> vocab, nn::Network net)
      : encoder_(std::move(encoder)), vocab_(std::move(vocab)), net_(std::move(net)) {}

  const std::vector<EntityId>& vocabulary() const override { return vocab_; }
  std::vector<double> posterior(const PhonemeObservation& obs) const override {
    return net_.predict(encoder_.encode(obs), nn::LossSpec{});
  }
  const nn::Network& network() const noexcept { return net_; }
  const PhonemeEncoder& encoder() const noexcept { return encoder_; }

 private:
  PhonemeEncoder encoder_;
  std::vector<EntityId> vocab_;
  nn::Network net_;
};

/// Cross-entropy + Adam over argmax-phoneme embeddings. `space` is required unless init is random.
inline IsrMlp mlp_isr_train(const KnowledgeGraph& g, const std::vector<PhonemeObservation>& observations,
                            const std::vector<EntityId>& labels, const MlpConfig& cfg,
                            const EmbeddingSpace* space = nullptr) {
  require(observations.size() == labels.size(), "observations and labels differ in length");
  require(!observations.empty(), "no training observations");
  if (cfg.init != EmbeddingInit::random) require(space != nullptr, "init ", init_name(cfg.init), " needs an embedding space");
  for (auto& l : labels)
    require(l.ns() == Namespace::asl && g.has_entity(l), "label '", l.str(), "' is not a sign in the graph");
  PhonemeEncoder encoder(g, PhonologySchema::from_graph(g));
  std::vector<EntityId> vocab(labels.begin(), labels.end());
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());

  nn::NetworkSpec spec{encoder.rows(), cfg.embed_dim, encoder.types().size(), false, 0, cfg.hidden, vocab.size()};
  nn::Network net(spec, cfg.seed);
  if (space) encoder.seed_embeddings(net, *space, cfg.init);

  std::vector<nn::Sample> samples;
  std::vector<std::vector<double>> targets;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    samples.push_back(encoder.encode(observations[i]));
    std::vector<double> t(vocab.size(), 0.0);
    t[static_cast<std::size_t>(std::lower_bound(vocab.begin(), vocab.end(), labels[i]) - vocab.begin())] = 1.0;
    targets.push_back(std::move(t));
  }
  nn::FitConfig fit{cfg.epochs, cfg.batch_size, nn::AdamConfig{cfg.learning_rate}, cfg.seed};
  nn::fit(net, samples, targets, nn::LossSpec{}, fit);
  return IsrMlp(std::move(encoder), std::move(vocab), std::move(net));
}

}  // namespace kgns
