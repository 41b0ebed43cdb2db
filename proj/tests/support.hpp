#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "kgns/kgns.hpp"

namespace kgns::test {

inline Fact fact(const std::string& h, const std::string& rel, RelType t, const std::string& tail,
                 const std::string& source = "test") {
  return Fact{EntityId::parse(h), RelationId(rel, t), EntityId::parse(tail), source};
}

inline KnowledgeGraph graph_of(const std::vector<Fact>& facts) {
  KnowledgeGraph g;
  for (auto& f : facts) g.add_fact(f);
  return g;
}

/// Random valid graph: signs, words, phonemes, semantic features, videos and literals
/// under a handful of typed relations.
inline KnowledgeGraph random_graph(std::uint64_t seed, std::size_t signs = 30, std::size_t facts = 120,
                                   std::size_t videos_per_sign = 0) {
  auto rng = make_rng(seed);
  KnowledgeGraph g;
  auto pick = [&](std::size_t n) { return uniform_index(rng, n); };
  std::vector<EntityId> s;
  for (std::size_t i = 0; i < signs; ++i) {
    s.emplace_back(Namespace::asl, "s" + std::to_string(i));
    g.add_entity(s.back());
  }
  struct Rel {
    const char* name;
    RelType type;
    Namespace tail;
  };
  const Rel rels[] = {{"handshape", RelType::phonological, Namespace::phoneme},
                      {"location", RelType::phonological, Namespace::phoneme},
                      {"has_translation", RelType::translation, Namespace::en},
                      {"category", RelType::semantic, Namespace::semfeat},
                      {"frequency", RelType::statistical, Namespace::literal},
                      {"compound_of", RelType::morphological, Namespace::asl}};
  for (std::size_t i = 0; i < facts; ++i) {
    const auto& r = rels[pick(std::size(rels))];
    EntityId tail = r.tail == Namespace::literal ? EntityId::literal(std::to_string(pick(7)) + "." + std::to_string(pick(10)))
                    : r.tail == Namespace::asl   ? s[pick(s.size())]
                                                 : EntityId(r.tail, std::string(r.name) + std::to_string(pick(8)));
    g.add_fact({s[pick(s.size())], RelationId(r.name, r.type), tail, "src" + std::to_string(pick(3))});
  }
  for (std::size_t i = 0; i < signs; ++i)
    for (std::size_t k = 0; k < videos_per_sign; ++k)
      g.add_fact({s[i], RelationId("has_video", RelType::meta), EntityId(Namespace::video, "v" + std::to_string(i) + "_" + std::to_string(k)), "video"});
  return g;
}

/// Twenty signs in four groups of five; `same_group` links every ordered pair inside a
/// group and every sign carries its group's handshape. Every tenth group fact is held out.
struct PlantedGraph {
  KnowledgeGraph train, full;
  std::vector<Fact> held_out;
};

inline PlantedGraph planted_graph() {
  PlantedGraph p;
  std::size_t k = 0;
  for (int i = 0; i < 20; ++i) {
    auto s = "asl:e" + std::to_string(i);
    auto hs = fact(s, "handshape", RelType::phonological, "phoneme:hs" + std::to_string(i / 5));
    p.train.add_fact(hs);
    p.full.add_fact(hs);
    for (int j = 0; j < 20; ++j) {
      if (i == j || i / 5 != j / 5) continue;
      auto f = fact(s, "same_group", RelType::morphological, "asl:e" + std::to_string(j));
      p.full.add_fact(f);
      if (k++ % 10 == 3)
        p.held_out.push_back(f);
      else
        p.train.add_fact(f);
    }
  }
  return p;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::path(KGNS_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Joint p(s, x) summed by enumeration; returns (p(s|ev), p(x_f|ev)).
inline std::pair<std::vector<double>, std::vector<std::vector<double>>> brute_force(const FactorGraph& fg, const Evidence& ev) {
  const auto F = fg.feature_names.size();
  std::vector<double> ps(fg.signs.size(), 0.0);
  std::vector<std::vector<double>> px(F);
  for (std::size_t f = 0; f < F; ++f) px[f].assign(fg.feature_values[f].size(), 0.0);
  std::vector<int> x(F, 0);
  double z = 0;
  for (;;) {
    for (std::size_t s = 0; s < fg.signs.size(); ++s) {
      double p = fg.prior[s];
      for (std::size_t g = 0; g < fg.groups.size(); ++g) {
        std::vector<int> zg;
        for (auto f : fg.groups[g].features) zg.push_back(x[f]);
        p *= fg.conditional(g, s, zg);
      }
      for (std::size_t f = 0; f < F; ++f) p *= ev[f][static_cast<std::size_t>(x[f])];
      ps[s] += p;
      for (std::size_t f = 0; f < F; ++f) px[f][static_cast<std::size_t>(x[f])] += p;
      z += p;
    }
    std::size_t f = 0;
    while (f < F && ++x[f] == static_cast<int>(fg.feature_values[f].size())) x[f++] = 0;
    if (f == F) break;
  }
  for (auto& p : ps) p /= z;
  for (auto& v : px)
    for (auto& p : v) p /= z;
  return {ps, px};
}

// Random factor graph over 1-3 features, 2-6 states each, with sparse wildcard tables.
inline FactorGraph random_fgm(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FactorGraph fg;
  auto S = 2 + uniform_index(rng, 5);
  for (std::size_t s = 0; s < S; ++s) fg.signs.emplace_back(Namespace::asl, "s" + std::to_string(s));
  for (std::size_t s = 0; s < S; ++s) fg.prior.push_back(0.1 + u(rng));
  double pz = std::accumulate(fg.prior.begin(), fg.prior.end(), 0.0);
  for (auto& p : fg.prior) p /= pz;
  auto F = 1 + uniform_index(rng, 3);
  for (std::size_t f = 0; f < F; ++f) {
    fg.feature_names.push_back("f" + std::to_string(f));
    std::vector<std::string> vals;
    for (std::size_t v = 0, n = 2 + uniform_index(rng, 5); v < n; ++v) vals.push_back("v" + std::to_string(v));
    fg.feature_values.push_back(vals);
  }
  std::vector<std::size_t> owner(F);
  for (auto& o : owner) o = uniform_index(rng, 3);
  for (std::size_t g = 0; g < 3; ++g) {
    GroupFactor gf{"g" + std::to_string(g), {}, {}};
    for (std::size_t f = 0; f < F; ++f)
      if (owner[f] == g) gf.features.push_back(f);
    if (gf.features.empty()) continue;
    double k = fg.joint_size(gf);
    for (std::size_t s = 0; s < S; ++s) {
      ConditionalTable row;
      double floor = u(rng) < 0.3 ? 0.0 : u(rng);
      double total = floor * k;
      for (std::size_t e = 0, n = 1 + uniform_index(rng, 3); e < n; ++e) {
        JointEntry je;
        for (auto f : gf.features)
          je.values.push_back(u(rng) < 0.25 ? -1 : static_cast<int>(uniform_index(rng, fg.feature_values[f].size())));
        je.mass = 0.05 + u(rng);
        total += je.mass;
        row.entries.push_back(je);
      }
      row.floor = floor / total;
      for (auto& e : row.entries) e.mass /= total;
      gf.rows.push_back(row);
    }
    fg.groups.push_back(gf);
  }
  return fg;
}

inline Evidence random_evidence(const FactorGraph& fg, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Evidence ev;
  for (auto& vals : fg.feature_values) {
    std::vector<double> e(vals.size());
    for (auto& x : e) x = u(rng) < 0.2 ? 0.0 : u(rng);
    e[uniform_index(rng, e.size())] += 0.1;
    double z = std::accumulate(e.begin(), e.end(), 0.0);
    for (auto& x : e) x /= z;
    ev.push_back(e);
  }
  return ev;
}

// Sixteen feature types f0..f15 with values a/b; sign "x" has all a, sign "y" has f0..f7 = a, rest b.
inline KnowledgeGraph sixteen_type_graph() {
  KnowledgeGraph g;
  for (int i = 0; i < 16; ++i) {
    auto rel = "f" + std::to_string(i);
    g.add_fact(fact("asl:x", rel, RelType::phonological, "phoneme:a"));
    g.add_fact(fact("asl:y", rel, RelType::phonological, i < 8 ? "phoneme:a" : "phoneme:b"));
    g.add_fact(fact("asl:z", rel, RelType::phonological, "phoneme:b"));
  }
  return g;
}


struct RunResult {
  int status = 0;
  std::string out, err;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Runs `program args` through the shell from `dir`, capturing stdout and stderr.
inline RunResult run(const std::string& program, const std::string& args, const std::filesystem::path& dir) {
  auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  auto cmd = "cd '" + dir.string() + "' && '" + program + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = raw == -1 ? -1 : WEXITSTATUS(raw);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

inline PhonemeObservation observation(std::string id, std::vector<FeatureDistribution> d) {
  return PhonemeObservation{std::move(id), std::move(d)};
}

}  // namespace kgns::test
