#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace kgns;
using kgns::test::fact;
using kgns::test::graph_of;
using kgns::test::random_graph;

TEST(EntityId, ParseAndPrint) {
  auto e = EntityId::parse("asl:read");
  EXPECT_EQ(e.ns(), Namespace::asl);
  EXPECT_EQ(e.label(), "read");
  EXPECT_EQ(e.str(), "asl:read");
  EXPECT_EQ(EntityId::parse("lit:4.053").value(), 4.053);
}

TEST(EntityId, Malformed) {
  EXPECT_THROW(EntityId::parse("read"), PreconditionError);
  EXPECT_THROW(EntityId::parse("xyz:read"), PreconditionError);
  EXPECT_THROW(EntityId::parse("asl:"), PreconditionError);
  EXPECT_THROW(EntityId::literal("fast"), PreconditionError);
}

TEST(RelationName, Normalized) {
  EXPECT_EQ(normalize_relation_name("M-toy"), "m_toy");
  EXPECT_EQ(normalize_relation_name("Interoceptive.mean"), "interoceptive.mean");
  EXPECT_EQ(normalize_relation_name(" Major Location "), "major_location");
}

TEST(AddFact, NewFactGrowsGraph) {
  KnowledgeGraph g;
  EXPECT_TRUE(g.add_fact(fact("asl:read", "handshape", RelType::phonological, "phoneme:V")));
  EXPECT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.contains(EntityId::parse("asl:read"), "handshape", EntityId::parse("phoneme:V")));
}

TEST(AddFact, LiteralTailOnStatisticalRelation) {
  KnowledgeGraph g;
  g.add_fact(fact("en:nervous", "interoceptive.mean", RelType::cognitive, "lit:4.053", "lancaster"));
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.facts()[0].tail.value(), 4.053);
}

TEST(AddFact, DuplicateIsNoOpAndMergesSources) {
  KnowledgeGraph g;
  auto f = fact("asl:read", "handshape", RelType::phonological, "phoneme:V", "asllex");
  EXPECT_TRUE(g.add_fact(f));
  EXPECT_FALSE(g.add_fact(f));
  EXPECT_EQ(g.size(), 1u);
  f.source = "signdata";
  g.add_fact(f);
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.facts()[0].source, "asllex,signdata");
}

TEST(AddFact, Rejections) {
  KnowledgeGraph g;
  EXPECT_THROW(g.add_fact(fact("lit:1.0", "frequency", RelType::statistical, "lit:2")), PreconditionError);
  EXPECT_THROW(g.add_fact(fact("asl:read", "handshape", RelType::phonological, "lit:1")), PreconditionError);
  EXPECT_THROW(g.add_fact(fact("asl:read", "handshape", RelType::phonological, "en:read")), PreconditionError);
  EXPECT_THROW(g.add_fact(fact("asl:read", "compound_of", RelType::morphological, "lit:2")), PreconditionError);
  g.add_fact(fact("asl:read", "handshape", RelType::phonological, "phoneme:V"));
  EXPECT_THROW(g.add_fact(fact("asl:book", "handshape", RelType::semantic, "semfeat:x")), PreconditionError);
  EXPECT_EQ(g.size(), 1u);
}

TEST(AddFact, FrozenGraphRejectsWrites) {
  KnowledgeGraph g;
  g.freeze();
  EXPECT_THROW(g.add_fact(fact("asl:a", "handshape", RelType::phonological, "phoneme:B")), PreconditionError);
  EXPECT_THROW(g.add_entity(EntityId::parse("asl:a")), PreconditionError);
}

TEST(FactsOfType, Examples) {
  EXPECT_TRUE(facts_of_type(KnowledgeGraph{}, RelType::phonological).empty());
  auto g = graph_of({fact("asl:a", "handshape", RelType::phonological, "phoneme:B"),
                     fact("asl:a", "location", RelType::phonological, "phoneme:chin"),
                     fact("asl:a", "has_translation", RelType::translation, "en:a")});
  EXPECT_EQ(facts_of_type(g, RelType::phonological).size(), 2u);
  EXPECT_EQ(facts_of_type(g, RelType::translation).size(), 1u);
  EXPECT_TRUE(facts_of_type(g, RelType::semantic).empty());
}

TEST(FactsOfType, PartitionLaw) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = random_graph(seed, 15, 80, 2);
    std::size_t total = 0;
    for (auto t : kAllRelTypes) {
      auto part = facts_of_type(g, t);
      for (auto& f : part) EXPECT_EQ(f.type(), t);
      total += part.size();
    }
    EXPECT_EQ(total, g.size());
  }
}

TEST(DegreeStats, SingleFact) {
  auto g = graph_of({fact("asl:a", "compound_of", RelType::morphological, "asl:b")});
  auto s = degree_stats(g, Namespace::asl);
  EXPECT_EQ(s.population, 2u);
  EXPECT_DOUBLE_EQ(s.avg_in, 0.5);
  EXPECT_DOUBLE_EQ(s.avg_out, 0.5);
  EXPECT_DOUBLE_EQ(s.sd_in, 0.5);
}

TEST(DegreeStats, ChainAgainstDirectFormula) {
  auto g = graph_of({fact("asl:a", "compound_of", RelType::morphological, "asl:b"),
                     fact("asl:b", "compound_of", RelType::morphological, "asl:c")});
  auto s = degree_stats(g, Namespace::asl);
  // in-degrees 0,1,1 and out-degrees 1,1,0
  EXPECT_NEAR(s.avg_in, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.sd_in, std::sqrt(2.0 / 9.0), 1e-12);
  EXPECT_NEAR(s.avg_out, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.sd_out, std::sqrt(2.0 / 9.0), 1e-12);
}

TEST(DegreeStats, EmptyNamespaceIsAnError) {
  auto g = graph_of({fact("asl:a", "handshape", RelType::phonological, "phoneme:B")});
  try {
    degree_stats(g, Namespace::en);
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("no population"), std::string::npos);
  }
}

TEST(DegreeStats, Conservation) {
  // Every fact adds one out-degree to its head and one in-degree to its tail.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(seed, 12, 60, 1);
    double in_sum = 0, out_sum = 0;
    for (auto ns : kAllNamespaces) {
      if (g.entities_in(ns).empty()) continue;
      auto s = degree_stats(g, ns);
      in_sum += s.avg_in * static_cast<double>(s.population);
      out_sum += s.avg_out * static_cast<double>(s.population);
    }
    EXPECT_NEAR(in_sum, static_cast<double>(g.size()), 1e-9);
    EXPECT_NEAR(out_sum, static_cast<double>(g.size()), 1e-9);
  }
}

TEST(SubgraphForEmbedding, DropsLiteralAndVideoTails) {
  std::vector<Fact> facts;
  for (int i = 0; i < 6; ++i) facts.push_back(fact("asl:s" + std::to_string(i), "handshape", RelType::phonological, "phoneme:B"));
  for (int i = 0; i < 4; ++i) facts.push_back(fact("asl:s" + std::to_string(i), "frequency", RelType::statistical, "lit:" + std::to_string(i)));
  auto g = graph_of(facts);
  EXPECT_EQ(subgraph_for_embedding(g).size(), 6u);
  EXPECT_TRUE(subgraph_for_embedding(KnowledgeGraph{}).empty());
}

TEST(IdempotentInsertion, ReinsertingEveryFactChangesNothing) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(seed);
    auto copy = g;
    for (auto f : g.facts()) copy.add_fact(f);
    EXPECT_EQ(copy.size(), g.size());
    EXPECT_TRUE(same_triples(copy, g));
  }
}

TEST(Folds, SignFoldSizesBalanced) {
  KnowledgeGraph g;
  for (int i = 0; i < 5802; ++i) g.add_entity(EntityId(Namespace::asl, "s" + std::to_string(i)));
  auto folds = assign_folds(g, 1);
  std::size_t total = 0;
  for (int f = 0; f < kSignFolds; ++f) {
    auto n = folds.signs_in(f).size();
    EXPECT_TRUE(n == 580 || n == 581) << n;
    total += n;
  }
  EXPECT_EQ(total, 5802u);
}

TEST(Folds, OneSignFiveVideos) {
  KnowledgeGraph g;
  for (int k = 0; k < 5; ++k) g.add_fact(fact("asl:a", "has_video", RelType::meta, "video:a" + std::to_string(k)));
  auto folds = assign_folds(g, 3);
  std::set<int> used;
  for (auto& [v, f] : folds.instance_folds) used.insert(f);
  EXPECT_EQ(used.size(), 5u);
}

TEST(Folds, InstanceFoldsStratifiedPerSign) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(seed, 20, 40, 1 + seed % 7);
    auto folds = assign_folds(g, seed);
    std::map<EntityId, std::array<int, kInstanceFolds>> per_sign;
    for (auto& [v, f] : folds.instance_folds) per_sign[sign_of_video(g, v)][static_cast<std::size_t>(f)]++;
    for (auto& [s, counts] : per_sign) {
      auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      EXPECT_LE(*hi - *lo, 1);
    }
    std::array<std::size_t, kSignFolds> sizes{};
    for (auto& [s, f] : folds.sign_folds) sizes[static_cast<std::size_t>(f)]++;
    auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    EXPECT_LE(*hi - *lo, 1u);
  }
}

TEST(Folds, DeterministicInSeed) {
  auto g = random_graph(5, 40, 100, 3);
  EXPECT_EQ(assign_folds(g, 9), assign_folds(g, 9));
  EXPECT_NE(assign_folds(g, 9).sign_folds, assign_folds(g, 10).sign_folds);
}

TEST(Folds, OrphanVideoNamed) {
  KnowledgeGraph g;
  g.add_entity(EntityId::parse("asl:a"));
  g.add_entity(EntityId::parse("video:lost"));
  try {
    assign_folds(g, 0);
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("video:lost"), std::string::npos);
  }
}

TEST(Folds, VideoLinkedToTwoSigns) {
  auto g = graph_of({fact("asl:a", "has_video", RelType::meta, "video:x"),
                     fact("asl:b", "has_video", RelType::meta, "video:x")});
  EXPECT_THROW(assign_folds(g, 0), PreconditionError);
}

TEST(FactFile, RoundTrip) {
  auto g = random_graph(11, 10, 50, 2);
  std::stringstream buf;
  write_facts(buf, g);
  auto back = read_facts(buf);
  EXPECT_TRUE(back.frozen());
  EXPECT_TRUE(same_triples(g, back));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.facts()[i].source, back.facts()[i].source);
}

TEST(FactFile, CommentsAndBlankLinesIgnored) {
  std::stringstream in("# header\n\nasl:a\thandshape\tphoneme:B\tphonological\tx\n");
  EXPECT_EQ(read_facts(in).size(), 1u);
}

TEST(FactFile, BadLineReportsLineNumber) {
  std::stringstream in("asl:a\thandshape\tphoneme:B\tphonological\tx\nasl:b\thandshape\tlit:2\tphonological\tx\n");
  try {
    read_facts(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::stringstream short_line("asl:a\thandshape\tphoneme:B\n");
  EXPECT_THROW(read_facts(short_line), ParseError);
}

TEST(FoldFile, RoundTripAndErrors) {
  auto folds = assign_folds(random_graph(2, 25, 30, 2), 4);
  std::stringstream buf;
  write_fold_map(buf, folds.sign_folds);
  EXPECT_EQ(read_fold_map(buf), folds.sign_folds);
  std::stringstream bad("asl:a\tx\n");
  EXPECT_THROW(read_fold_map(bad), ParseError);
}

TEST(Views, WithoutEntitiesRemovesIncidentFacts) {
  auto g = graph_of({fact("asl:a", "handshape", RelType::phonological, "phoneme:B"),
                     fact("asl:b", "handshape", RelType::phonological, "phoneme:B"),
                     fact("asl:a", "compound_of", RelType::morphological, "asl:b")});
  auto h = g.without_entities({EntityId::parse("asl:a")});
  EXPECT_EQ(h.size(), 1u);
  EXPECT_FALSE(h.has_entity(EntityId::parse("asl:a")));
  EXPECT_EQ(g.objects(EntityId::parse("asl:a"), "handshape"), std::vector<EntityId>{EntityId::parse("phoneme:B")});
}
