#include <gtest/gtest.h>

#include <sstream>

#include "kgns/synthetic.hpp"
#include "support.hpp"

using namespace kgns;
using kgns::test::fact;
using kgns::test::graph_of;

namespace {

KnowledgeGraph two_type_graph() {
  return graph_of({fact("asl:read", "handshape", RelType::phonological, "phoneme:V"),
                   fact("asl:read", "movement", RelType::phonological, "phoneme:arc"),
                   fact("asl:book", "handshape", RelType::phonological, "phoneme:B"),
                   fact("asl:book", "movement", RelType::phonological, "phoneme:straight"),
                   fact("asl:cat", "handshape", RelType::phonological, "phoneme:F"),
                   fact("asl:dog", "handshape", RelType::phonological, "phoneme:V"),
                   fact("asl:x", "movement", RelType::phonological, "phoneme:circle"),
                   fact("asl:y", "movement", RelType::phonological, "phoneme:zigzag")});
}

void expect_valid(const PhonemeObservation& obs) {
  for (auto& d : obs.distributions) EXPECT_NO_THROW(validate_distribution(d)) << d.feature_type;
}

}  // namespace

TEST(Schema, TypesAndValuesFromGraph) {
  auto s = PhonologySchema::from_graph(two_type_graph());
  EXPECT_EQ(s.types(), (std::vector<std::string>{"handshape", "movement"}));
  EXPECT_EQ(s.values(0), (std::vector<std::string>{"B", "F", "V"}));
  EXPECT_EQ(s.values(1).size(), 4u);
  EXPECT_EQ(s.value_count(), 7u);
  EXPECT_EQ(*s.value_index(1, "circle"), 1u);
}

TEST(OneHotFromGold, AnnotatedTypeIsOneHot) {
  auto g = two_type_graph();
  auto obs = one_hot_from_gold(g, EntityId::parse("asl:read"));
  EXPECT_EQ(obs.window_id, "read");
  EXPECT_EQ(obs.at("handshape").probs, (std::map<std::string, double>{{"V", 1.0}}));
  expect_valid(obs);
}

TEST(OneHotFromGold, MissingTypeIsUniform) {
  auto g = two_type_graph();
  auto obs = one_hot_from_gold(g, EntityId::parse("asl:cat"));
  const auto& m = obs.at("movement");
  ASSERT_EQ(m.probs.size(), 4u);
  for (auto& [v, p] : m.probs) EXPECT_DOUBLE_EQ(p, 0.25);
  expect_valid(obs);
}

TEST(OneHotFromGold, IdenticalAnnotationsIdenticalObservations) {
  auto g = graph_of({fact("asl:a", "handshape", RelType::phonological, "phoneme:V"),
                     fact("asl:b", "handshape", RelType::phonological, "phoneme:V")});
  auto a = one_hot_from_gold(g, PhonologySchema::from_graph(g), EntityId::parse("asl:a"), "w");
  auto b = one_hot_from_gold(g, PhonologySchema::from_graph(g), EntityId::parse("asl:b"), "w");
  EXPECT_EQ(a, b);
}

TEST(OneHotFromGold, NoPhonologyIsAnError) {
  auto g = two_type_graph();
  g.add_fact(fact("asl:z", "has_translation", RelType::translation, "en:z"));
  EXPECT_THROW(one_hot_from_gold(g, EntityId::parse("asl:z")), PreconditionError);
}

TEST(OneHotFromGold, AlwaysValidOnSyntheticLexicons) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    synthetic::LexiconConfig cfg;
    cfg.seed = seed;
    auto lex = synthetic::make_lexicon(cfg);
    for (auto& obs : synthetic::gold_observations(lex).observations) {
      expect_valid(obs);
      EXPECT_EQ(obs.distributions.size(), cfg.feature_types.size());
    }
  }
}

TEST(ObservationFile, SingleWindowLoads) {
  auto g = two_type_graph();
  std::stringstream in("window w1\ndist handshape V:1\ndist movement arc:1\n");
  auto set = read_observations(in, g);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.observations[0].at("movement").argmax(), "arc");
}

TEST(ObservationFile, FileOrderKept) {
  auto g = two_type_graph();
  std::stringstream in("window c\ndist handshape V:1\nwindow a\ndist handshape B:1\nwindow b\ndist handshape F:1\n");
  auto set = read_observations(in, g);
  ASSERT_EQ(set.size(), 3u);
  EXPECT_EQ(set.observations[0].window_id, "c");
  EXPECT_EQ(set.observations[1].window_id, "a");
  EXPECT_EQ(set.observations[2].window_id, "b");
}

TEST(ObservationFile, Rejections) {
  auto g = two_type_graph();
  auto line_of = [&](const std::string& text) -> std::size_t {
    std::stringstream in(text);
    try {
      read_observations(in, g);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("window w\ndist handshape V:0.5 B:0.4\n"), 2u);
  EXPECT_EQ(line_of("window w\ndist handshape V:1\ndist handshape Q:1\n"), 3u);
  EXPECT_EQ(line_of("window w\ndist shape V:1\n"), 2u);
  EXPECT_EQ(line_of("window w\nwindow w\n"), 2u);
  EXPECT_EQ(line_of("dist handshape V:1\n"), 1u);
  EXPECT_EQ(line_of("window w\ndist handshape V:1.5 B:-0.5\n"), 2u);
  EXPECT_EQ(line_of("window w\ndist handshape V:0.9999999\n"), 0u);
}

TEST(ObservationFile, RoundTrip) {
  synthetic::LexiconConfig cfg;
  cfg.n_signs = 10;
  auto lex = synthetic::make_lexicon(cfg);
  auto rng = make_rng(2);
  ObservationSet set;
  for (std::size_t i = 0; i < lex.signs.size(); ++i)
    set.observations.push_back(synthetic::noisy_observation(lex, cfg, lex.signs[i], "w" + std::to_string(i), 0.3, 0.7, rng));
  std::stringstream buf;
  write_observations(buf, set);
  auto back = read_observations(buf, lex.graph);
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    ASSERT_EQ(back.observations[i].distributions.size(), set.observations[i].distributions.size());
    for (std::size_t t = 0; t < set.observations[i].distributions.size(); ++t)
      for (auto& [v, p] : set.observations[i].distributions[t].probs)
        EXPECT_NEAR(back.observations[i].distributions[t].prob(v), p, 1e-9 * std::max(1.0, p));
  }
  // a second save/load cycle is byte-stable
  std::stringstream again;
  write_observations(again, back);
  std::stringstream first;
  write_observations(first, set);
  EXPECT_EQ(again.str(), first.str());
}

TEST(ObservationFile, MissingPath) {
  EXPECT_THROW(load_observations("/nonexistent/x.obs", two_type_graph()), Error);
}

TEST(Distribution, ArgmaxTieGoesToSmallestLabel) {
  FeatureDistribution d{"handshape", {{"V", 0.5}, {"B", 0.5}}};
  EXPECT_EQ(d.argmax(), "B");
}
