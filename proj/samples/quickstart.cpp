// Builds a tiny lexicon, trains TransE node embeddings, then recognizes a sign from a
// noisy phoneme observation with each of the three engines.

#include <iostream>

#include "kgns/kgns.hpp"
#include "kgns/synthetic.hpp"

int main() {
  using namespace kgns;
  synthetic::LexiconConfig cfg;
  cfg.n_signs = 20;
  cfg.seed = 7;
  auto lex = synthetic::make_lexicon(cfg);
  const auto& g = lex.graph;
  std::cout << g.size() << " facts, " << g.entities().size() << " entities\n";

  TrainConfig tc;
  tc.epochs = 50;
  tc.seed = 7;
  auto space = train(g, tc);

  auto schema = PhonologySchema::from_graph(g);
  std::vector<PhonemeObservation> gold;
  for (auto& s : lex.signs) gold.push_back(one_hot_from_gold(g, schema, s));

  FgmRecognizer fgm(fgm_fit(g, schema, lex.signs));
  KnnRecognizer knn(build_knn_index(g, schema, lex.signs, 1));
  MlpConfig mc;
  mc.init = EmbeddingInit::transe_nodes;
  auto mlp = mlp_isr_train(g, gold, lex.signs, mc, &space);

  auto rng = make_rng(1);
  const auto& target = lex.signs[3];
  auto obs = synthetic::noisy_observation(lex, cfg, target, "demo", 0.1, 0.8, rng);
  std::cout << "true sign " << target.str() << '\n';
  for (auto [name, model] : {std::pair<const char*, const SignRecognizer*>{"fgm", &fgm}, {"knn", &knn}, {"mlp", &mlp}}) {
    auto p = model->predict(obs);
    std::cout << name << "\t" << p.sign.str() << "\t" << format_real(p.confidence, 3) << '\n';
  }
}
