// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>

#include "kgns/synthetic.hpp"
#include "support.hpp"

using namespace kgns;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> body;
};

std::string fmt(double x) { return format_real(x, 4); }

// 1. Exact inference vs enumeration on random tree-shaped factor graphs
// (the sign variable plus up to three features, at most six states each).
Outcome exact_inference() {
  auto rng = make_rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto fg = test::random_fgm(rng);
    fg.validate();
    auto ev = test::random_evidence(fg, rng);
    auto [ps, px] = test::brute_force(fg, ev);
    auto post = fgm_infer(fg, ev);
    for (std::size_t s = 0; s < ps.size(); ++s) worst = std::max(worst, std::abs(post.sign[s] - ps[s]));
    for (std::size_t f = 0; f < px.size(); ++f)
      for (std::size_t v = 0; v < px[f].size(); ++v) worst = std::max(worst, std::abs(post.features[f][v] - px[f][v]));
  }
  return {worst <= 1e-9, "max marginal error " + format_real(worst, 3)};
}

// 2. Score gradients vs central differences.
Outcome gradient_check() {
  auto rng = make_rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  auto vec = [&] {
    std::vector<double> v(16);
    for (auto& x : v) x = g(rng);
    return v;
  };
  const double step = 1e-5;
  double worst = 0;
  for (auto kind : {Scorer::transe, Scorer::distmult})
    for (int point = 0; point < 100; ++point) {
      auto h = vec(), r = vec(), t = vec();
      auto grad = score_gradient<double>(kind, h, r, t);
      std::vector<double>* args[] = {&h, &r, &t};
      std::vector<double>* grads[] = {&grad.head, &grad.relation, &grad.tail};
      for (int a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < h.size(); ++i) {
          auto& v = *args[a];
          double keep = v[i];
          v[i] = keep + step;
          double up = score<double>(kind, h, r, t);
          v[i] = keep - step;
          double down = score<double>(kind, h, r, t);
          v[i] = keep;
          double numeric = (up - down) / (2 * step), analytic = (*grads[a])[i];
          worst = std::max(worst, std::abs(numeric - analytic) / std::max(std::abs(numeric) + std::abs(analytic), 1e-8));
        }
    }
  return {worst <= 1e-4, "max relative error " + format_real(worst, 3)};
}

// 3. Held-out link prediction on the planted 20-entity graph.
Outcome link_prediction() {
  auto p = test::planted_graph();
  TrainConfig cfg;
  cfg.epochs = 200;
  auto s = train(p.train, cfg);
  auto rng = make_rng(1);
  NegativeSampler sampler(p.full);
  std::vector<double> pos, neg;
  for (auto& f : p.held_out) {
    pos.push_back(s.score(f));
    for (int k = 0; k < 10; ++k) neg.push_back(s.score(sampler.sample(f, rng)));
  }
  double auc = ranking_auc(pos, neg);
  return {auc >= 0.9, "AUC " + fmt(auc) + " over " + std::to_string(pos.size()) + " held-out facts"};
}

// 4. MLP-ISR with TransE-initialized phoneme embeddings vs random init. 100 signs drawn
// from 10 latent classes; two noisy training examples per sign (data-scarce regime) and
// three test examples; a flipped phoneme lands on a fixed confusable neighbour.
Outcome knowledge_infusion() {
  double sum_r = 0, sum_t = 0;
  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    synthetic::LexiconConfig lc;
    lc.n_signs = 100;
    lc.latent_classes = 10;
    lc.mutation = 0.3;
    lc.seed = seed;
    auto lex = synthetic::make_lexicon(lc);
    auto neighbour = [&](std::size_t t, std::size_t v) { return (v + 1) % lc.feature_types[t].values; };
    auto rng = make_rng(seed + 100);
    std::vector<PhonemeObservation> train_obs, test_obs;
    std::vector<EntityId> train_y, test_y;
    for (auto& s : lex.signs) {
      for (int k = 0; k < 2; ++k) {
        train_obs.push_back(synthetic::noisy_observation(lex, lc, s, "tr", 0.2, 0.8, rng, neighbour));
        train_y.push_back(s);
      }
      for (int k = 0; k < 3; ++k) {
        test_obs.push_back(synthetic::noisy_observation(lex, lc, s, "te", 0.2, 0.8, rng, neighbour));
        test_y.push_back(s);
      }
    }
    TrainConfig tc;
    tc.epochs = 200;
    tc.seed = seed;
    auto space = train(lex.graph, tc);
    MlpConfig mc;
    mc.seed = seed;
    double acc_r = isr_evaluate(mlp_isr_train(lex.graph, train_obs, train_y, mc), test_obs, test_y);
    mc.init = EmbeddingInit::transe_nodes;
    double acc_t = isr_evaluate(mlp_isr_train(lex.graph, train_obs, train_y, mc, &space), test_obs, test_y);
    sum_r += acc_r;
    sum_t += acc_t;
    wins += acc_t > acc_r;
    per_seed += " " + fmt(acc_t) + "/" + fmt(acc_r);
  }
  double mr = sum_r / 5, mt = sum_t / 5;
  return {mt >= mr - 0.01 && wins >= 3,
          "mean transe " + fmt(mt) + " vs random " + fmt(mr) + ", wins " + std::to_string(wins) + "/5 (per seed" + per_seed + ")"};
}

// 5. Every engine is perfect on one-hot gold observations of distinct signs.
Outcome oracle_isr() {
  synthetic::LexiconConfig lc;
  lc.n_signs = 100;
  lc.seed = 5;
  auto lex = synthetic::make_lexicon(lc);
  auto gold = synthetic::gold_observations(lex).observations;
  FgmRecognizer fgm(fgm_fit(lex.graph, lex.schema, lex.signs));
  KnnRecognizer knn(build_knn_index(lex.graph, lex.schema, lex.signs, 1));
  MlpConfig mc;
  auto mlp = mlp_isr_train(lex.graph, gold, lex.signs, mc);
  double a = isr_evaluate(fgm, gold, lex.signs), b = isr_evaluate(knn, gold, lex.signs), c = isr_evaluate(mlp, gold, lex.signs);
  return {a == 1.0 && b == 1.0 && c == 1.0, "fgm " + fmt(a) + ", knn " + fmt(b) + ", mlp " + fmt(c)};
}

// 6. The three distance examples over sixteen feature types.
Outcome distance_examples() {
  auto g = test::sixteen_type_graph();
  auto schema = PhonologySchema::from_graph(g);
  auto x = gold_phonemes(g, schema, EntityId::parse("asl:x"));
  double same = knn_distance(x, one_hot_from_gold(g, schema, EntityId::parse("asl:x")));
  double disjoint = knn_distance(x, one_hot_from_gold(g, schema, EntityId::parse("asl:z")));
  double half = knn_distance(x, one_hot_from_gold(g, schema, EntityId::parse("asl:y")));
  bool ok = std::abs(same) <= 1e-12 && std::abs(disjoint - 1) <= 1e-12 && std::abs(half - 0.5) <= 1e-12;
  return {ok, "d(x,x)=" + fmt(same) + " d(x,z)=" + fmt(disjoint) + " d(x,y)=" + fmt(half)};
}

// 7. Planted handshape -> meaning rule recovered on held-out sign folds.
Outcome systematicity() {
  auto run = [](double noise) {
    synthetic::LexiconConfig lc;
    lc.n_signs = 200;
    lc.seed = 1;
    lc.semantic_noise = noise;
    auto noisy = synthetic::make_lexicon(lc);
    lc.semantic_noise = 0;
    auto clean = synthetic::make_lexicon(lc);  // same signs, rule-true labels
    auto folds = assign_folds(noisy.graph, 0);
    SfrConfig cfg;
    cfg.kind = SfrKind::linear;
    cfg.epochs = 20;
    cfg.learning_rate = 0.01;
    cfg.seed = 3;
    auto schema = PhonologySchema::from_graph(clean.graph);
    double f1 = 0;
    for (int fold = 0; fold < kSignFolds; ++fold) {
      auto model = sfr_train(noisy.graph, folds, fold, cfg);
      auto held = folds.signs_in(fold);
      f1 += sfr_evaluate(model, make_sfr_examples(clean.graph, schema, {held.begin(), held.end()})).micro_f1;
    }
    return f1 / kSignFolds;
  };
  double f0 = run(0.0), f20 = run(0.2);
  return {f0 == 1.0 && f20 >= 0.7, "F1 " + fmt(f0) + " at 0% noise, " + fmt(f20) + " at 20% noise"};
}

// 8. Relation-type partition and fold balance on random graphs.
Outcome partition_and_folds() {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = test::random_graph(seed, 25 + seed, 100, 1 + seed % 6);
    std::size_t total = 0;
    for (auto t : kAllRelTypes) {
      for (auto& f : facts_of_type(g, t))
        if (f.type() != t) return {false, "fact of the wrong type in partition " + std::string(rel_type_name(t))};
      total += facts_of_type(g, t).size();
    }
    if (total != g.size()) return {false, "partitions do not cover the graph (seed " + std::to_string(seed) + ")"};
    auto folds = assign_folds(g, seed);
    std::vector<std::size_t> sizes(kSignFolds, 0), inst(kInstanceFolds, 0);
    for (auto& [_, f] : folds.sign_folds) ++sizes[static_cast<std::size_t>(f)];
    for (auto& [_, f] : folds.instance_folds) ++inst[static_cast<std::size_t>(f)];
    auto spread = [](const std::vector<std::size_t>& v) { return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end()); };
    if (spread(sizes) > 1 || spread(inst) > 1) return {false, "fold sizes differ by more than one (seed " + std::to_string(seed) + ")"};
    if (folds.sign_folds.size() != g.entities_in(Namespace::asl).size() ||
        folds.instance_folds.size() != g.entities_in(Namespace::video).size())
      return {false, "folds do not cover every sign and video"};
    // per-sign stratification
    std::map<EntityId, std::vector<std::size_t>> per_sign;
    for (auto& [v, f] : folds.instance_folds) {
      auto& c = per_sign[sign_of_video(g, v)];
      c.resize(kInstanceFolds);
      ++c[static_cast<std::size_t>(f)];
    }
    for (auto& [_, c] : per_sign)
      if (spread(c) > 1) return {false, "instance folds not stratified per sign"};
    ++checked;
  }
  return {checked == 20, std::to_string(checked) + " graphs checked"};
}

// 9. Windows -> gloss -> embed -> mlp_t on a 3-topic corpus whose topics own disjoint signs.
Outcome end_to_end() {
  synthetic::LexiconConfig lc;
  lc.n_signs = 60;
  lc.topics = 3;
  lc.seed = 9;
  auto lex = synthetic::make_lexicon(lc);
  synthetic::CorpusConfig cc;
  cc.videos = 300;
  cc.seed = 10;
  auto corpus = synthetic::make_corpus(lex, lc, cc);
  auto wv = synthetic::make_word_vectors(lex, 16, 3.0, 0.3, 11, cc.filler);
  auto tracks = tracks_from(corpus.observations);
  KnnRecognizer rec(build_knn_index(lex.graph, lex.schema, lex.signs, 1));
  PipelineModels models{&lex.graph, &rec, &wv, nullptr, nullptr};
  TopicExperimentConfig cfg;
  cfg.lda.n_topics = 3;
  cfg.lda.sweeps = 200;
  cfg.classifier.kind = TopicKind::mlp_t;
  cfg.classifier.epochs = 100;
  cfg.classifier.learning_rate = 0.01;
  auto res = run_topic_experiment(corpus.captions, tracks, models, cfg);
  double worst = 1;
  std::string cells;
  for (auto& c : res.cells) {
    worst = std::min(worst, c.accuracy);
    cells += " W" + std::to_string(c.spec.width) + "/S" + std::to_string(c.spec.step) + "=" + fmt(c.accuracy);
  }
  return {worst >= res.baselines.majority + 0.3,
          "worst cell " + fmt(worst) + " vs majority " + fmt(res.baselines.majority) + " (" + cells.substr(1) + ")"};
}

// 10. Seeded CLI commands write byte-identical metric TSVs on consecutive runs.
Outcome determinism() {
  auto dir = test::temp_dir("determinism");
  auto fx = test::run(KGNS_FIXTURE, "--out-dir fx --signs 30 --corpus-videos 40 --seed 4", dir);
  if (fx.status != 0) return {false, "fixture generation failed: " + fx.err};
  const std::vector<std::string> commands{
      "train-embeddings --graph graph.tsv --out emb.txt --epochs 20",
      "isr --graph graph.tsv --observations videos.obs --engine fgm",
      "isr --graph graph.tsv --observations videos.obs --engine knn",
      "isr --graph graph.tsv --observations videos.obs --engine mlp --epochs 20",
      "isr --graph graph.tsv --observations videos.obs --engine mlp --epochs 20 --init transe_nodes --embeddings emb.txt",
      "sfr --graph graph.tsv --kind linear --epochs 10",
      "sfr --graph graph.tsv --direction sigma_to_phi --kind mlp --epochs 5",
      "topic --graph graph.tsv --captions captions.tsv --observations segments.obs --word-vectors words.vec --topics 3 "
      "--sweeps 50",
  };
  std::size_t n = 0;
  for (auto& c : commands) {
    std::string tsv[2];
    for (int k = 0; k < 2; ++k) {
      auto path = "m" + std::to_string(n) + "_" + std::to_string(k) + ".tsv";
      auto r = test::run(KGNS_CLI, c + " --seed 5 --metrics " + path, dir / "fx");
      if (r.status != 0) return {false, "'" + c + "' failed: " + r.err};
      tsv[k] = test::slurp(dir / "fx" / path);
    }
    if (tsv[0].empty() || tsv[0] != tsv[1]) return {false, "metrics differ for '" + c + "'"};
    ++n;
  }
  return {true, std::to_string(n) + " commands byte-identical"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "exact inference matches enumeration", 5, exact_inference},
      {2, "embedding gradients match finite differences", 5, gradient_check},
      {3, "held-out link prediction AUC >= 0.9", 30, link_prediction},
      {4, "TransE init not worse than random init for MLP-ISR", 300, knowledge_infusion},
      {5, "oracle ISR is perfect for fgm, knn and mlp", 60, oracle_isr},
      {6, "knn distance examples", 0, distance_examples},
      {7, "systematicity recovered on held-out signs", 120, systematicity},
      {8, "partition law and fold balance", 5, partition_and_folds},
      {9, "end-to-end topic accuracy >= majority + 0.3", 180, end_to_end},
      {10, "seeded commands are deterministic", 0, determinism},
  };
  int failed = 0;
  for (auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += "; over the " + format_real(c.budget_s, 3) + " s budget";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " -- " << o.detail << " ["
              << format_real(secs, 3) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed ? 1 : 0;
}
