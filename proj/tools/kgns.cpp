// kgns: batch command line over the knowledge-graph library.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "kgns/kgns.hpp"

namespace {

using namespace kgns;

struct MetricRow {
  std::string task, engine, init, fold, metric;
  double value;
};

class Metrics {
 public:
  void add(std::string task, std::string engine, std::string init, std::string fold, std::string metric, double v) {
    rows_.push_back({std::move(task), std::move(engine), std::move(init), std::move(fold), std::move(metric), v});
  }
  void write(std::ostream& out) const {
    out << "task\tengine\tinit\tfold\tmetric\tvalue\n";
    for (auto& r : rows_)
      out << r.task << '\t' << r.engine << '\t' << r.init << '\t' << r.fold << '\t' << r.metric << '\t'
          << format_real(r.value) << '\n';
  }
  void save(const std::string& path) const {
    if (path.empty()) {
      write(std::cout);
      return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write metrics file '" + path + "'");
    write(out);
  }

 private:
  std::vector<MetricRow> rows_;
};

/// Text report: command, resolved configuration, then result lines.
class Report {
 public:
  explicit Report(const CLI::App* cmd) : cmd_(cmd) {}
  void line(const std::string& s) { lines_.push_back(s); }
  template <typename... A>
  void kv(const std::string& key, const A&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    lines_.push_back(key + "\t" + os.str());
  }
  void save(const std::string& path) const {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw Error("cannot write report '" + path + "'");
    out << "command\t" << cmd_->get_name() << "\n# resolved config\n" << cmd_->config_to_str(true, false)
        << "# results\n";
    for (auto& l : lines_) out << l << '\n';
  }

 private:
  const CLI::App* cmd_;
  std::vector<std::string> lines_;
};

template <typename F>
void with_output(const std::string& path, F&& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  body(out);
}

std::vector<EntityId> phonology_signs(const KnowledgeGraph& g) {
  std::vector<EntityId> out;
  for (auto& s : g.entities_in(Namespace::asl))
    for (auto fi : g.outgoing(s))
      if (g.facts()[fi].type() == RelType::phonological) {
        out.push_back(s);
        break;
      }
  return out;
}

/// The sign an observation demonstrates: its window id names a video entity or a sign.
EntityId label_of(const KnowledgeGraph& g, const std::string& window_id) {
  EntityId video(Namespace::video, window_id);
  if (g.has_entity(video)) return sign_of_video(g, video);
  EntityId sign(Namespace::asl, window_id);
  if (g.has_entity(sign)) return sign;
  throw PreconditionError("window '" + window_id + "' names neither a video nor a sign in the graph");
}

struct IsrOptions {
  std::string engine = "knn";
  std::string init = "random";
  std::string embeddings;
  int k = 5;
  double smoothing = 1.0;
  int epochs = 100;
};

std::optional<EmbeddingSpace> load_space(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_embedding_file(path);
}

std::unique_ptr<SignRecognizer> make_recognizer(const IsrOptions& o, const KnowledgeGraph& g,
                                                const std::vector<EntityId>& signs,
                                                const std::vector<PhonemeObservation>& train_obs,
                                                const std::vector<EntityId>& train_labels, const EmbeddingSpace* space,
                                                std::uint64_t seed) {
  auto schema = PhonologySchema::from_graph(g);
  if (o.engine == "fgm") {
    FgmFitConfig cfg;
    cfg.smoothing = o.smoothing;
    return std::make_unique<FgmRecognizer>(fgm_fit(g, schema, signs, cfg));
  }
  if (o.engine == "knn") return std::make_unique<KnnRecognizer>(build_knn_index(g, schema, signs, o.k));
  MlpConfig cfg;
  cfg.epochs = o.epochs;
  cfg.seed = seed;
  cfg.init = parse_init(o.init);
  return std::make_unique<IsrMlp>(mlp_isr_train(g, train_obs, train_labels, cfg, space));
}

void save_recognizer(const std::string& path, const SignRecognizer& r) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw Error("cannot write model '" + path + "'");
  if (auto* f = dynamic_cast<const FgmRecognizer*>(&r)) write_factor_graph(out, f->graph());
  else if (auto* k = dynamic_cast<const KnnRecognizer*>(&r)) write_knn_index(out, k->index());
  else if (auto* m = dynamic_cast<const IsrMlp*>(&r)) m->network().save(out);
}

void add_isr_options(CLI::App* c, IsrOptions& o, const std::string& engine_flag) {
  c->add_option(engine_flag, o.engine, "Recognizer engine")->check(CLI::IsMember({"fgm", "knn", "mlp"}));
  c->add_option("--init", o.init, "MLP input embedding init")
      ->check(CLI::IsMember({"random", "transe_nodes", "distmult_nodes"}));
  c->add_option("--embeddings", o.embeddings, "Embedding file for KG-initialized MLP");
  c->add_option("--k", o.k, "kNN neighbours")->check(CLI::PositiveNumber);
  c->add_option("--smoothing", o.smoothing, "FGM Laplace smoothing")->check(CLI::NonNegativeNumber);
  c->add_option("--epochs", o.epochs, "MLP training epochs")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph tools for sign recognition and topic classification"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_config("--config", "", "TOML/INI file supplying option values");
  app.option_defaults()->always_capture_default();

  std::uint64_t seed = 0;
  std::string report_path, metrics_path;
  auto common = [&](CLI::App* c, bool metrics) {
    c->add_option("--seed", seed, "Random seed")->envname("KGNS_SEED");
    c->add_option("--report", report_path, "Write a text report here");
    if (metrics) c->add_option("--metrics", metrics_path, "Write metrics TSV here (stdout if absent)");
  };

  // ingest
  std::string manifest_path, graph_path, out_path;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a refined fact file from a table manifest");
  ingest_cmd->add_option("--manifest", manifest_path, "JSON table manifest");
  ingest_cmd->add_option("--graph", graph_path, "Refine an existing fact file instead");
  ingest_cmd->add_option("--out", out_path, "Output fact file")->required();
  common(ingest_cmd, false);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Fact counts by relation type and degree statistics");
  stats_cmd->add_option("--graph", graph_path, "Fact file")->required();
  stats_cmd->add_option("--out", out_path, "Output TSV (stdout if absent)");
  common(stats_cmd, false);

  // folds
  std::string instance_out;
  auto* folds_cmd = app.add_subcommand("folds", "Assign sign and instance folds");
  folds_cmd->add_option("--graph", graph_path, "Fact file")->required();
  folds_cmd->add_option("--signs-out", out_path, "Sign fold map TSV")->required();
  folds_cmd->add_option("--instances-out", instance_out, "Instance fold map TSV")->required();
  common(folds_cmd, false);

  // train-embeddings
  TrainConfig tcfg;
  std::string scorer = "transe";
  auto* emb_cmd = app.add_subcommand("train-embeddings", "Train TransE or DistMult node embeddings");
  emb_cmd->add_option("--graph", graph_path, "Fact file")->required();
  emb_cmd->add_option("--out", out_path, "Embedding file")->required();
  emb_cmd->add_option("--scorer", scorer, "Scoring function")->check(CLI::IsMember({"transe", "distmult"}));
  emb_cmd->add_option("--dim", tcfg.dim, "Dimension")->check(CLI::PositiveNumber);
  emb_cmd->add_option("--epochs", tcfg.epochs, "Epochs")->check(CLI::PositiveNumber);
  emb_cmd->add_option("--margin", tcfg.margin, "Ranking margin");
  emb_cmd->add_option("--learning-rate", tcfg.learning_rate, "SGD step size");
  emb_cmd->add_option("--negatives", tcfg.negatives_per_positive, "Negatives per positive")->check(CLI::PositiveNumber);
  common(emb_cmd, true);

  // verify
  std::string facts_path, emb_path;
  auto* verify_cmd = app.add_subcommand("verify", "Score candidate facts with a trained embedding");
  verify_cmd->add_option("--embeddings", emb_path, "Embedding file")->required();
  verify_cmd->add_option("--facts", facts_path, "Fact file of candidates")->required();
  verify_cmd->add_option("--out", out_path, "Output TSV (stdout if absent)");
  common(verify_cmd, false);

  // isr
  IsrOptions isr_opts;
  std::string obs_path, model_out;
  bool gold = false;
  auto* isr_cmd = app.add_subcommand("isr", "Isolated sign recognition experiment");
  isr_cmd->add_option("--graph", graph_path, "Fact file")->required();
  add_isr_options(isr_cmd, isr_opts, "--engine");
  auto* obs_opt = isr_cmd->add_option("--observations", obs_path, "Observation file; window ids name videos or signs");
  isr_cmd->add_flag("--gold", gold, "Use one-hot gold observations of every sign")->excludes(obs_opt);
  isr_cmd->add_option("--model-out", model_out, "Save the model trained on all data");
  common(isr_cmd, true);

  // sfr
  std::string direction = "phi_to_sigma", sfr_kind = "mlp";
  int sfr_fold = -1;
  auto* sfr_cmd = app.add_subcommand("sfr", "Semantic feature recognition over held-out sign folds");
  sfr_cmd->add_option("--graph", graph_path, "Fact file")->required();
  sfr_cmd->add_option("--direction", direction, "Task direction")->check(CLI::IsMember({"phi_to_sigma", "sigma_to_phi"}));
  sfr_cmd->add_option("--kind", sfr_kind, "Model kind")->check(CLI::IsMember({"mlp", "linear"}));
  sfr_cmd->add_option("--init", isr_opts.init, "Input embedding init")
      ->check(CLI::IsMember({"random", "transe_nodes", "distmult_nodes"}));
  sfr_cmd->add_option("--embeddings", isr_opts.embeddings, "Embedding file for KG init");
  sfr_cmd->add_option("--epochs", isr_opts.epochs, "Training epochs")->check(CLI::PositiveNumber);
  sfr_cmd->add_option("--fold", sfr_fold, "Evaluate one sign fold only (all 10 by default)")->check(CLI::Range(0, 9));
  common(sfr_cmd, true);

  // topic
  std::string captions_path, vectors_path, classifier = "mlp_t";
  std::size_t n_topics = 10, topic_k = 5;
  int lda_sweeps = 500;
  std::vector<int> widths{60, 30, 15}, steps{15, 30};
  bool lemmatize_captions = false;
  auto* topic_cmd = app.add_subcommand("topic", "Topic classification over a window-size grid");
  topic_cmd->add_option("--graph", graph_path, "Fact file")->required();
  topic_cmd->add_option("--captions", captions_path, "Caption file")->required();
  topic_cmd->add_option("--observations", obs_path, "Segment observations (<video>@<start>-<end>)")->required();
  topic_cmd->add_option("--word-vectors", vectors_path, "Word-vector file")->required();
  add_isr_options(topic_cmd, isr_opts, "--isr-engine");
  topic_cmd->add_option("--classifier", classifier, "Topic classifier")->check(CLI::IsMember({"mlp_t", "knn_t"}));
  topic_cmd->add_option("--topic-k", topic_k, "knn_t neighbours")->check(CLI::PositiveNumber);
  topic_cmd->add_option("--topics", n_topics, "LDA topic count")->check(CLI::PositiveNumber);
  topic_cmd->add_option("--sweeps", lda_sweeps, "Gibbs sweeps")->check(CLI::PositiveNumber);
  topic_cmd->add_option("--widths", widths, "Window widths")->check(CLI::PositiveNumber);
  topic_cmd->add_option("--steps", steps, "Window steps")->check(CLI::PositiveNumber);
  topic_cmd->add_flag("--lemmatize", lemmatize_captions, "Lemmatize caption tokens");
  common(topic_cmd, true);

  // pipeline
  std::string trace_path;
  std::vector<std::string> videos;
  WindowSpec wspec;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run windows -> gloss -> embed -> classify on videos");
  pipe_cmd->add_option("--graph", graph_path, "Fact file")->required();
  pipe_cmd->add_option("--observations", obs_path, "Segment observations (<video>@<start>-<end>)")->required();
  pipe_cmd->add_option("--word-vectors", vectors_path, "Word-vector file")->required();
  pipe_cmd->add_option("--captions", captions_path, "Caption file; trains a topic classifier on the other videos");
  pipe_cmd->add_option("--video", videos, "Videos to run (all if absent)");
  pipe_cmd->add_option("--width", wspec.width, "Window width")->check(CLI::PositiveNumber);
  pipe_cmd->add_option("--step", wspec.step, "Window step")->check(CLI::PositiveNumber);
  add_isr_options(pipe_cmd, isr_opts, "--isr-engine");
  pipe_cmd->add_option("--classifier", classifier, "Topic classifier")->check(CLI::IsMember({"mlp_t", "knn_t"}));
  pipe_cmd->add_option("--topics", n_topics, "LDA topic count")->check(CLI::PositiveNumber);
  pipe_cmd->add_option("--trace", trace_path, "Trace TSV (stdout if absent)");
  common(pipe_cmd, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (ingest_cmd->parsed()) {
      Report rep(ingest_cmd);
      require(manifest_path.empty() != graph_path.empty(), "give exactly one of --manifest or --graph");
      IngestOutcome res;
      if (!manifest_path.empty()) {
        auto m = read_manifest(manifest_path);
        res = ingest(m);
        for (auto& [table, n] : res.facts_per_table) rep.kv("table_facts", table, "\t", n);
      } else {
        res.graph = refine(read_fact_file(graph_path), RefinementConfig{}, res.report);
      }
      write_fact_file(out_path, res.graph);
      for (auto& l : res.report.lines()) rep.line(l);
      for (auto& d : res.diagnostics) rep.kv("diagnostic", d);
      rep.save(report_path);
      std::cout << res.graph.size() << " facts written to " << out_path << '\n';
    } else if (stats_cmd->parsed()) {
      auto g = read_fact_file(graph_path);
      with_output(out_path, [&](std::ostream& out) {
        out << "key\tvalue\n";
        out << "facts\t" << g.size() << "\nentities\t" << g.entities().size() << "\nrelations\t" << g.relations().size()
            << '\n';
        for (auto t : kAllRelTypes) out << "facts." << rel_type_name(t) << '\t' << facts_of_type(g, t).size() << '\n';
        for (auto ns : kAllNamespaces)
          out << "entities." << namespace_prefix(ns) << '\t' << g.entities_in(ns).size() << '\n';
        for (auto ns : {Namespace::asl, Namespace::en}) {
          if (g.entities_in(ns).empty()) continue;
          auto d = degree_stats(g, ns);
          auto p = std::string(namespace_prefix(ns));
          out << p << ".avg_in\t" << format_real(d.avg_in) << '\n' << p << ".sd_in\t" << format_real(d.sd_in) << '\n'
              << p << ".avg_out\t" << format_real(d.avg_out) << '\n' << p << ".sd_out\t" << format_real(d.sd_out) << '\n';
        }
      });
      Report(stats_cmd).save(report_path);
    } else if (folds_cmd->parsed()) {
      auto g = read_fact_file(graph_path);
      auto folds = assign_folds(g, seed);
      with_output(out_path, [&](std::ostream& out) { write_fold_map(out, folds.sign_folds); });
      with_output(instance_out, [&](std::ostream& out) { write_fold_map(out, folds.instance_folds); });
      Report rep(folds_cmd);
      rep.kv("signs", folds.sign_folds.size());
      rep.kv("instances", folds.instance_folds.size());
      rep.save(report_path);
    } else if (emb_cmd->parsed()) {
      auto g = read_fact_file(graph_path);
      tcfg.scorer = parse_scorer(scorer);
      tcfg.seed = seed;
      std::vector<double> losses;
      auto space = train(g, tcfg, &losses);
      save_embedding_file(out_path, space);
      // Training-set ranking AUC against one corrupted negative per fact.
      NegativeSampler sampler(g);
      auto rng = make_rng(seed + 1);
      std::vector<double> pos, neg;
      for (auto& f : subgraph_for_embedding(g)) {
        pos.push_back(space.score(f));
        neg.push_back(space.score(sampler.sample(f, rng)));
      }
      Metrics m;
      m.add("embeddings", scorer, "-", "all", "final_loss", losses.back());
      m.add("embeddings", scorer, "-", "all", "train_auc", ranking_auc(pos, neg));
      m.save(metrics_path);
      Report rep(emb_cmd);
      for (std::size_t e = 0; e < losses.size(); ++e) rep.kv("epoch_loss", e, "\t", format_real(losses[e]));
      rep.save(report_path);
    } else if (verify_cmd->parsed()) {
      auto space = load_embedding_file(emb_path);
      auto facts = read_fact_file(facts_path);
      std::size_t unscorable = 0;
      with_output(out_path, [&](std::ostream& out) {
        out << "head\trelation\ttail\tprobability\n";
        for (auto& f : facts.facts()) {
          if (!space.has_entity(f.head) || !space.has_entity(f.tail) || !space.relation_slot(f.relation.name)) {
            ++unscorable;
            continue;
          }
          out << f.head.str() << '\t' << f.relation.name << '\t' << f.tail.str() << '\t' << format_real(verify(space, f))
              << '\n';
        }
      });
      Report rep(verify_cmd);
      rep.kv("unscorable", unscorable);
      rep.save(report_path);
      if (unscorable) std::cerr << unscorable << " facts skipped: element without an embedding\n";
    } else if (isr_cmd->parsed()) {
      Report rep(isr_cmd);
      auto g = read_fact_file(graph_path);
      auto signs = phonology_signs(g);
      require(!signs.empty(), "graph has no sign with phonological facts");
      auto space = load_space(isr_opts.embeddings);
      Metrics m;
      if (gold || obs_path.empty()) {
        auto schema = PhonologySchema::from_graph(g);
        std::vector<PhonemeObservation> obs;
        for (auto& s : signs) obs.push_back(one_hot_from_gold(g, schema, s));
        auto r = make_recognizer(isr_opts, g, signs, obs, signs, space ? &*space : nullptr, seed);
        double acc = isr_evaluate(*r, obs, signs);
        m.add("isr", isr_opts.engine, isr_opts.init, "gold", "accuracy", acc);
        rep.kv("observations", obs.size());
        save_recognizer(model_out, *r);
      } else {
        auto set = load_observations(obs_path, g);
        auto folds = assign_folds(g, seed);
        std::vector<EntityId> labels;
        std::vector<int> fold_of;
        for (auto& o : set.observations) {
          labels.push_back(label_of(g, o.window_id));
          auto it = folds.instance_folds.find(EntityId(Namespace::video, o.window_id));
          fold_of.push_back(it == folds.instance_folds.end() ? -1 : it->second);
        }
        double sum = 0;
        int counted = 0;
        for (int f = 0; f < kInstanceFolds; ++f) {
          std::vector<PhonemeObservation> tr, te;
          std::vector<EntityId> trl, tel;
          for (std::size_t i = 0; i < set.observations.size(); ++i) {
            (fold_of[i] == f ? te : tr).push_back(set.observations[i]);
            (fold_of[i] == f ? tel : trl).push_back(labels[i]);
          }
          if (te.empty()) {
            rep.kv("skipped_fold", f, "\tno test observations");
            continue;
          }
          auto r = make_recognizer(isr_opts, g, signs, tr, trl, space ? &*space : nullptr, seed);
          double acc = isr_evaluate(*r, te, tel);
          m.add("isr", isr_opts.engine, isr_opts.init, std::to_string(f), "accuracy", acc);
          sum += acc;
          ++counted;
        }
        require(counted > 0, "no observation belongs to an instance fold");
        m.add("isr", isr_opts.engine, isr_opts.init, "mean", "accuracy", sum / counted);
        if (!model_out.empty())
          save_recognizer(model_out, *make_recognizer(isr_opts, g, signs, set.observations, labels,
                                                      space ? &*space : nullptr, seed));
        rep.kv("observations", set.size());
      }
      m.save(metrics_path);
      rep.save(report_path);
    } else if (sfr_cmd->parsed()) {
      Report rep(sfr_cmd);
      auto g = read_fact_file(graph_path);
      auto space = load_space(isr_opts.embeddings);
      SfrConfig cfg;
      cfg.direction = parse_direction(direction);
      cfg.kind = parse_sfr_kind(sfr_kind);
      cfg.init = parse_init(isr_opts.init);
      cfg.epochs = isr_opts.epochs;
      cfg.seed = seed;
      auto folds = assign_folds(g, seed);
      Metrics m;
      double f1_sum = 0, acc_sum = 0;
      int counted = 0;
      for (int f = 0; f < kSignFolds; ++f) {
        if (sfr_fold >= 0 && f != sfr_fold) continue;
        auto held = folds.signs_in(f);
        auto model = sfr_train(g, folds, f, cfg, space ? &*space : nullptr);
        auto test = make_sfr_examples(g, model.schema(), {held.begin(), held.end()}, model.extraction());
        if (test.empty()) {
          rep.kv("skipped_fold", f, "\tno annotated test signs");
          continue;
        }
        auto s = sfr_evaluate(model, test);
        auto fold = std::to_string(f);
        m.add("sfr", direction + "/" + sfr_kind, isr_opts.init, fold, "micro_f1", s.micro_f1);
        m.add("sfr", direction + "/" + sfr_kind, isr_opts.init, fold, "accuracy", s.accuracy);
        f1_sum += s.micro_f1;
        acc_sum += s.accuracy;
        ++counted;
      }
      require(counted > 0, "no fold had annotated test signs");
      m.add("sfr", direction + "/" + sfr_kind, isr_opts.init, "mean", "micro_f1", f1_sum / counted);
      m.add("sfr", direction + "/" + sfr_kind, isr_opts.init, "mean", "accuracy", acc_sum / counted);
      m.save(metrics_path);
      rep.save(report_path);
    } else if (topic_cmd->parsed() || pipe_cmd->parsed()) {
      const bool experiment = topic_cmd->parsed();
      Report rep(experiment ? topic_cmd : pipe_cmd);
      auto g = read_fact_file(graph_path);
      auto signs = phonology_signs(g);
      require(!signs.empty(), "graph has no sign with phonological facts");
      auto schema = PhonologySchema::from_graph(g);
      std::vector<PhonemeObservation> gold_obs;
      for (auto& s : signs) gold_obs.push_back(one_hot_from_gold(g, schema, s));
      auto space = load_space(isr_opts.embeddings);
      auto recognizer = make_recognizer(isr_opts, g, signs, gold_obs, signs, space ? &*space : nullptr, seed);
      auto wv = read_word_vector_file(vectors_path);
      auto tracks = tracks_from(load_observations(obs_path, g));
      PipelineModels models{&g, recognizer.get(), &wv, nullptr, nullptr};
      TopicConfig tc;
      tc.kind = parse_topic_kind(classifier);
      tc.k = topic_k;
      tc.seed = seed;
      LdaConfig lda;
      lda.n_topics = n_topics;
      lda.sweeps = lda_sweeps;
      lda.seed = seed;

      if (experiment) {
        TopicExperimentConfig cfg;
        cfg.grid.clear();
        for (int w : widths)
          for (int s : steps) cfg.grid.push_back({w, s});
        cfg.lda = lda;
        cfg.classifier = tc;
        cfg.split_seed = seed;
        auto res = run_topic_experiment(read_caption_file(captions_path, lemmatize_captions), tracks, models, cfg);
        Metrics m;
        for (auto& c : res.cells) {
          auto cell = "W" + std::to_string(c.spec.width) + "_S" + std::to_string(c.spec.step);
          m.add("topic", classifier, isr_opts.engine, cell, "accuracy", c.accuracy);
          rep.kv("cell", cell, "\ttrain=", c.train_videos, "\ttest=", c.test_videos, "\tskipped=", c.skipped_videos);
        }
        rep.kv("baseline_random", format_real(res.baselines.random));
        rep.kv("baseline_majority", format_real(res.baselines.majority));
        for (auto& t : res.trace) rep.kv("skipped", t.video, "\t", t.key, "\t", t.value);
        m.save(metrics_path);
      } else {
        std::vector<std::string> run = videos;
        if (run.empty())
          for (auto& [v, _] : tracks) run.push_back(v);
        std::unique_ptr<TopicClassifier> clf;
        if (!captions_path.empty()) {
          auto caps = read_caption_file(captions_path);
          std::set<std::string> targets(run.begin(), run.end());
          std::vector<Caption> usable;
          for (auto& c : caps)
            if (tracks.count(c.video)) usable.push_back(c);
          auto tm = generate_topics(usable, lda);
          std::vector<std::vector<double>> x;
          std::vector<int> y;
          for (std::size_t i = 0; i < usable.size(); ++i) {
            if (targets.count(usable[i].video)) continue;
            try {
              x.push_back(run_pipeline(tracks.at(usable[i].video), wspec, models).embedding);
              y.push_back(tm.labels[i]);
            } catch (const PipelineError& e) {
              rep.kv("training_skip", usable[i].video, "\t", e.what());
            }
          }
          clf = topic_train(x, y, tc);
          models.classifier = clf.get();
        }
        std::vector<TraceRow> trace;
        int failures = 0;
        for (auto& v : run) {
          auto it = tracks.find(v);
          if (it == tracks.end()) throw PreconditionError("no observations for video '" + v + "'");
          try {
            auto r = run_pipeline(it->second, wspec, models);
            trace.insert(trace.end(), r.trace.begin(), r.trace.end());
            rep.kv("video", v, "\t", r.topic ? "topic=" + std::to_string(*r.topic) : "embedded");
          } catch (const PipelineError& e) {
            ++failures;
            trace.push_back({v, e.stage(), "error", e.what()});
            std::cerr << "error: " << v << ": " << e.what() << '\n';
          }
        }
        with_output(trace_path, [&](std::ostream& out) { write_trace_tsv(out, trace); });
        rep.save(report_path);
        return failures ? 1 : 0;
      }
      rep.save(report_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
