// Writes a small synthetic dataset: source tables + manifest, a fact file, observation
// files, captions and word vectors.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "kgns/kgns.hpp"
#include "kgns/synthetic.hpp"

namespace fs = std::filesystem;
using namespace kgns;

namespace {

std::ofstream open(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

// Phonology and meaning tables as CSV, in the layout the manifest describes.
void write_tables(const fs::path& dir, const synthetic::Lexicon& lex, const synthetic::LexiconConfig& cfg) {
  auto phon = open(dir / "phonology.csv");
  phon << "gloss";
  for (auto& ft : cfg.feature_types) phon << ',' << ft.name;
  phon << '\n';
  for (auto& s : lex.signs) {
    phon << s.label();
    for (std::size_t t = 0; t < cfg.feature_types.size(); ++t)
      phon << ',' << synthetic::phoneme_label(cfg.feature_types[t].name, lex.phonology.at(s)[t]);
    phon << '\n';
  }
  auto lexical = open(dir / "lexical.csv");
  lexical << "gloss,meaning,translation,frequency\n";
  for (auto& s : lex.signs) {
    auto meanings = lex.graph.objects(s, "has_meaning");
    auto words = lex.graph.objects(s, "has_translation");
    lexical << s.label() << ',' << (meanings.empty() ? "" : meanings.front().label()) << ','
            << (words.empty() ? "" : words.front().label()) << ",3.5\n";
  }
  nlohmann::json m;
  nlohmann::json phon_cols = nlohmann::json::array();
  for (auto& ft : cfg.feature_types)
    phon_cols.push_back({{"name", ft.name}, {"rel_type", "phonological"}, {"tail", "phoneme"}});
  m["tables"] = nlohmann::json::array(
      {{{"name", "phonology"}, {"path", "phonology.csv"}, {"subject_column", "gloss"}, {"columns", phon_cols}},
       {{"name", "lexical"},
        {"path", "lexical.csv"},
        {"subject_column", "gloss"},
        {"columns",
         {{{"name", "meaning"}, {"rel_type", "semantic"}, {"tail", "semfeat"}},
          {{"name", "translation"}, {"rel_type", "translation"}, {"tail", "en"}},
          {{"name", "frequency"}, {"rel_type", "statistical"}, {"numeric", true}}}}}});
  m["relation_renames"] = {{"meaning", "has_meaning"}};
  open(dir / "manifest.json") << m.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic kgns dataset"};
  std::string out_dir;
  std::size_t signs = 30, videos_per_sign = 5, topics = 3, corpus_videos = 40;
  std::uint64_t seed = 0;
  app.add_option("--out-dir", out_dir, "Output directory")->required();
  app.add_option("--signs", signs, "Number of signs")->check(CLI::PositiveNumber);
  app.add_option("--videos-per-sign", videos_per_sign, "Video examples per sign");
  app.add_option("--topics", topics, "Topics in the caption corpus")->check(CLI::PositiveNumber);
  app.add_option("--corpus-videos", corpus_videos, "Continuous videos in the caption corpus");
  app.add_option("--seed", seed, "Random seed")->envname("KGNS_SEED");
  CLI11_PARSE(app, argc, argv);

  try {
    fs::path dir(out_dir);
    fs::create_directories(dir);
    synthetic::LexiconConfig cfg;
    cfg.n_signs = signs;
    cfg.videos_per_sign = videos_per_sign;
    cfg.topics = topics;
    cfg.seed = seed;
    auto lex = synthetic::make_lexicon(cfg);
    {
      auto out = open(dir / "graph.tsv");
      write_facts(out, lex.graph);
    }
    write_tables(dir, lex, cfg);
    {
      auto out = open(dir / "gold.obs");
      write_observations(out, synthetic::gold_observations(lex));
    }
    {
      // One noisy observation per video example, window id = video label.
      auto rng = make_rng(seed + 1);
      ObservationSet set;
      for (auto& v : lex.graph.entities_in(Namespace::video)) {
        auto sign = sign_of_video(lex.graph, v);
        set.observations.push_back(synthetic::noisy_observation(lex, cfg, sign, v.label(), 0.1, 0.8, rng));
      }
      auto out = open(dir / "videos.obs");
      write_observations(out, set);
    }
    synthetic::CorpusConfig ccfg;
    ccfg.videos = corpus_videos;
    ccfg.seed = seed + 2;
    auto corpus = synthetic::make_corpus(lex, cfg, ccfg);
    {
      auto out = open(dir / "segments.obs");
      write_observations(out, corpus.observations);
    }
    {
      auto out = open(dir / "captions.tsv");
      for (auto& c : corpus.captions) out << c.video << '\t' << join(c.lemmas, " ") << '\n';
    }
    {
      auto wv = synthetic::make_word_vectors(lex, 16, 3.0, 0.3, seed + 3, ccfg.filler);
      auto out = open(dir / "words.vec");
      for (auto& [w, v] : wv.all()) {
        out << w << '\t';
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_real(v[i]);
        out << '\n';
      }
    }
    std::cout << "wrote fixture to " << dir.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
