#pragma once

// Sentence-level topic classification: caption topics by TF-IDF weighted LDA, sliding
// windows over a video's phoneme observations, gloss sequencing, translation-weighted
// sign embeddings and topic classifiers.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "kgns/common.hpp"
#include "kgns/grounding.hpp"
#include "kgns/isr.hpp"
#include "kgns/kg_store.hpp"
#include "kgns/nn.hpp"

namespace kgns {

/// Error raised inside a pipeline stage; what() reads "stage <name>: <message>".
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& msg)
      : Error("stage " + stage + ": " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// ---------------------------------------------------------------------------
// Captions and topics

/// Fallback lemmatizer: lowercase, then strip -ing, -ed and plural -s.
inline std::string lemmatize(std::string_view token) {
  auto w = to_lower(token);
  auto strip = [&](std::string_view suffix, std::size_t min_stem) {
    if (w.size() >= suffix.size() + min_stem && w.ends_with(suffix)) {
      w.resize(w.size() - suffix.size());
      return true;
    }
    return false;
  };
  if (strip("ing", 3) || strip("ed", 3)) return w;
  if (w.ends_with("ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (!w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is")) strip("s", 3);
  return w;
}

struct Caption {
  std::string video;
  std::vector<std::string> lemmas;
};

/// `video_id<TAB>lemma lemma ...` per line. With `lemmatize_tokens`, tokens pass through lemmatize().
inline std::vector<Caption> read_captions(std::istream& in, bool lemmatize_tokens = false) {
  std::vector<Caption> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected 'video_id<TAB>lemmas'", n);
    Caption c{std::string(trim(line.substr(0, tab))), tokenize(line.substr(tab + 1))};
    if (c.video.empty()) throw ParseError("empty video id", n);
    if (!seen.insert(c.video).second) throw ParseError("duplicate video id '" + c.video + "'", n);
    if (lemmatize_tokens)
      for (auto& t : c.lemmas) t = lemmatize(t);
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<Caption> read_caption_file(const std::string& path, bool lemmatize_tokens = false) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open caption file '" + path + "'");
  return read_captions(in, lemmatize_tokens);
}

struct LdaConfig {
  std::size_t n_topics = 10;
  double alpha = 0.1;
  double beta = 0.01;
  int sweeps = 500;
  std::uint64_t seed = 0;
};

struct TopicModel {
  std::vector<std::string> vocabulary;              // sorted lemmas
  std::vector<double> idf;                          // per lemma
  std::vector<std::vector<double>> topic_word;      // n_topics x |vocabulary|
  std::vector<std::vector<double>> document_topic;  // documents x n_topics
  std::vector<int> labels;                          // argmax topic per document

  std::size_t n_topics() const noexcept { return topic_word.size(); }
};

/// Smoothed inverse document frequency ln((1 + N) / (1 + df)) + 1.
inline std::vector<double> inverse_document_frequency(const std::vector<std::vector<std::size_t>>& docs,
                                                      std::size_t vocab_size) {
  std::vector<double> df(vocab_size, 0.0);
  for (auto& d : docs) {
    std::set<std::size_t> uniq(d.begin(), d.end());
    for (auto w : uniq) df[w] += 1;
  }
  std::vector<double> idf(vocab_size);
  const double N = static_cast<double>(docs.size());
  for (std::size_t w = 0; w < vocab_size; ++w) idf[w] = std::log((1 + N) / (1 + df[w])) + 1;
  return idf;
}

/// Collapsed Gibbs sampling where each token counts with its lemma's IDF, so the counts
/// are TF-IDF mass. `on_sweep` sees the model's current distributions after every sweep.
/// Documents with identical lemma multisets share one label (the argmax of their mean
/// document-topic distribution).
inline TopicModel generate_topics(const std::vector<Caption>& captions, const LdaConfig& cfg = {},
                                  const std::function<void(int, const TopicModel&)>& on_sweep = {}) {
  require(cfg.n_topics >= 1, "n_topics must be >= 1");
  require(captions.size() >= cfg.n_topics, "need at least ", cfg.n_topics, " documents, got ", captions.size());
  require(cfg.alpha > 0 && cfg.beta > 0, "LDA priors must be positive");
  const std::size_t K = cfg.n_topics;

  TopicModel m;
  {
    std::set<std::string> v;
    for (auto& c : captions) v.insert(c.lemmas.begin(), c.lemmas.end());
    m.vocabulary.assign(v.begin(), v.end());
  }
  const std::size_t V = m.vocabulary.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < V; ++i) index[m.vocabulary[i]] = i;
  std::vector<std::vector<std::size_t>> docs;
  for (auto& c : captions) {
    auto& d = docs.emplace_back();
    for (auto& t : c.lemmas) d.push_back(index[t]);
  }
  m.idf = inverse_document_frequency(docs, V);
  const std::size_t D = docs.size();

  auto rng = make_rng(cfg.seed);
  std::vector<std::vector<std::size_t>> z(D);
  std::vector<std::vector<double>> n_dk(D, std::vector<double>(K, 0.0)), n_kw(K, std::vector<double>(V, 0.0));
  std::vector<double> n_k(K, 0.0), doc_mass(D, 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    for (auto w : docs[d]) {
      auto k = uniform_index(rng, K);
      z[d].push_back(k);
      n_dk[d][k] += m.idf[w];
      n_kw[k][w] += m.idf[w];
      n_k[k] += m.idf[w];
      doc_mass[d] += m.idf[w];
    }
  }

  auto refresh = [&] {
    const double vb = static_cast<double>(V) * cfg.beta;
    m.topic_word.assign(K, std::vector<double>(V));
    for (std::size_t k = 0; k < K; ++k) {
      double denom = n_k[k] + vb;
      for (std::size_t w = 0; w < V; ++w) m.topic_word[k][w] = (n_kw[k][w] + cfg.beta) / denom;
    }
    const double ka = static_cast<double>(K) * cfg.alpha;
    m.document_topic.assign(D, std::vector<double>(K));
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t k = 0; k < K; ++k) m.document_topic[d][k] = (n_dk[d][k] + cfg.alpha) / (doc_mass[d] + ka);
  };

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> p(K);
  const double vb = static_cast<double>(V) * cfg.beta;
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const auto w = docs[d][i];
        const double wt = m.idf[w];
        auto k = z[d][i];
        n_dk[d][k] = std::max(0.0, n_dk[d][k] - wt);
        n_kw[k][w] = std::max(0.0, n_kw[k][w] - wt);
        n_k[k] = std::max(0.0, n_k[k] - wt);
        double total = 0;
        for (std::size_t t = 0; t < K; ++t) {
          p[t] = (n_dk[d][t] + cfg.alpha) * (n_kw[t][w] + cfg.beta) / (n_k[t] + vb);
          total += p[t];
        }
        double u = unit(rng) * total;
        std::size_t pick = K - 1;
        for (std::size_t t = 0; t < K; ++t) {
          if (u < p[t]) {
            pick = t;
            break;
          }
          u -= p[t];
        }
        z[d][i] = pick;
        n_dk[d][pick] += wt;
        n_kw[pick][w] += wt;
        n_k[pick] += wt;
      }
    }
    if (on_sweep) {
      refresh();
      on_sweep(sweep, m);
    }
  }
  refresh();

  std::map<std::vector<std::string>, std::vector<std::size_t>> identical;
  for (std::size_t d = 0; d < D; ++d) {
    auto key = captions[d].lemmas;
    std::sort(key.begin(), key.end());
    identical[key].push_back(d);
  }
  m.labels.assign(D, 0);
  for (auto& [_, members] : identical) {
    std::vector<double> mean(K, 0.0);
    for (auto d : members)
      for (std::size_t k = 0; k < K; ++k) mean[k] += m.document_topic[d][k];
    int label = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
    for (auto d : members) m.labels[d] = label;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Windows and per-window observations

struct WindowSpec {
  int width = 60;
  int step = 30;
};

struct Window {
  int start = 0, end = 0;  // [start, end)
  friend bool operator==(const Window&, const Window&) = default;
};

/// Windows of `spec.width` frames starting at 0 and advancing by `spec.step` while they fit;
/// a single truncated window [0, length) when none fits.
inline std::vector<Window> windows(int length, const WindowSpec& spec) {
  require(length >= 1, "video length must be >= 1 frame");
  require(spec.width > 0 && spec.step > 0, "window width and step must be positive");
  std::vector<Window> out;
  for (int s = 0; s + spec.width <= length; s += spec.step) out.push_back({s, s + spec.width});
  if (out.empty()) out.push_back({0, length});
  return out;
}

/// Phoneme observations over frame segments of one video.
struct VideoTrack {
  std::string video;
  int length = 0;
  struct Segment {
    Window span;
    PhonemeObservation observation;
  };
  std::vector<Segment> segments;
};

/// Splits a window id `<video>@<start>-<end>`.
inline std::pair<std::string, Window> parse_segment_id(const std::string& id) {
  auto at = id.rfind('@');
  auto dash = id.rfind('-');
  if (at == std::string::npos || at == 0 || dash == std::string::npos || dash < at)
    throw PreconditionError("segment id '" + id + "' is not '<video>@<start>-<end>'");
  Window w;
  try {
    w.start = std::stoi(id.substr(at + 1, dash - at - 1));
    w.end = std::stoi(id.substr(dash + 1));
  } catch (const std::exception&) {
    throw PreconditionError("segment id '" + id + "' has non-integer frame bounds");
  }
  if (w.start < 0 || w.end <= w.start) throw PreconditionError("segment id '" + id + "' has an empty frame range");
  return {id.substr(0, at), w};
}

inline std::string segment_id(const std::string& video, const Window& w) {
  return video + "@" + std::to_string(w.start) + "-" + std::to_string(w.end);
}

/// Groups an observation set's segments by video; a video's length is its last segment end.
inline std::map<std::string, VideoTrack> tracks_from(const ObservationSet& set) {
  std::map<std::string, VideoTrack> out;
  for (auto& obs : set.observations) {
    auto [video, w] = parse_segment_id(obs.window_id);
    auto& t = out[video];
    t.video = video;
    t.length = std::max(t.length, w.end);
    t.segments.push_back({w, obs});
  }
  for (auto& [_, t] : out)
    std::sort(t.segments.begin(), t.segments.end(),
              [](auto& a, auto& b) { return std::pair(a.span.start, a.span.end) < std::pair(b.span.start, b.span.end); });
  return out;
}

/// Overlap-weighted mean of the segment distributions covering `w`.
inline PhonemeObservation window_observation(const VideoTrack& track, const Window& w) {
  std::map<std::string, std::map<std::string, double>> acc;
  std::map<std::string, double> mass;
  for (auto& seg : track.segments) {
    int overlap = std::min(w.end, seg.span.end) - std::max(w.start, seg.span.start);
    if (overlap <= 0) continue;
    for (auto& d : seg.observation.distributions) {
      mass[d.feature_type] += overlap;
      for (auto& [v, p] : d.probs) acc[d.feature_type][v] += overlap * p;
    }
  }
  PhonemeObservation out{segment_id(track.video, w), {}};
  if (acc.empty())
    throw PreconditionError("no observation overlaps window " + out.window_id);
  for (auto& [type, probs] : acc) {
    FeatureDistribution d{type, {}};
    for (auto& [v, p] : probs) d.probs[v] = p / mass[type];
    out.distributions.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gloss sequences

inline constexpr double kGlossThreshold = 0.1;

struct GlossEntry {
  EntityId sign;
  double confidence = 0;
  Window window;
};

struct GlossSequence {
  std::string video;
  std::vector<GlossEntry> entries;
};

/// Drops predictions with confidence <= 0.1, then collapses runs of the same sign into
/// the most confident member.
inline GlossSequence gloss(const std::vector<GlossEntry>& predictions, std::string video = {}) {
  GlossSequence out{std::move(video), {}};
  for (auto& p : predictions) {
    if (!(p.confidence > kGlossThreshold)) continue;
    if (!out.entries.empty() && out.entries.back().sign == p.sign) {
      if (p.confidence > out.entries.back().confidence) out.entries.back() = p;
    } else {
      out.entries.push_back(p);
    }
  }
  return out;
}

inline GlossSequence gloss(const VideoTrack& track, const std::vector<Window>& ws, const SignRecognizer& model) {
  std::vector<GlossEntry> preds;
  for (auto& w : ws) {
    auto p = model.predict(window_observation(track, w));
    preds.push_back({p.sign, p.confidence, w});
  }
  return gloss(preds, track.video);
}

// ---------------------------------------------------------------------------
// Sign and sequence embeddings

class WordVectors {
 public:
  WordVectors() = default;
  explicit WordVectors(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  void add(const std::string& word, std::vector<double> v) {
    if (dim_ == 0) dim_ = v.size();
    require(v.size() == dim_, "word vector for '", word, "' has dimension ", v.size(), ", expected ", dim_);
    require(dim_ > 0, "word vectors must have positive dimension");
    vectors_[word] = std::move(v);
  }

  const std::vector<double>* find(const std::string& word) const {
    auto it = vectors_.find(word);
    return it == vectors_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, std::vector<double>>& all() const noexcept { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> vectors_;
};

/// `word<TAB>v1 v2 ... vd` per line.
inline WordVectors read_word_vectors(std::istream& in) {
  WordVectors wv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected 'word<TAB>values'", n);
    std::vector<double> v;
    for (auto& t : tokenize(line.substr(tab + 1))) v.push_back(parse_real(t, n));
    try {
      wv.add(line.substr(0, tab), std::move(v));
    } catch (const PreconditionError& e) {
      throw ParseError(e.what(), n);
    }
  }
  return wv;
}

inline WordVectors read_word_vector_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word-vector file '" + path + "'");
  return read_word_vectors(in);
}

/// Statistical relation carrying p(word | sign) for a translation `word`.
inline std::string translation_weight_relation(std::string_view word) {
  return normalize_relation_name("translation_weight." + std::string(word));
}

/// Translations t(s) with p(w|s), renormalized to sum to 1. Words without a stored weight count 1.
inline std::vector<std::pair<std::string, double>> translations(const KnowledgeGraph& g, const EntityId& sign) {
  std::map<std::string, double> stored;
  std::set<std::string> words;
  for (auto fi : g.outgoing(sign)) {
    const auto& f = g.facts()[fi];
    if (f.type() == RelType::translation && f.tail.ns() == Namespace::en) words.insert(f.tail.label());
    if (f.type() == RelType::statistical && f.tail.is_literal()) stored[f.relation.name] = *f.tail.value();
  }
  std::vector<std::pair<std::string, double>> out;
  double total = 0;
  for (auto& w : words) {
    auto it = stored.find(translation_weight_relation(w));
    double p = it == stored.end() ? 1.0 : it->second;
    if (p < 0) throw PreconditionError("negative translation weight for '" + w + "' of '" + sign.str() + "'");
    out.emplace_back(w, p);
    total += p;
  }
  if (out.empty()) throw PreconditionError("sign '" + sign.str() + "' has no translation");
  if (!(total > 0)) throw PreconditionError("translation weights of '" + sign.str() + "' sum to zero");
  for (auto& [_, p] : out) p /= total;
  return out;
}

/// E(s) = sum over translations w of E(w) * p(w|s).
inline std::vector<double> embed_sign(const KnowledgeGraph& g, const WordVectors& wv, const EntityId& sign) {
  std::vector<double> out(wv.dim(), 0.0);
  for (auto& [w, p] : translations(g, sign)) {
    const auto* v = wv.find(w);
    if (!v) throw PreconditionError("no word vector for '" + w + "'");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p * (*v)[i];
  }
  return out;
}

/// Maps a sequence of sign vectors (with window confidences) to one vector.
class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;
  virtual std::vector<double> encode(const std::vector<std::vector<double>>& signs,
                                     const std::vector<double>& confidences) const = 0;
};

/// Confidence-weighted mean.
class MeanEncoder : public SequenceEncoder {
 public:
  std::vector<double> encode(const std::vector<std::vector<double>>& signs,
                             const std::vector<double>& confidences) const override {
    std::vector<double> out(signs.front().size(), 0.0);
    double total = 0;
    for (std::size_t i = 0; i < signs.size(); ++i) {
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += confidences[i] * signs[i][j];
      total += confidences[i];
    }
    for (double& x : out) x /= total;
    return out;
  }
};

inline std::vector<double> embed_sequence(const std::vector<std::vector<double>>& signs,
                                          const std::vector<double>& confidences, const SequenceEncoder& encoder) {
  require(!signs.empty(), "empty sign sequence");
  require(signs.size() == confidences.size(), "one confidence per sign required");
  for (auto& s : signs) require(s.size() == signs.front().size(), "sign vectors differ in dimension");
  for (double c : confidences) require(c > 0, "confidences must be positive");
  auto out = encoder.encode(signs, confidences);
  for (double x : out)
    if (!std::isfinite(x)) throw NumericError("non-finite sequence embedding");
  return out;
}

inline std::vector<double> embed_sequence(const std::vector<std::vector<double>>& signs,
                                          const std::vector<double>& confidences) {
  return embed_sequence(signs, confidences, MeanEncoder{});
}

// ---------------------------------------------------------------------------
// Topic classifiers

enum class TopicKind { mlp_t, knn_t };

inline TopicKind parse_topic_kind(std::string_view s) {
  if (s == "mlp_t" || s == "mlp") return TopicKind::mlp_t;
  if (s == "knn_t" || s == "knn") return TopicKind::knn_t;
  throw PreconditionError("unknown topic classifier '" + std::string(s) + "'");
}
inline std::string_view topic_kind_name(TopicKind k) { return k == TopicKind::mlp_t ? "mlp_t" : "knn_t"; }

struct TopicConfig {
  TopicKind kind = TopicKind::mlp_t;
  std::size_t hidden = 100;
  int epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

class TopicClassifier {
 public:
  virtual ~TopicClassifier() = default;
  virtual int predict(const std::vector<double>& x) const = 0;
  const std::vector<int>& classes() const noexcept { return classes_; }

 protected:
  std::vector<int> classes_;
};

class MlpTopicClassifier : public TopicClassifier {
 public:
  MlpTopicClassifier(std::vector<int> classes, nn::Network net) : net_(std::move(net)) { classes_ = std::move(classes); }
  int predict(const std::vector<double>& x) const override {
    auto p = net_.predict(nn::Sample{{}, x}, nn::LossSpec{});
    return classes_[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
  }
  const nn::Network& network() const noexcept { return net_; }

 private:
  nn::Network net_;
};

/// Euclidean k-nearest neighbours; vote ties go to the tied class with the closest member.
class KnnTopicClassifier : public TopicClassifier {
 public:
  KnnTopicClassifier(std::vector<int> classes, std::vector<std::vector<double>> x, std::vector<int> y, std::size_t k)
      : x_(std::move(x)), y_(std::move(y)), k_(k) {
    classes_ = std::move(classes);
  }
  int predict(const std::vector<double>& q) const override {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      require(x_[i].size() == q.size(), "query dimension ", q.size(), " differs from ", x_[i].size());
      double s = 0;
      for (std::size_t j = 0; j < q.size(); ++j) s += (x_[i][j] - q[j]) * (x_[i][j] - q[j]);
      d.emplace_back(std::sqrt(s), i);
    }
    auto k = std::min(k_, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::map<int, std::pair<std::size_t, std::size_t>> votes;  // class -> (count, rank of closest)
    for (std::size_t r = 0; r < k; ++r) {
      auto [it, fresh] = votes.try_emplace(y_[d[r].second], 0, r);
      ++it->second.first;
    }
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
      if (it->second.first > best->second.first ||
          (it->second.first == best->second.first && it->second.second < best->second.second))
        best = it;
    return best->first;
  }

 private:
  std::vector<std::vector<double>> x_;
  std::vector<int> y_;
  std::size_t k_;
};

inline std::unique_ptr<TopicClassifier> topic_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                                    const TopicConfig& cfg = {}) {
  require(!x.empty() && x.size() == y.size(), "need equally many embeddings and labels");
  std::set<int> cls(y.begin(), y.end());
  require(cls.size() >= 2, "topic classifier needs at least 2 classes, got ", cls.size());
  std::vector<int> classes(cls.begin(), cls.end());
  if (cfg.kind == TopicKind::knn_t) {
    require(cfg.k >= 1, "k must be >= 1");
    return std::make_unique<KnnTopicClassifier>(classes, x, y, cfg.k);
  }
  nn::Network net(nn::NetworkSpec{0, 0, 0, false, x.front().size(), {cfg.hidden}, classes.size()}, cfg.seed);
  std::vector<nn::Sample> samples;
  std::vector<std::vector<double>> targets;
  for (std::size_t i = 0; i < x.size(); ++i) {
    samples.push_back({{}, x[i]});
    std::vector<double> t(classes.size(), 0.0);
    t[static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), y[i]) - classes.begin())] = 1.0;
    targets.push_back(std::move(t));
  }
  nn::fit(net, samples, targets, nn::LossSpec{}, nn::FitConfig{cfg.epochs, cfg.batch_size, {cfg.learning_rate}, cfg.seed});
  return std::make_unique<MlpTopicClassifier>(classes, std::move(net));
}

inline double topic_accuracy(const TopicClassifier& c, const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  require(!x.empty(), "empty evaluation set: accuracy undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.size(); ++i) hits += c.predict(x[i]) == y[i];
  return static_cast<double>(hits) / static_cast<double>(x.size());
}

struct Baselines {
  double random = 0;
  double majority = 0;
};

inline Baselines baselines(const std::vector<int>& labels) {
  require(!labels.empty(), "baselines need at least one label");
  std::map<int, std::size_t> freq;
  for (int l : labels) ++freq[l];
  std::size_t top = 0;
  for (auto& [_, n] : freq) top = std::max(top, n);
  return {1.0 / static_cast<double>(freq.size()), static_cast<double>(top) / static_cast<double>(labels.size())};
}

struct DataSplit {
  std::vector<std::string> train, validation, test;
};

/// Seeded 80/10/10 split of video ids.
inline DataSplit split_videos(std::vector<std::string> videos, std::uint64_t seed) {
  std::sort(videos.begin(), videos.end());
  auto rng = make_rng(seed);
  std::shuffle(videos.begin(), videos.end(), rng);
  const auto n = videos.size();
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  DataSplit s;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? s.train : i < n_train + n_val ? s.validation : s.test).push_back(videos[i]);
  return s;
}

// ---------------------------------------------------------------------------
// End-to-end run

struct TraceRow {
  std::string video, stage, key, value;
};

struct PipelineModels {
  const KnowledgeGraph* graph = nullptr;
  const SignRecognizer* recognizer = nullptr;
  const WordVectors* word_vectors = nullptr;
  const SequenceEncoder* encoder = nullptr;  // MeanEncoder when null
  const TopicClassifier* classifier = nullptr;
};

struct PipelineResult {
  GlossSequence gloss;
  std::vector<double> embedding;
  std::optional<int> topic;
  std::vector<TraceRow> trace;
};

/// windows -> gloss -> embed -> classify for one video. With no classifier the run stops
/// after the embedding. Stage failures surface as PipelineError.
inline PipelineResult run_pipeline(const VideoTrack& track, const WindowSpec& spec, const PipelineModels& m) {
  require(m.graph && m.recognizer && m.word_vectors, "pipeline needs a graph, a recognizer and word vectors");
  PipelineResult r;
  auto trace = [&](std::string stage, std::string key, std::string value) {
    r.trace.push_back({track.video, std::move(stage), std::move(key), std::move(value)});
  };
  auto stage = [&](const char* name, auto&& body) {
    try {
      body();
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(name, e.what());
    }
  };

  std::vector<Window> ws;
  stage("windows", [&] {
    ws = windows(track.length, spec);
    trace("windows", "count", std::to_string(ws.size()));
  });
  stage("gloss", [&] {
    r.gloss = gloss(track, ws, *m.recognizer);
    trace("gloss", "kept", std::to_string(r.gloss.entries.size()));
    for (auto& e : r.gloss.entries)
      trace("gloss", std::to_string(e.window.start) + "-" + std::to_string(e.window.end),
            e.sign.str() + " " + format_real(e.confidence));
  });
  if (r.gloss.entries.empty()) throw PipelineError("gloss", "empty gloss");
  stage("embed", [&] {
    std::vector<std::vector<double>> vecs;
    std::vector<double> conf;
    for (auto& e : r.gloss.entries) {
      vecs.push_back(embed_sign(*m.graph, *m.word_vectors, e.sign));
      conf.push_back(e.confidence);
    }
    r.embedding = m.encoder ? embed_sequence(vecs, conf, *m.encoder) : embed_sequence(vecs, conf);
    trace("embed", "dim", std::to_string(r.embedding.size()));
  });
  if (m.classifier) {
    stage("classify", [&] {
      r.topic = m.classifier->predict(r.embedding);
      trace("classify", "topic", std::to_string(*r.topic));
    });
  }
  return r;
}

inline void write_trace_tsv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "video\tstage\tkey\tvalue\n";
  for (auto& r : rows) out << r.video << '\t' << r.stage << '\t' << r.key << '\t' << r.value << '\n';
}

// ---------------------------------------------------------------------------
// Topic experiment over a window grid

struct TopicExperimentConfig {
  std::vector<WindowSpec> grid{{60, 15}, {60, 30}, {30, 15}, {30, 30}, {15, 15}, {15, 30}};
  LdaConfig lda;
  TopicConfig classifier;
  std::uint64_t split_seed = 0;
};

struct TopicCellResult {
  WindowSpec spec;
  double accuracy = 0;
  std::size_t train_videos = 0, test_videos = 0, skipped_videos = 0;
};

struct TopicExperimentResult {
  std::map<std::string, int> labels;  // video -> LDA topic
  Baselines baselines;                // over the test split's labels
  std::vector<TopicCellResult> cells;
  std::vector<TraceRow> trace;
};

/// Labels each captioned video by LDA topic, splits 80/10/10, and for every window spec
/// trains a classifier on pipeline embeddings of the training videos and scores it on the
/// test videos. Videos whose pipeline run fails (e.g. empty gloss) are skipped and traced.
inline TopicExperimentResult run_topic_experiment(const std::vector<Caption>& captions,
                                                  const std::map<std::string, VideoTrack>& tracks,
                                                  const PipelineModels& models, const TopicExperimentConfig& cfg) {
  TopicExperimentResult res;
  std::vector<Caption> usable;
  for (auto& c : captions)
    if (tracks.count(c.video)) usable.push_back(c);
  require(!usable.empty(), "no captioned video has observations");
  auto tm = generate_topics(usable, cfg.lda);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    res.labels[usable[i].video] = tm.labels[i];
    ids.push_back(usable[i].video);
  }
  auto split = split_videos(ids, cfg.split_seed);
  require(!split.test.empty(), "too few videos for a test split");
  std::vector<int> test_labels;
  for (auto& v : split.test) test_labels.push_back(res.labels[v]);
  res.baselines = baselines(test_labels);

  for (auto& spec : cfg.grid) {
    TopicCellResult cell{spec, 0, 0, 0, 0};
    auto cell_key = "W=" + std::to_string(spec.width) + ",step=" + std::to_string(spec.step);
    auto embed_all = [&](const std::vector<std::string>& vids, std::vector<std::vector<double>>& x, std::vector<int>& y) {
      PipelineModels m = models;
      m.classifier = nullptr;
      for (auto& v : vids) {
        try {
          x.push_back(run_pipeline(tracks.at(v), spec, m).embedding);
          y.push_back(res.labels[v]);
        } catch (const PipelineError& e) {
          ++cell.skipped_videos;
          res.trace.push_back({v, e.stage(), cell_key, e.what()});
        }
      }
    };
    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    embed_all(split.train, xtr, ytr);
    embed_all(split.test, xte, yte);
    cell.train_videos = xtr.size();
    cell.test_videos = xte.size();
    auto clf = topic_train(xtr, ytr, cfg.classifier);
    // Skipped test videos count as misses.
    std::size_t hits = 0;
    for (std::size_t i = 0; i < xte.size(); ++i) hits += clf->predict(xte[i]) == yte[i];
    cell.accuracy = static_cast<double>(hits) / static_cast<double>(split.test.size());
    res.cells.push_back(cell);
  }
  return res;
}

}  // namespace kgns
