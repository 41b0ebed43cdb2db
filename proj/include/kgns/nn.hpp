#pragma once

// Minimal feed-forward network with an optional embedding-lookup input layer,
// ReLU hidden layers, a linear output layer and Adam. All parameters live in one
// flat vector so the optimizer and gradient checks treat them uniformly.

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kgns/common.hpp"

namespace kgns::nn {

struct NetworkSpec {
  // Embedding input: `slots` lookups into a `vocab` x `embed_dim` table, concatenated,
  // or (bag) the mean of any number of rows.
  std::size_t vocab = 0, embed_dim = 0, slots = 0;
  bool bag = false;
  // Dense input, used when there is no embedding table.
  std::size_t dense_inputs = 0;
  std::vector<std::size_t> hidden;
  std::size_t outputs = 0;

  bool embedded() const { return bag || slots; }
  std::size_t input_width() const { return bag ? embed_dim : slots ? slots * embed_dim : dense_inputs; }
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// One input row: embedding indices (one per slot) or a dense vector.
struct Sample {
  std::vector<std::size_t> indices;
  std::vector<double> dense;
};

enum class LossKind { softmax_ce, sigmoid_bce, grouped_softmax_ce };

struct LossSpec {
  LossKind kind = LossKind::softmax_ce;
  std::vector<std::size_t> group_offsets;  // grouped_softmax_ce: start of each group, plus the end
};

inline void softmax_inplace(std::span<double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  double sum = 0;
  for (double& x : v) sum += (x = std::exp(x - mx));
  for (double& x : v) x /= sum;
}

/// Converts logits to probabilities for the loss's output head.
inline std::vector<double> activate(std::vector<double> logits, const LossSpec& loss) {
  switch (loss.kind) {
    case LossKind::softmax_ce: softmax_inplace(logits); break;
    case LossKind::sigmoid_bce:
      for (double& x : logits) x = logistic(x);
      break;
    case LossKind::grouped_softmax_ce:
      for (std::size_t g = 0; g + 1 < loss.group_offsets.size(); ++g)
        softmax_inplace(std::span(logits).subspan(loss.group_offsets[g], loss.group_offsets[g + 1] - loss.group_offsets[g]));
      break;
  }
  return logits;
}

/// Loss of one sample and d loss / d logits.
inline double loss_and_delta(std::span<const double> logits, std::span<const double> target, const LossSpec& loss,
                             std::vector<double>& delta) {
  delta.assign(logits.size(), 0.0);
  double value = 0;
  auto softmax_block = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> p(logits.begin() + static_cast<std::ptrdiff_t>(lo), logits.begin() + static_cast<std::ptrdiff_t>(hi));
    double mx = *std::max_element(p.begin(), p.end());
    double sum = 0;
    for (double x : p) sum += std::exp(x - mx);
    double lse = mx + std::log(sum);
    for (std::size_t i = lo; i < hi; ++i) {
      double prob = std::exp(logits[i] - lse);
      delta[i] = prob - target[i];
      if (target[i] > 0) value -= target[i] * (logits[i] - lse);
    }
  };
  switch (loss.kind) {
    case LossKind::softmax_ce: softmax_block(0, logits.size()); break;
    case LossKind::sigmoid_bce:
      for (std::size_t i = 0; i < logits.size(); ++i) {
        double z = logits[i], y = target[i];
        // log(1 + e^z) - y z, computed stably
        value += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        delta[i] = logistic(z) - y;
      }
      break;
    case LossKind::grouped_softmax_ce:
      for (std::size_t g = 0; g + 1 < loss.group_offsets.size(); ++g)
        softmax_block(loss.group_offsets[g], loss.group_offsets[g + 1]);
      break;
  }
  return value;
}

class Network {
 public:
  Network() = default;

  /// He-uniform hidden layers, Glorot-uniform output layer, zero biases, N(0,1) embeddings.
  Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    require(spec_.outputs > 0, "network needs at least one output");
    require(spec_.input_width() > 0, "network needs a non-empty input");
    layout();
    auto rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < embedding_size(); ++i) params_[i] = normal(rng);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& L = layers_[l];
      bool last = l + 1 == layers_.size();
      double limit = last ? std::sqrt(6.0 / double(L.in + L.out)) : std::sqrt(6.0 / double(L.in));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (std::size_t i = 0; i < L.in * L.out; ++i) params_[L.w + i] = u(rng);
    }
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  std::size_t embedding_size() const noexcept { return spec_.vocab * spec_.embed_dim; }

  std::span<double> embedding_row(std::size_t row) {
    require(row < spec_.vocab, "embedding row out of range");
    return {params_.data() + row * spec_.embed_dim, spec_.embed_dim};
  }

  /// Forward pass. `acts`, when given, receives the input and every layer's post-activation output.
  std::vector<double> logits(const Sample& s, std::vector<std::vector<double>>* acts = nullptr) const {
    std::vector<double> x = input(s);
    std::vector<std::vector<double>> local;
    auto& a = acts ? *acts : local;
    a.clear();
    a.push_back(x);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      std::vector<double> y(L.out);
      const double* w = params_.data() + L.w;
      const double* b = params_.data() + L.b;
      const auto& in = a.back();
      for (std::size_t o = 0; o < L.out; ++o) {
        double acc = b[o];
        const double* row = w + o * L.in;
        for (std::size_t i = 0; i < L.in; ++i) acc += row[i] * in[i];
        y[o] = (l + 1 < layers_.size() && acc < 0) ? 0.0 : acc;
      }
      a.push_back(std::move(y));
    }
    return a.back();
  }

  std::vector<double> predict(const Sample& s, const LossSpec& loss) const { return activate(logits(s), loss); }

  /// Mean loss over the batch; accumulates the mean gradient into `grad` (resized to params().size()).
  double loss_and_gradient(std::span<const Sample> batch, std::span<const std::vector<double>> targets,
                           const LossSpec& loss, std::vector<double>& grad) const {
    grad.assign(params_.size(), 0.0);
    double total = 0;
    std::vector<std::vector<double>> acts;
    std::vector<double> delta, next;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n) {
      logits(batch[n], &acts);
      total += loss_and_delta(acts.back(), targets[n], loss, delta);
      for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& L = layers_[l];
        const auto& in = acts[l];
        const double* w = params_.data() + L.w;
        double* gw = grad.data() + L.w;
        double* gb = grad.data() + L.b;
        next.assign(L.in, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
          double d = delta[o] * scale;
          if (d == 0.0) continue;
          gb[o] += d;
          double* grow = gw + o * L.in;
          const double* wrow = w + o * L.in;
          for (std::size_t i = 0; i < L.in; ++i) {
            grow[i] += d * in[i];
            next[i] += wrow[i] * delta[o];
          }
        }
        if (l > 0)
          for (std::size_t i = 0; i < L.in; ++i)
            if (in[i] <= 0.0) next[i] = 0.0;  // ReLU
        delta.swap(next);
      }
      if (spec_.bag && !batch[n].indices.empty()) {
        const double share = scale / static_cast<double>(batch[n].indices.size());
        for (auto idx : batch[n].indices) {
          double* row = grad.data() + idx * spec_.embed_dim;
          for (std::size_t k = 0; k < spec_.embed_dim; ++k) row[k] += delta[k] * share;
        }
      } else if (spec_.slots) {
        for (std::size_t s = 0; s < spec_.slots; ++s) {
          double* row = grad.data() + batch[n].indices[s] * spec_.embed_dim;
          for (std::size_t k = 0; k < spec_.embed_dim; ++k) row[k] += delta[s * spec_.embed_dim + k] * scale;
        }
      }
    }
    return total * scale;
  }

  double loss(std::span<const Sample> batch, std::span<const std::vector<double>> targets, const LossSpec& spec) const {
    double total = 0;
    std::vector<double> delta;
    for (std::size_t n = 0; n < batch.size(); ++n) total += loss_and_delta(logits(batch[n]), targets[n], spec, delta);
    return total / static_cast<double>(batch.size());
  }

  friend bool operator==(const Network& a, const Network& b) { return a.spec_ == b.spec_ && a.params_ == b.params_; }

  void save(std::ostream& out) const;
  static Network load(std::istream& in);

 private:
  struct Layer {
    std::size_t in, out, w, b;  // w, b: offsets into params_
  };

  void layout() {
    std::size_t offset = embedding_size();
    std::size_t width = spec_.input_width();
    std::vector<std::size_t> widths = spec_.hidden;
    widths.push_back(spec_.outputs);
    layers_.clear();
    for (auto out : widths) {
      layers_.push_back(Layer{width, out, offset, offset + width * out});
      offset += width * out + out;
      width = out;
    }
    params_.assign(offset, 0.0);
  }

  std::vector<double> input(const Sample& s) const {
    if (spec_.bag) {
      std::vector<double> x(spec_.embed_dim, 0.0);
      for (auto idx : s.indices) {
        require(idx < spec_.vocab, "embedding index ", idx, " out of range");
        const double* row = params_.data() + idx * spec_.embed_dim;
        for (std::size_t k = 0; k < spec_.embed_dim; ++k) x[k] += row[k];
      }
      if (!s.indices.empty())
        for (double& v : x) v /= static_cast<double>(s.indices.size());
      return x;
    }
    if (!spec_.slots) {
      require(s.dense.size() == spec_.dense_inputs, "dense input has ", s.dense.size(), " values, expected ",
              spec_.dense_inputs);
      return s.dense;
    }
    require(s.indices.size() == spec_.slots, "sample has ", s.indices.size(), " indices, expected ", spec_.slots);
    std::vector<double> x(spec_.input_width());
    for (std::size_t k = 0; k < spec_.slots; ++k) {
      require(s.indices[k] < spec_.vocab, "embedding index ", s.indices[k], " out of range");
      const double* row = params_.data() + s.indices[k] * spec_.embed_dim;
      std::copy(row, row + spec_.embed_dim, x.begin() + static_cast<std::ptrdiff_t>(k * spec_.embed_dim));
    }
    return x;
  }

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct FitConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

/// Minibatch Adam over shuffled samples. Returns the mean loss of each epoch.
inline std::vector<double> fit(Network& net, const std::vector<Sample>& samples,
                               const std::vector<std::vector<double>>& targets, const LossSpec& loss,
                               const FitConfig& cfg) {
  require(!samples.empty(), "no training samples");
  require(samples.size() == targets.size(), "samples and targets differ in length");
  require(cfg.epochs >= 1, "epochs must be >= 1");
  auto rng = make_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(net.params().size(), cfg.adam);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad, history;
  std::vector<Sample> batch;
  std::vector<std::vector<double>> batch_targets;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      auto end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      batch_targets.clear();
      for (auto i = start; i < end; ++i) {
        batch.push_back(samples[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      double l = net.loss_and_gradient(batch, batch_targets, loss, grad);
      if (!std::isfinite(l)) throw NumericError("non-finite training loss at epoch " + std::to_string(e));
      total += l * static_cast<double>(end - start);
      adam.step(net.params(), grad);
    }
    history.push_back(total / static_cast<double>(samples.size()));
  }
  return history;
}

// Weight file: a spec line, then one section per parameter block, rows as
// "kind<TAB>index<TAB>v1 v2 ..." with 17 significant digits.
inline void Network::save(std::ostream& out) const {
  out << "network vocab=" << spec_.vocab << " embed_dim=" << spec_.embed_dim << " slots=" << spec_.slots
      << " bag=" << spec_.bag << " dense_inputs=" << spec_.dense_inputs << " hidden=";
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) out << (i ? "," : "") << spec_.hidden[i];
  out << " outputs=" << spec_.outputs << '\n';
  auto row = [&](const char* kind, std::size_t idx, const double* p, std::size_t n) {
    out << kind << '\t' << idx << '\t';
    for (std::size_t i = 0; i < n; ++i) out << (i ? " " : "") << format_real(p[i], 17);
    out << '\n';
  };
  if (spec_.embedded()) {
    out << "section embedding dim=" << spec_.embed_dim << '\n';
    for (std::size_t r = 0; r < spec_.vocab; ++r) row("entity", r, params_.data() + r * spec_.embed_dim, spec_.embed_dim);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    out << "section layer" << l << " dim=" << L.in << '\n';
    for (std::size_t o = 0; o < L.out; ++o) row("weight", o, params_.data() + L.w + o * L.in, L.in);
    row("bias", l, params_.data() + L.b, L.out);
  }
}

inline Network Network::load(std::istream& in) {
  std::string line;
  std::size_t n = 1;
  if (!std::getline(in, line)) throw ParseError("empty network file");
  auto toks = tokenize(line);
  if (toks.empty() || toks[0] != "network") throw ParseError("expected 'network' header", n);
  NetworkSpec spec;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    auto eq = toks[i].find('=');
    if (eq == std::string::npos) throw ParseError("bad header field '" + toks[i] + "'", n);
    auto key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
    auto num = [&](const std::string& v) { return static_cast<std::size_t>(parse_real(v, n)); };
    if (key == "vocab") spec.vocab = num(val);
    else if (key == "embed_dim") spec.embed_dim = num(val);
    else if (key == "slots") spec.slots = num(val);
    else if (key == "bag") spec.bag = num(val) != 0;
    else if (key == "dense_inputs") spec.dense_inputs = num(val);
    else if (key == "outputs") spec.outputs = num(val);
    else if (key == "hidden") {
      if (!val.empty())
        for (auto& h : split(val, ',')) spec.hidden.push_back(num(h));
    }
  }
  Network net;
  net.spec_ = spec;
  net.layout();
  std::size_t layer = 0;
  bool in_embedding = false;
  while (std::getline(in, line)) {
    ++n;
    auto t = tokenize(line);
    if (t.empty()) continue;
    if (t[0] == "section") {
      in_embedding = t.size() > 1 && t[1] == "embedding";
      if (!in_embedding) layer = static_cast<std::size_t>(parse_real(t.at(1).substr(5), n));
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 3) throw ParseError("expected 'kind<TAB>index<TAB>values'", n);
    auto idx = static_cast<std::size_t>(parse_real(cols[1], n));
    auto vals = tokenize(cols[2]);
    double* dst = nullptr;
    std::size_t expect = 0;
    if (in_embedding && cols[0] == "entity" && idx < spec.vocab) {
      dst = net.params_.data() + idx * spec.embed_dim;
      expect = spec.embed_dim;
    } else if (!in_embedding && layer < net.layers_.size()) {
      const auto& L = net.layers_[layer];
      if (cols[0] == "weight" && idx < L.out) {
        dst = net.params_.data() + L.w + idx * L.in;
        expect = L.in;
      } else if (cols[0] == "bias") {
        dst = net.params_.data() + L.b;
        expect = L.out;
      }
    }
    if (!dst || vals.size() != expect) throw ParseError("row does not match the network shape", n);
    for (std::size_t i = 0; i < expect; ++i) dst[i] = parse_real(vals[i], n);
  }
  return net;
}

}  // namespace kgns::nn
