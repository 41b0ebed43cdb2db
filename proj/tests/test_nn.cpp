#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kgns/nn.hpp"

using namespace kgns;
using namespace kgns::nn;

namespace {

struct Case {
  const char* name;
  NetworkSpec spec;
  LossSpec loss;
};

std::vector<Case> cases() {
  return {
      {"slots_softmax", {10, 4, 3, false, 0, {6, 5}, 7}, {LossKind::softmax_ce, {}}},
      {"bag_grouped", {9, 5, 0, true, 0, {8}, 6}, {LossKind::grouped_softmax_ce, {0, 2, 6}}},
      {"dense_bce", {0, 0, 0, false, 4, {6}, 5}, {LossKind::sigmoid_bce, {}}},
      {"dense_linear", {0, 0, 0, false, 4, {}, 3}, {LossKind::softmax_ce, {}}},
  };
}

Sample random_sample(const NetworkSpec& spec, Rng& rng) {
  Sample s;
  if (spec.bag) {
    for (std::size_t k = 0, n = 1 + uniform_index(rng, 3); k < n; ++k) s.indices.push_back(uniform_index(rng, spec.vocab));
  } else if (spec.slots) {
    for (std::size_t k = 0; k < spec.slots; ++k) s.indices.push_back(uniform_index(rng, spec.vocab));
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t k = 0; k < spec.dense_inputs; ++k) s.dense.push_back(g(rng));
  }
  return s;
}

std::vector<double> random_target(const Case& c, Rng& rng) {
  std::vector<double> t(c.spec.outputs, 0.0);
  if (c.loss.kind == LossKind::sigmoid_bce) {
    for (auto& x : t) x = static_cast<double>(uniform_index(rng, 2));
  } else if (c.loss.kind == LossKind::softmax_ce) {
    t[uniform_index(rng, t.size())] = 1.0;
  } else {
    for (std::size_t g = 0; g + 1 < c.loss.group_offsets.size(); ++g) {
      auto lo = c.loss.group_offsets[g], hi = c.loss.group_offsets[g + 1];
      t[lo + uniform_index(rng, hi - lo)] = 1.0;
    }
  }
  return t;
}

}  // namespace

TEST(Network, ForwardMatchesHandComputation) {
  // 2 dense inputs -> 2 ReLU units -> 1 output
  Network net(NetworkSpec{0, 0, 0, false, 2, {2}, 1}, 0);
  auto& p = net.params();
  ASSERT_EQ(p.size(), 2u * 2 + 2 + 2 * 1 + 1);
  // layer 1 weights (row per unit), biases, layer 2 weights, bias
  p = {1, -1, 2, 0.5, 0.1, -3, 2, -1, 0.25};
  auto y = net.logits(Sample{{}, {1.0, 2.0}});
  // h1 = relu(1 - 2 + 0.1) = 0, h2 = relu(2 + 1 - 3) = 0 -> output is the bias
  EXPECT_DOUBLE_EQ(y[0], 0.25);
  y = net.logits(Sample{{}, {3.0, 1.0}});
  // h1 = relu(3 - 1 + 0.1) = 2.1, h2 = relu(6 + 0.5 - 3) = 3.5 -> 4.2 - 3.5 + 0.25
  EXPECT_NEAR(y[0], 0.95, 1e-12);
}

TEST(Network, SlotInputConcatenatesRows) {
  Network net(NetworkSpec{3, 2, 2, false, 0, {}, 1}, 0);
  auto& p = net.params();
  for (std::size_t i = 0; i < 6; ++i) p[i] = static_cast<double>(i);  // rows (0,1) (2,3) (4,5)
  p[6] = 1;
  p[7] = 10;
  p[8] = 100;
  p[9] = 1000;
  p[10] = 0;
  // input = row2 ++ row0 = (4,5,0,1)
  EXPECT_DOUBLE_EQ(net.logits(Sample{{2, 0}, {}})[0], 4 + 50 + 0 + 1000);
  EXPECT_THROW(net.logits(Sample{{3, 0}, {}}), PreconditionError);
  EXPECT_THROW(net.logits(Sample{{1}, {}}), PreconditionError);
}

TEST(Loss, ValuesAgainstClosedForm) {
  std::vector<double> delta;
  std::vector<double> z{1.0, 2.0, 0.5}, t{0, 1, 0};
  double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5));
  EXPECT_NEAR(loss_and_delta(z, t, {LossKind::softmax_ce, {}}, delta), lse - 2.0, 1e-12);
  std::vector<double> y{1, 0, 1};
  double bce = -std::log(logistic(1.0)) - std::log(1 - logistic(2.0)) - std::log(logistic(0.5));
  EXPECT_NEAR(loss_and_delta(z, y, {LossKind::sigmoid_bce, {}}, delta), bce, 1e-12);
  EXPECT_NEAR(loss_and_delta(std::vector<double>{800.0}, std::vector<double>{0.0}, {LossKind::sigmoid_bce, {}}, delta), 800.0, 1e-9);
}

TEST(Network, GradientCheck) {
  const double step = 1e-5;
  for (auto& c : cases()) {
    auto rng = make_rng(11);
    Network net(c.spec, 3);
    std::vector<Sample> batch;
    std::vector<std::vector<double>> targets;
    for (int i = 0; i < 4; ++i) {
      batch.push_back(random_sample(c.spec, rng));
      targets.push_back(random_target(c, rng));
    }
    std::vector<double> grad;
    net.loss_and_gradient(batch, targets, c.loss, grad);
    auto& p = net.params();
    int checked = 0, bad = 0;
    for (std::size_t i = 0; i < p.size(); i += 1 + p.size() / 200) {
      double keep = p[i];
      p[i] = keep + step;
      double up = net.loss(batch, targets, c.loss);
      p[i] = keep - step;
      double down = net.loss(batch, targets, c.loss);
      p[i] = keep;
      double numeric = (up - down) / (2 * step);
      double err = std::abs(numeric - grad[i]) / std::max(std::abs(numeric) + std::abs(grad[i]), 1e-6);
      ++checked;
      if (err > 1e-3) {
        ++bad;
        ADD_FAILURE() << c.name << " param " << i << " analytic " << grad[i] << " numeric " << numeric;
      }
    }
    EXPECT_GT(checked, 10) << c.name;
    EXPECT_EQ(bad, 0) << c.name;
  }
}

TEST(Fit, LearnsSeparableDataAndIsDeterministic) {
  auto c = cases()[0];
  auto rng = make_rng(2);
  std::vector<Sample> xs;
  std::vector<std::vector<double>> ys;
  for (int i = 0; i < 7; ++i) {
    xs.push_back(random_sample(c.spec, rng));
    std::vector<double> t(7, 0.0);
    t[static_cast<std::size_t>(i)] = 1;
    ys.push_back(t);
  }
  FitConfig fc;
  fc.epochs = 300;
  fc.adam.learning_rate = 0.01;
  Network a(c.spec, 1), b(c.spec, 1);
  auto hist = fit(a, xs, ys, c.loss, fc);
  fit(b, xs, ys, c.loss, fc);
  EXPECT_TRUE(a == b);
  EXPECT_LT(hist.back(), hist.front());
  for (int i = 0; i < 7; ++i) {
    auto p = a.predict(xs[static_cast<std::size_t>(i)], c.loss);
    EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), i);
  }
}

TEST(Fit, Preconditions) {
  Network net(cases()[2].spec, 0);
  EXPECT_THROW(fit(net, {}, {}, {LossKind::sigmoid_bce, {}}, FitConfig{}), PreconditionError);
  FitConfig zero;
  zero.epochs = 0;
  EXPECT_THROW(fit(net, {Sample{{}, {0, 0, 0, 0}}}, {{0, 0, 0, 0, 0}}, {LossKind::sigmoid_bce, {}}, zero), PreconditionError);
}

TEST(Network, SaveLoadRoundTrip) {
  for (auto& c : cases()) {
    Network net(c.spec, 9);
    std::stringstream buf;
    net.save(buf);
    auto back = Network::load(buf);
    EXPECT_EQ(back.spec(), net.spec()) << c.name;
    ASSERT_EQ(back.params().size(), net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i)
      EXPECT_NEAR(back.params()[i], net.params()[i], 1e-8 * std::max(1.0, std::abs(net.params()[i])));
  }
}

TEST(Activate, GroupsSumToOne) {
  LossSpec ls{LossKind::grouped_softmax_ce, {0, 2, 5}};
  auto p = activate({1, 2, 3, -1, 0}, ls);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  EXPECT_NEAR(p[2] + p[3] + p[4], 1.0, 1e-12);
}
