// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "hlstm/network.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "hlstm/random.hpp"

namespace hlstm {
namespace {

std::vector<Vec> random_frames(std::size_t T, std::size_t d, Rng& rng) {
  std::vector<Vec> f(T, Vec(d));
  for (Vec& x : f) {
    for (double& v : x) v = rng.normal();
  }
  return f;
}

NetworkSpec tiny_spec(HistPlacement pl = HistPlacement::top) {
  NetworkSpec s;
  s.input_dim = 4;
  s.hidden = {3, 3};
  s.classes = 3;
  s.dropout_p = 0.0;
  s.placement = pl;
  return s;
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  Rng rng(1);
  const Vec h{0.1, -0.2, 0.3};
  EXPECT_EQ(apply_dropout(h, 0.0, rng, true), h);
  EXPECT_EQ(apply_dropout(h, 0.0, rng, false), h);
}

TEST(Dropout, EvaluationIsIdentity) {
  Rng rng(2);
  const Vec h{0.1, -0.2, 0.3};
  EXPECT_EQ(apply_dropout(h, 0.5, rng, false), h);
  EXPECT_EQ(apply_dropout(h, 0.9, rng, false), h);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Rng rng(3);
  const Vec h{0.5, -1.0, 2.0, 0.25};
  Vec sum(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vec d = apply_dropout(h, 0.5, rng, true);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_TRUE(d[j] == 0.0 || d[j] == 2.0 * h[j]);
      sum[j] += d[j];
    }
  }
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(sum[j] / n, h[j], 0.02 * std::abs(h[j]));
}

TEST(Dropout, RejectsInvalidProbability) {
  Rng rng(4);
  EXPECT_THROW(apply_dropout(Vec{1}, 1.0, rng, true), std::invalid_argument);
  EXPECT_THROW(apply_dropout(Vec{1}, -0.1, rng, true), std::invalid_argument);
}

TEST(Forward, SingleStepUsesFirstResponse) {
  Rng rng(5);
  const StackedNetwork net = make_network(tiny_spec(), 7);
  const auto frames = random_frames(1, 4, rng);
  const ForwardTrace tr = forward_sequence(net, frames, std::nullopt, Mode::eval);
  const Vec& h1 = tr.layers.back().states[0].h;
  EXPECT_EQ(tr.layers.back().hist_states[0], h1);
  EXPECT_EQ(tr.final_probs, head_predict(net.final_head, h1));
}

TEST(Forward, ZeroNetworkIsUniform) {
  Rng rng(6);
  for (HistPlacement pl : {HistPlacement::none, HistPlacement::top, HistPlacement::all}) {
    const StackedNetwork net = make_zero_network(tiny_spec(pl));
    const ForwardTrace tr = forward_sequence(net, random_frames(5, 4, rng), std::nullopt, Mode::eval);
    for (double p : tr.final_probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  }
}

// Independent straight-line evaluation of a two-layer network with one
// historical layer on top, in training mode with the true label.
Vec oracle_forward(const StackedNetwork& net, const std::vector<Vec>& frames, std::size_t label) {
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  auto cell = [&](const LstmParams& p, const Vec& hp, const Vec& cp, const Vec& x, Vec& h, Vec& c) {
    const std::size_t n = p.hidden_size(), in = p.input_size();
    auto pre = [&](const GateParams& g, std::size_t k) {
      double a = g.bias[k];
      for (std::size_t j = 0; j < in; ++j) a += g.input(k, j) * x[j];
      for (std::size_t j = 0; j < n; ++j) a += g.recurrent(k, j) * hp[j];
      return a;
    };
    h = Vec(n);
    c = Vec(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double i = sig(pre(p.input_gate, k) + p.input_peephole.weights(k, 0) * cp[k]);
      const double f = sig(pre(p.forget_gate, k) + p.forget_peephole.weights(k, 0) * cp[k]);
      c[k] = f * cp[k] + i * std::tanh(pre(p.cell_gate, k));
      const double o = sig(pre(p.output_gate, k) + p.output_peephole.weights(k, 0) * c[k]);
      h[k] = o * std::tanh(c[k]);
    }
  };
  auto probs = [](const HeadParams& hd, const Vec& v) {
    const std::size_t C = hd.classes();
    std::vector<double> z(C);
    double m = -1e300;
    for (std::size_t c = 0; c < C; ++c) {
      z[c] = hd.bias[c];
      for (std::size_t j = 0; j < v.size(); ++j) z[c] += hd.weights(c, j) * v[j];
      m = std::max(m, z[c]);
    }
    double s = 0.0;
    for (double& x : z) s += (x = std::exp(x - m));
    Vec p(C);
    for (std::size_t c = 0; c < C; ++c) p[c] = z[c] / s;
    return p;
  };
  auto loss = [&](const HeadParams& hd, const Vec& v) {
    return std::max(-std::log(probs(hd, v)[label]), 1e-6);
  };

  const std::size_t T = frames.size();
  std::vector<Vec> h0(T), h1(T);
  Vec hp(3), cp(3), h, c;
  for (std::size_t t = 0; t < T; ++t) {
    cell(net.layers[0], hp, cp, frames[t], h, c);
    h0[t] = hp = h;
    cp = c;
  }
  hp = Vec(3);
  cp = Vec(3);
  for (std::size_t t = 0; t < T; ++t) {
    cell(net.layers[1], hp, cp, h0[t], h, c);
    h1[t] = hp = h;
    cp = c;
  }
  Vec l = h1[0];
  double eps_l = loss(net.final_head, l);
  const std::size_t tau = net.hist.tau;
  for (std::size_t t = 2; t <= T; ++t) {
    const double eps_h = loss(net.per_step_head, h1[t - 1]);
    Vec next(3);
    if (eps_h >= eps_l) {
      const double a = std::clamp(0.5 * std::log(eps_l / eps_h), 0.0, 1.0);
      for (std::size_t j = 0; j < 3; ++j) next[j] = a * h1[t - 1][j] + (1 - a) * l[j];
    } else {
      const std::size_t span = std::min(tau, t);
      for (std::size_t k = t - span + 1; k <= t; ++k) {
        for (std::size_t j = 0; j < 3; ++j) next[j] += h1[k - 1][j] / static_cast<double>(span);
      }
    }
    l = next;
    eps_l = loss(net.final_head, l);
  }
  return probs(net.final_head, l);
}

TEST(Forward, MatchesStraightLineOracle) {
  Rng rng(8);
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    NetworkSpec s = tiny_spec();
    s.hist.tau = 2;
    StackedNetwork net = make_network(s, seed);
    // Larger head weights make both branches occur.
    for (double& v : net.per_step_head.weights.values()) v *= 4.0;
    for (double& v : net.final_head.weights.values()) v *= 4.0;
    const auto frames = random_frames(4, 4, rng);
    const std::size_t label = rng.below(3);
    const ForwardTrace tr = forward_sequence(net, frames, label, Mode::train);
    const Vec want = oracle_forward(net, frames, label);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(tr.final_probs[c], want[c], 1e-12) << seed;
  }
}

TEST(Forward, DeterministicBitwise) {
  Rng rng(9);
  NetworkSpec s = tiny_spec();
  s.dropout_p = 0.5;
  const StackedNetwork net = make_network(s, 3);
  const auto frames = random_frames(6, 4, rng);
  const ForwardTrace a = forward_sequence(net, frames, 1, Mode::train, 77);
  const ForwardTrace b = forward_sequence(net, frames, 1, Mode::train, 77);
  EXPECT_EQ(a.final_probs, b.final_probs);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_EQ(a.layers[l].states[t].h, b.layers[l].states[t].h);
      EXPECT_EQ(a.layers[l].states[t].c, b.layers[l].states[t].c);
    }
    EXPECT_EQ(a.layers[l].dropout_masks, b.layers[l].dropout_masks);
  }
  const ForwardTrace c = forward_sequence(net, frames, 1, Mode::train, 78);
  EXPECT_NE(a.layers[1].dropout_masks, c.layers[1].dropout_masks);
}

TEST(Forward, EvaluationIsLabelFreeDropoutFreeAndPure) {
  Rng rng(10);
  NetworkSpec s = tiny_spec();
  s.dropout_p = 0.5;
  const StackedNetwork net = make_network(s, 4);
  const StackedNetwork before = net;
  const auto frames = random_frames(5, 4, rng);
  const ForwardTrace a = forward_sequence(net, frames, std::nullopt, Mode::eval, 1);
  const ForwardTrace b = forward_sequence(net, frames, std::nullopt, Mode::eval, 2);
  EXPECT_EQ(a.final_probs, b.final_probs);
  for (const auto& lt : a.layers) EXPECT_TRUE(lt.dropout_masks.empty());
  EXPECT_EQ(flatten(net), flatten(before));
}

TEST(Forward, Errors) {
  Rng rng(11);
  const StackedNetwork net = make_network(tiny_spec(), 5);
  EXPECT_THROW(forward_sequence(net, random_frames(3, 5, rng), std::nullopt, Mode::eval),
               ShapeError);
  EXPECT_THROW(forward_sequence(net, random_frames(3, 4, rng), std::nullopt, Mode::train),
               std::invalid_argument);
  EXPECT_THROW(forward_sequence(net, std::vector<Vec>{}, std::nullopt, Mode::eval),
               std::invalid_argument);
  EXPECT_THROW(forward_sequence(net, random_frames(3, 4, rng), 3, Mode::train), std::out_of_range);
}

TEST(Forward, FixedBlendClampedFinalStateIsFirstResponse) {
  Rng rng(12);
  NetworkSpec s = tiny_spec();
  s.hist.inference_policy = InferencePolicy::fixed_blend;
  s.hist.alpha_policy = AlphaPolicy::clamped;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const StackedNetwork net = make_network(s, seed);
    const ForwardTrace tr =
        forward_sequence(net, random_frames(1 + seed % 9, 4, rng), std::nullopt, Mode::eval);
    const auto& top = tr.layers.back();
    EXPECT_EQ(top.hist_states.back(), top.states.front().h);
  }
}

TEST(Forward, BaselineClassifiesLastResponse) {
  Rng rng(13);
  const StackedNetwork net = make_network(tiny_spec(HistPlacement::none), 6);
  const ForwardTrace tr = forward_sequence(net, random_frames(5, 4, rng), std::nullopt, Mode::eval);
  EXPECT_TRUE(tr.layers.back().hist_states.empty());
  EXPECT_EQ(tr.final_probs, head_predict(net.final_head, tr.layers.back().states.back().h));
}

TEST(TotalLoss, FinalTermOnly) {
  Rng rng(14);
  const StackedNetwork net = make_network(tiny_spec(), 8);
  const ForwardTrace tr = forward_sequence(net, random_frames(4, 4, rng), 2, Mode::train);
  EXPECT_EQ(total_loss(tr, 2, {0.0, 0.0}, net), cross_entropy(tr.final_probs, 2));
}

TEST(TotalLoss, ZeroNetworkFourClasses) {
  Rng rng(15);
  NetworkSpec s = tiny_spec();
  s.classes = 4;
  const StackedNetwork net = make_zero_network(s);
  const ForwardTrace tr = forward_sequence(net, random_frames(6, 4, rng), 1, Mode::train);
  EXPECT_NEAR(total_loss(tr, 1, {1.0, 0.0}, net), 2.0 * std::log(4.0), 1e-14);
}

TEST(TotalLoss, PenaltyDecomposes) {
  Rng rng(16);
  StackedNetwork net = make_network(tiny_spec(), 9);
  const ForwardTrace tr = forward_sequence(net, random_frames(4, 4, rng), 0, Mode::train);
  const double with = total_loss(tr, 0, {0.5, 0.004}, net);
  const double without = total_loss(tr, 0, {0.5, 0.0}, net);
  EXPECT_NEAR(with - without, 0.004 * weight_norm_sq(net), 1e-15);

  double sq = 0.0;
  for_each_block(net, [&](const std::string&, std::span<const double> s, BlockKind k) {
    if (k == BlockKind::weight) {
      for (double v : s) sq += v * v;
    }
  });
  EXPECT_DOUBLE_EQ(weight_norm_sq(net), sq);
  // Biases and peepholes are not penalized.
  StackedNetwork shifted = net;
  shifted.final_head.bias.fill(3.0);
  shifted.layers[0].input_peephole.weights.fill(2.0);
  EXPECT_EQ(weight_norm_sq(shifted), weight_norm_sq(net));
}

TEST(Backward, PenaltyGradientIsTwiceL2W) {
  Rng rng(17);
  NetworkSpec s = tiny_spec();
  const StackedNetwork net = make_network(s, 10);
  const auto frames = random_frames(3, 4, rng);
  const ForwardTrace tr = forward_sequence(net, frames, 1, Mode::train);
  const Vec g0 = flatten(backward_sequence(net, tr, 1, {0.5, 0.0}));
  const Vec g1 = flatten(backward_sequence(net, tr, 1, {0.5, 0.01}));
  const Vec w = flatten(net);
  std::vector<bool> is_weight;
  for_each_block(net, [&](const std::string&, std::span<const double> b, BlockKind k) {
    for (std::size_t i = 0; i < b.size(); ++i) is_weight.push_back(k == BlockKind::weight);
  });
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double want = is_weight[i] ? 2.0 * 0.01 * w[i] : 0.0;
    EXPECT_NEAR(g1[i] - g0[i], want, 1e-15);
  }
}

TEST(Backward, VanishesAtCrossEntropyFloor) {
  Rng rng(18);
  StackedNetwork net = make_network(tiny_spec(), 11);
  net.final_head.bias = Vec{0, 60, 0};
  const ForwardTrace tr = forward_sequence(net, random_frames(5, 4, rng), 1, Mode::train);
  ASSERT_EQ(cross_entropy(tr.final_probs, 1), kLossFloor);
  for (double g : flatten(backward_sequence(net, tr, 1, {0.0, 0.0}))) EXPECT_EQ(g, 0.0);
}

TEST(Backward, ShapeMismatch) {
  Rng rng(19);
  const StackedNetwork net = make_network(tiny_spec(), 12);
  const ForwardTrace tr = forward_sequence(net, random_frames(3, 4, rng), 0, Mode::train);
  NetworkSpec s = tiny_spec();
  s.hidden = {3};
  EXPECT_THROW(backward_sequence(make_network(s, 1), tr, 0, {}), ShapeError);
}

TEST(Backward, ReusesForwardDropoutMasks) {
  // With dropout on, the analytic gradient must match finite differences of
  // the loss under the same masks (the forward pass replays them via its seed).
  Rng rng(20);
  NetworkSpec s = tiny_spec();
  s.dropout_p = 0.5;
  const StackedNetwork net = make_network(s, 13);
  const auto frames = random_frames(4, 4, rng);
  const ForwardTrace tr = forward_sequence(net, frames, 2, Mode::train, 99);
  const Vec g = flatten(backward_sequence(net, tr, 2, {0.5, 0.004}));
  const HistoricalSchedule sched = schedule_of(tr);
  StackedNetwork probe = net;
  const Vec theta = flatten(net);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < theta.size(); i += 7) {
    auto f = [&](double v) {
      Vec t = theta;
      t[i] = v;
      unflatten(t, probe);
      return total_loss(forward_sequence(probe, frames, 2, Mode::train, 99, &sched), 2,
                        {0.5, 0.004}, probe);
    };
    const double h = 1e-5;
    const double num = (f(theta[i] + h) - f(theta[i] - h)) / (2 * h);
    if (std::abs(num) < 1e-7 && std::abs(g[i]) < 1e-7) continue;
    EXPECT_LT(relative_error(g[i], num), 1e-4) << i;
    ++checked;
  }
  EXPECT_GT(checked, 20u);
}

TEST(Params, FlattenRoundTripAndCast) {
  const StackedNetwork net = make_network(tiny_spec(HistPlacement::all), 14);
  StackedNetwork copy = make_zero_network(net.spec());
  unflatten(flatten(net), copy);
  EXPECT_EQ(flatten(copy), flatten(net));
  const auto wide = cast_network<long double>(net);
  const auto back = cast_network<double>(wide);
  EXPECT_EQ(flatten(back), flatten(net));
  EXPECT_THROW(unflatten(Vec(3), copy), ShapeError);
}

TEST(Params, SpecValidation) {
  NetworkSpec s = tiny_spec();
  s.classes = 1;
  EXPECT_THROW(make_network(s, 0), std::invalid_argument);
  s = tiny_spec();
  s.hidden = {};
  EXPECT_THROW(make_network(s, 0), std::invalid_argument);
  s = tiny_spec();
  s.dropout_p = 1.0;
  EXPECT_THROW(make_network(s, 0), std::invalid_argument);
}

}  // namespace
}  // namespace hlstm
