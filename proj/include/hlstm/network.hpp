// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlstm/cells.hpp"
#include "hlstm/historical.hpp"
#include "hlstm/numerics.hpp"
#include "hlstm/random.hpp"

namespace hlstm {

/// Where historical layers sit in the stack.
///   none: plain LSTM; the final head reads the top response h_T.
///   top:  one historical layer over the top LSTM layer.
///   all:  every layer keeps a historical state and passes it upward; layers
///         below the top get their own auxiliary step/historical heads.
enum class HistPlacement { none, top, all };

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {30, 30, 30, 30, 30};
  std::size_t classes = 0;
  PeepholeKind peephole = PeepholeKind::diag;
  double dropout_p = 0.5;
  HistoricalConfig hist;
  HistPlacement placement = HistPlacement::top;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

template <class T>
struct BasicStackedNetwork {
  using scalar_type = T;

  std::vector<BasicLstmParams<T>> layers;
  BasicHeadParams<T> per_step_head;  // scores the top response at every step
  BasicHeadParams<T> final_head;     // classifies the last historical state
  std::vector<BasicHeadParams<T>> aux_step_heads;  // placement `all`, per lower layer
  std::vector<BasicHeadParams<T>> aux_hist_heads;  // placement `all`, per lower layer
  double dropout_p = 0.5;
  HistoricalConfig hist;
  HistPlacement placement = HistPlacement::top;

  std::size_t input_dim() const { return layers.front().input_size(); }
  std::size_t classes() const { return final_head.classes(); }
  std::size_t top() const { return layers.size() - 1; }

  bool historical_at(std::size_t layer) const {
    return placement == HistPlacement::all ||
           (placement == HistPlacement::top && layer == top());
  }
  /// Head that scores h_t of this layer, or nullptr.
  const BasicHeadParams<T>* step_head(std::size_t layer) const {
    if (layer == top()) return &per_step_head;
    if (placement == HistPlacement::all) return &aux_step_heads[layer];
    return nullptr;
  }
  /// Head that scores l_t of this layer, or nullptr.
  const BasicHeadParams<T>* hist_head(std::size_t layer) const {
    if (!historical_at(layer)) return nullptr;
    return layer == top() ? &final_head : &aux_hist_heads[layer];
  }

  NetworkSpec spec() const {
    NetworkSpec s;
    s.input_dim = input_dim();
    s.hidden.clear();
    for (const auto& l : layers) s.hidden.push_back(l.hidden_size());
    s.classes = classes();
    s.peephole = layers.front().input_peephole.kind;
    s.dropout_p = dropout_p;
    s.hist = hist;
    s.placement = placement;
    return s;
  }
};

using StackedNetwork = BasicStackedNetwork<double>;

namespace detail {

inline void validate_spec(const NetworkSpec& s) {
  if (s.input_dim == 0) throw std::invalid_argument("network: input_dim must be >= 1");
  if (s.hidden.empty()) throw std::invalid_argument("network: at least one layer");
  for (auto h : s.hidden) {
    if (h == 0) throw std::invalid_argument("network: hidden sizes must be >= 1");
  }
  if (s.classes < 2) throw std::invalid_argument("network: classes must be >= 2");
  if (!(s.dropout_p >= 0.0 && s.dropout_p < 1.0)) {
    throw std::invalid_argument("network: dropout must lie in [0, 1)");
  }
  if (s.hist.tau < 1) throw std::invalid_argument("network: tau must be >= 1");
}

template <class T>
BasicStackedNetwork<T> build_network(const NetworkSpec& s, Rng* rng) {
  validate_spec(s);
  BasicStackedNetwork<T> net;
  auto head = [&](std::size_t n) {
    return rng ? init_head<T>(n, s.classes, *rng) : zero_head<T>(n, s.classes);
  };
  std::size_t in = s.input_dim;
  for (std::size_t h : s.hidden) {
    net.layers.push_back(rng ? init_lstm<T>(in, h, *rng, s.peephole)
                             : zero_lstm<T>(in, h, s.peephole));
    in = h;
  }
  net.per_step_head = head(s.hidden.back());
  net.final_head = head(s.hidden.back());
  if (s.placement == HistPlacement::all) {
    for (std::size_t l = 0; l + 1 < s.hidden.size(); ++l) {
      net.aux_step_heads.push_back(head(s.hidden[l]));
      net.aux_hist_heads.push_back(head(s.hidden[l]));
    }
  }
  net.dropout_p = s.dropout_p;
  net.hist = s.hist;
  net.placement = s.placement;
  return net;
}

}  // namespace detail

/// Randomly initialized network (see init_lstm / init_head).
template <class T = double>
BasicStackedNetwork<T> make_network(const NetworkSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return detail::build_network<T>(spec, &rng);
}

/// All-zero network of the given shape.
template <class T = double>
BasicStackedNetwork<T> make_zero_network(const NetworkSpec& spec) {
  return detail::build_network<T>(spec, nullptr);
}

template <class T>
BasicStackedNetwork<T> zeros_like(const BasicStackedNetwork<T>& net) {
  return make_zero_network<T>(net.spec());
}

// ---------------------------------------------------------------------------
// Parameter blocks

enum class BlockKind { weight, peephole, bias };

/// Visits every parameter block in checkpoint order as
/// f(name, span, kind). Works on const and non-const networks.
template <class Net, class F>
void for_each_block(Net& net, F&& f) {
  auto head = [&](auto& h, const std::string& prefix) {
    f(prefix + ".weights", h.weights.values(), BlockKind::weight);
    f(prefix + ".bias", h.bias.values(), BlockKind::bias);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& p = net.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    auto gate = [&](auto& g, const char* name) {
      f(pre + name + ".input", g.input.values(), BlockKind::weight);
      f(pre + name + ".recurrent", g.recurrent.values(), BlockKind::weight);
      f(pre + name + ".bias", g.bias.values(), BlockKind::bias);
    };
    gate(p.input_gate, "input_gate");
    gate(p.forget_gate, "forget_gate");
    gate(p.cell_gate, "cell_gate");
    gate(p.output_gate, "output_gate");
    f(pre + "input_peephole", p.input_peephole.weights.values(), BlockKind::peephole);
    f(pre + "forget_peephole", p.forget_peephole.weights.values(), BlockKind::peephole);
    f(pre + "output_peephole", p.output_peephole.weights.values(), BlockKind::peephole);
  }
  head(net.per_step_head, "per_step_head");
  head(net.final_head, "final_head");
  for (std::size_t l = 0; l < net.aux_step_heads.size(); ++l) {
    head(net.aux_step_heads[l], "aux_step_head" + std::to_string(l));
    head(net.aux_hist_heads[l], "aux_hist_head" + std::to_string(l));
  }
}

template <class Net>
auto param_spans(Net& net) {
  using Span = decltype(net.final_head.bias.values());
  std::vector<Span> out;
  for_each_block(net, [&](const std::string&, Span s, BlockKind) { out.push_back(s); });
  return out;
}

template <class T>
std::size_t parameter_count(const BasicStackedNetwork<T>& net) {
  std::size_t n = 0;
  for (auto s : param_spans(net)) n += s.size();
  return n;
}

template <class T>
BasicVec<T> flatten(const BasicStackedNetwork<T>& net) {
  std::vector<T> out;
  for (auto s : param_spans(net)) out.insert(out.end(), s.begin(), s.end());
  return BasicVec<T>(std::move(out));
}

template <class T>
void unflatten(const BasicVec<T>& theta, BasicStackedNetwork<T>& net) {
  std::size_t pos = 0;
  for (auto s : param_spans(net)) {
    if (pos + s.size() > theta.size()) throw ShapeError("unflatten: too few values");
    std::copy_n(theta.data() + pos, s.size(), s.begin());
    pos += s.size();
  }
  if (pos != theta.size()) throw ShapeError("unflatten: too many values");
}

/// acc += g, block by block in a fixed order.
template <class T>
void add_into(BasicStackedNetwork<T>& acc, const BasicStackedNetwork<T>& g) {
  auto a = param_spans(acc);
  auto b = param_spans(g);
  if (a.size() != b.size()) throw ShapeError("add_into: structure mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw ShapeError("add_into: block size mismatch");
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  }
}

template <class T>
void scale(BasicStackedNetwork<T>& net, T factor) {
  for (auto s : param_spans(net)) {
    for (T& v : s) v *= factor;
  }
}

/// Same network with every parameter converted to another scalar type.
template <class To, class From>
BasicStackedNetwork<To> cast_network(const BasicStackedNetwork<From>& net) {
  BasicStackedNetwork<To> out = make_zero_network<To>(net.spec());
  auto dst = param_spans(out);
  auto src = param_spans(net);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] = static_cast<To>(src[i][j]);
  }
  return out;
}

/// Sum of squared weight-matrix entries (biases and peepholes excluded).
template <class T>
T weight_norm_sq(const BasicStackedNetwork<T>& net) {
  T sum = T(0);
  for_each_block(net, [&](const std::string&, std::span<const T> s, BlockKind k) {
    if (k != BlockKind::weight) return;
    for (T v : s) sum += v * v;
  });
  return sum;
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted-dropout mask: 0 with probability p, else 1/(1-p).
inline Vec dropout_mask(std::size_t n, double p, Rng& rng) {
  Vec m(n, 1.0);
  if (p <= 0.0) return m;
  const double keep = 1.0 / (1.0 - p);
  for (double& v : m) v = rng.uniform() < p ? 0.0 : keep;
  return m;
}

inline Vec apply_dropout(const Vec& h, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return h;
  Vec m = dropout_mask(h.size(), p, rng);
  for (std::size_t i = 0; i < h.size(); ++i) m[i] *= h[i];
  return m;
}

// ---------------------------------------------------------------------------
// Forward

enum class Mode { train, eval };

/// Everything one layer computed over a sequence.
template <class T>
struct BasicLayerTrace {
  std::vector<BasicVec<T>> inputs;  // as fed to the cell, after dropout
  std::vector<BasicVec<T>> dropout_masks;
  std::vector<BasicLstmState<T>> states;
  std::vector<BasicLstmStepCache<T>> caches;
  std::vector<BasicVec<T>> step_probs;  // step head on h_t, when the layer has one
  // Historical layers only:
  std::vector<BasicVec<T>> hist_states;  // l_t
  std::vector<BasicHistoricalStep<T>> hist_steps;
  std::vector<T> eps_h;       // loss of h_t used at step t
  std::vector<T> eps_l_prev;  // loss of l_{t-1} used at step t (0 at t=1)
  BasicVec<T> hist_final_probs;  // aux historical head on l_T (lower `all` layers)

  const BasicVec<T>& output(std::size_t t) const {
    return hist_states.empty() ? states[t].h : hist_states[t];
  }
};

template <class T>
struct BasicForwardTrace {
  std::vector<BasicLayerTrace<T>> layers;
  BasicVec<T> final_probs;
  Mode mode = Mode::eval;
  std::optional<std::size_t> label;

  std::size_t length() const { return layers.front().states.size(); }
  const std::vector<BasicVec<T>>& step_probs() const { return layers.back().step_probs; }
};

using LayerTrace = BasicLayerTrace<double>;
using ForwardTrace = BasicForwardTrace<double>;

/// Per-layer historical coefficients, for replaying a forward pass with the
/// branch decisions and weights held fixed.
template <class T>
using BasicHistoricalSchedule = std::vector<std::vector<BasicHistoricalStep<T>>>;
using HistoricalSchedule = BasicHistoricalSchedule<double>;

template <class T>
BasicHistoricalSchedule<T> schedule_of(const BasicForwardTrace<T>& trace) {
  BasicHistoricalSchedule<T> s;
  for (const auto& l : trace.layers) s.push_back(l.hist_steps);
  return s;
}

template <class To, class From>
BasicHistoricalSchedule<To> cast_schedule(const BasicHistoricalSchedule<From>& s) {
  BasicHistoricalSchedule<To> out(s.size());
  for (std::size_t l = 0; l < s.size(); ++l) {
    for (const auto& st : s[l]) {
      BasicHistoricalStep<To> c{st.branch, static_cast<To>(st.alpha), {}};
      for (From w : st.weights) c.weights.push_back(static_cast<To>(w));
      out[l].push_back(std::move(c));
    }
  }
  return out;
}

/// Runs the stack over one sequence.
///
/// In train mode the true label scores both states of every historical
/// layer and dropout masks derive from dropout_seed. In eval mode nothing is
/// random and losses follow the configured inference policy.
template <class T>
BasicForwardTrace<T> forward_sequence(const BasicStackedNetwork<T>& net,
                                      std::span<const BasicVec<T>> frames,
                                      std::optional<std::size_t> label, Mode mode,
                                      std::uint64_t dropout_seed = 0,
                                      const BasicHistoricalSchedule<T>* replay = nullptr) {
  using V = BasicVec<T>;
  if (frames.empty()) throw std::invalid_argument("forward_sequence: empty sequence");
  if (mode == Mode::train && !label) {
    throw std::invalid_argument("forward_sequence: training requires a label");
  }
  if (label && *label >= net.classes()) {
    throw std::out_of_range("forward_sequence: label " + std::to_string(*label) + " for " +
                            std::to_string(net.classes()) + " classes");
  }
  for (const V& x : frames) {
    if (x.size() != net.input_dim()) {
      throw ShapeError("forward_sequence: feature dim " + std::to_string(x.size()) +
                       " but network expects " + std::to_string(net.input_dim()));
    }
  }

  const bool training = mode == Mode::train;
  const std::size_t T_len = frames.size();
  Rng rng(dropout_seed);
  BasicForwardTrace<T> trace;
  trace.mode = mode;
  trace.label = label;
  trace.layers.resize(net.layers.size());

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const BasicLstmParams<T>& p = net.layers[l];
    BasicLayerTrace<T>& lt = trace.layers[l];
    const std::size_t n = p.hidden_size();

    lt.inputs.reserve(T_len);
    for (std::size_t t = 0; t < T_len; ++t) {
      const V& x = l == 0 ? frames[t] : trace.layers[l - 1].output(t);
      if (l > 0 && training && net.dropout_p > 0.0) {
        const Vec m = dropout_mask(x.size(), net.dropout_p, rng);
        V mask(x.size()), xd(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
          mask[j] = static_cast<T>(m[j]);
          xd[j] = x[j] * mask[j];
        }
        lt.inputs.push_back(std::move(xd));
        lt.dropout_masks.push_back(std::move(mask));
      } else {
        lt.inputs.push_back(x);
      }
    }

    lt.states.reserve(T_len);
    lt.caches.resize(T_len);
    BasicLstmState<T> s = BasicLstmState<T>::zeros(n);
    for (std::size_t t = 0; t < T_len; ++t) {
      s = lstm_step(p, s, lt.inputs[t], &lt.caches[t]);
      lt.states.push_back(s);
    }

    const BasicHeadParams<T>* sh = net.step_head(l);
    if (sh != nullptr) {
      for (std::size_t t = 0; t < T_len; ++t) {
        lt.step_probs.push_back(head_predict(*sh, lt.states[t].h));
      }
    }

    const BasicHeadParams<T>* hh = net.hist_head(l);
    if (hh == nullptr) continue;
    const HistoricalConfig& cfg = net.hist;
    const auto* rp = replay != nullptr && l < replay->size() && !(*replay)[l].empty()
                         ? &(*replay)[l]
                         : nullptr;
    lt.hist_steps.resize(T_len);
    BasicHistoricalTrace<T> ht;
    for (std::size_t t = 0; t < T_len; ++t) {
      const V& h = lt.states[t].h;
      T eps_h = T(0);
      BasicLossFn<T> score;
      if (training) {
        eps_h = cross_entropy(lt.step_probs[t], *label);
        score = [&](const V& v) { return step_loss(*hh, v, *label); };
      } else if (cfg.inference_policy == InferencePolicy::fixed_blend) {
        eps_h = T(1);
        if (t > 0) ht.eps_l = T(1);
        score = [](const V&) { return T(1); };
      } else {
        const std::size_t pseudo = argmax(lt.step_probs[t]);
        eps_h = cross_entropy(lt.step_probs[t], pseudo);
        if (t > 0) ht.eps_l = step_loss(*hh, ht.l, pseudo);
        score = [&, pseudo](const V& v) { return step_loss(*hh, v, pseudo); };
      }
      lt.eps_h.push_back(eps_h);
      lt.eps_l_prev.push_back(t == 0 ? T(0) : ht.eps_l);
      const BasicHistoricalStep<T>* forced = rp != nullptr && t > 0 ? &(*rp)[t] : nullptr;
      ht = historical_update(std::move(ht), h, eps_h, cfg, score, &lt.hist_steps[t], forced);
      lt.hist_states.push_back(ht.l);
    }
    if (l != net.top()) lt.hist_final_probs = head_predict(*hh, ht.l);
  }

  trace.final_probs = head_predict(net.final_head, trace.layers.back().output(T_len - 1));
  return trace;
}

template <class T>
BasicForwardTrace<T> forward_sequence(const BasicStackedNetwork<T>& net,
                                      const std::vector<BasicVec<T>>& frames,
                                      std::optional<std::size_t> label, Mode mode,
                                      std::uint64_t dropout_seed = 0,
                                      const BasicHistoricalSchedule<T>* replay = nullptr) {
  return forward_sequence(net, std::span<const BasicVec<T>>(frames), label, mode,
                          dropout_seed, replay);
}

// ---------------------------------------------------------------------------
// Objective

struct Objective {
  double lambda_aux = 0.5;
  double l2 = 0.004;
};

/// Final cross-entropy + lambda_aux * auxiliary terms + l2 * ||weights||^2.
///
/// The auxiliary terms are the mean per-step cross-entropy of every step
/// head plus, for lower `all` layers, the cross-entropy of their historical
/// head on l_T.
template <class T>
T total_loss(const BasicForwardTrace<T>& trace, std::size_t label, const Objective& obj,
             const BasicStackedNetwork<T>& net) {
  T loss = cross_entropy(trace.final_probs, label);
  T aux = T(0);
  for (const auto& lt : trace.layers) {
    if (!lt.step_probs.empty()) {
      T s = T(0);
      for (const auto& p : lt.step_probs) s += cross_entropy(p, label);
      aux += s / static_cast<T>(lt.step_probs.size());
    }
    if (!lt.hist_final_probs.empty()) aux += cross_entropy(lt.hist_final_probs, label);
  }
  loss += static_cast<T>(obj.lambda_aux) * aux;
  if (obj.l2 != 0.0) loss += static_cast<T>(obj.l2) * weight_norm_sq(net);
  return loss;
}

// ---------------------------------------------------------------------------
// Backward

namespace detail {

/// scale * (p - onehot(label)), or zero where the loss sits on its floor.
template <class T>
BasicVec<T> ce_logit_grad(const BasicVec<T>& p, std::size_t label, T scale) {
  BasicVec<T> g(p.size());
  if (cross_entropy_floored(p, label)) return g;
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = scale * p[i];
  g[label] -= scale;
  return g;
}

template <class T>
void head_backward(const BasicHeadParams<T>& head, const BasicVec<T>& input,
                   const BasicVec<T>& g, BasicHeadParams<T>& grad, BasicVec<T>& d_input) {
  outer_acc(g.values(), input.values(), grad.weights);
  for (std::size_t i = 0; i < g.size(); ++i) grad.bias[i] += g[i];
  matvec_t_acc(head.weights, g.values(), d_input.values());
}

/// Routes d/dl_t to the responses through the recorded coefficients.
template <class T>
std::vector<BasicVec<T>> historical_backward(const std::vector<BasicHistoricalStep<T>>& steps,
                                             std::vector<BasicVec<T>> dl) {
  const std::size_t len = steps.size();
  const std::size_t n = dl.front().size();
  std::vector<BasicVec<T>> dh(len, BasicVec<T>(n));
  for (std::size_t t = len; t-- > 0;) {
    const BasicHistoricalStep<T>& s = steps[t];
    const BasicVec<T>& g = dl[t];
    switch (s.branch) {
      case Branch::initial:
        for (std::size_t j = 0; j < n; ++j) dh[t][j] += g[j];
        break;
      case Branch::blend:
        for (std::size_t j = 0; j < n; ++j) {
          dh[t][j] += s.alpha * g[j];
          dl[t - 1][j] += (T(1) - s.alpha) * g[j];
        }
        break;
      case Branch::truncate:
        for (std::size_t k = 0; k <= t; ++k) {
          const T w = s.weights[k];
          if (w == T(0)) continue;
          for (std::size_t j = 0; j < n; ++j) dh[k][j] += w * g[j];
        }
        break;
    }
  }
  return dh;
}

}  // namespace detail

/// Gradient of total_loss with respect to every parameter.
///
/// Historical coefficients (blend weights, truncation windows and branch
/// choices) are constants: gradient flows only through the linear
/// combinations of responses and states. Dropout masks come from the trace.
template <class T>
BasicStackedNetwork<T> backward_sequence(const BasicStackedNetwork<T>& net,
                                         const BasicForwardTrace<T>& trace, std::size_t label,
                                         const Objective& obj) {
  using V = BasicVec<T>;
  if (trace.layers.size() != net.layers.size()) {
    throw ShapeError("backward_sequence: trace has " + std::to_string(trace.layers.size()) +
                     " layers, network " + std::to_string(net.layers.size()));
  }
  BasicStackedNetwork<T> grad = zeros_like(net);
  const std::size_t len = trace.length();
  const std::size_t top = net.top();

  // Gradient with respect to each layer's output sequence.
  std::vector<V> dout(len, V(net.layers[top].hidden_size()));
  {
    const V g = detail::ce_logit_grad(trace.final_probs, label, T(1));
    detail::head_backward(net.final_head, trace.layers[top].output(len - 1), g,
                          grad.final_head, dout[len - 1]);
  }

  const T aux_scale = static_cast<T>(obj.lambda_aux);
  const T step_scale = aux_scale / static_cast<T>(len);
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const BasicLstmParams<T>& p = net.layers[l];
    const BasicLayerTrace<T>& lt = trace.layers[l];
    const std::size_t n = p.hidden_size();

    std::vector<V> dh;
    if (net.historical_at(l)) {
      if (l != top) {
        const V g = detail::ce_logit_grad(lt.hist_final_probs, label, aux_scale);
        detail::head_backward(net.aux_hist_heads[l], lt.hist_states[len - 1], g,
                              grad.aux_hist_heads[l], dout[len - 1]);
      }
      dh = detail::historical_backward(lt.hist_steps, std::move(dout));
    } else {
      dh = std::move(dout);
    }

    if (const BasicHeadParams<T>* sh = net.step_head(l); sh != nullptr) {
      BasicHeadParams<T>& gh = l == top ? grad.per_step_head : grad.aux_step_heads[l];
      for (std::size_t t = 0; t < len; ++t) {
        const V g = detail::ce_logit_grad(lt.step_probs[t], label, step_scale);
        detail::head_backward(*sh, lt.states[t].h, g, gh, dh[t]);
      }
    }

    std::vector<V> dbelow(l > 0 ? len : 0);
    const BasicLstmState<T> zero = BasicLstmState<T>::zeros(n);
    V dh_next(n), dc_next(n);
    for (std::size_t t = len; t-- > 0;) {
      V dht = dh[t];
      for (std::size_t j = 0; j < n; ++j) dht[j] += dh_next[j];
      V dx(p.input_size());
      BasicLstmState<T> dprev =
          lstm_step_backward(p, t > 0 ? lt.states[t - 1] : zero, lt.inputs[t], lt.states[t],
                             lt.caches[t], dht, dc_next, grad.layers[l], dx);
      dh_next = std::move(dprev.h);
      dc_next = std::move(dprev.c);
      if (l > 0) {
        if (!lt.dropout_masks.empty()) {
          for (std::size_t j = 0; j < dx.size(); ++j) dx[j] *= lt.dropout_masks[t][j];
        }
        dbelow[t] = std::move(dx);
      }
    }
    dout = std::move(dbelow);
  }

  if (obj.l2 != 0.0) {
    const T two_l2 = T(2) * static_cast<T>(obj.l2);
    auto gs = param_spans(grad);
    auto ps = param_spans(net);
    std::size_t i = 0;
    for_each_block(net, [&](const std::string&, std::span<const T>, BlockKind k) {
      if (k == BlockKind::weight) {
        for (std::size_t j = 0; j < gs[i].size(); ++j) gs[i][j] += two_l2 * ps[i][j];
      }
      ++i;
    });
  }
  return grad;
}

}  // namespace hlstm
