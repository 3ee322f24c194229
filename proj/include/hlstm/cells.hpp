// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "hlstm/numerics.hpp"
#include "hlstm/random.hpp"

namespace hlstm {

enum class Activation { sigmoid, tanh };

/// Elman recurrence h' = g(b + W h + U x).
template <class T>
struct BasicRnnParams {
  BasicMat<T> input;      // hidden x input
  BasicMat<T> recurrent;  // hidden x hidden
  BasicVec<T> bias;
  Activation activation = Activation::tanh;
};

/// Softmax classifier over a hidden vector.
template <class T>
struct BasicHeadParams {
  BasicMat<T> weights;  // classes x hidden
  BasicVec<T> bias;     // classes

  std::size_t classes() const noexcept { return bias.size(); }
};

enum class PeepholeKind { diag, full };

/// Cell-to-gate connection: elementwise (diag, stored n x 1) or a full
/// n x n matrix.
template <class T>
struct BasicPeephole {
  PeepholeKind kind = PeepholeKind::diag;
  BasicMat<T> weights;

  static BasicPeephole zeros(std::size_t hidden, PeepholeKind kind) {
    return {kind, kind == PeepholeKind::diag ? BasicMat<T>(hidden, 1)
                                             : BasicMat<T>(hidden, hidden)};
  }

  /// out += P c
  void apply_acc(std::span<const T> c, std::span<T> out) const {
    if (kind == PeepholeKind::full) {
      matvec_acc(weights, c, out);
      return;
    }
    if (weights.rows() != c.size() || out.size() != c.size()) {
      throw ShapeError("peephole: weights " + shape_str(weights) +
                       " against cell (" + std::to_string(c.size()) + ")");
    }
    const T* p = weights.values().data();
    for (std::size_t i = 0; i < c.size(); ++i) out[i] += p[i] * c[i];
  }

  /// dP += upstream (x) c and dc += P^T upstream.
  void backward_acc(std::span<const T> upstream, std::span<const T> c,
                    BasicPeephole& grad, std::span<T> dc) const {
    if (kind == PeepholeKind::full) {
      outer_acc(upstream, c, grad.weights);
      matvec_t_acc(weights, upstream, dc);
      return;
    }
    const T* p = weights.values().data();
    T* g = grad.weights.values().data();
    for (std::size_t i = 0; i < c.size(); ++i) {
      g[i] += upstream[i] * c[i];
      dc[i] += p[i] * upstream[i];
    }
  }
};

/// Input/recurrent weights and bias feeding one gate.
template <class T>
struct BasicGateParams {
  BasicMat<T> input;      // hidden x input
  BasicMat<T> recurrent;  // hidden x hidden
  BasicVec<T> bias;
};

/// Peephole LSTM. The candidate (cell) gate carries no peephole; the output
/// gate looks at the freshly updated cell.
template <class T>
struct BasicLstmParams {
  BasicGateParams<T> input_gate;
  BasicGateParams<T> forget_gate;
  BasicGateParams<T> cell_gate;
  BasicGateParams<T> output_gate;
  BasicPeephole<T> input_peephole;
  BasicPeephole<T> forget_peephole;
  BasicPeephole<T> output_peephole;

  std::size_t hidden_size() const noexcept { return input_gate.bias.size(); }
  std::size_t input_size() const noexcept { return input_gate.input.cols(); }
};

template <class T>
struct BasicLstmState {
  BasicVec<T> h;
  BasicVec<T> c;

  static BasicLstmState zeros(std::size_t hidden) {
    return {BasicVec<T>(hidden), BasicVec<T>(hidden)};
  }
};

/// Gate activations retained from a forward step for the backward pass.
template <class T>
struct BasicLstmStepCache {
  BasicVec<T> input_gate;
  BasicVec<T> forget_gate;
  BasicVec<T> candidate;
  BasicVec<T> output_gate;
  BasicVec<T> tanh_cell;
};

using RnnParams = BasicRnnParams<double>;
using HeadParams = BasicHeadParams<double>;
using Peephole = BasicPeephole<double>;
using GateParams = BasicGateParams<double>;
using LstmParams = BasicLstmParams<double>;
using LstmState = BasicLstmState<double>;
using LstmStepCache = BasicLstmStepCache<double>;

template <class T>
BasicVec<T> rnn_step(const BasicRnnParams<T>& p, const BasicVec<T>& h_prev,
                     const BasicVec<T>& x) {
  if (p.recurrent.rows() != p.recurrent.cols() ||
      p.input.rows() != p.bias.size() || p.recurrent.rows() != p.bias.size()) {
    throw ShapeError("rnn_step: U " + shape_str(p.input) + ", W " +
                     shape_str(p.recurrent) + ", b " + shape_str(p.bias));
  }
  BasicVec<T> z = affine(p.input, x, p.bias);
  matvec_acc(p.recurrent, h_prev.values(), z.values());
  for (T& v : z) {
    v = p.activation == Activation::tanh ? std::tanh(v) : sigmoid(v);
  }
  return z;
}

/// softmax(bias + weights * h)
template <class T>
BasicVec<T> head_predict(const BasicHeadParams<T>& head, const BasicVec<T>& h) {
  return softmax(affine(head.weights, h, head.bias));
}

namespace detail {

template <class T>
void gate_preactivation(const BasicGateParams<T>& g, const BasicVec<T>& x,
                        const BasicVec<T>& h_prev, BasicVec<T>& out) {
  out = g.bias;
  matvec_acc(g.input, x.values(), out.values());
  matvec_acc(g.recurrent, h_prev.values(), out.values());
}

template <class T>
void check_lstm_shapes(const BasicLstmParams<T>& p, const BasicLstmState<T>& s,
                       const BasicVec<T>& x) {
  const std::size_t n = p.hidden_size();
  if (s.h.size() != n || s.c.size() != n) {
    throw ShapeError("lstm_step: state (" + std::to_string(s.h.size()) + "," +
                     std::to_string(s.c.size()) + ") for hidden size " +
                     std::to_string(n));
  }
  if (x.size() != p.input_size()) {
    throw ShapeError("lstm_step: input " + shape_str(x) + " for U " +
                     shape_str(p.input_gate.input));
  }
}

}  // namespace detail

template <class T>
BasicLstmState<T> lstm_step(const BasicLstmParams<T>& p, const BasicLstmState<T>& prev,
                            const BasicVec<T>& x, BasicLstmStepCache<T>* cache = nullptr) {
  detail::check_lstm_shapes(p, prev, x);
  const std::size_t n = p.hidden_size();

  BasicVec<T> i, f, g, o;
  detail::gate_preactivation(p.input_gate, x, prev.h, i);
  p.input_peephole.apply_acc(prev.c.values(), i.values());
  detail::gate_preactivation(p.forget_gate, x, prev.h, f);
  p.forget_peephole.apply_acc(prev.c.values(), f.values());
  detail::gate_preactivation(p.cell_gate, x, prev.h, g);

  BasicLstmState<T> next{BasicVec<T>(n), BasicVec<T>(n)};
  for (std::size_t k = 0; k < n; ++k) {
    i[k] = sigmoid(i[k]);
    f[k] = sigmoid(f[k]);
    g[k] = std::tanh(g[k]);
    next.c[k] = f[k] * prev.c[k] + i[k] * g[k];
  }

  detail::gate_preactivation(p.output_gate, x, prev.h, o);
  p.output_peephole.apply_acc(next.c.values(), o.values());
  BasicVec<T> tc(n);
  for (std::size_t k = 0; k < n; ++k) {
    o[k] = sigmoid(o[k]);
    tc[k] = std::tanh(next.c[k]);
    next.h[k] = o[k] * tc[k];
  }

  if (cache != nullptr) {
    cache->input_gate = std::move(i);
    cache->forget_gate = std::move(f);
    cache->candidate = std::move(g);
    cache->output_gate = std::move(o);
    cache->tanh_cell = std::move(tc);
  }
  return next;
}

/// Backward through one lstm_step.
///
/// dh and dc_in are the total gradients arriving at this step's outputs
/// (from above and from step t+1). Parameter gradients accumulate into
/// grad, the input gradient into dx; returns d/dh_prev and d/dc_prev.
template <class T>
BasicLstmState<T> lstm_step_backward(const BasicLstmParams<T>& p,
                                     const BasicLstmState<T>& prev, const BasicVec<T>& x,
                                     const BasicLstmState<T>& out,
                                     const BasicLstmStepCache<T>& cache,
                                     const BasicVec<T>& dh, const BasicVec<T>& dc_in,
                                     BasicLstmParams<T>& grad, BasicVec<T>& dx) {
  const std::size_t n = p.hidden_size();
  const BasicVec<T>& ig = cache.input_gate;
  const BasicVec<T>& fg = cache.forget_gate;
  const BasicVec<T>& cand = cache.candidate;
  const BasicVec<T>& og = cache.output_gate;
  const BasicVec<T>& tc = cache.tanh_cell;

  BasicVec<T> da_o(n), dc(n);
  for (std::size_t k = 0; k < n; ++k) {
    da_o[k] = dh[k] * tc[k] * og[k] * (T(1) - og[k]);
    dc[k] = dh[k] * og[k] * (T(1) - tc[k] * tc[k]) + dc_in[k];
  }
  p.output_peephole.backward_acc(std::span<const T>(da_o.values()), out.c.values(),
                                 grad.output_peephole, dc.values());

  BasicVec<T> da_i(n), da_f(n), da_g(n);
  BasicLstmState<T> dprev = BasicLstmState<T>::zeros(n);
  for (std::size_t k = 0; k < n; ++k) {
    da_i[k] = dc[k] * cand[k] * ig[k] * (T(1) - ig[k]);
    da_f[k] = dc[k] * prev.c[k] * fg[k] * (T(1) - fg[k]);
    da_g[k] = dc[k] * ig[k] * (T(1) - cand[k] * cand[k]);
    dprev.c[k] = dc[k] * fg[k];
  }
  p.input_peephole.backward_acc(std::span<const T>(da_i.values()), prev.c.values(),
                                grad.input_peephole, dprev.c.values());
  p.forget_peephole.backward_acc(std::span<const T>(da_f.values()), prev.c.values(),
                                 grad.forget_peephole, dprev.c.values());

  auto gate_back = [&](const BasicGateParams<T>& gp, BasicGateParams<T>& gg,
                       const BasicVec<T>& da) {
    outer_acc(da.values(), x.values(), gg.input);
    outer_acc(da.values(), prev.h.values(), gg.recurrent);
    for (std::size_t k = 0; k < n; ++k) gg.bias[k] += da[k];
    matvec_t_acc(gp.input, da.values(), dx.values());
    matvec_t_acc(gp.recurrent, da.values(), dprev.h.values());
  };
  gate_back(p.input_gate, grad.input_gate, da_i);
  gate_back(p.forget_gate, grad.forget_gate, da_f);
  gate_back(p.cell_gate, grad.cell_gate, da_g);
  gate_back(p.output_gate, grad.output_gate, da_o);
  return dprev;
}

// ---------------------------------------------------------------------------
// Construction

template <class T = double>
BasicGateParams<T> zero_gate(std::size_t input, std::size_t hidden) {
  return {BasicMat<T>(hidden, input), BasicMat<T>(hidden, hidden), BasicVec<T>(hidden)};
}

template <class T = double>
BasicLstmParams<T> zero_lstm(std::size_t input, std::size_t hidden,
                             PeepholeKind peephole = PeepholeKind::diag) {
  return {zero_gate<T>(input, hidden),
          zero_gate<T>(input, hidden),
          zero_gate<T>(input, hidden),
          zero_gate<T>(input, hidden),
          BasicPeephole<T>::zeros(hidden, peephole),
          BasicPeephole<T>::zeros(hidden, peephole),
          BasicPeephole<T>::zeros(hidden, peephole)};
}

template <class T = double>
BasicHeadParams<T> zero_head(std::size_t hidden, std::size_t classes) {
  return {BasicMat<T>(classes, hidden), BasicVec<T>(classes)};
}

namespace detail {

template <class T>
void fill_uniform(std::span<T> v, double k, Rng& rng) {
  for (T& x : v) x = static_cast<T>(rng.uniform(-k, k));
}

inline double fan_in_bound(std::size_t fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

}  // namespace detail

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); forget bias 1, other
/// biases 0. Peepholes use the recurrent fan-in.
template <class T = double>
BasicLstmParams<T> init_lstm(std::size_t input, std::size_t hidden, Rng& rng,
                             PeepholeKind peephole = PeepholeKind::diag) {
  BasicLstmParams<T> p = zero_lstm<T>(input, hidden, peephole);
  const double ku = detail::fan_in_bound(input);
  const double kw = detail::fan_in_bound(hidden);
  for (BasicGateParams<T>* g :
       {&p.input_gate, &p.forget_gate, &p.cell_gate, &p.output_gate}) {
    detail::fill_uniform(g->input.values(), ku, rng);
    detail::fill_uniform(g->recurrent.values(), kw, rng);
  }
  for (BasicPeephole<T>* ph : {&p.input_peephole, &p.forget_peephole, &p.output_peephole}) {
    detail::fill_uniform(ph->weights.values(), kw, rng);
  }
  p.forget_gate.bias.fill(T(1));
  return p;
}

template <class T = double>
BasicHeadParams<T> init_head(std::size_t hidden, std::size_t classes, Rng& rng) {
  BasicHeadParams<T> h = zero_head<T>(hidden, classes);
  detail::fill_uniform(h.weights.values(), detail::fan_in_bound(hidden), rng);
  return h;
}

}  // namespace hlstm
