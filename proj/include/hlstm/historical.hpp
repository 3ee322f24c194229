// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hlstm/cells.hpp"
#include "hlstm/numerics.hpp"

namespace hlstm {

/// Which past responses survive an error truncation.
///   sliding: the last min(tau, t) responses.
///   literal: every response after absolute index tau.
enum class WindowMode { sliding, literal };

/// How the blend weight on the new response is derived from the two losses.
///   literal:      0.5 * ln(eps_l / eps_h)
///   clamped:      the literal value clipped to [0, 1]
///   inverse_loss: eps_l / (eps_l + eps_h)
enum class AlphaPolicy { literal, clamped, inverse_loss };

/// How losses are scored when no label is available.
enum class InferencePolicy { pseudo_label, fixed_blend };

struct HistoricalConfig {
  std::size_t tau = 3;
  WindowMode window_mode = WindowMode::sliding;
  AlphaPolicy alpha_policy = AlphaPolicy::clamped;
  InferencePolicy inference_policy = InferencePolicy::pseudo_label;

  friend bool operator==(const HistoricalConfig&,
                         const HistoricalConfig&) = default;
};

/// Raised for a literal-mode truncation window that would be empty.
class DegenerateWindow : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Branch { initial, blend, truncate };

/// Coefficients one historical update used. l_t is linear in the responses
/// and l_{t-1} with these (constant) coefficients.
template <class T>
struct BasicHistoricalStep {
  Branch branch = Branch::initial;
  T alpha = T(0);          // blend only
  std::vector<T> weights;  // truncate only; weights[k] scales h_{k+1}
};

/// Running historical state of one sequence.
template <class T>
struct BasicHistoricalTrace {
  BasicVec<T> l;
  std::vector<BasicVec<T>> h_buffer;
  T eps_l = T(0);

  std::size_t timestep() const noexcept { return h_buffer.size(); }
};

using HistoricalStep = BasicHistoricalStep<double>;
using HistoricalTrace = BasicHistoricalTrace<double>;

template <class T>
using BasicLossFn = std::function<T(const BasicVec<T>&)>;
using LossFn = BasicLossFn<double>;

template <class T>
T compute_alpha(T eps_l_prev, T eps_h, AlphaPolicy policy) {
  if (!(eps_l_prev > T(0)) || !(eps_h > T(0))) {
    throw std::domain_error("compute_alpha: losses must be positive (got " +
                            std::to_string(static_cast<double>(eps_l_prev)) + ", " +
                            std::to_string(static_cast<double>(eps_h)) + ")");
  }
  switch (policy) {
    case AlphaPolicy::literal:
      return T(0.5) * std::log(eps_l_prev / eps_h);
    case AlphaPolicy::clamped:
      return std::clamp(T(0.5) * std::log(eps_l_prev / eps_h), T(0), T(1));
    case AlphaPolicy::inverse_loss:
      return eps_l_prev / (eps_l_prev + eps_h);
  }
  throw std::logic_error("compute_alpha: unknown policy");
}

/// Weights over h_1..h_t used by error truncation. Throws DegenerateWindow
/// for a literal window with t <= tau.
template <class T = double>
std::vector<T> truncation_weights(std::size_t t, std::size_t tau, WindowMode mode) {
  if (t == 0) throw std::invalid_argument("truncation_weights: t must be >= 1");
  if (tau == 0) throw std::invalid_argument("truncation_weights: tau must be >= 1");
  std::vector<T> w(t, T(0));
  if (mode == WindowMode::literal) {
    if (t <= tau) {
      throw DegenerateWindow("truncation_weights: literal window empty at t=" +
                             std::to_string(t) + ", tau=" + std::to_string(tau));
    }
    const T v = T(1) / static_cast<T>(t - tau);
    for (std::size_t k = tau; k < t; ++k) w[k] = v;
    return w;
  }
  const std::size_t span = std::min(tau, t);
  const T v = T(1) / static_cast<T>(span);
  for (std::size_t k = t - span; k < t; ++k) w[k] = v;
  return w;
}

/// truncation_weights with the literal-mode fallback to the sliding rule.
template <class T = double>
std::vector<T> resolved_truncation_weights(std::size_t t, std::size_t tau, WindowMode mode) {
  if (mode == WindowMode::literal && t <= tau) mode = WindowMode::sliding;
  return truncation_weights<T>(t, tau, mode);
}

template <class T>
T step_loss(const BasicHeadParams<T>& head, const BasicVec<T>& state, std::size_t label) {
  return cross_entropy(head_predict(head, state), label);
}

/// Trace at t = 1: the historical state starts as the first response.
template <class T>
BasicHistoricalTrace<T> historical_start(const BasicVec<T>& h1,
                                         const std::type_identity_t<BasicLossFn<T>>& score_l,
                                         BasicHistoricalStep<T>* record = nullptr) {
  BasicHistoricalTrace<T> trace{h1, {h1}, score_l(h1)};
  if (record != nullptr) *record = BasicHistoricalStep<T>{};
  return trace;
}

/// sum_k w_k h_k, accumulated in ascending k over the whole buffer.
template <class T>
BasicVec<T> weighted_response_sum(const std::vector<BasicVec<T>>& buffer,
                                  const std::vector<T>& weights) {
  const std::size_t n = buffer.front().size();
  BasicVec<T> l(n);
  for (std::size_t k = 0; k < buffer.size(); ++k) {
    const T w = weights[k];
    const BasicVec<T>& h = buffer[k];
    for (std::size_t j = 0; j < n; ++j) l[j] += w * h[j];
  }
  return l;
}

/// One historical-layer step.
///
/// eps_h scores h_t, trace.eps_l scores l_{t-1}. When the historical state
/// is no worse (eps_h >= eps_l) it blends toward h_t; otherwise it is
/// rebuilt from recent responses. score_l rescores the new state.
///
/// A non-null replay forces the branch and coefficients of an earlier run;
/// record receives the ones used.
template <class T>
BasicHistoricalTrace<T> historical_update(BasicHistoricalTrace<T> trace, const BasicVec<T>& h_t,
                                          std::type_identity_t<T> eps_h,
                                          const HistoricalConfig& cfg,
                                          const std::type_identity_t<BasicLossFn<T>>& score_l,
                                          BasicHistoricalStep<T>* record = nullptr,
                                          const BasicHistoricalStep<T>* replay = nullptr) {
  if (trace.h_buffer.empty()) return historical_start(h_t, score_l, record);
  if (h_t.size() != trace.l.size()) {
    throw ShapeError("historical_update: response " + shape_str(h_t) + " for state " +
                     shape_str(trace.l));
  }
  trace.h_buffer.push_back(h_t);
  const std::size_t t = trace.h_buffer.size();

  BasicHistoricalStep<T> step;
  if (replay != nullptr) {
    step = *replay;
  } else if (eps_h >= trace.eps_l) {
    step.branch = Branch::blend;
    step.alpha = compute_alpha(trace.eps_l, eps_h, cfg.alpha_policy);
  } else {
    step.branch = Branch::truncate;
    step.weights = resolved_truncation_weights<T>(t, cfg.tau, cfg.window_mode);
  }

  if (step.branch == Branch::blend) {
    const T a = step.alpha;
    for (std::size_t j = 0; j < h_t.size(); ++j) {
      trace.l[j] = a * h_t[j] + (T(1) - a) * trace.l[j];
    }
  } else if (step.branch == Branch::truncate) {
    if (step.weights.size() != t) {
      throw ShapeError("historical_update: replayed window of " +
                       std::to_string(step.weights.size()) + " at t=" + std::to_string(t));
    }
    trace.l = weighted_response_sum(trace.h_buffer, step.weights);
  } else {
    throw std::logic_error("historical_update: initial step replayed at t>1");
  }

  trace.eps_l = score_l(trace.l);
  if (record != nullptr) *record = std::move(step);
  return trace;
}

/// Label-free losses (eps_h, eps_l) for h_t and l_{t-1}.
///
/// pseudo_label scores both states against the per-step head's prediction
/// for h_t. fixed_blend reports equal losses, which always selects the
/// blend branch.
template <class T>
std::pair<T, T> inference_losses(const BasicHeadParams<T>& per_step_head,
                                 const BasicHeadParams<T>& final_head, const BasicVec<T>& h_t,
                                 const BasicVec<T>& l_prev, InferencePolicy policy) {
  if (policy == InferencePolicy::fixed_blend) return {T(1), T(1)};
  const BasicVec<T> p = head_predict(per_step_head, h_t);
  const std::size_t label = argmax(p);
  return {cross_entropy(p, label), step_loss(final_head, l_prev, label)};
}

}  // namespace hlstm
