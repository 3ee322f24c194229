// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlstm/network.hpp"
#include "hlstm/numerics.hpp"

namespace hlstm {

struct ScheduleConfig {
  double lr0 = 0.001;
  double decay_base = 0.96;
  std::uint64_t decay_every = 100000;
};

/// Staircase decay: lr0 * decay_base^floor(step / decay_every).
inline double lr_schedule(std::uint64_t step, const ScheduleConfig& cfg) {
  if (cfg.decay_every == 0) throw std::invalid_argument("lr_schedule: decay_every must be > 0");
  const std::uint64_t k = step / cfg.decay_every;
  double lr = cfg.lr0;
  for (std::uint64_t i = 0; i < k; ++i) lr *= cfg.decay_base;
  return lr;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n), std::vector<double>(n), 0}; }
};

/// One bias-corrected Adam update of params in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(state.m.size()) +
                     " moments");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

/// Adam over every parameter block of a network, in block order.
inline void adam_step(StackedNetwork& net, const StackedNetwork& grad, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
  auto ps = param_spans(net);
  auto gs = param_spans(grad);
  if (ps.size() != gs.size()) throw ShapeError("adam_step: gradient structure mismatch");
  std::vector<double> flat_g;
  std::vector<double> flat_p;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].size() != gs[i].size()) throw ShapeError("adam_step: block size mismatch");
    flat_p.insert(flat_p.end(), ps[i].begin(), ps[i].end());
    flat_g.insert(flat_g.end(), gs[i].begin(), gs[i].end());
  }
  if (state.m.empty() && state.step == 0) state = AdamState::zeros(flat_p.size());
  adam_step(std::span<double>(flat_p), flat_g, state, lr, cfg);
  std::size_t pos = 0;
  for (auto s : ps) {
    for (double& v : s) v = flat_p[pos++];
  }
}

}  // namespace hlstm
