// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hlstm/network.hpp"
#include "hlstm/numerics.hpp"
#include "hlstm/random.hpp"

namespace hlstm {

/// Which branch of the historical update a fixture biases its heads toward.
enum class ForcedBranch { blend, truncate };

struct GradCheckSpec {
  std::size_t input_dim = 4;
  std::vector<std::size_t> hidden = {3, 3};
  std::size_t classes = 3;
  std::vector<std::size_t> lengths = {1, 3, 6};
  std::size_t seeds = 20;
  std::uint64_t first_seed = 1;
  std::size_t tau = 2;
  PeepholeKind peephole = PeepholeKind::diag;
  HistPlacement placement = HistPlacement::top;
  std::vector<AlphaPolicy> alpha_policies = {AlphaPolicy::literal, AlphaPolicy::clamped,
                                             AlphaPolicy::inverse_loss};
  std::vector<WindowMode> window_modes = {WindowMode::sliding, WindowMode::literal};
  std::vector<ForcedBranch> branches = {ForcedBranch::blend, ForcedBranch::truncate};
  Objective objective{0.5, 0.004};
  double step = 1e-5;
  /// Check only the L2 penalty, whose central difference is exact up to
  /// rounding. Exercises the harness without any nonlinearity.
  bool penalty_only = false;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(StackedNetwork&)> corrupt;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::uint64_t worst_seed = 0;
  std::size_t cases = 0;
  std::size_t blend_steps = 0;
  std::size_t truncate_steps = 0;

  bool passed(double tolerance = 1e-4) const { return max_rel_error < tolerance; }
};

namespace detail {

/// Biases the two heads so one branch dominates: truncation wins when the
/// per-step head favors the label and the final head disfavors it.
inline void force_branch(StackedNetwork& net, std::size_t label, ForcedBranch b) {
  const double s = b == ForcedBranch::truncate ? 1.0 : -1.0;
  net.per_step_head.bias.fill(0.0);
  net.final_head.bias.fill(0.0);
  net.per_step_head.bias[label] = 1.5 * s;
  net.final_head.bias[label] = -1.5 * s;
}

inline std::vector<std::string> block_names(const StackedNetwork& net) {
  std::vector<std::string> names;
  for_each_block(net, [&](const std::string& name, std::span<const double> s, BlockKind) {
    for (std::size_t i = 0; i < s.size(); ++i) names.push_back(name);
  });
  return names;
}

using LVec = BasicVec<long double>;
using LNetwork = BasicStackedNetwork<long double>;

inline void compare(const Vec& analytic, const LVec& numeric,
                    const std::vector<std::string>& names, std::uint64_t seed,
                    GradCheckReport& report) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double n = static_cast<double>(numeric[i]);
    const double e = relative_error(analytic[i], n);
    if (e > report.max_rel_error) {
      report.max_rel_error = e;
      report.worst_block = names[i];
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = n;
      report.worst_seed = seed;
    }
  }
}

}  // namespace detail

/// Compares backward_sequence against central differences of total_loss on
/// random tiny networks. The numeric side replays the historical
/// coefficients of the analytic forward pass, matching the stop-gradient
/// convention, and runs in long double so that rounding stays well below the
/// truncation error of the difference. Dropout is disabled.
inline GradCheckReport grad_check(const GradCheckSpec& spec) {
  GradCheckReport report;

  if (spec.penalty_only) {
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      const std::uint64_t seed = spec.first_seed + s;
      NetworkSpec ns{spec.input_dim, spec.hidden, spec.classes, spec.peephole, 0.0, {},
                     spec.placement};
      const StackedNetwork net = make_network(ns, seed);
      const double l2 = spec.objective.l2 == 0.0 ? 1.0 : spec.objective.l2;
      StackedNetwork g = zeros_like(net);
      {
        auto gs = param_spans(g);
        auto ps = param_spans(net);
        std::size_t i = 0;
        for_each_block(net, [&](const std::string&, std::span<const double>, BlockKind k) {
          if (k == BlockKind::weight) {
            for (std::size_t j = 0; j < ps[i].size(); ++j) gs[i][j] = 2.0 * l2 * ps[i][j];
          }
          ++i;
        });
      }
      if (spec.corrupt) spec.corrupt(g);
      const detail::LNetwork lnet = cast_network<long double>(net);
      detail::LNetwork probe = lnet;
      const auto f = [&](const detail::LVec& theta) {
        unflatten(theta, probe);
        return static_cast<long double>(l2) * weight_norm_sq(probe);
      };
      detail::compare(flatten(g), finite_diff(f, flatten(lnet), spec.step),
                      detail::block_names(net), seed, report);
      ++report.cases;
    }
    return report;
  }

  for (std::size_t s = 0; s < spec.seeds; ++s) {
    const std::uint64_t seed = spec.first_seed + s;
    for (std::size_t T : spec.lengths) {
      for (AlphaPolicy ap : spec.alpha_policies) {
        for (WindowMode wm : spec.window_modes) {
          for (ForcedBranch fb : spec.branches) {
            HistoricalConfig hc{spec.tau, wm, ap, InferencePolicy::pseudo_label};
            NetworkSpec ns{spec.input_dim, spec.hidden, spec.classes, spec.peephole, 0.0, hc,
                           spec.placement};
            const std::uint64_t case_seed = mix_seed(seed, T * 131 + static_cast<int>(ap) * 7 +
                                                               static_cast<int>(wm) * 3 +
                                                               static_cast<int>(fb));
            StackedNetwork net = make_network(ns, case_seed);
            Rng rng(mix_seed(case_seed, 1));
            std::vector<Vec> frames(T, Vec(spec.input_dim));
            for (Vec& x : frames) {
              for (double& v : x) v = rng.normal();
            }
            const std::size_t label = rng.below(spec.classes);
            detail::force_branch(net, label, fb);

            const ForwardTrace tr = forward_sequence(net, frames, label, Mode::train);
            for (const auto& lt : tr.layers) {
              for (const auto& st : lt.hist_steps) {
                if (st.branch == Branch::blend) ++report.blend_steps;
                if (st.branch == Branch::truncate) ++report.truncate_steps;
              }
            }
            StackedNetwork g = backward_sequence(net, tr, label, spec.objective);
            if (spec.corrupt) spec.corrupt(g);

            const auto sched = cast_schedule<long double>(schedule_of(tr));
            std::vector<detail::LVec> lframes;
            for (const Vec& x : frames) {
              detail::LVec lx(x.size());
              for (std::size_t j = 0; j < x.size(); ++j) lx[j] = x[j];
              lframes.push_back(std::move(lx));
            }
            const detail::LNetwork lnet = cast_network<long double>(net);
            detail::LNetwork probe = lnet;
            const auto f = [&](const detail::LVec& theta) {
              unflatten(theta, probe);
              const auto t2 = forward_sequence(probe, lframes, label, Mode::train, 0, &sched);
              return total_loss(t2, label, spec.objective, probe);
            };
            detail::compare(flatten(g), finite_diff(f, flatten(lnet), spec.step),
                            detail::block_names(net), case_seed, report);
            ++report.cases;
          }
        }
      }
    }
  }
  return report;
}

}  // namespace hlstm
