// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlstm/dataio.hpp"
#include "hlstm/network.hpp"
#include "hlstm/optim.hpp"
#include "hlstm/random.hpp"

namespace hlstm {

struct TrainConfig {
  ScheduleConfig schedule;
  AdamConfig adam;
  double l2 = 0.004;
  double lambda_aux = 0.5;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  /// Shape and historical settings; input_dim and classes come from the data.
  NetworkSpec model;

  Objective objective() const { return {lambda_aux, l2}; }
};

struct CurvePoint {
  std::uint64_t step = 0;  // optimizer steps completed
  double lr = 0.0;         // rate used by the last step
  double loss = 0.0;       // mean training objective over the epoch
  double accuracy = 0.0;   // training-mode accuracy over the epoch
};

struct Metrics {
  double accuracy = 0.0;
  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> fold_accuracies;
  std::vector<CurvePoint> curve;
};

/// Non-finite objective or gradient during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Folds

struct FoldAssignment {
  std::vector<std::size_t> fold;  // fold index per sample
  std::size_t k = 0;
  bool stratified = true;
  std::string warning;

  std::vector<std::size_t> members(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i) {
      if (fold[i] == f) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> complement(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i) {
      if (fold[i] != f) out.push_back(i);
    }
    return out;
  }
};

/// Stratified k-fold split. Each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
/// Falls back to an unstratified deal (with a warning) when some class has
/// fewer than k members.
inline FoldAssignment kfold_split(const std::vector<std::size_t>& labels, std::size_t k,
                                  std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (labels.size() < k) {
    throw std::invalid_argument("kfold_split: " + std::to_string(labels.size()) +
                                " samples for " + std::to_string(k) + " folds");
  }
  Rng rng(mix_seed(seed, 0xf01d));
  FoldAssignment out;
  out.k = k;
  out.fold.assign(labels.size(), 0);

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [c, idx] : by_class) {
    if (idx.size() < k) {
      out.stratified = false;
      out.warning = "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                    " samples, fewer than " + std::to_string(k) +
                    " folds; using an unstratified split";
      break;
    }
  }

  std::size_t next = 0;
  if (out.stratified) {
    for (auto& [c, idx] : by_class) {
      rng.shuffle(idx);
      for (std::size_t i : idx) out.fold[i] = next++ % k;
    }
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    for (std::size_t i : all) out.fold[i] = next++ % k;
  }
  return out;
}

/// Folds declared in a manifest, if every record has one.
inline std::optional<FoldAssignment> manifest_folds(const Dataset& ds) {
  if (ds.folds.size() != ds.size() || ds.folds.empty()) return std::nullopt;
  FoldAssignment out;
  for (const auto& f : ds.folds) {
    if (!f) return std::nullopt;
    out.fold.push_back(*f);
    out.k = std::max(out.k, *f + 1);
  }
  for (std::size_t f = 0; f < out.k; ++f) {
    if (out.members(f).empty()) {
      throw DataError("manifest folds: fold " + std::to_string(f) + " has no records");
    }
  }
  if (out.k < 2) throw DataError("manifest folds: need at least 2 folds");
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

inline void require_dims(const StackedNetwork& net, const Dataset& ds) {
  if (ds.dim != net.input_dim()) {
    throw ShapeError("feature dim " + std::to_string(ds.dim) + " but model expects " +
                     std::to_string(net.input_dim()));
  }
  if (ds.classes > net.classes()) {
    throw ShapeError("dataset has " + std::to_string(ds.classes) + " classes but model has " +
                     std::to_string(net.classes()));
  }
}

inline std::size_t predict(const StackedNetwork& net, const FeatureSequence& seq) {
  return argmax(forward_sequence(net, seq.frames, std::nullopt, Mode::eval).final_probs);
}

/// Evaluation-mode accuracy and confusion matrix.
inline Metrics evaluate(const StackedNetwork& net, const Dataset& ds) {
  require_dims(net, ds);
  Metrics m;
  const std::size_t c = net.classes();
  m.confusion.assign(c, std::vector<std::size_t>(c, 0));
  std::size_t correct = 0;
  for (const auto& s : ds.sequences) {
    const std::size_t p = predict(net, s);
    ++m.confusion[s.label][p];
    correct += p == s.label;
  }
  m.total = ds.size();
  m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(m.total);
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  StackedNetwork model;
  Metrics metrics;
};

namespace detail {

/// Name and value of the parameter with the largest magnitude.
inline std::string largest_block(const StackedNetwork& net) {
  std::string name;
  double best = -1.0;
  for_each_block(net, [&](const std::string& n, std::span<const double> s, BlockKind) {
    for (double v : s) {
      if (std::abs(v) > best) {
        best = std::abs(v);
        name = n;
      }
    }
  });
  std::ostringstream out;
  out << name << " (|value| " << best << ")";
  return out.str();
}

inline std::string first_nonfinite_block(const StackedNetwork& g) {
  std::string name;
  for_each_block(g, [&](const std::string& n, std::span<const double> s, BlockKind) {
    if (!name.empty()) return;
    for (double v : s) {
      if (!std::isfinite(v)) {
        name = n;
        return;
      }
    }
  });
  return name;
}

}  // namespace detail

inline NetworkSpec resolve_spec(const TrainConfig& cfg, const Dataset& ds) {
  NetworkSpec s = cfg.model;
  s.input_dim = ds.dim;
  s.classes = ds.classes;
  return s;
}

/// The network train() starts from.
inline StackedNetwork initial_network(const Dataset& ds, const TrainConfig& cfg) {
  return make_network(resolve_spec(cfg, ds), mix_seed(cfg.seed, 0x1417));
}

/// Mini-batch Adam on the mean per-sequence gradient.
///
/// Every epoch reshuffles the sample order; dropout masks are seeded per
/// (step, position in batch). on_epoch, if set, sees each curve point as it
/// is recorded.
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                         const std::function<void(const CurvePoint&)>& on_epoch = {}) {
  if (ds.sequences.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(cfg.schedule.lr0 > 0.0) || !(cfg.schedule.decay_base > 0.0)) {
    throw std::invalid_argument("train: learning rate and decay base must be positive");
  }
  for (const auto& s : ds.sequences) {
    if (s.dim() != ds.dim) {
      throw ShapeError("train: sequence " + s.id + " has dim " + std::to_string(s.dim()) +
                       ", dataset " + std::to_string(ds.dim));
    }
  }

  TrainResult out;
  out.model = initial_network(ds, cfg);
  StackedNetwork& net = out.model;
  const Objective obj = cfg.objective();
  AdamState adam = AdamState::zeros(parameter_count(net));
  Rng order_rng(mix_seed(cfg.seed, 0x0bde));
  const std::uint64_t dropout_base = mix_seed(cfg.seed, 0xd0);

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      StackedNetwork grad = zeros_like(net);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const FeatureSequence& s = ds.sequences[order[b]];
        const std::uint64_t dseed = mix_seed(dropout_base, step * cfg.batch_size + (b - start));
        try {
          const ForwardTrace tr = forward_sequence(net, s.frames, s.label, Mode::train, dseed);
          batch_loss += total_loss(tr, s.label, obj, net);
          correct += argmax(tr.final_probs) == s.label;
          add_into(grad, backward_sequence(net, tr, s.label, obj));
        } catch (const NumericError& e) {
          throw TrainingError("non-finite values at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + ", sequence " + s.id + "): " + e.what() +
                              "; largest parameter in " + detail::largest_block(net));
        }
      }
      scale(grad, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                            std::to_string(epoch) + ")");
      }
      if (const std::string bad = detail::first_nonfinite_block(grad); !bad.empty()) {
        throw TrainingError("non-finite gradient in " + bad + " at step " + std::to_string(step) +
                            " (epoch " + std::to_string(epoch) + ")");
      }
      lr = lr_schedule(step, cfg.schedule);
      adam_step(net, grad, adam, lr, cfg.adam);
      if (const std::string bad = detail::first_nonfinite_block(net); !bad.empty()) {
        throw TrainingError("non-finite parameter in " + bad + " after step " +
                            std::to_string(step));
      }
      ++step;
      loss_sum += batch_loss;
    }
    const double n = static_cast<double>(ds.size());
    CurvePoint p{step, lr, loss_sum / n, static_cast<double>(correct) / n};
    out.metrics.curve.push_back(p);
    if (on_epoch) on_epoch(p);
  }

  const Metrics fit = evaluate(net, ds);
  out.metrics.accuracy = fit.accuracy;
  out.metrics.total = fit.total;
  out.metrics.confusion = fit.confusion;
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvResult {
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // summed over held-out folds
  FoldAssignment folds;
};

/// Trains on k-1 folds and evaluates on the held-out one, for every fold.
inline CvResult cross_validate(const Dataset& ds, const TrainConfig& cfg,
                               const FoldAssignment& folds) {
  CvResult r;
  r.folds = folds;
  r.confusion.assign(ds.classes, std::vector<std::size_t>(ds.classes, 0));
  for (std::size_t f = 0; f < folds.k; ++f) {
    TrainConfig fc = cfg;
    fc.seed = mix_seed(cfg.seed, f);
    const TrainResult tr = train(ds.subset(folds.complement(f)), fc);
    const Metrics m = evaluate(tr.model, ds.subset(folds.members(f)));
    r.fold_accuracies.push_back(m.accuracy);
    for (std::size_t i = 0; i < ds.classes; ++i) {
      for (std::size_t j = 0; j < ds.classes; ++j) r.confusion[i][j] += m.confusion[i][j];
    }
  }
  r.mean_accuracy = std::accumulate(r.fold_accuracies.begin(), r.fold_accuracies.end(), 0.0) /
                    static_cast<double>(r.fold_accuracies.size());
  return r;
}

// ---------------------------------------------------------------------------
// Reports

inline void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step,lr,loss,accuracy\n";
  out.precision(17);
  for (const auto& p : curve) out << p.step << "," << p.lr << "," << p.loss << "," << p.accuracy << "\n";
}

inline std::string format_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  std::ostringstream out;
  std::size_t width = 4;
  for (const auto& row : confusion) {
    for (std::size_t v : row) width = std::max(width, std::to_string(v).size() + 1);
  }
  auto cell = [&](const std::string& s) {
    out << std::string(width > s.size() ? width - s.size() : 0, ' ') << s;
  };
  cell("t\\p");
  for (std::size_t j = 0; j < confusion.size(); ++j) cell(std::to_string(j));
  out << "\n";
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    cell(std::to_string(i));
    for (std::size_t v : confusion[i]) cell(std::to_string(v));
    out << "\n";
  }
  return out.str();
}

}  // namespace hlstm
