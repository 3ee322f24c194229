// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

// Plain-text run configuration: one key=value per line, '#' starts a
// comment. Unknown keys and malformed values are rejected.

#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hlstm/dataio.hpp"
#include "hlstm/gradcheck.hpp"
#include "hlstm/trainer.hpp"

namespace hlstm {

/// Bad key, bad value or unreadable config file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class KeyType { integer, real, boolean, path, choice };

struct KeyDef {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string doc;
  std::vector<std::string> choices = {};
};

inline const std::vector<KeyDef>& config_keys() {
  static const std::vector<KeyDef> keys = {
      {"seed", KeyType::integer, "0", "master seed for initialization, shuffling, dropout and folds"},
      {"layers", KeyType::integer, "5", "number of stacked LSTM layers"},
      {"units", KeyType::integer, "30", "hidden units per layer"},
      {"peephole", KeyType::choice, "diag", "peephole weights", {"diag", "full"}},
      {"dropout", KeyType::real, "0.5", "dropout probability between layers"},
      {"tau", KeyType::integer, "3", "truncation window"},
      {"alpha_policy", KeyType::choice, "clamped", "blend weight rule",
       {"literal", "clamped", "inverse_loss"}},
      {"window_mode", KeyType::choice, "sliding", "truncation window rule",
       {"sliding", "literal"}},
      {"inference_policy", KeyType::choice, "pseudo_label", "label-free loss scoring",
       {"pseudo_label", "fixed_blend"}},
      {"hist_placement", KeyType::choice, "top", "historical layers (none = plain LSTM)",
       {"none", "top", "all"}},
      {"epochs", KeyType::integer, "50", "training epochs"},
      {"batch_size", KeyType::integer, "32", "sequences per optimizer step"},
      {"lr0", KeyType::real, "0.001", "initial learning rate"},
      {"decay_base", KeyType::real, "0.96", "learning-rate decay factor"},
      {"decay_every", KeyType::integer, "100000", "steps between learning-rate decays"},
      {"l2", KeyType::real, "0.004", "L2 weight on weight matrices"},
      {"lambda_aux", KeyType::real, "0.5", "weight of the auxiliary per-step loss"},
      {"folds", KeyType::integer, "5", "cross-validation folds (manifest folds take precedence)"},
      {"manifest", KeyType::path, "", "dataset manifest; empty means generate synthetic data"},
      {"checkpoint", KeyType::path, "", "checkpoint to evaluate"},
      {"out", KeyType::path, "out", "output directory"},
      {"synth_classes", KeyType::integer, "4", "synthetic: classes"},
      {"synth_dim", KeyType::integer, "16", "synthetic: feature dim"},
      {"synth_length", KeyType::integer, "30", "synthetic: frames per sequence"},
      {"synth_signal_start", KeyType::integer, "10", "synthetic: first signal frame (0-based)"},
      {"synth_signal_end", KeyType::integer, "15", "synthetic: one past the last signal frame"},
      {"synth_noise", KeyType::real, "1.0", "synthetic: noise standard deviation"},
      {"synth_distractor", KeyType::boolean, "true", "synthetic: wrong-class tail frames"},
      {"synth_count", KeyType::integer, "1000", "synthetic: number of sequences"},
      {"synth_seed", KeyType::integer, "0", "synthetic: generator seed"},
      {"gradcheck_seeds", KeyType::integer, "20", "gradcheck: random seeds"},
  };
  return keys;
}

namespace detail {

inline const KeyDef& key_def(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (k.name == key) return k;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline void validate_value(const KeyDef& k, const std::string& v) {
  auto fail = [&](const std::string& what) {
    throw ConfigError("config key '" + k.name + "': " + what + ", got '" + v + "'");
  };
  switch (k.type) {
    case KeyType::integer: {
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        fail("expected a non-negative integer");
      }
      errno = 0;
      std::strtoull(v.c_str(), nullptr, 10);
      if (errno == ERANGE) fail("integer out of range");
      break;
    }
    case KeyType::real: {
      char* end = nullptr;
      errno = 0;
      const double d = std::strtod(v.c_str(), &end);
      if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) {
        fail("expected a finite real number");
      }
      break;
    }
    case KeyType::boolean:
      if (v != "true" && v != "false") fail("expected true or false");
      break;
    case KeyType::choice:
      if (std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) {
        std::string all;
        for (const auto& c : k.choices) all += (all.empty() ? "" : "|") + c;
        fail("expected one of " + all);
      }
      break;
    case KeyType::path:
      break;
  }
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  void set(const std::string& key, const std::string& value) {
    const KeyDef& k = detail::key_def(key);
    detail::validate_value(k, value);
    values_[key] = value;
  }

  /// Applies "key=value" (used for config lines and --set).
  void set_assignment(const std::string& assignment, const std::string& where = "") {
    const auto eq = assignment.find('=');
    const std::string prefix = where.empty() ? "" : where + ": ";
    if (eq == std::string::npos) {
      throw ConfigError(prefix + "expected key=value, got '" + assignment + "'");
    }
    try {
      set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(prefix + e.what());
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      set_assignment(line, path + ":" + std::to_string(n));
    }
  }

  const std::string& get(const std::string& key) const {
    detail::key_def(key);
    return values_.at(key);
  }
  std::uint64_t integer(const std::string& key) const { return std::stoull(get(key)); }
  double real(const std::string& key) const { return std::stod(get(key)); }
  bool boolean(const std::string& key) const { return get(key) == "true"; }

  /// Every key in declaration order, loadable by load_file.
  std::string dump() const {
    std::ostringstream out;
    out << "# effective configuration\n";
    for (const auto& k : config_keys()) out << k.name << "=" << values_.at(k.name) << "\n";
    return out.str();
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.seed = integer("seed");
    c.epochs = integer("epochs");
    c.batch_size = integer("batch_size");
    c.schedule.lr0 = real("lr0");
    c.schedule.decay_base = real("decay_base");
    c.schedule.decay_every = integer("decay_every");
    c.l2 = real("l2");
    c.lambda_aux = real("lambda_aux");
    c.model.hidden.assign(integer("layers"), integer("units"));
    c.model.peephole = get("peephole") == "full" ? PeepholeKind::full : PeepholeKind::diag;
    c.model.dropout_p = real("dropout");
    c.model.hist = historical_config();
    const std::string& pl = get("hist_placement");
    c.model.placement = pl == "none" ? HistPlacement::none
                        : pl == "all" ? HistPlacement::all
                                      : HistPlacement::top;
    if (c.model.hidden.empty()) throw ConfigError("config key 'layers': must be >= 1");
    if (integer("units") == 0) throw ConfigError("config key 'units': must be >= 1");
    if (c.batch_size == 0) throw ConfigError("config key 'batch_size': must be >= 1");
    if (c.schedule.decay_every == 0) throw ConfigError("config key 'decay_every': must be >= 1");
    if (!(c.schedule.lr0 > 0.0)) throw ConfigError("config key 'lr0': must be > 0");
    if (!(c.schedule.decay_base > 0.0)) throw ConfigError("config key 'decay_base': must be > 0");
    if (!(c.model.dropout_p >= 0.0 && c.model.dropout_p < 1.0)) {
      throw ConfigError("config key 'dropout': must lie in [0, 1)");
    }
    if (c.l2 < 0.0 || c.lambda_aux < 0.0) {
      throw ConfigError("config keys 'l2' and 'lambda_aux' must be >= 0");
    }
    return c;
  }

  HistoricalConfig historical_config() const {
    HistoricalConfig h;
    h.tau = integer("tau");
    if (h.tau == 0) throw ConfigError("config key 'tau': must be >= 1");
    const std::string& ap = get("alpha_policy");
    h.alpha_policy = ap == "literal"        ? AlphaPolicy::literal
                     : ap == "inverse_loss" ? AlphaPolicy::inverse_loss
                                            : AlphaPolicy::clamped;
    h.window_mode = get("window_mode") == "literal" ? WindowMode::literal : WindowMode::sliding;
    h.inference_policy = get("inference_policy") == "fixed_blend" ? InferencePolicy::fixed_blend
                                                                  : InferencePolicy::pseudo_label;
    return h;
  }

  SynthConfig synth_config() const {
    SynthConfig s;
    s.classes = integer("synth_classes");
    s.dim = integer("synth_dim");
    s.length = integer("synth_length");
    s.signal_start = integer("synth_signal_start");
    s.signal_end = integer("synth_signal_end");
    s.noise_sigma = real("synth_noise");
    s.distractor = boolean("synth_distractor");
    s.count = integer("synth_count");
    s.seed = integer("synth_seed");
    return s;
  }

  GradCheckSpec gradcheck_spec() const {
    GradCheckSpec g;
    g.seeds = integer("gradcheck_seeds");
    g.first_seed = integer("seed") + 1;
    return g;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hlstm
