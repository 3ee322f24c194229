// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: train, eval, cv, sweep-tau, synth, gradcheck.
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hlstm/checkpoint.hpp"
#include "hlstm/config.hpp"
#include "hlstm/dataio.hpp"
#include "hlstm/gradcheck.hpp"
#include "hlstm/trainer.hpp"

namespace fs = std::filesystem;
using namespace hlstm;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::optional<std::string> seed, tau, alpha_policy, window_mode, inference_policy,
      hist_placement, layers, units, epochs, out, manifest, checkpoint, folds;
  std::vector<std::string> sets;
};

RunConfig resolve(const Options& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  auto apply = [&](const char* key, const std::optional<std::string>& v) {
    if (v) cfg.set(key, *v);
  };
  apply("seed", o.seed);
  apply("tau", o.tau);
  apply("alpha_policy", o.alpha_policy);
  apply("window_mode", o.window_mode);
  apply("inference_policy", o.inference_policy);
  apply("hist_placement", o.hist_placement);
  apply("layers", o.layers);
  apply("units", o.units);
  apply("epochs", o.epochs);
  apply("out", o.out);
  apply("manifest", o.manifest);
  apply("checkpoint", o.checkpoint);
  apply("folds", o.folds);
  for (const auto& s : o.sets) cfg.set_assignment(s, "--set");
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path dir = cfg.get("out");
  fs::create_directories(dir);
  std::ofstream dump(dir / "config.txt", std::ios::trunc);
  dump << cfg.dump();
  if (!dump) throw IoError("cannot write " + (dir / "config.txt").string());
  return dir;
}

Dataset load_data(const RunConfig& cfg) {
  const std::string& manifest = cfg.get("manifest");
  if (!manifest.empty()) return load_manifest(manifest);
  return synth_keyframe_dataset(cfg.synth_config());
}

std::string pct(double a) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << a;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

FoldAssignment folds_for(const Dataset& ds, const RunConfig& cfg) {
  if (auto f = manifest_folds(ds)) return *f;
  FoldAssignment f = kfold_split(ds.labels(), cfg.integer("folds"), cfg.integer("seed"));
  if (!f.warning.empty()) std::cerr << "hlstm: warning: " << f.warning << "\n";
  return f;
}

int cmd_train(const RunConfig& cfg) {
  const TrainConfig tc = cfg.train_config();
  const Dataset ds = load_data(cfg);
  const fs::path dir = prepare_out(cfg);
  const TrainResult r = train(ds, tc, [](const CurvePoint& p) {
    std::cout << "step " << p.step << "  lr " << p.lr << "  loss " << pct(p.loss) << "  acc "
              << pct(p.accuracy) << "\n";
  });
  save_checkpoint((dir / "model.ckpt").string(), r.model);
  std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
  write_curve_csv(csv, r.metrics.curve);
  if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
  std::cout << "training accuracy " << pct(r.metrics.accuracy) << " on " << r.metrics.total
            << " sequences\n"
            << format_confusion(r.metrics.confusion) << "checkpoint " << (dir / "model.ckpt").string()
            << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  if (cfg.get("checkpoint").empty()) throw UsageError("eval needs --checkpoint");
  if (cfg.get("manifest").empty()) throw UsageError("eval needs --manifest");
  const StackedNetwork net = load_checkpoint(cfg.get("checkpoint"));
  const Dataset ds = load_manifest(cfg.get("manifest"));
  const Metrics m = evaluate(net, ds);
  const fs::path dir = prepare_out(cfg);
  std::ostringstream report;
  report << "accuracy " << pct(m.accuracy) << " on " << m.total << " sequences\n"
         << format_confusion(m.confusion);
  write_text(dir / "eval.txt", report.str());
  std::cout << report.str();
  return 0;
}

int cmd_cv(const RunConfig& cfg) {
  const TrainConfig tc = cfg.train_config();
  const Dataset ds = load_data(cfg);
  const FoldAssignment folds = folds_for(ds, cfg);
  const fs::path dir = prepare_out(cfg);
  const CvResult r = cross_validate(ds, tc, folds);
  std::ostringstream csv, table;
  csv << "fold,accuracy\n";
  table << "fold  accuracy\n";
  for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f) {
    csv << f << "," << pct(r.fold_accuracies[f]) << "\n";
    table << std::setw(4) << f << "  " << pct(r.fold_accuracies[f]) << "\n";
  }
  csv << "mean," << pct(r.mean_accuracy) << "\n";
  table << "mean  " << pct(r.mean_accuracy) << "\n" << format_confusion(r.confusion);
  write_text(dir / "cv.csv", csv.str());
  std::cout << table.str();
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  const TrainConfig base = cfg.train_config();
  const Dataset ds = load_data(cfg);
  const FoldAssignment folds = folds_for(ds, cfg);
  const fs::path dir = prepare_out(cfg);

  struct Row {
    std::string method;
    std::string tau;
    CvResult r;
  };
  std::vector<Row> rows;
  for (std::size_t tau = 2; tau <= 5; ++tau) {
    TrainConfig tc = base;
    tc.model.placement =
        base.model.placement == HistPlacement::none ? HistPlacement::top : base.model.placement;
    tc.model.hist.tau = tau;
    std::cerr << "sweep-tau: tau=" << tau << "\n";
    rows.push_back({"Historical LSTM (tau=" + std::to_string(tau) + ")", std::to_string(tau),
                    cross_validate(ds, tc, folds)});
  }
  TrainConfig lstm = base;
  lstm.model.placement = HistPlacement::none;
  std::cerr << "sweep-tau: LSTM\n";
  rows.push_back({"LSTM", "", cross_validate(ds, lstm, folds)});

  std::ostringstream csv, table;
  csv << "method,tau,accuracy";
  for (std::size_t f = 0; f < folds.k; ++f) csv << ",fold" << f;
  csv << "\n";
  table << std::left << std::setw(28) << "Method" << "Accuracy\n";
  for (const Row& row : rows) {
    csv << row.method << "," << row.tau << "," << pct(row.r.mean_accuracy);
    for (double a : row.r.fold_accuracies) csv << "," << pct(a);
    csv << "\n";
    table << std::left << std::setw(28) << row.method << pct(row.r.mean_accuracy) << "\n";
  }
  write_text(dir / "sweep.csv", csv.str());
  std::cout << table.str();
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  const Dataset ds = synth_keyframe_dataset(cfg.synth_config());
  const fs::path dir = prepare_out(cfg);
  const std::string manifest = write_dataset(dir.string(), ds);
  std::cout << "wrote " << ds.size() << " sequences, manifest " << manifest << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const GradCheckSpec spec = cfg.gradcheck_spec();
  const fs::path dir = prepare_out(cfg);
  const GradCheckReport r = grad_check(spec);
  std::ostringstream out;
  out << "cases " << r.cases << " (blend steps " << r.blend_steps << ", truncate steps "
      << r.truncate_steps << ")\n"
      << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
      << " in " << r.worst_block << " (analytic " << r.worst_analytic << ", numeric "
      << r.worst_numeric << ", case seed " << std::dec << r.worst_seed << ")\n"
      << (r.passed() ? "PASS" : "FAIL") << " (tolerance 1e-4)\n";
  write_text(dir / "gradcheck.txt", out.str());
  std::cout << out.str();
  return r.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Historical LSTM sequence classifier"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--tau", o.tau, "truncation window");
    sub->add_option("--alpha-policy", o.alpha_policy, "literal|clamped|inverse_loss");
    sub->add_option("--window-mode", o.window_mode, "sliding|literal");
    sub->add_option("--inference-policy", o.inference_policy, "pseudo_label|fixed_blend");
    sub->add_option("--hist-placement", o.hist_placement, "none|top|all");
    sub->add_option("--layers", o.layers, "stacked LSTM layers");
    sub->add_option("--units", o.units, "hidden units per layer");
    sub->add_option("--epochs", o.epochs, "training epochs");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--manifest", o.manifest, "dataset manifest (default: synthetic data)");
    sub->add_option("--set", o.sets, "override any config key, key=value (repeatable)");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "train a model; writes checkpoint and metrics CSV");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  CLI::App* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  CLI::App* sweep_cmd = app.add_subcommand("sweep-tau", "cross-validate tau=2..5 and the plain LSTM");
  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic key-frame dataset");
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  for (CLI::App* sub : {train_cmd, eval_cmd, cv_cmd, sweep_cmd, synth_cmd, grad_cmd}) common(sub);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  for (CLI::App* sub : {cv_cmd, sweep_cmd}) sub->add_option("--folds", o.folds, "number of folds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "hlstm: usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg);
    if (cv_cmd->parsed()) return cmd_cv(cfg);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg);
    if (synth_cmd->parsed()) return cmd_synth(cfg);
    if (grad_cmd->parsed()) return cmd_gradcheck(cfg);
  } catch (const UsageError& e) {
    std::cerr << "hlstm: usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "hlstm: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "hlstm: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
