// csnn: train compact-support networks, score OOD data, draw confidence
// maps, and run the Monte-Carlo verification suite.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 numerical abort.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "csnn/config.hpp"
#include "csnn/eval.hpp"
#include "csnn/io.hpp"
#include "csnn/kernels.hpp"
#include "csnn/model.hpp"
#include "csnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace csnn;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct ConfigArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration");
  cmd->add_option("--preset", args.preset, "built-in configuration (moons, mnist-small)");
  cmd->add_option("--seed", args.seed, "override the configured seed");
  cmd->add_option("--out", args.out, "override the output directory");
}

RunConfig resolve_config(const ConfigArgs& args) {
  if (args.config_path.empty() == args.preset.empty()) {
    throw ConfigError("exactly one of --config or --preset is required");
  }
  RunConfig cfg = args.config_path.empty() ? preset_config(args.preset)
                                           : load_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.train.seed = *args.seed;
  }
  if (!args.out.empty()) cfg.out = args.out;
  return cfg;
}

std::string run_dir(const RunConfig& cfg) {
  return (fs::path(cfg.out) / config_hash(cfg)).string();
}

void write_manifest(const RunConfig& cfg, const std::string& dir,
                    const std::vector<std::string>& artifacts, const json& extra) {
  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["config"] = json::parse(canonical_config(cfg));
  manifest["config_hash"] = config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["kernel_backend"] = kernels::backend_name(kernels::active_backend());
  manifest["artifacts"] = artifacts;
  if (!extra.is_null()) manifest["results"] = extra;
  atomic_write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const ConfigArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const LoadedData data = load_dataset(cfg);
  const Dataset* val = data.test.size() > 0 ? &data.test : nullptr;

  const auto t0 = std::chrono::steady_clock::now();
  const TrainOutput result = train_model(data.train, val, cfg.model, cfg.train);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string dir = run_dir(cfg);
  const std::string model_path = (fs::path(dir) / "model.json").string();
  const std::string trace_path = (fs::path(dir) / "trace.csv").string();
  save_model(result.model, model_path);
  write_trace_csv(result.trace, trace_path);

  json results;
  results["train_seconds"] = seconds;
  if (!result.trace.epochs.empty()) {
    const auto& last = result.trace.epochs.back();
    results["final_alpha"] = last.alpha;
    results["final_train_error"] = last.train_error;
    if (last.val_error) results["final_val_error"] = *last.val_error;
  }
  if (const auto* csn = std::get_if<CsnLayer>(&result.model.hidden)) {
    results["dead_neurons"] = dead_neuron_count(*csn);
    results["max_grad_bound"] = max_grad_bound(*csn);
  }
  write_manifest(cfg, dir, {"model.json", "trace.csv"}, results);

  std::cout << "trained " << result.model.hidden_kind() << " model on " << data.train.name
            << " (" << data.train.size() << " samples, seed " << cfg.seed << ")\n";
  if (!result.trace.epochs.empty()) {
    const auto& last = result.trace.epochs.back();
    std::cout << "  final alpha " << last.alpha << ", train error " << last.train_error;
    if (last.val_error) std::cout << ", val error " << *last.val_error;
    std::cout << "\n";
  }
  std::cout << "  wrote " << model_path << "\n  wrote " << trace_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval-ood
// ---------------------------------------------------------------------------

struct EvalOodArgs {
  ConfigArgs config;
  std::string model_path;
  std::string in_csv, in_label = "label";
  std::string ood_csv, ood_label = "label";
};

int cmd_eval_ood(const EvalOodArgs& args) {
  const CsnnModel model = load_model(args.model_path);

  Dataset in_set;
  std::vector<Vector> ood_points;
  std::string out_dir;
  if (!args.in_csv.empty()) {
    in_set = load_csv(args.in_csv, args.in_label);
  }
  if (!args.ood_csv.empty()) {
    ood_points = load_csv(args.ood_csv, args.ood_label).X;
  }
  if (args.in_csv.empty() || args.ood_csv.empty()) {
    const RunConfig cfg = resolve_config(args.config);
    const LoadedData data = load_dataset(cfg);
    if (args.in_csv.empty()) {
      in_set = data.test.size() > 0 ? data.test : data.train;
    }
    if (args.ood_csv.empty()) ood_points = load_ood_points(cfg, data.combined);
    out_dir = run_dir(cfg);
  } else {
    out_dir = args.config.out.empty() ? "." : args.config.out;
  }

  if (in_set.dim() != model.input_dim()) {
    throw DimensionError("eval-ood: in-set dim " + std::to_string(in_set.dim()) +
                         " incompatible with model input dim " +
                         std::to_string(model.input_dim()));
  }
  if (!ood_points.empty() && ood_points.front().size() != model.input_dim()) {
    throw DimensionError("eval-ood: ood-set dim " +
                         std::to_string(ood_points.front().size()) +
                         " incompatible with model input dim " +
                         std::to_string(model.input_dim()));
  }

  const double test_error = error_rate(model, in_set);
  const ScoredSet scored = score_in_ood(model, in_set.X, ood_points);
  const RocResult roc = auroc(scored);
  std::size_t ood_zero = 0;
  for (std::size_t i = in_set.size(); i < scored.scores.size(); ++i) {
    if (scored.scores[i] == 0.0) ++ood_zero;
  }
  const double frac_zero =
      ood_points.empty() ? 0.0
                         : static_cast<double>(ood_zero) / static_cast<double>(ood_points.size());

  json report;
  report["test_error"] = test_error;
  report["auroc"] = roc.auroc;
  report["n_in"] = in_set.size();
  report["n_ood"] = ood_points.size();
  report["frac_ood_zero_score"] = frac_zero;
  const std::string report_text = report.dump(2);
  std::cout << report_text << "\n";
  atomic_write_file((fs::path(out_dir) / "ood_report.json").string(), report_text + "\n");
  write_roc_csv(roc, (fs::path(out_dir) / "roc.csv").string());
  std::cout << "wrote " << (fs::path(out_dir) / "ood_report.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// confmap
// ---------------------------------------------------------------------------

struct ConfmapArgs {
  std::string model_path;
  double low = -0.5;
  double high = 1.5;
  std::size_t resolution = 100;
  std::string out = ".";
};

int cmd_confmap(const ConfmapArgs& args) {
  const CsnnModel model = load_model(args.model_path);
  const ConfMap map = confidence_map(model, args.low, args.high, args.resolution);
  const std::string pgm = (fs::path(args.out) / "confmap.pgm").string();
  const std::string csv = (fs::path(args.out) / "confmap.csv").string();
  write_confmap_pgm(map, model.num_classes, pgm);
  write_confmap_csv(map, csv);
  std::cout << "wrote " << pgm << "\nwrote " << csv << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string model_path;
  std::size_t trials = 10000;
  std::uint64_t seed = 20240717;
};

struct CheckResult {
  std::string name;
  std::size_t trials = 0;
  double max_violation = 0.0;
  bool pass = true;
};

void report(const CheckResult& c, bool& all_pass) {
  std::printf("%-16s trials=%-8zu max_violation=%.3e %s\n", c.name.c_str(), c.trials,
              c.max_violation, c.pass ? "PASS" : "FAIL");
  all_pass = all_pass && c.pass;
}

Vector sample_around(const Vector& center, double radius_sq, Rng& rng) {
  Vector dir(center.size());
  for (auto& v : dir) v = rng.normal(0.0, 1.0);
  const double norm = std::sqrt(squared_norm(dir));
  const double dist = std::sqrt(rng.uniform(0.0, 1.5 * std::max(radius_sq, 0.1)));
  Vector x(center.size());
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = center[j] + dist * dir[j] / norm;
  return x;
}

// Neurons to verify: either the model's rows or freshly sampled ones.
struct NeuronCase {
  Vector w;
  double b, r, alpha;
};

NeuronCase draw_neuron(const CsnnModel* model, Rng& rng) {
  NeuronCase nc;
  if (model != nullptr) {
    const auto& layer = std::get<CsnLayer>(model->hidden);
    const std::size_t i = rng.below(layer.neurons());
    nc.w.assign(layer.W.row(i), layer.W.row(i) + layer.input_dim());
    nc.b = layer.b[i];
    nc.r = layer.r[i];
    nc.alpha = layer.alpha > 0.0 ? layer.alpha : rng.uniform(0.02, 1.0);
  } else {
    const std::size_t d = 2 + rng.below(7);
    nc.w.resize(d);
    for (auto& v : nc.w) v = rng.normal(0.0, 1.0);
    nc.b = rng.below(2) == 0 ? 0.0 : rng.uniform(-0.5, 0.5);
    nc.r = rng.uniform(0.01, 2.0);
    nc.alpha = rng.uniform(0.02, 1.0);
  }
  return nc;
}

CheckResult check_params_finite(const CsnnModel* model) {
  CheckResult c{"params-finite", 1, 0.0, true};
  if (model == nullptr) return c;
  const auto* layer = std::get_if<CsnLayer>(&model->hidden);
  if (layer == nullptr) {
    c.pass = false;
    return c;
  }
  c.pass = all_finite(layer->W) && all_finite(layer->b) && all_finite(layer->r) &&
           all_finite(model->head) && all_finite(model->normalizer.mu) &&
           all_finite(model->normalizer.sigma) && layer->alpha >= 0.0 && layer->alpha <= 1.0;
  if (!c.pass) c.max_violation = std::numeric_limits<double>::infinity();
  return c;
}

CheckResult check_support_sphere(const CsnnModel* model, std::size_t trials, Rng& rng) {
  CheckResult c{"support-sphere", trials, 0.0, true};
  for (std::size_t t = 0; t < trials; ++t) {
    const NeuronCase nc = draw_neuron(model, rng);
    const SupportSphere sphere = support_sphere(nc.w, nc.b, nc.r, nc.alpha);
    const Vector x = sample_around(sphere.center, sphere.radius_sq, rng);
    Vector diff(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) diff[j] = x[j] - sphere.center[j];
    const double dist_sq = squared_norm(diff);
    const double f = neuron_forward(x, nc.w, nc.b, nc.r, nc.alpha);
    if (dist_sq >= sphere.radius_sq + 1e-9 && f != 0.0) {
      c.pass = false;
      c.max_violation = std::max(c.max_violation, f);
    }
    if (dist_sq <= sphere.radius_sq - 1e-9 && f <= 0.0) {
      c.pass = false;
      c.max_violation = std::max(c.max_violation, sphere.radius_sq - dist_sq);
    }
  }
  return c;
}

CheckResult check_grad_bound(const CsnnModel* model, std::size_t trials, Rng& rng) {
  CheckResult c{"grad-bound", trials, 0.0, true};
  for (std::size_t t = 0; t < trials; ++t) {
    const NeuronCase nc = draw_neuron(model, rng);
    const double bound = grad_bound(nc.w, nc.b, nc.r, nc.alpha);
    const SupportSphere sphere = support_sphere(nc.w, nc.b, nc.r, nc.alpha);
    const Vector x = sample_around(sphere.center, sphere.radius_sq, rng);
    const double g_sq = squared_norm(neuron_grad_x(x, nc.w, nc.b, nc.r, nc.alpha));
    c.max_violation = std::max(c.max_violation, g_sq - bound);
  }
  c.pass = c.max_violation <= 1e-9;
  return c;
}

CheckResult check_backward_fd(const CsnnModel* model, std::size_t trials, Rng& rng) {
  CheckResult c{"backward-fd", 0, 0.0, true};
  const std::size_t want = std::max<std::size_t>(std::min<std::size_t>(trials / 100, 50), 5);
  std::size_t attempts = 0;
  while (c.trials < want && attempts < want * 50) {
    ++attempts;
    CsnLayer layer;
    if (model != nullptr) {
      layer = std::get<CsnLayer>(model->hidden);
      if (layer.alpha == 0.0) layer.alpha = rng.uniform(0.1, 1.0);
    } else {
      const std::size_t k = 2 + rng.below(4);
      const std::size_t d = 2 + rng.below(4);
      layer.W = Matrix(k, d);
      for (std::size_t i = 0; i < layer.W.size(); ++i) {
        layer.W.data()[i] = rng.normal(0.0, 0.8);
      }
      layer.b = rng.normal_vec(k, 0.0, 0.2);
      layer.r.resize(k);
      for (auto& ri : layer.r) ri = rng.uniform(0.2, 2.0);
      layer.alpha = rng.uniform(0.05, 1.0);
    }
    const std::size_t k = layer.neurons();
    const std::size_t d = layer.input_dim();
    Vector x = rng.normal_vec(d, 0.0, 1.0);
    if (model != nullptr) {
      const auto& l = std::get<CsnLayer>(model->hidden);
      const std::size_t i = rng.below(k);
      Vector w(l.W.row(i), l.W.row(i) + d);
      const SupportSphere s = support_sphere(w, layer.b[i], layer.r[i], layer.alpha);
      if (s.radius_sq > 0.0) x = sample_around(s.center, s.radius_sq, rng);
    }
    bool near_kink = false;
    for (std::size_t i = 0; i < k; ++i) {
      Vector w(layer.W.row(i), layer.W.row(i) + d);
      if (std::abs(neuron_preactivation(x, w, layer.b[i], layer.r[i], layer.alpha)) < 1e-3) {
        near_kink = true;
      }
    }
    if (near_kink) continue;

    const Vector upstream = rng.normal_vec(k, 0.0, 1.0);
    const LayerGrads g = layer_backward(x, layer, upstream);
    auto objective = [&](const CsnLayer& l, const Vector& xx) {
      const Vector out = layer_forward(xx, l);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) total += upstream[i] * out[i];
      return total;
    };
    const double h = 1e-5;
    auto rel_err = [](double fd, double analytic) {
      return std::abs(fd - analytic) / std::max({1.0, std::abs(fd), std::abs(analytic)});
    };
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        CsnLayer l = layer;
        l.W(i, j) = layer.W(i, j) + h;
        const double up = objective(l, x);
        l.W(i, j) = layer.W(i, j) - h;
        const double down = objective(l, x);
        c.max_violation =
            std::max(c.max_violation, rel_err((up - down) / (2 * h), g.W(i, j)));
      }
      CsnLayer l = layer;
      l.b[i] = layer.b[i] + h;
      const double up_b = objective(l, x);
      l.b[i] = layer.b[i] - h;
      const double down_b = objective(l, x);
      c.max_violation =
          std::max(c.max_violation, rel_err((up_b - down_b) / (2 * h), g.b[i]));
      l.b[i] = layer.b[i];
      l.r[i] = layer.r[i] + h;
      const double up_r = objective(l, x);
      l.r[i] = layer.r[i] - h;
      const double down_r = objective(l, x);
      c.max_violation =
          std::max(c.max_violation, rel_err((up_r - down_r) / (2 * h), g.r[i]));
    }
    ++c.trials;
  }
  c.pass = c.trials >= want && c.max_violation <= 1e-5;
  return c;
}

CheckResult check_alpha0_relu(std::size_t trials, Rng& rng) {
  CheckResult c{"alpha0-relu", trials, 0.0, true};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 1 + rng.below(8);
    const std::size_t d = 1 + rng.below(8);
    CsnLayer layer;
    layer.W = Matrix(k, d);
    for (std::size_t i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = rng.normal(0.0, 1.0);
    layer.b = rng.normal_vec(k, 0.0, 0.5);
    layer.r.resize(k);
    for (auto& ri : layer.r) ri = rng.uniform(0.0, 2.0);
    layer.alpha = 0.0;
    const Vector x = rng.normal_vec(d, 0.0, 1.0);
    const Vector out = layer_forward(x, layer);
    const Vector wx = matvec(layer.W, x);
    for (std::size_t i = 0; i < k; ++i) {
      const double expected = std::max(2.0 * wx[i] + layer.b[i], 0.0);
      c.max_violation = std::max(c.max_violation, std::abs(out[i] - expected));
    }
  }
  c.pass = c.max_violation <= 1e-12;
  return c;
}

int cmd_verify(const VerifyArgs& args) {
  std::optional<CsnnModel> model;
  if (!args.model_path.empty()) {
    model = load_model(args.model_path);
    if (!std::holds_alternative<CsnLayer>(model->hidden)) {
      throw ConfigError("verify: model does not have a CSN hidden layer");
    }
  }
  const CsnnModel* mp = model ? &*model : nullptr;
  Rng rng(args.seed);
  bool all_pass = true;

  const CheckResult finite = check_params_finite(mp);
  report(finite, all_pass);
  if (finite.pass) {
    report(check_support_sphere(mp, args.trials, rng), all_pass);
    report(check_grad_bound(mp, args.trials, rng), all_pass);
    report(check_backward_fd(mp, args.trials, rng), all_pass);
    report(check_alpha0_relu(std::max<std::size_t>(args.trials / 10, 100), rng), all_pass);
  }
  if (mp != nullptr) {
    const auto& layer = std::get<CsnLayer>(mp->hidden);
    std::printf("dead_neurons=%zu max_grad_bound=%.6g\n", dead_neuron_count(layer),
                max_grad_bound(layer));
  }
  std::printf("verify: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// sweep-alpha
// ---------------------------------------------------------------------------

struct SweepArgs {
  ConfigArgs config;
  std::size_t stride = 25;
};

int cmd_sweep(const SweepArgs& args) {
  const RunConfig cfg = resolve_config(args.config);
  const LoadedData data = load_dataset(cfg);
  const Dataset* val = data.test.size() > 0 ? &data.test : nullptr;
  const std::vector<Vector> ood_points = load_ood_points(cfg, data.combined);
  const Dataset& eval_set = data.test.size() > 0 ? data.test : data.train;

  struct Row {
    std::size_t epoch;
    double alpha, test_error, auroc;
  };
  std::vector<Row> rows;
  const std::size_t total = cfg.train.epochs_anneal;
  EpochHook hook = [&](std::size_t epoch, double alpha, const CsnnModel& m) {
    if (epoch % args.stride != 0 && epoch != total && epoch != 1) return;
    const double err = error_rate(m, eval_set);
    const ScoredSet scored = score_in_ood(m, eval_set.X, ood_points);
    rows.push_back({epoch, alpha, err, auroc(scored).auroc});
  };
  const TrainOutput result = train_model(data.train, val, cfg.model, cfg.train, &hook);

  std::ostringstream out;
  out.precision(17);
  out << "epoch,alpha,train_error,test_error,auroc\n";
  for (const auto& row : rows) {
    double train_error = 0.0;
    for (const auto& rec : result.trace.epochs) {
      if (rec.epoch == row.epoch) train_error = rec.train_error;
    }
    out << row.epoch << "," << row.alpha << "," << train_error << "," << row.test_error << ","
        << row.auroc << "\n";
  }
  const std::string dir = run_dir(cfg);
  const std::string sweep_path = (fs::path(dir) / "sweep.csv").string();
  atomic_write_file(sweep_path, out.str());
  write_manifest(cfg, dir, {"sweep.csv"}, json{{"sweep_rows", rows.size()}});
  std::cout << "wrote " << sweep_path << " (" << rows.size() << " checkpoints)\n";
  if (const auto pick = select_alpha_epoch(result.trace)) {
    const auto& rec = result.trace.epochs[*pick];
    std::cout << "selected alpha " << rec.alpha << " at epoch " << rec.epoch
              << " (validation rule: largest alpha at or below the alpha=0 error)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compact support neural networks: train, evaluate OOD detection, verify"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model from a config or preset");
  add_config_options(train_cmd, train_args);

  EvalOodArgs eval_args;
  CLI::App* eval_cmd =
      app.add_subcommand("eval-ood", "score a model against an OOD set and report AUROC");
  eval_cmd->add_option("--model", eval_args.model_path, "model file")->required();
  add_config_options(eval_cmd, eval_args.config);
  eval_cmd->add_option("--in", eval_args.in_csv, "in-distribution CSV (overrides config)");
  eval_cmd->add_option("--in-label", eval_args.in_label, "label column of --in");
  eval_cmd->add_option("--ood", eval_args.ood_csv, "OOD CSV (overrides config)");
  eval_cmd->add_option("--ood-label", eval_args.ood_label, "label column of --ood");

  ConfmapArgs confmap_args;
  CLI::App* confmap_cmd =
      app.add_subcommand("confmap", "rasterize the confidence map of a 2-D model");
  confmap_cmd->add_option("--model", confmap_args.model_path, "model file")->required();
  confmap_cmd->add_option("--low", confmap_args.low, "lower bound of both axes");
  confmap_cmd->add_option("--high", confmap_args.high, "upper bound of both axes");
  confmap_cmd->add_option("--resolution", confmap_args.resolution, "cells per axis");
  confmap_cmd->add_option("--out", confmap_args.out, "output directory");

  VerifyArgs verify_args;
  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Monte-Carlo checks: support geometry, gradient bound, "
                                   "finite differences");
  verify_cmd->add_option("--model", verify_args.model_path, "model file (default: fresh random layers)");
  verify_cmd->add_option("--trials", verify_args.trials, "sample count per check");
  verify_cmd->add_option("--seed", verify_args.seed, "sampler seed");

  SweepArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep-alpha", "train while recording error and AUROC across the alpha schedule");
  add_config_options(sweep_cmd, sweep_args.config);
  sweep_cmd->add_option("--stride", sweep_args.stride, "epochs between checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval_ood(eval_args);
    if (confmap_cmd->parsed()) return cmd_confmap(confmap_args);
    if (verify_cmd->parsed()) return cmd_verify(verify_args);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
