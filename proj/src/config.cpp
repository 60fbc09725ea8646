#include "csnn/config.hpp"

#include <cstdio>

#include <json.hpp>

#include "csnn/io.hpp"

namespace csnn {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& ctx) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) known = true;
    }
    if (!known) throw ConfigError("unknown key '" + ctx + key + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "': " + it->dump());
  }
}

DatasetCfg parse_dataset(const json& j) {
  if (!j.is_object()) throw ConfigError("'dataset' must be an object");
  DatasetCfg cfg;
  const std::string kind = get_or<std::string>(j, "kind", "moons");
  if (kind == "moons") {
    cfg.kind = DatasetCfg::Kind::moons;
    reject_unknown_keys(j, {"kind", "n", "noise_std", "train_fraction"}, "dataset.");
    cfg.n = get_or<std::size_t>(j, "n", 400);
    cfg.noise_std = get_or<double>(j, "noise_std", 0.1);
    cfg.train_fraction = get_or<double>(j, "train_fraction", 0.5);
  } else if (kind == "csv") {
    cfg.kind = DatasetCfg::Kind::csv;
    reject_unknown_keys(j, {"kind", "path", "label_column", "train_fraction"}, "dataset.");
    cfg.path = get_or<std::string>(j, "path", "");
    cfg.label_column = get_or<std::string>(j, "label_column", "label");
    cfg.train_fraction = get_or<double>(j, "train_fraction", 0.5);
    if (cfg.path.empty()) throw ConfigError("dataset.path is required for csv datasets");
  } else if (kind == "idx") {
    cfg.kind = DatasetCfg::Kind::idx;
    reject_unknown_keys(j, {"kind", "images", "labels", "test_images", "test_labels", "limit"},
                        "dataset.");
    cfg.images = get_or<std::string>(j, "images", "");
    cfg.labels = get_or<std::string>(j, "labels", "");
    cfg.test_images = get_or<std::string>(j, "test_images", "");
    cfg.test_labels = get_or<std::string>(j, "test_labels", "");
    if (j.contains("limit")) cfg.limit = get_or<std::size_t>(j, "limit", 0);
    if (cfg.images.empty() || cfg.labels.empty()) {
      throw ConfigError("dataset.images and dataset.labels are required for idx datasets");
    }
  } else {
    throw ConfigError("dataset.kind must be moons, csv or idx, got '" + kind + "'");
  }
  return cfg;
}

void parse_model(const json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("'model' must be an object");
  reject_unknown_keys(j, {"kind", "hidden", "use_bias", "backbone_hidden"}, "model.");
  const std::string kind = get_or<std::string>(j, "kind", "csnn");
  if (kind == "csnn") {
    cfg.model.kind = ModelKind::csnn;
  } else if (kind == "standard") {
    cfg.model.kind = ModelKind::standard;
  } else if (kind == "rbf") {
    cfg.model.kind = ModelKind::rbf;
  } else {
    throw ConfigError("model.kind must be csnn, standard or rbf, got '" + kind + "'");
  }
  cfg.model.hidden = get_or<std::size_t>(j, "hidden", 128);
  cfg.model.backbone_hidden = get_or<std::size_t>(j, "backbone_hidden", 0);
  cfg.train.use_bias = get_or<bool>(j, "use_bias", false);
  if (cfg.model.hidden == 0) throw ConfigError("model.hidden must be positive");
}

AlphaSchedule parse_schedule(const json& j) {
  if (!j.is_object()) throw ConfigError("'train.schedule' must be an object");
  AlphaSchedule s;
  const std::string kind = get_or<std::string>(j, "kind", "linear-epoch");
  if (kind == "linear-epoch") {
    s.kind = ScheduleKind::linear_epoch;
    reject_unknown_keys(j, {"kind"}, "train.schedule.");
  } else if (kind == "clamped-ramp") {
    s.kind = ScheduleKind::clamped_ramp;
    reject_unknown_keys(j, {"kind", "offset", "span"}, "train.schedule.");
    s.offset = get_or<double>(j, "offset", 0.0);
    s.span = get_or<double>(j, "span", 1.0);
    if (s.span <= 0.0) throw ConfigError("train.schedule.span must be positive");
  } else if (kind == "fixed") {
    s.kind = ScheduleKind::fixed;
    reject_unknown_keys(j, {"kind", "value"}, "train.schedule.");
    s.value = get_or<double>(j, "value", 1.0);
    if (s.value < 0.0 || s.value > 1.0) {
      throw ConfigError("train.schedule.value must be in [0,1]");
    }
  } else {
    throw ConfigError("train.schedule.kind must be linear-epoch, clamped-ramp or fixed");
  }
  return s;
}

OptimizerCfg parse_optimizer(const json& j) {
  if (!j.is_object()) throw ConfigError("'train.optimizer' must be an object");
  reject_unknown_keys(j, {"kind", "learning_rate", "weight_decay", "betas", "eps"},
                      "train.optimizer.");
  OptimizerCfg cfg;
  const std::string kind = get_or<std::string>(j, "kind", "adam");
  if (kind == "adam") {
    cfg.kind = OptKind::adam;
  } else if (kind == "sgd") {
    cfg.kind = OptKind::sgd;
  } else {
    throw ConfigError("train.optimizer.kind must be adam or sgd, got '" + kind + "'");
  }
  cfg.learning_rate = get_or<double>(j, "learning_rate", 1e-3);
  cfg.weight_decay = get_or<double>(j, "weight_decay", 1e-4);
  if (j.contains("betas")) {
    const auto betas = j.at("betas");
    if (!betas.is_array() || betas.size() != 2) {
      throw ConfigError("train.optimizer.betas must be [beta1, beta2]");
    }
    cfg.beta1 = betas[0].get<double>();
    cfg.beta2 = betas[1].get<double>();
  }
  cfg.eps = get_or<double>(j, "eps", 1e-8);
  if (cfg.learning_rate <= 0.0) throw ConfigError("train.optimizer.learning_rate must be positive");
  if (cfg.weight_decay < 0.0) throw ConfigError("train.optimizer.weight_decay must be >= 0");
  return cfg;
}

void parse_train(const json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("'train' must be an object");
  reject_unknown_keys(
      j, {"epochs_pretrain", "epochs_anneal", "schedule", "optimizer", "radius_init",
          "batch_size"},
      "train.");
  cfg.train.epochs_pretrain = get_or<std::size_t>(j, "epochs_pretrain", 0);
  cfg.train.epochs_anneal = get_or<std::size_t>(j, "epochs_anneal", 0);
  if (j.contains("schedule")) cfg.train.schedule = parse_schedule(j.at("schedule"));
  if (j.contains("optimizer")) cfg.train.optimizer = parse_optimizer(j.at("optimizer"));
  cfg.train.radius_init = get_or<double>(j, "radius_init", 0.01);
  cfg.train.batch_size = get_or<std::size_t>(j, "batch_size", 32);
  if (cfg.train.epochs_pretrain + cfg.train.epochs_anneal < 1) {
    throw ConfigError("train: need at least one epoch across epochs_pretrain + epochs_anneal");
  }
  if (cfg.train.radius_init <= 0.0) throw ConfigError("train.radius_init must be positive");
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
}

OodCfg parse_ood(const json& j) {
  if (!j.is_object()) throw ConfigError("'eval.ood' must be an object");
  OodCfg cfg;
  const std::string kind = get_or<std::string>(j, "kind", "grid");
  if (kind == "grid") {
    cfg.kind = OodCfg::Kind::grid;
    reject_unknown_keys(j, {"kind", "grid_per_dim", "low", "high", "min_dist"}, "eval.ood.");
    cfg.grid_per_dim = get_or<std::size_t>(j, "grid_per_dim", 100);
    cfg.low = get_or<double>(j, "low", -0.5);
    cfg.high = get_or<double>(j, "high", 1.5);
    cfg.min_dist = get_or<double>(j, "min_dist", 0.1);
    if (cfg.high <= cfg.low) throw ConfigError("eval.ood: high must exceed low");
  } else if (kind == "csv") {
    cfg.kind = OodCfg::Kind::csv;
    reject_unknown_keys(j, {"kind", "path", "label_column"}, "eval.ood.");
    cfg.path = get_or<std::string>(j, "path", "");
    cfg.label_column = get_or<std::string>(j, "label_column", "label");
    if (cfg.path.empty()) throw ConfigError("eval.ood.path is required for csv OOD sets");
  } else if (kind == "idx") {
    cfg.kind = OodCfg::Kind::idx;
    reject_unknown_keys(j, {"kind", "images", "labels", "limit"}, "eval.ood.");
    cfg.images = get_or<std::string>(j, "images", "");
    cfg.labels = get_or<std::string>(j, "labels", "");
    if (j.contains("limit")) cfg.limit = get_or<std::size_t>(j, "limit", 0);
    if (cfg.images.empty() || cfg.labels.empty()) {
      throw ConfigError("eval.ood.images and eval.ood.labels are required for idx OOD sets");
    }
  } else {
    throw ConfigError("eval.ood.kind must be grid, csv or idx, got '" + kind + "'");
  }
  return cfg;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(origin + ": config must be a JSON object");
  reject_unknown_keys(doc, {"seed", "out", "dataset", "model", "train", "eval"}, "");

  RunConfig cfg;
  cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
  cfg.out = get_or<std::string>(doc, "out", "runs");
  if (doc.contains("dataset")) cfg.dataset = parse_dataset(doc.at("dataset"));
  if (doc.contains("model")) parse_model(doc.at("model"), cfg);
  if (!doc.contains("train")) throw ConfigError(origin + ": missing 'train' section");
  parse_train(doc.at("train"), cfg);
  if (doc.contains("eval")) {
    const json& ev = doc.at("eval");
    if (!ev.is_object()) throw ConfigError("'eval' must be an object");
    reject_unknown_keys(ev, {"ood"}, "eval.");
    if (ev.contains("ood")) cfg.ood = parse_ood(ev.at("ood"));
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  return parse_config_text(text, path);
}

namespace {

// Shipped in configs/; embedded so the binary works from any directory.
constexpr const char* kMoonsPreset = R"json({
  "seed": 20240717,
  "out": "runs",
  "dataset": {"kind": "moons", "n": 400, "noise_std": 0.1, "train_fraction": 0.5},
  "model": {"kind": "csnn", "hidden": 128, "use_bias": true},
  "train": {
    "epochs_pretrain": 0,
    "epochs_anneal": 2000,
    "schedule": {"kind": "clamped-ramp", "offset": 100, "span": 1500},
    "optimizer": {"kind": "adam", "learning_rate": 0.001, "weight_decay": 0.0001},
    "radius_init": 0.02,
    "batch_size": 32
  },
  "eval": {"ood": {"kind": "grid", "grid_per_dim": 100, "low": -0.5, "high": 1.5, "min_dist": 0.1}}
})json";

constexpr const char* kMnistSmallPreset = R"json({
  "seed": 20240717,
  "out": "runs",
  "dataset": {
    "kind": "idx",
    "images": "data/train-images-idx3-ubyte",
    "labels": "data/train-labels-idx1-ubyte",
    "test_images": "data/t10k-images-idx3-ubyte",
    "test_labels": "data/t10k-labels-idx1-ubyte",
    "limit": 5000
  },
  "model": {"kind": "csnn", "hidden": 128, "use_bias": false, "backbone_hidden": 256},
  "train": {
    "epochs_pretrain": 10,
    "epochs_anneal": 500,
    "schedule": {"kind": "linear-epoch"},
    "optimizer": {"kind": "adam", "learning_rate": 0.001, "weight_decay": 0.0001},
    "radius_init": 0.01,
    "batch_size": 32
  },
  "eval": {
    "ood": {
      "kind": "idx",
      "images": "data/fashion-t10k-images-idx3-ubyte",
      "labels": "data/fashion-t10k-labels-idx1-ubyte"
    }
  }
})json";

}  // namespace

RunConfig preset_config(const std::string& name) {
  if (name == "moons") return parse_config_text(kMoonsPreset, "preset:moons");
  if (name == "mnist-small") return parse_config_text(kMnistSmallPreset, "preset:mnist-small");
  throw ConfigError("unknown preset '" + name + "' (available: moons, mnist-small)");
}

std::string canonical_config(const RunConfig& cfg) {
  json doc;
  doc["seed"] = cfg.seed;
  switch (cfg.dataset.kind) {
    case DatasetCfg::Kind::moons:
      doc["dataset"] = {{"kind", "moons"},
                        {"n", cfg.dataset.n},
                        {"noise_std", cfg.dataset.noise_std},
                        {"train_fraction", cfg.dataset.train_fraction}};
      break;
    case DatasetCfg::Kind::csv:
      doc["dataset"] = {{"kind", "csv"},
                        {"path", cfg.dataset.path},
                        {"label_column", cfg.dataset.label_column},
                        {"train_fraction", cfg.dataset.train_fraction}};
      break;
    case DatasetCfg::Kind::idx: {
      json d = {{"kind", "idx"},
                {"images", cfg.dataset.images},
                {"labels", cfg.dataset.labels},
                {"test_images", cfg.dataset.test_images},
                {"test_labels", cfg.dataset.test_labels}};
      if (cfg.dataset.limit) d["limit"] = *cfg.dataset.limit;
      doc["dataset"] = d;
      break;
    }
  }
  const char* model_kind = cfg.model.kind == ModelKind::csnn       ? "csnn"
                           : cfg.model.kind == ModelKind::standard ? "standard"
                                                                   : "rbf";
  doc["model"] = {{"kind", model_kind},
                  {"hidden", cfg.model.hidden},
                  {"use_bias", cfg.train.use_bias},
                  {"backbone_hidden", cfg.model.backbone_hidden}};
  json schedule;
  switch (cfg.train.schedule.kind) {
    case ScheduleKind::linear_epoch:
      schedule = {{"kind", "linear-epoch"}};
      break;
    case ScheduleKind::clamped_ramp:
      schedule = {{"kind", "clamped-ramp"},
                  {"offset", cfg.train.schedule.offset},
                  {"span", cfg.train.schedule.span}};
      break;
    case ScheduleKind::fixed:
      schedule = {{"kind", "fixed"}, {"value", cfg.train.schedule.value}};
      break;
  }
  doc["train"] = {
      {"epochs_pretrain", cfg.train.epochs_pretrain},
      {"epochs_anneal", cfg.train.epochs_anneal},
      {"schedule", schedule},
      {"optimizer",
       {{"kind", cfg.train.optimizer.kind == OptKind::adam ? "adam" : "sgd"},
        {"learning_rate", cfg.train.optimizer.learning_rate},
        {"weight_decay", cfg.train.optimizer.weight_decay},
        {"betas", {cfg.train.optimizer.beta1, cfg.train.optimizer.beta2}},
        {"eps", cfg.train.optimizer.eps}}},
      {"radius_init", cfg.train.radius_init},
      {"batch_size", cfg.train.batch_size}};
  switch (cfg.ood.kind) {
    case OodCfg::Kind::grid:
      doc["eval"] = {{"ood",
                      {{"kind", "grid"},
                       {"grid_per_dim", cfg.ood.grid_per_dim},
                       {"low", cfg.ood.low},
                       {"high", cfg.ood.high},
                       {"min_dist", cfg.ood.min_dist}}}};
      break;
    case OodCfg::Kind::csv:
      doc["eval"] = {{"ood",
                      {{"kind", "csv"},
                       {"path", cfg.ood.path},
                       {"label_column", cfg.ood.label_column}}}};
      break;
    case OodCfg::Kind::idx: {
      json o = {{"kind", "idx"}, {"images", cfg.ood.images}, {"labels", cfg.ood.labels}};
      if (cfg.ood.limit) o["limit"] = *cfg.ood.limit;
      doc["eval"] = {{"ood", o}};
      break;
    }
  }
  return doc.dump();
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config(cfg))));
  return buf;
}

LoadedData load_dataset(const RunConfig& cfg) {
  Rng rng(cfg.seed);
  LoadedData data;
  switch (cfg.dataset.kind) {
    case DatasetCfg::Kind::moons: {
      const Dataset all = make_moons(cfg.dataset.n, cfg.dataset.noise_std, rng);
      auto [train, test] = split_dataset(all, cfg.dataset.train_fraction, rng);
      data.train = std::move(train);
      data.test = std::move(test);
      data.combined = all;
      break;
    }
    case DatasetCfg::Kind::csv: {
      const Dataset all = load_csv(cfg.dataset.path, cfg.dataset.label_column);
      auto [train, test] = split_dataset(all, cfg.dataset.train_fraction, rng);
      data.train = std::move(train);
      data.test = std::move(test);
      data.combined = all;
      break;
    }
    case DatasetCfg::Kind::idx: {
      data.train = load_idx(cfg.dataset.images, cfg.dataset.labels, cfg.dataset.limit, &rng);
      if (!cfg.dataset.test_images.empty()) {
        data.test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        data.combined = concat_datasets(data.train, data.test);
      } else {
        data.combined = data.train;
      }
      const std::size_t classes = std::max(data.train.num_classes, data.test.num_classes);
      data.train.num_classes = classes;
      if (data.test.size() > 0) data.test.num_classes = classes;
      data.combined.num_classes = classes;
      break;
    }
  }
  return data;
}

std::vector<Vector> load_ood_points(const RunConfig& cfg, const Dataset& combined) {
  switch (cfg.ood.kind) {
    case OodCfg::Kind::grid:
      return make_ood_grid(combined, cfg.ood.grid_per_dim, cfg.ood.low, cfg.ood.high,
                           cfg.ood.min_dist)
          .points;
    case OodCfg::Kind::csv:
      return load_csv(cfg.ood.path, cfg.ood.label_column).X;
    case OodCfg::Kind::idx: {
      Rng rng(cfg.seed + 1);
      return load_idx(cfg.ood.images, cfg.ood.labels, cfg.ood.limit, &rng).X;
    }
  }
  return {};
}

}  // namespace csnn
