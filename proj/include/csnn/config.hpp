#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "csnn/data.hpp"
#include "csnn/train.hpp"

namespace csnn {

struct DatasetCfg {
  enum class Kind { moons, csv, idx };
  Kind kind = Kind::moons;
  // moons
  std::size_t n = 400;
  double noise_std = 0.1;
  // moons + csv: seeded shuffle split into train/test
  double train_fraction = 0.5;
  // csv
  std::string path;
  std::string label_column = "label";
  // idx
  std::string images, labels, test_images, test_labels;
  std::optional<std::size_t> limit;
};

struct OodCfg {
  enum class Kind { grid, csv, idx };
  Kind kind = Kind::grid;
  // grid
  std::size_t grid_per_dim = 100;
  double low = -0.5;
  double high = 1.5;
  double min_dist = 0.1;
  // csv
  std::string path;
  std::string label_column = "label";
  // idx
  std::string images, labels;
  std::optional<std::size_t> limit;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs";
  DatasetCfg dataset;
  ModelSpec model;
  TrainPlan train;
  OodCfg ood;
};

// Strict parser: unknown keys anywhere are a ConfigError naming the key.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);
// Built-in presets: "moons" (the 2-D reproduction) and "mnist-small".
RunConfig preset_config(const std::string& name);

// Canonical JSON of the effective config (sorted keys); hashing this pins a
// run directory name.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t fnv1a64(const std::string& text);
std::string config_hash(const RunConfig& cfg);

struct LoadedData {
  Dataset train;
  Dataset test;      // empty when the dataset has no test half
  Dataset combined;  // train + test, used for OOD grid exclusion
};

LoadedData load_dataset(const RunConfig& cfg);
// May need the in-distribution data for grid exclusion.
std::vector<Vector> load_ood_points(const RunConfig& cfg, const Dataset& combined);

}  // namespace csnn
