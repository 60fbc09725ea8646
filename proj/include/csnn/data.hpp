#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csnn/numeric.hpp"
#include "csnn/rng.hpp"

namespace csnn {

struct Dataset {
  std::vector<Vector> X;
  std::vector<int> y;
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const { return X.size(); }
  std::size_t dim() const { return X.empty() ? 0 : X.front().size(); }
};

// Two interleaved half-circles, class 0 on (cos t, sin t) and class 1 on
// (1 - cos t, 1/2 - sin t) for t in [0, pi], with iid Gaussian coordinate
// noise, then min-max rescaled so every observation lands in [0,1]^2.
// ceil(n/2) samples in class 0, floor(n/2) in class 1.
Dataset make_moons(std::size_t n, double noise_std, Rng& rng);

struct OodGrid {
  std::vector<Vector> points;
  double excluded_radius = 0.0;
  double low = 0.0;
  double high = 0.0;
};

// Uniform grid_per_dim^d grid over [low, high]^d (endpoints included), with
// every point within min_dist (Euclidean) of any in-distribution sample
// removed. Throws NumericError when nothing survives.
OodGrid make_ood_grid(const Dataset& in_data, std::size_t grid_per_dim, double low,
                      double high, double min_dist);

// Numeric CSV with a header row; the named column holds labels, all other
// columns are features. Labels are mapped to contiguous ids in sorted order
// of their distinct string values; the mapping is returned through
// label_names when requested.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::vector<std::string>* label_names = nullptr);

// IDX image/label pair (the MNIST family's format): big-endian dimensions,
// magic 0x00000803 for u8 images and 0x00000801 for u8 labels. Pixels are
// scaled to [0,1] and flattened row-major. With limit set, a uniform
// subsample of that size is drawn with the provided generator.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::optional<std::size_t> limit = std::nullopt, Rng* rng = nullptr);

// Seeded shuffle split; the first ceil(fraction * n) samples form the train
// half. Class counts are whatever the shuffle yields.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          Rng& rng);

Dataset concat_datasets(const Dataset& a, const Dataset& b);

}  // namespace csnn
