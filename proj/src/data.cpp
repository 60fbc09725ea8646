#include "csnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "csnn/io.hpp"

namespace csnn {

Dataset make_moons(std::size_t n, double noise_std, Rng& rng) {
  if (n < 2) throw ConfigError("make_moons: need n >= 2, got " + std::to_string(n));
  const std::size_t n0 = (n + 1) / 2;
  const std::size_t n1 = n / 2;
  Dataset d;
  d.name = "moons";
  d.num_classes = 2;
  d.X.reserve(n);
  d.y.reserve(n);
  auto arc_t = [](std::size_t i, std::size_t count) {
    return count > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1)
                     : 0.0;
  };
  for (std::size_t i = 0; i < n0; ++i) {
    const double t = arc_t(i, n0);
    d.X.push_back({std::cos(t) + rng.normal(0.0, noise_std),
                   std::sin(t) + rng.normal(0.0, noise_std)});
    d.y.push_back(0);
  }
  for (std::size_t i = 0; i < n1; ++i) {
    const double t = arc_t(i, n1);
    d.X.push_back({1.0 - std::cos(t) + rng.normal(0.0, noise_std),
                   0.5 - std::sin(t) + rng.normal(0.0, noise_std)});
    d.y.push_back(1);
  }
  // min-max rescale per dimension so all observations are in [0,1]^2
  for (std::size_t j = 0; j < 2; ++j) {
    double lo = d.X.front()[j];
    double hi = lo;
    for (const auto& x : d.X) {
      lo = std::min(lo, x[j]);
      hi = std::max(hi, x[j]);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (auto& x : d.X) x[j] = (x[j] - lo) / span;
  }
  return d;
}

OodGrid make_ood_grid(const Dataset& in_data, std::size_t grid_per_dim, double low,
                      double high, double min_dist) {
  if (in_data.size() == 0) throw ConfigError("make_ood_grid: empty in-distribution data");
  if (grid_per_dim < 2) throw ConfigError("make_ood_grid: need grid_per_dim >= 2");
  const std::size_t dim = in_data.dim();
  const double step = (high - low) / static_cast<double>(grid_per_dim - 1);
  const double min_dist_sq = min_dist * min_dist;

  OodGrid grid;
  grid.excluded_radius = min_dist;
  grid.low = low;
  grid.high = high;

  std::vector<std::size_t> idx(dim, 0);
  Vector point(dim);
  while (true) {
    for (std::size_t j = 0; j < dim; ++j) point[j] = low + step * static_cast<double>(idx[j]);
    bool keep = true;
    for (const auto& x : in_data.X) {
      double dist_sq = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double dj = point[j] - x[j];
        dist_sq += dj * dj;
      }
      if (dist_sq <= min_dist_sq) {
        keep = false;
        break;
      }
    }
    if (keep) grid.points.push_back(point);
    // odometer over the d-dimensional grid
    std::size_t j = 0;
    while (j < dim && ++idx[j] == grid_per_dim) idx[j++] = 0;
    if (j == dim) break;
  }
  if (grid.points.empty()) {
    throw ConfigError("make_ood_grid: empty OOD set (min_dist " + std::to_string(min_dist) +
                      " excludes the whole grid)");
  }
  return grid;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
  }
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::vector<std::string>* label_names) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header row");
  const auto header = split_csv_line(line);
  std::size_t label_idx = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == label_column) label_idx = j;
  }
  if (label_idx == header.size()) {
    throw ParseError(path + ": label column '" + label_column + "' not found in header");
  }

  std::vector<std::string> raw_labels;
  Dataset d;
  d.name = path;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    Vector x;
    x.reserve(header.size() - 1);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j == label_idx) continue;
      x.push_back(parse_cell(cells[j], line_no, path));
    }
    d.X.push_back(std::move(x));
    raw_labels.push_back(cells[label_idx]);
  }
  if (d.X.empty()) throw ParseError(path + ": no data rows");

  std::map<std::string, int> mapping;
  for (const auto& s : raw_labels) mapping.emplace(s, 0);
  int next_id = 0;
  for (auto& [name, id] : mapping) id = next_id++;
  for (const auto& s : raw_labels) d.y.push_back(mapping.at(s));
  d.num_classes = mapping.size();
  if (label_names != nullptr) {
    label_names->clear();
    for (const auto& [name, id] : mapping) label_names->push_back(name);
  }
  return d;
}

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size()) throw ParseError(path + ": truncated IDX header");
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + offset);
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::optional<std::size_t> limit, Rng* rng) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);

  if (read_be32(img, 0, images_path) != 0x00000803u) {
    throw ParseError(images_path + ": bad IDX image magic");
  }
  if (read_be32(lab, 0, labels_path) != 0x00000801u) {
    throw ParseError(labels_path + ": bad IDX label magic");
  }
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw ParseError(images_path + ": image count " + std::to_string(n) +
                     " != label count " + std::to_string(n_labels));
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) throw ParseError(images_path + ": truncated image data");
  if (lab.size() < 8 + n) throw ParseError(labels_path + ": truncated label data");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t take = n;
  if (limit && *limit < n) {
    if (rng == nullptr) {
      throw ConfigError("load_idx: limit subsampling needs a generator");
    }
    rng->shuffle(order);
    take = *limit;
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  }

  Dataset d;
  d.name = images_path;
  d.X.reserve(take);
  d.y.reserve(take);
  int max_label = 0;
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t i = order[k];
    Vector x(pixels);
    const auto* p = reinterpret_cast<const std::uint8_t*>(img.data() + 16 + i * pixels);
    for (std::size_t j = 0; j < pixels; ++j) x[j] = static_cast<double>(p[j]) / 255.0;
    d.X.push_back(std::move(x));
    const int label = static_cast<std::uint8_t>(lab[8 + i]);
    d.y.push_back(label);
    max_label = std::max(max_label, label);
  }
  d.num_classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction, Rng& rng) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw ConfigError("split_dataset: train_fraction must be in (0,1), got " +
                      std::to_string(train_fraction));
  }
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_train =
      static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(d.size())));
  Dataset train, test;
  train.name = d.name + "/train";
  test.name = d.name + "/test";
  train.num_classes = test.num_classes = d.num_classes;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Dataset& dst = (k < n_train) ? train : test;
    dst.X.push_back(d.X[order[k]]);
    dst.y.push_back(d.y[order[k]]);
  }
  return {std::move(train), std::move(test)};
}

Dataset concat_datasets(const Dataset& a, const Dataset& b) {
  if (a.size() > 0 && b.size() > 0 && a.dim() != b.dim()) {
    throw DimensionError("concat_datasets: dims " + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()));
  }
  Dataset out = a;
  out.name = a.name + "+" + b.name;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.X.insert(out.X.end(), b.X.begin(), b.X.end());
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

}  // namespace csnn
