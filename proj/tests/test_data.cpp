#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <unistd.h>

#include "csnn/data.hpp"
#include "csnn/io.hpp"

using namespace csnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("csnn_data_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

void push_be32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

// Synthetic IDX pair: n images of rows x cols with pixel (i, p) = (i*31 + p) % 256.
void write_idx_pair(const std::string& images, const std::string& labels, std::uint32_t n,
                    std::uint32_t rows, std::uint32_t cols) {
  std::string img;
  push_be32(img, 0x00000803u);
  push_be32(img, n);
  push_be32(img, rows);
  push_be32(img, cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t p = 0; p < rows * cols; ++p) {
      img.push_back(static_cast<char>((i * 31 + p) % 256));
    }
  }
  write_text(images, img);

  std::string lab;
  push_be32(lab, 0x00000801u);
  push_be32(lab, n);
  for (std::uint32_t i = 0; i < n; ++i) lab.push_back(static_cast<char>(i % 10));
  write_text(labels, lab);
}

}  // namespace

TEST_CASE("make_moons balance and containment") {
  Rng rng(88);
  for (std::size_t n : {2ul, 3ul, 200ul, 401ul}) {
    const Dataset d = make_moons(n, 0.1, rng);
    CHECK(d.size() == n);
    CHECK(d.num_classes == 2);
    std::size_t class0 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (d.y[i] == 0) ++class0;
      CHECK(d.X[i][0] >= 0.0);
      CHECK(d.X[i][0] <= 1.0);
      CHECK(d.X[i][1] >= 0.0);
      CHECK(d.X[i][1] <= 1.0);
    }
    CHECK(class0 == (n + 1) / 2);
  }
  CHECK_THROWS_AS(make_moons(1, 0.1, rng), ConfigError);
}

TEST_CASE("make_moons with zero noise lies exactly on the scaled arcs") {
  Rng rng(89);
  const std::size_t n = 10;  // 5 per class, odd counts hit t = pi/2 exactly
  const Dataset d = make_moons(n, 0.0, rng);

  // reconstruct the generator's arc points and scaling
  std::vector<Vector> raw;
  for (std::size_t i = 0; i < 5; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) / 4.0;
    raw.push_back({std::cos(t), std::sin(t)});
  }
  for (std::size_t i = 0; i < 5; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) / 4.0;
    raw.push_back({1.0 - std::cos(t), 0.5 - std::sin(t)});
  }
  for (std::size_t j = 0; j < 2; ++j) {
    double lo = raw[0][j], hi = raw[0][j];
    for (const auto& p : raw) {
      lo = std::min(lo, p[j]);
      hi = std::max(hi, p[j]);
    }
    for (auto& p : raw) p[j] = (p[j] - lo) / (hi - lo);
  }
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(d.X[i][0] == raw[i][0]);
    CHECK(d.X[i][1] == raw[i][1]);
  }
}

TEST_CASE("make_moons is seed-deterministic") {
  Rng a(90), b(90);
  const Dataset da = make_moons(100, 0.1, a);
  const Dataset db = make_moons(100, 0.1, b);
  CHECK(da.X == db.X);
  CHECK(da.y == db.y);
}

TEST_CASE("make_ood_grid keeps the full grid with zero exclusion") {
  Rng rng(91);
  const Dataset d = make_moons(50, 0.1, rng);
  const OodGrid grid = make_ood_grid(d, 100, -0.5, 1.5, 0.0);
  CHECK(grid.points.size() == 10000);
  // endpoints included
  bool has_corner = false;
  for (const auto& p : grid.points) {
    if (p[0] == -0.5 && p[1] == -0.5) has_corner = true;
  }
  CHECK(has_corner);
}

TEST_CASE("make_ood_grid separation verified by brute force") {
  Rng rng(92);
  const Dataset d = make_moons(120, 0.1, rng);
  const double min_dist = 0.1;
  const OodGrid grid = make_ood_grid(d, 40, -0.5, 1.5, min_dist);
  CHECK(grid.points.size() > 0);
  CHECK(grid.points.size() < 1600);
  double closest = 1e300;
  for (const auto& p : grid.points) {
    for (const auto& x : d.X) {
      const double dist = std::hypot(p[0] - x[0], p[1] - x[1]);
      closest = std::min(closest, dist);
    }
  }
  CHECK(closest > min_dist);
}

TEST_CASE("make_ood_grid rejects an all-excluded grid") {
  Rng rng(93);
  const Dataset d = make_moons(50, 0.1, rng);
  CHECK_THROWS_AS(make_ood_grid(d, 10, -0.5, 1.5, 100.0), ConfigError);
}

TEST_CASE("load_csv toy file") {
  TempDir tmp;
  const std::string path = tmp.file("toy.csv");
  write_text(path, "f1,label,f2\n1.5,cat,2.5\n-3.0,dog,0.25\n0.0,cat,1.0\n");
  std::vector<std::string> names;
  const Dataset d = load_csv(path, "label", &names);
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.num_classes == 2);
  CHECK(names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.X[0] == Vector{1.5, 2.5});
  CHECK(d.X[1] == Vector{-3.0, 0.25});
  CHECK(d.y == std::vector<int>{0, 1, 0});
}

TEST_CASE("load_csv error paths") {
  TempDir tmp;
  const std::string path = tmp.file("bad.csv");

  write_text(path, "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(path, "label"), ParseError);

  write_text(path, "a,label\n1,0\n2,0,9\n");
  try {
    load_csv(path, "label");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }

  write_text(path, "a,label\nxyz,0\n");
  try {
    load_csv(path, "label");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("xyz") != std::string::npos);
  }
}

TEST_CASE("load_csv round-trips written values") {
  TempDir tmp;
  const std::string path = tmp.file("rt.csv");
  Rng rng(94);
  std::string text = "x0,x1,label\n";
  std::vector<Vector> expected;
  for (int i = 0; i < 20; ++i) {
    const double a = rng.normal(0.0, 3.0);
    const double b = rng.normal(0.0, 3.0);
    expected.push_back({a, b});
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", a, b, i % 3);
    text += buf;
  }
  write_text(path, text);
  const Dataset d = load_csv(path, "label");
  CHECK(d.num_classes == 3);
  for (int i = 0; i < 20; ++i) {
    CHECK(d.X[static_cast<std::size_t>(i)] == expected[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("load_idx round-trips a synthetic pair bit-exactly") {
  TempDir tmp;
  write_idx_pair(tmp.file("img.idx"), tmp.file("lab.idx"), 12, 4, 3);
  const Dataset d = load_idx(tmp.file("img.idx"), tmp.file("lab.idx"));
  CHECK(d.size() == 12);
  CHECK(d.dim() == 12);
  CHECK(d.num_classes == 10);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.y[i] == static_cast<int>(i % 10));
    for (std::size_t p = 0; p < 12; ++p) {
      const double expected = static_cast<double>((i * 31 + p) % 256) / 255.0;
      CHECK(d.X[i][p] == expected);
      CHECK(d.X[i][p] >= 0.0);
      CHECK(d.X[i][p] <= 1.0);
    }
  }
}

TEST_CASE("load_idx subsampling and errors") {
  TempDir tmp;
  write_idx_pair(tmp.file("img.idx"), tmp.file("lab.idx"), 50, 2, 2);

  Rng rng(95);
  const Dataset d = load_idx(tmp.file("img.idx"), tmp.file("lab.idx"), 10, &rng);
  CHECK(d.size() == 10);

  Rng rng2(95);
  const Dataset d2 = load_idx(tmp.file("img.idx"), tmp.file("lab.idx"), 10, &rng2);
  CHECK(d.X == d2.X);

  // bad magic
  std::string img = read_file(tmp.file("img.idx"));
  img[3] = 0x07;
  write_text(tmp.file("badmagic.idx"), img);
  CHECK_THROWS_AS(load_idx(tmp.file("badmagic.idx"), tmp.file("lab.idx")), ParseError);

  // truncated
  img = read_file(tmp.file("img.idx"));
  write_text(tmp.file("short.idx"), img.substr(0, img.size() - 5));
  CHECK_THROWS_AS(load_idx(tmp.file("short.idx"), tmp.file("lab.idx")), ParseError);
}

TEST_CASE("split_dataset partitions deterministically") {
  Rng gen(96);
  const Dataset d = make_moons(100, 0.1, gen);
  Rng a(97), b(97);
  const auto [train_a, test_a] = split_dataset(d, 0.5, a);
  const auto [train_b, test_b] = split_dataset(d, 0.5, b);
  CHECK(train_a.size() == 50);
  CHECK(test_a.size() == 50);
  CHECK(train_a.X == train_b.X);
  CHECK(test_a.y == test_b.y);
  CHECK_THROWS_AS(split_dataset(d, 0.0, a), ConfigError);
  CHECK_THROWS_AS(split_dataset(d, 1.0, a), ConfigError);

  const Dataset joined = concat_datasets(train_a, test_a);
  CHECK(joined.size() == 100);
}
