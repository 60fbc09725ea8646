#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "csnn/eval.hpp"
#include "csnn/io.hpp"
#include "csnn/rng.hpp"

using namespace csnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("csnn_eval_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// O(n^2) oracle: exhaustive pair enumeration with half credit for ties,
// independent of the sorting implementation under test.
double auroc_bruteforce(const ScoredSet& s) {
  std::uint64_t two_u = 0;
  std::uint64_t n_in = 0, n_ood = 0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] != 0) continue;
    ++n_in;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j] != 1) continue;
      if (s.scores[i] > s.scores[j]) two_u += 2;
      if (s.scores[i] == s.scores[j]) two_u += 1;
    }
  }
  for (int label : s.labels) n_ood += label == 1 ? 1 : 0;
  return static_cast<double>(two_u) /
         (2.0 * static_cast<double>(n_in) * static_cast<double>(n_ood));
}

// Model that always emits raw outputs (1, 0): hidden layer with constant
// output via bias, head picking class 0.
CsnnModel constant_class0_model() {
  CsnnModel m;
  m.normalizer.mu = {0.0, 0.0};
  m.normalizer.sigma = {1.0, 1.0};
  CsnLayer layer;
  layer.W = Matrix(1, 2);
  layer.b = {1.0};
  layer.r = {1.0};
  layer.alpha = 0.0;  // relu(2*0*x + 1) = 1
  m.hidden = layer;
  m.head = Matrix(2, 1);
  m.head(0, 0) = 1.0;
  m.head(1, 0) = 0.0;
  m.num_classes = 2;
  return m;
}

CsnnModel random_model(std::size_t d, std::size_t k, std::size_t c, double alpha, Rng& rng) {
  CsnnModel m;
  m.normalizer.mu.assign(d, 0.0);
  m.normalizer.sigma.assign(d, 1.0);
  CsnLayer layer;
  layer.W = Matrix(k, d);
  for (std::size_t i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = rng.normal(0.0, 1.0);
  layer.b = rng.normal_vec(k, 0.0, 0.1);
  layer.r = rng.normal_vec(k, 0.5, 0.1);
  layer.alpha = alpha;
  m.hidden = layer;
  m.head = Matrix(c, k);
  for (std::size_t i = 0; i < m.head.size(); ++i) m.head.data()[i] = rng.normal(0.0, 1.0);
  m.num_classes = c;
  return m;
}

}  // namespace

TEST_CASE("ood_score equals the max raw output") {
  Rng rng(501);
  const CsnnModel m = random_model(2, 6, 3, 0.8, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = rng.normal_vec(2, 0.0, 2.0);
    const Vector z = raw_outputs(m, x);
    CHECK(ood_score(m, x) == *std::max_element(z.begin(), z.end()));
  }
  // far outside every support: exactly zero
  CHECK(ood_score(m, {1e6, -1e6}) == 0.0);
}

TEST_CASE("ood_score is invariant to permuting class rows") {
  Rng rng(502);
  CsnnModel m = random_model(2, 4, 3, 1.0, rng);
  CsnnModel permuted = m;
  // rotate head rows one step
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) permuted.head((i + 1) % 3, j) = m.head(i, j);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = rng.normal_vec(2, 0.0, 1.0);
    CHECK(ood_score(m, x) == ood_score(permuted, x));
  }
}

TEST_CASE("auroc hand-checked cases") {
  ScoredSet perfect{{0.9, 0.8, 0.1}, {0, 0, 1}};
  CHECK(auroc(perfect).auroc == 1.0);

  ScoredSet ties{{0.5, 0.5, 0.5, 0.5}, {0, 0, 1, 1}};
  CHECK(auroc(ties).auroc == 0.5);

  ScoredSet mixed{{0.9, 0.2, 0.5}, {0, 0, 1}};
  CHECK(auroc(mixed).auroc == 0.5);  // (1 win + 0)/2 pairs

  ScoredSet single{{0.9, 0.8}, {0, 0}};
  CHECK_THROWS_AS(auroc(single), ConfigError);
}

TEST_CASE("auroc equals brute-force pair enumeration exactly") {
  Rng rng(503);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(400);
    ScoredSet s;
    bool has_in = false, has_ood = false;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid of score values forces plenty of exact ties
      s.scores.push_back(static_cast<double>(rng.below(20)) / 10.0);
      s.labels.push_back(static_cast<int>(rng.below(2)));
      has_in = has_in || s.labels.back() == 0;
      has_ood = has_ood || s.labels.back() == 1;
    }
    if (!has_in || !has_ood) continue;
    CHECK(auroc(s).auroc == auroc_bruteforce(s));
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(504);
  ScoredSet s;
  for (int i = 0; i < 300; ++i) {
    s.scores.push_back(rng.normal(0.0, 1.0));
    s.labels.push_back(static_cast<int>(rng.below(2)));
  }
  const double base = auroc(s).auroc;
  ScoredSet warped = s;
  for (auto& v : warped.scores) v = std::exp(0.5 * v) + 3.0;
  CHECK(auroc(warped).auroc == base);
}

TEST_CASE("auroc complement symmetry under label swap") {
  Rng rng(505);
  ScoredSet s;
  for (int i = 0; i < 500; ++i) {
    s.scores.push_back(static_cast<double>(rng.below(50)));
    s.labels.push_back(static_cast<int>(rng.below(2)));
  }
  ScoredSet flipped = s;
  for (auto& label : flipped.labels) label = 1 - label;
  CHECK(auroc(s).auroc + auroc(flipped).auroc == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("roc sweep is monotone") {
  Rng rng(506);
  ScoredSet s;
  for (int i = 0; i < 200; ++i) {
    s.scores.push_back(rng.normal(0.0, 1.0) + (i % 2 == 0 ? 0.8 : 0.0));
    s.labels.push_back(i % 2);
  }
  const RocResult roc = auroc(s);
  CHECK(roc.auroc >= 0.0);
  CHECK(roc.auroc <= 1.0);
  for (std::size_t i = 1; i < roc.tpr.size(); ++i) {
    CHECK(roc.tpr[i] >= roc.tpr[i - 1]);
    CHECK(roc.fpr[i] >= roc.fpr[i - 1]);
  }
  CHECK(roc.tpr.back() == 1.0);
  CHECK(roc.fpr.back() == 1.0);
}

TEST_CASE("error_rate on constant predictors") {
  const CsnnModel m = constant_class0_model();
  Dataset zeros;
  zeros.num_classes = 2;
  for (int i = 0; i < 10; ++i) {
    zeros.X.push_back({static_cast<double>(i), 0.0});
    zeros.y.push_back(0);
  }
  CHECK(error_rate(m, zeros) == 0.0);
  Dataset ones = zeros;
  std::fill(ones.y.begin(), ones.y.end(), 1);
  CHECK(error_rate(m, ones) == 1.0);
}

TEST_CASE("error_rate on random labels is near one half") {
  Rng rng(507);
  const CsnnModel m = random_model(2, 8, 2, 0.3, rng);
  Dataset d;
  d.num_classes = 2;
  for (int i = 0; i < 10000; ++i) {
    d.X.push_back(rng.normal_vec(2, 0.0, 1.0));
    d.y.push_back(static_cast<int>(rng.below(2)));
  }
  const double err = error_rate(m, d);
  CHECK(err > 0.48);
  CHECK(err < 0.52);
}

TEST_CASE("confidence_map bounds and degenerate head") {
  Rng rng(508);
  CsnnModel m = random_model(2, 6, 2, 0.9, rng);
  const ConfMap map = confidence_map(m, -0.5, 1.5, 16);
  CHECK(map.values.size() == 256);
  for (double v : map.values) {
    CHECK(v >= 0.5);
    CHECK(v <= 1.0);
  }

  m.head.fill(0.0);
  const ConfMap flat = confidence_map(m, -0.5, 1.5, 8);
  for (double v : flat.values) CHECK(v == 0.5);

  const CsnnModel wide = random_model(3, 4, 2, 0.5, rng);
  CHECK_THROWS_AS(confidence_map(wide, 0.0, 1.0, 8), DimensionError);
}

TEST_CASE("pgm writer emits a valid uniform raster") {
  TempDir tmp;
  Rng rng(509);
  CsnnModel m = random_model(2, 4, 2, 0.7, rng);
  m.head.fill(0.0);
  const ConfMap map = confidence_map(m, 0.0, 1.0, 4);
  const std::string path = tmp.file("map.pgm");
  write_confmap_pgm(map, 2, path);
  const std::string bytes = read_file(path);
  CHECK(bytes.substr(0, 9) == "P5\n4 4\n25");
  const std::string body = bytes.substr(bytes.find("255\n") + 4);
  REQUIRE(body.size() == 16);
  for (char c : body) CHECK(static_cast<unsigned char>(c) == 255);

  write_confmap_csv(map, tmp.file("map.csv"));
  const std::string csv = read_file(tmp.file("map.csv"));
  CHECK(csv.rfind("x,y,confidence\n", 0) == 0);

  ScoredSet s{{0.9, 0.1}, {0, 1}};
  write_roc_csv(auroc(s), tmp.file("roc.csv"));
  CHECK(read_file(tmp.file("roc.csv")).rfind("threshold,fpr,tpr\n", 0) == 0);
}
